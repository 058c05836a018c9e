//! Floating-point spectral certificate for the transition matrix.
//!
//! The algebraic facts (uniform fixed vector, geometric simplicity of the
//! eigenvalue 1, double stochasticity) are certified exactly in
//! `mixflow_core::markov`; this module only locates the second-largest
//! eigenvalue modulus and reports an eigenpair residual for it.

use std::fmt;

use mixflow_core::markov::MarkovModel;
use nalgebra::{Complex, DMatrix, DVector};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    TooLarge { n: usize },
    NoEigenvalues,
    NonConvergence,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::TooLarge { n } => {
                write!(f, "dense eigensolve limited to n ≤ 4096, got {n}")
            }
            Error::NoEigenvalues => write!(f, "eigensolver returned nothing"),
            Error::NonConvergence => write!(f, "Schur iteration did not converge"),
        }
    }
}

impl std::error::Error for Error {}

#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// Largest eigenvalue modulus (should be 1).
    pub leading_modulus: f64,
    /// Second-largest eigenvalue modulus.
    pub lambda2_modulus: f64,
    pub lambda2: Complex<f64>,
    /// `||P v - λ2 v||_∞` for the inverse-iteration eigenvector `v`.
    pub residual: f64,
    /// Exact rational check `P · uniform = uniform`.
    pub uniform_fixed_exact: bool,
    /// Exact rational check `rank(P - I) = n - 1`.
    pub eigenvalue_one_simple_exact: bool,
    pub doubly_stochastic_exact: bool,
}

/// Dense eigensolve of the transition matrix with the exact algebraic checks
/// attached.
pub fn spectral_gap(model: &MarkovModel) -> Result<SpectralReport, Error> {
    let n = model.n;
    if n > 4096 {
        return Err(Error::TooLarge { n });
    }
    let rows = model.p.to_f64_rows();
    let p = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let mut eigen: Vec<Complex<f64>> = if let Some(roots) = permutation_spectrum(model) {
        // Pure permutation matrices (the degenerate, mixer-free model) keep
        // the unshifted QR iteration cycling; their spectrum is the exact
        // union of roots of unity over the cycle lengths.
        roots
    } else {
        let schur = nalgebra::linalg::Schur::try_new(p.clone(), 1e-13, 100_000)
            .ok_or(Error::NonConvergence)?;
        schur.complex_eigenvalues().iter().cloned().collect()
    };
    eigen.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).expect("finite moduli"));
    let leading = *eigen.first().ok_or(Error::NoEigenvalues)?;
    let lambda2 = eigen.get(1).cloned().unwrap_or(Complex::new(0.0, 0.0));
    let residual = eigenpair_residual(&p, lambda2);
    Ok(SpectralReport {
        leading_modulus: leading.norm(),
        lambda2_modulus: lambda2.norm(),
        lambda2,
        residual,
        uniform_fixed_exact: model.fixes_uniform(),
        eigenvalue_one_simple_exact: model.eigenvalue_one_is_geometrically_simple(),
        doubly_stochastic_exact: model.p.is_doubly_stochastic(),
    })
}

/// The exact spectrum when the transition matrix is a permutation matrix:
/// the k-th roots of unity for every cycle length k.
fn permutation_spectrum(model: &MarkovModel) -> Option<Vec<Complex<f64>>> {
    use mixflow_core::Scalar;
    let n = model.n;
    let mut image = vec![usize::MAX; n];
    for l in 0..n {
        for t in 0..n {
            let e = model.p.get(t, l);
            if e.is_zero() {
                continue;
            }
            if *e != Scalar::one() || image[l] != usize::MAX {
                return None;
            }
            image[l] = t;
        }
        if image[l] == usize::MAX {
            return None;
        }
    }
    let mut seen = vec![false; n];
    let mut roots = Vec::with_capacity(n);
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut len = 0usize;
        let mut k = start;
        while !seen[k] {
            seen[k] = true;
            len += 1;
            k = image[k];
        }
        for j in 0..len {
            let angle = 2.0 * std::f64::consts::PI * j as f64 / len as f64;
            roots.push(Complex::new(angle.cos(), angle.sin()));
        }
    }
    Some(roots)
}

/// Inverse iteration on `P - λ I` for the residual certificate.
fn eigenpair_residual(p: &DMatrix<f64>, lambda: Complex<f64>) -> f64 {
    let n = p.nrows();
    if lambda.norm() < 1e-12 {
        // Degenerate (exactly mixing) case: the spectrum collapses to {1, 0}.
        return 0.0;
    }
    let pc = DMatrix::from_fn(n, n, |i, j| Complex::new(p[(i, j)], 0.0));
    let shift = lambda + Complex::new(1e-11, 1e-11);
    let shifted = &pc - DMatrix::from_diagonal_element(n, n, shift);
    let lu = shifted.lu();
    let mut v = DVector::from_fn(n, |i, _| {
        Complex::new(1.0 + (i as f64 * 0.37).sin(), (i as f64 * 0.73).cos())
    });
    v /= Complex::new(v.norm(), 0.0);
    for _ in 0..8 {
        let Some(next) = lu.solve(&v) else {
            break;
        };
        let norm = next.norm();
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        v = next / Complex::new(norm, 0.0);
    }
    let pv = &pc * &v;
    let lv = v.map(|c| c * lambda);
    (pv - lv).iter().map(|c| c.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mixflow_core::markov::{build_model, permutation_only_model};

    fn shift(n: usize) -> Vec<usize> {
        (0..n).map(|l| (l + 1) % n).collect()
    }

    #[test]
    fn n2_closed_form() {
        // P = [[1/2, 1/2], [1/2, 1/2]]: eigenvalues 1 and 0 (trace 1, det 0).
        let m = build_model(2, &shift(2)).unwrap();
        let r = spectral_gap(&m).unwrap();
        assert!((r.leading_modulus - 1.0).abs() < 1e-12);
        assert!(r.lambda2_modulus < 1e-12);
        assert!(r.uniform_fixed_exact && r.eigenvalue_one_simple_exact);
    }

    #[test]
    fn n16_matches_cos_pi_over_8() {
        let m = build_model(16, &shift(16)).unwrap();
        let r = spectral_gap(&m).unwrap();
        let expect = (std::f64::consts::PI / 8.0).cos();
        assert!(
            (r.lambda2_modulus - expect).abs() < 1e-9,
            "|λ2| = {} vs cos(π/8) = {}",
            r.lambda2_modulus,
            expect
        );
        assert!(r.residual < 1e-8, "residual {}", r.residual);
    }

    #[test]
    fn permutation_only_gap_is_trivial() {
        let m = permutation_only_model(8, &shift(8)).unwrap();
        let r = spectral_gap(&m).unwrap();
        // Every eigenvalue of a permutation matrix has modulus 1: no gap.
        assert!((r.lambda2_modulus - 1.0).abs() < 1e-12);
    }
}
