//! The finite Markov model of the pair-mixing map.
//!
//! Ordering the squares along the closed snake, one mixing step spreads the
//! per-square masses by `P = A3 · A2 · A1`: `A1` averages every even pair
//! `(l, l+1)`, `A2` every odd pair (wrapping around), and `A3` is the
//! permutation matrix of the cyclic shift. All entries are exact rationals;
//! the floating eigensolve for the spectral gap lives in the companion crate.

use alloc::vec::Vec;
use core::fmt;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MarkovError {
    OddStateCount(usize),
    NotASingleCycle,
    NotAPermutation,
}

impl fmt::Display for MarkovError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarkovError::OddStateCount(n) => write!(f, "state count {n} must be even"),
            MarkovError::NotASingleCycle => write!(f, "shift is not a single n-cycle"),
            MarkovError::NotAPermutation => write!(f, "shift is not a permutation"),
        }
    }
}

impl core::error::Error for MarkovError {}

/// A dense matrix of exact rationals, row major.
#[derive(Clone, PartialEq, Eq)]
pub struct RatMatrix {
    pub n: usize,
    entries: Vec<Scalar>,
}

impl fmt::Debug for RatMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RatMatrix({}x{}):", self.n, self.n)?;
        for i in 0..self.n.min(8) {
            for j in 0..self.n.min(8) {
                write!(f, " {}", self.get(i, j))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl RatMatrix {
    pub fn zeros(n: usize) -> Self {
        RatMatrix {
            n,
            entries: alloc::vec![Scalar::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = RatMatrix::zeros(n);
        for i in 0..n {
            m.set(i, i, Scalar::one());
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> &Scalar {
        &self.entries[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Scalar) {
        self.entries[i * self.n + j] = v;
    }

    pub fn mul(&self, rhs: &RatMatrix) -> RatMatrix {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = RatMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let b = rhs.get(k, j);
                    if b.is_zero() {
                        continue;
                    }
                    let cur = out.get(i, j).clone();
                    out.set(i, j, cur + a * b);
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[Scalar]) -> Vec<Scalar> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                let mut acc = Scalar::zero();
                for j in 0..self.n {
                    let e = self.get(i, j);
                    if !e.is_zero() {
                        acc += e * &v[j];
                    }
                }
                acc
            })
            .collect()
    }

    pub fn is_doubly_stochastic(&self) -> bool {
        let one = Scalar::one();
        for i in 0..self.n {
            let mut row = Scalar::zero();
            let mut col = Scalar::zero();
            for j in 0..self.n {
                if self.get(i, j).is_negative() || self.get(j, i).is_negative() {
                    return false;
                }
                row += self.get(i, j).clone();
                col += self.get(j, i).clone();
            }
            if row != one || col != one {
                return false;
            }
        }
        true
    }

    /// Rank by rational Gaussian elimination.
    pub fn rank(&self) -> usize {
        let n = self.n;
        let mut a = self.entries.clone();
        let at = |a: &Vec<Scalar>, i: usize, j: usize| a[i * n + j].clone();
        let mut rank = 0;
        let mut row = 0;
        for col in 0..n {
            let Some(pivot) = (row..n).find(|&r| !at(&a, r, col).is_zero()) else {
                continue;
            };
            for j in 0..n {
                a.swap(row * n + j, pivot * n + j);
            }
            let p = at(&a, row, col);
            for r in 0..n {
                if r == row {
                    continue;
                }
                let f = at(&a, r, col) / p.clone();
                if f.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let v = at(&a, r, j) - &f * &at(&a, row, j);
                    a[r * n + j] = v;
                }
            }
            rank += 1;
            row += 1;
            if row == n {
                break;
            }
        }
        rank
    }

    /// Positivity pattern as row bitmasks (for state counts ≤ 64 per word).
    fn pattern(&self) -> Vec<Vec<u64>> {
        let words = self.n.div_ceil(64);
        let mut rows = alloc::vec![alloc::vec![0u64; words]; self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                if self.get(i, j).is_positive() {
                    rows[i][j / 64] |= 1 << (j % 64);
                }
            }
        }
        rows
    }

    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j).to_f64()).collect())
            .collect()
    }
}

/// Per-square masses along the snake, conserved by the model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MassVector(pub Vec<Scalar>);

impl MassVector {
    pub fn point_mass(n: usize, k: usize, total: Scalar) -> Self {
        let mut v = alloc::vec![Scalar::zero(); n];
        v[k] = total;
        MassVector(v)
    }

    pub fn uniform(n: usize, total: Scalar) -> Self {
        let share = total / Scalar::from_int(n as i64);
        MassVector(alloc::vec![share; n])
    }

    pub fn total(&self) -> Scalar {
        self.0.iter().fold(Scalar::zero(), |a, b| a + b.clone())
    }

    pub fn sup_distance(&self, other: &MassVector) -> Scalar {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(Scalar::zero(), |acc, d| acc.max(d))
    }
}

/// The transition model `P = A3 A2 A1` with exact rational entries.
#[derive(Clone, Debug)]
pub struct MarkovModel {
    pub n: usize,
    pub a1: RatMatrix,
    pub a2: RatMatrix,
    pub a3: RatMatrix,
    pub p: RatMatrix,
}

/// Assembles the model for an even state count and a cyclic shift given in
/// snake coordinates.
pub fn build_model(n: usize, cycle_shift: &[usize]) -> Result<MarkovModel, MarkovError> {
    let a3 = permutation_matrix(n, cycle_shift)?;
    let half = Scalar::ratio(1, 2);
    let mut a1 = RatMatrix::zeros(n);
    let mut a2 = RatMatrix::zeros(n);
    if n % 2 != 0 {
        return Err(MarkovError::OddStateCount(n));
    }
    for l in (0..n).step_by(2) {
        // A1 averages (l, l+1), l even.
        a1.set(l, l, half.clone());
        a1.set(l, l + 1, half.clone());
        a1.set(l + 1, l, half.clone());
        a1.set(l + 1, l + 1, half.clone());
        // A2 averages (l+1, l+2 mod n), the staggered pairing.
        let a = l + 1;
        let b = (l + 2) % n;
        a2.set(a, a, half.clone());
        a2.set(a, b, half.clone());
        a2.set(b, a, half.clone());
        a2.set(b, b, half.clone());
    }
    let p = a3.mul(&a2.mul(&a1));
    Ok(MarkovModel { n, a1, a2, a3, p })
}

/// The degenerate model without the pair mixers (`A1 = A2 = I`): a pure
/// permutation, never aperiodic for `n > 1`.
pub fn permutation_only_model(n: usize, cycle_shift: &[usize]) -> Result<MarkovModel, MarkovError> {
    let a3 = permutation_matrix(n, cycle_shift)?;
    Ok(MarkovModel {
        n,
        a1: RatMatrix::identity(n),
        a2: RatMatrix::identity(n),
        p: a3.clone(),
        a3,
    })
}

fn permutation_matrix(n: usize, shift: &[usize]) -> Result<RatMatrix, MarkovError> {
    if shift.len() != n {
        return Err(MarkovError::NotAPermutation);
    }
    let mut seen = alloc::vec![false; n];
    for &t in shift {
        if t >= n || seen[t] {
            return Err(MarkovError::NotAPermutation);
        }
        seen[t] = true;
    }
    // single n-cycle check
    let mut k = 0usize;
    for _ in 0..n {
        k = shift[k];
    }
    let mut len = 1;
    let mut j = shift[0];
    while j != 0 {
        j = shift[j];
        len += 1;
        if len > n {
            break;
        }
    }
    if len != n {
        return Err(MarkovError::NotASingleCycle);
    }
    let mut m = RatMatrix::zeros(n);
    for (l, &t) in shift.iter().enumerate() {
        m.set(t, l, Scalar::one());
    }
    Ok(m)
}

impl MarkovModel {
    pub fn uniform(&self) -> MassVector {
        MassVector::uniform(self.n, Scalar::one())
    }

    /// Exact fixed-point check: `P · uniform = uniform`.
    pub fn fixes_uniform(&self) -> bool {
        let u = self.uniform();
        self.p.apply(&u.0) == u.0
    }

    /// Exact simplicity certificate for the eigenvalue 1:
    /// `rank(P - I) = n - 1`.
    pub fn eigenvalue_one_is_geometrically_simple(&self) -> bool {
        let mut m = self.p.clone();
        for i in 0..self.n {
            let v = m.get(i, i).clone() - Scalar::one();
            m.set(i, i, v);
        }
        m.rank() == self.n - 1
    }

    /// Smallest `m ≤ n^2` with `P^m` strictly positive, if any.
    pub fn aperiodicity_witness(&self) -> Option<usize> {
        let base = self.p.pattern();
        let words = self.n.div_ceil(64);
        let full = |rows: &Vec<Vec<u64>>| {
            rows.iter().all(|row| {
                (0..self.n).all(|j| row[j / 64] & (1 << (j % 64)) != 0)
            })
        };
        let mul = |a: &Vec<Vec<u64>>, b: &Vec<Vec<u64>>| {
            let mut out = alloc::vec![alloc::vec![0u64; words]; self.n];
            for i in 0..self.n {
                for k in 0..self.n {
                    if a[i][k / 64] & (1 << (k % 64)) != 0 {
                        for w in 0..words {
                            out[i][w] |= b[k][w];
                        }
                    }
                }
            }
            out
        };
        let mut acc = base.clone();
        for m in 1..=self.n * self.n {
            if full(&acc) {
                return Some(m);
            }
            acc = mul(&acc, &base);
        }
        None
    }

    pub fn is_aperiodic(&self) -> bool {
        self.aperiodicity_witness().is_some()
    }

    /// Irreducibility: every state reaches every state.
    pub fn is_irreducible(&self) -> bool {
        let base = self.p.pattern();
        let words = self.n.div_ceil(64);
        let mut reach = base.clone();
        for i in 0..self.n {
            reach[i][i / 64] |= 1 << (i % 64);
        }
        // Repeated squaring of the reachability relation.
        for _ in 0..self.n.ilog2() + 1 {
            let mut next = reach.clone();
            for i in 0..self.n {
                for k in 0..self.n {
                    if reach[i][k / 64] & (1 << (k % 64)) != 0 {
                        for w in 0..words {
                            next[i][w] |= reach[k][w];
                        }
                    }
                }
            }
            reach = next;
        }
        reach
            .iter()
            .all(|row| (0..self.n).all(|j| row[j / 64] & (1 << (j % 64)) != 0))
    }

    /// Exact sup-norm deviations `||P^q e_k - uniform||_∞` for
    /// `q = 0..=q_max` and every starting state `k`.
    ///
    /// `P` has entries with denominator 4, so `P^q` is an integer matrix over
    /// the common denominator `4^q`; iterating on scaled integers avoids the
    /// gcd churn of rational matrix products.
    pub fn power_convergence(&self, q_max: usize) -> Vec<Vec<Scalar>> {
        use num_bigint::BigInt;
        use num_traits::Signed as _;
        let n = self.n;
        let four = BigInt::from(4);
        // 4P as small integers.
        let p4: Vec<i64> = (0..n * n)
            .map(|e| {
                let v = self.p.get(e / n, e % n) * &Scalar::from_int(4);
                assert!(v.is_integer(), "P entries must have denominator 4");
                i64::try_from(v.floor()).expect("small entry")
            })
            .collect();
        let mut num: Vec<BigInt> = (0..n * n)
            .map(|e| BigInt::from(u8::from(e / n == e % n)))
            .collect();
        let mut den = BigInt::from(1);
        let n_big = BigInt::from(n as i64);
        let mut out = Vec::with_capacity(q_max + 1);
        for q in 0..=q_max {
            let devs: Vec<Scalar> = (0..n)
                .map(|k| {
                    let mut best = Scalar::zero();
                    for i in 0..n {
                        // |num/den - 1/n| = |n num - den| / (n den)
                        let diff = (&n_big * &num[i * n + k] - &den).abs();
                        let d = Scalar::from_big(diff, &n_big * &den);
                        best = best.max(d);
                    }
                    best
                })
                .collect();
            out.push(devs);
            if q < q_max {
                let mut next = alloc::vec![BigInt::from(0); n * n];
                for i in 0..n {
                    for k in 0..n {
                        let c = p4[i * n + k];
                        if c == 0 {
                            continue;
                        }
                        for j in 0..n {
                            next[i * n + j] += &num[k * n + j] * c;
                        }
                    }
                }
                num = next;
                den *= &four;
            }
        }
        out
    }

    /// Exact evolution of a mass vector by `q` steps.
    pub fn evolve(&self, m: &MassVector, q: usize) -> MassVector {
        let mut v = m.0.clone();
        for _ in 0..q {
            v = self.p.apply(&v);
        }
        MassVector(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sc;

    fn shift(n: usize) -> Vec<usize> {
        (0..n).map(|l| (l + 1) % n).collect()
    }

    #[test]
    fn n2_model_matrices() {
        let m = build_model(2, &shift(2)).unwrap();
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert_eq!(m.a1.get(i, j), &sc!(1, 2));
            assert_eq!(m.a2.get(i, j), &sc!(1, 2));
            assert_eq!(m.p.get(i, j), &sc!(1, 2));
        }
    }

    #[test]
    fn n4_a1_row_structure() {
        // Row 0 couples states 0 and 1 (the even pairing); the staggered
        // pairing with the wrap sits in A2.
        let m = build_model(4, &shift(4)).unwrap();
        let row0: Vec<Scalar> = (0..4).map(|j| m.a1.get(0, j).clone()).collect();
        assert_eq!(row0, alloc::vec![sc!(1, 2), sc!(1, 2), sc!(0), sc!(0)]);
        let row0_a2: Vec<Scalar> = (0..4).map(|j| m.a2.get(0, j).clone()).collect();
        assert_eq!(row0_a2, alloc::vec![sc!(1, 2), sc!(0), sc!(0), sc!(1, 2)]);
    }

    #[test]
    fn products_doubly_stochastic() {
        for n in [2usize, 4, 8, 16] {
            let m = build_model(n, &shift(n)).unwrap();
            assert!(m.a1.is_doubly_stochastic());
            assert!(m.a2.is_doubly_stochastic());
            assert!(m.a3.is_doubly_stochastic());
            assert!(m.p.is_doubly_stochastic());
        }
    }

    #[test]
    fn rejects_odd_and_non_cycles() {
        assert!(matches!(
            build_model(3, &[1, 2, 0]),
            Err(MarkovError::OddStateCount(3))
        ));
        assert!(matches!(
            build_model(4, &[1, 0, 3, 2]),
            Err(MarkovError::NotASingleCycle)
        ));
        assert!(matches!(
            build_model(4, &[1, 1, 3, 2]),
            Err(MarkovError::NotAPermutation)
        ));
    }

    #[test]
    fn snake_model_aperiodic_with_witness() {
        let m = build_model(4, &shift(4)).unwrap();
        let w = m.aperiodicity_witness().expect("aperiodic");
        assert!(w <= 16);
        // Aperiodic implies irreducible.
        assert!(m.is_irreducible());
    }

    #[test]
    fn permutation_only_model_is_periodic() {
        let m = permutation_only_model(8, &shift(8)).unwrap();
        assert!(!m.is_aperiodic());
        assert!(m.is_irreducible());
    }

    #[test]
    fn uniform_is_exact_fixed_point() {
        for n in [2usize, 4, 16] {
            let m = build_model(n, &shift(n)).unwrap();
            assert!(m.fixes_uniform());
            assert!(m.eigenvalue_one_is_geometrically_simple());
        }
    }

    #[test]
    fn mass_conservation() {
        let m = build_model(8, &shift(8)).unwrap();
        let v = MassVector(alloc::vec![
            sc!(1, 3),
            sc!(0),
            sc!(1, 9),
            sc!(2, 9),
            sc!(0),
            sc!(1, 9),
            sc!(1, 9),
            sc!(1, 9),
        ]);
        let total = v.total();
        let evolved = m.evolve(&v, 13);
        assert_eq!(evolved.total(), total);
    }

    #[test]
    fn power_convergence_starts_at_point_mass_gap() {
        let m = build_model(4, &shift(4)).unwrap();
        let devs = m.power_convergence(6);
        // q = 0: deviation of a point mass from uniform is 1 - 1/4.
        for k in 0..4 {
            assert_eq!(devs[0][k], sc!(3, 4));
        }
        // For n = 4 the two staggered pair averages touch every state, so P
        // is the rank-one uniform matrix and the chain mixes exactly in one
        // step.
        for q in 1..=6 {
            for k in 0..4 {
                assert_eq!(devs[q][k], sc!(0));
            }
        }
    }

    #[test]
    fn deviations_nonincreasing_after_onset() {
        let m = build_model(16, &shift(16)).unwrap();
        let devs = m.power_convergence(40);
        let max_at = |q: usize| {
            devs[q]
                .iter()
                .cloned()
                .fold(Scalar::zero(), |a, b| a.max(b))
        };
        let mut prev = max_at(16);
        for q in 17..=40 {
            let cur = max_at(q);
            assert!(
                cur <= prev.clone() + Scalar::ratio(1, 1_000_000_000),
                "deviation grew at q={q}"
            );
            prev = cur;
        }
    }
}
