//! Empirical verification of ergodicity and mixing by exact set transport.
//!
//! Correlation values, Cesàro averages, Birkhoff sums and per-square masses
//! are all rationals computed with zero floating error; the regression in
//! [`fit_exponential`] is the only approximate layer.

use alloc::vec::Vec;
use core::fmt;

use crate::geom::{Grid, Point, RectUnion};
use crate::markov::MassVector;
use crate::piecewise::{Direction, MapError, TimeOneMap};
use crate::scalar::Scalar;
use crate::schedule::{FlowSchedule, ScheduleError};

/// Default rect-count guard for iterated transport.
pub const DEFAULT_PART_CAP: usize = 1_000_000;

#[derive(Debug, Clone)]
pub enum MixingError {
    Map(MapError),
    Schedule(ScheduleError),
    /// Forward orbit hit the a.e.-undefined set at the given iterate.
    OrbitUndefined { iterate: usize },
}

impl fmt::Display for MixingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MixingError::Map(e) => write!(f, "{e}"),
            MixingError::Schedule(e) => write!(f, "{e}"),
            MixingError::OrbitUndefined { iterate } => {
                write!(f, "orbit hit the undefined set at iterate {iterate}")
            }
        }
    }
}

impl core::error::Error for MixingError {}

impl From<MapError> for MixingError {
    fn from(e: MapError) -> Self {
        MixingError::Map(e)
    }
}

impl From<ScheduleError> for MixingError {
    fn from(e: ScheduleError) -> Self {
        MixingError::Schedule(e)
    }
}

/// Exact correlation entries `|T^{-n}(A) ∩ B| - |A||B|`.
#[derive(Clone, Debug)]
pub struct CorrelationSeries {
    pub entries: Vec<(usize, Scalar)>,
    pub area_a: Scalar,
    pub area_b: Scalar,
    /// Set when the rect-count guard stopped the series early.
    pub truncated: bool,
}

/// Computes `|T^{-n}(A) ∩ B| - |A||B|` for `n = 0..=n_max` by iterated
/// inverse pushforward. On hitting the part-count guard the series is
/// returned truncated with a warning flag.
pub fn correlation_series(
    map: &TimeOneMap,
    a: &RectUnion,
    b: &RectUnion,
    n_max: usize,
    cap: usize,
) -> Result<CorrelationSeries, MixingError> {
    let inverse = map.inverse();
    let area_a = a.area();
    let area_b = b.area();
    let product = &area_a * &area_b;
    let bound = area_a.clone().min(area_b.clone());
    let mut entries = Vec::with_capacity(n_max + 1);
    let mut current = a.clone();
    let mut truncated = false;
    for n in 0..=n_max {
        let value = current.intersection_area(b) - &product;
        assert!(
            value.abs() <= bound,
            "correlation bound violated: |{value}| > {bound}"
        );
        entries.push((n, value));
        if n == n_max {
            break;
        }
        match inverse.pushforward(&current, Direction::Forward, cap) {
            Ok(next) => current = next,
            Err(MapError::PartsBudgetExceeded { .. }) => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(CorrelationSeries {
        entries,
        area_a,
        area_b,
        truncated,
    })
}

/// Same values as [`correlation_series`], computed by evolving `B` forward
/// through the packed strip transport and using measure preservation:
/// `|T^{-n}(A) ∩ B| = |A ∩ T^n(B)|`. Falls back to the generic rectangle
/// transport when the map or the sets are not dyadic.
pub fn correlation_series_auto(
    map: &TimeOneMap,
    grid: Grid,
    a: &RectUnion,
    b: &RectUnion,
    n_max: usize,
    cap: usize,
) -> Result<CorrelationSeries, MixingError> {
    let packed = match crate::strips::StripSet::from_rect_union(b, grid) {
        Ok(p) => p,
        Err(_) => return correlation_series(map, a, b, n_max, cap),
    };
    let area_a = a.area();
    let area_b = b.area();
    let product = &area_a * &area_b;
    let bound = area_a.clone().min(area_b.clone());
    let mut entries = Vec::with_capacity(n_max + 1);
    let mut current = packed;
    let mut truncated = false;
    for n in 0..=n_max {
        let overlap = match current.intersection_area(a) {
            Ok(v) => v,
            Err(_) => return correlation_series(map, a, b, n_max, cap),
        };
        let value = overlap - &product;
        assert!(value.abs() <= bound, "correlation bound violated");
        entries.push((n, value));
        if n == n_max {
            break;
        }
        match crate::strips::strip_pushforward(map, &current, cap) {
            Ok(next) => current = next,
            Err(crate::strips::StripError::Budget { .. }) => {
                truncated = true;
                break;
            }
            Err(crate::strips::StripError::NotDyadic) => {
                return correlation_series(map, a, b, n_max, cap)
            }
            Err(_) => {
                return Err(MixingError::Map(MapError::AreaMismatch));
            }
        }
    }
    Ok(CorrelationSeries {
        entries,
        area_a,
        area_b,
        truncated,
    })
}

/// Cesàro averages `(1/n) Σ_{j<n} corr(j)^2` for `n = 1..=len`, exact.
pub fn cesaro_weak_mixing(series: &CorrelationSeries) -> Vec<Scalar> {
    let mut out = Vec::with_capacity(series.entries.len());
    let mut acc = Scalar::zero();
    for (idx, (_, v)) in series.entries.iter().enumerate() {
        acc += v * v;
        out.push(&acc / &Scalar::from_int(idx as i64 + 1));
    }
    out
}

/// Exact Birkhoff average `(1/n) Σ_{k<n} 1_A(T^k x)`.
pub fn birkhoff_average(
    map: &TimeOneMap,
    x: &Point,
    a: &RectUnion,
    n: usize,
) -> Result<Scalar, MixingError> {
    let locator = map.locator(16);
    let mut pos = x.clone();
    let mut hits = 0u64;
    for k in 0..n {
        if a.contains_point(&pos) {
            hits += 1;
        }
        pos = locator
            .apply(&pos)
            .map_err(|_| MixingError::OrbitUndefined { iterate: k })?;
    }
    Ok(Scalar::ratio(hits as i64, n as i64))
}

/// Sampled verification that time averages of the transported indicator
/// approach the set measure.
#[derive(Clone, Debug)]
pub struct FlowAverageReport {
    /// `∫ |avg_s 1_{X_s(A)}(y) - |A|| dy` estimated on the sample grid.
    pub estimate: Scalar,
    /// Same estimate with half the time samples.
    pub coarser_estimate: Scalar,
    /// Self-consistency bound `|estimate - coarser_estimate|`.
    pub quadrature_bound: Scalar,
    pub time_samples: usize,
    pub space_samples: usize,
}

/// Samples `1_{X_s(A)}` on a time grid and a spatial grid (offset off the
/// dyadic seams) and reports the L1 distance of the time average from the
/// constant `|A|`, over however many unit periods of the schedule `periods`
/// requests (`X_{k+s} = X_s ∘ T^k`).
pub fn flow_time_average(
    schedule: &FlowSchedule,
    a: &RectUnion,
    sample_count: usize,
    periods: usize,
) -> Result<FlowAverageReport, MixingError> {
    let periods = periods.max(1);
    let inverse_map = schedule.time_one_map().inverse();
    let inverse_locator = inverse_map.locator(16);
    let estimate_with = |t_per_period: usize| -> Result<Scalar, MixingError> {
        let g = 16usize;
        let total_samples = t_per_period * periods;
        let mut l1 = Scalar::zero();
        for i in 0..g {
            for j in 0..g {
                let y = Point::new(
                    Scalar::ratio(3 * i as i64 + 1, 3 * g as i64),
                    Scalar::ratio(3 * j as i64 + 2, 3 * g as i64),
                );
                let mut hits = 0u64;
                for period in 0..periods {
                    // y ∈ X_{n+s}(A) iff T^{-n}(X_s^{-1}(y)) ∈ A.
                    for k in 0..t_per_period {
                        let s = Scalar::ratio(2 * k as i64 + 1, 2 * t_per_period as i64);
                        let mut back = schedule.eval_inverse(&s, &y)?;
                        for _ in 0..period {
                            back = inverse_locator.apply(&back)?;
                        }
                        if a.contains_point(&back) {
                            hits += 1;
                        }
                    }
                }
                let avg = Scalar::ratio(hits as i64, total_samples as i64);
                l1 += (avg - a.area()).abs();
            }
        }
        Ok(l1 / Scalar::from_int((g * g) as i64))
    };
    let estimate = estimate_with(sample_count)?;
    let coarser_estimate = estimate_with(sample_count.div_ceil(2))?;
    let quadrature_bound = (&estimate - &coarser_estimate).abs();
    Ok(FlowAverageReport {
        estimate,
        coarser_estimate,
        quadrature_bound,
        time_samples: sample_count * periods,
        space_samples: 256,
    })
}


/// Exact mass of `T^q(A)` in every square of the grid, by linear index.
pub fn mass_per_square(
    map: &TimeOneMap,
    a: &RectUnion,
    grid: Grid,
    q: usize,
    cap: usize,
) -> Result<Vec<Scalar>, MixingError> {
    let mut current = a.clone();
    for _ in 0..q {
        current = map.pushforward(&current, Direction::Forward, cap)?;
    }
    let masses = (0..grid.square_count())
        .map(|k| current.mass_in(&grid.square_linear(k).expect("grid index")))
        .collect();
    Ok(masses)
}

/// Reindexes per-square masses from linear grid order into snake order.
pub fn snake_mass_vector(masses_linear: &[Scalar], snake: &[usize]) -> MassVector {
    MassVector(snake.iter().map(|&sq| masses_linear[sq].clone()).collect())
}

/// Every rect of the union has horizontal side exactly `side` (the
/// strip-formation criterion starting the exponential regime).
pub fn is_horizontal_strip_union(u: &RectUnion, side: &Scalar) -> bool {
    u.parts().iter().all(|r| {
        let w = r.width();
        // Merged strips may span several squares: the width must be a
        // multiple of the square side with grid-aligned x cuts.
        (&w / side).is_integer() && (&r.x_lo / side).is_integer()
    })
}

/// First iterate at which the forward image of `a` is a union of full-width
/// horizontal strips.
pub fn strip_onset(
    map: &TimeOneMap,
    a: &RectUnion,
    side: &Scalar,
    max_iter: usize,
    cap: usize,
) -> Result<Option<usize>, MixingError> {
    let mut current = a.clone();
    for q in 0..=max_iter {
        if is_horizontal_strip_union(&current, side) {
            return Ok(Some(q));
        }
        current = map.pushforward(&current, Direction::Forward, cap)?;
    }
    Ok(None)
}

/// Least-squares fit of `log|value|` against `n`.
#[derive(Clone, Debug)]
pub struct DecayFit {
    /// Decay exponent: values behave like `prefactor * exp(-rate * n)`.
    /// `f64::INFINITY` when every window entry is exactly zero.
    pub rate: f64,
    /// Per-step ratio `exp(-rate)`.
    pub base: f64,
    pub prefactor: f64,
    /// Coefficient of determination of the log-linear fit.
    pub goodness: f64,
    pub window: (usize, usize),
    /// Entries actually used (exact zeros are skipped).
    pub points: usize,
}

/// Fits `log |value|` over the window `[n_start, n_end]` (inclusive).
pub fn fit_exponential(series: &[(usize, Scalar)], window: (usize, usize)) -> DecayFit {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(n, v)| *n >= window.0 && *n <= window.1 && !v.is_zero())
        .map(|(n, v)| (*n as f64, libm::log(v.abs().to_f64())))
        .collect();
    if pts.is_empty() {
        return DecayFit {
            rate: f64::INFINITY,
            base: 0.0,
            prefactor: 0.0,
            goodness: 1.0,
            window,
            points: 0,
        };
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    let slope = if denom == 0.0 {
        0.0
    } else {
        (n * sxy - sx * sy) / denom
    };
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in &pts {
        let fit = slope * x + intercept;
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let goodness = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    DecayFit {
        rate: -slope,
        base: libm::exp(slope),
        prefactor: libm::exp(intercept),
        goodness,
        window,
        points: pts.len(),
    }
}

/// Least-squares fit of a damped oscillation
/// `v(n) ≈ r^n (α cos nθ + β sin nθ)` by grid search over `(r, θ)` with the
/// amplitudes solved linearly. The correlation of a mixing map whose
/// second eigenvalue is a complex pair rotates while it decays, so the plain
/// log-linear fit cannot represent it; this estimator extracts the decay
/// modulus `r` the pair imposes. Goodness is the coefficient of
/// determination on the raw values.
pub fn fit_damped_oscillation(series: &[(usize, Scalar)], window: (usize, usize)) -> DecayFit {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(n, _)| *n >= window.0 && *n <= window.1)
        .map(|(n, v)| (*n as f64, v.to_f64()))
        .collect();
    if pts.len() < 4 || pts.iter().all(|(_, v)| *v == 0.0) {
        return DecayFit {
            rate: f64::INFINITY,
            base: 0.0,
            prefactor: 0.0,
            goodness: 1.0,
            window,
            points: pts.len(),
        };
    }
    let mean_y: f64 = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean_y) * (p.1 - mean_y)).sum();
    let eval = |r: f64, th: f64| -> (f64, f64, f64) {
        // Solve min over (α, β) of Σ (v - r^n(α cos nθ + β sin nθ))².
        let mut m = [0.0f64; 3];
        let mut rhs = [0.0f64; 2];
        for (n, v) in &pts {
            let w = libm::pow(r, *n);
            let c = w * libm::cos(n * th);
            let s = w * libm::sin(n * th);
            m[0] += c * c;
            m[1] += c * s;
            m[2] += s * s;
            rhs[0] += c * v;
            rhs[1] += s * v;
        }
        let det = m[0] * m[2] - m[1] * m[1];
        let (alpha, beta) = if det.abs() < 1e-300 {
            (0.0, 0.0)
        } else {
            (
                (rhs[0] * m[2] - rhs[1] * m[1]) / det,
                (rhs[1] * m[0] - rhs[0] * m[1]) / det,
            )
        };
        let mut ss_res = 0.0;
        for (n, v) in &pts {
            let w = libm::pow(r, *n);
            let fit = w * (alpha * libm::cos(n * th) + beta * libm::sin(n * th));
            ss_res += (v - fit) * (v - fit);
        }
        (ss_res, alpha, beta)
    };
    let mut best = (f64::MAX, 0.9f64, 0.0f64, 0.0f64, 0.0f64);
    let scan = |r_lo: f64, r_hi: f64, t_lo: f64, t_hi: f64, steps: usize,
                    best: &mut (f64, f64, f64, f64, f64)| {
        for i in 0..=steps {
            let r = r_lo + (r_hi - r_lo) * i as f64 / steps as f64;
            for j in 0..=steps {
                let th = t_lo + (t_hi - t_lo) * j as f64 / steps as f64;
                let (ss, a, b) = eval(r, th);
                if ss < best.0 {
                    *best = (ss, r, th, a, b);
                }
            }
        }
    };
    scan(0.30, 0.999, 0.0, core::f64::consts::PI, 240, &mut best);
    let (_, r0, t0, _, _) = best;
    scan(
        (r0 - 0.02).max(0.01),
        (r0 + 0.02).min(0.9999),
        (t0 - 0.05).max(0.0),
        t0 + 0.05,
        160,
        &mut best,
    );
    let (ss_res, r, _th, alpha, beta) = best;
    let goodness = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    DecayFit {
        rate: -libm::log(r),
        base: r,
        prefactor: libm::sqrt(alpha * alpha + beta * beta),
        goodness,
        window,
        points: pts.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;
    use crate::sc;

    fn left_half() -> RectUnion {
        RectUnion::single(Rect::of((0, 1), (1, 2), (0, 1), (1, 1)))
    }

    #[test]
    fn correlation_identity_full_space() {
        let k = RectUnion::single(Rect::unit_square());
        let id = TimeOneMap::identity();
        let s = correlation_series(&id, &k, &k, 5, DEFAULT_PART_CAP).unwrap();
        assert!(s.entries.iter().all(|(_, v)| v.is_zero()));
    }

    #[test]
    fn correlation_identity_left_half_constant_quarter() {
        let id = TimeOneMap::identity();
        let s = correlation_series(&id, &left_half(), &left_half(), 8, DEFAULT_PART_CAP).unwrap();
        assert!(s.entries.iter().all(|(_, v)| *v == sc!(1, 4)));
        // Cesàro averages of squared correlations are constant 1/16.
        let ces = cesaro_weak_mixing(&s);
        assert!(ces.iter().all(|v| *v == sc!(1, 16)));
    }

    #[test]
    fn birkhoff_full_space_is_one() {
        let id = TimeOneMap::identity();
        let k = RectUnion::single(Rect::unit_square());
        let avg = birkhoff_average(&id, &Point::new(sc!(1, 3), sc!(1, 7)), &k, 100).unwrap();
        assert_eq!(avg, sc!(1));
    }

    #[test]
    fn birkhoff_pure_cycle_visits_once_per_period() {
        // The snake 4-cycle on Grid(2): one visit to each square per period.
        let (_, sched) =
            crate::construct::snake_cycle_schedule(2, &sc!(0), &sc!(1)).unwrap();
        let map = sched.time_one_map();
        let g = Grid::new(2);
        let a = RectUnion::single(g.square(1, 1).unwrap());
        let x = Point::new(sc!(1, 7), sc!(2, 11));
        let avg = birkhoff_average(&map, &x, &a, 4).unwrap();
        assert_eq!(avg, sc!(1, 4));
        let avg8 = birkhoff_average(&map, &x, &a, 8).unwrap();
        assert_eq!(avg8, sc!(1, 4));
    }

    #[test]
    fn mass_per_square_point_mass() {
        let id = TimeOneMap::identity();
        let g = Grid::new(4);
        let a = RectUnion::single(g.square(2, 1).unwrap());
        let masses = mass_per_square(&id, &a, g, 0, DEFAULT_PART_CAP).unwrap();
        for (k, m) in masses.iter().enumerate() {
            if k == g.linear(2, 1) {
                assert_eq!(*m, sc!(1, 16));
            } else {
                assert!(m.is_zero());
            }
        }
    }

    #[test]
    fn strip_union_detection() {
        let side = sc!(1, 4);
        let strips = RectUnion::from_disjoint(alloc::vec![
            Rect::of((0, 1), (1, 4), (0, 1), (1, 32)),
            Rect::of((1, 4), (3, 4), (1, 2), (9, 16)),
        ]);
        assert!(is_horizontal_strip_union(&strips, &side));
        let not = RectUnion::single(Rect::of((1, 8), (1, 4), (0, 1), (1, 2)));
        assert!(!is_horizontal_strip_union(&not, &side));
    }

    #[test]
    fn fit_recovers_synthetic_geometric_series() {
        // c * r^n with c = 3/4, r = 1/2.
        let series: Vec<(usize, Scalar)> = (0..20)
            .map(|n| {
                let v = sc!(3, 4) * sc!(1, 2 << n) * sc!(2);
                (n, v)
            })
            .collect();
        let fit = fit_exponential(&series, (0, 19));
        assert!((fit.base - 0.5).abs() < 1e-12);
        assert!((fit.prefactor - 0.75).abs() < 1e-12);
        assert!((fit.rate - core::f64::consts::LN_2).abs() < 1e-12);
        assert!(fit.goodness > 0.999999);
    }

    #[test]
    fn damped_fit_recovers_rotating_decay() {
        // v(n) = r^n cos(nθ + φ) with r = 0.9, θ = 0.4.
        let (r, th, phi) = (0.9f64, 0.4f64, 0.7f64);
        let series: Vec<(usize, Scalar)> = (0..40)
            .map(|n| {
                let v = libm::pow(r, n as f64) * libm::cos(n as f64 * th + phi);
                // Quantize to a rational for the series type.
                let q = (v * 1e12) as i64;
                (n, Scalar::ratio(q, 1_000_000_000_000))
            })
            .collect();
        let fit = fit_damped_oscillation(&series, (0, 39));
        assert!((fit.base - r).abs() < 0.003, "base {} off", fit.base);
        assert!(fit.goodness > 0.999);
        // The plain log fit cannot represent the sign changes.
        let plain = fit_exponential(&series, (0, 39));
        assert!(plain.goodness < fit.goodness);
    }

    #[test]
    fn fit_flags_all_zero_window() {
        let series = alloc::vec![(0usize, sc!(0)), (1, sc!(0)), (2, sc!(0))];
        let fit = fit_exponential(&series, (0, 2));
        assert!(fit.rate.is_infinite());
        assert_eq!(fit.points, 0);
    }

    #[test]
    fn flow_average_identity_schedule() {
        let sched = FlowSchedule::identity();
        let a = left_half();
        let r = flow_time_average(&sched, &a, 4, 1).unwrap();
        // For the identity schedule the time average is 1_A itself:
        // ∫ |1_A - 1/2| = 1/2, exactly, independent of sampling.
        assert_eq!(r.estimate, sc!(1, 2));
        assert_eq!(r.quadrature_bound, sc!(0));
    }
}
