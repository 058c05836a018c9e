//! The instantaneous vector field of a schedule and its exact norms.
//!
//! At any time inside a stage group the field is a disjoint union of *atoms*:
//! scaled copies of the rotation field on a rectangle (plus constant fields,
//! used by negative tests). Each atom is piecewise affine on the four
//! triangles cut by the rectangle's diagonals, with single-entry traceless
//! gradients and constant axis-parallel boundary traces. Total variation and
//! L1 norms therefore have closed rational forms:
//!
//! * continuous part of one atom: `|s| (a^2 + b^2)`
//! * jump along the internal diagonals: `|s| (a^2 + b^2)`
//! * boundary traces: `(0, ±s b)` on vertical edges, `(∓s a, 0)` on
//!   horizontal ones, integrated against whatever sits on the other side
//!   (zero extension included);
//! * L1 norm: `|s| a b (a + b) / 3`.
//!
//! Abutting atoms are handled by overlaying all edges and integrating the
//! exact trace differences, so shared boundaries are never double counted.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_traits::Signed;

use crate::flows::rotation_field_eval;
use crate::geom::{Point, Rect};
use crate::scalar::Scalar;
use crate::schedule::{FlowSchedule, ScheduleError};

/// One support piece of the field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FieldAtom {
    /// `speed` times the rotation field of the rectangle (quarter turns per
    /// unit time; positive is counterclockwise).
    Rotation { rect: Rect, speed: Scalar },
    /// A constant velocity on a rectangle (axis-aligned components; used to
    /// model non-divergence-free counterexamples).
    Constant { rect: Rect, vx: Scalar, vy: Scalar },
}

impl FieldAtom {
    pub fn rect(&self) -> &Rect {
        match self {
            FieldAtom::Rotation { rect, .. } => rect,
            FieldAtom::Constant { rect, .. } => rect,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldError {
    OverlappingAtoms,
    /// A trace-difference norm is irrational; only arises for constant atoms
    /// with both components nonzero against a transverse neighbour.
    IrrationalNorm,
    /// The two fields overlap with different shapes, so their difference is
    /// not an atom union.
    UnalignedOverlap,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldError::OverlappingAtoms => write!(f, "field atoms overlap"),
            FieldError::IrrationalNorm => write!(f, "trace norm is not rational"),
            FieldError::UnalignedOverlap => {
                write!(f, "fields differ on overlapping, non-identical atoms")
            }
        }
    }
}

impl core::error::Error for FieldError {}

/// A divergence-free (up to constant-atom test inputs) piecewise affine field.
#[derive(Clone, Debug, Default)]
pub struct PiecewiseField {
    atoms: Vec<FieldAtom>,
}

impl PiecewiseField {
    pub fn zero() -> Self {
        PiecewiseField { atoms: Vec::new() }
    }

    pub fn new(atoms: Vec<FieldAtom>) -> Result<Self, FieldError> {
        for (i, a) in atoms.iter().enumerate() {
            for b in atoms.iter().skip(i + 1) {
                if a.rect().overlaps_interior(b.rect()) {
                    return Err(FieldError::OverlappingAtoms);
                }
            }
        }
        Ok(PiecewiseField { atoms })
    }

    pub fn atoms(&self) -> &[FieldAtom] {
        &self.atoms
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Velocity at a point in some atom's interior (zero outside all atoms).
    pub fn eval(&self, x: &Point) -> Result<(Scalar, Scalar), crate::flows::FlowError> {
        for atom in &self.atoms {
            match atom {
                FieldAtom::Rotation { rect, speed } => {
                    if rect.contains_interior(x) {
                        let (vx, vy) = rotation_field_eval(rect, x)?;
                        return Ok((vx * speed.clone(), vy * speed.clone()));
                    }
                }
                FieldAtom::Constant { rect, vx, vy } => {
                    if rect.contains_interior(x) {
                        return Ok((vx.clone(), vy.clone()));
                    }
                }
            }
        }
        Ok((Scalar::zero(), Scalar::zero()))
    }

    /// Largest velocity magnitude over the support.
    pub fn sup_norm(&self) -> Scalar {
        let mut best = Scalar::zero();
        for atom in &self.atoms {
            let m = match atom {
                FieldAtom::Rotation { rect, speed } => {
                    let cand = rect.width().max(rect.height()) * speed.abs();
                    cand
                }
                FieldAtom::Constant { vx, vy, .. } => vx.abs().max(vy.abs()),
            };
            best = best.max(m);
        }
        best
    }
}

/// The instantaneous field of the schedule at a time strictly inside a stage
/// group (zero when no group is active). Group boundaries are rejected: the
/// field may be discontinuous in time there.
pub fn field_at(s: &FlowSchedule, t: &Scalar) -> Result<PiecewiseField, ScheduleError> {
    let Some(group) = s.group_at(t)? else {
        return Ok(PiecewiseField::zero());
    };
    let mut atoms = Vec::new();
    for stage in &group.stages {
        for (rect, speed) in stage.field_atoms(t) {
            atoms.push(FieldAtom::Rotation { rect, speed });
        }
    }
    Ok(PiecewiseField::new(atoms).expect("stage supports are disjoint"))
}

/// Exact total variation of the field over the plane, split into the
/// absolutely continuous part and the jump part.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TVReport {
    pub continuous: Scalar,
    pub jump: Scalar,
    /// Per-atom `(support, continuous part, internal diagonal jump)`;
    /// boundary jumps are shared between neighbours and reported only in the
    /// aggregate.
    pub per_atom: Vec<(Rect, Scalar, Scalar)>,
}

impl TVReport {
    pub fn total(&self) -> Scalar {
        &self.continuous + &self.jump
    }
}

/// Total variation `|Db|(R^2)` of the field, exactly.
pub fn total_variation(f: &PiecewiseField) -> Result<TVReport, FieldError> {
    let mut continuous = Scalar::zero();
    let mut jump = Scalar::zero();
    let mut per_atom = Vec::with_capacity(f.atoms.len());
    for atom in &f.atoms {
        match atom {
            FieldAtom::Rotation { rect, speed } => {
                let a = rect.width();
                let b = rect.height();
                let s = speed.abs();
                let core = (&a * &a + &b * &b) * s;
                continuous += core.clone();
                jump += core.clone();
                per_atom.push((rect.clone(), core.clone(), core));
            }
            FieldAtom::Constant { rect, .. } => {
                per_atom.push((rect.clone(), Scalar::zero(), Scalar::zero()));
            }
        }
    }
    for seg in boundary_overlay(&f.atoms) {
        let du = &seg.left.0 - &seg.right.0;
        let dv = &seg.left.1 - &seg.right.1;
        jump += exact_norm(&du, &dv)? * seg.len();
    }
    Ok(TVReport {
        continuous,
        jump,
        per_atom,
    })
}

/// Exact `∫ |b| dx`.
pub fn l1_norm(f: &PiecewiseField) -> Scalar {
    let third = Scalar::ratio(1, 3);
    let mut total = Scalar::zero();
    for atom in &f.atoms {
        match atom {
            FieldAtom::Rotation { rect, speed } => {
                let a = rect.width();
                let b = rect.height();
                total += speed.abs() * &a * &b * (&a + &b) * third.clone();
            }
            FieldAtom::Constant { rect, vx, vy } => {
                // Only axis-aligned constants are constructed; for a general
                // one this is an upper-bound style |vx|+|vy| norm.
                total += (vx.abs() + vy.abs()) * rect.area();
            }
        }
    }
    total
}

/// Exact `∫ |f - g| dx`, defined whenever the two fields agree on the shape
/// of every spatially overlapping atom (identical rectangles, possibly
/// different speeds). Our base/perturbed schedule pairs always satisfy this.
pub fn field_distance_l1(f: &PiecewiseField, g: &PiecewiseField) -> Result<Scalar, FieldError> {
    Ok(l1_norm(&field_difference(f, g)?))
}

/// The pointwise difference `f - g` as an atom union, when representable.
pub fn field_difference(
    f: &PiecewiseField,
    g: &PiecewiseField,
) -> Result<PiecewiseField, FieldError> {
    let mut atoms: Vec<FieldAtom> = Vec::new();
    let mut g_used = alloc::vec![false; g.atoms.len()];
    for fa in &f.atoms {
        let mut matched = false;
        for (j, ga) in g.atoms.iter().enumerate() {
            if g_used[j] {
                continue;
            }
            match (fa, ga) {
                (
                    FieldAtom::Rotation { rect: rf, speed: sf },
                    FieldAtom::Rotation { rect: rg, speed: sg },
                ) if rf == rg => {
                    let ds = sf - sg;
                    if !ds.is_zero() {
                        atoms.push(FieldAtom::Rotation {
                            rect: rf.clone(),
                            speed: ds,
                        });
                    }
                    g_used[j] = true;
                    matched = true;
                    break;
                }
                (
                    FieldAtom::Constant {
                        rect: rf,
                        vx: fx,
                        vy: fy,
                    },
                    FieldAtom::Constant {
                        rect: rg,
                        vx: gx,
                        vy: gy,
                    },
                ) if rf == rg => {
                    let (dx, dy) = (fx - gx, fy - gy);
                    if !dx.is_zero() || !dy.is_zero() {
                        atoms.push(FieldAtom::Constant {
                            rect: rf.clone(),
                            vx: dx,
                            vy: dy,
                        });
                    }
                    g_used[j] = true;
                    matched = true;
                    break;
                }
                _ => {}
            }
        }
        if !matched {
            atoms.push(fa.clone());
        }
    }
    for (j, ga) in g.atoms.iter().enumerate() {
        if !g_used[j] {
            atoms.push(match ga {
                FieldAtom::Rotation { rect, speed } => FieldAtom::Rotation {
                    rect: rect.clone(),
                    speed: -speed,
                },
                FieldAtom::Constant { rect, vx, vy } => FieldAtom::Constant {
                    rect: rect.clone(),
                    vx: -vx,
                    vy: -vy,
                },
            });
        }
    }
    // The difference atoms must not overlap, otherwise |f - g| is not a sum
    // of atom norms.
    PiecewiseField::new(atoms).map_err(|_| FieldError::UnalignedOverlap)
}

/// Verifies that every affine piece is traceless and that the normal
/// component of the velocity matches across every jump segment (with the
/// zero field outside the support). Returns the violations found.
pub fn check_divergence_free(f: &PiecewiseField) -> (bool, Vec<String>) {
    let mut violations = Vec::new();
    for atom in &f.atoms {
        if let FieldAtom::Rotation { rect, speed } = atom {
            // Gradients are single off-diagonal entries, hence traceless.
            // The internal diagonal jumps must be parallel to the diagonals;
            // the difference is linear along each diagonal, so vanishing
            // cross products at two parameters certify it.
            for tpar in [Scalar::ratio(1, 8), Scalar::ratio(3, 8)] {
                let a = rect.width();
                let b = rect.height();
                let p = Point::new(
                    &rect.x_lo + &(&a * &tpar),
                    &rect.y_lo + &(&b * &tpar),
                );
                // east/west branch value minus north/south branch value
                let half = Scalar::ratio(1, 2);
                let dx = &(&p.x - &rect.x_lo) - &(&a * &half);
                let dy = &(&p.y - &rect.y_lo) - &(&b * &half);
                let two = Scalar::from_int(2);
                let v_ew = (
                    Scalar::zero(),
                    &(&(&two * &b) / &a) * &dx * speed.clone(),
                );
                let v_ns = (
                    -&(&(&two * &a) / &b) * &dy * speed.clone(),
                    Scalar::zero(),
                );
                let (du, dv) = (&v_ew.0 - &v_ns.0, &v_ew.1 - &v_ns.1);
                let cross = &du * &b - &(&dv * &a);
                if !cross.is_zero() {
                    violations.push(alloc::format!(
                        "diagonal jump not parallel on {:?}",
                        rect
                    ));
                }
            }
        }
    }
    for seg in boundary_overlay(&f.atoms) {
        let mismatch = match seg.axis {
            Axis::Vertical => &seg.left.0 - &seg.right.0,
            Axis::Horizontal => &seg.left.1 - &seg.right.1,
        };
        if !mismatch.is_zero() {
            violations.push(alloc::format!(
                "normal trace mismatch of {mismatch} on a segment at {}",
                seg.coord
            ));
        }
    }
    (violations.is_empty(), violations)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Axis {
    Vertical,
    Horizontal,
}

struct OverlaySegment {
    axis: Axis,
    coord: Scalar,
    lo: Scalar,
    hi: Scalar,
    /// Trace from the lower/left side (zero when the field vanishes there).
    left: (Scalar, Scalar),
    /// Trace from the upper/right side.
    right: (Scalar, Scalar),
}

impl OverlaySegment {
    fn len(&self) -> Scalar {
        &self.hi - &self.lo
    }
}

/// Decomposes all atom edges into maximal segments with the boundary traces
/// from both sides.
fn boundary_overlay(atoms: &[FieldAtom]) -> Vec<OverlaySegment> {
    // (coord, lo, hi, from_low_side, trace)
    let mut vertical: Vec<(Scalar, Scalar, Scalar, bool, (Scalar, Scalar))> = Vec::new();
    let mut horizontal: Vec<(Scalar, Scalar, Scalar, bool, (Scalar, Scalar))> = Vec::new();
    for atom in atoms {
        let r = atom.rect().clone();
        let (e, n, w, s) = match atom {
            FieldAtom::Rotation { rect, speed } => {
                let a = rect.width() * speed.clone();
                let b = rect.height() * speed.clone();
                (
                    (Scalar::zero(), b.clone()),
                    (-&a, Scalar::zero()),
                    (Scalar::zero(), -&b),
                    (a, Scalar::zero()),
                )
            }
            FieldAtom::Constant { vx, vy, .. } => {
                let v = (vx.clone(), vy.clone());
                (v.clone(), v.clone(), v.clone(), v)
            }
        };
        vertical.push((r.x_hi.clone(), r.y_lo.clone(), r.y_hi.clone(), true, e));
        vertical.push((r.x_lo.clone(), r.y_lo.clone(), r.y_hi.clone(), false, w));
        horizontal.push((r.y_hi.clone(), r.x_lo.clone(), r.x_hi.clone(), true, n));
        horizontal.push((r.y_lo.clone(), r.x_lo.clone(), r.x_hi.clone(), false, s));
    }
    let mut out = Vec::new();
    for (axis, edges) in [(Axis::Vertical, vertical), (Axis::Horizontal, horizontal)] {
        let mut by_coord: BTreeMap<Scalar, Vec<(Scalar, Scalar, bool, (Scalar, Scalar))>> =
            BTreeMap::new();
        for (c, lo, hi, from_low, trace) in edges {
            by_coord.entry(c).or_default().push((lo, hi, from_low, trace));
        }
        for (coord, list) in by_coord {
            let mut cuts: Vec<Scalar> = Vec::new();
            for (lo, hi, _, _) in &list {
                cuts.push(lo.clone());
                cuts.push(hi.clone());
            }
            cuts.sort();
            cuts.dedup();
            for pair in cuts.windows(2) {
                let (lo, hi) = (&pair[0], &pair[1]);
                let zero = (Scalar::zero(), Scalar::zero());
                let mut left = zero.clone();
                let mut right = zero.clone();
                let mut any = false;
                for (elo, ehi, from_low, trace) in &list {
                    if elo <= lo && hi <= ehi {
                        any = true;
                        if *from_low {
                            left = trace.clone();
                        } else {
                            right = trace.clone();
                        }
                    }
                }
                if any && left != right {
                    out.push(OverlaySegment {
                        axis,
                        coord: coord.clone(),
                        lo: lo.clone(),
                        hi: hi.clone(),
                        left: left.clone(),
                        right: right.clone(),
                    });
                }
            }
        }
    }
    out
}

/// Euclidean norm of a rational vector when it is rational (axis-aligned
/// vectors always, general ones when the square is a perfect square).
fn exact_norm(u: &Scalar, v: &Scalar) -> Result<Scalar, FieldError> {
    if u.is_zero() {
        return Ok(v.abs());
    }
    if v.is_zero() {
        return Ok(u.abs());
    }
    let sq = &(u * u) + &(v * v);
    let n = sq.numer().abs();
    let d = sq.denom().clone();
    let sn = n.sqrt();
    let sd = d.sqrt();
    if &sn * &sn == n && &sd * &sd == d {
        Ok(Scalar::from_big(sn, sd))
    } else {
        Err(FieldError::IrrationalNorm)
    }
}

/// The composition bound for the total variation of a two-flow composition:
/// `TV(b1) + Lip^2 TV(b2) + Lip * sup|b2| * TV(DY1)` in two dimensions,
/// where `Lip` bounds the gradient of the first time-1 map.
pub fn composition_tv_bound(
    tv_b1: &Scalar,
    lip_y1: &Scalar,
    tv_b2: &Scalar,
    sup_b2: &Scalar,
    tv_dy1: &Scalar,
) -> Scalar {
    tv_b1.clone() + lip_y1 * lip_y1 * tv_b2.clone() + lip_y1 * sup_b2 * tv_dy1.clone()
}

/// `max(|entries|)` over the pieces of a time-1 map: the exact Lipschitz
/// constant for the axis-aligned linear parts we construct.
pub fn lipschitz_constant(m: &crate::piecewise::TimeOneMap) -> Scalar {
    let mut best = Scalar::zero();
    for p in m.pieces() {
        for e in [&p.map.m00, &p.map.m01, &p.map.m10, &p.map.m11] {
            best = best.max(e.abs());
        }
    }
    best
}

/// Entrywise-norm total variation of the piecewise constant derivative of a
/// time-1 map (jump part only; the derivative is constant inside pieces).
/// Uses the entrywise sum norm, an upper bound for the Frobenius norm.
pub fn derivative_tv(m: &crate::piecewise::TimeOneMap) -> Scalar {
    struct MatAtom {
        rect: Rect,
        entries: [Scalar; 4],
    }
    let atoms: Vec<MatAtom> = m
        .pieces()
        .iter()
        .map(|p| MatAtom {
            rect: p.domain.clone(),
            entries: [
                p.map.m00.clone(),
                p.map.m01.clone(),
                p.map.m10.clone(),
                p.map.m11.clone(),
            ],
        })
        .collect();
    // Overlay edges exactly as for velocity traces, with matrix traces.
    let mut total = Scalar::zero();
    let mut vertical: Vec<(Scalar, Scalar, Scalar, bool, [Scalar; 4])> = Vec::new();
    let mut horizontal: Vec<(Scalar, Scalar, Scalar, bool, [Scalar; 4])> = Vec::new();
    for a in &atoms {
        vertical.push((
            a.rect.x_hi.clone(),
            a.rect.y_lo.clone(),
            a.rect.y_hi.clone(),
            true,
            a.entries.clone(),
        ));
        vertical.push((
            a.rect.x_lo.clone(),
            a.rect.y_lo.clone(),
            a.rect.y_hi.clone(),
            false,
            a.entries.clone(),
        ));
        horizontal.push((
            a.rect.y_hi.clone(),
            a.rect.x_lo.clone(),
            a.rect.x_hi.clone(),
            true,
            a.entries.clone(),
        ));
        horizontal.push((
            a.rect.y_lo.clone(),
            a.rect.x_lo.clone(),
            a.rect.x_hi.clone(),
            false,
            a.entries.clone(),
        ));
    }
    for edges in [vertical, horizontal] {
        let mut by_coord: BTreeMap<Scalar, Vec<(Scalar, Scalar, bool, [Scalar; 4])>> =
            BTreeMap::new();
        for (c, lo, hi, from_low, tr) in edges {
            by_coord.entry(c).or_default().push((lo, hi, from_low, tr));
        }
        for (_, list) in by_coord {
            let mut cuts: Vec<Scalar> = Vec::new();
            for (lo, hi, _, _) in &list {
                cuts.push(lo.clone());
                cuts.push(hi.clone());
            }
            cuts.sort();
            cuts.dedup();
            let zero = [
                Scalar::zero(),
                Scalar::zero(),
                Scalar::zero(),
                Scalar::zero(),
            ];
            for pair in cuts.windows(2) {
                let (lo, hi) = (&pair[0], &pair[1]);
                let mut left: Option<[Scalar; 4]> = None;
                let mut right: Option<[Scalar; 4]> = None;
                for (elo, ehi, from_low, tr) in &list {
                    if elo <= lo && hi <= ehi {
                        if *from_low {
                            left = Some(tr.clone());
                        } else {
                            right = Some(tr.clone());
                        }
                    }
                }
                if left.is_none() && right.is_none() {
                    continue;
                }
                let l = left.unwrap_or_else(|| zero.clone());
                let r = right.unwrap_or_else(|| zero.clone());
                let mut norm = Scalar::zero();
                for k in 0..4 {
                    norm += (&l[k] - &r[k]).abs();
                }
                total += norm * (hi - lo);
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::transposition_stage_pair;
    use crate::geom::Grid;
    use crate::sc;
    use crate::schedule::{Stage, StageGroup};

    fn atom(rect: Rect, speed: Scalar) -> PiecewiseField {
        PiecewiseField::new(alloc::vec![FieldAtom::Rotation { rect, speed }]).unwrap()
    }

    #[test]
    fn rotation_tv_identity_unit_square() {
        let tv = total_variation(&atom(Rect::unit_square(), sc!(1))).unwrap();
        assert_eq!(tv.continuous, sc!(2));
        assert_eq!(tv.jump, sc!(6));
        assert_eq!(tv.total(), sc!(8));
    }

    #[test]
    fn rotation_tv_identity_general_rects() {
        for (a, b) in [
            (sc!(1), sc!(2)),
            (sc!(1, 2), sc!(1, 4)),
            (sc!(3, 5), sc!(2, 7)),
        ] {
            let r = Rect::new(sc!(0), a.clone(), sc!(0), b.clone()).unwrap();
            let tv = total_variation(&atom(r, sc!(1))).unwrap();
            let core = &a * &a + &b * &b;
            assert_eq!(tv.continuous, core);
            assert_eq!(tv.jump, sc!(3) * core.clone());
            assert_eq!(tv.total(), sc!(4) * core);
        }
    }

    #[test]
    fn tv_scales_with_speed() {
        let tv = total_variation(&atom(Rect::unit_square(), sc!(-3))).unwrap();
        assert_eq!(tv.total(), sc!(24));
    }

    #[test]
    fn abutting_same_handed_atoms_add() {
        let g = Grid::new(2);
        let f = PiecewiseField::new(alloc::vec![
            FieldAtom::Rotation {
                rect: g.square(0, 0).unwrap(),
                speed: sc!(1),
            },
            FieldAtom::Rotation {
                rect: g.square(1, 0).unwrap(),
                speed: sc!(1),
            },
        ])
        .unwrap();
        let tv = total_variation(&f).unwrap();
        // Each square contributes 4(a²+b²) = 4·(1/2) = 2 over R²; a shared
        // edge with opposite tangents keeps the sum exact.
        assert_eq!(tv.total(), sc!(4));
    }

    #[test]
    fn l1_norm_closed_form_and_quadrature() {
        let f = atom(Rect::unit_square(), sc!(1));
        let exact = l1_norm(&f);
        assert_eq!(exact, sc!(2, 3));
        // Near-midpoint quadrature oracle; the y offset keeps sample points
        // off the diagonals where the field jumps.
        for n in [32i64, 64] {
            let mut total = Scalar::zero();
            for i in 0..n {
                for j in 0..n {
                    let p = Point::new(
                        Scalar::ratio(2 * i + 1, 2 * n),
                        Scalar::ratio(2 * j + 1, 2 * n) + Scalar::ratio(1, 194 * n),
                    );
                    let (vx, vy) = f.eval(&p).unwrap();
                    // |v| for the rotation field is |the single component|.
                    total += vx.abs() + vy.abs();
                }
            }
            let quad = total / sc!(n * n);
            let err = (quad - exact.clone()).abs();
            assert!(err < Scalar::ratio(4, n), "error {err} too large at n={n}");
        }
    }

    #[test]
    fn l1_zero_field() {
        assert_eq!(l1_norm(&PiecewiseField::zero()), sc!(0));
    }

    #[test]
    fn l1_scaling_with_grid_size() {
        // k atoms of side 1/(DM) with unit sup-norm speed: L1 ~ k/(DM)^2.
        let shape = |dm: i64| {
            let side = Scalar::ratio(1, dm);
            let r = Rect::new(sc!(0), side.clone(), sc!(0), side.clone()).unwrap();
            // speed chosen so the max velocity is 1
            let f = atom(r, side.recip());
            l1_norm(&f)
        };
        let l4 = shape(4);
        let l8 = shape(8);
        assert_eq!(&l4 / &l8, sc!(4)); // (1/DM)^2 ratio
    }

    #[test]
    fn field_at_transposition_supports() {
        let g = Grid::new(2);
        let k1 = g.square(0, 0).unwrap();
        let k2 = g.square(1, 0).unwrap();
        let [first, second] = transposition_stage_pair(&k1, &k2, sc!(0), sc!(1)).unwrap();
        let sched = FlowSchedule::from_groups(alloc::vec![
            StageGroup::new(
                first.0.clone(),
                first.1.clone(),
                first.2.into_iter().map(Stage::Rotation).collect()
            )
            .unwrap(),
            StageGroup::new(
                second.0.clone(),
                second.1.clone(),
                second.2.into_iter().map(Stage::Rotation).collect()
            )
            .unwrap(),
        ])
        .unwrap();
        let f = field_at(&sched, &sc!(1, 4)).unwrap();
        assert_eq!(f.atoms().len(), 1);
        let union = Rect::of((0, 1), (1, 1), (0, 1), (1, 2));
        assert_eq!(f.atoms()[0].rect(), &union);
        // Identity schedule → zero field.
        let idf = field_at(&FlowSchedule::identity(), &sc!(1, 3)).unwrap();
        assert!(idf.is_zero());
        // Speed-normalized TV at the first-stage midpoint: 4(a²+b²) with
        // a=1, b=1/2 gives 5 = 20/D² for D=2.
        let tv = total_variation(&f).unwrap();
        let speed = sc!(4); // two quarter turns over half a unit interval
        assert_eq!(tv.total() / speed, sc!(5));
    }

    #[test]
    fn rotation_stage_field_matches_formula() {
        let sched = FlowSchedule::from_groups(alloc::vec![StageGroup::new(
            sc!(0),
            sc!(1),
            alloc::vec![Stage::Rotation(
                crate::flows::RotationStage::new(Rect::unit_square(), 1, sc!(0), sc!(1)).unwrap()
            )],
        )
        .unwrap()])
        .unwrap();
        let f = field_at(&sched, &sc!(1, 3)).unwrap();
        let p = Point::new(sc!(3, 4), sc!(1, 2));
        assert_eq!(f.eval(&p).unwrap(), (sc!(0), sc!(1, 2)));
    }

    #[test]
    fn divergence_check_accepts_rotation_rejects_constant() {
        let f = atom(Rect::unit_square(), sc!(2));
        assert!(check_divergence_free(&f).0);

        let g = PiecewiseField::new(alloc::vec![FieldAtom::Constant {
            rect: Rect::of((1, 4), (1, 2), (1, 4), (1, 2)),
            vx: sc!(1),
            vy: sc!(0),
        }])
        .unwrap();
        let (ok, violations) = check_divergence_free(&g);
        assert!(!ok);
        assert!(!violations.is_empty());
    }

    #[test]
    fn distance_between_aligned_fields() {
        let f = atom(Rect::unit_square(), sc!(3));
        let g = atom(Rect::unit_square(), sc!(1));
        assert_eq!(field_distance_l1(&f, &f).unwrap(), sc!(0));
        assert_eq!(field_distance_l1(&f, &g).unwrap(), sc!(4, 3));
        // Disjoint atoms contribute both norms.
        let g1 = atom(Rect::of((0, 1), (1, 2), (0, 1), (1, 2)), sc!(1));
        let h = atom(Rect::of((1, 2), (1, 1), (0, 1), (1, 2)), sc!(1));
        let d = field_distance_l1(&g1, &h).unwrap();
        assert_eq!(d, &l1_norm(&g1) + &l1_norm(&h));
        // Overlapping, differently shaped atoms are rejected.
        assert!(matches!(
            field_distance_l1(&f, &g1),
            Err(FieldError::UnalignedOverlap)
        ));
    }

    #[test]
    fn composition_bound_holds_for_two_stage_schedule() {
        let g = Grid::new(2);
        let k1 = g.square(0, 0).unwrap();
        let k2 = g.square(1, 0).unwrap();
        let [first, second] = transposition_stage_pair(&k1, &k2, sc!(0), sc!(1)).unwrap();
        let g1 = StageGroup::new(
            first.0.clone(),
            first.1.clone(),
            first.2.into_iter().map(Stage::Rotation).collect(),
        )
        .unwrap();
        let g2 = StageGroup::new(
            second.0.clone(),
            second.1.clone(),
            second.2.into_iter().map(Stage::Rotation).collect(),
        )
        .unwrap();
        let sched = FlowSchedule::from_groups(alloc::vec![g1.clone(), g2.clone()]).unwrap();
        let f1 = field_at(&sched, &sc!(1, 4)).unwrap();
        let f2 = field_at(&sched, &sc!(3, 4)).unwrap();
        let tv1 = total_variation(&f1).unwrap().total();
        let tv2 = total_variation(&f2).unwrap().total();
        let y1 = g1.time_one_map();
        let bound = composition_tv_bound(
            &tv1,
            &lipschitz_constant(&y1),
            &tv2,
            &f2.sup_norm(),
            &derivative_tv(&y1),
        );
        // The composite field's TV at any time is one stage's TV.
        assert!(tv1 <= bound && tv2 <= bound);
    }
}
