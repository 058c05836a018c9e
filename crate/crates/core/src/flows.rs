//! Elementary measure-preserving flows: squashed rectangle rotations, the
//! two-stage transposition flow between adjacent squares, and the folded
//! Baker's map realized as rotations.
//!
//! The rotation flow on the unit square is driven by the orthogonal gradient
//! of `V(x) = max(|x1-1/2|, |x2-1/2|)^2`: trajectories run counterclockwise
//! along concentric square level sets at constant speed `2d`, completing one
//! quarter turn per unit time. On a rectangle the flow is conjugated by the
//! axis scaling onto the unit square, which keeps every position rational —
//! there is no numeric integration anywhere.

use alloc::vec::Vec;
use core::fmt;

use crate::geom::{Point, Rect};
use crate::piecewise::{Affine, Piece};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowError {
    OutsideSupport(Point),
    /// Point on the jump set of the rotation field (a diagonal or the
    /// support boundary).
    OnJumpSet(Point),
    /// Baker's map is undefined on the vertical midline of its rectangle.
    VerticalMidline(Point),
    /// Intermediate Baker evaluation is undefined on the seam between the
    /// counter-rotating halves.
    OnSeam(Point),
    NotAdjacent,
    NotCongruent,
    BadInterval,
    BadQuarterTurns(i8),
}

impl fmt::Display for FlowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowError::OutsideSupport(p) => write!(f, "{p:?} outside the stage support"),
            FlowError::OnJumpSet(p) => write!(f, "{p:?} lies on the field jump set"),
            FlowError::VerticalMidline(p) => {
                write!(f, "{p:?} on the vertical midline (map undefined)")
            }
            FlowError::OnSeam(p) => write!(f, "{p:?} on the half-rotation seam"),
            FlowError::NotAdjacent => write!(f, "squares are not edge-adjacent"),
            FlowError::NotCongruent => write!(f, "squares are not congruent"),
            FlowError::BadInterval => write!(f, "invalid stage time interval"),
            FlowError::BadQuarterTurns(q) => write!(f, "quarter turns {q} not in ±1, ±2"),
        }
    }
}

impl core::error::Error for FlowError {}

/// Square-polar coordinates relative to a square level set of the rotation
/// potential: sup-norm radius, side, and counterclockwise offset along it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SquarePolar {
    pub radius: Scalar,
    pub side: Side,
    /// Offset from the side's starting corner, counterclockwise, in
    /// `[0, 2*radius)`.
    pub offset: Scalar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    East,
    North,
    West,
    South,
}

impl SquarePolar {
    /// Decomposes a point of the unit square around the center `(1/2,1/2)`.
    /// Corners are assigned to the side they begin (counterclockwise).
    /// Returns `None` at the center.
    pub fn decompose(u: &Point) -> Option<SquarePolar> {
        let half = Scalar::ratio(1, 2);
        let dx = &u.x - &half;
        let dy = &u.y - &half;
        let d = dx.abs().max(dy.abs());
        if d.is_zero() {
            return None;
        }
        let (side, offset) = if dx == d && dy < d {
            (Side::East, &dy + &d)
        } else if dy == d && -&dx < d {
            (Side::North, &d - &dx)
        } else if -&dx == d && -&dy < d {
            (Side::West, &d - &dy)
        } else {
            (Side::South, &dx + &d)
        };
        Some(SquarePolar {
            radius: d,
            side,
            offset,
        })
    }

    /// Inverse of [`SquarePolar::decompose`], exactly.
    pub fn reconstruct(&self) -> Point {
        let half = Scalar::ratio(1, 2);
        let d = &self.radius;
        let o = &self.offset;
        let (dx, dy) = match self.side {
            Side::East => (d.clone(), o - d),
            Side::North => (d - o, d.clone()),
            Side::West => (-d, d - o),
            Side::South => (o - d, -d),
        };
        Point::new(&half + &dx, &half + &dy)
    }

    /// Perimeter arc position in `[0, 8d)` measured counterclockwise from the
    /// southeast corner.
    fn arc(&self) -> Scalar {
        let two_d = Scalar::from_int(2) * self.radius.clone();
        let k = match self.side {
            Side::East => 0,
            Side::North => 1,
            Side::West => 2,
            Side::South => 3,
        };
        Scalar::from_int(k) * two_d + self.offset.clone()
    }

    fn from_arc(radius: Scalar, arc: Scalar) -> SquarePolar {
        let two_d = Scalar::from_int(2) * radius.clone();
        let perimeter = Scalar::from_int(4) * two_d.clone();
        let s = arc.rem_euclid(&perimeter);
        let k = (&s / &two_d).floor();
        let k: i64 = i64::try_from(k).expect("side index");
        let offset = s - Scalar::from_int(k) * two_d;
        let side = match k {
            0 => Side::East,
            1 => Side::North,
            2 => Side::West,
            _ => Side::South,
        };
        SquarePolar {
            radius,
            side,
            offset,
        }
    }
}

/// Advances a unit-square point counterclockwise along its level square by
/// `phase` quarter turns (negative = clockwise). Exact.
pub fn rotate_unit_point(u: &Point, phase: &Scalar) -> Point {
    match SquarePolar::decompose(u) {
        None => u.clone(),
        Some(sp) => {
            let two_d = Scalar::from_int(2) * sp.radius.clone();
            let arc = sp.arc() + phase * &two_d;
            SquarePolar::from_arc(sp.radius.clone(), arc).reconstruct()
        }
    }
}

/// A stage rotating a rectangle by `quarter_turns * π/2` (counterclockwise
/// when positive) over `[t_begin, t_end]`, conjugated from the unit-square
/// rotation flow by the axis scaling of the rectangle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RotationStage {
    pub rect: Rect,
    pub quarter_turns: i8,
    pub t_begin: Scalar,
    pub t_end: Scalar,
}

impl RotationStage {
    pub fn new(rect: Rect, quarter_turns: i8, t_begin: Scalar, t_end: Scalar) -> Result<Self, FlowError> {
        if !matches!(quarter_turns, -2 | -1 | 1 | 2) {
            return Err(FlowError::BadQuarterTurns(quarter_turns));
        }
        if t_begin >= t_end {
            return Err(FlowError::BadInterval);
        }
        Ok(RotationStage {
            rect,
            quarter_turns,
            t_begin,
            t_end,
        })
    }

    pub fn span(&self) -> Scalar {
        &self.t_end - &self.t_begin
    }

    /// Quarter turns per unit time (signed).
    pub fn speed(&self) -> Scalar {
        Scalar::from_int(self.quarter_turns as i64) / self.span()
    }

    fn to_unit(&self) -> Affine {
        let w = self.rect.width();
        let h = self.rect.height();
        Affine {
            m00: w.recip(),
            m01: Scalar::zero(),
            m10: Scalar::zero(),
            m11: h.recip(),
            tx: -&self.rect.x_lo / &w,
            ty: -&self.rect.y_lo / &h,
        }
    }

    /// Exact trajectory position at `t ∈ [t_begin, t_end]`.
    pub fn eval(&self, t: &Scalar, x: &Point) -> Result<Point, FlowError> {
        if *t < self.t_begin || *t > self.t_end {
            return Err(FlowError::BadInterval);
        }
        if !self.rect.contains(x) {
            return Err(FlowError::OutsideSupport(x.clone()));
        }
        let tau = (t - &self.t_begin) / self.span();
        let phase = Scalar::from_int(self.quarter_turns as i64) * tau;
        let chi = self.to_unit();
        let u = chi.apply(x);
        let rotated = rotate_unit_point(&u, &phase);
        Ok(chi.inverse().apply(&rotated))
    }

    /// Inverse of [`RotationStage::eval`]: the position whose trajectory
    /// reaches `y` at time `t`.
    pub fn eval_inverse(&self, t: &Scalar, y: &Point) -> Result<Point, FlowError> {
        let back = RotationStage {
            rect: self.rect.clone(),
            quarter_turns: -self.quarter_turns,
            t_begin: self.t_begin.clone(),
            t_end: self.t_end.clone(),
        };
        back.eval(t, y)
    }

    /// The affine time-1 map of the stage (rotation by `quarter_turns * π/2`
    /// about the rectangle center, conjugated by the axis scaling).
    pub fn time_one_map(&self) -> Affine {
        let chi = self.to_unit();
        let q = self.quarter_turns.rem_euclid(4);
        let (row0, row1, t) = match q {
            1 => ((0i64, -1i64), (1i64, 0i64), (1i64, 0i64)),
            2 => ((-1, 0), (0, -1), (1, 1)),
            3 => ((0, 1), (-1, 0), (0, 1)),
            _ => ((1, 0), (0, 1), (0, 0)),
        };
        let unit = Affine {
            m00: Scalar::from_int(row0.0),
            m01: Scalar::from_int(row0.1),
            m10: Scalar::from_int(row1.0),
            m11: Scalar::from_int(row1.1),
            tx: Scalar::from_int(t.0),
            ty: Scalar::from_int(t.1),
        };
        chi.inverse().compose(&unit).compose(&chi)
    }

    pub fn time_one_piece(&self) -> Piece {
        Piece {
            domain: self.rect.clone(),
            map: self.time_one_map(),
        }
    }
}

/// Evaluates the rotation field (the orthogonal gradient of the scaled
/// potential) at an interior point of the rectangle, off the diagonals.
/// In rect-local coordinates with sides `a x b` the velocity is
/// `(0, (2b/a)(x1 - a/2))` on the east/west triangles and
/// `(-(2a/b)(x2 - b/2), 0)` on the north/south ones.
pub fn rotation_field_eval(rect: &Rect, x: &Point) -> Result<(Scalar, Scalar), FlowError> {
    if !rect.contains_interior(x) {
        return Err(FlowError::OnJumpSet(x.clone()));
    }
    let a = rect.width();
    let b = rect.height();
    let half = Scalar::ratio(1, 2);
    let lx = &x.x - &rect.x_lo;
    let ly = &x.y - &rect.y_lo;
    let dx = lx - &a * &half;
    let dy = ly - &b * &half;
    // Branch comparison cleared of denominators: |b dx| vs |a dy|.
    let lhs = (&b * &dx).abs();
    let rhs = (&a * &dy).abs();
    if lhs == rhs {
        return Err(FlowError::OnJumpSet(x.clone()));
    }
    let two = Scalar::from_int(2);
    if lhs > rhs {
        Ok((Scalar::zero(), &(&two * &b) / &a * dx))
    } else {
        Ok((-(&(&two * &a) / &b) * dy, Scalar::zero()))
    }
}

/// A stage realizing the folded Baker's map on a rectangle over
/// `[t_begin, t_end]` (the inverse map when `inverse` is set).
///
/// The map is realized exactly as two rotation substages of equal duration:
/// first a counterclockwise quarter turn of the whole rectangle, then a
/// counterclockwise quarter turn of its bottom half together with a clockwise
/// quarter turn of its top half. The composite time-1 map equals the folded
/// Baker's map, rescaled to the rectangle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BakerStage {
    pub rect: Rect,
    pub inverse: bool,
    pub t_begin: Scalar,
    pub t_end: Scalar,
}

impl BakerStage {
    pub fn new(rect: Rect, inverse: bool, t_begin: Scalar, t_end: Scalar) -> Result<Self, FlowError> {
        if t_begin >= t_end {
            return Err(FlowError::BadInterval);
        }
        Ok(BakerStage {
            rect,
            inverse,
            t_begin,
            t_end,
        })
    }

    pub fn span(&self) -> Scalar {
        &self.t_end - &self.t_begin
    }

    fn t_mid(&self) -> Scalar {
        (&self.t_begin + &self.t_end) * Scalar::ratio(1, 2)
    }

    fn halves(&self) -> (Rect, Rect) {
        let ym = (&self.rect.y_lo + &self.rect.y_hi) * Scalar::ratio(1, 2);
        let bottom = Rect {
            x_lo: self.rect.x_lo.clone(),
            x_hi: self.rect.x_hi.clone(),
            y_lo: self.rect.y_lo.clone(),
            y_hi: ym.clone(),
        };
        let top = Rect {
            x_lo: self.rect.x_lo.clone(),
            x_hi: self.rect.x_hi.clone(),
            y_lo: ym,
            y_hi: self.rect.y_hi.clone(),
        };
        (bottom, top)
    }

    /// The two rotation substages realizing the map.
    pub fn substages(&self) -> [Vec<RotationStage>; 2] {
        let (bottom, top) = self.halves();
        let whole = |q, t0: Scalar, t1: Scalar| {
            RotationStage::new(self.rect.clone(), q, t0, t1).expect("valid substage")
        };
        let half = |r: &Rect, q, t0: Scalar, t1: Scalar| {
            RotationStage::new(r.clone(), q, t0, t1).expect("valid substage")
        };
        let (t0, tm, t1) = (self.t_begin.clone(), self.t_mid(), self.t_end.clone());
        if !self.inverse {
            [
                alloc::vec![whole(1, t0, tm.clone())],
                alloc::vec![
                    half(&bottom, 1, tm.clone(), t1.clone()),
                    half(&top, -1, tm, t1),
                ],
            ]
        } else {
            [
                alloc::vec![
                    half(&bottom, -1, t0.clone(), tm.clone()),
                    half(&top, 1, t0, tm.clone()),
                ],
                alloc::vec![whole(-1, tm, t1)],
            ]
        }
    }

    /// Trajectory position at `t`; errors on the counter-rotation seam.
    pub fn eval(&self, t: &Scalar, x: &Point) -> Result<Point, FlowError> {
        if *t < self.t_begin || *t > self.t_end {
            return Err(FlowError::BadInterval);
        }
        if !self.rect.contains(x) {
            return Err(FlowError::OutsideSupport(x.clone()));
        }
        let tm = self.t_mid();
        let [first, second] = self.substages();
        let eval_group = |stages: &[RotationStage], t: &Scalar, x: &Point| {
            for s in stages {
                if s.rect.contains_interior(x) {
                    return s.eval(t, x);
                }
            }
            // On the shared seam the two half rotations disagree.
            if stages.len() == 2 {
                Err(FlowError::OnSeam(x.clone()))
            } else {
                stages[0].eval(t, x)
            }
        };
        if *t <= tm {
            return eval_group(&first, t, x);
        }
        let mid_pos = eval_group(&first, &tm, x)?;
        eval_group(&second, t, &mid_pos)
    }

    /// Inverse of [`BakerStage::eval`].
    pub fn eval_inverse(&self, t: &Scalar, y: &Point) -> Result<Point, FlowError> {
        if *t < self.t_begin || *t > self.t_end {
            return Err(FlowError::BadInterval);
        }
        if !self.rect.contains(y) {
            return Err(FlowError::OutsideSupport(y.clone()));
        }
        let tm = self.t_mid();
        let [first, second] = self.substages();
        let inv_group = |stages: &[RotationStage], t: &Scalar, y: &Point| {
            for s in stages {
                if s.rect.contains_interior(y) {
                    return s.eval_inverse(t, y);
                }
            }
            if stages.len() == 2 {
                Err(FlowError::OnSeam(y.clone()))
            } else {
                stages[0].eval_inverse(t, y)
            }
        };
        if *t <= tm {
            return inv_group(&first, t, y);
        }
        let mid_pos = inv_group(&second, t, y)?;
        inv_group(&first, &tm, &mid_pos)
    }

    /// The two affine branches of the (possibly inverse) folded Baker's map
    /// rescaled to the rectangle.
    pub fn time_one_pieces(&self) -> Vec<Piece> {
        let w = self.rect.width();
        let h = self.rect.height();
        let to_unit = Affine {
            m00: w.recip(),
            m01: Scalar::zero(),
            m10: Scalar::zero(),
            m11: h.recip(),
            tx: -&self.rect.x_lo / &w,
            ty: -&self.rect.y_lo / &h,
        };
        let from_unit = to_unit.inverse();
        let diag = |m00: Scalar, m11: Scalar, tx: Scalar, ty: Scalar| Affine {
            m00,
            m01: Scalar::zero(),
            m10: Scalar::zero(),
            m11,
            tx,
            ty,
        };
        let (u_left, u_right) = (
            // (x, y) -> (1 - 2x, (1 - y)/2)
            diag(sc_i(-2), Scalar::ratio(-1, 2), sc_i(1), Scalar::ratio(1, 2)),
            // (x, y) -> (2x - 1, (1 + y)/2)
            diag(sc_i(2), Scalar::ratio(1, 2), sc_i(-1), Scalar::ratio(1, 2)),
        );
        let xm = (&self.rect.x_lo + &self.rect.x_hi) * Scalar::ratio(1, 2);
        let left = Rect {
            x_lo: self.rect.x_lo.clone(),
            x_hi: xm.clone(),
            y_lo: self.rect.y_lo.clone(),
            y_hi: self.rect.y_hi.clone(),
        };
        let right = Rect {
            x_lo: xm,
            x_hi: self.rect.x_hi.clone(),
            y_lo: self.rect.y_lo.clone(),
            y_hi: self.rect.y_hi.clone(),
        };
        let branch = |dom: Rect, unit: &Affine| Piece {
            domain: dom,
            map: from_unit.compose(unit).compose(&to_unit),
        };
        if !self.inverse {
            alloc::vec![branch(left, &u_left), branch(right, &u_right)]
        } else {
            let (bottom, top) = self.halves();
            alloc::vec![
                branch(bottom, &u_left.inverse()),
                branch(top, &u_right.inverse()),
            ]
        }
    }
}

fn sc_i(n: i64) -> Scalar {
    Scalar::from_int(n)
}

/// Pointwise folded Baker's map rescaled to a rectangle, undefined on the
/// vertical midline.
pub fn baker_map(rect: &Rect, x: &Point) -> Result<Point, FlowError> {
    if !rect.contains(x) {
        return Err(FlowError::OutsideSupport(x.clone()));
    }
    let stage = BakerStage::new(rect.clone(), false, Scalar::zero(), Scalar::one())
        .expect("unit interval");
    let pieces = stage.time_one_pieces();
    let xm = (&rect.x_lo + &rect.x_hi) * Scalar::ratio(1, 2);
    if x.x == xm {
        return Err(FlowError::VerticalMidline(x.clone()));
    }
    let piece = if x.x < xm { &pieces[0] } else { &pieces[1] };
    Ok(piece.map.apply(x))
}

/// The a.e. inverse of [`baker_map`]. The horizontal midline is resolved by
/// the closure of the lower branch, matching the symbolic branch inversion
/// (`baker_map ∘ baker_inverse` is still the identity there).
pub fn baker_inverse(rect: &Rect, y: &Point) -> Result<Point, FlowError> {
    if !rect.contains(y) {
        return Err(FlowError::OutsideSupport(y.clone()));
    }
    let stage = BakerStage::new(rect.clone(), true, Scalar::zero(), Scalar::one())
        .expect("unit interval");
    let pieces = stage.time_one_pieces();
    let ym = (&rect.y_lo + &rect.y_hi) * Scalar::ratio(1, 2);
    let piece = if y.y <= ym { &pieces[0] } else { &pieces[1] };
    Ok(piece.map.apply(y))
}

/// Builds the transposition flow between two adjacent congruent squares:
/// on the first half of the interval the union rectangle rotates by π, on the
/// second half each square rotates by π individually. The composite time-1
/// map is the rigid swap of the two squares.
///
/// Returns the two stage groups as `(t_begin, t_end, stages)`, with times
/// spanning `[t0, t1]`.
pub fn transposition_stage_pair(
    k1: &Rect,
    k2: &Rect,
    t0: Scalar,
    t1: Scalar,
) -> Result<[(Scalar, Scalar, Vec<RotationStage>); 2], FlowError> {
    if k1.width() != k1.height() || k2.width() != k2.height() || k1.width() != k2.width() {
        return Err(FlowError::NotCongruent);
    }
    if !k1.shares_edge(k2) {
        return Err(FlowError::NotAdjacent);
    }
    // Adjacent congruent squares: the shared edge is full, so the union is a
    // rectangle.
    let union = Rect {
        x_lo: k1.x_lo.clone().min(k2.x_lo.clone()),
        x_hi: k1.x_hi.clone().max(k2.x_hi.clone()),
        y_lo: k1.y_lo.clone().min(k2.y_lo.clone()),
        y_hi: k1.y_hi.clone().max(k2.y_hi.clone()),
    };
    if union.area() != k1.area() + k2.area() {
        return Err(FlowError::NotAdjacent);
    }
    if t0 >= t1 {
        return Err(FlowError::BadInterval);
    }
    let tm = (&t0 + &t1) * Scalar::ratio(1, 2);
    let first = RotationStage::new(union, 2, t0.clone(), tm.clone())?;
    let second_a = RotationStage::new(k1.clone(), 2, tm.clone(), t1.clone())?;
    let second_b = RotationStage::new(k2.clone(), 2, tm.clone(), t1.clone())?;
    Ok([
        (t0, tm.clone(), alloc::vec![first]),
        (tm, t1, alloc::vec![second_a, second_b]),
    ])
}
