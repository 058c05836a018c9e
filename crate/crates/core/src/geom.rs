//! Axis-aligned rational geometry: points, rectangles, grids and disjoint
//! rectangle unions.
//!
//! Squares and rectangles are closed; maps are defined on interiors and
//! boundaries carry measure zero, so set operations treat edge-only contact
//! as disjoint.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::scalar::Scalar;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Point {
    pub x: Scalar,
    pub y: Scalar,
}

impl Point {
    pub fn new(x: Scalar, y: Scalar) -> Self {
        Point { x, y }
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// An axis-aligned rectangle with positive width and height.
///
/// Coordinates are unrestricted rationals: grid squares and transport all
/// live inside the unit square (see [`Rect::in_unit_square`]), but the
/// total-variation identities for rotation fields are stated over the whole
/// plane, so the field layer accepts arbitrary rectangles.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x_lo: Scalar,
    pub x_hi: Scalar,
    pub y_lo: Scalar,
    pub y_hi: Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GeomError {
    EmptyRect(String),
    IndexOutOfRange { d: usize, i: usize, j: usize },
    InteriorOverlap,
    ZeroRefinement,
}

impl fmt::Display for GeomError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeomError::EmptyRect(s) => write!(f, "degenerate rectangle: {s}"),
            GeomError::IndexOutOfRange { d, i, j } => {
                write!(f, "square ({i},{j}) out of range for grid {d}")
            }
            GeomError::InteriorOverlap => write!(f, "rectangles overlap with positive area"),
            GeomError::ZeroRefinement => write!(f, "refinement factor must be positive"),
        }
    }
}

impl core::error::Error for GeomError {}

impl Rect {
    pub fn new(x_lo: Scalar, x_hi: Scalar, y_lo: Scalar, y_hi: Scalar) -> Result<Self, GeomError> {
        if x_lo >= x_hi || y_lo >= y_hi {
            return Err(GeomError::EmptyRect(alloc::format!(
                "[{x_lo},{x_hi}]x[{y_lo},{y_hi}]"
            )));
        }
        Ok(Rect {
            x_lo,
            x_hi,
            y_lo,
            y_hi,
        })
    }

    /// Convenience constructor from integer-pair fractions.
    pub fn of(x_lo: (i64, i64), x_hi: (i64, i64), y_lo: (i64, i64), y_hi: (i64, i64)) -> Self {
        Rect::new(
            Scalar::ratio(x_lo.0, x_lo.1),
            Scalar::ratio(x_hi.0, x_hi.1),
            Scalar::ratio(y_lo.0, y_lo.1),
            Scalar::ratio(y_hi.0, y_hi.1),
        )
        .expect("nonempty rect")
    }

    pub fn unit_square() -> Self {
        Rect::new(Scalar::zero(), Scalar::one(), Scalar::zero(), Scalar::one()).unwrap()
    }

    pub fn width(&self) -> Scalar {
        &self.x_hi - &self.x_lo
    }

    pub fn height(&self) -> Scalar {
        &self.y_hi - &self.y_lo
    }

    pub fn area(&self) -> Scalar {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        let half = Scalar::ratio(1, 2);
        Point::new(
            (&self.x_lo + &self.x_hi) * half.clone(),
            (&self.y_lo + &self.y_hi) * half,
        )
    }

    pub fn in_unit_square(&self) -> bool {
        !self.x_lo.is_negative()
            && !self.y_lo.is_negative()
            && self.x_hi <= Scalar::one()
            && self.y_hi <= Scalar::one()
    }

    /// Closed containment.
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x_lo && p.x <= self.x_hi && p.y >= self.y_lo && p.y <= self.y_hi
    }

    pub fn contains_interior(&self, p: &Point) -> bool {
        p.x > self.x_lo && p.x < self.x_hi && p.y > self.y_lo && p.y < self.y_hi
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.x_lo <= other.x_lo
            && other.x_hi <= self.x_hi
            && self.y_lo <= other.y_lo
            && other.y_hi <= self.y_hi
    }

    /// Intersection with positive area, `None` on boundary-only contact.
    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let x_lo = self.x_lo.clone().max(other.x_lo.clone());
        let x_hi = self.x_hi.clone().min(other.x_hi.clone());
        let y_lo = self.y_lo.clone().max(other.y_lo.clone());
        let y_hi = self.y_hi.clone().min(other.y_hi.clone());
        if x_lo < x_hi && y_lo < y_hi {
            Some(Rect {
                x_lo,
                x_hi,
                y_lo,
                y_hi,
            })
        } else {
            None
        }
    }

    pub fn overlaps_interior(&self, other: &Rect) -> bool {
        self.intersect(other).is_some()
    }

    /// Two rects sharing a full or partial edge (returns false on interior
    /// overlap or corner-only contact).
    pub fn shares_edge(&self, other: &Rect) -> bool {
        if self.overlaps_interior(other) {
            return false;
        }
        let x_touch = self.x_hi == other.x_lo || other.x_hi == self.x_lo;
        let y_overlap = self.y_lo.clone().max(other.y_lo.clone())
            < self.y_hi.clone().min(other.y_hi.clone());
        if x_touch && y_overlap {
            return true;
        }
        let y_touch = self.y_hi == other.y_lo || other.y_hi == self.y_lo;
        let x_overlap = self.x_lo.clone().max(other.x_lo.clone())
            < self.x_hi.clone().min(other.x_hi.clone());
        y_touch && x_overlap
    }
}

impl fmt::Debug for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{},{}]x[{},{}]",
            self.x_lo, self.x_hi, self.y_lo, self.y_hi
        )
    }
}

/// Uniform `D x D` subdivision of the unit square.
///
/// Square `(i, j)` is `[i/D,(i+1)/D] x [j/D,(j+1)/D]`; linear indices are
/// row-major with `x` fastest: `k = j*D + i`.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub struct Grid {
    pub d: usize,
}

impl Grid {
    pub fn new(d: usize) -> Self {
        assert!(d > 0, "grid subdivision must be positive");
        Grid { d }
    }

    pub fn square_count(&self) -> usize {
        self.d * self.d
    }

    pub fn side(&self) -> Scalar {
        Scalar::ratio(1, self.d as i64)
    }

    pub fn linear(&self, i: usize, j: usize) -> usize {
        j * self.d + i
    }

    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.d, k / self.d)
    }

    pub fn square(&self, i: usize, j: usize) -> Result<Rect, GeomError> {
        if i >= self.d || j >= self.d {
            return Err(GeomError::IndexOutOfRange { d: self.d, i, j });
        }
        let d = self.d as i64;
        Ok(Rect::of(
            (i as i64, d),
            (i as i64 + 1, d),
            (j as i64, d),
            (j as i64 + 1, d),
        ))
    }

    pub fn square_linear(&self, k: usize) -> Result<Rect, GeomError> {
        let (i, j) = self.coords(k);
        self.square(i, j)
    }

    /// Center of square `k`.
    pub fn center(&self, k: usize) -> Point {
        let (i, j) = self.coords(k);
        let d = self.d as i64;
        Point::new(
            Scalar::ratio(2 * i as i64 + 1, 2 * d),
            Scalar::ratio(2 * j as i64 + 1, 2 * d),
        )
    }

    /// Linear indices of the edge-adjacent neighbours of square `k`.
    pub fn neighbors(&self, k: usize) -> Vec<usize> {
        let (i, j) = self.coords(k);
        let mut out = Vec::with_capacity(4);
        if i > 0 {
            out.push(self.linear(i - 1, j));
        }
        if i + 1 < self.d {
            out.push(self.linear(i + 1, j));
        }
        if j > 0 {
            out.push(self.linear(i, j - 1));
        }
        if j + 1 < self.d {
            out.push(self.linear(i, j + 1));
        }
        out
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        let (ia, ja) = self.coords(a);
        let (ib, jb) = self.coords(b);
        let di = ia.abs_diff(ib);
        let dj = ja.abs_diff(jb);
        di + dj == 1
    }
}

/// A finite union of rectangles with pairwise disjoint interiors.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct RectUnion {
    parts: Vec<Rect>,
}

impl RectUnion {
    pub fn empty() -> Self {
        RectUnion { parts: Vec::new() }
    }

    /// Validating constructor: rejects inputs with interior overlap.
    pub fn new(parts: Vec<Rect>) -> Result<Self, GeomError> {
        let u = RectUnion { parts };
        if u.has_interior_overlap() {
            return Err(GeomError::InteriorOverlap);
        }
        Ok(u)
    }

    /// For internal transport paths where disjointness holds by construction.
    /// Debug builds still verify.
    pub fn from_disjoint(parts: Vec<Rect>) -> Self {
        let u = RectUnion { parts };
        debug_assert!(!u.has_interior_overlap());
        u
    }

    pub fn single(r: Rect) -> Self {
        RectUnion {
            parts: alloc::vec![r],
        }
    }

    pub fn parts(&self) -> &[Rect] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Exact Lebesgue measure of the union.
    pub fn area(&self) -> Scalar {
        let mut total = Scalar::zero();
        for r in &self.parts {
            total += r.area();
        }
        total
    }

    pub fn contains_point(&self, p: &Point) -> bool {
        self.parts.iter().any(|r| r.contains(p))
    }

    /// Total measure of the overlap with a rectangle.
    pub fn mass_in(&self, r: &Rect) -> Scalar {
        let mut total = Scalar::zero();
        for part in &self.parts {
            if let Some(x) = part.intersect(r) {
                total += x.area();
            }
        }
        total
    }

    /// Exact measure of the intersection with another disjoint union.
    pub fn intersection_area(&self, other: &RectUnion) -> Scalar {
        let mut total = Scalar::zero();
        for a in &self.parts {
            for b in other.parts() {
                if let Some(x) = a.intersect(b) {
                    total += x.area();
                }
            }
        }
        total
    }

    fn has_interior_overlap(&self) -> bool {
        // Plane sweep over x, interval overlap check in y.
        let n = self.parts.len();
        if n < 2 {
            return false;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.parts[a].x_lo.cmp(&self.parts[b].x_lo));
        let mut active: Vec<usize> = Vec::new();
        for &idx in &order {
            let r = &self.parts[idx];
            active.retain(|&a| self.parts[a].x_hi > r.x_lo);
            for &a in &active {
                let o = &self.parts[a];
                if o.y_lo.clone().max(r.y_lo.clone()) < o.y_hi.clone().min(r.y_hi.clone()) {
                    return true;
                }
            }
            active.push(idx);
        }
        false
    }

    /// Coalesces parts: merges rectangles that share a full edge. Keeps the
    /// part count small under iterated Baker transport, where images of
    /// neighbouring strips frequently re-join.
    pub fn normalize(&mut self) {
        loop {
            let mut merged = false;
            // Merge vertically (same x-extent, stacked), then horizontally.
            self.parts.sort_by(|a, b| {
                (&a.x_lo, &a.x_hi, &a.y_lo)
                    .cmp(&(&b.x_lo, &b.x_hi, &b.y_lo))
            });
            let mut out: Vec<Rect> = Vec::with_capacity(self.parts.len());
            for r in self.parts.drain(..) {
                if let Some(last) = out.last_mut() {
                    if last.x_lo == r.x_lo && last.x_hi == r.x_hi && last.y_hi == r.y_lo {
                        last.y_hi = r.y_hi;
                        merged = true;
                        continue;
                    }
                }
                out.push(r);
            }
            self.parts = out;
            self.parts.sort_by(|a, b| {
                (&a.y_lo, &a.y_hi, &a.x_lo)
                    .cmp(&(&b.y_lo, &b.y_hi, &b.x_lo))
            });
            let mut out: Vec<Rect> = Vec::with_capacity(self.parts.len());
            for r in self.parts.drain(..) {
                if let Some(last) = out.last_mut() {
                    if last.y_lo == r.y_lo && last.y_hi == r.y_hi && last.x_hi == r.x_lo {
                        last.x_hi = r.x_hi;
                        merged = true;
                        continue;
                    }
                }
                out.push(r);
            }
            self.parts = out;
            if !merged {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sc;

    #[test]
    fn intersect_axis_aligned_overlap() {
        let a = Rect::of((0, 1), (1, 2), (0, 1), (1, 1));
        let b = Rect::of((1, 4), (3, 4), (0, 1), (1, 1));
        let x = a.intersect(&b).unwrap();
        assert_eq!(x, Rect::of((1, 4), (1, 2), (0, 1), (1, 1)));
        // Commutative.
        assert_eq!(b.intersect(&a).unwrap(), x);
        // Idempotent.
        assert_eq!(x.intersect(&x).unwrap(), x);
    }

    #[test]
    fn intersect_boundary_contact_is_empty() {
        let a = Rect::of((0, 1), (1, 2), (0, 1), (1, 2));
        let b = Rect::of((1, 2), (1, 1), (1, 2), (1, 1));
        assert!(a.intersect(&b).is_none());
        assert!(a.shares_edge(&b) == false); // corner-only contact
    }

    #[test]
    fn grid_square_of_grid4_intersection() {
        let g = Grid::new(4);
        let s = g.square(0, 0).unwrap();
        let b = Rect::of((1, 8), (1, 1), (1, 8), (1, 1));
        let x = s.intersect(&b).unwrap();
        assert_eq!(x, Rect::of((1, 8), (1, 4), (1, 8), (1, 4)));
    }

    #[test]
    fn grid_squares() {
        let g = Grid::new(2);
        assert_eq!(
            g.square(0, 0).unwrap(),
            Rect::of((0, 1), (1, 2), (0, 1), (1, 2))
        );
        assert_eq!(
            g.square(1, 1).unwrap(),
            Rect::of((1, 2), (1, 1), (1, 2), (1, 1))
        );
        let g4 = Grid::new(4);
        assert_eq!(
            g4.square(2, 0).unwrap(),
            Rect::of((1, 2), (3, 4), (0, 1), (1, 4))
        );
        assert!(g4.square(4, 0).is_err());
    }

    #[test]
    fn union_area_examples() {
        let half = RectUnion::new(alloc::vec![Rect::of((0, 1), (1, 2), (0, 1), (1, 1))]).unwrap();
        assert_eq!(half.area(), sc!(1, 2));

        let quarters = RectUnion::new(alloc::vec![
            Rect::of((0, 1), (1, 2), (0, 1), (1, 2)),
            Rect::of((1, 2), (1, 1), (1, 2), (1, 1)),
        ])
        .unwrap();
        assert_eq!(quarters.area(), sc!(1, 2));
    }

    #[test]
    fn union_area_of_full_grid_partition() {
        for d in [2usize, 3, 5] {
            let g = Grid::new(d);
            let parts: Vec<Rect> = (0..g.square_count())
                .map(|k| g.square_linear(k).unwrap())
                .collect();
            let u = RectUnion::new(parts).unwrap();
            assert_eq!(u.area(), Scalar::one());
        }
    }

    #[test]
    fn union_rejects_interior_overlap() {
        let r1 = Rect::of((0, 1), (1, 2), (0, 1), (1, 1));
        let r2 = Rect::of((1, 4), (3, 4), (0, 1), (1, 1));
        assert!(matches!(
            RectUnion::new(alloc::vec![r1, r2]),
            Err(GeomError::InteriorOverlap)
        ));
    }

    #[test]
    fn normalize_merges_stacked_strips() {
        let mut u = RectUnion::from_disjoint(alloc::vec![
            Rect::of((0, 1), (1, 1), (0, 1), (1, 4)),
            Rect::of((0, 1), (1, 1), (1, 4), (1, 2)),
            Rect::of((0, 1), (1, 1), (1, 2), (1, 1)),
        ]);
        u.normalize();
        assert_eq!(u.len(), 1);
        assert_eq!(u.parts()[0], Rect::unit_square());
    }
}
