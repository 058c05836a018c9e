//! Piecewise affine time-1 maps and exact set transport.
//!
//! Every time-1 map produced by a schedule is affine on each piece of a
//! finite rectangle partition of the unit square, with an axis-aligned linear
//! part (diagonal or antidiagonal) of determinant ±1. That closure property
//! keeps composition, inversion and pushforward of rectangle unions exact.

use alloc::vec::Vec;
use core::fmt;

use crate::geom::{Point, Rect, RectUnion};
use crate::scalar::Scalar;

/// An affine map `x -> L x + t` with rational entries.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Affine {
    pub m00: Scalar,
    pub m01: Scalar,
    pub m10: Scalar,
    pub m11: Scalar,
    pub tx: Scalar,
    pub ty: Scalar,
}

impl fmt::Debug for Affine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[[{},{}],[{},{}]]+({},{})",
            self.m00, self.m01, self.m10, self.m11, self.tx, self.ty
        )
    }
}

impl Affine {
    pub fn identity() -> Self {
        Affine {
            m00: Scalar::one(),
            m01: Scalar::zero(),
            m10: Scalar::zero(),
            m11: Scalar::one(),
            tx: Scalar::zero(),
            ty: Scalar::zero(),
        }
    }

    pub fn translation(tx: Scalar, ty: Scalar) -> Self {
        Affine {
            tx,
            ty,
            ..Affine::identity()
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Affine::identity()
    }

    pub fn is_translation(&self) -> bool {
        self.m00 == Scalar::one()
            && self.m11 == Scalar::one()
            && self.m01.is_zero()
            && self.m10.is_zero()
    }

    pub fn det(&self) -> Scalar {
        &(&self.m00 * &self.m11) - &(&self.m01 * &self.m10)
    }

    /// Linear part is diagonal or antidiagonal; such maps send axis-aligned
    /// rectangles to axis-aligned rectangles.
    pub fn is_axis_aligned(&self) -> bool {
        (self.m01.is_zero() && self.m10.is_zero())
            || (self.m00.is_zero() && self.m11.is_zero())
    }

    pub fn apply(&self, p: &Point) -> Point {
        Point::new(
            &(&(&self.m00 * &p.x) + &(&self.m01 * &p.y)) + &self.tx,
            &(&(&self.m10 * &p.x) + &(&self.m11 * &p.y)) + &self.ty,
        )
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Affine) -> Affine {
        let t = self.apply(&Point::new(other.tx.clone(), other.ty.clone()));
        Affine {
            m00: &(&self.m00 * &other.m00) + &(&self.m01 * &other.m10),
            m01: &(&self.m00 * &other.m01) + &(&self.m01 * &other.m11),
            m10: &(&self.m10 * &other.m00) + &(&self.m11 * &other.m10),
            m11: &(&self.m10 * &other.m01) + &(&self.m11 * &other.m11),
            tx: t.x,
            ty: t.y,
        }
    }

    pub fn inverse(&self) -> Affine {
        let det = self.det();
        assert!(!det.is_zero(), "singular affine map");
        let i00 = &self.m11 / &det;
        let i01 = -&self.m01 / &det;
        let i10 = -&self.m10 / &det;
        let i11 = &self.m00 / &det;
        let tx = -(&(&i00 * &self.tx) + &(&i01 * &self.ty));
        let ty = -(&(&i10 * &self.tx) + &(&i11 * &self.ty));
        Affine {
            m00: i00,
            m01: i01,
            m10: i10,
            m11: i11,
            tx,
            ty,
        }
    }

    /// Exact image of a rectangle. Requires an axis-aligned linear part.
    pub fn map_rect(&self, r: &Rect) -> Rect {
        assert!(self.is_axis_aligned(), "rect image is not a rect");
        let a = self.apply(&Point::new(r.x_lo.clone(), r.y_lo.clone()));
        let b = self.apply(&Point::new(r.x_hi.clone(), r.y_hi.clone()));
        Rect {
            x_lo: a.x.clone().min(b.x.clone()),
            x_hi: a.x.max(b.x),
            y_lo: a.y.clone().min(b.y.clone()),
            y_hi: a.y.max(b.y),
        }
    }
}

/// One affine piece of a time-1 map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Piece {
    pub domain: Rect,
    pub map: Affine,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MapError {
    /// The point lies on a piece boundary where the adjacent pieces disagree
    /// (the a.e.-undefined set).
    UndefinedPoint(Point),
    OutsideDomain(Point),
    NotMeasurePreserving,
    NotASquareTranslation { square: usize },
    PartsBudgetExceeded { parts: usize, cap: usize },
    AreaMismatch,
}

impl fmt::Display for MapError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapError::UndefinedPoint(p) => write!(f, "map undefined at {p:?}"),
            MapError::OutsideDomain(p) => write!(f, "{p:?} outside map domain"),
            MapError::NotMeasurePreserving => write!(f, "piece determinant is not ±1"),
            MapError::NotASquareTranslation { square } => {
                write!(f, "grid square {square} is not translated rigidly")
            }
            MapError::PartsBudgetExceeded { parts, cap } => {
                write!(f, "rect count {parts} exceeds guard cap {cap}")
            }
            MapError::AreaMismatch => write!(f, "pushforward failed to conserve area"),
        }
    }
}

impl core::error::Error for MapError {}

/// A measure-preserving piecewise affine bijection of the unit square
/// (defined off a finite union of segments).
#[derive(Clone, Debug)]
pub struct TimeOneMap {
    pieces: Vec<Piece>,
}

impl TimeOneMap {
    pub fn identity() -> Self {
        TimeOneMap {
            pieces: alloc::vec![Piece {
                domain: Rect::unit_square(),
                map: Affine::identity(),
            }],
        }
    }

    /// Builds a map from pieces covering their supports, filling the rest of
    /// the unit square with the identity. Verifies |det| = 1 on every piece.
    pub fn from_pieces_with_identity_complement(pieces: Vec<Piece>) -> Result<Self, MapError> {
        for p in &pieces {
            let d = p.map.det();
            if d != Scalar::one() && d != Scalar::from_int(-1) {
                return Err(MapError::NotMeasurePreserving);
            }
        }
        let mut complement = alloc::vec![Rect::unit_square()];
        for p in &pieces {
            complement = subtract_rect(complement, &p.domain);
        }
        let mut all = pieces;
        for r in complement {
            all.push(Piece {
                domain: r,
                map: Affine::identity(),
            });
        }
        let mut m = TimeOneMap { pieces: all };
        m.coalesce();
        Ok(m)
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// `self ∘ first` (apply `first`, then `self`).
    pub fn compose(&self, first: &TimeOneMap) -> TimeOneMap {
        let mut out = Vec::new();
        for p in &first.pieces {
            let image = p.map.map_rect(&p.domain);
            let inv = p.map.inverse();
            for q in &self.pieces {
                if let Some(overlap) = image.intersect(&q.domain) {
                    let domain = inv.map_rect(&overlap);
                    out.push(Piece {
                        map: q.map.compose(&p.map),
                        domain,
                    });
                }
            }
        }
        let mut m = TimeOneMap { pieces: out };
        m.coalesce();
        m
    }

    pub fn inverse(&self) -> TimeOneMap {
        let pieces = self
            .pieces
            .iter()
            .map(|p| Piece {
                domain: p.map.map_rect(&p.domain),
                map: p.map.inverse(),
            })
            .collect();
        let mut m = TimeOneMap { pieces };
        m.coalesce();
        m
    }

    /// Merges adjacent pieces carrying the same affine map.
    fn coalesce(&mut self) {
        let mut groups: Vec<(Affine, Vec<Rect>)> = Vec::new();
        for p in self.pieces.drain(..) {
            match groups.iter_mut().find(|(m, _)| *m == p.map) {
                Some((_, rects)) => rects.push(p.domain),
                None => groups.push((p.map, alloc::vec![p.domain])),
            }
        }
        // Deterministic order: sort groups by their smallest domain corner.
        for (map, rects) in &mut groups {
            let mut u = RectUnion::from_disjoint(core::mem::take(rects));
            u.normalize();
            *rects = u.parts().to_vec();
            let _ = map;
        }
        groups.sort_by(|a, b| {
            let ka = (&a.1[0].y_lo, &a.1[0].x_lo);
            let kb = (&b.1[0].y_lo, &b.1[0].x_lo);
            ka.cmp(&kb)
        });
        for (map, rects) in groups {
            for domain in rects {
                self.pieces.push(Piece {
                    domain,
                    map: map.clone(),
                });
            }
        }
    }

    /// Applies the map to a point. Points on internal piece boundaries are
    /// accepted only where the adjacent pieces agree.
    pub fn apply(&self, p: &Point) -> Result<Point, MapError> {
        let mut result: Option<Point> = None;
        for piece in &self.pieces {
            if piece.domain.contains(p) {
                let image = piece.map.apply(p);
                match &result {
                    None => result = Some(image),
                    Some(prev) if *prev == image => {}
                    Some(_) => return Err(MapError::UndefinedPoint(p.clone())),
                }
            }
        }
        result.ok_or_else(|| MapError::OutsideDomain(p.clone()))
    }

    /// Exact image (`forward`) or preimage (`inverse`) of a rectangle union.
    /// Area conservation is verified on every call; `cap` guards against
    /// rect-count explosion.
    pub fn pushforward(
        &self,
        u: &RectUnion,
        direction: Direction,
        cap: usize,
    ) -> Result<RectUnion, MapError> {
        let inv;
        let map = match direction {
            Direction::Forward => self,
            Direction::Inverse => {
                inv = self.inverse();
                &inv
            }
        };
        let mut parts = Vec::new();
        for r in u.parts() {
            for piece in &map.pieces {
                if let Some(overlap) = r.intersect(&piece.domain) {
                    parts.push(piece.map.map_rect(&overlap));
                    if parts.len() > cap {
                        return Err(MapError::PartsBudgetExceeded {
                            parts: parts.len(),
                            cap,
                        });
                    }
                }
            }
        }
        let mut out = RectUnion::from_disjoint(parts);
        out.normalize();
        if out.area() != u.area() {
            return Err(MapError::AreaMismatch);
        }
        Ok(out)
    }

    /// Interprets the map as a permutation of grid squares, requiring every
    /// square to be translated rigidly onto a grid square.
    pub fn as_square_permutation(
        &self,
        grid: crate::geom::Grid,
    ) -> Result<crate::perm::SquarePermutation, MapError> {
        let side = grid.side();
        let mut image = Vec::with_capacity(grid.square_count());
        for k in 0..grid.square_count() {
            let sq = grid.square_linear(k).expect("index in range");
            let mut target: Option<usize> = None;
            for piece in &self.pieces {
                let Some(overlap) = sq.intersect(&piece.domain) else {
                    continue;
                };
                if !piece.map.is_translation() {
                    return Err(MapError::NotASquareTranslation { square: k });
                }
                let off_x = &piece.map.tx / &side;
                let off_y = &piece.map.ty / &side;
                if !off_x.is_integer() || !off_y.is_integer() {
                    return Err(MapError::NotASquareTranslation { square: k });
                }
                let img = piece.map.map_rect(&overlap);
                if !img.in_unit_square() {
                    return Err(MapError::NotASquareTranslation { square: k });
                }
                let (i, j) = grid.coords(k);
                let ti = i as i64 + i64::try_from(off_x.floor()).unwrap();
                let tj = j as i64 + i64::try_from(off_y.floor()).unwrap();
                if ti < 0 || tj < 0 || ti >= grid.d as i64 || tj >= grid.d as i64 {
                    return Err(MapError::NotASquareTranslation { square: k });
                }
                let t = grid.linear(ti as usize, tj as usize);
                match target {
                    None => target = Some(t),
                    Some(prev) if prev == t => {}
                    Some(_) => return Err(MapError::NotASquareTranslation { square: k }),
                }
            }
            image.push(target.ok_or(MapError::NotASquareTranslation { square: k })?);
        }
        crate::perm::SquarePermutation::new(grid, image)
            .map_err(|_| MapError::NotASquareTranslation { square: 0 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Bucketed point location for iterated orbit evaluation: pieces are indexed
/// by the cells of a uniform grid, cutting each application from a scan of
/// every piece to a handful of candidates. Semantics match
/// [`TimeOneMap::apply`] exactly (pieces touching a cell boundary register in
/// both cells).
pub struct PointLocator<'a> {
    map: &'a TimeOneMap,
    g: usize,
    buckets: Vec<Vec<u32>>,
}

impl TimeOneMap {
    pub fn locator(&self, g: usize) -> PointLocator<'_> {
        let gs = Scalar::from_int(g as i64);
        let cell = |v: &Scalar| -> usize {
            let f = (v * &gs).floor();
            let f = i64::try_from(f).unwrap_or(0);
            f.clamp(0, g as i64 - 1) as usize
        };
        let mut buckets = alloc::vec![Vec::new(); g * g];
        for (idx, p) in self.pieces.iter().enumerate() {
            let (c0, c1) = (cell(&p.domain.x_lo), cell(&p.domain.x_hi));
            let (r0, r1) = (cell(&p.domain.y_lo), cell(&p.domain.y_hi));
            for r in r0..=r1 {
                for c in c0..=c1 {
                    buckets[r * g + c].push(idx as u32);
                }
            }
        }
        PointLocator {
            map: self,
            g,
            buckets,
        }
    }
}

impl PointLocator<'_> {
    pub fn apply(&self, p: &Point) -> Result<Point, MapError> {
        let gs = Scalar::from_int(self.g as i64);
        let cell = |v: &Scalar| -> usize {
            let f = (v * &gs).floor();
            let f = i64::try_from(f).unwrap_or(0);
            f.clamp(0, self.g as i64 - 1) as usize
        };
        let bucket = &self.buckets[cell(&p.y) * self.g + cell(&p.x)];
        let mut result: Option<Point> = None;
        for &idx in bucket {
            let piece = &self.map.pieces[idx as usize];
            if piece.domain.contains(p) {
                let image = piece.map.apply(p);
                match &result {
                    None => result = Some(image),
                    Some(prev) if *prev == image => {}
                    Some(_) => return Err(MapError::UndefinedPoint(p.clone())),
                }
            }
        }
        result.ok_or_else(|| MapError::OutsideDomain(p.clone()))
    }
}

/// Removes `cut` from every rect in `region`, splitting into up to four
/// remainder rects each.
pub fn subtract_rect(region: Vec<Rect>, cut: &Rect) -> Vec<Rect> {
    let mut out = Vec::with_capacity(region.len());
    for r in region {
        let Some(overlap) = r.intersect(cut) else {
            out.push(r);
            continue;
        };
        if overlap.y_hi < r.y_hi {
            out.push(Rect {
                x_lo: r.x_lo.clone(),
                x_hi: r.x_hi.clone(),
                y_lo: overlap.y_hi.clone(),
                y_hi: r.y_hi.clone(),
            });
        }
        if r.y_lo < overlap.y_lo {
            out.push(Rect {
                x_lo: r.x_lo.clone(),
                x_hi: r.x_hi.clone(),
                y_lo: r.y_lo.clone(),
                y_hi: overlap.y_lo.clone(),
            });
        }
        if r.x_lo < overlap.x_lo {
            out.push(Rect {
                x_lo: r.x_lo.clone(),
                x_hi: overlap.x_lo.clone(),
                y_lo: overlap.y_lo.clone(),
                y_hi: overlap.y_hi.clone(),
            });
        }
        if overlap.x_hi < r.x_hi {
            out.push(Rect {
                x_lo: overlap.x_hi.clone(),
                x_hi: r.x_hi.clone(),
                y_lo: overlap.y_lo,
                y_hi: overlap.y_hi,
            });
        }
    }
    out
}
