//! Compact exact transport for dyadic strip unions.
//!
//! Iterating the pair-mixing time-1 map fragments a dyadic rectangle into
//! `~4^q` disjoint full-width strips; as generic rational rectangles that is
//! hundreds of megabytes of bignum traffic. All coordinates involved are
//! dyadic, every linear part of the map is diagonal with power-of-two
//! entries, and every translation is dyadic, so the transport closes over
//! integer numerators against a common power-of-two denominator. This module
//! runs the *same* piecewise map on that packed representation. It is an
//! alternative encoding of the exact pushforward, not a different algorithm;
//! the tests cross-check it against the generic rectangle transport.

use alloc::vec::Vec;
use core::fmt;

use num_traits::{Signed, ToPrimitive};

use crate::geom::{Grid, Rect, RectUnion};
use crate::piecewise::TimeOneMap;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StripError {
    /// A coordinate or map coefficient is not dyadic (or the linear part is
    /// not diagonal with power-of-two entries).
    NotDyadic,
    ExponentOverflow,
    GridNotPowerOfTwo,
    AreaMismatch,
    Budget { parts: usize, cap: usize },
}

impl fmt::Display for StripError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StripError::NotDyadic => write!(f, "coordinates are not dyadic"),
            StripError::ExponentOverflow => write!(f, "dyadic exponent exceeds u64 range"),
            StripError::GridNotPowerOfTwo => write!(f, "grid side must be a power of two"),
            StripError::AreaMismatch => write!(f, "strip transport failed to conserve area"),
            StripError::Budget { parts, cap } => {
                write!(f, "strip count {parts} exceeds guard cap {cap}")
            }
        }
    }
}

impl core::error::Error for StripError {}

/// Half-open rectangle with coordinates `k / 2^e`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Strip {
    pub x_lo: u64,
    pub x_hi: u64,
    pub y_lo: u64,
    pub y_hi: u64,
}

/// A disjoint union of dyadic rectangles over the denominator `2^e`.
#[derive(Clone, Debug)]
pub struct StripSet {
    pub grid: Grid,
    /// All coordinates are numerators over `2^e`.
    pub e: u32,
    pub strips: Vec<Strip>,
}

fn dyadic_num(s: &Scalar, e: u32) -> Result<i128, StripError> {
    // s * 2^e must be an integer.
    let scaled = s * &Scalar::from_big(num_bigint::BigInt::from(1i128 << e), 1.into());
    if !scaled.is_integer() {
        return Err(StripError::NotDyadic);
    }
    scaled.floor().to_i128().ok_or(StripError::ExponentOverflow)
}

/// Exponent of a scalar that is ±2^k, if it is one.
fn pow2_exponent(s: &Scalar) -> Option<(bool, i32)> {
    use num_traits::One;
    let num = s.numer().abs();
    let den = s.denom().clone();
    let negative = s.is_negative();
    if num.is_one() {
        let bits = den.bits() as i32 - 1;
        if den == num_bigint::BigInt::from(1i128) << bits as u32 {
            return Some((negative, -bits));
        }
        return None;
    }
    if den.is_one() {
        let bits = num.bits() as i32 - 1;
        if num == num_bigint::BigInt::from(1i128) << bits as u32 {
            return Some((negative, bits));
        }
    }
    None
}

struct CompiledPiece {
    // Domain over 2^{e_in}.
    dx_lo: u64,
    dx_hi: u64,
    dy_lo: u64,
    dy_hi: u64,
    // x' = ±2^{ax} x + tx, y' = ±2^{ay} y + ty, over 2^{e_out}.
    neg_x: bool,
    ax: i32,
    tx: i128,
    neg_y: bool,
    ay: i32,
    ty: i128,
}

impl CompiledPiece {
    fn map_interval(
        lo: u64,
        hi: u64,
        neg: bool,
        a: i32,
        t: i128,
        scale: i32,
    ) -> (u64, u64) {
        let sh = scale + a;
        debug_assert!(sh >= 0);
        let f = |v: u64| -> i128 {
            let scaled = (v as i128) << sh;
            if neg {
                t - scaled
            } else {
                t + scaled
            }
        };
        let (a1, a2) = (f(lo), f(hi));
        let (lo2, hi2) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        debug_assert!(lo2 >= 0);
        (lo2 as u64, hi2 as u64)
    }
}

impl StripSet {
    /// Packs a rectangle union with dyadic coordinates, splitting every rect
    /// on grid-row boundaries so each strip lies in one square row.
    pub fn from_rect_union(u: &RectUnion, grid: Grid) -> Result<Self, StripError> {
        if !grid.d.is_power_of_two() {
            return Err(StripError::GridNotPowerOfTwo);
        }
        let mut e = grid.d.trailing_zeros();
        for r in u.parts() {
            for c in [&r.x_lo, &r.x_hi, &r.y_lo, &r.y_hi] {
                let den = c.denom();
                let bits = den.bits() as u32 - 1;
                if *den != num_bigint::BigInt::from(1i128) << bits {
                    return Err(StripError::NotDyadic);
                }
                e = e.max(bits);
            }
        }
        if e > 60 {
            return Err(StripError::ExponentOverflow);
        }
        let side = 1u64 << (e - grid.d.trailing_zeros());
        let mut strips = Vec::new();
        for r in u.parts() {
            let x_lo = dyadic_num(&r.x_lo, e)? as u64;
            let x_hi = dyadic_num(&r.x_hi, e)? as u64;
            let mut y = dyadic_num(&r.y_lo, e)? as u64;
            let y_end = dyadic_num(&r.y_hi, e)? as u64;
            while y < y_end {
                let row_end = (y / side + 1) * side;
                let y_hi = row_end.min(y_end);
                strips.push(Strip {
                    x_lo,
                    x_hi,
                    y_lo: y,
                    y_hi,
                });
                y = y_hi;
            }
        }
        Ok(StripSet { grid, e, strips })
    }

    pub fn len(&self) -> usize {
        self.strips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strips.is_empty()
    }

    fn area_num(&self) -> u128 {
        self.strips
            .iter()
            .map(|s| (s.x_hi - s.x_lo) as u128 * (s.y_hi - s.y_lo) as u128)
            .sum()
    }

    pub fn area(&self) -> Scalar {
        scalar_over_pow2(self.area_num(), 2 * self.e)
    }

    /// Exact mass inside every grid square, by linear index.
    pub fn masses_per_square(&self) -> Vec<Scalar> {
        let d = self.grid.d;
        let side = 1u64 << (self.e - d.trailing_zeros());
        let mut acc = alloc::vec![0u128; d * d];
        for s in &self.strips {
            let mut y = s.y_lo;
            while y < s.y_hi {
                let row = (y / side) as usize;
                let y_hi = ((y / side + 1) * side).min(s.y_hi);
                let h = (y_hi - y) as u128;
                let mut x = s.x_lo;
                while x < s.x_hi {
                    let col = (x / side) as usize;
                    let x_hi = ((x / side + 1) * side).min(s.x_hi);
                    acc[row * d + col] += (x_hi - x) as u128 * h;
                    x = x_hi;
                }
                y = y_hi;
            }
        }
        acc.into_iter()
            .map(|n| scalar_over_pow2(n, 2 * self.e))
            .collect()
    }

    /// Exact measure of the intersection with a dyadic rectangle union.
    pub fn intersection_area(&self, other: &RectUnion) -> Result<Scalar, StripError> {
        let mut total: u128 = 0;
        for r in other.parts() {
            let x_lo = dyadic_num(&r.x_lo, self.e)?;
            let x_hi = dyadic_num(&r.x_hi, self.e)?;
            let y_lo = dyadic_num(&r.y_lo, self.e)?;
            let y_hi = dyadic_num(&r.y_hi, self.e)?;
            for s in &self.strips {
                let xl = (s.x_lo as i128).max(x_lo);
                let xh = (s.x_hi as i128).min(x_hi);
                let yl = (s.y_lo as i128).max(y_lo);
                let yh = (s.y_hi as i128).min(y_hi);
                if xl < xh && yl < yh {
                    total += (xh - xl) as u128 * (yh - yl) as u128;
                }
            }
        }
        Ok(scalar_over_pow2(total, 2 * self.e))
    }

    /// Expands back into rational rectangles (for cross-checks on small sets).
    pub fn to_rect_union(&self) -> RectUnion {
        let make = |n: u64| scalar_over_pow2(n as u128, self.e);
        RectUnion::from_disjoint(
            self.strips
                .iter()
                .map(|s| Rect {
                    x_lo: make(s.x_lo),
                    x_hi: make(s.x_hi),
                    y_lo: make(s.y_lo),
                    y_hi: make(s.y_hi),
                })
                .collect(),
        )
    }

    /// Every strip spans whole squares horizontally (the strip-formation
    /// criterion).
    pub fn is_full_width(&self) -> bool {
        let side = 1u64 << (self.e - self.grid.d.trailing_zeros());
        self.strips
            .iter()
            .all(|s| s.x_lo % side == 0 && s.x_hi % side == 0)
    }
}

fn scalar_over_pow2(num: u128, e: u32) -> Scalar {
    Scalar::from_big(
        num_bigint::BigInt::from(num),
        num_bigint::BigInt::from(1u128) << e,
    )
}

/// Applies the piecewise map to a strip set, exactly, verifying area
/// conservation. Fails with [`StripError::NotDyadic`] when the map is not
/// dyadic-diagonal (callers then use the generic rectangle transport).
pub fn strip_pushforward(
    map: &TimeOneMap,
    set: &StripSet,
    cap: usize,
) -> Result<StripSet, StripError> {
    // Compile pieces: all linear parts must be diagonal ±2^k with dyadic
    // translations and dyadic domains. The working input exponent must also
    // resolve the piece boundaries (fold lines sit between grid lines).
    let mut min_a = 0i32;
    let mut min_b = 0i32;
    let mut t_exp = set.e;
    let mut dom_exp = set.e;
    let mut raw = Vec::with_capacity(map.pieces().len());
    let dyadic_bits = |s: &Scalar| -> Result<u32, StripError> {
        let den = s.denom();
        let bits = den.bits() as u32 - 1;
        if *den != num_bigint::BigInt::from(1i128) << bits {
            return Err(StripError::NotDyadic);
        }
        Ok(bits)
    };
    for p in map.pieces() {
        if !(p.map.m01.is_zero() && p.map.m10.is_zero()) {
            return Err(StripError::NotDyadic);
        }
        let (nx, ax) = pow2_exponent(&p.map.m00).ok_or(StripError::NotDyadic)?;
        let (ny, ay) = pow2_exponent(&p.map.m11).ok_or(StripError::NotDyadic)?;
        min_a = min_a.min(ax);
        min_b = min_b.min(ay);
        for t in [&p.map.tx, &p.map.ty] {
            if !t.is_zero() {
                t_exp = t_exp.max(dyadic_bits(t)?);
            }
        }
        for c in [&p.domain.x_lo, &p.domain.x_hi, &p.domain.y_lo, &p.domain.y_hi] {
            dom_exp = dom_exp.max(dyadic_bits(c)?);
        }
        raw.push((p, nx, ax, ny, ay));
    }
    let e_in = dom_exp;
    let e_out = t_exp.max(e_in + (-min_a).max(-min_b) as u32);
    if e_out > 60 {
        return Err(StripError::ExponentOverflow);
    }
    let in_shift = e_in - set.e;
    let scale = (e_out - e_in) as i32;
    let mut pieces = Vec::with_capacity(raw.len());
    for (p, neg_x, ax, neg_y, ay) in raw {
        pieces.push(CompiledPiece {
            dx_lo: dyadic_num(&p.domain.x_lo, e_in)? as u64,
            dx_hi: dyadic_num(&p.domain.x_hi, e_in)? as u64,
            dy_lo: dyadic_num(&p.domain.y_lo, e_in)? as u64,
            dy_hi: dyadic_num(&p.domain.y_hi, e_in)? as u64,
            neg_x,
            ax,
            tx: dyadic_num(&p.map.tx, e_out)?,
            neg_y,
            ay,
            ty: dyadic_num(&p.map.ty, e_out)?,
        });
    }
    // Bucket pieces by covered grid cell.
    let d = set.grid.d;
    let side = 1u64 << (e_in - d.trailing_zeros());
    let mut buckets: Vec<Vec<u32>> = alloc::vec![Vec::new(); d * d];
    for (idx, p) in pieces.iter().enumerate() {
        let c0 = (p.dx_lo / side) as usize;
        let c1 = ((p.dx_hi - 1) / side) as usize;
        let r0 = (p.dy_lo / side) as usize;
        let r1 = ((p.dy_hi - 1) / side) as usize;
        for r in r0..=r1.min(d - 1) {
            for c in c0..=c1.min(d - 1) {
                buckets[r * d + c].push(idx as u32);
            }
        }
    }
    let mut out: Vec<Strip> = Vec::with_capacity(set.strips.len() * 2);
    for s0 in &set.strips {
        let s = Strip {
            x_lo: s0.x_lo << in_shift,
            x_hi: s0.x_hi << in_shift,
            y_lo: s0.y_lo << in_shift,
            y_hi: s0.y_hi << in_shift,
        };
        let s = &s;
        let row = (s.y_lo / side) as usize;
        let c0 = (s.x_lo / side) as usize;
        let c1 = ((s.x_hi - 1) / side) as usize;
        let mut seen_any = false;
        for c in c0..=c1.min(d - 1) {
            for &pi in &buckets[row * d + c] {
                let p = &pieces[pi as usize];
                let xl = s.x_lo.max(p.dx_lo);
                let xh = s.x_hi.min(p.dx_hi);
                let yl = s.y_lo.max(p.dy_lo);
                let yh = s.y_hi.min(p.dy_hi);
                if xl >= xh || yl >= yh {
                    continue;
                }
                // A strip may meet the same piece from several buckets; only
                // process the bucket containing its left edge.
                if (xl / side) as usize != c {
                    continue;
                }
                seen_any = true;
                let (nx_lo, nx_hi) =
                    CompiledPiece::map_interval(xl, xh, p.neg_x, p.ax, p.tx, scale);
                let (ny_lo, ny_hi) =
                    CompiledPiece::map_interval(yl, yh, p.neg_y, p.ay, p.ty, scale);
                out.push(Strip {
                    x_lo: nx_lo,
                    x_hi: nx_hi,
                    y_lo: ny_lo,
                    y_hi: ny_hi,
                });
                if out.len() > cap {
                    return Err(StripError::Budget {
                        parts: out.len(),
                        cap,
                    });
                }
            }
        }
        if !seen_any {
            return Err(StripError::AreaMismatch);
        }
    }
    let result = StripSet {
        grid: set.grid,
        e: e_out,
        strips: out,
    };
    // Exact conservation check on every transport.
    let lhs = set.area_num() << (2 * (e_out - set.e));
    if lhs != result.area_num() {
        return Err(StripError::AreaMismatch);
    }
    Ok(result)
}
