//! Exact constructions of divergence-free, measure-preserving flows on the
//! unit square: permutations of grid subsquares, cyclic merges, ergodic and
//! strongly mixing perturbations, and the analysis machinery (total variation,
//! L1 norms, Markov mass models, correlation series) needed to verify their
//! properties with rational arithmetic.
//!
//! Everything in this crate is exact: coordinates, areas, vector-field norms
//! and correlation values are arbitrary-precision rationals. The only
//! approximate layer is the regression in [`mixing::fit_exponential`], which
//! fits decay rates to already-exact data.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod scalar;
pub mod geom;
pub mod perm;
pub mod flows;
pub mod piecewise;
pub mod schedule;
pub mod field;
pub mod construct;
pub mod markov;
pub mod mixing;
pub mod strips;

pub use scalar::Scalar;
pub use geom::{Grid, Point, Rect, RectUnion};
pub use perm::{CycleDecomposition, MergeTree, SquarePermutation};
pub use piecewise::TimeOneMap;
pub use schedule::FlowSchedule;
