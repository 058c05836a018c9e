//! The perturbation pipelines: realizing a square permutation as a staged
//! flow, merging its cycles into a single cycle inside a freeze window,
//! inserting the mixer stages that make the time-1 map ergodic or strongly
//! mixing, and the rotation rectifier for diagonal affine tilings.
//!
//! Every construction returns both the perturbed schedule and the matching
//! base schedule on the same timeline, so field differences cancel on the
//! shared stages and the perturbation cost is exactly measurable.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_integer::Integer;
use num_traits::ToPrimitive;

use crate::field::{field_at, field_difference, l1_norm, total_variation, FieldError};
use crate::flows::{transposition_stage_pair, BakerStage, FlowError};
use crate::geom::{Grid, Rect};
use crate::perm::{
    build_merge_tree, merge_within_square, snake_cycle, MergeTree, PermError,
    SquarePermutation,
};
use crate::piecewise::{Affine, MapError, Piece, TimeOneMap};
use crate::scalar::Scalar;
use crate::schedule::{FlowSchedule, ScheduleError, Stage, StageGroup};

#[derive(Debug, Clone)]
pub enum ConstructError {
    BadParams(String),
    Perm(PermError),
    Schedule(ScheduleError),
    Flow(FlowError),
    Field(FieldError),
    Map(MapError),
    NotSingleCycle,
    DeltaTooLarge,
    RefinementOverflow,
    ImagesDoNotTile,
}

impl fmt::Display for ConstructError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstructError::BadParams(s) => write!(f, "invalid parameters: {s}"),
            ConstructError::Perm(e) => write!(f, "{e}"),
            ConstructError::Schedule(e) => write!(f, "{e}"),
            ConstructError::Flow(e) => write!(f, "{e}"),
            ConstructError::Field(e) => write!(f, "{e}"),
            ConstructError::Map(e) => write!(f, "{e}"),
            ConstructError::NotSingleCycle => {
                write!(f, "input schedule is not a single cycle of squares")
            }
            ConstructError::DeltaTooLarge => {
                write!(f, "freeze window leaves no room for the suffix")
            }
            ConstructError::RefinementOverflow => write!(f, "common refinement too large"),
            ConstructError::ImagesDoNotTile => write!(f, "piece images do not tile the square"),
        }
    }
}

impl core::error::Error for ConstructError {}

macro_rules! from_err {
    ($variant:ident, $ty:ty) => {
        impl From<$ty> for ConstructError {
            fn from(e: $ty) -> Self {
                ConstructError::$variant(e)
            }
        }
    };
}
from_err!(Perm, PermError);
from_err!(Schedule, ScheduleError);
from_err!(Flow, FlowError);
from_err!(Field, FieldError);
from_err!(Map, MapError);

/// Which pipeline a construction run targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pipeline {
    Cyclic,
    Ergodic,
    StrongMixing,
}

#[derive(Clone, Debug)]
pub struct ConstructionParams {
    pub d: usize,
    pub m: usize,
    pub delta: Scalar,
    pub pipeline: Pipeline,
}

impl ConstructionParams {
    pub fn new(d: usize, m: usize, delta: Scalar, pipeline: Pipeline) -> Result<Self, ConstructError> {
        if d < 2 {
            return Err(ConstructError::BadParams(alloc::format!("D = {d} < 2")));
        }
        if m < 4 || !m.is_power_of_two() {
            return Err(ConstructError::BadParams(alloc::format!(
                "M = {m} must be a power of two ≥ 4"
            )));
        }
        if !delta.is_positive() || delta >= Scalar::ratio(1, 2) {
            return Err(ConstructError::BadParams(alloc::format!(
                "delta = {delta} must lie in (0, 1/2)"
            )));
        }
        Ok(ConstructionParams {
            d,
            m,
            delta,
            pipeline,
        })
    }
}

/// Schedules one adjacent-square transposition as its two stage groups
/// inside `[t0, t1]`.
fn transposition_groups(
    k1: &Rect,
    k2: &Rect,
    t0: &Scalar,
    t1: &Scalar,
) -> Result<Vec<StageGroup>, ConstructError> {
    let [first, second] = transposition_stage_pair(k1, k2, t0.clone(), t1.clone())?;
    Ok(alloc::vec![
        StageGroup::new(
            first.0,
            first.1,
            first.2.into_iter().map(Stage::Rotation).collect(),
        )?,
        StageGroup::new(
            second.0,
            second.1,
            second.2.into_iter().map(Stage::Rotation).collect(),
        )?,
    ])
}

/// Schedules a set of disjoint transpositions concurrently in `[t0, t1]`:
/// all pair unions rotate by π in the first half, all squares in the second.
fn concurrent_transposition_groups(
    grid: Grid,
    pairs: &[(usize, usize)],
    t0: &Scalar,
    t1: &Scalar,
) -> Result<Vec<StageGroup>, ConstructError> {
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let tm = (t0 + t1) * Scalar::ratio(1, 2);
    let mut unions = Vec::with_capacity(pairs.len());
    let mut squares = Vec::with_capacity(2 * pairs.len());
    for &(a, b) in pairs {
        let ka = grid.square_linear(a).map_err(|_| {
            ConstructError::BadParams(alloc::format!("square {a} outside grid"))
        })?;
        let kb = grid.square_linear(b).map_err(|_| {
            ConstructError::BadParams(alloc::format!("square {b} outside grid"))
        })?;
        let [first, second] = transposition_stage_pair(&ka, &kb, t0.clone(), tm.clone())?;
        // Keep only the union stage from the canonical split; retime the
        // square stages into the shared second half.
        let union_stage = first.2.into_iter().next().expect("union stage");
        let union_stage = crate::flows::RotationStage {
            t_begin: t0.clone(),
            t_end: tm.clone(),
            ..union_stage
        };
        unions.push(Stage::Rotation(union_stage));
        for s in second.2 {
            squares.push(Stage::Rotation(crate::flows::RotationStage {
                t_begin: tm.clone(),
                t_end: t1.clone(),
                ..s
            }));
        }
    }
    Ok(alloc::vec![
        StageGroup::new(t0.clone(), tm.clone(), unions)?,
        StageGroup::new(tm, t1.clone(), squares)?,
    ])
}

/// Realizes a square permutation as a flow on `[t0, t1]` by a sequence of
/// adjacent transpositions: each cycle factors into transpositions of
/// consecutive elements, and a non-adjacent transposition is conjugated
/// along an axis-then-axis grid path.
pub fn permutation_schedule(
    p: &SquarePermutation,
    t0: &Scalar,
    t1: &Scalar,
) -> Result<FlowSchedule, ConstructError> {
    let grid = p.grid();
    let mut swaps: Vec<(usize, usize)> = Vec::new();
    for cycle in p.cycle_decompose().cycles() {
        if cycle.len() < 2 {
            continue;
        }
        // (a1 a2)(a2 a3)...(a_{k-1} a_k) with the rightmost factor first.
        for w in (0..cycle.len() - 1).rev() {
            append_adjacent_swaps(grid, cycle[w], cycle[w + 1], &mut swaps);
        }
    }
    if swaps.is_empty() {
        return Ok(FlowSchedule::identity());
    }
    let count = Scalar::from_int(swaps.len() as i64);
    let span = t1 - t0;
    let mut groups = Vec::with_capacity(2 * swaps.len());
    for (w, (a, b)) in swaps.iter().enumerate() {
        let s0 = t0 + &(&span * &Scalar::from_int(w as i64) / &count);
        let s1 = t0 + &(&span * &Scalar::from_int(w as i64 + 1) / &count);
        let ka = grid.square_linear(*a).expect("index valid");
        let kb = grid.square_linear(*b).expect("index valid");
        groups.extend(transposition_groups(&ka, &kb, &s0, &s1)?);
    }
    Ok(FlowSchedule::from_groups(groups)?)
}

/// Expands the abstract transposition `(a b)` into adjacent swaps along an
/// x-then-y grid path, in execution order.
fn append_adjacent_swaps(grid: Grid, a: usize, b: usize, out: &mut Vec<(usize, usize)>) {
    let (ax, ay) = grid.coords(a);
    let (bx, by) = grid.coords(b);
    let mut path = alloc::vec![a];
    let mut x = ax;
    while x != bx {
        x = if bx > x { x + 1 } else { x - 1 };
        path.push(grid.linear(x, ay));
    }
    let mut y = ay;
    while y != by {
        y = if by > y { y + 1 } else { y - 1 };
        path.push(grid.linear(bx, y));
    }
    // (a b) = w (p_{m-1} p_m) w^{-1} with w the chain of path swaps.
    for w in 0..path.len() - 1 {
        out.push((path[w], path[w + 1]));
    }
    for w in (0..path.len().saturating_sub(2)).rev() {
        out.push((path[w], path[w + 1]));
    }
}

/// The snake cyclic permutation of `Grid(d)` realized as a flow on
/// `[t0, t1]` (a single `d^2`-cycle along the closed snake enumeration).
pub fn snake_cycle_schedule(
    d: usize,
    t0: &Scalar,
    t1: &Scalar,
) -> Result<(SquarePermutation, FlowSchedule), ConstructError> {
    let cyc = snake_cycle(d)?;
    let p = SquarePermutation::from_cycle(Grid::new(d), &cyc)?;
    let schedule = permutation_schedule(&p, t0, t1)?;
    Ok((p, schedule))
}

/// Output of [`build_cyclic`].
#[derive(Clone, Debug)]
pub struct CyclicConstruction {
    /// Merge rounds + tree transpositions in `[0, δ]`, permutation suffix in
    /// `[δ, 1]`.
    pub schedule: FlowSchedule,
    /// Same timeline without the tree transpositions: the base against which
    /// the cycle-joining cost is measured.
    pub base: FlowSchedule,
    /// Same timeline with neither merge rounds nor tree transpositions.
    pub base_unmerged: FlowSchedule,
    pub fine_grid: Grid,
    pub tree: MergeTree,
    /// The time-1 permutation of fine-grid squares (a single cycle).
    pub final_perm: SquarePermutation,
    /// Order of squares along the single cycle, starting from square 0.
    pub cycle: Vec<usize>,
}

/// Merges the lifted permutation into a single `D^2 M^2`-cycle inside the
/// freeze window `[0, δ]`, then realizes `p` on `[δ, 1]`.
///
/// The pairing rounds of each coarse cycle run concurrently in `[0, δ/2]`
/// (round `s` in the dyadically shrinking sub-interval, as the intermediate
/// total variation balance requires), and the spanning-tree transpositions
/// joining distinct cycles run in `[δ/2, δ]`.
pub fn build_cyclic(
    p: &SquarePermutation,
    params: &ConstructionParams,
) -> Result<CyclicConstruction, ConstructError> {
    if p.grid().d != params.d {
        return Err(ConstructError::BadParams(alloc::format!(
            "permutation grid {} does not match D = {}",
            p.grid().d,
            params.d
        )));
    }
    let m = params.m;
    let delta = &params.delta;
    let coarse = p.grid();
    let fine = Grid::new(coarse.d * m);
    let lifted = p.lift_to_refinement(m)?;
    let decomposition = p.cycle_decompose();

    // Round pairs per round index, across all coarse cycles.
    let q = m.trailing_zeros() as usize;
    let mut rounds: Vec<Vec<(usize, usize)>> = alloc::vec![Vec::new(); 2 * q];
    for cycle in decomposition.cycles() {
        let leader = cycle[0];
        let (_, cycle_rounds) = merge_within_square(&lifted, coarse, leader, m)?;
        for (s, pairs) in cycle_rounds.into_iter().enumerate() {
            rounds[s].extend(pairs);
        }
    }

    let tree = build_merge_tree(&decomposition, coarse, m)?;
    let tree_pairs = tree.transposition_pairs();

    // Stage groups: merge rounds in [0, δ/2] on the dyadic subdivision.
    let half = Scalar::ratio(1, 2);
    let merge_end = delta * &half;
    let mut merge_groups: Vec<StageGroup> = Vec::new();
    for (s, pairs) in rounds.iter().enumerate() {
        let lo = &merge_end - &(&merge_end / &Scalar::from_int(1i64 << s));
        let hi = &merge_end - &(&merge_end / &Scalar::from_int(2i64 << s));
        merge_groups.extend(concurrent_transposition_groups(fine, pairs, &lo, &hi)?);
    }
    let tree_groups = concurrent_transposition_groups(fine, &tree_pairs, &merge_end, delta)?;
    let suffix = permutation_schedule(p, delta, &Scalar::one())?;

    let assemble = |with_merge: bool, with_tree: bool| -> Result<FlowSchedule, ConstructError> {
        let mut groups: Vec<StageGroup> = Vec::new();
        if with_merge {
            groups.extend(merge_groups.iter().cloned());
        }
        if with_tree {
            groups.extend(tree_groups.iter().cloned());
        }
        groups.extend(suffix.groups().iter().cloned());
        Ok(FlowSchedule::from_groups(groups)?)
    };
    let schedule = assemble(true, true)?;
    let base = assemble(true, false)?;
    let base_unmerged = assemble(false, false)?;

    // Permutation-level composite: merges, then tree swaps, then p.
    let mut swaps = SquarePermutation::identity(fine);
    for pairs in &rounds {
        let round_perm = SquarePermutation::identity(fine).apply_transpositions(pairs)?;
        swaps = round_perm.compose(&swaps);
    }
    let tree_perm = SquarePermutation::identity(fine).apply_transpositions(&tree_pairs)?;
    swaps = tree_perm.compose(&swaps);
    let final_perm = lifted.compose(&swaps);
    let cycles = final_perm.cycle_decompose();
    if !cycles.is_single_cycle() || cycles.cycles()[0].len() != fine.square_count() {
        return Err(ConstructError::NotSingleCycle);
    }
    let cycle = cycles.cycles()[0].clone();
    Ok(CyclicConstruction {
        schedule,
        base,
        base_unmerged,
        fine_grid: fine,
        tree,
        final_perm,
        cycle,
    })
}

/// Output of [`build_ergodic`].
#[derive(Clone, Debug)]
pub struct ErgodicConstruction {
    /// Mixer stage in the leader square on `[0, δ]`, cyclic flow on `[δ, 1]`.
    pub schedule: FlowSchedule,
    /// Identity on `[0, δ]`, same cyclic flow on `[δ, 1]`.
    pub base: FlowSchedule,
    pub fine_grid: Grid,
    /// The square carrying the mixer (the one containing index 0).
    pub leader: usize,
    pub cycle_length: usize,
}

/// Inserts the folded Baker's map into the cycle leader square. The input
/// schedule's time-1 map must be a single cycle of fine-grid squares.
pub fn build_ergodic(
    cyclic: &FlowSchedule,
    fine_grid: Grid,
    delta: &Scalar,
) -> Result<ErgodicConstruction, ConstructError> {
    let perm = cyclic
        .time_one_map()
        .as_square_permutation(fine_grid)
        .map_err(|_| ConstructError::NotSingleCycle)?;
    let cycles = perm.cycle_decompose();
    if !cycles.is_single_cycle() {
        return Err(ConstructError::NotSingleCycle);
    }
    if !delta.is_positive() || *delta >= Scalar::one() {
        return Err(ConstructError::DeltaTooLarge);
    }
    let leader = 0usize;
    let rect = fine_grid.square_linear(leader).expect("leader square");
    let baker = BakerStage::new(rect, false, Scalar::zero(), delta.clone())?;
    let mixer_group = StageGroup::new(
        Scalar::zero(),
        delta.clone(),
        alloc::vec![Stage::Baker(baker)],
    )?;
    let shifted = cyclic.retimed(delta, &Scalar::one())?;
    let mut groups = alloc::vec![mixer_group];
    groups.extend(shifted.groups().iter().cloned());
    let schedule = FlowSchedule::from_groups(groups)?;
    Ok(ErgodicConstruction {
        schedule,
        base: shifted,
        fine_grid,
        leader,
        cycle_length: fine_grid.square_count(),
    })
}

/// Output of [`build_strong_mixing`].
#[derive(Clone, Debug)]
pub struct MixingConstruction {
    /// Pair mixers on `[0, δ]` and `[δ, 2δ]`, cyclic flow on `[2δ, 1]`.
    pub schedule: FlowSchedule,
    /// Identity on `[0, 2δ]`, same cyclic flow on `[2δ, 1]`.
    pub base: FlowSchedule,
    pub fine_grid: Grid,
    /// Closed snake enumeration used for the pairings.
    pub snake: Vec<usize>,
    /// The cyclic permutation expressed in snake coordinates:
    /// `shift[l] = snake position of the image of the square at position l`.
    pub snake_shift: Vec<usize>,
}

/// Composes the two staggered rounds of pair mixers with the cyclic flow:
/// the folded Baker's map runs on every even snake pair in `[0, δ]` and on
/// every odd pair (wrapping around) in `[δ, 2δ]`; the cyclic permutation is
/// compressed into `[2δ, 1]`.
pub fn build_strong_mixing(
    cyclic: &FlowSchedule,
    fine_grid: Grid,
    delta: &Scalar,
) -> Result<MixingConstruction, ConstructError> {
    let perm = cyclic
        .time_one_map()
        .as_square_permutation(fine_grid)
        .map_err(|_| ConstructError::NotSingleCycle)?;
    let cycles = perm.cycle_decompose();
    if !cycles.is_single_cycle() {
        return Err(ConstructError::NotSingleCycle);
    }
    let two_delta = Scalar::from_int(2) * delta.clone();
    if !delta.is_positive() || two_delta >= Scalar::one() {
        return Err(ConstructError::DeltaTooLarge);
    }
    let snake = snake_cycle(fine_grid.d)?;
    let n = snake.len();
    let mut pos = alloc::vec![0usize; n];
    for (l, &sq) in snake.iter().enumerate() {
        pos[sq] = l;
    }
    let pair_union = |l: usize| -> Result<Rect, ConstructError> {
        let a = fine_grid.square_linear(snake[l]).expect("snake index");
        let b = fine_grid
            .square_linear(snake[(l + 1) % n])
            .expect("snake index");
        if !a.shares_edge(&b) {
            return Err(ConstructError::BadParams(String::from(
                "snake pair is not adjacent",
            )));
        }
        Ok(Rect {
            x_lo: a.x_lo.clone().min(b.x_lo.clone()),
            x_hi: a.x_hi.clone().max(b.x_hi.clone()),
            y_lo: a.y_lo.clone().min(b.y_lo.clone()),
            y_hi: a.y_hi.clone().max(b.y_hi.clone()),
        })
    };
    let mut even_stages = Vec::with_capacity(n / 2);
    let mut odd_stages = Vec::with_capacity(n / 2);
    for l in (0..n). step_by(2) {
        even_stages.push(Stage::Baker(BakerStage::new(
            pair_union(l)?,
            false,
            Scalar::zero(),
            delta.clone(),
        )?));
        odd_stages.push(Stage::Baker(BakerStage::new(
            pair_union(l + 1)?,
            false,
            delta.clone(),
            two_delta.clone(),
        )?));
    }
    let even_group = StageGroup::new(Scalar::zero(), delta.clone(), even_stages)?;
    let odd_group = StageGroup::new(delta.clone(), two_delta.clone(), odd_stages)?;
    let shifted = cyclic.retimed(&two_delta, &Scalar::one())?;
    let mut groups = alloc::vec![even_group, odd_group];
    groups.extend(shifted.groups().iter().cloned());
    let schedule = FlowSchedule::from_groups(groups)?;
    let snake_shift = (0..n).map(|l| pos[perm.apply(snake[l])]).collect();
    Ok(MixingConstruction {
        schedule,
        base: shifted,
        fine_grid,
        snake,
        snake_shift,
    })
}

/// One diagonal affine piece: on its source square the map is
/// `x ↦ diag(λ1, 1/λ1) x + t`.
#[derive(Clone, Debug)]
pub struct DiagonalAffine {
    /// Linear index of the source square on the tiling grid.
    pub source: usize,
    pub lambda1: Scalar,
    pub translate: (Scalar, Scalar),
}

impl DiagonalAffine {
    pub fn map(&self) -> Affine {
        Affine {
            m00: self.lambda1.clone(),
            m01: Scalar::zero(),
            m10: Scalar::zero(),
            m11: self.lambda1.recip(),
            tx: self.translate.0.clone(),
            ty: self.translate.1.clone(),
        }
    }
}

/// Output of [`rectify_diagonal_affine`].
#[derive(Clone, Debug)]
pub struct Rectifier {
    /// Common refinement: the composite translates `Grid(M)` squares.
    pub m: usize,
    /// Counter-rotations of the refined squares on `[0, 1/2]`, rectangle
    /// rotations on `[1/2, 1]`.
    pub schedule: FlowSchedule,
    /// The piecewise diagonal affine map itself.
    pub sigma: TimeOneMap,
}

/// Builds the rotation/counter-rotation schedule making a piecewise diagonal
/// affine tiling a permutation of squares: each source square splits into
/// rectangles whose quarter-turn image the affine map sends back onto a
/// square, and a counter-rotation inside every refined square restores the
/// identity Jacobian.
pub fn rectify_diagonal_affine(
    grid_n: usize,
    pieces: &[DiagonalAffine],
    m_cap: usize,
) -> Result<Rectifier, ConstructError> {
    let n_grid = Grid::new(grid_n);
    if pieces.len() != n_grid.square_count() {
        return Err(ConstructError::BadParams(alloc::format!(
            "need {} pieces, got {}",
            n_grid.square_count(),
            pieces.len()
        )));
    }
    // Validate the tiling: images pairwise disjoint with total area 1.
    let mut images = Vec::with_capacity(pieces.len());
    for piece in pieces {
        if !piece.lambda1.is_positive() {
            return Err(ConstructError::BadParams(String::from(
                "eigenvalue must be positive",
            )));
        }
        let src = n_grid
            .square_linear(piece.source)
            .map_err(|_| ConstructError::BadParams(String::from("source square out of range")))?;
        let img = piece.map().map_rect(&src);
        if !img.in_unit_square() {
            return Err(ConstructError::ImagesDoNotTile);
        }
        images.push(img);
    }
    if crate::geom::RectUnion::new(images.clone()).is_err() {
        return Err(ConstructError::ImagesDoNotTile);
    }
    let total: Scalar = images
        .iter()
        .map(|r| r.area())
        .fold(Scalar::zero(), |a, b| a + b);
    if total != Scalar::one() {
        return Err(ConstructError::ImagesDoNotTile);
    }

    // Common refinement M: every subdivision rectangle and every image must
    // be a union of Grid(M) squares.
    let mut m_big = num_bigint::BigInt::from(grid_n);
    for (piece, img) in pieces.iter().zip(&images) {
        let (p, q) = (
            piece.lambda1.numer().clone(),
            piece.lambda1.denom().clone(),
        );
        m_big = m_big.lcm(&(&p * num_bigint::BigInt::from(grid_n)));
        m_big = m_big.lcm(&(&q * num_bigint::BigInt::from(grid_n)));
        for s in [&img.x_lo, &img.x_hi, &img.y_lo, &img.y_hi] {
            m_big = m_big.lcm(s.denom());
        }
    }
    let m = m_big.to_usize().ok_or(ConstructError::RefinementOverflow)?;
    if m > m_cap {
        return Err(ConstructError::RefinementOverflow);
    }
    let m_grid = Grid::new(m);

    // Stages: counter-rotate each refined square inside every non-identity
    // piece, then rotate the subdivision rectangles.
    let half = Scalar::ratio(1, 2);
    let mut counter_stages = Vec::new();
    let mut rect_stages = Vec::new();
    for piece in pieces {
        if piece.lambda1 == Scalar::one() {
            continue;
        }
        let (ci, cj) = n_grid.coords(piece.source);
        let p = piece.lambda1.numer().to_usize().ok_or(ConstructError::RefinementOverflow)?;
        let q = piece.lambda1.denom().to_usize().ok_or(ConstructError::RefinementOverflow)?;
        // p columns, q rows of rectangles inside the source square.
        let cells_per_square = m / grid_n;
        let cols_per_rect = cells_per_square / p;
        let rows_per_rect = cells_per_square / q;
        if cols_per_rect == 0 || rows_per_rect == 0 {
            return Err(ConstructError::RefinementOverflow);
        }
        for rj in 0..q {
            for ri in 0..p {
                let x0 = ci * cells_per_square + ri * cols_per_rect;
                let y0 = cj * cells_per_square + rj * rows_per_rect;
                let rect = Rect {
                    x_lo: Scalar::ratio(x0 as i64, m as i64),
                    x_hi: Scalar::ratio((x0 + cols_per_rect) as i64, m as i64),
                    y_lo: Scalar::ratio(y0 as i64, m as i64),
                    y_hi: Scalar::ratio((y0 + rows_per_rect) as i64, m as i64),
                };
                rect_stages.push(Stage::Rotation(crate::flows::RotationStage::new(
                    rect,
                    1,
                    half.clone(),
                    Scalar::one(),
                )?));
                for sy in 0..rows_per_rect {
                    for sx in 0..cols_per_rect {
                        let sq = m_grid
                            .square(x0 + sx, y0 + sy)
                            .expect("refined square in range");
                        counter_stages.push(Stage::Rotation(crate::flows::RotationStage::new(
                            sq,
                            -1,
                            Scalar::zero(),
                            half.clone(),
                        )?));
                    }
                }
            }
        }
    }
    let mut groups = Vec::new();
    if !counter_stages.is_empty() {
        groups.push(StageGroup::new(Scalar::zero(), half.clone(), counter_stages)?);
        groups.push(StageGroup::new(half.clone(), Scalar::one(), rect_stages)?);
    }
    let schedule = FlowSchedule::from_groups(groups)?;
    let sigma_pieces: Vec<Piece> = pieces
        .iter()
        .map(|piece| Piece {
            domain: n_grid.square_linear(piece.source).expect("validated"),
            map: piece.map(),
        })
        .collect();
    let sigma = TimeOneMap::from_pieces_with_identity_complement(sigma_pieces)?;
    Ok(Rectifier { m, schedule, sigma })
}

/// Exact `∫ ||b_1(t) - b_2(t)||_L1 dt` over `[0, 1]` for two schedules whose
/// fields differ only on identically shaped atoms (the base/perturbed pairs
/// built here). The `exact` flag drops when an interval had to fall back to
/// the triangle inequality.
pub fn l1l1_distance(s1: &FlowSchedule, s2: &FlowSchedule) -> (Scalar, bool) {
    let mut cuts = cut_times(s1);
    cuts.extend(cut_times(s2));
    cuts.push(Scalar::zero());
    cuts.push(Scalar::one());
    cuts.sort();
    cuts.dedup();
    let mut total = Scalar::zero();
    let mut exact = true;
    let half = Scalar::ratio(1, 2);
    for w in cuts.windows(2) {
        let mid = (&w[0] + &w[1]) * half.clone();
        let f1 = field_at(s1, &mid).expect("interval interior");
        let f2 = field_at(s2, &mid).expect("interval interior");
        let len = &w[1] - &w[0];
        match field_difference(&f1, &f2) {
            Ok(diff) => total += l1_norm(&diff) * len,
            Err(_) => {
                exact = false;
                total += (l1_norm(&f1) + l1_norm(&f2)) * len;
            }
        }
    }
    (total, exact)
}

/// Sup over stage-constant intervals of the total variation of the field
/// difference.
pub fn tv_sup_distance(s1: &FlowSchedule, s2: &FlowSchedule) -> Result<Scalar, ConstructError> {
    let mut cuts = cut_times(s1);
    cuts.extend(cut_times(s2));
    cuts.push(Scalar::zero());
    cuts.push(Scalar::one());
    cuts.sort();
    cuts.dedup();
    let mut best = Scalar::zero();
    let half = Scalar::ratio(1, 2);
    for w in cuts.windows(2) {
        let mid = (&w[0] + &w[1]) * half.clone();
        let f1 = field_at(s1, &mid)?;
        let f2 = field_at(s2, &mid)?;
        let diff = field_difference(&f1, &f2)?;
        best = best.max(total_variation(&diff)?.total());
    }
    Ok(best)
}

/// Sup over stage-constant intervals of the total variation of the field.
pub fn tv_sup(s: &FlowSchedule) -> Result<Scalar, ConstructError> {
    let mut cuts = cut_times(s);
    cuts.push(Scalar::zero());
    cuts.push(Scalar::one());
    cuts.sort();
    cuts.dedup();
    let mut best = Scalar::zero();
    let half = Scalar::ratio(1, 2);
    for w in cuts.windows(2) {
        let mid = (&w[0] + &w[1]) * half.clone();
        let f = field_at(s, &mid)?;
        best = best.max(total_variation(&f)?.total());
    }
    Ok(best)
}

/// Group boundaries plus the internal switch times of Baker stages: between
/// consecutive cut times every schedule field is constant in shape.
pub fn cut_times(s: &FlowSchedule) -> Vec<Scalar> {
    let mut out = Vec::new();
    let half = Scalar::ratio(1, 2);
    for g in s.groups() {
        out.push(g.t_begin.clone());
        out.push(g.t_end.clone());
        for stage in &g.stages {
            if let Stage::Baker(_) = stage {
                out.push((&g.t_begin + &g.t_end) * half.clone());
            }
        }
    }
    out
}

/// One step of the ε/4 budget: a named exact or bounded L1(L1) distance.
#[derive(Clone, Debug)]
pub struct BudgetEntry {
    pub step: &'static str,
    pub distance: Scalar,
    pub exact: bool,
}

/// Output of [`full_pipeline`].
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub schedule: FlowSchedule,
    pub fine_grid: Grid,
    pub budget: Vec<BudgetEntry>,
    /// Snake enumeration and cyclic shift for the mixing pipeline.
    pub markov_shift: Option<(Vec<usize>, Vec<usize>)>,
    /// Heuristic form of the grid-size requirement `D ≫ 1/(εδ)` with
    /// constant one, evaluated against the achieved final-step distance.
    pub d_heuristic_lower_bound: Scalar,
    pub d_meets_heuristic: bool,
}

/// Chains the freeze shift, the cyclic merge and the mixer insertion, with
/// the step-by-step distance budget.
pub fn full_pipeline(
    p: &SquarePermutation,
    params: &ConstructionParams,
) -> Result<PipelineOutput, ConstructError> {
    let original = permutation_schedule(p, &Scalar::zero(), &Scalar::one())?;
    let cyclic = build_cyclic(p, params)?;
    let (shift_distance, shift_exact) = l1l1_distance(&original, &cyclic.base_unmerged);
    let (merge_distance, merge_exact) = l1l1_distance(&cyclic.base_unmerged, &cyclic.base);
    let (tree_distance, tree_exact) = l1l1_distance(&cyclic.base, &cyclic.schedule);
    let mut budget = alloc::vec![
        BudgetEntry {
            step: "freeze-shift",
            distance: shift_distance,
            exact: shift_exact,
        },
        BudgetEntry {
            step: "cycle-refinement-merge",
            distance: merge_distance,
            exact: merge_exact,
        },
        BudgetEntry {
            step: "cycle-tree-join",
            distance: tree_distance,
            exact: tree_exact,
        },
    ];
    let (schedule, markov_shift, last) = match params.pipeline {
        Pipeline::Cyclic => {
            budget.push(BudgetEntry {
                step: "perturbation",
                distance: Scalar::zero(),
                exact: true,
            });
            (cyclic.schedule.clone(), None, Scalar::zero())
        }
        Pipeline::Ergodic => {
            let erg = build_ergodic(&cyclic.schedule, cyclic.fine_grid, &params.delta)?;
            let (d, e) = l1l1_distance(&erg.base, &erg.schedule);
            budget.push(BudgetEntry {
                step: "ergodic-mixer",
                distance: d.clone(),
                exact: e,
            });
            (erg.schedule, None, d)
        }
        Pipeline::StrongMixing => {
            let mix = build_strong_mixing(&cyclic.schedule, cyclic.fine_grid, &params.delta)?;
            let (d, e) = l1l1_distance(&mix.base, &mix.schedule);
            budget.push(BudgetEntry {
                step: "mixing-pairs",
                distance: d.clone(),
                exact: e,
            });
            (
                mix.schedule,
                Some((mix.snake, mix.snake_shift)),
                d,
            )
        }
    };
    let d_heuristic_lower_bound = if last.is_zero() {
        Scalar::zero()
    } else {
        (last * params.delta.clone()).recip()
    };
    let d_meets_heuristic =
        Scalar::from_int(params.d as i64) >= d_heuristic_lower_bound.clone();
    Ok(PipelineOutput {
        schedule,
        fine_grid: cyclic.fine_grid,
        budget,
        markov_shift,
        d_heuristic_lower_bound,
        d_meets_heuristic,
    })
}
