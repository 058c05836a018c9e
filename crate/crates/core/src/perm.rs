//! Permutations of grid subsquares and their cycle structure.
//!
//! The time-1 maps produced by the scheduled flows translate each square of a
//! uniform grid rigidly onto another square of the same grid. This module
//! carries the combinatorics: canonical cycle decomposition, lifting a
//! permutation to a refined grid, the staged pairing rounds that merge the
//! lifted copies of one cycle into a single long cycle, and the spanning tree
//! of adjacent-square transpositions that merges disjoint cycles into one.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::geom::Grid;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PermError {
    NotABijection,
    ZeroRefinement,
    NotPowerOfTwo(usize),
    NotSingleLiftedCycle(String),
    OverlappingPairs,
    RefinementTooCoarse { m: usize },
    NotATranslationLift,
}

impl fmt::Display for PermError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PermError::NotABijection => write!(f, "image array is not a bijection"),
            PermError::ZeroRefinement => write!(f, "refinement factor must be positive"),
            PermError::NotPowerOfTwo(m) => write!(f, "{m} is not a power of two"),
            PermError::NotSingleLiftedCycle(s) => {
                write!(f, "permutation is not the lift of a single cycle: {s}")
            }
            PermError::OverlappingPairs => write!(f, "transposition pairs overlap"),
            PermError::RefinementTooCoarse { m } => {
                write!(f, "refinement {m} < 4 cannot avoid square corners")
            }
            PermError::NotATranslationLift => {
                write!(f, "sub-square offsets are not preserved")
            }
        }
    }
}

impl core::error::Error for PermError {}

/// A permutation of the squares of a [`Grid`], acting by rigid translation.
#[derive(Clone, PartialEq, Eq)]
pub struct SquarePermutation {
    grid: Grid,
    image: Vec<usize>,
}

impl fmt::Debug for SquarePermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SquarePermutation(d={}, {:?})", self.grid.d, self.image)
    }
}

impl SquarePermutation {
    pub fn new(grid: Grid, image: Vec<usize>) -> Result<Self, PermError> {
        let n = grid.square_count();
        if image.len() != n {
            return Err(PermError::NotABijection);
        }
        let mut seen = alloc::vec![false; n];
        for &v in &image {
            if v >= n || seen[v] {
                return Err(PermError::NotABijection);
            }
            seen[v] = true;
        }
        Ok(SquarePermutation { grid, image })
    }

    pub fn identity(grid: Grid) -> Self {
        SquarePermutation {
            image: (0..grid.square_count()).collect(),
            grid,
        }
    }

    /// Builds the permutation sending `cycle[i]` to `cycle[i+1]` (cyclically),
    /// fixing everything else.
    pub fn from_cycle(grid: Grid, cycle: &[usize]) -> Result<Self, PermError> {
        let mut image: Vec<usize> = (0..grid.square_count()).collect();
        for w in 0..cycle.len() {
            let from = cycle[w];
            let to = cycle[(w + 1) % cycle.len()];
            if from >= image.len() || to >= image.len() {
                return Err(PermError::NotABijection);
            }
            image[from] = to;
        }
        SquarePermutation::new(grid, image)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn image(&self) -> &[usize] {
        &self.image
    }

    pub fn apply(&self, k: usize) -> usize {
        self.image[k]
    }

    pub fn is_identity(&self) -> bool {
        self.image.iter().enumerate().all(|(k, &v)| k == v)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = alloc::vec![0usize; self.image.len()];
        for (k, &v) in self.image.iter().enumerate() {
            inv[v] = k;
        }
        SquarePermutation {
            grid: self.grid,
            image: inv,
        }
    }

    /// `h(x) = self(other(x))` — `other` acts first.
    pub fn compose(&self, other: &SquarePermutation) -> Self {
        assert_eq!(self.grid, other.grid);
        let image = other.image.iter().map(|&v| self.image[v]).collect();
        SquarePermutation {
            grid: self.grid,
            image,
        }
    }

    /// Canonical decomposition into disjoint cycles (1-cycles included):
    /// each cycle starts at its minimal index and cycles are sorted by leader.
    pub fn cycle_decompose(&self) -> CycleDecomposition {
        let n = self.image.len();
        let mut seen = alloc::vec![false; n];
        let mut cycles = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut cycle = Vec::new();
            let mut k = start;
            while !seen[k] {
                seen[k] = true;
                cycle.push(k);
                k = self.image[k];
            }
            cycles.push(cycle);
        }
        CycleDecomposition { cycles }
    }

    /// Lifts to `Grid(D*M)`: every sub-square translates exactly as its parent
    /// square does, so each k-cycle yields `M^2` disjoint k-cycles.
    pub fn lift_to_refinement(&self, m: usize) -> Result<SquarePermutation, PermError> {
        if m == 0 {
            return Err(PermError::ZeroRefinement);
        }
        let d = self.grid.d;
        let fine = Grid::new(d * m);
        let mut image = alloc::vec![0usize; fine.square_count()];
        for k in 0..self.grid.square_count() {
            let (i, j) = self.grid.coords(k);
            let (ti, tj) = self.grid.coords(self.image[k]);
            for b in 0..m {
                for a in 0..m {
                    let src = fine.linear(i * m + a, j * m + b);
                    let dst = fine.linear(ti * m + a, tj * m + b);
                    image[src] = dst;
                }
            }
        }
        Ok(SquarePermutation { grid: fine, image })
    }

    /// Composes the disjoint swaps into the frozen prefix and then applies
    /// `self`: the result maps `x` to `self(swap(x))`. Merging two cycles
    /// through one transposition concatenates them.
    pub fn apply_transpositions(
        &self,
        pairs: &[(usize, usize)],
    ) -> Result<SquarePermutation, PermError> {
        let mut touched = alloc::vec![false; self.image.len()];
        for &(a, b) in pairs {
            if a >= touched.len() || b >= touched.len() || touched[a] || touched[b] || a == b {
                return Err(PermError::OverlappingPairs);
            }
            touched[a] = true;
            touched[b] = true;
        }
        let mut swap: Vec<usize> = (0..self.image.len()).collect();
        for &(a, b) in pairs {
            swap.swap(a, b);
        }
        let image = swap.iter().map(|&v| self.image[v]).collect();
        Ok(SquarePermutation {
            grid: self.grid,
            image,
        })
    }
}

/// Disjoint cycles covering all grid squares, in canonical order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycleDecomposition {
    cycles: Vec<Vec<usize>>,
}

impl CycleDecomposition {
    pub fn cycles(&self) -> &[Vec<usize>] {
        &self.cycles
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    pub fn is_single_cycle(&self) -> bool {
        self.cycles.len() == 1
    }

    /// Rebuilds the permutation the cycles came from.
    pub fn to_permutation(&self, grid: Grid) -> Result<SquarePermutation, PermError> {
        let mut image: Vec<usize> = (0..grid.square_count()).collect();
        for cycle in &self.cycles {
            for w in 0..cycle.len() {
                image[cycle[w]] = cycle[(w + 1) % cycle.len()];
            }
        }
        SquarePermutation::new(grid, image)
    }

    /// Index of the cycle containing a square.
    pub fn cycle_of(&self, square: usize) -> usize {
        self.cycles
            .iter()
            .position(|c| c.contains(&square))
            .expect("square outside decomposition")
    }
}

/// The staged pairing rounds inside one square that merge the `M^2` lifted
/// copies of a k-cycle into a single `k*M^2`-cycle.
///
/// Round `s` (1-based, `s = 1..=2q` for `M = 2^q`) pairs blocks of
/// sub-squares inside the square: horizontally at odd rounds (building
/// rectangles), vertically at even rounds (building squares). One
/// transposition per block pair; after round `s` the permutation is a product
/// of `M^2 / 2^s` disjoint cycles of length `2^s * k`.
///
/// `p_lifted` must be the [`SquarePermutation::lift_to_refinement`] of a
/// permutation whose cycle through `kappa` is the cycle being merged;
/// `kappa` is the square's linear index on the coarse grid.
pub fn merge_within_square(
    p_lifted: &SquarePermutation,
    coarse: Grid,
    kappa: usize,
    m: usize,
) -> Result<(SquarePermutation, Vec<Vec<(usize, usize)>>), PermError> {
    if m == 0 || !m.is_power_of_two() {
        return Err(PermError::NotPowerOfTwo(m));
    }
    let fine = p_lifted.grid();
    if fine.d != coarse.d * m {
        return Err(PermError::NotSingleLiftedCycle(alloc::format!(
            "grid {} is not a {}-refinement of {}",
            fine.d,
            m,
            coarse.d
        )));
    }
    check_is_lift(p_lifted, coarse, m)?;
    let q = m.trailing_zeros() as usize;
    let (ci, cj) = coarse.coords(kappa);
    let cell = |a: usize, b: usize| fine.linear(ci * m + a, cj * m + b);

    let mut rounds: Vec<Vec<(usize, usize)>> = Vec::with_capacity(2 * q);
    let mut current = p_lifted.clone();
    for s in 1..=2 * q {
        let w = 1usize << s.div_ceil(2);
        let h = 1usize << (s / 2);
        let mut pairs = Vec::new();
        for by in (0..m).step_by(h) {
            for bx in (0..m).step_by(w) {
                // One transposition joins the two halves of each block,
                // across the interface, at the lowest cell.
                let (a, b) = if s % 2 == 1 {
                    (cell(bx + w / 2 - 1, by), cell(bx + w / 2, by))
                } else {
                    (cell(bx, by + h / 2 - 1), cell(bx, by + h / 2))
                };
                pairs.push((a, b));
            }
        }
        current = current.apply_transpositions(&pairs)?;
        rounds.push(pairs);
    }
    Ok((current, rounds))
}

fn check_is_lift(p: &SquarePermutation, coarse: Grid, m: usize) -> Result<(), PermError> {
    let fine = p.grid();
    for k in 0..fine.square_count() {
        let (i, j) = fine.coords(k);
        let (ti, tj) = fine.coords(p.apply(k));
        if (ti % m, tj % m) != (i % m, j % m) {
            return Err(PermError::NotATranslationLift);
        }
        let src = coarse.linear(i / m, j / m);
        let dst = coarse.linear(ti / m, tj / m);
        // The coarse-square motion must be consistent for all offsets.
        let (oi, oj) = coarse.coords(src);
        let probe = fine.linear(oi * m, oj * m);
        let (pi, pj) = fine.coords(p.apply(probe));
        if coarse.linear(pi / m, pj / m) != dst {
            return Err(PermError::NotATranslationLift);
        }
    }
    Ok(())
}

/// One edge of a [`MergeTree`]: the child cycle joins the parent cycle by a
/// transposition between two adjacent refined-grid sub-squares `a` (inside a
/// parent square) and `a_child` (inside a child square), neither on a corner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergeEdge {
    pub parent_cycle: usize,
    pub child_cycle: usize,
    /// Coarse squares through which the cycles touch.
    pub parent_square: usize,
    pub child_square: usize,
    /// Refined-grid sub-squares swapped by the transposition.
    pub a: usize,
    pub a_child: usize,
}

/// A spanning tree over the cycles of a decomposition, rooted at the cycle
/// containing square 0, with one corner-avoiding transposition per edge.
#[derive(Clone, Debug)]
pub struct MergeTree {
    pub edges: Vec<MergeEdge>,
    /// BFS layers of cycle indices, layer 0 being the root alone.
    pub layers: Vec<Vec<usize>>,
}

impl MergeTree {
    pub fn depth(&self) -> usize {
        self.layers.len().saturating_sub(1)
    }

    pub fn transposition_pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.a, e.a_child)).collect()
    }
}

/// Builds the BFS spanning tree over the cycles of `c` (laid out on `coarse`)
/// and selects, for every tree edge, the transposition pair on the
/// `m`-refined grid.
///
/// Tie-breaking is deterministic: the root is the cycle containing square 0;
/// within a layer, parents are visited in increasing leader order; for each
/// edge the lexicographically smallest adjacent coarse-square pair is chosen,
/// and on the shared side the lowest non-corner sub-square pair.
pub fn build_merge_tree(
    c: &CycleDecomposition,
    coarse: Grid,
    m: usize,
) -> Result<MergeTree, PermError> {
    if m < 4 {
        return Err(PermError::RefinementTooCoarse { m });
    }
    let n = c.len();
    let fine = Grid::new(coarse.d * m);
    // cycle index of every coarse square
    let mut owner = alloc::vec![usize::MAX; coarse.square_count()];
    for (ci, cycle) in c.cycles().iter().enumerate() {
        for &sq in cycle {
            owner[sq] = ci;
        }
    }
    let root = owner[0];
    let mut visited = alloc::vec![false; n];
    visited[root] = true;
    let mut layers = alloc::vec![alloc::vec![root]];
    let mut edges: Vec<MergeEdge> = Vec::new();
    let mut frontier = alloc::vec![root];
    while edges.len() + 1 < n {
        let mut next_layer: Vec<usize> = Vec::new();
        // parents in increasing leader order
        let mut parents = frontier.clone();
        parents.sort_by_key(|&ci| c.cycles()[ci][0]);
        for parent in parents {
            // candidate adjacencies, smallest (parent square, child square) first
            let mut candidates: Vec<(usize, usize)> = Vec::new();
            for &sq in &c.cycles()[parent] {
                for nb in coarse.neighbors(sq) {
                    if !visited[owner[nb]] {
                        candidates.push((sq, nb));
                    }
                }
            }
            candidates.sort();
            for (sq, nb) in candidates {
                let child = owner[nb];
                if visited[child] {
                    continue;
                }
                visited[child] = true;
                next_layer.push(child);
                let (a, a_child) = side_pair(coarse, fine, m, sq, nb);
                edges.push(MergeEdge {
                    parent_cycle: parent,
                    child_cycle: child,
                    parent_square: sq,
                    child_square: nb,
                    a,
                    a_child,
                });
            }
        }
        if next_layer.is_empty() {
            // Grid adjacency is connected, so this only happens on
            // inconsistent input.
            return Err(PermError::NotABijection);
        }
        next_layer.sort_by_key(|&ci| c.cycles()[ci][0]);
        frontier = next_layer.clone();
        layers.push(next_layer);
    }
    // Selected pairs must be pairwise disjoint (one per square side, off the
    // corners, so this holds structurally).
    let mut used: Vec<usize> = edges.iter().flat_map(|e| [e.a, e.a_child]).collect();
    used.sort_unstable();
    let before = used.len();
    used.dedup();
    if used.len() != before {
        return Err(PermError::OverlappingPairs);
    }
    Ok(MergeTree { edges, layers })
}

/// Lowest non-corner pair of adjacent sub-squares across the shared side of
/// two adjacent coarse squares.
fn side_pair(coarse: Grid, fine: Grid, m: usize, sq: usize, nb: usize) -> (usize, usize) {
    let (i, j) = coarse.coords(sq);
    let (ni, nj) = coarse.coords(nb);
    let (bx, by) = (i * m, j * m);
    let (nbx, nby) = (ni * m, nj * m);
    if ni == i + 1 {
        // neighbour to the east: cells (m-1, t) | (0, t), t = 1 non-corner
        (fine.linear(bx + m - 1, by + 1), fine.linear(nbx, nby + 1))
    } else if i == ni + 1 {
        (fine.linear(bx, by + 1), fine.linear(nbx + m - 1, nby + 1))
    } else if nj == j + 1 {
        // neighbour above
        (fine.linear(bx + 1, by + m - 1), fine.linear(nbx + 1, nby))
    } else {
        (fine.linear(bx + 1, by), fine.linear(nbx + 1, nby + m - 1))
    }
}

/// Boustrophedon enumeration of grid squares: row 0 left to right, row 1
/// right to left, and so on. Consecutive squares are edge-adjacent.
pub fn snake_path(d: usize) -> Vec<usize> {
    let g = Grid::new(d);
    let mut out = Vec::with_capacity(d * d);
    for j in 0..d {
        if j % 2 == 0 {
            for i in 0..d {
                out.push(g.linear(i, j));
            }
        } else {
            for i in (0..d).rev() {
                out.push(g.linear(i, j));
            }
        }
    }
    out
}

/// Closed snake: a Hamiltonian cycle on the grid adjacency graph, so that
/// consecutive squares *and* the wrap-around pair are edge-adjacent. Exists
/// for even side length only; the pair-mixing stages need the closed form
/// because their pairings wrap modulo the square count.
pub fn snake_cycle(d: usize) -> Result<Vec<usize>, PermError> {
    if d < 2 || d % 2 != 0 {
        return Err(PermError::NotPowerOfTwo(d));
    }
    let g = Grid::new(d);
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        out.push(g.linear(i, 0));
    }
    for j in 1..d {
        if j % 2 == 1 {
            for i in (1..d).rev() {
                out.push(g.linear(i, j));
            }
        } else {
            for i in 1..d {
                out.push(g.linear(i, j));
            }
        }
    }
    out.push(g.linear(0, d - 1));
    for j in (1..d - 1).rev() {
        out.push(g.linear(0, j));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_decomposes_into_fixed_points() {
        let p = SquarePermutation::identity(Grid::new(2));
        let c = p.cycle_decompose();
        assert_eq!(c.len(), 4);
        assert!(c.cycles().iter().all(|cy| cy.len() == 1));
    }

    #[test]
    fn two_two_cycles() {
        let p = SquarePermutation::new(Grid::new(2), alloc::vec![1, 0, 3, 2]).unwrap();
        let c = p.cycle_decompose();
        assert_eq!(c.cycles(), &[alloc::vec![0, 1], alloc::vec![2, 3]]);
        assert_eq!(c.to_permutation(Grid::new(2)).unwrap(), p);
    }

    #[test]
    fn snake_rotation_is_one_cycle() {
        let snake = snake_path(2);
        let p = SquarePermutation::from_cycle(Grid::new(2), &snake).unwrap();
        let c = p.cycle_decompose();
        assert!(c.is_single_cycle());
        assert_eq!(c.cycles()[0].len(), 4);
        // Iterating the map 4 times returns the identity.
        let mut q = p.clone();
        for _ in 0..3 {
            q = q.compose(&p);
        }
        assert!(q.is_identity());
    }

    #[test]
    fn lift_identity() {
        let p = SquarePermutation::identity(Grid::new(2));
        let lifted = p.lift_to_refinement(2).unwrap();
        assert!(lifted.is_identity());
        assert_eq!(lifted.grid().d, 4);
    }

    #[test]
    fn lift_single_cycle_gives_m2_copies() {
        let snake = snake_path(2);
        let p = SquarePermutation::from_cycle(Grid::new(2), &snake).unwrap();
        let lifted = p.lift_to_refinement(2).unwrap();
        let c = lifted.cycle_decompose();
        assert_eq!(c.len(), 4);
        assert!(c.cycles().iter().all(|cy| cy.len() == 4));
    }

    #[test]
    fn lift_multiplies_cycle_count_by_m2() {
        // A fixed scrambled permutation on Grid(4).
        let image = alloc::vec![
            3, 7, 0, 12, 5, 1, 9, 2, 11, 15, 4, 6, 13, 8, 10, 14,
        ];
        let p = SquarePermutation::new(Grid::new(4), image).unwrap();
        let before = p.cycle_decompose().len();
        let lifted = p.lift_to_refinement(2).unwrap();
        assert_eq!(lifted.cycle_decompose().len(), before * 4);
    }

    #[test]
    fn lift_preserves_offsets() {
        let image = alloc::vec![2, 0, 3, 1];
        let p = SquarePermutation::new(Grid::new(2), image).unwrap();
        let m = 4;
        let lifted = p.lift_to_refinement(m).unwrap();
        let coarse = Grid::new(2);
        let fine = lifted.grid();
        for k in 0..fine.square_count() {
            let (i, j) = fine.coords(k);
            let (ti, tj) = fine.coords(lifted.apply(k));
            assert_eq!((i % m, j % m), (ti % m, tj % m));
            let src = coarse.linear(i / m, j / m);
            assert_eq!(coarse.linear(ti / m, tj / m), p.apply(src));
        }
    }

    #[test]
    fn apply_transposition_examples() {
        let id = SquarePermutation::identity(Grid::new(2));
        let q = id.apply_transpositions(&[(0, 1)]).unwrap();
        assert_eq!(q.image(), &[1, 0, 2, 3]);

        let p = SquarePermutation::new(Grid::new(2), alloc::vec![1, 0, 3, 2]).unwrap();
        let merged = p.apply_transpositions(&[(1, 2)]).unwrap();
        assert!(merged.cycle_decompose().is_single_cycle());

        assert!(id.apply_transpositions(&[(0, 1), (1, 2)]).is_err());
    }

    #[test]
    fn merge_within_fixed_square() {
        // k = 1 (a fixed square), M = 2: the four sub-squares become one 4-cycle.
        let coarse = Grid::new(1);
        let p = SquarePermutation::identity(coarse).lift_to_refinement(2).unwrap();
        let (merged, rounds) = merge_within_square(&p, coarse, 0, 2).unwrap();
        assert_eq!(rounds.len(), 2);
        let c = merged.cycle_decompose();
        assert!(c.is_single_cycle());
        assert_eq!(c.cycles()[0].len(), 4);
    }

    #[test]
    fn merge_within_square_k4_m2() {
        let snake = snake_path(2);
        let p = SquarePermutation::from_cycle(Grid::new(2), &snake).unwrap();
        let lifted = p.lift_to_refinement(2).unwrap();
        let (merged, rounds) = merge_within_square(&lifted, Grid::new(2), snake[0], 2).unwrap();
        let c = merged.cycle_decompose();
        assert!(c.is_single_cycle());
        assert_eq!(c.cycles()[0].len(), 16);

        // Intermediate check: after round i there are M^2/2^i cycles of
        // length 2^i * k.
        let m2 = 4usize;
        let k = 4usize;
        let mut current = lifted;
        for (i, pairs) in rounds.iter().enumerate() {
            current = current.apply_transpositions(pairs).unwrap();
            let c = current.cycle_decompose();
            let nontrivial: Vec<usize> = c
                .cycles()
                .iter()
                .map(|cy| cy.len())
                .filter(|&l| l > 1)
                .collect();
            let expect_count = m2 >> (i + 1);
            let expect_len = (1 << (i + 1)) * k;
            assert_eq!(nontrivial.len(), expect_count.max(1));
            assert!(nontrivial.iter().all(|&l| l == expect_len));
        }
        assert_eq!(current, merged);
    }

    #[test]
    fn merge_within_square_k1_m8_round_counts() {
        let coarse = Grid::new(1);
        let p = SquarePermutation::identity(coarse).lift_to_refinement(8).unwrap();
        let (merged, rounds) = merge_within_square(&p, coarse, 0, 8).unwrap();
        assert_eq!(rounds.len(), 6);
        for (i, pairs) in rounds.iter().enumerate() {
            assert_eq!(pairs.len(), 64 >> (i + 1));
        }
        assert!(merged.cycle_decompose().is_single_cycle());
    }

    #[test]
    fn merge_tree_single_cycle() {
        let snake = snake_path(2);
        let p = SquarePermutation::from_cycle(Grid::new(2), &snake).unwrap();
        let tree = build_merge_tree(&p.cycle_decompose(), Grid::new(2), 4).unwrap();
        assert_eq!(tree.edges.len(), 0);
        assert_eq!(tree.layers.len(), 1);
    }

    #[test]
    fn merge_tree_rejects_m_below_4() {
        let p = SquarePermutation::identity(Grid::new(2));
        assert!(matches!(
            build_merge_tree(&p.cycle_decompose(), Grid::new(2), 2),
            Err(PermError::RefinementTooCoarse { m: 2 })
        ));
    }

    #[test]
    fn merge_tree_two_adjacent_two_cycles() {
        // (0 1)(2 3) on Grid(2): two 2-cycles, adjacent.
        let p = SquarePermutation::new(Grid::new(2), alloc::vec![1, 0, 3, 2]).unwrap();
        let m = 4;
        let c = p.cycle_decompose();
        let tree = build_merge_tree(&c, Grid::new(2), m).unwrap();
        assert_eq!(tree.edges.len(), 1);
        // Apply the tree transposition on the lifted permutation: cycles of
        // length 2*M^2 each merge into one of length 4*M^2... each 2-cycle
        // lifts to M^2 two-cycles; merging the two *specific* lifted cycles
        // touched by the pair gives one 4-cycle among the rest.
        let lifted = p.lift_to_refinement(m).unwrap();
        let merged = lifted
            .apply_transpositions(&tree.transposition_pairs())
            .unwrap();
        let lengths: Vec<usize> = merged
            .cycle_decompose()
            .cycles()
            .iter()
            .map(|cy| cy.len())
            .collect();
        assert!(lengths.contains(&4));
    }

    #[test]
    fn merge_tree_pairs_are_adjacent_and_off_corners() {
        let image = alloc::vec![
            3, 7, 0, 12, 5, 1, 9, 2, 11, 15, 4, 6, 13, 8, 10, 14,
        ];
        let p = SquarePermutation::new(Grid::new(4), image).unwrap();
        let m = 4;
        let c = p.cycle_decompose();
        let tree = build_merge_tree(&c, Grid::new(4), m).unwrap();
        assert_eq!(tree.edges.len(), c.len() - 1);
        let fine = Grid::new(4 * m);
        for e in &tree.edges {
            assert!(fine.adjacent(e.a, e.a_child), "pair not adjacent");
            for (cell, sq) in [(e.a, e.parent_square), (e.a_child, e.child_square)] {
                let (i, j) = fine.coords(cell);
                let (ci, cj) = Grid::new(4).coords(sq);
                let (li, lj) = (i - ci * m, j - cj * m);
                let corner_x = li == 0 || li == m - 1;
                let corner_y = lj == 0 || lj == m - 1;
                assert!(!(corner_x && corner_y), "pair sits on a corner");
            }
        }
    }

    #[test]
    fn snake_cycle_is_hamiltonian_and_closed() {
        for d in [2usize, 4, 8] {
            let cyc = snake_cycle(d).unwrap();
            assert_eq!(cyc.len(), d * d);
            let mut sorted = cyc.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), d * d);
            let g = Grid::new(d);
            for w in 0..cyc.len() {
                assert!(
                    g.adjacent(cyc[w], cyc[(w + 1) % cyc.len()]),
                    "snake cycle breaks adjacency at {w} for d={d}"
                );
            }
        }
        assert!(snake_cycle(3).is_err());
    }
}
