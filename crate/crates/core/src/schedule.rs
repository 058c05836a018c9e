//! Time-staged flows on `[0, 1]`.
//!
//! A [`FlowSchedule`] is an ordered list of stage groups. Each group owns a
//! rational time interval and a set of elementary stages with pairwise
//! disjoint supports; the group's stages run simultaneously, groups run in
//! sequence, and time outside every group is the identity. The schedule's
//! flow is the sequential composition of the group flows.

use alloc::vec::Vec;
use core::fmt;

use crate::flows::{BakerStage, FlowError, RotationStage};
use crate::geom::{Point, Rect};
use crate::piecewise::{Piece, TimeOneMap};
use crate::scalar::Scalar;

/// An elementary stage: a rectangle rotation or a folded Baker's map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stage {
    Rotation(RotationStage),
    Baker(BakerStage),
}

impl Stage {
    pub fn support(&self) -> &Rect {
        match self {
            Stage::Rotation(s) => &s.rect,
            Stage::Baker(s) => &s.rect,
        }
    }

    pub fn interval(&self) -> (Scalar, Scalar) {
        match self {
            Stage::Rotation(s) => (s.t_begin.clone(), s.t_end.clone()),
            Stage::Baker(s) => (s.t_begin.clone(), s.t_end.clone()),
        }
    }

    pub fn time_one_pieces(&self) -> Vec<Piece> {
        match self {
            Stage::Rotation(s) => alloc::vec![s.time_one_piece()],
            Stage::Baker(s) => s.time_one_pieces(),
        }
    }

    pub fn eval(&self, t: &Scalar, x: &Point) -> Result<Point, FlowError> {
        match self {
            Stage::Rotation(s) => s.eval(t, x),
            Stage::Baker(s) => s.eval(t, x),
        }
    }

    pub fn eval_inverse(&self, t: &Scalar, y: &Point) -> Result<Point, FlowError> {
        match self {
            Stage::Rotation(s) => s.eval_inverse(t, y),
            Stage::Baker(s) => s.eval_inverse(t, y),
        }
    }

    /// Rotation-field atoms `(rect, speed in quarter turns per unit time)`
    /// active at time `t` inside the stage interval.
    pub fn field_atoms(&self, t: &Scalar) -> Vec<(Rect, Scalar)> {
        match self {
            Stage::Rotation(s) => alloc::vec![(s.rect.clone(), s.speed())],
            Stage::Baker(s) => {
                let [first, second] = s.substages();
                let tm = (&s.t_begin + &s.t_end) * Scalar::ratio(1, 2);
                let active = if *t < tm { first } else { second };
                active
                    .into_iter()
                    .map(|r| {
                        let speed = r.speed();
                        (r.rect, speed)
                    })
                    .collect()
            }
        }
    }

    fn retimed(&self, map: impl Fn(&Scalar) -> Scalar) -> Stage {
        match self {
            Stage::Rotation(s) => Stage::Rotation(RotationStage {
                rect: s.rect.clone(),
                quarter_turns: s.quarter_turns,
                t_begin: map(&s.t_begin),
                t_end: map(&s.t_end),
            }),
            Stage::Baker(s) => Stage::Baker(BakerStage {
                rect: s.rect.clone(),
                inverse: s.inverse,
                t_begin: map(&s.t_begin),
                t_end: map(&s.t_end),
            }),
        }
    }

    fn reversed_kind(&self) -> Stage {
        match self {
            Stage::Rotation(s) => Stage::Rotation(RotationStage {
                rect: s.rect.clone(),
                quarter_turns: -s.quarter_turns,
                t_begin: s.t_begin.clone(),
                t_end: s.t_end.clone(),
            }),
            Stage::Baker(s) => Stage::Baker(BakerStage {
                rect: s.rect.clone(),
                inverse: !s.inverse,
                t_begin: s.t_begin.clone(),
                t_end: s.t_end.clone(),
            }),
        }
    }
}

/// A set of simultaneously running stages over one time interval.
#[derive(Clone, Debug)]
pub struct StageGroup {
    pub t_begin: Scalar,
    pub t_end: Scalar,
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    OverlappingGroups,
    OverlappingSupports,
    StageOutsideGroup,
    OutsideUnitInterval,
    BoundaryTime(Scalar),
    IntervalsDoNotAbut,
    Flow(FlowError),
    UndefinedAt { group: usize, point: Point },
}

impl fmt::Display for ScheduleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleError::OverlappingGroups => write!(f, "group intervals overlap"),
            ScheduleError::OverlappingSupports => {
                write!(f, "stage supports overlap within a group")
            }
            ScheduleError::StageOutsideGroup => {
                write!(f, "stage time bounds leave the group interval")
            }
            ScheduleError::OutsideUnitInterval => write!(f, "times must lie in [0,1]"),
            ScheduleError::BoundaryTime(t) => {
                write!(f, "field may be discontinuous at the group boundary t={t}")
            }
            ScheduleError::IntervalsDoNotAbut => {
                write!(f, "schedule intervals do not abut as required")
            }
            ScheduleError::Flow(e) => write!(f, "{e}"),
            ScheduleError::UndefinedAt { group, point } => {
                write!(f, "flow undefined at {point:?} (stage group {group})")
            }
        }
    }
}

impl core::error::Error for ScheduleError {}

impl From<FlowError> for ScheduleError {
    fn from(e: FlowError) -> Self {
        ScheduleError::Flow(e)
    }
}

impl StageGroup {
    pub fn new(t_begin: Scalar, t_end: Scalar, stages: Vec<Stage>) -> Result<Self, ScheduleError> {
        if t_begin >= t_end {
            return Err(ScheduleError::StageOutsideGroup);
        }
        for s in &stages {
            let (a, b) = s.interval();
            if a != t_begin || b != t_end {
                return Err(ScheduleError::StageOutsideGroup);
            }
        }
        for (i, a) in stages.iter().enumerate() {
            for b in stages.iter().skip(i + 1) {
                if a.support().overlaps_interior(b.support()) {
                    return Err(ScheduleError::OverlappingSupports);
                }
            }
        }
        Ok(StageGroup {
            t_begin,
            t_end,
            stages,
        })
    }

    /// The composite time-1 map of the group (identity off the supports).
    pub fn time_one_map(&self) -> TimeOneMap {
        let mut pieces = Vec::new();
        for s in &self.stages {
            pieces.extend(s.time_one_pieces());
        }
        TimeOneMap::from_pieces_with_identity_complement(pieces)
            .expect("stage maps preserve measure")
    }

    /// Applies the group flow at a time inside the group to a point.
    fn eval_partial(&self, t: &Scalar, x: &Point) -> Result<Point, ScheduleError> {
        self.eval_directed(t, x, false)
    }

    /// Inverts the group flow at a time inside the group.
    fn eval_partial_inverse(&self, t: &Scalar, y: &Point) -> Result<Point, ScheduleError> {
        self.eval_directed(t, y, true)
    }

    fn eval_directed(&self, t: &Scalar, x: &Point, invert: bool) -> Result<Point, ScheduleError> {
        let mut value: Option<Point> = None;
        let mut interior = false;
        for s in &self.stages {
            if s.support().contains_interior(x) {
                interior = true;
            }
            if s.support().contains(x) {
                let y = if invert {
                    s.eval_inverse(t, x)?
                } else {
                    s.eval(t, x)?
                };
                match &value {
                    None => value = Some(y),
                    Some(prev) if *prev == y => {}
                    Some(_) => {
                        return Err(ScheduleError::UndefinedAt {
                            group: 0,
                            point: x.clone(),
                        })
                    }
                }
            }
        }
        match value {
            Some(v) if interior => Ok(v),
            // On a support boundary the stage motion must agree with the
            // identity outside; it never does, so flag it.
            Some(v) => {
                if v == *x {
                    Ok(v)
                } else {
                    Err(ScheduleError::UndefinedAt {
                        group: 0,
                        point: x.clone(),
                    })
                }
            }
            None => Ok(x.clone()),
        }
    }
}

/// An ordered list of stage groups over `[0, 1]`; time not covered by any
/// group flows by the identity.
#[derive(Clone, Debug, Default)]
pub struct FlowSchedule {
    groups: Vec<StageGroup>,
}

impl FlowSchedule {
    pub fn identity() -> Self {
        FlowSchedule { groups: Vec::new() }
    }

    pub fn from_groups(mut groups: Vec<StageGroup>) -> Result<Self, ScheduleError> {
        groups.sort_by(|a, b| a.t_begin.cmp(&b.t_begin));
        for g in &groups {
            if g.t_begin.is_negative() || g.t_end > Scalar::one() {
                return Err(ScheduleError::OutsideUnitInterval);
            }
        }
        for w in groups.windows(2) {
            if w[0].t_end > w[1].t_begin {
                return Err(ScheduleError::OverlappingGroups);
            }
        }
        Ok(FlowSchedule { groups })
    }

    pub fn groups(&self) -> &[StageGroup] {
        &self.groups
    }

    pub fn is_identity(&self) -> bool {
        self.groups.is_empty()
    }

    /// First time any stage runs (1 for the identity schedule).
    pub fn first_active_time(&self) -> Scalar {
        self.groups
            .first()
            .map(|g| g.t_begin.clone())
            .unwrap_or_else(Scalar::one)
    }

    /// Exact trajectory position through `x` at time `t`.
    pub fn eval(&self, t: &Scalar, x: &Point) -> Result<Point, ScheduleError> {
        if t.is_negative() || *t > Scalar::one() {
            return Err(ScheduleError::OutsideUnitInterval);
        }
        let mut pos = x.clone();
        for (gi, g) in self.groups.iter().enumerate() {
            if *t <= g.t_begin {
                break;
            }
            let r = if *t >= g.t_end {
                g.eval_partial(&g.t_end, &pos)
            } else {
                g.eval_partial(t, &pos)
            };
            pos = r.map_err(|e| match e {
                ScheduleError::UndefinedAt { point, .. } => {
                    ScheduleError::UndefinedAt { group: gi, point }
                }
                other => other,
            })?;
        }
        Ok(pos)
    }

    /// The position `x` with `X_t(x) = y`, exactly.
    pub fn eval_inverse(&self, t: &Scalar, y: &Point) -> Result<Point, ScheduleError> {
        if t.is_negative() || *t > Scalar::one() {
            return Err(ScheduleError::OutsideUnitInterval);
        }
        let mut pos = y.clone();
        for (gi, g) in self.groups.iter().enumerate().rev() {
            if *t <= g.t_begin {
                continue;
            }
            let r = if *t >= g.t_end {
                g.eval_partial_inverse(&g.t_end, &pos)
            } else {
                g.eval_partial_inverse(t, &pos)
            };
            pos = r.map_err(|e| match e {
                ScheduleError::UndefinedAt { point, .. } => {
                    ScheduleError::UndefinedAt { group: gi, point }
                }
                other => other,
            })?;
        }
        Ok(pos)
    }

    /// Symbolic composition of the group time-1 maps.
    pub fn time_one_map(&self) -> TimeOneMap {
        let mut m = TimeOneMap::identity();
        for g in &self.groups {
            m = g.time_one_map().compose(&m);
        }
        m
    }

    /// The stage group whose interior contains `t`, if any. Errors exactly at
    /// a boundary between stage activity, where the field may jump in time.
    pub fn group_at(&self, t: &Scalar) -> Result<Option<&StageGroup>, ScheduleError> {
        for g in &self.groups {
            if *t > g.t_begin && *t < g.t_end {
                return Ok(Some(g));
            }
            if *t == g.t_begin || *t == g.t_end {
                return Err(ScheduleError::BoundaryTime(t.clone()));
            }
        }
        Ok(None)
    }

    /// Affinely maps the schedule's `[0, 1]` time axis onto `[a, b]`.
    pub fn retimed(&self, a: &Scalar, b: &Scalar) -> Result<FlowSchedule, ScheduleError> {
        if a >= b || a.is_negative() || *b > Scalar::one() {
            return Err(ScheduleError::IntervalsDoNotAbut);
        }
        let span = b - a;
        let remap = |t: &Scalar| a + &(&span * t);
        let groups = self
            .groups
            .iter()
            .map(|g| StageGroup {
                t_begin: remap(&g.t_begin),
                t_end: remap(&g.t_end),
                stages: g.stages.iter().map(|s| s.retimed(remap)).collect(),
            })
            .collect();
        Ok(FlowSchedule { groups })
    }

    /// Time reversal: runs the inverse flow (each rotation reversed, each
    /// Baker stage inverted) in the opposite order.
    pub fn reversed(&self) -> FlowSchedule {
        let one = Scalar::one();
        let remap = |t: &Scalar| &one - t;
        let mut groups: Vec<StageGroup> = self
            .groups
            .iter()
            .map(|g| StageGroup {
                t_begin: remap(&g.t_end),
                t_end: remap(&g.t_begin),
                stages: g
                    .stages
                    .iter()
                    .map(|s| s.reversed_kind().retimed(remap))
                    .collect(),
            })
            .collect();
        groups.reverse();
        FlowSchedule { groups }
    }

    /// Concatenates a schedule on `[0, δ]` with one on `[δ, 1]`.
    pub fn compose_schedules(
        prefix: &FlowSchedule,
        suffix: &FlowSchedule,
        delta: &Scalar,
    ) -> Result<FlowSchedule, ScheduleError> {
        if delta.is_negative() || *delta > Scalar::one() {
            return Err(ScheduleError::OutsideUnitInterval);
        }
        for g in prefix.groups() {
            if g.t_end > *delta {
                return Err(ScheduleError::IntervalsDoNotAbut);
            }
        }
        for g in suffix.groups() {
            if g.t_begin < *delta {
                return Err(ScheduleError::IntervalsDoNotAbut);
            }
        }
        let mut groups = prefix.groups.clone();
        groups.extend(suffix.groups.iter().cloned());
        FlowSchedule::from_groups(groups)
    }

    /// Sampling times for L∞-in-time norms: the midpoint of every stage
    /// group. The constructed fields are constant in shape within groups, so
    /// midpoints determine the sup over time.
    pub fn group_midpoints(&self) -> Vec<Scalar> {
        self.groups
            .iter()
            .map(|g| (&g.t_begin + &g.t_end) * Scalar::ratio(1, 2))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::transposition_stage_pair;
    use crate::geom::Grid;
    use crate::sc;

    pub(crate) fn transposition_schedule(k1: &Rect, k2: &Rect) -> FlowSchedule {
        let [first, second] = transposition_stage_pair(k1, k2, sc!(0), sc!(1)).unwrap();
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
        FlowSchedule::from_groups(alloc::vec![g1, g2]).unwrap()
    }

    #[test]
    fn eval_at_zero_is_identity() {
        let g = Grid::new(2);
        let s = transposition_schedule(&g.square(0, 0).unwrap(), &g.square(1, 0).unwrap());
        let p = Point::new(sc!(1, 3), sc!(1, 5));
        assert_eq!(s.eval(&sc!(0), &p).unwrap(), p);
        let id = FlowSchedule::identity();
        assert_eq!(id.eval(&sc!(2, 3), &p).unwrap(), p);
    }

    #[test]
    fn transposition_time_one_swaps_centers() {
        let g = Grid::new(2);
        let k1 = g.square(0, 0).unwrap();
        let k2 = g.square(1, 0).unwrap();
        let s = transposition_schedule(&k1, &k2);
        assert_eq!(s.eval(&sc!(1), &k1.center()).unwrap(), k2.center());
        let m = s.time_one_map();
        assert_eq!(m.apply(&k1.center()).unwrap(), k2.center());
        // The square-translation restriction is the swap permutation.
        let p = m.as_square_permutation(g).unwrap();
        assert_eq!(p.image(), &[1, 0, 2, 3]);
    }

    #[test]
    fn eval_matches_time_one_map_on_samples() {
        let g = Grid::new(2);
        let s = transposition_schedule(&g.square(0, 1).unwrap(), &g.square(1, 1).unwrap());
        let m = s.time_one_map();
        for (x, y) in [
            (sc!(1, 3), sc!(5, 7)),
            (sc!(2, 7), sc!(9, 11)),
            (sc!(4, 5), sc!(13, 17)),
            (sc!(1, 9), sc!(1, 7)),
        ] {
            let p = Point::new(x, y);
            assert_eq!(s.eval(&sc!(1), &p).unwrap(), m.apply(&p).unwrap());
        }
    }

    #[test]
    fn compose_identity_prefix_keeps_time_one_map() {
        let g = Grid::new(2);
        let base = transposition_schedule(&g.square(0, 0).unwrap(), &g.square(0, 1).unwrap());
        let suffix = base.retimed(&sc!(1, 2), &sc!(1)).unwrap();
        let composed =
            FlowSchedule::compose_schedules(&FlowSchedule::identity(), &suffix, &sc!(1, 2))
                .unwrap();
        let p = Point::new(sc!(1, 7), sc!(2, 9));
        assert_eq!(
            composed.time_one_map().apply(&p).unwrap(),
            base.time_one_map().apply(&p).unwrap()
        );
    }

    #[test]
    fn compose_rejects_overlap() {
        let g = Grid::new(2);
        let base = transposition_schedule(&g.square(0, 0).unwrap(), &g.square(0, 1).unwrap());
        assert!(FlowSchedule::compose_schedules(&base, &base, &sc!(1, 2)).is_err());
    }

    #[test]
    fn reverse_composition_is_identity() {
        let g = Grid::new(2);
        let base = transposition_schedule(&g.square(0, 0).unwrap(), &g.square(1, 0).unwrap());
        let prefix = base.retimed(&sc!(0), &sc!(1, 2)).unwrap();
        let suffix = base.reversed().retimed(&sc!(1, 2), &sc!(1)).unwrap();
        let round = FlowSchedule::compose_schedules(&prefix, &suffix, &sc!(1, 2)).unwrap();
        let m = round.time_one_map();
        assert_eq!(m.pieces().len(), 1);
        assert!(m.pieces()[0].map.is_identity());
    }

    #[test]
    fn eval_inverse_round_trips() {
        let g = Grid::new(2);
        let s = transposition_schedule(&g.square(0, 0).unwrap(), &g.square(1, 0).unwrap());
        for t in [sc!(1, 5), sc!(1, 2), sc!(4, 7), sc!(1)] {
            for (x, y) in [(sc!(1, 3), sc!(1, 7)), (sc!(2, 3), sc!(6, 7))] {
                let p = Point::new(x.clone(), y.clone());
                let fwd = s.eval(&t, &p).unwrap();
                assert_eq!(s.eval_inverse(&t, &fwd).unwrap(), p);
            }
        }
    }

    #[test]
    fn group_at_flags_boundaries() {
        let g = Grid::new(2);
        let s = transposition_schedule(&g.square(0, 0).unwrap(), &g.square(1, 0).unwrap());
        assert!(matches!(
            s.group_at(&sc!(1, 2)),
            Err(ScheduleError::BoundaryTime(_))
        ));
        assert!(s.group_at(&sc!(1, 4)).unwrap().is_some());
    }
}
