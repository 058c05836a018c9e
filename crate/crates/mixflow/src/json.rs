//! Versioned JSON documents for schedules, permutations, models and reports.
//!
//! Rationals serialize as `"num/den"` strings (plain integers when the
//! denominator is 1) and round-trip exactly.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use mixflow_core::flows::{BakerStage, RotationStage};
use mixflow_core::geom::Rect;
use mixflow_core::schedule::{FlowSchedule, Stage, StageGroup};
use mixflow_core::{Grid, Scalar, SquarePermutation};

pub const SCHEDULE_FORMAT: &str = "mixflow/schedule";
pub const PERMUTATION_FORMAT: &str = "mixflow/permutation";
pub const MARKOV_FORMAT: &str = "mixflow/markov-summary";
pub const REPORT_FORMAT: &str = "mixflow/construction-report";
pub const FORMAT_VERSION: u32 = 1;

pub fn scalar_to_string(s: &Scalar) -> String {
    s.to_fraction_string()
}

pub fn scalar_from_str(s: &str) -> Result<Scalar> {
    s.parse::<Scalar>()
        .map_err(|e| anyhow!("bad rational: {e}"))
}

fn rect_to_doc(r: &Rect) -> [String; 4] {
    [
        scalar_to_string(&r.x_lo),
        scalar_to_string(&r.x_hi),
        scalar_to_string(&r.y_lo),
        scalar_to_string(&r.y_hi),
    ]
}

fn rect_from_doc(doc: &[String; 4]) -> Result<Rect> {
    Rect::new(
        scalar_from_str(&doc[0])?,
        scalar_from_str(&doc[1])?,
        scalar_from_str(&doc[2])?,
        scalar_from_str(&doc[3])?,
    )
    .map_err(|e| anyhow!("bad rect: {e}"))
}

/// Parses `"x_lo,x_hi,y_lo,y_hi"` as used by the CLI set flags.
pub fn rect_from_cli(spec: &str) -> Result<Rect> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 4 {
        bail!("expected x_lo,x_hi,y_lo,y_hi");
    }
    Rect::new(
        scalar_from_str(parts[0])?,
        scalar_from_str(parts[1])?,
        scalar_from_str(parts[2])?,
        scalar_from_str(parts[3])?,
    )
    .map_err(|e| anyhow!("bad rect: {e}"))
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct StageDoc {
    pub kind: String,
    pub rect: [String; 4],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quarter_turns: Option<i8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inverse: Option<bool>,
    pub t: [String; 2],
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct GroupDoc {
    pub t: [String; 2],
    pub stages: Vec<StageDoc>,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct ScheduleDoc {
    pub format: String,
    pub version: u32,
    /// Grid refinement of the square permutation the time-1 map restricts to.
    pub grid_d: usize,
    pub groups: Vec<GroupDoc>,
}

pub fn schedule_to_doc(s: &FlowSchedule, grid_d: usize) -> ScheduleDoc {
    let groups = s
        .groups()
        .iter()
        .map(|g| GroupDoc {
            t: [scalar_to_string(&g.t_begin), scalar_to_string(&g.t_end)],
            stages: g
                .stages
                .iter()
                .map(|stage| match stage {
                    Stage::Rotation(r) => StageDoc {
                        kind: "rotation".into(),
                        rect: rect_to_doc(&r.rect),
                        quarter_turns: Some(r.quarter_turns),
                        inverse: None,
                        t: [scalar_to_string(&r.t_begin), scalar_to_string(&r.t_end)],
                    },
                    Stage::Baker(b) => StageDoc {
                        kind: "baker".into(),
                        rect: rect_to_doc(&b.rect),
                        quarter_turns: None,
                        inverse: Some(b.inverse),
                        t: [scalar_to_string(&b.t_begin), scalar_to_string(&b.t_end)],
                    },
                })
                .collect(),
        })
        .collect();
    ScheduleDoc {
        format: SCHEDULE_FORMAT.into(),
        version: FORMAT_VERSION,
        grid_d,
        groups,
    }
}

pub fn schedule_from_doc(doc: &ScheduleDoc) -> Result<FlowSchedule> {
    if doc.format != SCHEDULE_FORMAT {
        bail!("unexpected document format `{}`", doc.format);
    }
    if doc.version != FORMAT_VERSION {
        bail!("unsupported schedule version {}", doc.version);
    }
    let mut groups = Vec::with_capacity(doc.groups.len());
    for g in &doc.groups {
        let t0 = scalar_from_str(&g.t[0])?;
        let t1 = scalar_from_str(&g.t[1])?;
        let mut stages = Vec::with_capacity(g.stages.len());
        for s in &g.stages {
            let rect = rect_from_doc(&s.rect)?;
            let s0 = scalar_from_str(&s.t[0])?;
            let s1 = scalar_from_str(&s.t[1])?;
            let stage = match s.kind.as_str() {
                "rotation" => Stage::Rotation(
                    RotationStage::new(
                        rect,
                        s.quarter_turns
                            .ok_or_else(|| anyhow!("rotation stage missing quarter_turns"))?,
                        s0,
                        s1,
                    )
                    .map_err(|e| anyhow!("{e}"))?,
                ),
                "baker" => Stage::Baker(
                    BakerStage::new(rect, s.inverse.unwrap_or(false), s0, s1)
                        .map_err(|e| anyhow!("{e}"))?,
                ),
                other => bail!("unknown stage kind `{other}`"),
            };
            stages.push(stage);
        }
        groups.push(StageGroup::new(t0, t1, stages).map_err(|e| anyhow!("{e}"))?);
    }
    FlowSchedule::from_groups(groups).map_err(|e| anyhow!("{e}"))
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct PermutationDoc {
    pub format: String,
    pub version: u32,
    pub d: usize,
    pub image: Vec<usize>,
}

pub fn permutation_to_doc(p: &SquarePermutation) -> PermutationDoc {
    PermutationDoc {
        format: PERMUTATION_FORMAT.into(),
        version: FORMAT_VERSION,
        d: p.grid().d,
        image: p.image().to_vec(),
    }
}

pub fn permutation_from_doc(doc: &PermutationDoc) -> Result<SquarePermutation> {
    if doc.format != PERMUTATION_FORMAT {
        bail!("unexpected document format `{}`", doc.format);
    }
    SquarePermutation::new(Grid::new(doc.d), doc.image.clone()).map_err(|e| anyhow!("{e}"))
}

/// Edge list serialization of a merge tree.
#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct MergeTreeDoc {
    pub edges: Vec<MergeEdgeDoc>,
    pub layers: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct MergeEdgeDoc {
    pub parent_cycle: usize,
    pub child_cycle: usize,
    pub parent_square: usize,
    pub child_square: usize,
    pub pair: [usize; 2],
}

pub fn merge_tree_to_doc(t: &mixflow_core::MergeTree) -> MergeTreeDoc {
    MergeTreeDoc {
        edges: t
            .edges
            .iter()
            .map(|e| MergeEdgeDoc {
                parent_cycle: e.parent_cycle,
                child_cycle: e.child_cycle,
                parent_square: e.parent_square,
                child_square: e.child_square,
                pair: [e.a, e.a_child],
            })
            .collect(),
        layers: t.layers.clone(),
    }
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct BudgetEntryDoc {
    pub step: String,
    pub distance: String,
    pub exact: bool,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct TvAtTimeDoc {
    pub t: String,
    pub continuous: String,
    pub jump: String,
    pub total: String,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct ConstructionReportDoc {
    pub format: String,
    pub version: u32,
    pub pipeline: String,
    pub d: usize,
    pub m: usize,
    pub delta: String,
    pub fine_grid_d: usize,
    pub cycle_length: usize,
    pub budget: Vec<BudgetEntryDoc>,
    pub tv_at_times: Vec<TvAtTimeDoc>,
    pub d_heuristic_lower_bound: String,
    pub d_meets_heuristic: bool,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct MarkovSummaryDoc {
    pub format: String,
    pub version: u32,
    pub n: usize,
    pub aperiodic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_exponent: Option<usize>,
    pub irreducible: bool,
    pub doubly_stochastic_exact: bool,
    pub uniform_fixed_exact: bool,
    pub eigenvalue_one_simple_exact: bool,
    pub lambda2_modulus: f64,
    pub lambda2_re: f64,
    pub lambda2_im: f64,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deviation_csv: Option<String>,
}

pub fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mixflow_core::construct::snake_cycle_schedule;
    use mixflow_core::geom::Point;

    #[test]
    fn schedule_round_trip_exact() {
        let (_, sched) =
            snake_cycle_schedule(2, &Scalar::ratio(1, 8), &Scalar::one()).unwrap();
        let doc = schedule_to_doc(&sched, 2);
        let text = serde_json::to_string(&doc).unwrap();
        let back: ScheduleDoc = serde_json::from_str(&text).unwrap();
        let restored = schedule_from_doc(&back).unwrap();
        let p = Point::new(Scalar::ratio(1, 3), Scalar::ratio(2, 7));
        let t = Scalar::ratio(5, 7);
        assert_eq!(
            sched.eval(&t, &p).unwrap(),
            restored.eval(&t, &p).unwrap()
        );
        assert_eq!(sched.groups().len(), restored.groups().len());
    }

    #[test]
    fn permutation_round_trip() {
        let p = SquarePermutation::new(Grid::new(2), vec![1, 0, 3, 2]).unwrap();
        let doc = permutation_to_doc(&p);
        let text = serde_json::to_string(&doc).unwrap();
        let back: PermutationDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(permutation_from_doc(&back).unwrap(), p);
    }

    #[test]
    fn scalar_strings_round_trip() {
        for s in ["-3/7", "22", "0", "1/1048576"] {
            let v = scalar_from_str(s).unwrap();
            assert_eq!(scalar_to_string(&v), s.trim_end_matches("/1"));
        }
    }
}
