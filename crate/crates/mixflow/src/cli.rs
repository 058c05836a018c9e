//! Command-line front end: construct schedules, run mixing experiments,
//! certify Markov models.
//!
//! Exit codes: 0 success, 1 runtime guard tripped (partial output written),
//! 2 usage error.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mixflow_core::construct::{build_cyclic, full_pipeline, ConstructionParams, Pipeline};
use mixflow_core::field::{field_at, total_variation};
use mixflow_core::markov::{build_model, permutation_only_model, MarkovModel};
use mixflow_core::mixing::{
    birkhoff_average, cesaro_weak_mixing, correlation_series_auto, mass_per_square,
    DEFAULT_PART_CAP,
};
use mixflow_core::{Grid, Point, RectUnion, Scalar, SquarePermutation};

use crate::json::{self, rect_from_cli, scalar_from_str, scalar_to_string};
use crate::manifest::ManifestBuilder;
use crate::spectral::spectral_gap;

#[derive(Parser)]
#[command(
    name = "mixflow",
    about = "Exact measure-preserving flows on the unit square: cyclic, ergodic and strongly mixing constructions with rational verification",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a flow schedule from a square permutation.
    Construct(ConstructArgs),
    /// Run correlation/Cesàro/Birkhoff/mass experiments on a schedule.
    Mix(MixArgs),
    /// Assemble and certify the Markov model of the pair-mixing step.
    Markov(MarkovArgs),
}

#[derive(Args)]
struct ConstructArgs {
    /// cyclic | ergodic | mixing
    #[arg(long)]
    pipeline: String,
    /// Grid subdivision of the input permutation.
    #[arg(long = "D")]
    d: usize,
    /// Refinement factor, a power of two ≥ 4.
    #[arg(long = "M")]
    m: usize,
    /// Freeze-window length as a rational in (0, 1/2), e.g. 1/8.
    #[arg(long)]
    delta: String,
    /// Path to a permutation JSON document, or the literal `identity`.
    #[arg(long, default_value = "identity")]
    perm: String,
    /// Output schedule document.
    #[arg(long)]
    out: PathBuf,
    /// Optional construction report (budget distances, TV samples).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Extra times at which the report samples the field's total variation.
    #[arg(long = "at-times")]
    at_times: Option<String>,
    /// Optional experiment manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct MixArgs {
    #[arg(long)]
    schedule: PathBuf,
    /// correlation | cesaro | birkhoff | mass
    #[arg(long)]
    mode: String,
    /// Rectangle "x_lo,x_hi,y_lo,y_hi" (rational entries).
    #[arg(long = "set-a")]
    set_a: Option<String>,
    #[arg(long = "set-b")]
    set_b: Option<String>,
    /// Iterations (correlation/cesaro/mass) or orbit length (birkhoff).
    #[arg(long = "n-max", default_value_t = 16)]
    n_max: usize,
    /// Number of deterministic starting points for birkhoff mode.
    #[arg(long, default_value_t = 16)]
    starts: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct MarkovArgs {
    /// State count (even); the cyclic shift defaults to the +1 shift.
    #[arg(long)]
    n: Option<usize>,
    /// Derive the state count and shift from a mixing schedule document.
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// Drop the pair mixers (negative control: a bare permutation).
    #[arg(long = "permutation-only", default_value_t = false)]
    permutation_only: bool,
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV of exact sup-norm deviations per starting state.
    #[arg(long)]
    deviations: Option<PathBuf>,
    #[arg(long = "q-max", default_value_t = 48)]
    q_max: usize,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// Runtime guard cap, overridable through `MIXFLOW_GUARD_CAP`.
pub fn guard_cap() -> usize {
    std::env::var("MIXFLOW_GUARD_CAP")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_PART_CAP)
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Construct(args) => cmd_construct(args),
        Command::Mix(args) => cmd_mix(args),
        Command::Markov(args) => cmd_markov(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn load_permutation(spec: &str, d: usize) -> Result<SquarePermutation> {
    if spec == "identity" {
        return Ok(SquarePermutation::identity(Grid::new(d)));
    }
    let doc: json::PermutationDoc = json::read_json(Path::new(spec))?;
    let p = json::permutation_from_doc(&doc)?;
    if p.grid().d != d {
        bail!("permutation grid {} does not match --D {}", p.grid().d, d);
    }
    Ok(p)
}

fn cmd_construct(args: ConstructArgs) -> Result<i32> {
    let pipeline = match args.pipeline.as_str() {
        "cyclic" => Pipeline::Cyclic,
        "ergodic" => Pipeline::Ergodic,
        "mixing" => Pipeline::StrongMixing,
        other => bail!("unknown pipeline `{other}` (expected cyclic|ergodic|mixing)"),
    };
    let delta = scalar_from_str(&args.delta)?;
    let params = ConstructionParams::new(args.d, args.m, delta.clone(), pipeline)
        .map_err(|e| anyhow!("{e}"))?;
    let p = load_permutation(&args.perm, args.d)?;
    let mut manifest = ManifestBuilder::new(
        "construct",
        serde_json::json!({
            "pipeline": args.pipeline,
            "D": args.d,
            "M": args.m,
            "delta": args.delta,
            "perm": args.perm,
        }),
    );
    if args.perm != "identity" {
        manifest.input(Path::new(&args.perm))?;
    }
    let out = full_pipeline(&p, &params).map_err(|e| anyhow!("{e}"))?;
    let fine_d = out.fine_grid.d;
    let cycle_length = {
        // The suffix realizes the merged single cycle by construction; report
        // its length from the underlying cyclic build.
        let cyclic = build_cyclic(&p, &params).map_err(|e| anyhow!("{e}"))?;
        cyclic.cycle.len()
    };
    let doc = json::schedule_to_doc(&out.schedule, fine_d);
    write_atomic(&args.out, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    manifest.output(&args.out);

    if let Some(report_path) = &args.report {
        let mut times: Vec<Scalar> = out.schedule.group_midpoints();
        if let Some(spec) = &args.at_times {
            for part in spec.split(',') {
                times.push(scalar_from_str(part.trim())?);
            }
        }
        let mut tv_at_times = Vec::new();
        for t in times {
            let Ok(field) = field_at(&out.schedule, &t) else {
                continue; // group boundary: field discontinuous there
            };
            let tv = total_variation(&field).map_err(|e| anyhow!("{e}"))?;
            tv_at_times.push(json::TvAtTimeDoc {
                t: scalar_to_string(&t),
                continuous: scalar_to_string(&tv.continuous),
                jump: scalar_to_string(&tv.jump),
                total: scalar_to_string(&tv.total()),
            });
        }
        let report = json::ConstructionReportDoc {
            format: json::REPORT_FORMAT.into(),
            version: json::FORMAT_VERSION,
            pipeline: args.pipeline.clone(),
            d: args.d,
            m: args.m,
            delta: args.delta.clone(),
            fine_grid_d: fine_d,
            cycle_length,
            budget: out
                .budget
                .iter()
                .map(|b| json::BudgetEntryDoc {
                    step: b.step.into(),
                    distance: scalar_to_string(&b.distance),
                    exact: b.exact,
                })
                .collect(),
            tv_at_times,
            d_heuristic_lower_bound: scalar_to_string(&out.d_heuristic_lower_bound),
            d_meets_heuristic: out.d_meets_heuristic,
        };
        write_atomic(report_path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
        manifest.output(report_path);
    }
    if let Some(mpath) = &args.manifest {
        json::write_json(mpath, &manifest.finish())?;
    }
    Ok(0)
}

fn cmd_mix(args: MixArgs) -> Result<i32> {
    let doc: json::ScheduleDoc = json::read_json(&args.schedule)?;
    let schedule = json::schedule_from_doc(&doc)?;
    let grid = Grid::new(doc.grid_d);
    let map = schedule.time_one_map();
    let cap = guard_cap();
    let mut manifest = ManifestBuilder::new(
        "mix",
        serde_json::json!({
            "schedule": args.schedule.display().to_string(),
            "mode": args.mode,
            "set_a": args.set_a,
            "set_b": args.set_b,
            "n_max": args.n_max,
            "starts": args.starts,
            "guard_cap": cap,
        }),
    );
    manifest.input(&args.schedule)?;
    let set = |spec: &Option<String>, name: &str| -> Result<RectUnion> {
        let spec = spec
            .as_ref()
            .ok_or_else(|| anyhow!("--{name} is required for this mode"))?;
        Ok(RectUnion::single(rect_from_cli(spec)?))
    };
    let mut truncated = false;
    let csv = match args.mode.as_str() {
        "correlation" | "cesaro" => {
            let a = set(&args.set_a, "set-a")?;
            let b = set(&args.set_b, "set-b")?;
            let series = correlation_series_auto(&map, grid, &a, &b, args.n_max, cap)
                .map_err(|e| anyhow!("{e}"))?;
            truncated = series.truncated;
            if args.mode == "correlation" {
                let mut out = String::from("n,value\n");
                for (n, v) in &series.entries {
                    out.push_str(&format!("{n},{}\n", scalar_to_string(v)));
                }
                out
            } else {
                let mut out = String::from("n,average\n");
                for (i, v) in cesaro_weak_mixing(&series).iter().enumerate() {
                    out.push_str(&format!("{},{}\n", i + 1, scalar_to_string(v)));
                }
                out
            }
        }
        "birkhoff" => {
            let a = set(&args.set_a, "set-a")?;
            let mut out = String::from("k,x,y,average\n");
            for k in 0..args.starts {
                let x = Scalar::ratio(((3 * k) % 100 + 1) as i64, 101);
                let y = Scalar::ratio(((7 * k) % 102 + 1) as i64, 103);
                let avg = birkhoff_average(&map, &Point::new(x.clone(), y.clone()), &a, args.n_max)
                    .map_err(|e| anyhow!("{e}"))?;
                out.push_str(&format!(
                    "{k},{},{},{}\n",
                    scalar_to_string(&x),
                    scalar_to_string(&y),
                    scalar_to_string(&avg)
                ));
            }
            out
        }
        "mass" => {
            let a = set(&args.set_a, "set-a")?;
            let mut out = String::from("q,square,mass\n");
            for q in 0..=args.n_max {
                match mass_per_square(&map, &a, grid, q, cap) {
                    Ok(masses) => {
                        for (sq, m) in masses.iter().enumerate() {
                            out.push_str(&format!("{q},{sq},{}\n", scalar_to_string(m)));
                        }
                    }
                    Err(e) => {
                        eprintln!("warning: guard tripped at q={q}: {e}");
                        truncated = true;
                        break;
                    }
                }
            }
            out
        }
        other => bail!("unknown mode `{other}`"),
    };
    write_atomic(&args.out, &csv)?;
    manifest.output(&args.out);
    if let Some(mpath) = &args.manifest {
        json::write_json(mpath, &manifest.finish())?;
    }
    if truncated {
        eprintln!("warning: series truncated by the rect-count guard (cap {cap})");
        return Ok(1);
    }
    Ok(0)
}

fn cmd_markov(args: MarkovArgs) -> Result<i32> {
    let (n, shift): (usize, Vec<usize>) = if let Some(path) = &args.schedule {
        let doc: json::ScheduleDoc = json::read_json(path)?;
        let schedule = json::schedule_from_doc(&doc)?;
        let grid = Grid::new(doc.grid_d);
        let perm = schedule
            .time_one_map()
            .as_square_permutation(grid)
            .map_err(|e| anyhow!("{e}"))?;
        let snake = mixflow_core::perm::snake_cycle(grid.d).map_err(|e| anyhow!("{e}"))?;
        let mut pos = vec![0usize; snake.len()];
        for (l, &sq) in snake.iter().enumerate() {
            pos[sq] = l;
        }
        let shift = (0..snake.len())
            .map(|l| pos[perm.apply(snake[l])])
            .collect();
        (snake.len(), shift)
    } else if let Some(n) = args.n {
        (n, (0..n).map(|l| (l + 1) % n).collect())
    } else {
        bail!("one of --n or --schedule is required");
    };
    let mut manifest = ManifestBuilder::new(
        "markov",
        serde_json::json!({
            "n": n,
            "schedule": args.schedule.as_ref().map(|p| p.display().to_string()),
            "permutation_only": args.permutation_only,
            "q_max": args.q_max,
        }),
    );
    if let Some(path) = &args.schedule {
        manifest.input(path)?;
    }
    let model: MarkovModel = if args.permutation_only {
        permutation_only_model(n, &shift).map_err(|e| anyhow!("{e}"))?
    } else {
        build_model(n, &shift).map_err(|e| anyhow!("{e}"))?
    };
    let spectral = spectral_gap(&model).map_err(|e| anyhow!("{e}"))?;
    let witness = model.aperiodicity_witness();
    let mut summary = json::MarkovSummaryDoc {
        format: json::MARKOV_FORMAT.into(),
        version: json::FORMAT_VERSION,
        n,
        aperiodic: witness.is_some(),
        witness_exponent: witness,
        irreducible: model.is_irreducible(),
        doubly_stochastic_exact: spectral.doubly_stochastic_exact,
        uniform_fixed_exact: spectral.uniform_fixed_exact,
        eigenvalue_one_simple_exact: spectral.eigenvalue_one_simple_exact,
        lambda2_modulus: spectral.lambda2_modulus,
        lambda2_re: spectral.lambda2.re,
        lambda2_im: spectral.lambda2.im,
        residual: spectral.residual,
        deviation_csv: None,
    };
    if let Some(dev_path) = &args.deviations {
        let devs = model.power_convergence(args.q_max);
        let mut csv = String::from("q,state,deviation\n");
        for (q, row) in devs.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                csv.push_str(&format!("{q},{k},{}\n", scalar_to_string(v)));
            }
        }
        write_atomic(dev_path, &csv)?;
        manifest.output(dev_path);
        summary.deviation_csv = Some(dev_path.display().to_string());
    }
    write_atomic(&args.out, &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    manifest.output(&args.out);
    if let Some(mpath) = &args.manifest {
        json::write_json(mpath, &manifest.finish())?;
    }
    Ok(0)
}

