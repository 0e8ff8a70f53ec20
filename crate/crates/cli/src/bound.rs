use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use mcmot::bnb::{solve_bicausal, BnBConfig};
use mcmot::lp::SolverConfig;
use mcmot::mccormick::{build_mccormick_lp, solve_mccormick_with, CapacityBounds, McCormickInstance};
use mcmot::mot::{build_mot_lp, solve_mot_with, Direction, MotInstance};
use serde::Serialize;
use serde_json::{json, Value};

use crate::input::{default_payoff, parse_payoff, SystemSource};
use crate::provenance::{with_provenance, write_json, Run};

pub const BOUND_SCHEMA: &str = "mcmot-bound-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mot,
    Mccormick,
    Bicausal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionArg {
    Min,
    Max,
    Both,
}

impl DirectionArg {
    fn directions(self) -> Vec<Direction> {
        match self {
            DirectionArg::Min => vec![Direction::Min],
            DirectionArg::Max => vec![Direction::Max],
            DirectionArg::Both => Direction::both().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundsSource {
    Default,
    File,
}

#[derive(Debug, Clone, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub source: SystemSource,
    /// max-squared-increment, basket-asian=<strike> or table=<file>.
    #[arg(long)]
    pub payoff: Option<String>,
    #[arg(long, value_enum, default_value = "mot")]
    pub method: Method,
    #[arg(long, value_enum, default_value = "both")]
    pub direction: DirectionArg,
    /// Capacity bounds for the envelope methods.
    #[arg(long, value_enum, default_value = "default")]
    pub bounds: BoundsSource,
    /// Bounds JSON (schema mcmot-bounds-v1), with `--bounds file`.
    #[arg(long, required_if_eq("bounds", "file"))]
    pub bounds_file: Option<PathBuf>,
    /// Write each LP in CPLEX LP format; `_min`/`_max` is added before the extension.
    #[arg(long)]
    pub export_lp: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    pub gap_tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_nodes: usize,
    #[arg(long, default_value_t = 300.0)]
    pub time_limit: f64,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Interval {
    #[serde(skip_serializing_if = "Option::is_none")]
    min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max: Option<f64>,
}

#[derive(Debug, Serialize)]
struct BoundOutput {
    schema: &'static str,
    method: Method,
    payoff: Value,
    interval: Interval,
    results: Vec<Value>,
}

fn lp_path(base: &Path, d: Direction) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("lp");
    base.with_file_name(format!("{stem}_{d}.{ext}"))
}

pub fn run(args: &BoundArgs, solver: &SolverConfig) -> Result<()> {
    let mut run = Run::new("bound");
    let system = args.source.load(&mut run)?;
    let payoff = match &args.payoff {
        Some(spec) => parse_payoff(spec, &mut run)?,
        None if args.source.is_fixture() => default_payoff(),
        None => bail!("--payoff is required unless --fixture is used"),
    };
    if args.method == Method::Mot && args.bounds == BoundsSource::File {
        bail!("--bounds file only applies to --method mccormick or bicausal");
    }
    let mot = MotInstance::new(system.clone(), &payoff)?;
    let bounds = match (args.bounds, &args.bounds_file) {
        (BoundsSource::File, Some(path)) => {
            let text = run.read(path)?;
            Some(CapacityBounds::from_json(&text).with_context(|| format!("loading {}", path.display()))?)
        }
        _ => None,
    };
    let envelope = || -> Result<McCormickInstance> {
        Ok(match &bounds {
            Some(b) => McCormickInstance::new(mot.clone(), b.clone())?,
            None => McCormickInstance::with_default_bounds(mot.clone()),
        })
    };
    let bnb = BnBConfig {
        gap_tol: args.gap_tol,
        max_nodes: args.max_nodes,
        time_limit_secs: args.time_limit,
        solver: *solver,
        ..BnBConfig::default()
    };

    let mut interval = Interval { min: None, max: None };
    let mut results = Vec::new();
    for d in args.direction.directions() {
        if let Some(base) = &args.export_lp {
            let text = match args.method {
                Method::Mot => build_mot_lp(&mot, d)?.lp.to_lp_format(),
                Method::Mccormick | Method::Bicausal => build_mccormick_lp(&envelope()?, d)?.model.lp.to_lp_format(),
            };
            let path = lp_path(base, d);
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        let (value, result) = match args.method {
            Method::Mot => {
                let r = solve_mot_with(&mot, d, solver)?;
                (r.value, serde_json::to_value(&r)?)
            }
            Method::Mccormick => {
                let r = solve_mccormick_with(&envelope()?, d, solver)?;
                (r.value, serde_json::to_value(&r)?)
            }
            Method::Bicausal => {
                let r = solve_bicausal(&envelope()?, d, &bnb)?;
                (r.certified_bound(), serde_json::to_value(&r)?)
            }
        };
        match d {
            Direction::Min => interval.min = Some(value),
            Direction::Max => interval.max = Some(value),
        }
        results.push(result);
    }
    let output = BoundOutput {
        schema: BOUND_SCHEMA,
        method: args.method,
        payoff: serde_json::to_value(&payoff)?,
        interval,
        results,
    };
    let config = json!({
        "method": args.method,
        "direction": args.direction,
        "bounds": args.bounds,
        "solver": solver,
        "bnb": (args.method == Method::Bicausal).then_some(&bnb),
    });
    let value = with_provenance(output, run.finish(config))?;
    write_json(args.output.as_ref(), &value)
}
