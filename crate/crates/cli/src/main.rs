//! `mcmot`: validate marginals, calibrate them from option chains, bound
//! two-asset payoffs and collect ratio statistics.

mod bound;
mod input;
mod provenance;
mod ratio;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mcmot::calibration::{calibrate_with, feasibility_diagnosis, read_option_chain};
use mcmot::lp::SolverConfig;
use mcmot::marginals::{validate_system, Asset};
use serde::Serialize;
use serde_json::json;

use crate::input::SystemSource;
use crate::provenance::{with_provenance, write_json, Run};

pub const VALIDATION_SCHEMA: &str = "mcmot-validation-v1";

#[derive(Debug, Parser)]
#[command(name = "mcmot", version, about = "Model-free price bounds for options on two assets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that each asset's marginals increase in convex order.
    Validate(ValidateArgs),
    /// Fit marginals to a bid/ask option chain.
    Calibrate(CalibrateArgs),
    /// Price bounds by martingale transport, its McCormick relaxation, or branch-and-bound.
    Bound(bound::BoundArgs),
    /// Gap-reduction ratios over a batch of instances.
    Ratio(ratio::RatioArgs),
    /// Human-readable summary of earlier outputs.
    Report(report::ReportArgs),
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    source: SystemSource,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AssetArg {
    X,
    Y,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// CSV with header maturity_index,strike,bid,ask.
    #[arg(long)]
    quotes: PathBuf,
    /// JSON {"<maturity_index>": {"forward": F, "discount": D}}.
    #[arg(long)]
    sidecar: PathBuf,
    #[arg(long, value_enum, default_value = "x")]
    asset: AssetArg,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ValidationOutput<'a> {
    schema: &'static str,
    #[serde(flatten)]
    report: &'a mcmot::marginals::ValidationReport,
}

/// Raised when validation ran but the marginals failed it.
#[derive(Debug)]
struct ValidationFailed;

impl std::fmt::Display for ValidationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("marginals are not in convex order")
    }
}

impl std::error::Error for ValidationFailed {}

fn validate(args: &ValidateArgs, solver: &SolverConfig) -> Result<()> {
    let mut run = Run::new("validate");
    let system = args.source.load(&mut run)?;
    let report = validate_system(&system);
    let body = ValidationOutput {
        schema: VALIDATION_SCHEMA,
        report: &report,
    };
    let value = with_provenance(body, run.finish(json!({ "solver": solver })))?;
    write_json(args.output.as_ref(), &value)?;
    if report.pass {
        Ok(())
    } else {
        Err(ValidationFailed.into())
    }
}

fn calibrate(args: &CalibrateArgs, solver: &SolverConfig) -> Result<()> {
    let mut run = Run::new("calibrate");
    let quotes = run.read(&args.quotes)?;
    let sidecar = run.read(&args.sidecar)?;
    let slices = read_option_chain(quotes.as_bytes(), &sidecar)
        .with_context(|| format!("reading {}", args.quotes.display()))?;
    let asset = match args.asset {
        AssetArg::X => Asset::X,
        AssetArg::Y => Asset::Y,
    };
    let result = calibrate_with(&slices, asset, solver)?;
    let mut value = with_provenance(&result, run.finish(json!({ "asset": asset, "solver": solver })))?;
    if !result.all_quotes_feasible {
        value["diagnosis"] = serde_json::to_value(feasibility_diagnosis(&result))?;
    }
    write_json(args.output.as_ref(), &value)
}

/// Exit status for an error: 1 for failed validation, then one code per
/// library error category.
fn exit_code(err: &anyhow::Error) -> (u8, &'static str) {
    if err.downcast_ref::<ValidationFailed>().is_some() {
        return (1, "validation");
    }
    match err.chain().find_map(|e| e.downcast_ref::<mcmot::Error>()) {
        Some(e) => {
            let code = match e.category() {
                "invalid-input" | "shape-mismatch" | "out-of-range" => 3,
                "schema" => 4,
                "io" => 5,
                "infeasible" => 6,
                "solver" | "numerical" => 7,
                "internal-consistency" => 8,
                _ => 9,
            };
            (code, e.category())
        }
        None if err.chain().any(|e| e.is::<std::io::Error>()) => (5, "io"),
        None if err.chain().any(|e| e.is::<serde_json::Error>() || e.is::<csv::Error>()) => (4, "schema"),
        None => (9, "usage"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let solver = SolverConfig::from_env();
    let result = match &cli.command {
        Command::Validate(a) => validate(a, &solver),
        Command::Calibrate(a) => calibrate(a, &solver),
        Command::Bound(a) => bound::run(a, &solver),
        Command::Ratio(a) => ratio::run(a, &solver),
        Command::Report(a) => report::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, category) = exit_code(&err);
            eprintln!("error [{category}]: {err:#}");
            ExitCode::from(code)
        }
    }
}
