use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use mcmot::lp::SolverConfig;
use mcmot::marginals::MarginalSystem;
use mcmot::mccormick::{solve_mccormick_with, McCormickInstance};
use mcmot::mot::{solve_mot_with, Direction, MotInstance};
use mcmot::report::{emit_histogram, records_to_csv, Interval, RatioRecord};
use mcmot::synthetic::synthetic_ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::json;

use crate::input::parse_payoff;
use crate::provenance::{with_provenance, write_json, write_output, Run};

pub const MANIFEST_SCHEMA: &str = "mcmot-ratio-manifest-v1";

#[derive(Debug, Clone, Args)]
pub struct RatioArgs {
    /// Number of synthetic calibrate-and-bound instances.
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    pub synthetic: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest number of quoted strikes per maturity in synthetic chains.
    #[arg(long, default_value_t = 6)]
    pub max_strikes: usize,
    /// Half bid/ask spread of synthetic quotes, in forward units.
    #[arg(long, default_value_t = 0.01)]
    pub spread: f64,
    /// JSON manifest listing marginal files and payoffs.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Ratio records CSV.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Histogram bar chart.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Histogram bin counts CSV.
    #[arg(long)]
    pub histogram_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Provenance JSON for the batch.
    #[arg(long)]
    pub provenance: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct Manifest {
    schema: String,
    instances: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Deserialize)]
struct ManifestEntry {
    label: String,
    marginals: PathBuf,
    payoff: String,
}

/// Runs `job` on every index, spread over `workers` threads; results keep
/// index order.
fn fan_out<T: Send>(count: usize, workers: usize, job: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let workers = workers.clamp(1, count.max(1));
    let mut slots: Vec<Option<Result<T>>> = (0..count).map(|_| None).collect();
    thread::scope(|scope| {
        let job = &job;
        let handles: Vec<_> = (0..workers)
            .map(|w| scope.spawn(move || (w..count).step_by(workers).map(|i| (i, job(i))).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("ratio worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every slot filled")).collect()
}

fn interval_of(mot: &MotInstance, solver: &SolverConfig) -> Result<(Interval, Interval)> {
    let mc = McCormickInstance::with_default_bounds(mot.clone());
    let classical = Interval::new(
        solve_mot_with(mot, Direction::Min, solver)?.value,
        solve_mot_with(mot, Direction::Max, solver)?.value,
    );
    let relaxed = Interval::new(
        solve_mccormick_with(&mc, Direction::Min, solver)?.value,
        solve_mccormick_with(&mc, Direction::Max, solver)?.value,
    );
    Ok((classical, relaxed))
}

fn manifest_records(
    run: &mut Run,
    path: &Path,
    workers: usize,
    solver: &SolverConfig,
) -> Result<Vec<RatioRecord>> {
    let text = run.read(path)?;
    let manifest: Manifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if manifest.schema != MANIFEST_SCHEMA {
        bail!("{}: expected schema {MANIFEST_SCHEMA:?}, found {:?}", path.display(), manifest.schema);
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut jobs = Vec::new();
    for entry in &manifest.instances {
        let file = base.join(&entry.marginals);
        let system = MarginalSystem::from_json(&run.read(&file)?)
            .with_context(|| format!("loading {}", file.display()))?;
        let payoff = parse_payoff(&entry.payoff, run)?;
        jobs.push((entry.label.clone(), MotInstance::new(system, &payoff)?));
    }
    fan_out(jobs.len(), workers, |i| {
        let (label, mot) = &jobs[i];
        let (classical, relaxed) = interval_of(mot, solver).with_context(|| format!("instance {label}"))?;
        Ok(RatioRecord::new(label.clone(), classical, relaxed)?)
    })
}

pub fn run(args: &RatioArgs, solver: &SolverConfig) -> Result<()> {
    let mut run = Run::new("ratio");
    let records = match (&args.manifest, args.synthetic) {
        (Some(path), _) => manifest_records(&mut run, path, args.workers, solver)?,
        (None, Some(count)) => fan_out(count, args.workers, |i| {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(i as u64));
            let label = format!("synthetic-{i}");
            synthetic_ratio(&mut rng, &label, args.max_strikes, args.spread, solver)
                .map_err(|e| anyhow!(e).context(format!("instance {label}")))
        })?,
        (None, None) => bail!("give --synthetic COUNT or --manifest FILE"),
    };
    if records.is_empty() {
        bail!("no instances to report");
    }
    write_output(Some(&args.output), &records_to_csv(&records)?)?;
    if args.svg.is_some() || args.histogram_csv.is_some() {
        let (csv, svg) = emit_histogram(&records, args.bins)?;
        if let Some(p) = &args.svg {
            write_output(Some(p), &svg)?;
        }
        if let Some(p) = &args.histogram_csv {
            write_output(Some(p), &csv)?;
        }
    }
    if let Some(p) = &args.provenance {
        let config = json!({
            "synthetic": args.synthetic,
            "seed": args.seed,
            "max_strikes": args.max_strikes,
            "spread": args.spread,
            "workers": args.workers,
            "bins": args.bins,
            "solver": solver,
        });
        let summary = json!({
            "records": records.len(),
            "degenerate": records.iter().filter(|r| r.degenerate).count(),
        });
        write_json(Some(p), &with_provenance(summary, run.finish(config))?)?;
    }
    Ok(())
}
