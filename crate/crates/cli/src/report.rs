use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use mcmot::calibration::{feasibility_diagnosis, CalibrationResult, CALIBRATION_SCHEMA};
use mcmot::marginals::{Asset, MarginalSystem, MARGINALS_SCHEMA};
use mcmot::report::{Histogram, RatioRecord};
use serde_json::Value;

use crate::bound::BOUND_SCHEMA;
use crate::provenance::write_output;
use crate::VALIDATION_SCHEMA;

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Outputs of the other subcommands (JSON) or ratio CSVs.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

fn num(v: &Value) -> String {
    v.as_f64().map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

fn ratio_section(out: &mut String, text: &str, bins: usize) -> Result<()> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let records: Vec<RatioRecord> = reader.deserialize().collect::<Result<_, _>>()?;
    if records.is_empty() {
        bail!("ratio file has no records");
    }
    let ratios: Vec<f64> = records.iter().map(|r| r.ratio).collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    writeln!(out, "  ratio records: {}", records.len())?;
    writeln!(out, "  mean ratio {mean:.5} (average reduction {:.2}%)", 100.0 * (1.0 - mean))?;
    writeln!(out, "  range [{lo:.5}, {hi:.5}]")?;
    writeln!(out, "  degenerate: {}", records.iter().filter(|r| r.degenerate).count())?;
    let h = Histogram::of(&ratios, bins)?;
    let top = *h.counts.iter().max().unwrap_or(&1) as f64;
    for (i, c) in h.counts.iter().enumerate() {
        let bar = "#".repeat(((*c as f64 / top) * 40.0).round() as usize);
        writeln!(out, "  [{:.4}, {:.4}) {c:>5} {bar}", h.edges[i], h.edges[i + 1])?;
    }
    Ok(())
}

fn bound_section(out: &mut String, v: &Value) -> Result<()> {
    writeln!(out, "  method: {}", v["method"].as_str().unwrap_or("?"))?;
    writeln!(out, "  interval: [{}, {}]", num(&v["interval"]["min"]), num(&v["interval"]["max"]))?;
    for r in v["results"].as_array().into_iter().flatten() {
        let dir = r["direction"].as_str().unwrap_or("?");
        if r.get("nodes_explored").is_some() {
            writeln!(
                out,
                "  {dir}: certified [{}, {}], {} nodes, {}",
                num(&r["lower_bound"]),
                num(&r["upper_bound"]),
                r["nodes_explored"],
                r["terminated"].as_str().unwrap_or("?")
            )?;
        } else {
            writeln!(
                out,
                "  {dir}: {} (duality gap {}, hedge slack {})",
                num(&r["value"]),
                num(&r["duality_gap"]),
                num(&r["hedge"]["subhedge_slack"])
            )?;
        }
    }
    Ok(())
}

fn calibration_section(out: &mut String, text: &str) -> Result<()> {
    let cal = CalibrationResult::from_json(text)?;
    writeln!(out, "  asset {}: {} quotes", cal.asset, cal.fitted.len())?;
    writeln!(out, "  objective {:.8} (spread floor {:.8})", cal.objective, cal.spread_floor)?;
    let diag = feasibility_diagnosis(&cal);
    writeln!(
        out,
        "  all quotes feasible: {}; convex order: {}",
        cal.all_quotes_feasible, diag.convex_order_ok
    )?;
    for q in diag.quotes.iter().filter(|q| q.infeasible) {
        writeln!(
            out,
            "  outside spread: maturity {} strike {} by {:.3e} (scaled)",
            q.maturity_index, q.strike, q.distance
        )?;
    }
    Ok(())
}

fn marginals_section(out: &mut String, text: &str) -> Result<()> {
    let system = MarginalSystem::from_json(text)?;
    for asset in [Asset::X, Asset::Y] {
        for (t, law) in system.laws(asset).iter().enumerate() {
            writeln!(out, "  {asset}_{}: {} points, mean {:.6}", t + 1, law.len(), law.mean())?;
        }
    }
    Ok(())
}

pub fn run(args: &ReportArgs) -> Result<()> {
    let mut out = String::new();
    for path in &args.inputs {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        writeln!(out, "{}", path.display())?;
        if path.extension().is_some_and(|e| e == "csv") {
            ratio_section(&mut out, &text, args.bins).with_context(|| format!("in {}", path.display()))?;
            continue;
        }
        let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        match v["schema"].as_str() {
            Some(BOUND_SCHEMA) => bound_section(&mut out, &v)?,
            Some(CALIBRATION_SCHEMA) => calibration_section(&mut out, &text)?,
            Some(MARGINALS_SCHEMA) => marginals_section(&mut out, &text)?,
            Some(VALIDATION_SCHEMA) => {
                writeln!(out, "  convex order: {}", if v["pass"] == true { "pass" } else { "FAIL" })?;
                for p in v["pairs"].as_array().into_iter().flatten().filter(|p| p["ordered"] != true) {
                    writeln!(
                        out,
                        "  {}_{} -> {}_{}: mean gap {}, worst call violation {}",
                        p["asset"].as_str().unwrap_or("?"),
                        p["earlier"],
                        p["asset"].as_str().unwrap_or("?"),
                        p["later"],
                        num(&p["mean_gap"]),
                        num(&p["worst_violation"])
                    )?;
                }
            }
            other => bail!("{}: unrecognized schema {other:?}", path.display()),
        }
        if let Some(p) = v.get("provenance") {
            writeln!(
                out,
                "  produced by {} {} ({})",
                p["tool"].as_str().unwrap_or("?"),
                p["version"].as_str().unwrap_or("?"),
                p["command"].as_str().unwrap_or("?")
            )?;
        }
    }
    write_output(args.output.as_ref(), &out)
}
