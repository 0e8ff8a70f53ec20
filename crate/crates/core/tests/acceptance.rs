//! Acceptance run: one PASS/FAIL line per criterion.

mod oracle;

use std::process::ExitCode;
use std::time::Instant;

use mcmot::bnb::{solve_bicausal, BnBConfig, BnBReport, Termination};
use mcmot::calibration::calibrate;
use mcmot::coupling::{
    anticausality_residual, bicausality_residual, causality_residual, independent_martingale_coupling,
    individual_martingale_residual, martingale_residual, testfunction_causality_gap, CouplingTensor,
};
use mcmot::fixtures::{illustrative_payoff, illustrative_system};
use mcmot::marginals::{call_value, check_convex_order, Asset, MarginalSystem};
use mcmot::mccormick::{solve_mccormick, McCormickInstance};
use mcmot::mot::{solve_mot, BoundResult, Direction, MotInstance};
use mcmot::payoffs::PayoffSpec;
use mcmot::report::{compute_ratio, Interval};
use mcmot::synthetic::{random_measure, random_system, random_table, synthetic_chain, synthetic_ratio};
use mcmot::lp::SolverConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NESTING_TOL: f64 = 1e-6;
const ORACLE_TOL: f64 = 1e-4;
const DUALITY_TOL: f64 = 1e-6;
const SUBHEDGE_TOL: f64 = 1e-7;
const RESIDUAL_TOL: f64 = 1e-9;
const INCUMBENT_MARTINGALE_TOL: f64 = 1e-6;
const CALIBRATION_TOL: f64 = 1e-7;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Result<Outcome, String>) -> bool {
    let start = Instant::now();
    let o = f().unwrap_or_else(|e| outcome(false, format!("error: {e}")));
    println!(
        "{} [{id}] {name}: {} ({:.2}s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        start.elapsed().as_secs_f64()
    );
    o.pass
}

fn near(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol
}

fn fixture() -> MotInstance {
    MotInstance::new(illustrative_system(), &illustrative_payoff()).expect("fixture instance")
}

/// Relative duality gap and subhedge slack of one bound solve.
fn certificate_ok(r: &BoundResult) -> Option<String> {
    let rel = r.duality_gap / r.value.abs().max(1.0);
    if rel > DUALITY_TOL || r.hedge.subhedge_slack < -SUBHEDGE_TOL {
        Some(format!(
            "{} {} gap {rel:.2e} slack {:.2e}",
            r.method, r.direction, r.hedge.subhedge_slack
        ))
    } else {
        None
    }
}

struct NestingCase {
    system: MarginalSystem,
    mot: [BoundResult; 2],
    mc: [BoundResult; 2],
    bnb: [BnBReport; 2],
    oracle: [Option<f64>; 2],
}

fn nesting_cases() -> Result<Vec<NestingCase>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut oracle_rng = ChaCha8Rng::seed_from_u64(77);
    let config = BnBConfig::default();
    let mut cases = Vec::new();
    for _ in 0..50 {
        let system = random_system(&mut rng).map_err(|e| e.to_string())?;
        let table = random_table(&mut rng, &system);
        let mot = MotInstance::new(system.clone(), &PayoffSpec::Table(table.clone())).map_err(|e| e.to_string())?;
        let mc = McCormickInstance::with_default_bounds(mot.clone());
        let solve = |d| -> Result<_, String> {
            Ok((
                solve_mot(&mot, d).map_err(|e| e.to_string())?,
                solve_mccormick(&mc, d).map_err(|e| e.to_string())?,
                solve_bicausal(&mc, d, &config).map_err(|e| e.to_string())?,
            ))
        };
        let (mot_min, mc_min, bnb_min) = solve(Direction::Min)?;
        let (mot_max, mc_max, bnb_max) = solve(Direction::Max)?;
        let oracle = [
            oracle::alternating_oracle(&mut oracle_rng, &system, &table.values, 1.0, 20).map(|o| o.value),
            oracle::alternating_oracle(&mut oracle_rng, &system, &table.values, -1.0, 20).map(|o| o.value),
        ];
        cases.push(NestingCase {
            system,
            mot: [mot_min, mot_max],
            mc: [mc_min, mc_max],
            bnb: [bnb_min, bnb_max],
            oracle,
        });
    }
    Ok(cases)
}

fn incumbent_value(r: &BnBReport) -> Option<f64> {
    r.incumbent.as_ref().map(|i| i.value)
}

fn criterion_nesting(cases: &[NestingCase]) -> Outcome {
    let mut failures = Vec::new();
    let mut oracle_misses = 0;
    let mut closed = 0;
    for (n, c) in cases.iter().enumerate() {
        let (Some(inc_min), Some(inc_max)) = (incumbent_value(&c.bnb[0]), incumbent_value(&c.bnb[1])) else {
            failures.push(format!("#{n}: no incumbent"));
            continue;
        };
        let chain = [
            c.mot[0].value,
            c.mc[0].value,
            c.bnb[0].lower_bound,
            inc_min,
            inc_max,
            c.bnb[1].upper_bound,
            c.mc[1].value,
            c.mot[1].value,
        ];
        if chain.windows(2).any(|w| w[0] > w[1] + NESTING_TOL) {
            failures.push(format!("#{n}: {chain:?}"));
        }
        closed += c.bnb.iter().filter(|b| b.terminated == Termination::GapClosed).count();
        match c.oracle {
            [Some(lo), Some(hi)] => {
                if lo < c.bnb[0].lower_bound - ORACLE_TOL || hi > c.bnb[1].upper_bound + ORACLE_TOL {
                    failures.push(format!(
                        "#{n}: oracle [{lo}, {hi}] beats certified [{}, {}]",
                        c.bnb[0].lower_bound, c.bnb[1].upper_bound
                    ));
                }
            }
            _ => oracle_misses += 1,
        }
    }
    if oracle_misses > 0 {
        failures.push(format!("oracle found no start on {oracle_misses} instances"));
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} instances, {closed}/{} searches gap-closed{}",
            cases.len(),
            2 * cases.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; {}", failures.join("; "))
            }
        ),
    )
}

fn criterion_duality(cases: &[NestingCase]) -> Result<Outcome, String> {
    let fx = fixture();
    let fmc = McCormickInstance::with_default_bounds(fx.clone());
    let mut results = Vec::new();
    for d in Direction::both() {
        results.push(solve_mot(&fx, d).map_err(|e| e.to_string())?);
        results.push(solve_mccormick(&fmc, d).map_err(|e| e.to_string())?);
    }
    let all: Vec<&BoundResult> = results
        .iter()
        .chain(cases.iter().flat_map(|c| c.mot.iter().chain(c.mc.iter())))
        .collect();
    let worst_gap = all
        .iter()
        .map(|r| r.duality_gap / r.value.abs().max(1.0))
        .fold(0.0, f64::max);
    let worst_slack = all.iter().map(|r| r.hedge.subhedge_slack).fold(f64::INFINITY, f64::min);
    let bad: Vec<String> = all.iter().filter_map(|r| certificate_ok(r)).collect();
    Ok(outcome(
        bad.is_empty(),
        format!(
            "{} solves, worst relative gap {worst_gap:.2e}, worst slack {worst_slack:.2e}{}",
            all.len(),
            if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }
        ),
    ))
}

fn criterion_residuals(cases: &[NestingCase]) -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst_indep = 0.0_f64;
    let mut worst_tf = 0.0_f64;
    let mut worst_inc = 0.0_f64;
    let mut pairs = 0;
    for c in cases {
        let pi: CouplingTensor = independent_martingale_coupling(&c.system).map_err(|e| e.to_string())?;
        let n = pi.maturities();
        for t in 1..n {
            worst_indep = worst_indep
                .max(causality_residual(&pi, t).map_err(|e| e.to_string())?)
                .max(anticausality_residual(&pi, t).map_err(|e| e.to_string())?);
        }
        worst_indep = worst_indep.max(martingale_residual(&pi));
        if bicausality_residual(&pi) == 0.0 || bicausality_residual(&pi) <= RESIDUAL_TOL {
            let grid = pi.grid();
            for _ in 0..2 {
                let t = rng.gen_range(1..=n);
                let y_axes: Vec<usize> = (n..n + t).collect();
                let x_axes: Vec<usize> = (0..n).collect();
                let h: Vec<f64> = (0..grid.sub_len(&y_axes)).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let g: Vec<f64> = (0..grid.sub_len(&x_axes)).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let gap = testfunction_causality_gap(&pi, t, &h, &g).map_err(|e| e.to_string())?;
                worst_tf = worst_tf.max(gap.abs());
                pairs += 1;
            }
        }
        for b in &c.bnb {
            if let Some(inc) = &b.incumbent {
                worst_inc = worst_inc.max(individual_martingale_residual(&inc.coupling));
            }
        }
    }
    let pass = worst_indep <= RESIDUAL_TOL
        && worst_tf <= RESIDUAL_TOL
        && worst_inc <= INCUMBENT_MARTINGALE_TOL
        && pairs == 100;
    Ok(outcome(
        pass,
        format!(
            "independent residual {worst_indep:.2e}, test-function gap {worst_tf:.2e} over {pairs} pairs, incumbent individual martingale {worst_inc:.2e}"
        ),
    ))
}

fn criterion_calibration() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_obj = 0.0_f64;
    let mut worst_quote = 0.0_f64;
    let mut worst_co = 0.0_f64;
    let mut failures = Vec::new();
    let mut runs = 0;
    for m in 0..30 {
        let measure = random_measure(&mut rng, 6);
        let discounts: Vec<f64> = (0..2).map(|_| rng.gen_range(0.95..1.0)).collect();
        for s in [0.01, 0.05] {
            let slices = synthetic_chain(&measure, s, &discounts).map_err(|e| e.to_string())?;
            let nq: usize = slices.iter().map(|sl| sl.quotes.len()).sum();
            let cal = calibrate(&slices, Asset::X).map_err(|e| e.to_string())?;
            runs += 1;
            let obj_err = (cal.objective - nq as f64 * 2.0 * s).abs();
            worst_obj = worst_obj.max(obj_err);
            for (t, slice) in slices.iter().enumerate() {
                let law = &cal.marginals[t];
                for q in &slice.quotes {
                    let scale = slice.discount * slice.forward;
                    let c = call_value(law, q.strike / slice.forward);
                    let (b, a) = (q.bid / scale, q.ask / scale);
                    worst_quote = worst_quote.max(b - c).max(c - a);
                }
            }
            let co = check_convex_order(&cal.marginals[0], &cal.marginals[1]);
            worst_co = worst_co.max(co.worst_violation).max(co.mean_gap.abs());
            if obj_err > CALIBRATION_TOL || !co.ordered {
                failures.push(format!("measure {m} s={s}: objective err {obj_err:.2e}, ordered {}", co.ordered));
            }
        }
    }
    let pass = failures.is_empty() && worst_quote <= CALIBRATION_TOL;
    Ok(outcome(
        pass,
        format!(
            "{runs} calibrations, objective err {worst_obj:.2e}, quote excess {worst_quote:.2e}, convex-order violation {worst_co:.2e}{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    ))
}

fn criterion_ratio() -> Result<Outcome, String> {
    let r = compute_ratio(Interval::new(0.87923, 1.30432), Interval::new(0.88730, 1.26458))
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let config = SolverConfig::default();
    let mut ratios = Vec::new();
    for i in 0..20 {
        let rec = synthetic_ratio(&mut rng, &format!("synthetic-{i}"), 6, 0.01, &config)
            .map_err(|e| format!("synthetic-{i}: {e}"))?;
        ratios.push(rec.ratio);
    }
    let in_range = ratios.iter().all(|&x| x > 0.0 && x <= 1.0);
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(outcome(
        near(r, 0.88752, 1e-5) && in_range,
        format!("tabulated ratio {r:.5}; {} synthetic ratios in [{lo:.4}, {hi:.4}]", ratios.len()),
    ))
}

fn main() -> ExitCode {
    let mut ok = true;

    ok &= run(1, "classical bound on the fixture", || {
        let start = Instant::now();
        let inst = fixture();
        let lo = solve_mot(&inst, Direction::Min).map_err(|e| e.to_string())?.value;
        let hi = solve_mot(&inst, Direction::Max).map_err(|e| e.to_string())?.value;
        let secs = start.elapsed().as_secs_f64();
        Ok(outcome(
            near(lo, 20.93, 0.01) && near(hi, 24.40, 0.01) && secs < 5.0,
            format!("[{lo:.4}, {hi:.4}] in {secs:.3}s"),
        ))
    });

    ok &= run(2, "McCormick bound on the fixture", || {
        let start = Instant::now();
        let inst = McCormickInstance::with_default_bounds(fixture());
        let lo = solve_mccormick(&inst, Direction::Min).map_err(|e| e.to_string())?.value;
        let hi = solve_mccormick(&inst, Direction::Max).map_err(|e| e.to_string())?.value;
        let secs = start.elapsed().as_secs_f64();
        Ok(outcome(
            near(lo, 21.50, 0.01) && near(hi, 24.40, 0.01) && secs < 30.0,
            format!("[{lo:.4}, {hi:.4}] in {secs:.3}s"),
        ))
    });

    ok &= run(3, "bicausal branch-and-bound on the fixture", || {
        let start = Instant::now();
        let inst = McCormickInstance::with_default_bounds(fixture());
        let config = BnBConfig::default();
        let min = solve_bicausal(&inst, Direction::Min, &config).map_err(|e| e.to_string())?;
        let max = solve_bicausal(&inst, Direction::Max, &config).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        let (lo, hi) = (min.certified_bound(), max.certified_bound());
        Ok(outcome(
            near(lo, 21.64, 0.01)
                && min.gap() <= config.gap_tol
                && near(hi, 24.40, 0.01)
                && secs < 300.0
                && min.single_worker
                && max.single_worker,
            format!(
                "[{lo:.4}, {hi:.4}], gaps {:.1e}/{:.1e}, {} + {} nodes in {secs:.3}s, single worker",
                min.gap(),
                max.gap(),
                min.nodes_explored,
                max.nodes_explored
            ),
        ))
    });

    let start = Instant::now();
    let cases = nesting_cases();
    let setup = start.elapsed().as_secs_f64();
    match &cases {
        Ok(cases) => {
            ok &= run(4, "nesting on random systems", || {
                let mut o = criterion_nesting(cases);
                o.detail.push_str(&format!(", solves took {setup:.2}s"));
                Ok(o)
            });
            ok &= run(5, "duality certificates", || criterion_duality(cases));
            ok &= run(6, "coupling residuals", || criterion_residuals(cases));
        }
        Err(e) => {
            for (id, name) in [
                (4, "nesting on random systems"),
                (5, "duality certificates"),
                (6, "coupling residuals"),
            ] {
                ok &= run(id, name, || Err(e.clone()));
            }
        }
    }

    ok &= run(7, "calibration round trip", criterion_calibration);
    ok &= run(8, "gap-reduction ratio", criterion_ratio);

    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
