//! Spatial branch-and-bound for the bicausal bound.
//!
//! Nodes are boxes on the projection variables of the McCormick relaxation.
//! Each node solves the envelope LP on its box; the smallest open relaxation
//! value is a valid bound, and bicausal couplings found along the way (either
//! directly or via [`repair_incumbent`]) give the other side of the interval.
//!
//! Internally every problem is a minimization of `sign * payoff`; the report
//! translates back to the requested direction.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::coupling::{
    bicausality_residual, marginal_residual, martingale_residual, BilinearIndex, CouplingTensor,
};
use crate::error::{Error, Result};
use crate::lp::{LpSolution, RowSense, SolverConfig};
use crate::marginals::Asset;
use crate::mccormick::{build_mccormick_lp_with_box, EnvelopeBox, McCormickInstance, McCormickLp};
use crate::mot::{CouplingLp, Direction, MotInstance};

/// Prefix masses below this are treated as zero when forming conditionals.
const ZERO_MASS: f64 = 1e-12;

/// Conditional factors below this are dropped from polishing rows.
const SMALL_FACTOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnBConfig {
    /// Absolute gap at which the interval counts as closed.
    pub gap_tol: f64,
    /// Largest causality/anticausality residual accepted on an incumbent.
    pub residual_tol: f64,
    pub max_nodes: usize,
    pub time_limit_secs: f64,
    /// Run the repair heuristic every this many nodes.
    pub repair_every: usize,
    pub repair_iterations: usize,
    pub min_split_width: f64,
    /// Only single-worker search is implemented; the flag is kept so reports
    /// state it explicitly.
    pub single_worker: bool,
    #[serde(skip)]
    pub solver: SolverConfig,
}

impl Default for BnBConfig {
    fn default() -> Self {
        Self {
            gap_tol: 1e-3,
            residual_tol: 1e-8,
            max_nodes: 10_000,
            time_limit_secs: 300.0,
            repair_every: 5,
            repair_iterations: 30,
            min_split_width: 1e-6,
            single_worker: true,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GapClosed,
    NodeBudget,
    TimeBudget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnBNode {
    pub id: usize,
    pub envelope: EnvelopeBox,
    /// Relaxation value in the internal minimization (`sign * payoff`).
    pub relaxation_value: f64,
    pub depth: usize,
}

/// A bicausal coupling with its payoff expectation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub coupling: CouplingTensor,
    pub value: f64,
    pub bicausal_residual: f64,
    pub martingale_residual: f64,
    pub repair_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnBReport {
    pub direction: Direction,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub incumbent: Option<Incumbent>,
    pub root_relaxation: f64,
    pub nodes_explored: usize,
    pub max_depth: usize,
    pub max_residual_of_incumbent: Option<f64>,
    pub terminated: Termination,
    /// Wall-clock time; left out of serialized reports so they are reproducible.
    #[serde(skip)]
    pub elapsed_secs: f64,
    pub single_worker: bool,
}

impl BnBReport {
    pub fn gap(&self) -> f64 {
        self.upper_bound - self.lower_bound
    }

    /// The bound the search certifies for its direction: the lower end of
    /// the interval for min, the upper end for max.
    pub fn certified_bound(&self) -> f64 {
        match self.direction {
            Direction::Min => self.lower_bound,
            Direction::Max => self.upper_bound,
        }
    }
}

/// Where to split a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchChoice {
    /// Index into [`McCormickLp::axis_sets`].
    pub axis_set: usize,
    pub entry: usize,
    pub score: f64,
    pub split_at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BranchOutcome {
    Split(BranchChoice, Box<(BnBNode, BnBNode)>),
    /// Every bilinear identity holds at the relaxation optimizer.
    ResidualFeasible,
}

/// Per-entry branching scores: for each violated identity `a b = c d` with
/// envelope variable `w`, and each factor `v` in `[L, U]` paired with `u`, the
/// entry of `v` collects `|v u - w| * (U - L) * (sum |envelope duals| + 1e-6)`.
pub fn branching_scores(lp: &McCormickLp, sol: &LpSolution, residual_tol: f64) -> Vec<Vec<f64>> {
    let mut scores: Vec<Vec<f64>> = lp
        .axis_sets
        .iter()
        .map(|a| vec![0.0; lp.envelope.table(a).len()])
        .collect();
    for term in &lp.terms {
        let v = term.vars.map(|j| sol.primal[j]);
        if (v[0] * v[1] - v[2] * v[3]).abs() <= residual_tol {
            continue;
        }
        let weight: f64 = term.rows.iter().map(|&r| sol.duals[r].abs()).sum::<f64>() + 1e-6;
        let w = sol.primal[term.w];
        for k in 0..4 {
            let (s, p) = term.entries[k];
            let error = (v[k] * v[k ^ 1] - w).abs();
            scores[s][p] += error * lp.envelope.table(&lp.axis_sets[s]).width(p) * weight;
        }
    }
    scores
}

/// Splits the node at the highest-scoring entry (lowest index on ties).
pub fn branch(
    node: &BnBNode,
    lp: &McCormickLp,
    sol: &LpSolution,
    config: &BnBConfig,
    next_id: usize,
) -> BranchOutcome {
    let scores = branching_scores(lp, sol, config.residual_tol);
    let mut best: Option<(usize, usize, f64)> = None;
    for (s, row) in scores.iter().enumerate() {
        let table = lp.envelope.table(&lp.axis_sets[s]);
        for (p, &score) in row.iter().enumerate() {
            if score > 0.0
                && table.width(p) > config.min_split_width
                && best.map_or(true, |(_, _, b)| score > b)
            {
                best = Some((s, p, score));
            }
        }
    }
    if best.is_none() {
        // violated identities whose factors all sit on bounds cannot occur in
        // exact arithmetic; fall back to the widest factor of a violated term
        let residuals = lp.term_residuals(sol);
        for (term, r) in lp.terms.iter().zip(residuals) {
            if r <= config.residual_tol {
                continue;
            }
            for &(s, p) in &term.entries {
                let w = lp.envelope.table(&lp.axis_sets[s]).width(p);
                if w > config.min_split_width && best.map_or(true, |(_, _, b)| w > b) {
                    best = Some((s, p, w));
                }
            }
        }
    }
    let Some((s, p, score)) = best else {
        return BranchOutcome::ResidualFeasible;
    };
    let axes = &lp.axis_sets[s];
    let table = lp.envelope.table(axes);
    let (l, u) = (table.lower[p], table.upper[p]);
    let var = lp.model.projections[axes].var(p);
    let split_at = sol.primal[var].clamp(l + 0.1 * (u - l), u - 0.1 * (u - l));
    let mut left = node.envelope.clone();
    left.tables.get_mut(axes).unwrap().upper[p] = split_at;
    let mut right = node.envelope.clone();
    right.tables.get_mut(axes).unwrap().lower[p] = split_at;
    let child = |envelope, id| BnBNode {
        id,
        envelope,
        relaxation_value: node.relaxation_value,
        depth: node.depth + 1,
    };
    BranchOutcome::Split(
        BranchChoice {
            axis_set: s,
            entry: p,
            score,
            split_at,
        },
        Box::new((child(left, next_id), child(right, next_id + 1))),
    )
}

/// Which conditional structure one polishing step holds fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PolishStep {
    /// Each asset's future given its own past: `pi(a) = K * pi(c)`.
    OwnKernels,
    /// The other asset at `t` given this asset's past: `pi(a) = R * pi(d)`.
    CrossKernels,
}

fn polish_step(
    mot: &MotInstance,
    direction: Direction,
    current: &CouplingTensor,
    step: PolishStep,
    config: &SolverConfig,
) -> Result<Option<CouplingTensor>> {
    let mut model = CouplingLp::new(mot, direction)?;
    let grid = model.grid.clone();
    let n = grid.maturities();
    for t in 1..n {
        for d in [Asset::X, Asset::Y] {
            let index = BilinearIndex::new(&grid, d, t)?;
            let proj = index.projections_of(current);
            let other = match step {
                PolishStep::OwnKernels => 2,
                PolishStep::CrossKernels => 3,
            };
            let free = |axes: &[usize]| {
                let len = grid.sub_len(axes);
                (vec![0.0; len], vec![1.0; len])
            };
            let (lo, hi) = free(&index.axes[0]);
            let a_first = model.projection_vars(&index.axes[0], &lo, &hi)?.first_var;
            let (lo, hi) = free(&index.axes[other]);
            let o_first = model.projection_vars(&index.axes[other], &lo, &hi)?.first_var;
            for p in &index.points {
                let prefix = proj[1][p[1]];
                // conditional factor: d/b for own kernels, c/b for cross kernels
                let factor = if prefix > ZERO_MASS {
                    let num = match step {
                        PolishStep::OwnKernels => proj[3][p[3]],
                        PolishStep::CrossKernels => proj[2][p[2]],
                    };
                    num / prefix
                } else {
                    0.0
                };
                let factor = if factor < SMALL_FACTOR { 0.0 } else { factor };
                model.lp.add_row(
                    vec![(a_first + p[0], 1.0), (o_first + p[other], -factor)],
                    RowSense::Eq,
                    0.0,
                    format!("polish_{d}_t{t}_{}", p[0]),
                );
            }
        }
    }
    match model.solve(config, "polishing step") {
        Ok(sol) => Ok(Some(model.coupling_from(&sol)?)),
        // a failed polish only means no candidate from this step
        Err(Error::Infeasible { .. } | Error::Solver { .. } | Error::Numerical(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Alternating bilinear polish: alternately fix each asset's own transition
/// kernels and the cross conditionals, re-solving the LP that is linear in
/// the rest. Returns the best bicausal coupling found, or `None` when no
/// step produced one within `residual_tol`.
pub fn repair_incumbent(
    coupling: &CouplingTensor,
    mot: &MotInstance,
    direction: Direction,
    iterations: usize,
    residual_tol: f64,
    config: &SolverConfig,
) -> Result<Option<Incumbent>> {
    let s = direction.sign();
    let accept = |c: &CouplingTensor, iters: usize| -> Option<Incumbent> {
        let bicausal = bicausality_residual(c);
        let mart = martingale_residual(c);
        (bicausal <= residual_tol
            && mart <= 1e-8
            && marginal_residual(c, &mot.system) <= 1e-8)
            .then(|| Incumbent {
                value: c.expectation(&mot.payoff.values),
                coupling: c.clone(),
                bicausal_residual: bicausal,
                martingale_residual: mart,
                repair_iterations: iters,
            })
    };
    let mut best = accept(coupling, 0);
    let mut current = coupling.clone();
    let mut last = f64::INFINITY;
    for it in 0..iterations {
        let step = if it % 2 == 0 {
            PolishStep::OwnKernels
        } else {
            PolishStep::CrossKernels
        };
        let Some(next) = polish_step(mot, direction, &current, step, config)? else {
            break;
        };
        let value = s * next.expectation(&mot.payoff.values);
        if let Some(cand) = accept(&next, it + 1) {
            if best.as_ref().map_or(true, |b| s * cand.value < s * b.value) {
                best = Some(cand);
            }
        }
        current = next;
        if it >= 1 && last - value <= 1e-10 {
            break;
        }
        last = value;
    }
    Ok(best)
}

struct Open {
    node: BnBNode,
    lp: McCormickLp,
    sol: LpSolution,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Open {}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Open {
    // max-heap: smallest relaxation value first, then smallest id
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .node
            .relaxation_value
            .total_cmp(&self.node.relaxation_value)
            .then(other.node.id.cmp(&self.node.id))
    }
}

fn solve_node(
    mot: &MotInstance,
    envelope: &EnvelopeBox,
    direction: Direction,
    config: &SolverConfig,
) -> Result<Option<(McCormickLp, LpSolution)>> {
    if envelope.is_empty_box() {
        return Ok(None);
    }
    let lp = build_mccormick_lp_with_box(mot, envelope, direction)?;
    match lp.solve(config) {
        Ok(sol) => Ok(Some((lp, sol))),
        Err(Error::Infeasible { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn solve_bicausal(
    instance: &McCormickInstance,
    direction: Direction,
    config: &BnBConfig,
) -> Result<BnBReport> {
    if !config.single_worker {
        return Err(Error::invalid("only single-worker branch-and-bound is available"));
    }
    instance.bounds.validate(&instance.mot.system)?;
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(config.time_limit_secs.max(0.0));
    let mot = &instance.mot;
    let s = direction.sign();
    let root_box = instance.bounds.effective_box();
    let solver = config.solver;

    let mut incumbent: Option<Incumbent> = None;
    let mut upper = f64::INFINITY;
    let offer = |cand: Option<Incumbent>, incumbent: &mut Option<Incumbent>, upper: &mut f64| {
        if let Some(c) = cand {
            if s * c.value < *upper {
                *upper = s * c.value;
                *incumbent = Some(c);
            }
        }
    };

    let Some((lp, sol)) = solve_node(mot, &root_box, direction, &solver)? else {
        return Err(Error::Infeasible {
            context: "root McCormick relaxation is infeasible".into(),
            diagnostic: "capacity bounds exclude every martingale coupling".into(),
        });
    };
    let root_relaxation = sol.objective_value;
    let mut heap = BinaryHeap::new();
    heap.push(Open {
        node: BnBNode {
            id: 0,
            envelope: root_box,
            relaxation_value: sol.objective_value,
            depth: 0,
        },
        lp,
        sol,
    });
    let mut next_id = 1;
    let mut explored = 1;
    let mut processed = 0;
    let mut max_depth = 0;
    let mut terminated = Termination::GapClosed;
    // smallest relaxation value among nodes dropped within the gap tolerance
    let mut pruned = f64::INFINITY;

    while let Some(open) = heap.pop() {
        if upper - open.node.relaxation_value <= config.gap_tol {
            heap.push(open);
            break;
        }
        if explored >= config.max_nodes {
            heap.push(open);
            terminated = Termination::NodeBudget;
            break;
        }
        if Instant::now() >= deadline {
            heap.push(open);
            terminated = Termination::TimeBudget;
            break;
        }
        let Open { node, lp, sol } = open;
        max_depth = max_depth.max(node.depth);
        let coupling = lp.model.coupling_from(&sol)?;
        let residual = bicausality_residual(&coupling);
        let due = processed % config.repair_every.max(1) == 0;
        processed += 1;
        if residual <= 10.0 * config.residual_tol || due {
            let cand = repair_incumbent(
                &coupling,
                mot,
                direction,
                config.repair_iterations,
                config.residual_tol,
                &solver,
            )?;
            offer(cand, &mut incumbent, &mut upper);
            if upper - node.relaxation_value <= config.gap_tol {
                pruned = pruned.min(node.relaxation_value);
                continue;
            }
        }
        match branch(&node, &lp, &sol, config, next_id) {
            BranchOutcome::ResidualFeasible => {
                // nothing left to split: the relaxation optimizer is the node optimum
                let cand = repair_incumbent(&coupling, mot, direction, 2, config.residual_tol, &solver)?;
                offer(cand, &mut incumbent, &mut upper);
                pruned = pruned.min(node.relaxation_value);
            }
            BranchOutcome::Split(_, children) => {
                next_id += 2;
                let (left, right) = *children;
                for mut child in [left, right] {
                    explored += 1;
                    if let Some((clp, csol)) = solve_node(mot, &child.envelope, direction, &solver)? {
                        child.relaxation_value = csol.objective_value.max(node.relaxation_value);
                        if upper - child.relaxation_value > config.gap_tol {
                            heap.push(Open {
                                node: child,
                                lp: clp,
                                sol: csol,
                            });
                        } else {
                            pruned = pruned.min(child.relaxation_value);
                        }
                    }
                }
            }
        }
    }

    let lower = heap
        .peek()
        .map_or(upper, |o| o.node.relaxation_value)
        .min(pruned)
        .min(upper);
    let (lower_bound, upper_bound) = match direction {
        Direction::Min => (lower, upper),
        Direction::Max => (-upper, -lower),
    };
    Ok(BnBReport {
        direction,
        lower_bound,
        upper_bound,
        max_residual_of_incumbent: incumbent.as_ref().map(|i| i.bicausal_residual),
        incumbent,
        root_relaxation: s * root_relaxation,
        nodes_explored: explored,
        max_depth,
        terminated,
        elapsed_secs: start.elapsed().as_secs_f64(),
        single_worker: config.single_worker,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{independent_martingale_coupling, individual_martingale_residual};
    use crate::fixtures::{illustrative_payoff, illustrative_system};
    use crate::mccormick::{build_mccormick_lp, solve_mccormick};
    use crate::payoffs::PayoffTable;

    fn instance() -> McCormickInstance {
        McCormickInstance::with_default_bounds(
            MotInstance::new(illustrative_system(), &illustrative_payoff()).unwrap(),
        )
    }

    #[test]
    fn repair_keeps_bicausal_inputs() {
        let inst = instance();
        let c = independent_martingale_coupling(&inst.mot.system).unwrap();
        let r = repair_incumbent(&c, &inst.mot, Direction::Min, 0, 1e-8, &SolverConfig::default())
            .unwrap()
            .unwrap();
        assert_eq!(r.coupling, c);
    }

    #[test]
    fn repair_from_relaxation_argmin() {
        let inst = instance();
        let relaxed = solve_mccormick(&inst, Direction::Min).unwrap();
        let r = repair_incumbent(
            &relaxed.coupling,
            &inst.mot,
            Direction::Min,
            30,
            1e-8,
            &SolverConfig::default(),
        )
        .unwrap()
        .expect("repair finds a bicausal coupling");
        assert!(r.value >= relaxed.value - 1e-7);
        assert!(r.bicausal_residual <= 1e-8);
    }

    #[test]
    fn constant_payoff_closes_at_root() {
        let sys = illustrative_system();
        let shape = sys.product_grid().shape();
        let mot = MotInstance::with_table(sys, PayoffTable::constant(shape, 4.0)).unwrap();
        let rep = solve_bicausal(
            &McCormickInstance::with_default_bounds(mot),
            Direction::Min,
            &BnBConfig::default(),
        )
        .unwrap();
        assert_eq!(rep.terminated, Termination::GapClosed);
        assert_eq!(rep.nodes_explored, 1);
        assert!((rep.lower_bound - 4.0).abs() < 1e-9 && (rep.upper_bound - 4.0).abs() < 1e-9);
    }

    #[test]
    fn root_branch_choice_has_maximal_score() {
        let inst = instance();
        let lp = build_mccormick_lp(&inst, Direction::Min).unwrap();
        let sol = lp.solve(&SolverConfig::default()).unwrap();
        let node = BnBNode {
            id: 0,
            envelope: lp.envelope.clone(),
            relaxation_value: sol.objective_value,
            depth: 0,
        };
        let scores = branching_scores(&lp, &sol, 1e-8);
        let BranchOutcome::Split(choice, children) = branch(&node, &lp, &sol, &BnBConfig::default(), 1)
        else {
            panic!("root must split");
        };
        let max = scores.iter().flatten().cloned().fold(0.0, f64::max);
        assert_eq!(choice.score, max);
        let (l, r) = *children;
        let axes = &lp.axis_sets[choice.axis_set];
        assert_eq!(l.envelope.table(axes).upper[choice.entry], choice.split_at);
        assert_eq!(r.envelope.table(axes).lower[choice.entry], choice.split_at);
    }

    #[test]
    fn illustrative_bicausal_bounds() {
        let inst = instance();
        let config = BnBConfig::default();
        let lo = solve_bicausal(&inst, Direction::Min, &config).unwrap();
        assert_eq!(lo.terminated, Termination::GapClosed);
        assert!(lo.gap() <= 1e-3 + 1e-12);
        assert!((lo.lower_bound - 21.64).abs() < 0.01, "{lo:?}");
        let inc = lo.incumbent.as_ref().unwrap();
        assert!(individual_martingale_residual(&inc.coupling) <= 1e-6);
        let hi = solve_bicausal(&inst, Direction::Max, &config).unwrap();
        assert!((hi.upper_bound - 24.40).abs() < 0.01, "{hi:?}");
    }
}
