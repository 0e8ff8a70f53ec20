//! Solver-agnostic sparse LP model, solve contract and certificate checks.
//!
//! Every optimization in the crate builds a [`LinearProgram`] and calls
//! [`solve`]. The concrete algorithm is HiGHS' dual simplex, with presolve-free
//! and interior-point retries when an attempt fails; nothing outside
//! this module touches the solver API.
//!
//! Dual sign convention: the Lagrangian is `c = A^T y + z`. For a minimize
//! problem the dual of a `>=` row is `>= 0` and of a `<=` row is `<= 0`; a
//! positive reduced cost `z_j` prices the lower bound of variable `j`. For a
//! maximize problem every sign is mirrored.

use std::fmt::{self, Write as _};
use std::time::Duration;

use highs::{HighsModelStatus, RowProblem, Sense as HighsSense};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    /// `+1` for minimize, `-1` for maximize.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowSense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub sense: Sense,
    pub var_bounds: Vec<(f64, f64)>,
    /// Sparse objective coefficients.
    pub objective: Vec<(usize, f64)>,
    pub objective_constant: f64,
    pub rows: Vec<Row>,
    pub var_labels: Vec<String>,
    pub row_labels: Vec<String>,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            var_bounds: Vec::new(),
            objective: Vec::new(),
            objective_constant: 0.0,
            rows: Vec::new(),
            var_labels: Vec::new(),
            row_labels: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.var_bounds.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, label: impl Into<String>) -> usize {
        self.var_bounds.push((lower, upper));
        self.var_labels.push(label.into());
        self.var_bounds.len() - 1
    }

    pub fn add_row(
        &mut self,
        coeffs: Vec<(usize, f64)>,
        sense: RowSense,
        rhs: f64,
        label: impl Into<String>,
    ) -> usize {
        self.rows.push(Row { coeffs, sense, rhs });
        self.row_labels.push(label.into());
        self.rows.len() - 1
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.objective.push((var, cost));
    }

    /// Dense objective vector (duplicate sparse entries are summed).
    pub fn dense_costs(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.num_vars()];
        for &(j, v) in &self.objective {
            c[j] += v;
        }
        c
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        for (j, &(lo, hi)) in self.var_bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::invalid(format!(
                    "variable {} has bounds [{lo}, {hi}]",
                    self.var_label(j)
                )));
            }
        }
        if let Some(&(j, _)) = self.objective.iter().find(|(j, _)| *j >= n) {
            return Err(Error::invalid(format!("objective references variable {j} >= {n}")));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if let Some(&(j, _)) = row.coeffs.iter().find(|(j, _)| *j >= n) {
                return Err(Error::invalid(format!(
                    "row {} references variable {j} >= {n}",
                    self.row_label(i)
                )));
            }
            if row.rhs.is_nan() || row.coeffs.iter().any(|(_, a)| !a.is_finite()) {
                return Err(Error::invalid(format!("row {} has non-finite data", self.row_label(i))));
            }
        }
        Ok(())
    }

    pub fn var_label(&self, j: usize) -> String {
        match self.var_labels.get(j) {
            Some(l) if !l.is_empty() => l.clone(),
            _ => format!("x{j}"),
        }
    }

    pub fn row_label(&self, i: usize) -> String {
        match self.row_labels.get(i) {
            Some(l) if !l.is_empty() => l.clone(),
            _ => format!("r{i}"),
        }
    }

    /// Row activities `A x`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.coeffs.iter().map(|&(j, a)| a * x[j]).sum())
            .collect()
    }

    /// Largest violation of a row or a variable bound at `x`.
    pub fn max_primal_infeasibility(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (row, act) in self.rows.iter().zip(self.activities(x)) {
            let v = match row.sense {
                RowSense::Le => act - row.rhs,
                RowSense::Ge => row.rhs - act,
                RowSense::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (&(lo, hi), &xj) in self.var_bounds.iter().zip(x) {
            worst = worst.max(lo - xj).max(xj - hi);
        }
        worst
    }

    /// Writes the model in CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::new();
        let name = |s: String| -> String {
            s.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
                .collect()
        };
        let vname = |j: usize| format!("v{j}_{}", name(self.var_label(j)));
        let term = |a: f64, j: usize| -> String {
            if a < 0.0 {
                format!(" - {} {}", -a, vname(j))
            } else {
                format!(" + {} {}", a, vname(j))
            }
        };
        let _ = writeln!(
            out,
            "{}",
            match self.sense {
                Sense::Minimize => "Minimize",
                Sense::Maximize => "Maximize",
            }
        );
        out.push_str(" obj:");
        for (j, &c) in self.dense_costs().iter().enumerate() {
            if c != 0.0 {
                out.push_str(&term(c, j));
            }
        }
        if self.objective_constant != 0.0 {
            let _ = write!(out, " + {} constant_one", self.objective_constant);
        }
        out.push_str("\nSubject To\n");
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(out, " c{i}_{}:", name(self.row_label(i)));
            if row.coeffs.is_empty() {
                out.push_str(" 0 constant_one");
            }
            for &(j, a) in &row.coeffs {
                out.push_str(&term(a, j));
            }
            let op = match row.sense {
                RowSense::Le => "<=",
                RowSense::Eq => "=",
                RowSense::Ge => ">=",
            };
            let _ = writeln!(out, " {op} {}", row.rhs);
        }
        out.push_str("Bounds\n");
        for (j, &(lo, hi)) in self.var_bounds.iter().enumerate() {
            let v = vname(j);
            match (lo.is_finite(), hi.is_finite()) {
                (false, false) => {
                    let _ = writeln!(out, " {v} free");
                }
                (true, true) => {
                    let _ = writeln!(out, " {lo} <= {v} <= {hi}");
                }
                (true, false) => {
                    let _ = writeln!(out, " {v} >= {lo}");
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= {v} <= {hi}");
                }
            }
        }
        out.push_str(" constant_one = 1\nEnd\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Bound on primal and dual infeasibility of an optimal solution.
    pub feasibility_tol: f64,
    /// Relative primal/dual objective gap accepted as optimal.
    pub optimality_gap: f64,
    pub time_limit: Option<f64>,
    pub iteration_limit: Option<u64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-8,
            optimality_gap: 1e-6,
            time_limit: None,
            iteration_limit: None,
        }
    }
}

impl SolverConfig {
    /// Default config with the feasibility tolerance read from
    /// `MCMOT_SOLVER_TOL` when that variable holds a positive number.
    pub fn from_env() -> Self {
        let mut config = Self::default();
        if let Some(tol) = std::env::var("MCMOT_SOLVER_TOL")
            .ok()
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|v| *v > 0.0 && v.is_finite())
        {
            config.feasibility_tol = tol;
        }
        config
    }

    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.time_limit = Some(limit.as_secs_f64());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    TimeLimit,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
            LpStatus::IterationLimit => "iteration-limit",
            LpStatus::TimeLimit => "time-limit",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective_value: f64,
    pub primal: Vec<f64>,
    /// One multiplier per row, in the module-level sign convention.
    pub duals: Vec<f64>,
    /// `c - A^T y`, recomputed from the row duals.
    pub reduced_costs: Vec<f64>,
    pub dual_objective: f64,
    pub max_primal_infeasibility: f64,
    pub max_dual_infeasibility: f64,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    fn empty(status: LpStatus, lp: &LinearProgram) -> Self {
        Self {
            status,
            objective_value: f64::NAN,
            primal: vec![f64::NAN; lp.num_vars()],
            duals: vec![f64::NAN; lp.num_rows()],
            reduced_costs: vec![f64::NAN; lp.num_vars()],
            dual_objective: f64::NAN,
            max_primal_infeasibility: f64::NAN,
            max_dual_infeasibility: f64::NAN,
        }
    }
}

/// Solves `lp`. Infeasible and unbounded problems are reported through
/// [`LpSolution::status`]; `Err` is reserved for invalid models and for
/// optimal solutions whose certificates miss the configured tolerances.
pub fn solve(lp: &LinearProgram, config: &SolverConfig) -> Result<LpSolution> {
    lp.validate()?;
    let mut first_err = None;
    for strategy in [Strategy::Simplex, Strategy::SimplexNoPresolve, Strategy::InteriorPoint] {
        match solve_once(lp, config, strategy) {
            Ok(sol) => return Ok(sol),
            Err(e @ (Error::Solver { .. } | Error::Numerical(_))) => {
                first_err.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(first_err.expect("at least one attempt ran"))
}

/// HiGHS settings tried in order when an attempt ends without a certified answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Strategy {
    Simplex,
    SimplexNoPresolve,
    InteriorPoint,
}

fn solve_once(lp: &LinearProgram, config: &SolverConfig, strategy: Strategy) -> Result<LpSolution> {
    let mut problem = RowProblem::default();
    let costs = lp.dense_costs();
    let cols: Vec<_> = lp
        .var_bounds
        .iter()
        .zip(&costs)
        .map(|(&(lo, hi), &c)| problem.add_column(c, lo..=hi))
        .collect();
    for row in &lp.rows {
        let factors = row.coeffs.iter().map(|&(j, a)| (cols[j], a));
        match row.sense {
            RowSense::Le => problem.add_row(..=row.rhs, factors),
            RowSense::Ge => problem.add_row(row.rhs.., factors),
            RowSense::Eq => problem.add_row(row.rhs..=row.rhs, factors),
        }
    }
    let sense = match lp.sense {
        Sense::Minimize => HighsSense::Minimise,
        Sense::Maximize => HighsSense::Maximise,
    };
    let mut model = problem.optimise(sense);
    model.make_quiet();
    model.set_option("threads", 1);
    model.set_option("random_seed", 0);
    match strategy {
        Strategy::Simplex => model.set_option("solver", "simplex"),
        Strategy::SimplexNoPresolve => {
            model.set_option("solver", "simplex");
            model.set_option("presolve", "off");
        }
        Strategy::InteriorPoint => {
            model.set_option("solver", "ipm");
            model.set_option("run_crossover", "on");
        }
    }
    let inner_tol = (config.feasibility_tol * 0.1).max(1e-12);
    model.set_option("primal_feasibility_tolerance", inner_tol);
    model.set_option("dual_feasibility_tolerance", inner_tol);
    if let Some(t) = config.time_limit {
        model.set_option("time_limit", t.max(1e-3));
    }
    if let Some(it) = config.iteration_limit {
        model.set_option("simplex_iteration_limit", it.min(i32::MAX as u64) as i32);
    }
    let solved = model.try_solve().map_err(|s| Error::Solver {
        status: format!("{s:?}"),
        context: "HiGHS rejected the model".into(),
    })?;

    let status = match solved.status() {
        HighsModelStatus::Optimal => LpStatus::Optimal,
        HighsModelStatus::ModelEmpty => LpStatus::Optimal,
        HighsModelStatus::Infeasible => LpStatus::Infeasible,
        HighsModelStatus::Unbounded => LpStatus::Unbounded,
        HighsModelStatus::UnboundedOrInfeasible => {
            return Ok(LpSolution::empty(classify_unbounded_or_infeasible(lp, config)?, lp));
        }
        HighsModelStatus::ReachedTimeLimit => LpStatus::TimeLimit,
        HighsModelStatus::ReachedIterationLimit => LpStatus::IterationLimit,
        other => {
            return Err(Error::Solver {
                status: format!("{other:?}"),
                context: "solve did not reach a verdict".into(),
            })
        }
    };
    if status != LpStatus::Optimal {
        return Ok(LpSolution::empty(status, lp));
    }

    let raw = solved.get_solution();
    let primal = raw.columns().to_vec();
    let duals = if lp.num_rows() == 0 {
        Vec::new()
    } else {
        raw.dual_rows().to_vec()
    };
    let sol = certify(lp, primal, duals);
    let tol = config.feasibility_tol;
    if sol.max_primal_infeasibility > tol || sol.max_dual_infeasibility > tol.max(1e-7) {
        return Err(Error::Numerical(format!(
            "optimal solve missed tolerance {tol}: primal infeasibility {:.3e}, dual infeasibility {:.3e}",
            sol.max_primal_infeasibility, sol.max_dual_infeasibility
        )));
    }
    let gap = (sol.objective_value - sol.dual_objective).abs();
    if gap > config.optimality_gap * (1.0 + sol.objective_value.abs()) {
        return Err(Error::Numerical(format!(
            "duality gap {gap:.3e} exceeds {} relative",
            config.optimality_gap
        )));
    }
    Ok(sol)
}

fn classify_unbounded_or_infeasible(lp: &LinearProgram, config: &SolverConfig) -> Result<LpStatus> {
    let mut feas = lp.clone();
    feas.objective.clear();
    let s = solve(&feas, config)?;
    Ok(if s.status == LpStatus::Infeasible {
        LpStatus::Infeasible
    } else {
        LpStatus::Unbounded
    })
}

/// Recomputes objective, reduced costs, dual objective and both infeasibility
/// measures from a primal/dual pair.
pub fn certify(lp: &LinearProgram, primal: Vec<f64>, duals: Vec<f64>) -> LpSolution {
    let sign = lp.sense.sign();
    let mut reduced = lp.dense_costs();
    for (row, &y) in lp.rows.iter().zip(&duals) {
        for &(j, a) in &row.coeffs {
            reduced[j] -= a * y;
        }
    }
    let mut dual_obj = lp.objective_constant;
    let mut dual_inf = 0.0_f64;
    for (row, &y) in lp.rows.iter().zip(&duals) {
        dual_obj += y * row.rhs;
        // sign-adjusted multiplier must be >= 0 on >= rows and <= 0 on <= rows
        let s = sign * y;
        match row.sense {
            RowSense::Ge => dual_inf = dual_inf.max(-s),
            RowSense::Le => dual_inf = dual_inf.max(s),
            RowSense::Eq => {}
        }
    }
    for (j, &z) in reduced.iter().enumerate() {
        let (lo, hi) = lp.var_bounds[j];
        let s = sign * z;
        let bound = if s > 0.0 { lo } else { hi };
        if bound.is_finite() {
            dual_obj += z * bound;
        } else {
            dual_inf = dual_inf.max(s.abs());
            dual_obj += z * primal[j];
        }
    }
    LpSolution {
        status: LpStatus::Optimal,
        objective_value: lp.objective_at(&primal),
        max_primal_infeasibility: lp.max_primal_infeasibility(&primal),
        primal,
        duals,
        reduced_costs: reduced,
        dual_objective: dual_obj,
        max_dual_infeasibility: dual_inf,
    }
}

/// `|primal objective - dual objective|` of an optimal solution.
pub fn duality_gap(solution: &LpSolution, lp: &LinearProgram) -> Result<f64> {
    if !solution.is_optimal() {
        return Err(Error::Solver {
            status: solution.status.to_string(),
            context: "duality gap needs an optimal solution".into(),
        });
    }
    let recomputed = certify(lp, solution.primal.clone(), solution.duals.clone());
    Ok((recomputed.objective_value - recomputed.dual_objective).abs())
}

/// A row whose elastic slack is positive in the phase-1 problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowViolation {
    pub row: usize,
    pub label: String,
    pub violation: f64,
}

/// Minimizes the total violation of `lp`'s rows (variable bounds kept hard)
/// and lists the rows that stay violated, largest first.
pub fn phase_one_diagnosis(lp: &LinearProgram, config: &SolverConfig) -> Result<Vec<RowViolation>> {
    let mut elastic = lp.clone();
    elastic.sense = Sense::Minimize;
    elastic.objective.clear();
    elastic.objective_constant = 0.0;
    let mut slacks = Vec::new();
    for i in 0..lp.num_rows() {
        let up = elastic.add_var(0.0, f64::INFINITY, format!("slack_up_{i}"));
        let down = elastic.add_var(0.0, f64::INFINITY, format!("slack_down_{i}"));
        elastic.rows[i].coeffs.push((up, 1.0));
        elastic.rows[i].coeffs.push((down, -1.0));
        elastic.set_cost(up, 1.0);
        elastic.set_cost(down, 1.0);
        slacks.push((up, down));
    }
    let sol = solve(&elastic, config)?;
    if !sol.is_optimal() {
        return Err(Error::Solver {
            status: sol.status.to_string(),
            context: "phase-1 diagnosis did not solve".into(),
        });
    }
    let mut out: Vec<RowViolation> = slacks
        .iter()
        .enumerate()
        .filter_map(|(i, &(u, d))| {
            let v = sol.primal[u] + sol.primal[d];
            (v > config.feasibility_tol).then(|| RowViolation {
                row: i,
                label: lp.row_label(i),
                violation: v,
            })
        })
        .collect();
    out.sort_by(|a, b| b.violation.total_cmp(&a.violation).then(a.row.cmp(&b.row)));
    Ok(out)
}
