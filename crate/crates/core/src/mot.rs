//! The classical discrete martingale transport LP, the shared coupling-LP
//! builder used by the relaxations, and dual hedge extraction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coupling::{
    anticausality_residual, causality_residual, marginal_residual, martingale_residual,
    CouplingTensor,
};
use crate::error::{Error, Result};
use crate::grid::{self, MultiIndex, ProductGrid};
use crate::lp::{self, LinearProgram, LpSolution, LpStatus, RowSense, Sense, SolverConfig};
use crate::marginals::{validate_system, Asset, MarginalSystem};
use crate::payoffs::{PayoffSpec, PayoffTable};

/// Tolerance of the grid-wide subhedging check.
pub const HEDGE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Min,
    Max,
}

impl Direction {
    /// `+1` for min, `-1` for max: every LP here minimizes `sign * payoff`.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Min => 1.0,
            Direction::Max => -1.0,
        }
    }

    pub fn both() -> [Direction; 2] {
        [Direction::Min, Direction::Max]
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::Min => "min",
            Direction::Max => "max",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotInstance {
    pub system: MarginalSystem,
    pub payoff: PayoffTable,
}

impl MotInstance {
    /// Validates the system and tabulates the payoff on its grid.
    pub fn new(system: MarginalSystem, payoff: &PayoffSpec) -> Result<Self> {
        let report = validate_system(&system);
        if !report.pass {
            let detail = report
                .failures()
                .map(|p| format!("{p:?}"))
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::invalid(format!("marginal system fails validation: {detail}")));
        }
        let payoff = payoff.tabulate(&system.product_grid())?;
        Ok(Self { system, payoff })
    }

    pub fn with_table(system: MarginalSystem, payoff: PayoffTable) -> Result<Self> {
        Self::new(system, &PayoffSpec::Table(payoff))
    }

    pub fn grid(&self) -> ProductGrid {
        self.system.product_grid()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarginalRow {
    pub axis: usize,
    pub point: usize,
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MartingaleRow {
    pub asset: Asset,
    pub t: usize,
    /// Multi-index of the history `(x_{1:t}, y_{1:t})`.
    pub history: Vec<usize>,
    pub row: usize,
}

/// Auxiliary variables holding one projection of the coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionVars {
    pub axes: Vec<usize>,
    pub first_var: usize,
    pub len: usize,
    pub first_link_row: usize,
}

impl ProjectionVars {
    pub fn var(&self, sub_flat: usize) -> usize {
        self.first_var + sub_flat
    }
}

/// An LP over coupling masses with marginal and joint-filtration martingale
/// rows, minimizing `sign * payoff`. Relaxations add projection variables and
/// further rows on top.
#[derive(Debug, Clone)]
pub struct CouplingLp {
    pub lp: LinearProgram,
    pub grid: ProductGrid,
    pub direction: Direction,
    pub payoff: Vec<f64>,
    pub marginal_rows: Vec<MarginalRow>,
    pub martingale_rows: Vec<MartingaleRow>,
    pub projections: BTreeMap<Vec<usize>, ProjectionVars>,
}

impl CouplingLp {
    pub fn new(instance: &MotInstance, direction: Direction) -> Result<Self> {
        let grid = instance.grid();
        let shape = grid.shape();
        if instance.payoff.shape != shape {
            return Err(Error::shape(format!(
                "payoff table shape {:?} does not match grid {shape:?}",
                instance.payoff.shape
            )));
        }
        let n = grid.maturities();
        let s = direction.sign();
        let mut lp = LinearProgram::new(Sense::Minimize);
        let all: Vec<Vec<usize>> = MultiIndex::new(&shape).collect();
        for (flat, &c) in instance.payoff.values.iter().enumerate() {
            let j = lp.add_var(0.0, f64::INFINITY, format!("pi{}", label_index(&all[flat])));
            lp.set_cost(j, s * c);
        }

        let mut marginal_rows = Vec::new();
        for axis in 0..grid.num_axes() {
            let mut rows = vec![Vec::new(); shape[axis]];
            for (flat, idx) in all.iter().enumerate() {
                rows[idx[axis]].push((flat, 1.0));
            }
            let masses = instance.system.axis_masses(axis);
            let (asset, t) = axis_name(axis, n);
            for (point, coeffs) in rows.into_iter().enumerate() {
                let row = lp.add_row(coeffs, RowSense::Eq, masses[point], format!("marginal_{asset}{t}_{point}"));
                marginal_rows.push(MarginalRow { axis, point, row });
            }
        }

        let mut martingale_rows = Vec::new();
        for t in 1..n {
            let history_axes: Vec<usize> = (0..t).chain(n..n + t).collect();
            let history_shape = grid.sub_shape(&history_axes);
            for asset in [Asset::X, Asset::Y] {
                let (cur, next) = match asset {
                    Asset::X => (t - 1, t),
                    Asset::Y => (n + t - 1, n + t),
                };
                let mut rows = vec![Vec::new(); grid.sub_len(&history_axes)];
                for (flat, idx) in all.iter().enumerate() {
                    let dz = grid.axis(next)[idx[next]] - grid.axis(cur)[idx[cur]];
                    if dz != 0.0 {
                        let h = history_axes.iter().fold(0, |acc, &a| acc * shape[a] + idx[a]);
                        rows[h].push((flat, dz));
                    }
                }
                for (h, coeffs) in rows.into_iter().enumerate() {
                    if coeffs.is_empty() {
                        continue;
                    }
                    let mut history = vec![0; history_axes.len()];
                    grid::unravel(h, &history_shape, &mut history);
                    let row = lp.add_row(
                        coeffs,
                        RowSense::Eq,
                        0.0,
                        format!("martingale_{asset}_t{t}_h{}", label_index(&history)),
                    );
                    martingale_rows.push(MartingaleRow { asset, t, history, row });
                }
            }
        }

        Ok(Self {
            lp,
            grid,
            direction,
            payoff: instance.payoff.values.clone(),
            marginal_rows,
            martingale_rows,
            projections: BTreeMap::new(),
        })
    }

    pub fn num_coupling_vars(&self) -> usize {
        self.grid.len()
    }

    /// Adds (or tightens) auxiliary variables `v(p) = sum of pi over the fiber of p`
    /// for the axis set `axes`, with `lower <= v <= upper`.
    pub fn projection_vars(&mut self, axes: &[usize], lower: &[f64], upper: &[f64]) -> Result<&ProjectionVars> {
        let len = self.grid.sub_len(axes);
        if lower.len() != len || upper.len() != len {
            return Err(Error::shape(format!(
                "bounds on axes {axes:?} need {len} entries, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if let Some(pv) = self.projections.get(axes) {
            for p in 0..len {
                let b = &mut self.lp.var_bounds[pv.first_var + p];
                b.0 = b.0.max(lower[p]);
                b.1 = b.1.min(upper[p]);
            }
            return Ok(&self.projections[axes]);
        }
        let shape = self.grid.shape();
        let sub_shape = self.grid.sub_shape(axes);
        let tag = axes.iter().map(|&a| {
            let (asset, t) = axis_name(a, self.grid.maturities());
            format!("{asset}{t}")
        });
        let tag = tag.collect::<Vec<_>>().join("");
        let first_var = self.lp.num_vars();
        let mut fibers = vec![Vec::new(); len];
        let mut idx = vec![0; shape.len()];
        for flat in 0..self.grid.len() {
            grid::unravel(flat, &shape, &mut idx);
            let sub = axes.iter().fold(0, |acc, &a| acc * shape[a] + idx[a]);
            fibers[sub].push((flat, 1.0));
        }
        let mut sub_idx = vec![0; axes.len()];
        for p in 0..len {
            grid::unravel(p, &sub_shape, &mut sub_idx);
            self.lp.add_var(lower[p], upper[p], format!("proj_{tag}{}", label_index(&sub_idx)));
        }
        let first_link_row = self.lp.num_rows();
        for (p, mut coeffs) in fibers.into_iter().enumerate() {
            coeffs.push((first_var + p, -1.0));
            self.lp.add_row(coeffs, RowSense::Eq, 0.0, format!("link_{tag}_{p}"));
        }
        self.projections.insert(
            axes.to_vec(),
            ProjectionVars {
                axes: axes.to_vec(),
                first_var,
                len,
                first_link_row,
            },
        );
        Ok(&self.projections[axes])
    }

    /// Solves the LP; infeasibility becomes [`Error::Infeasible`] with a
    /// phase-1 list of the rows that cannot be satisfied.
    pub fn solve(&self, config: &SolverConfig, context: &str) -> Result<LpSolution> {
        let sol = lp::solve(&self.lp, config)?;
        match sol.status {
            LpStatus::Optimal => Ok(sol),
            LpStatus::Infeasible => {
                let rows = lp::phase_one_diagnosis(&self.lp, config).unwrap_or_default();
                let mut families: Vec<String> = rows
                    .iter()
                    .map(|r| r.label.split('_').take(2).collect::<Vec<_>>().join("_"))
                    .collect();
                families.dedup();
                Err(Error::Infeasible {
                    context: context.into(),
                    diagnostic: format!(
                        "violated row families: {}; first rows: {}",
                        families.join(", "),
                        rows.iter().take(5).map(|r| format!("{} ({:.3e})", r.label, r.violation)).collect::<Vec<_>>().join(", ")
                    ),
                })
            }
            other => Err(Error::Solver {
                status: other.to_string(),
                context: context.into(),
            }),
        }
    }

    pub fn coupling_from(&self, sol: &LpSolution) -> Result<CouplingTensor> {
        CouplingTensor::from_solver(self.grid.clone(), &sol.primal[..self.grid.len()])
    }

    pub fn bound_value(&self, sol: &LpSolution) -> f64 {
        self.direction.sign() * sol.objective_value
    }
}

pub(crate) fn axis_name(axis: usize, n: usize) -> (Asset, usize) {
    if axis < n {
        (Asset::X, axis + 1)
    } else {
        (Asset::Y, axis - n + 1)
    }
}

fn label_index(idx: &[usize]) -> String {
    idx.iter().map(|i| format!("_{i}")).collect()
}

/// Static vanilla leg: one value per support point of one marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticLeg {
    pub asset: Asset,
    pub maturity_index: usize,
    pub points: Vec<f64>,
    pub values: Vec<f64>,
    /// Price of the leg under the marginal law.
    pub price: f64,
}

/// Position in one asset held over `(t, t+1]`, per joint history point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicLeg {
    pub asset: Asset,
    pub t: usize,
    pub history: Vec<usize>,
    pub position: f64,
}

/// A function of a partial path, from the dual of a projection-defining row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionLeg {
    pub axes: Vec<usize>,
    pub values: Vec<f64>,
}

/// Semi-static hedge read off the LP duals.
///
/// For a min bound the portfolio is a subhedge (`portfolio <= payoff` on every
/// grid path), for a max bound a superhedge. `subhedge_slack` is the smallest
/// `payoff - portfolio` (min) or `portfolio - payoff` (max) over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeReport {
    pub direction: Direction,
    pub static_legs: Vec<StaticLeg>,
    pub dynamic_legs: Vec<DynamicLeg>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub projection_legs: Vec<ProjectionLeg>,
    /// Dual value carried by envelope rows and projection-variable bounds.
    pub envelope_value: f64,
    pub static_price: f64,
    pub dual_objective: f64,
    pub primal_objective: f64,
    pub subhedge_slack: f64,
}

/// Maps row duals to hedge legs and checks the pathwise hedging inequality
/// and the dual objective identity.
pub fn extract_dual_hedge(model: &CouplingLp, solution: &LpSolution) -> Result<HedgeReport> {
    if !solution.is_optimal() {
        return Err(Error::Solver {
            status: solution.status.to_string(),
            context: "hedge extraction needs an optimal solution".into(),
        });
    }
    let s = model.direction.sign();
    let grid = &model.grid;
    let n = grid.maturities();
    let shape = grid.shape();
    let y = &solution.duals;

    let mut static_legs: Vec<StaticLeg> = (0..grid.num_axes())
        .map(|axis| {
            let (asset, t) = axis_name(axis, n);
            StaticLeg {
                asset,
                maturity_index: t,
                points: grid.axis(axis).to_vec(),
                values: vec![0.0; shape[axis]],
                price: 0.0,
            }
        })
        .collect();
    let mut static_price = 0.0;
    for r in &model.marginal_rows {
        let v = s * y[r.row];
        static_legs[r.axis].values[r.point] = v;
        let p = v * model.lp.rows[r.row].rhs;
        static_legs[r.axis].price += p;
        static_price += p;
    }
    let dynamic_legs: Vec<DynamicLeg> = model
        .martingale_rows
        .iter()
        .map(|r| DynamicLeg {
            asset: r.asset,
            t: r.t,
            history: r.history.clone(),
            position: s * y[r.row],
        })
        .collect();
    let projection_legs: Vec<ProjectionLeg> = model
        .projections
        .values()
        .map(|pv| ProjectionLeg {
            axes: pv.axes.clone(),
            values: (0..pv.len).map(|p| s * y[pv.first_link_row + p]).collect(),
        })
        .collect();

    // portfolio value on every grid path, assembled leg by leg
    let mut portfolio = vec![0.0; grid.len()];
    let mut dyn_lookup: BTreeMap<(usize, usize, Vec<usize>), f64> = BTreeMap::new();
    for d in &dynamic_legs {
        let axis = match d.asset {
            Asset::X => d.t - 1,
            Asset::Y => n + d.t - 1,
        };
        dyn_lookup.insert((axis, d.t, d.history.clone()), d.position);
    }
    for (flat, idx) in MultiIndex::new(&shape).enumerate() {
        let mut v = 0.0;
        for (axis, leg) in static_legs.iter().enumerate() {
            v += leg.values[idx[axis]];
        }
        for t in 1..n {
            let history: Vec<usize> = idx[..t].iter().chain(&idx[n..n + t]).copied().collect();
            for (cur, next) in [(t - 1, t), (n + t - 1, n + t)] {
                if let Some(pos) = dyn_lookup.get(&(cur, t, history.clone())) {
                    v += pos * (grid.axis(next)[idx[next]] - grid.axis(cur)[idx[cur]]);
                }
            }
        }
        for leg in &projection_legs {
            let sub = leg.axes.iter().fold(0, |acc, &a| acc * shape[a] + idx[a]);
            v += leg.values[sub];
        }
        portfolio[flat] = v;
    }
    let mut slack = f64::INFINITY;
    for (flat, &v) in portfolio.iter().enumerate() {
        slack = slack.min(s * (model.payoff[flat] - v));
    }
    let dual_objective = s * solution.dual_objective;
    let primal_objective = model.bound_value(solution);
    let envelope_value = dual_objective - static_price;

    let report = HedgeReport {
        direction: model.direction,
        static_legs,
        dynamic_legs,
        projection_legs,
        envelope_value,
        static_price,
        dual_objective,
        primal_objective,
        subhedge_slack: slack,
    };
    if slack < -HEDGE_TOL {
        return Err(Error::Numerical(format!(
            "hedge violates the pathwise inequality by {:.3e}",
            -slack
        )));
    }
    let gap = (dual_objective - primal_objective).abs();
    if gap > 1e-6 * (1.0 + primal_objective.abs()) {
        return Err(Error::Numerical(format!(
            "dual objective {dual_objective} differs from primal {primal_objective}"
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub marginal: f64,
    pub martingale: f64,
    pub causality: f64,
    pub anticausality: f64,
}

impl Residuals {
    pub fn of(coupling: &CouplingTensor, system: &MarginalSystem) -> Self {
        let n = coupling.maturities();
        let worst = |f: fn(&CouplingTensor, usize) -> Result<f64>| {
            (1..n).map(|t| f(coupling, t).unwrap_or(0.0)).fold(0.0, f64::max)
        };
        Self {
            marginal: marginal_residual(coupling, system),
            martingale: martingale_residual(coupling),
            causality: worst(causality_residual),
            anticausality: worst(anticausality_residual),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LpSize {
    pub vars: usize,
    pub rows: usize,
}

/// Optimal value of one bound LP with its optimizer and dual hedge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub method: String,
    pub direction: Direction,
    pub value: f64,
    pub coupling: CouplingTensor,
    pub hedge: HedgeReport,
    pub residuals: Residuals,
    pub duality_gap: f64,
    pub lp_size: LpSize,
}

pub(crate) fn finish_bound(
    method: &str,
    model: &CouplingLp,
    sol: &LpSolution,
    system: &MarginalSystem,
) -> Result<BoundResult> {
    let coupling = model.coupling_from(sol)?;
    let hedge = extract_dual_hedge(model, sol)?;
    let residuals = Residuals::of(&coupling, system);
    Ok(BoundResult {
        method: method.into(),
        direction: model.direction,
        value: model.bound_value(sol),
        residuals,
        duality_gap: lp::duality_gap(sol, &model.lp)?,
        lp_size: LpSize {
            vars: model.lp.num_vars(),
            rows: model.lp.num_rows(),
        },
        coupling,
        hedge,
    })
}

pub fn build_mot_lp(instance: &MotInstance, direction: Direction) -> Result<CouplingLp> {
    CouplingLp::new(instance, direction)
}

pub fn solve_mot(instance: &MotInstance, direction: Direction) -> Result<BoundResult> {
    solve_mot_with(instance, direction, &SolverConfig::default())
}

pub fn solve_mot_with(
    instance: &MotInstance,
    direction: Direction,
    config: &SolverConfig,
) -> Result<BoundResult> {
    let model = build_mot_lp(instance, direction)?;
    let sol = model.solve(config, "martingale transport LP is infeasible (convex order violated?)")?;
    finish_bound("mot", &model, &sol, &instance.system)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::independent_martingale_coupling;
    use crate::fixtures::{illustrative_payoff, illustrative_system};
    use crate::marginals::MarginalLaw;

    fn instance() -> MotInstance {
        MotInstance::new(illustrative_system(), &illustrative_payoff()).unwrap()
    }

    #[test]
    fn illustrative_bounds() {
        let inst = instance();
        let lo = solve_mot(&inst, Direction::Min).unwrap();
        let hi = solve_mot(&inst, Direction::Max).unwrap();
        assert!((lo.value - 20.93).abs() < 0.01, "min {}", lo.value);
        assert!((hi.value - 24.40).abs() < 0.01, "max {}", hi.value);
        assert_eq!(lo.lp_size.vars, 81);
        assert!(lo.residuals.martingale <= 1e-8);
        assert!(hi.residuals.martingale <= 1e-8);
        assert!(lo.hedge.subhedge_slack >= -HEDGE_TOL);
        assert!((lo.hedge.dual_objective - 20.93).abs() < 0.01);
        assert!(hi.duality_gap <= 1e-6 * (1.0 + hi.value.abs()));
        assert!(causality_residual(&lo.coupling, 1).unwrap() > 1e-6);
    }

    #[test]
    fn constant_payoff_and_translation() {
        let sys = illustrative_system();
        let shape = sys.product_grid().shape();
        let inst = MotInstance::with_table(sys.clone(), PayoffTable::constant(shape, 7.0)).unwrap();
        for d in Direction::both() {
            assert!((solve_mot(&inst, d).unwrap().value - 7.0).abs() < 1e-9);
        }
        let base = instance();
        let shifted = PayoffTable::new(
            base.payoff.shape.clone(),
            base.payoff.values.iter().map(|v| v + 3.5).collect(),
        )
        .unwrap();
        let shifted = MotInstance::with_table(sys, shifted).unwrap();
        for d in Direction::both() {
            let a = solve_mot(&base, d).unwrap().value;
            let b = solve_mot(&shifted, d).unwrap().value;
            assert!((b - a - 3.5).abs() < 1e-8);
        }
    }

    #[test]
    fn sandwich_around_independent_coupling() {
        let inst = instance();
        let c = independent_martingale_coupling(&inst.system).unwrap();
        let e = c.expectation(&inst.payoff.values);
        assert!(solve_mot(&inst, Direction::Min).unwrap().value <= e + 1e-8);
        assert!(solve_mot(&inst, Direction::Max).unwrap().value >= e - 1e-8);
    }

    #[test]
    fn point_mass_system() {
        let pm = |a, t, v| MarginalLaw::point_mass(a, t, v).unwrap();
        let sys = MarginalSystem::new(
            vec![pm(Asset::X, 1, 3.0), pm(Asset::X, 2, 3.0)],
            vec![pm(Asset::Y, 1, 4.0), pm(Asset::Y, 2, 4.0)],
        )
        .unwrap();
        let inst = MotInstance::new(sys, &PayoffSpec::BasketAsianCall { strike: 1.0 }).unwrap();
        for d in Direction::both() {
            assert!((solve_mot(&inst, d).unwrap().value - 2.5).abs() < 1e-9);
        }
    }

    #[test]
    fn single_maturity_hedge_identity() {
        let base = illustrative_system();
        let relabel = |a| {
            let l = base.law(a, 2);
            MarginalLaw::from_parts(a, 1, l.points().to_vec(), l.masses().to_vec()).unwrap()
        };
        let sys = MarginalSystem::new(vec![relabel(Asset::X)], vec![relabel(Asset::Y)]).unwrap();
        let values: Vec<f64> = (0..9).map(|i| ((i * 7) % 5) as f64).collect();
        let inst = MotInstance::with_table(sys, PayoffTable::new(vec![3, 3], values).unwrap()).unwrap();
        for d in Direction::both() {
            let r = solve_mot(&inst, d).unwrap();
            assert!((r.hedge.static_price - r.value).abs() < 1e-7);
            assert!(r.hedge.dynamic_legs.is_empty());
        }
    }

    #[test]
    fn infeasible_marginals_reported() {
        let x1 = MarginalLaw::from_parts(Asset::X, 1, vec![0.0, 20.0], vec![0.5, 0.5]).unwrap();
        let x2 = MarginalLaw::point_mass(Asset::X, 2, 10.0).unwrap();
        let y = |t| MarginalLaw::point_mass(Asset::Y, t, 1.0).unwrap();
        let sys = MarginalSystem::new(vec![x1, x2], vec![y(1), y(2)]).unwrap();
        let inst = MotInstance {
            payoff: PayoffTable::constant(sys.product_grid().shape(), 0.0),
            system: sys,
        };
        match solve_mot(&inst, Direction::Min) {
            Err(Error::Infeasible { diagnostic, .. }) => assert!(diagnostic.contains("martingale") || diagnostic.contains("marginal")),
            other => panic!("expected infeasible, got {other:?}"),
        }
        assert!(MotInstance::new(inst.system.clone(), &PayoffSpec::MaxSquaredIncrement).is_err());
    }
}
