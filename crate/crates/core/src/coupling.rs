//! Joint couplings over the full product support and the quantities measured
//! on them: projections, the bilinear causality residuals, martingale
//! residuals, and a feasible martingale coupling to start from.
//!
//! All conditional quantities are written with denominators cleared, e.g.
//! causality at maturity `t` is checked as
//!
//! ```text
//! pi(x_{1:N}, y_t) * pi(x_{1:t}) == pi(x_{1:t}, y_t) * pi(x_{1:N})
//! ```
//!
//! pointwise on the `(x_{1:N}, y_t)` grid, so zero-mass histories impose
//! nothing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, MultiIndex, ProductGrid};
use crate::lp::{self, LinearProgram, RowSense, Sense, SolverConfig};
use crate::marginals::{check_convex_order, Asset, MarginalLaw, MarginalSystem};

pub const COUPLING_SCHEMA: &str = "mcmot-coupling-v1";

/// Tolerance on `sum(masses) == 1` for a coupling.
pub const COUPLING_MASS_TOL: f64 = 1e-10;

/// Default absolute tolerance for residual checks.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Joint probability masses on the full product grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingTensor {
    grid: ProductGrid,
    masses: Vec<f64>,
}

impl CouplingTensor {
    pub fn new(grid: ProductGrid, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != grid.len() {
            return Err(Error::shape(format!(
                "coupling needs {} masses, got {}",
                grid.len(),
                masses.len()
            )));
        }
        if let Some(m) = masses.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return Err(Error::invalid(format!("coupling mass {m} outside [0, 1]")));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > COUPLING_MASS_TOL {
            return Err(Error::invalid(format!("coupling masses sum to {total}")));
        }
        Ok(Self { grid, masses })
    }

    /// Builds a coupling from solver output: clips round-off below zero and
    /// renormalizes the total mass.
    pub fn from_solver(grid: ProductGrid, raw: &[f64]) -> Result<Self> {
        let mut masses: Vec<f64> = raw.iter().map(|m| m.clamp(0.0, 1.0)).collect();
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Numerical(format!(
                "solver coupling carries total mass {total}"
            )));
        }
        masses.iter_mut().for_each(|m| *m /= total);
        Self::new(grid, masses)
    }

    pub fn grid(&self) -> &ProductGrid {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn shape(&self) -> Vec<usize> {
        self.grid.shape()
    }

    pub fn maturities(&self) -> usize {
        self.grid.maturities()
    }

    /// Point mass on the path with the given multi-index.
    pub fn single_path(grid: ProductGrid, index: &[usize]) -> Result<Self> {
        let shape = grid.shape();
        if index.len() != shape.len() || index.iter().zip(&shape).any(|(i, n)| i >= n) {
            return Err(Error::OutOfRange(format!("path {index:?} not on grid {shape:?}")));
        }
        let mut masses = vec![0.0; grid.len()];
        masses[grid::ravel(index, &shape)] = 1.0;
        Self::new(grid, masses)
    }

    /// Sum of masses over every axis not in `axes` (sorted ascending).
    pub fn project_axes(&self, axes: &[usize]) -> Vec<f64> {
        project_raw(&self.masses, &self.shape(), axes)
    }

    pub fn expectation(&self, values: &[f64]) -> f64 {
        self.masses.iter().zip(values).map(|(m, v)| m * v).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CouplingFile {
            schema: COUPLING_SCHEMA.into(),
            shape: self.shape(),
            axes: (0..self.grid.num_axes()).map(|a| self.grid.axis(a).to_vec()).collect(),
            masses: self.masses.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CouplingFile = serde_json::from_str(text)?;
        if file.schema != COUPLING_SCHEMA {
            return Err(Error::schema(
                "schema",
                format!("expected {COUPLING_SCHEMA:?}, found {:?}", file.schema),
            ));
        }
        if file.axes.len() % 2 != 0 || file.shape != file.axes.iter().map(Vec::len).collect::<Vec<_>>()
        {
            return Err(Error::schema("shape", "shape does not match the axis point lists"));
        }
        let n = file.axes.len() / 2;
        let mut axes = file.axes;
        let y = axes.split_off(n);
        Self::new(ProductGrid::new(axes, y)?, file.masses)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CouplingFile {
    schema: String,
    shape: Vec<usize>,
    axes: Vec<Vec<f64>>,
    masses: Vec<f64>,
}

/// Partial sum of a row-major tensor onto the sorted axis subset `axes`.
pub fn project_raw(masses: &[f64], shape: &[usize], axes: &[usize]) -> Vec<f64> {
    let sub_len: usize = axes.iter().map(|&a| shape[a]).product();
    let mut out = vec![0.0; sub_len];
    let mut idx = vec![0; shape.len()];
    for (flat, &m) in masses.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        grid::unravel(flat, shape, &mut idx);
        let sub = axes.iter().fold(0, |acc, &a| acc * shape[a] + idx[a]);
        out[sub] += m;
    }
    out
}

/// Which coordinates a projection keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "t", rename_all = "snake_case")]
pub enum ProjectionKey {
    /// `x_{1:t}`
    XPrefix(usize),
    /// `x_{1:N}`
    XFull,
    /// `(x_{1:N}, y_t)`
    XFullWithYt(usize),
    /// `(x_{1:t}, y_t)`
    XPrefixWithYt(usize),
    YPrefix(usize),
    YFull,
    YFullWithXt(usize),
    YPrefixWithXt(usize),
    SingleX(usize),
    SingleY(usize),
    /// Every coordinate; the identity projection.
    Full,
}

impl ProjectionKey {
    pub fn maturity(&self) -> Option<usize> {
        use ProjectionKey::*;
        match *self {
            XPrefix(t) | XFullWithYt(t) | XPrefixWithYt(t) | YPrefix(t) | YFullWithXt(t)
            | YPrefixWithXt(t) | SingleX(t) | SingleY(t) => Some(t),
            XFull | YFull | Full => None,
        }
    }

    /// Sorted axis list of the projection on a system with `n` maturities.
    pub fn axes(&self, n: usize) -> Result<Vec<usize>> {
        use ProjectionKey::*;
        if let Some(t) = self.maturity() {
            if t == 0 || t > n {
                return Err(Error::OutOfRange(format!(
                    "maturity {t} of {self:?} outside 1..={n}"
                )));
            }
        }
        let xs = |k: usize| 0..k;
        let ys = |k: usize| n..n + k;
        let axes: Vec<usize> = match *self {
            XPrefix(t) => xs(t).collect(),
            XFull => xs(n).collect(),
            XFullWithYt(t) => xs(n).chain([n + t - 1]).collect(),
            XPrefixWithYt(t) => xs(t).chain([n + t - 1]).collect(),
            YPrefix(t) => ys(t).collect(),
            YFull => ys(n).collect(),
            YFullWithXt(t) => [t - 1].into_iter().chain(ys(n)).collect(),
            YPrefixWithXt(t) => [t - 1].into_iter().chain(ys(t)).collect(),
            SingleX(t) => vec![t - 1],
            SingleY(t) => vec![n + t - 1],
            Full => (0..2 * n).collect(),
        };
        Ok(axes)
    }

    /// Stable name used in file formats.
    pub fn family_name(&self) -> &'static str {
        use ProjectionKey::*;
        match self {
            XPrefix(_) => "x_prefix",
            XFull => "x_full",
            XFullWithYt(_) => "x_full_with_yt",
            XPrefixWithYt(_) => "x_prefix_with_yt",
            YPrefix(_) => "y_prefix",
            YFull => "y_full",
            YFullWithXt(_) => "y_full_with_xt",
            YPrefixWithXt(_) => "y_prefix_with_xt",
            SingleX(_) => "single_x",
            SingleY(_) => "single_y",
            Full => "full",
        }
    }

    pub fn from_family_name(name: &str, t: Option<usize>) -> Result<Self> {
        use ProjectionKey::*;
        let need_t = || t.ok_or_else(|| Error::schema(name, "family needs a maturity index t"));
        Ok(match name {
            "x_prefix" => XPrefix(need_t()?),
            "x_full" => XFull,
            "x_full_with_yt" => XFullWithYt(need_t()?),
            "x_prefix_with_yt" => XPrefixWithYt(need_t()?),
            "y_prefix" => YPrefix(need_t()?),
            "y_full" => YFull,
            "y_full_with_xt" => YFullWithXt(need_t()?),
            "y_prefix_with_xt" => YPrefixWithXt(need_t()?),
            "single_x" => SingleX(need_t()?),
            "single_y" => SingleY(need_t()?),
            "full" => Full,
            other => return Err(Error::schema("family", format!("unknown family {other:?}"))),
        })
    }
}

/// A projected mass table.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub key: ProjectionKey,
    pub axes: Vec<usize>,
    pub shape: Vec<usize>,
    pub masses: Vec<f64>,
}

pub fn project(coupling: &CouplingTensor, key: ProjectionKey) -> Result<Projection> {
    let axes = key.axes(coupling.maturities())?;
    Ok(Projection {
        key,
        shape: coupling.grid().sub_shape(&axes),
        masses: coupling.project_axes(&axes),
        axes,
    })
}

/// The four projections of one bilinear identity `A * B = C * D`.
///
/// Causality at `t` (direction X) uses `A = (x_{1:N}, y_t)`, `B = x_{1:t}`,
/// `C = (x_{1:t}, y_t)`, `D = x_{1:N}`; anticausality (direction Y) swaps the
/// roles of the assets.
#[derive(Debug, Clone)]
pub struct BilinearIndex {
    pub direction: Asset,
    pub t: usize,
    pub keys: [ProjectionKey; 4],
    pub axes: [Vec<usize>; 4],
    /// For every point of the `A` grid, its flat index in each of the four projections.
    pub points: Vec<[usize; 4]>,
}

impl BilinearIndex {
    pub fn new(grid: &ProductGrid, direction: Asset, t: usize) -> Result<Self> {
        let n = grid.maturities();
        if t == 0 || t >= n {
            return Err(Error::OutOfRange(format!(
                "bilinear constraint needs 1 <= t <= N - 1 = {}, got {t}",
                n.saturating_sub(1)
            )));
        }
        let keys = bilinear_keys(direction, t);
        let axes = [
            keys[0].axes(n)?,
            keys[1].axes(n)?,
            keys[2].axes(n)?,
            keys[3].axes(n)?,
        ];
        let full_shape = grid.shape();
        let a_shape = grid.sub_shape(&axes[0]);
        let points = MultiIndex::new(&a_shape)
            .enumerate()
            .map(|(flat, idx)| {
                let r = |k: usize| grid::restrict_index(&idx, &axes[0], &axes[k], &full_shape);
                [flat, r(1), r(2), r(3)]
            })
            .collect();
        Ok(Self {
            direction,
            t,
            keys,
            axes,
            points,
        })
    }

    /// `A*B - C*D` at every point, given the four projections.
    pub fn residuals(&self, proj: [&[f64]; 4]) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| proj[0][p[0]] * proj[1][p[1]] - proj[2][p[2]] * proj[3][p[3]])
            .collect()
    }

    pub fn projections_of(&self, coupling: &CouplingTensor) -> [Vec<f64>; 4] {
        [
            coupling.project_axes(&self.axes[0]),
            coupling.project_axes(&self.axes[1]),
            coupling.project_axes(&self.axes[2]),
            coupling.project_axes(&self.axes[3]),
        ]
    }
}

pub fn bilinear_keys(direction: Asset, t: usize) -> [ProjectionKey; 4] {
    use ProjectionKey::*;
    match direction {
        Asset::X => [XFullWithYt(t), XPrefix(t), XPrefixWithYt(t), XFull],
        Asset::Y => [YFullWithXt(t), YPrefix(t), YPrefixWithXt(t), YFull],
    }
}

fn bilinear_residual(coupling: &CouplingTensor, direction: Asset, t: usize) -> Result<f64> {
    let index = BilinearIndex::new(coupling.grid(), direction, t)?;
    let p = index.projections_of(coupling);
    Ok(index
        .residuals([&p[0], &p[1], &p[2], &p[3]])
        .into_iter()
        .fold(0.0, |m, r| m.max(r.abs())))
}

/// Max over `(x_{1:N}, y_t)` of `|pi(x_{1:N}, y_t) pi(x_{1:t}) - pi(x_{1:t}, y_t) pi(x_{1:N})|`.
pub fn causality_residual(coupling: &CouplingTensor, t: usize) -> Result<f64> {
    bilinear_residual(coupling, Asset::X, t)
}

/// Mirror of [`causality_residual`] with the assets swapped.
pub fn anticausality_residual(coupling: &CouplingTensor, t: usize) -> Result<f64> {
    bilinear_residual(coupling, Asset::Y, t)
}

/// Largest causality or anticausality residual over all `t <= N - 1`
/// (0 when `N = 1`).
pub fn bicausality_residual(coupling: &CouplingTensor) -> f64 {
    let n = coupling.maturities();
    (1..n)
        .flat_map(|t| [Asset::X, Asset::Y].map(|d| bilinear_residual(coupling, d, t)))
        .map(|r| r.expect("t within range"))
        .fold(0.0, f64::max)
}

/// Discrete test-function form of causality at `t`:
///
/// `sum h(y_{1:t}) [g(x_{1:N}) - E_pi[g(x_{1:t}, X_{t+1:N}) | x_{1:t}]] pi(x, y)`
///
/// `h` is a table on the `y_{1:t}` grid and `g` on the `x_{1:N}` grid. The
/// bracket is taken as 0 where `pi(x_{1:t}) = 0`.
pub fn testfunction_causality_gap(
    coupling: &CouplingTensor,
    t: usize,
    h: &[f64],
    g: &[f64],
) -> Result<f64> {
    let n = coupling.maturities();
    if t == 0 || t > n {
        return Err(Error::OutOfRange(format!("t = {t} outside 1..={n}")));
    }
    let grid = coupling.grid();
    let full_shape = grid.shape();
    let y_axes: Vec<usize> = (n..n + t).collect();
    let x_axes: Vec<usize> = (0..n).collect();
    let prefix_axes: Vec<usize> = (0..t).collect();
    if h.len() != grid.sub_len(&y_axes) || g.len() != grid.sub_len(&x_axes) {
        return Err(Error::shape(format!(
            "h needs {} values and g needs {}, got {} and {}",
            grid.sub_len(&y_axes),
            grid.sub_len(&x_axes),
            h.len(),
            g.len()
        )));
    }
    let px = coupling.project_axes(&x_axes);
    let pprefix = coupling.project_axes(&prefix_axes);
    let x_shape = grid.sub_shape(&x_axes);
    let mut cond_g = vec![0.0; pprefix.len()];
    for (flat, idx) in MultiIndex::new(&x_shape).enumerate() {
        let pre = grid::restrict_index(&idx, &x_axes, &prefix_axes, &full_shape);
        cond_g[pre] += g[flat] * px[flat];
    }
    for (c, &m) in cond_g.iter_mut().zip(&pprefix) {
        *c = if m > 0.0 { *c / m } else { 0.0 };
    }
    let joint_axes: Vec<usize> = x_axes.iter().chain(&y_axes).copied().collect();
    let joint = coupling.project_axes(&joint_axes);
    let joint_shape = grid.sub_shape(&joint_axes);
    let mut total = 0.0;
    for (flat, idx) in MultiIndex::new(&joint_shape).enumerate() {
        let m = joint[flat];
        if m == 0.0 {
            continue;
        }
        let xi = grid::restrict_index(&idx, &joint_axes, &x_axes, &full_shape);
        let yi = grid::restrict_index(&idx, &joint_axes, &y_axes, &full_shape);
        let pre = grid::restrict_index(&idx, &joint_axes, &prefix_axes, &full_shape);
        let bracket = if pprefix[pre] > 0.0 { g[xi] - cond_g[pre] } else { 0.0 };
        total += h[yi] * bracket * m;
    }
    Ok(total)
}

/// Largest `|sum_{z_{t+1}} (z_{t+1} - z_t) pi(history, z_{t+1})|` for one asset,
/// where the history is the axis list `history_axes` (which includes `z_t`).
fn increment_residual(
    coupling: &CouplingTensor,
    history_axes: &[usize],
    current_axis: usize,
    next_axis: usize,
) -> f64 {
    let grid = coupling.grid();
    let full_shape = grid.shape();
    let mut axes: Vec<usize> = history_axes.iter().copied().chain([next_axis]).collect();
    axes.sort_unstable();
    let proj = coupling.project_axes(&axes);
    let sub_shape = grid.sub_shape(&axes);
    let mut sums = vec![0.0; grid.sub_len(history_axes)];
    let cur_pos = axes.iter().position(|&a| a == current_axis).unwrap();
    let next_pos = axes.iter().position(|&a| a == next_axis).unwrap();
    for (flat, idx) in MultiIndex::new(&sub_shape).enumerate() {
        let m = proj[flat];
        if m == 0.0 {
            continue;
        }
        let h = grid::restrict_index(&idx, &axes, history_axes, &full_shape);
        let dz = grid.axis(next_axis)[idx[next_pos]] - grid.axis(current_axis)[idx[cur_pos]];
        sums[h] += dz * m;
    }
    sums.into_iter().fold(0.0, |acc, s| acc.max(s.abs()))
}

/// Martingale residual under the joint filtration: for every `t <= N - 1`
/// and history `(x_{1:t}, y_{1:t})`, the unconditional form of
/// `E[X_{t+1} - X_t | history]` and its `Y` analog.
pub fn martingale_residual(coupling: &CouplingTensor) -> f64 {
    let n = coupling.maturities();
    let mut worst = 0.0_f64;
    for t in 1..n {
        let history: Vec<usize> = (0..t).chain(n..n + t).collect();
        worst = worst.max(increment_residual(coupling, &history, t - 1, t));
        worst = worst.max(increment_residual(coupling, &history, n + t - 1, n + t));
    }
    worst
}

/// Martingale residual where each asset conditions only on its own history.
pub fn individual_martingale_residual(coupling: &CouplingTensor) -> f64 {
    let n = coupling.maturities();
    let mut worst = 0.0_f64;
    for t in 1..n {
        let hx: Vec<usize> = (0..t).collect();
        let hy: Vec<usize> = (n..n + t).collect();
        worst = worst.max(increment_residual(coupling, &hx, t - 1, t));
        worst = worst.max(increment_residual(coupling, &hy, n + t - 1, n + t));
    }
    worst
}

/// Largest deviation of the coupling's one-dimensional marginals from `system`.
pub fn marginal_residual(coupling: &CouplingTensor, system: &MarginalSystem) -> f64 {
    (0..coupling.grid().num_axes())
        .map(|a| {
            coupling
                .project_axes(&[a])
                .iter()
                .zip(system.axis_masses(a))
                .fold(0.0_f64, |m, (p, q)| m.max((p - q).abs()))
        })
        .fold(0.0, f64::max)
}

/// Joint law of one asset over its maturities, row-major over `(i_1, .., i_N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLaw {
    pub points: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
}

impl PathLaw {
    pub fn shape(&self) -> Vec<usize> {
        self.points.iter().map(Vec::len).collect()
    }

    /// Largest unconditional martingale defect of the path law.
    pub fn martingale_residual(&self) -> f64 {
        let shape = self.shape();
        let n = shape.len();
        let mut worst = 0.0_f64;
        for t in 1..n {
            let axes: Vec<usize> = (0..=t).collect();
            let proj = project_raw(&self.masses, &shape, &axes);
            let sub_shape = &shape[..=t];
            let mut sums = vec![0.0; shape[..t].iter().product()];
            for (flat, idx) in MultiIndex::new(sub_shape).enumerate() {
                let h = flat / shape[t];
                sums[h] += (self.points[t][idx[t]] - self.points[t - 1][idx[t - 1]]) * proj[flat];
            }
            worst = sums.iter().fold(worst, |m, s| m.max(s.abs()));
        }
        worst
    }
}

/// Some joint martingale law with the given marginals, found by an LP
/// feasibility problem.
pub fn build_martingale_law(laws: &[MarginalLaw]) -> Result<PathLaw> {
    build_martingale_law_weighted(laws, None, &SolverConfig::default())
}

/// As [`build_martingale_law`], but returns a vertex minimizing
/// `sum cost * p` when `cost` (one value per path) is given. Random costs
/// produce diverse extreme martingale laws.
pub fn build_martingale_law_weighted(
    laws: &[MarginalLaw],
    cost: Option<&[f64]>,
    config: &SolverConfig,
) -> Result<PathLaw> {
    if laws.is_empty() {
        return Err(Error::invalid("need at least one marginal law"));
    }
    let points: Vec<Vec<f64>> = laws.iter().map(|l| l.points().to_vec()).collect();
    if laws.len() == 1 {
        return Ok(PathLaw {
            points,
            masses: laws[0].masses().to_vec(),
        });
    }
    let shape: Vec<usize> = points.iter().map(Vec::len).collect();
    let total: usize = shape.iter().product();
    if let Some(c) = cost {
        if c.len() != total {
            return Err(Error::shape(format!("cost needs {total} entries, got {}", c.len())));
        }
    }
    let n = laws.len();
    let mut lp = LinearProgram::new(Sense::Minimize);
    for flat in 0..total {
        let j = lp.add_var(0.0, f64::INFINITY, format!("p{flat}"));
        if let Some(c) = cost {
            lp.set_cost(j, c[flat]);
        }
    }
    let all: Vec<Vec<usize>> = MultiIndex::new(&shape).collect();
    for t in 0..n {
        let mut rows = vec![Vec::new(); shape[t]];
        for (flat, idx) in all.iter().enumerate() {
            rows[idx[t]].push((flat, 1.0));
        }
        for (i, coeffs) in rows.into_iter().enumerate() {
            lp.add_row(coeffs, RowSense::Eq, laws[t].masses()[i], format!("marginal_t{}_{i}", t + 1));
        }
    }
    for t in 1..n {
        let prefix_len: usize = shape[..t].iter().product();
        let mut rows = vec![Vec::new(); prefix_len];
        for (flat, idx) in all.iter().enumerate() {
            let h = grid::ravel(&idx[..t], &shape[..t]);
            let dz = points[t][idx[t]] - points[t - 1][idx[t - 1]];
            if dz != 0.0 {
                rows[h].push((flat, dz));
            }
        }
        for (h, coeffs) in rows.into_iter().enumerate() {
            if !coeffs.is_empty() {
                lp.add_row(coeffs, RowSense::Eq, 0.0, format!("martingale_t{t}_h{h}"));
            }
        }
    }
    let sol = lp::solve(&lp, config)?;
    if !sol.is_optimal() {
        let diag = laws
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let c = check_convex_order(&w[0], &w[1]);
                format!(
                    "t{}->t{}: ordered={} mean_gap={:.3e} worst_violation={:.3e}",
                    i + 1,
                    i + 2,
                    c.ordered,
                    c.mean_gap,
                    c.worst_violation
                )
            })
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Infeasible {
            context: "no martingale law with these marginals (convex order violated)".into(),
            diagnostic: diag,
        });
    }
    let mut masses: Vec<f64> = sol.primal.iter().map(|m| m.max(0.0)).collect();
    let s: f64 = masses.iter().sum();
    masses.iter_mut().for_each(|m| *m /= s);
    Ok(PathLaw { points, masses })
}

/// Product of two path laws as a coupling (X axes first).
pub fn product_coupling(x: &PathLaw, y: &PathLaw) -> Result<CouplingTensor> {
    let grid = ProductGrid::new(x.points.clone(), y.points.clone())?;
    let mut masses = Vec::with_capacity(grid.len());
    for &mx in &x.masses {
        for &my in &y.masses {
            masses.push(mx * my);
        }
    }
    CouplingTensor::from_solver(grid, &masses)
}

/// `mu (x) nu` for martingale path laws `mu`, `nu` of each asset: a
/// martingale coupling with zero causality and anticausality residuals.
pub fn independent_martingale_coupling(system: &MarginalSystem) -> Result<CouplingTensor> {
    let x = build_martingale_law(system.laws(Asset::X))?;
    let y = build_martingale_law(system.laws(Asset::Y))?;
    product_coupling(&x, &y)
}
