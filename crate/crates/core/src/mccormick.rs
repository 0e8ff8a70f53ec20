//! Capacity bounds and the McCormick relaxation of the causality and
//! anticausality identities.
//!
//! For each maturity `t <= N - 1` and each point `(x_{1:N}, y_t)` the
//! identity `a * b = c * d` (see [`BilinearIndex`]) is relaxed by a single
//! variable `w` that must lie inside the McCormick envelope of both products:
//!
//! ```text
//! w >= L_a b + a L_b - L_a L_b      w <= U_a b + a L_b - U_a L_b
//! w >= U_a b + a U_b - U_a U_b      w <= L_a b + a U_b - L_a U_b
//! ```
//!
//! and the same four rows for `(c, d)`. The anticausality rows mirror these
//! with the assets swapped.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coupling::{bilinear_keys, BilinearIndex, CouplingTensor, ProjectionKey};
use crate::error::{Error, Result};
use crate::grid::MultiIndex;
use crate::lp::{LpSolution, RowSense, SolverConfig};
use crate::marginals::{Asset, MarginalSystem};
use crate::mot::{finish_bound, BoundResult, CouplingLp, Direction, MotInstance};

pub const BOUNDS_SCHEMA: &str = "mcmot-bounds-v1";

/// Lower and upper tables on one projection grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTable {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoundTable {
    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn width(&self, p: usize) -> f64 {
        self.upper[p] - self.lower[p]
    }

    fn intersect(&mut self, other: &BoundTable) {
        for p in 0..self.len() {
            self.lower[p] = self.lower[p].max(other.lower[p]);
            self.upper[p] = self.upper[p].min(other.upper[p]);
        }
    }
}

/// Per-family capacity bounds `L <= projection <= U`.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityBounds {
    pub maturities: usize,
    pub families: BTreeMap<ProjectionKey, BoundTable>,
}

/// The keys whose projections enter the envelope rows, in a fixed order.
pub fn envelope_keys(n: usize) -> Vec<ProjectionKey> {
    let mut keys: Vec<ProjectionKey> = (1..n)
        .flat_map(|t| [Asset::X, Asset::Y].map(|d| bilinear_keys(d, t)))
        .flatten()
        .collect();
    keys.sort();
    keys.dedup();
    keys
}

/// `L = 0`, and `U` at each point of a family equals the smallest marginal
/// mass among the coordinates of that point.
pub fn default_bounds(system: &MarginalSystem) -> CapacityBounds {
    let n = system.maturities();
    let grid = system.product_grid();
    let families = envelope_keys(n)
        .into_iter()
        .map(|key| {
            let axes = key.axes(n).expect("envelope keys are in range");
            let upper: Vec<f64> = MultiIndex::new(&grid.sub_shape(&axes))
                .map(|idx| {
                    axes.iter()
                        .zip(&idx)
                        .map(|(&a, &i)| system.axis_masses(a)[i])
                        .fold(1.0, f64::min)
                })
                .collect();
            let lower = vec![0.0; upper.len()];
            (key, BoundTable { lower, upper })
        })
        .collect();
    CapacityBounds {
        maturities: n,
        families,
    }
}

/// Bounds per distinct axis set: families that project onto the same
/// coordinates (e.g. `(x_1, y_1)` from both directions) are intersected.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeBox {
    pub tables: BTreeMap<Vec<usize>, BoundTable>,
}

impl EnvelopeBox {
    pub fn table(&self, axes: &[usize]) -> &BoundTable {
        &self.tables[axes]
    }

    /// Bounds restated per family; families sharing an axis set get the
    /// same (intersected) table.
    pub fn to_bounds(&self, n: usize) -> CapacityBounds {
        let families = envelope_keys(n)
            .into_iter()
            .map(|k| (k, self.tables[&k.axes(n).unwrap()].clone()))
            .collect();
        CapacityBounds {
            maturities: n,
            families,
        }
    }

    pub fn is_empty_box(&self) -> bool {
        self.tables
            .values()
            .any(|t| t.lower.iter().zip(&t.upper).any(|(l, u)| l > u))
    }
}

impl CapacityBounds {
    /// Checks shapes against `system` and `0 <= L <= U <= 1`.
    pub fn validate(&self, system: &MarginalSystem) -> Result<()> {
        let n = system.maturities();
        if self.maturities != n {
            return Err(Error::shape(format!(
                "bounds are for {} maturities, system has {n}",
                self.maturities
            )));
        }
        let grid = system.product_grid();
        for key in envelope_keys(n) {
            let table = self.families.get(&key).ok_or_else(|| {
                Error::schema(key.family_name(), format!("missing bounds for {key:?}"))
            })?;
            let len = grid.sub_len(&key.axes(n)?);
            if table.lower.len() != len || table.upper.len() != len {
                return Err(Error::shape(format!(
                    "{key:?} bounds need {len} entries, got {} and {}",
                    table.lower.len(),
                    table.upper.len()
                )));
            }
            for (l, u) in table.lower.iter().zip(&table.upper) {
                if !(0.0 <= *l && l <= u && *u <= 1.0) {
                    return Err(Error::invalid(format!(
                        "{key:?} bounds [{l}, {u}] violate 0 <= L <= U <= 1"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn effective_box(&self) -> EnvelopeBox {
        let mut tables: BTreeMap<Vec<usize>, BoundTable> = BTreeMap::new();
        for (key, table) in &self.families {
            let axes = key.axes(self.maturities).expect("validated key");
            match tables.get_mut(&axes) {
                Some(t) => t.intersect(table),
                None => {
                    tables.insert(axes, table.clone());
                }
            }
        }
        EnvelopeBox { tables }
    }

    pub fn to_json(&self) -> Result<String> {
        let families: Vec<FamilyEntry> = self
            .families
            .iter()
            .map(|(k, t)| FamilyEntry {
                family: k.family_name().into(),
                t: k.maturity(),
                lower: t.lower.clone(),
                upper: t.upper.clone(),
            })
            .collect();
        Ok(serde_json::to_string_pretty(&BoundsFile {
            schema: BOUNDS_SCHEMA.into(),
            maturities: self.maturities,
            families,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BoundsFile = serde_json::from_str(text)?;
        if file.schema != BOUNDS_SCHEMA {
            return Err(Error::schema(
                "schema",
                format!("expected {BOUNDS_SCHEMA:?}, found {:?}", file.schema),
            ));
        }
        let mut families = BTreeMap::new();
        for (i, f) in file.families.into_iter().enumerate() {
            let key = ProjectionKey::from_family_name(&f.family, f.t)
                .map_err(|e| Error::schema(format!("families[{i}]"), e.to_string()))?;
            families.insert(
                key,
                BoundTable {
                    lower: f.lower,
                    upper: f.upper,
                },
            );
        }
        Ok(Self {
            maturities: file.maturities,
            families,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BoundsFile {
    schema: String,
    maturities: usize,
    families: Vec<FamilyEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FamilyEntry {
    family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t: Option<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McCormickInstance {
    pub mot: MotInstance,
    pub bounds: CapacityBounds,
}

impl McCormickInstance {
    pub fn new(mot: MotInstance, bounds: CapacityBounds) -> Result<Self> {
        bounds.validate(&mot.system)?;
        Ok(Self { mot, bounds })
    }

    pub fn with_default_bounds(mot: MotInstance) -> Self {
        let bounds = default_bounds(&mot.system);
        Self { mot, bounds }
    }
}

/// One relaxed bilinear identity and where it lives in the LP.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeTerm {
    pub direction: Asset,
    pub t: usize,
    /// Flat index on the `A` grid of the identity.
    pub point: usize,
    /// Variables of `a, b, c, d`.
    pub vars: [usize; 4],
    /// `(axes position in the box, flat index)` of `a, b, c, d`.
    pub entries: [(usize, usize); 4],
    pub w: usize,
    pub rows: [usize; 8],
}

#[derive(Debug, Clone)]
pub struct McCormickLp {
    pub model: CouplingLp,
    pub envelope: EnvelopeBox,
    /// Axis sets in box order (index used by [`EnvelopeTerm::entries`]).
    pub axis_sets: Vec<Vec<usize>>,
    pub terms: Vec<EnvelopeTerm>,
}

pub fn build_mccormick_lp(instance: &McCormickInstance, direction: Direction) -> Result<McCormickLp> {
    instance.bounds.validate(&instance.mot.system)?;
    build_mccormick_lp_with_box(&instance.mot, &instance.bounds.effective_box(), direction)
}

/// Envelope LP on an explicit box (one table per distinct axis set).
pub fn build_mccormick_lp_with_box(
    mot: &MotInstance,
    envelope: &EnvelopeBox,
    direction: Direction,
) -> Result<McCormickLp> {
    let mut model = CouplingLp::new(mot, direction)?;
    let grid = model.grid.clone();
    let n = grid.maturities();
    let axis_sets: Vec<Vec<usize>> = envelope.tables.keys().cloned().collect();
    for axes in &axis_sets {
        let t = &envelope.tables[axes];
        model.projection_vars(axes, &t.lower, &t.upper)?;
    }
    let mut terms = Vec::new();
    for t in 1..n {
        for d in [Asset::X, Asset::Y] {
            let index = BilinearIndex::new(&grid, d, t)?;
            let pos: Vec<usize> = index
                .axes
                .iter()
                .map(|axes| {
                    axis_sets.iter().position(|s| s == axes).ok_or_else(|| {
                        Error::shape(format!("box has no table for axes {axes:?}"))
                    })
                })
                .collect::<Result<_>>()?;
            for p in &index.points {
                let entries = [0, 1, 2, 3].map(|k| (pos[k], p[k]));
                let vars = [0, 1, 2, 3].map(|k| model.projections[&axis_sets[pos[k]]].var(p[k]));
                let bound = |k: usize| {
                    let tb = &envelope.tables[&axis_sets[pos[k]]];
                    (tb.lower[p[k]], tb.upper[p[k]])
                };
                let w = model.lp.add_var(0.0, 1.0, format!("w_{d}_t{t}_{}", p[0]));
                let mut rows = [0; 8];
                for (pair, (i, j)) in [(0, 1), (2, 3)].into_iter().enumerate() {
                    let (la, ua) = bound(i);
                    let (lb, ub) = bound(j);
                    let (a, b) = (vars[i], vars[j]);
                    let specs = [
                        (lb, la, RowSense::Ge, -la * lb),
                        (ub, ua, RowSense::Ge, -ua * ub),
                        (lb, ua, RowSense::Le, -ua * lb),
                        (ub, la, RowSense::Le, -la * ub),
                    ];
                    for (k, (ca, cb, sense, rhs)) in specs.into_iter().enumerate() {
                        rows[4 * pair + k] = model.lp.add_row(
                            vec![(w, 1.0), (a, -ca), (b, -cb)],
                            sense,
                            rhs,
                            format!("mccormick_{d}_t{t}_{}_{}", p[0], 4 * pair + k),
                        );
                    }
                }
                terms.push(EnvelopeTerm {
                    direction: d,
                    t,
                    point: p[0],
                    vars,
                    entries,
                    w,
                    rows,
                });
            }
        }
    }
    Ok(McCormickLp {
        model,
        envelope: envelope.clone(),
        axis_sets,
        terms,
    })
}

impl McCormickLp {
    pub fn solve(&self, config: &SolverConfig) -> Result<LpSolution> {
        self.model
            .solve(config, "McCormick relaxation is infeasible (inconsistent capacity bounds?)")
    }

    /// `|a b - c d|` of every term at an LP solution.
    pub fn term_residuals(&self, sol: &LpSolution) -> Vec<f64> {
        self.terms
            .iter()
            .map(|term| {
                let v = term.vars.map(|j| sol.primal[j]);
                (v[0] * v[1] - v[2] * v[3]).abs()
            })
            .collect()
    }
}

pub fn solve_mccormick(instance: &McCormickInstance, direction: Direction) -> Result<BoundResult> {
    solve_mccormick_with(instance, direction, &SolverConfig::default())
}

pub fn solve_mccormick_with(
    instance: &McCormickInstance,
    direction: Direction,
    config: &SolverConfig,
) -> Result<BoundResult> {
    let lp = build_mccormick_lp(instance, direction)?;
    let sol = lp.solve(config)?;
    finish_bound("mccormick", &lp.model, &sol, &instance.mot.system)
}

/// Width `upper - lower` of the McCormick interval of `a * b`.
fn product_envelope_width(a: f64, b: f64, (la, ua): (f64, f64), (lb, ub): (f64, f64)) -> f64 {
    let lower = (la * b + a * lb - la * lb).max(ua * b + a * ub - ua * ub);
    let upper = (ua * b + a * lb - ua * lb).min(la * b + a * ub - la * ub);
    upper - lower
}

/// Envelope slack at one point of the `(x_{1:N}, y_t)` grid (or its mirror
/// for `direction = Y`): the larger of the two McCormick interval widths of
/// `a * b` and `c * d` at the coupling's projections. Zero when every factor
/// sits on a bound.
pub fn envelope_gap(
    coupling: &CouplingTensor,
    bounds: &CapacityBounds,
    direction: Asset,
    t: usize,
    point: usize,
) -> Result<f64> {
    let index = BilinearIndex::new(coupling.grid(), direction, t)?;
    let p = index
        .points
        .get(point)
        .ok_or_else(|| Error::OutOfRange(format!("point {point} not on the envelope grid")))?;
    let proj = index.projections_of(coupling);
    let boxes = bounds.effective_box();
    let mut v = [0.0; 4];
    let mut lo = [0.0; 4];
    let mut hi = [0.0; 4];
    for k in 0..4 {
        let table = boxes
            .tables
            .get(&index.axes[k])
            .ok_or_else(|| Error::shape(format!("no bounds for {:?}", index.keys[k])))?;
        v[k] = proj[k][p[k]];
        lo[k] = table.lower[p[k]];
        hi[k] = table.upper[p[k]];
    }
    Ok(product_envelope_width(v[0], v[1], (lo[0], hi[0]), (lo[1], hi[1]))
        .max(product_envelope_width(v[2], v[3], (lo[2], hi[2]), (lo[3], hi[3]))))
}
