//! Discrete risk-neutral marginals and the convex-order feasibility checks.
//!
//! A family of marginals `mu_1, .., mu_N` admits a martingale coupling iff all
//! laws share the same mean and increase in convex order. For discrete laws
//! with equal means, convex order reduces to call prices being nondecreasing
//! in maturity at every kink of the call functions, i.e. at the union of the
//! two support grids.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ProductGrid;

/// Tolerance on `sum(masses) == 1`.
pub const MASS_SUM_TOL: f64 = 1e-10;

pub const MARGINALS_SCHEMA: &str = "mcmot-marginals-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Asset {
    X,
    Y,
}

impl Asset {
    pub fn other(self) -> Asset {
        match self {
            Asset::X => Asset::Y,
            Asset::Y => Asset::X,
        }
    }
}

impl fmt::Display for Asset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Asset::X => f.write_str("X"),
            Asset::Y => f.write_str("Y"),
        }
    }
}

/// Price levels one asset can take at one maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportGrid {
    pub asset: Asset,
    /// 1-based maturity index.
    pub maturity_index: usize,
    points: Vec<f64>,
}

impl SupportGrid {
    pub fn new(asset: Asset, maturity_index: usize, points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid(format!(
                "{asset}_{maturity_index}: support grid needs at least one point"
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::invalid(format!(
                "{asset}_{maturity_index}: support point {p} must be finite and nonnegative"
            )));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "{asset}_{maturity_index}: support points must be strictly increasing"
            )));
        }
        Ok(Self {
            asset,
            maturity_index,
            points,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Discrete law of one asset at one maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalLaw {
    grid: SupportGrid,
    masses: Vec<f64>,
}

impl MarginalLaw {
    /// Zero masses are kept so the index space stays aligned with the grid.
    pub fn new(grid: SupportGrid, masses: Vec<f64>) -> Result<Self> {
        let tag = format!("{}_{}", grid.asset, grid.maturity_index);
        if masses.len() != grid.len() {
            return Err(Error::shape(format!(
                "{tag}: {} masses for {} support points",
                masses.len(),
                grid.len()
            )));
        }
        if let Some(m) = masses.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return Err(Error::invalid(format!("{tag}: mass {m} outside [0, 1]")));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_SUM_TOL {
            return Err(Error::invalid(format!(
                "{tag}: masses sum to {total}, expected 1"
            )));
        }
        Ok(Self { grid, masses })
    }

    /// Convenience constructor used by fixtures and tests.
    pub fn from_parts(
        asset: Asset,
        maturity_index: usize,
        points: Vec<f64>,
        masses: Vec<f64>,
    ) -> Result<Self> {
        Self::new(SupportGrid::new(asset, maturity_index, points)?, masses)
    }

    pub fn point_mass(asset: Asset, maturity_index: usize, at: f64) -> Result<Self> {
        Self::from_parts(asset, maturity_index, vec![at], vec![1.0])
    }

    pub fn grid(&self) -> &SupportGrid {
        &self.grid
    }

    pub fn points(&self) -> &[f64] {
        self.grid.points()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(self)
    }

    pub fn call_value(&self, strike: f64) -> f64 {
        call_value(self, strike)
    }

    /// The same law without points of mass `<= threshold`, renormalized.
    pub fn trimmed(&self, threshold: f64) -> Result<Self> {
        let (points, masses): (Vec<f64>, Vec<f64>) = self
            .points()
            .iter()
            .zip(&self.masses)
            .filter(|(_, &w)| w > threshold)
            .map(|(&p, &w)| (p, w))
            .unzip();
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("trimming removed every support point"));
        }
        Self::from_parts(
            self.grid.asset,
            self.grid.maturity_index,
            points,
            masses.iter().map(|w| w / total).collect(),
        )
    }
}

pub fn mean(law: &MarginalLaw) -> f64 {
    law.points()
        .iter()
        .zip(law.masses())
        .map(|(p, m)| p * m)
        .sum()
}

/// `E[(S - strike)^+]` under `law`.
pub fn call_value(law: &MarginalLaw, strike: f64) -> f64 {
    law.points()
        .iter()
        .zip(law.masses())
        .map(|(p, m)| (p - strike).max(0.0) * m)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    /// Absolute tolerance on equal means.
    pub mean_tol: f64,
    /// Absolute slack allowed when comparing call values.
    pub call_tol: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            mean_tol: 1e-8,
            call_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexOrderCheck {
    pub ordered: bool,
    /// Largest `call(earlier, k) - call(later, k)` over the union strikes, floored at 0.
    pub worst_violation: f64,
    /// `mean(later) - mean(earlier)`.
    pub mean_gap: f64,
}

pub fn check_convex_order(earlier: &MarginalLaw, later: &MarginalLaw) -> ConvexOrderCheck {
    check_convex_order_with(earlier, later, &ValidationConfig::default())
}

pub fn check_convex_order_with(
    earlier: &MarginalLaw,
    later: &MarginalLaw,
    config: &ValidationConfig,
) -> ConvexOrderCheck {
    let mean_gap = mean(later) - mean(earlier);
    let worst_violation = earlier
        .points()
        .iter()
        .chain(later.points())
        .map(|&k| call_value(earlier, k) - call_value(later, k))
        .fold(0.0_f64, f64::max);
    ConvexOrderCheck {
        ordered: mean_gap.abs() <= config.mean_tol && worst_violation <= config.call_tol,
        worst_violation,
        mean_gap,
    }
}

/// Marginals of both assets at every maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSystem {
    x: Vec<MarginalLaw>,
    y: Vec<MarginalLaw>,
}

impl MarginalSystem {
    /// Checks structure only (maturity count and labelling); the economic
    /// conditions are reported by [`validate_system`].
    pub fn new(x: Vec<MarginalLaw>, y: Vec<MarginalLaw>) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::shape(format!(
                "need the same positive number of maturities for X and Y, got {} and {}",
                x.len(),
                y.len()
            )));
        }
        for (asset, laws) in [(Asset::X, &x), (Asset::Y, &y)] {
            for (i, law) in laws.iter().enumerate() {
                if law.grid().asset != asset || law.grid().maturity_index != i + 1 {
                    return Err(Error::invalid(format!(
                        "law at position {} of asset {asset} is labelled {}_{}",
                        i + 1,
                        law.grid().asset,
                        law.grid().maturity_index
                    )));
                }
            }
        }
        Ok(Self { x, y })
    }

    pub fn maturities(&self) -> usize {
        self.x.len()
    }

    pub fn laws(&self, asset: Asset) -> &[MarginalLaw] {
        match asset {
            Asset::X => &self.x,
            Asset::Y => &self.y,
        }
    }

    /// Law of `asset` at 1-based maturity `t`.
    pub fn law(&self, asset: Asset, t: usize) -> &MarginalLaw {
        &self.laws(asset)[t - 1]
    }

    pub fn product_grid(&self) -> ProductGrid {
        ProductGrid::new(
            self.x.iter().map(|l| l.points().to_vec()).collect(),
            self.y.iter().map(|l| l.points().to_vec()).collect(),
        )
        .expect("system structure already validated")
    }

    /// Marginal masses of axis `axis` of the product grid.
    pub fn axis_masses(&self, axis: usize) -> &[f64] {
        let n = self.maturities();
        if axis < n {
            self.x[axis].masses()
        } else {
            self.y[axis - n].masses()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MarginalsFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MarginalsFile = serde_json::from_str(text)?;
        file.into_system()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub asset: Asset,
    pub earlier: usize,
    pub later: usize,
    pub mean_gap: f64,
    pub worst_violation: f64,
    pub ordered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub pairs: Vec<PairVerdict>,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &PairVerdict> {
        self.pairs.iter().filter(|p| !p.ordered)
    }
}

pub fn validate_system(system: &MarginalSystem) -> ValidationReport {
    validate_system_with(system, &ValidationConfig::default())
}

pub fn validate_system_with(system: &MarginalSystem, config: &ValidationConfig) -> ValidationReport {
    let mut pairs = Vec::new();
    for asset in [Asset::X, Asset::Y] {
        for (i, w) in system.laws(asset).windows(2).enumerate() {
            let check = check_convex_order_with(&w[0], &w[1], config);
            pairs.push(PairVerdict {
                asset,
                earlier: i + 1,
                later: i + 2,
                mean_gap: check.mean_gap,
                worst_violation: check.worst_violation,
                ordered: check.ordered,
            });
        }
    }
    ValidationReport {
        pass: pairs.iter().all(|p| p.ordered),
        pairs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LawEntry {
    points: Vec<f64>,
    masses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AssetEntries {
    #[serde(rename = "X")]
    x: Vec<LawEntry>,
    #[serde(rename = "Y")]
    y: Vec<LawEntry>,
}

/// On-disk form of a [`MarginalSystem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalsFile {
    schema: String,
    assets: AssetEntries,
}

impl From<&MarginalSystem> for MarginalsFile {
    fn from(system: &MarginalSystem) -> Self {
        let entries = |laws: &[MarginalLaw]| {
            laws.iter()
                .map(|l| LawEntry {
                    points: l.points().to_vec(),
                    masses: l.masses().to_vec(),
                })
                .collect()
        };
        Self {
            schema: MARGINALS_SCHEMA.to_string(),
            assets: AssetEntries {
                x: entries(&system.x),
                y: entries(&system.y),
            },
        }
    }
}

impl MarginalsFile {
    pub fn into_system(self) -> Result<MarginalSystem> {
        if self.schema != MARGINALS_SCHEMA {
            return Err(Error::schema(
                "schema",
                format!("expected {MARGINALS_SCHEMA:?}, found {:?}", self.schema),
            ));
        }
        let build = |asset: Asset, entries: Vec<LawEntry>| -> Result<Vec<MarginalLaw>> {
            entries
                .into_iter()
                .enumerate()
                .map(|(i, e)| {
                    MarginalLaw::from_parts(asset, i + 1, e.points, e.masses).map_err(|err| {
                        Error::schema(format!("assets.{asset}[{i}]"), err.to_string())
                    })
                })
                .collect()
        };
        MarginalSystem::new(build(Asset::X, self.assets.x)?, build(Asset::Y, self.assets.y)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::illustrative_system;

    fn law(points: &[f64], masses: &[f64]) -> MarginalLaw {
        MarginalLaw::from_parts(Asset::X, 1, points.to_vec(), masses.to_vec()).unwrap()
    }

    #[test]
    fn means_of_illustrative_laws() {
        let sys = illustrative_system();
        assert!((mean(sys.law(Asset::X, 1)) - 10.0).abs() < 1e-12);
        assert!((mean(sys.law(Asset::X, 2)) - 10.0).abs() < 1e-12);
        assert_eq!(mean(&law(&[10.0], &[1.0])), 10.0);
    }

    #[test]
    fn call_values_of_illustrative_laws() {
        let sys = illustrative_system();
        assert!((call_value(sys.law(Asset::X, 1), 10.0) - 0.2).abs() < 1e-12);
        assert!((call_value(sys.law(Asset::X, 2), 10.0) - 1.0).abs() < 1e-12);
        let l = sys.law(Asset::Y, 2);
        assert!((call_value(l, 5.0) - (mean(l) - 5.0)).abs() < 1e-12);
    }

    #[test]
    fn convex_order_examples() {
        let sys = illustrative_system();
        assert!(check_convex_order(sys.law(Asset::X, 1), sys.law(Asset::X, 2)).ordered);
        let l = sys.law(Asset::Y, 1);
        let same = check_convex_order(l, l);
        assert!(same.ordered);
        assert_eq!(same.worst_violation, 0.0);

        let spread = law(&[0.0, 20.0], &[0.5, 0.5]);
        let point = law(&[10.0], &[1.0]);
        let bad = check_convex_order(&spread, &point);
        assert!(!bad.ordered);
        assert!((bad.worst_violation - 5.0).abs() < 1e-12);
    }

    #[test]
    fn validation_reports() {
        assert!(validate_system(&illustrative_system()).pass);

        let sys = illustrative_system();
        let x1 = sys.law(Asset::X, 1).clone();
        // X2 = {0, 10, 20} with masses shifted so the mean is 10.5
        let x2 = MarginalLaw::from_parts(Asset::X, 2, vec![0.0, 10.0, 20.0], vec![0.1, 0.75, 0.15])
            .unwrap();
        let perturbed = MarginalSystem::new(vec![x1, x2], sys.laws(Asset::Y).to_vec()).unwrap();
        let report = validate_system(&perturbed);
        assert!(!report.pass);
        let fail: Vec<_> = report.failures().collect();
        assert_eq!(fail.len(), 1);
        assert_eq!(fail[0].asset, Asset::X);
        assert!((fail[0].mean_gap - 0.5).abs() < 1e-12);

        let single = MarginalSystem::new(
            vec![sys.law(Asset::X, 1).clone()],
            vec![sys.law(Asset::Y, 1).clone()],
        )
        .unwrap();
        let r = validate_system(&single);
        assert!(r.pass && r.pairs.is_empty());
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(SupportGrid::new(Asset::X, 1, vec![]).is_err());
        assert!(SupportGrid::new(Asset::X, 1, vec![2.0, 1.0]).is_err());
        assert!(SupportGrid::new(Asset::X, 1, vec![-1.0, 1.0]).is_err());
        assert!(MarginalLaw::from_parts(Asset::X, 1, vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
        assert!(MarginalLaw::from_parts(Asset::X, 1, vec![1.0, 2.0], vec![1.0]).is_err());
        // zero masses are kept
        let l = MarginalLaw::from_parts(Asset::X, 1, vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(l.len(), 3);
    }

    #[test]
    fn json_round_trip() {
        let sys = illustrative_system();
        let text = sys.to_json().unwrap();
        assert!(text.contains(MARGINALS_SCHEMA));
        assert_eq!(MarginalSystem::from_json(&text).unwrap(), sys);
        let wrong = text.replace(MARGINALS_SCHEMA, "other");
        assert!(matches!(MarginalSystem::from_json(&wrong), Err(Error::Schema { .. })));
    }
}
