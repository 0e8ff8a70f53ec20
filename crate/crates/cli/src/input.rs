use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use mcmot::calibration::CalibrationResult;
use mcmot::fixtures::{illustrative_payoff, illustrative_system};
use mcmot::marginals::{MarginalLaw, MarginalSystem};
use mcmot::payoffs::{PayoffSpec, PayoffTable};

use crate::provenance::Run;

/// Mass below which calibrated support points are dropped.
const EMPTY_POINT: f64 = 1e-12;

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = true)]
pub struct SystemSource {
    /// Marginal system JSON (schema mcmot-marginals-v1).
    #[arg(long, conflicts_with_all = ["fixture", "calibration_x", "calibration_y"])]
    pub marginals: Option<PathBuf>,
    /// Use the bundled two-asset fixture.
    #[arg(long, conflicts_with_all = ["calibration_x", "calibration_y"])]
    pub fixture: bool,
    /// Calibration result for asset X (from `mcmot calibrate`).
    #[arg(long, requires = "calibration_y")]
    pub calibration_x: Option<PathBuf>,
    /// Calibration result for asset Y.
    #[arg(long, requires = "calibration_x")]
    pub calibration_y: Option<PathBuf>,
}

impl SystemSource {
    pub fn load(&self, run: &mut Run) -> Result<MarginalSystem> {
        if self.fixture {
            let system = illustrative_system();
            run.note("fixture:illustrative", system.to_json()?.as_bytes());
            return Ok(system);
        }
        if let Some(path) = &self.marginals {
            let text = run.read(path)?;
            return MarginalSystem::from_json(&text).with_context(|| format!("loading {}", path.display()));
        }
        match (&self.calibration_x, &self.calibration_y) {
            (Some(x), Some(y)) => {
                let x = calibrated_laws(run, x)?;
                let y = calibrated_laws(run, y)?;
                Ok(MarginalSystem::new(x, y)?)
            }
            _ => bail!("no marginal source given"),
        }
    }

    pub fn is_fixture(&self) -> bool {
        self.fixture
    }
}

fn calibrated_laws(run: &mut Run, path: &Path) -> Result<Vec<MarginalLaw>> {
    let text = run.read(path)?;
    let cal = CalibrationResult::from_json(&text).with_context(|| format!("loading {}", path.display()))?;
    cal.price_marginals()?
        .iter()
        .map(|l| l.trimmed(EMPTY_POINT).map_err(Into::into))
        .collect()
}

/// `max-squared-increment`, `basket-asian=<strike>` or `table=<path>`.
pub fn parse_payoff(spec: &str, run: &mut Run) -> Result<PayoffSpec> {
    let (kind, arg) = match spec.split_once('=') {
        Some((k, a)) => (k.trim(), Some(a.trim())),
        None => (spec.trim(), None),
    };
    match (kind, arg) {
        ("max-squared-increment", None) => Ok(PayoffSpec::MaxSquaredIncrement),
        ("basket-asian", Some(k)) => {
            let strike: f64 = k.parse().map_err(|_| anyhow!("basket-asian strike {k:?} is not a number"))?;
            Ok(PayoffSpec::BasketAsianCall { strike })
        }
        ("table", Some(path)) => {
            let path = PathBuf::from(path);
            let text = run.read(&path)?;
            Ok(PayoffSpec::Table(
                PayoffTable::from_json(&text).with_context(|| format!("loading {}", path.display()))?,
            ))
        }
        _ => bail!("unknown payoff {spec:?}; use max-squared-increment, basket-asian=<strike> or table=<file>"),
    }
}

/// The payoff used when none is given: the fixture's own payoff.
pub fn default_payoff() -> PayoffSpec {
    illustrative_payoff()
}
