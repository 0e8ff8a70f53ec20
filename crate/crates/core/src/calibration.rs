//! Fitting a joint discrete martingale measure to bid/ask call quotes.
//!
//! Quotes are scaled by the forward `F_t` and discount factor `D_t`:
//! `a = ask / (D F)`, `b = bid / (D F)`, `k = K / F`. The support at maturity
//! `t` is the scaled strike set (plus optional extra points that no quote
//! prices). The LP finds a joint law on the product of these grids and fitted
//! scaled prices `c` minimizing `sum |c - a| + |c - b|`, subject to
//!
//! * pricing: `c = sum (s - k)^+ mu_t(s)`,
//! * martingale rows on scaled prices for every prefix path,
//! * unit mean at each maturity, and total mass one.
//!
//! The objective can never fall below `sum (a - b)`, and reaches it exactly
//! when every fitted price lies inside its bid/ask interval. Marginals of the
//! fitted joint law are in convex order by construction.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, MultiIndex};
use crate::lp::{self, LinearProgram, RowSense, Sense, SolverConfig};
use crate::marginals::{check_convex_order, Asset, MarginalLaw};

pub const CALIBRATION_SCHEMA: &str = "mcmot-calib-v1";

/// Tolerance for `objective <= spread_floor` when flagging feasibility.
pub const FEASIBLE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub maturity_index: usize,
    pub strike: f64,
    pub bid: f64,
    pub ask: f64,
}

impl OptionQuote {
    pub fn validate(&self) -> Result<()> {
        if !(self.strike.is_finite() && self.strike > 0.0) {
            return Err(Error::invalid(format!("strike {} must be > 0", self.strike)));
        }
        if !(self.bid.is_finite() && self.ask.is_finite() && 0.0 <= self.bid && self.bid <= self.ask) {
            return Err(Error::invalid(format!(
                "quote at strike {} needs 0 <= bid <= ask, got bid {} ask {}",
                self.strike, self.bid, self.ask
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSlice {
    pub maturity_index: usize,
    pub forward: f64,
    pub discount: f64,
    pub quotes: Vec<OptionQuote>,
    /// Additional support points in price units, priced by no quote.
    #[serde(default)]
    pub extra_support: Vec<f64>,
}

impl MarketSlice {
    pub fn new(maturity_index: usize, forward: f64, discount: f64, mut quotes: Vec<OptionQuote>) -> Result<Self> {
        quotes.sort_by(|a, b| a.strike.total_cmp(&b.strike));
        let slice = Self {
            maturity_index,
            forward,
            discount,
            quotes,
            extra_support: Vec::new(),
        };
        slice.validate()?;
        Ok(slice)
    }

    pub fn with_extra_support(mut self, points: Vec<f64>) -> Result<Self> {
        self.extra_support = points;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.forward.is_finite() && self.forward > 0.0) {
            return Err(Error::invalid(format!("forward {} must be > 0", self.forward)));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::invalid(format!("discount {} must lie in (0, 1]", self.discount)));
        }
        if self.quotes.is_empty() {
            return Err(Error::invalid(format!(
                "maturity {} has no quotes",
                self.maturity_index
            )));
        }
        for q in &self.quotes {
            q.validate()?;
            if q.maturity_index != self.maturity_index {
                return Err(Error::invalid(format!(
                    "quote for maturity {} filed under maturity {}",
                    q.maturity_index, self.maturity_index
                )));
            }
        }
        if self.quotes.windows(2).any(|w| w[0].strike >= w[1].strike) {
            return Err(Error::invalid(format!(
                "strikes of maturity {} must be strictly increasing",
                self.maturity_index
            )));
        }
        if let Some(p) = self.extra_support.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::invalid(format!("extra support point {p} must be finite and >= 0")));
        }
        Ok(())
    }

    /// Sorted scaled support: strikes and extra points over the forward.
    pub fn scaled_support(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .quotes
            .iter()
            .map(|q| q.strike)
            .chain(self.extra_support.iter().copied())
            .map(|k| k / self.forward)
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }
}

/// Scaled quote arrays of one slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledQuotes {
    pub ask: Vec<f64>,
    pub bid: Vec<f64>,
    pub strike: Vec<f64>,
}

pub fn scale_quotes(slice: &MarketSlice) -> Result<ScaledQuotes> {
    if !(slice.forward > 0.0) || !(slice.discount > 0.0) {
        return Err(Error::invalid(format!(
            "forward {} and discount {} must be positive",
            slice.forward, slice.discount
        )));
    }
    let df = slice.discount * slice.forward;
    Ok(ScaledQuotes {
        ask: slice.quotes.iter().map(|q| q.ask / df).collect(),
        bid: slice.quotes.iter().map(|q| q.bid / df).collect(),
        strike: slice.quotes.iter().map(|q| q.strike / slice.forward).collect(),
    })
}

/// The calibration LP with the index maps needed to read its solution.
#[derive(Debug, Clone)]
pub struct CalibrationLp {
    pub lp: LinearProgram,
    pub supports: Vec<Vec<f64>>,
    pub scaled: Vec<ScaledQuotes>,
    /// Variable of the fitted price of quote `i` at maturity position `t`.
    pub price_vars: Vec<Vec<usize>>,
}

fn check_slices(slices: &[MarketSlice]) -> Result<()> {
    if slices.is_empty() {
        return Err(Error::invalid("calibration needs at least one maturity"));
    }
    for (pos, s) in slices.iter().enumerate() {
        s.validate()?;
        if s.maturity_index != pos + 1 {
            return Err(Error::invalid(format!(
                "slices must cover maturities 1..N in order; position {} holds maturity {}",
                pos + 1,
                s.maturity_index
            )));
        }
    }
    Ok(())
}

pub fn build_calibration_lp(slices: &[MarketSlice]) -> Result<CalibrationLp> {
    check_slices(slices)?;
    let supports: Vec<Vec<f64>> = slices.iter().map(MarketSlice::scaled_support).collect();
    let scaled: Vec<ScaledQuotes> = slices.iter().map(scale_quotes).collect::<Result<_>>()?;
    let shape: Vec<usize> = supports.iter().map(Vec::len).collect();
    let n = slices.len();
    let mut lp = LinearProgram::new(Sense::Minimize);
    let all: Vec<Vec<usize>> = MultiIndex::new(&shape).collect();
    for idx in &all {
        let tag: String = idx.iter().map(|i| format!("_{i}")).collect();
        lp.add_var(0.0, f64::INFINITY, format!("mu{tag}"));
    }

    let mut price_vars = Vec::with_capacity(n);
    for (t, sq) in scaled.iter().enumerate() {
        let mut vars = Vec::with_capacity(sq.strike.len());
        for i in 0..sq.strike.len() {
            let c = lp.add_var(0.0, f64::INFINITY, format!("c_t{}_{i}", t + 1));
            let split: Vec<usize> = ["p_plus", "p_minus", "q_plus", "q_minus"]
                .iter()
                .map(|name| {
                    let v = lp.add_var(0.0, f64::INFINITY, format!("{name}_t{}_{i}", t + 1));
                    lp.set_cost(v, 1.0);
                    v
                })
                .collect();
            lp.add_row(
                vec![(c, 1.0), (split[0], -1.0), (split[1], 1.0)],
                RowSense::Eq,
                sq.ask[i],
                format!("abs_ask_t{}_{i}", t + 1),
            );
            lp.add_row(
                vec![(c, 1.0), (split[2], -1.0), (split[3], 1.0)],
                RowSense::Eq,
                sq.bid[i],
                format!("abs_bid_t{}_{i}", t + 1),
            );
            let mut coeffs: Vec<(usize, f64)> = all
                .iter()
                .enumerate()
                .filter_map(|(flat, idx)| {
                    let payoff = (supports[t][idx[t]] - sq.strike[i]).max(0.0);
                    (payoff > 0.0).then_some((flat, payoff))
                })
                .collect();
            coeffs.push((c, -1.0));
            lp.add_row(coeffs, RowSense::Eq, 0.0, format!("pricing_t{}_{i}", t + 1));
            vars.push(c);
        }
        price_vars.push(vars);
    }

    for t in 1..n {
        let mut rows = vec![Vec::new(); shape[..t].iter().product()];
        for (flat, idx) in all.iter().enumerate() {
            let ds = supports[t][idx[t]] - supports[t - 1][idx[t - 1]];
            if ds != 0.0 {
                rows[grid::ravel(&idx[..t], &shape[..t])].push((flat, ds));
            }
        }
        for (h, coeffs) in rows.into_iter().enumerate() {
            if !coeffs.is_empty() {
                lp.add_row(coeffs, RowSense::Eq, 0.0, format!("martingale_t{t}_h{h}"));
            }
        }
    }
    for t in 0..n {
        let coeffs = all
            .iter()
            .enumerate()
            .map(|(flat, idx)| (flat, supports[t][idx[t]]))
            .filter(|&(_, s)| s != 0.0)
            .collect();
        lp.add_row(coeffs, RowSense::Eq, 1.0, format!("mean_t{}", t + 1));
    }
    lp.add_row((0..all.len()).map(|j| (j, 1.0)).collect(), RowSense::Eq, 1.0, "simplex");

    Ok(CalibrationLp {
        lp,
        supports,
        scaled,
        price_vars,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedQuote {
    pub maturity_index: usize,
    pub strike: f64,
    pub scaled_strike: f64,
    pub scaled_bid: f64,
    pub scaled_ask: f64,
    pub fitted_scaled: f64,
    /// Fitted call price in quote units, `c * D * F`.
    pub fitted_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub schema: String,
    pub asset: Asset,
    pub forwards: Vec<f64>,
    pub discounts: Vec<f64>,
    /// Scaled support per maturity.
    pub supports: Vec<Vec<f64>>,
    /// Joint masses, row-major over the supports.
    pub joint: Vec<f64>,
    /// Marginals on the scaled supports (unit mean).
    pub marginals: Vec<MarginalLaw>,
    pub fitted: Vec<FittedQuote>,
    pub objective: f64,
    pub spread_floor: f64,
    pub all_quotes_feasible: bool,
}

impl CalibrationResult {
    /// Marginals with support points multiplied back by the forwards.
    pub fn price_marginals(&self) -> Result<Vec<MarginalLaw>> {
        self.marginals
            .iter()
            .zip(&self.forwards)
            .map(|(m, f)| {
                MarginalLaw::from_parts(
                    m.grid().asset,
                    m.grid().maturity_index,
                    m.points().iter().map(|p| p * f).collect(),
                    m.masses().to_vec(),
                )
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.schema != CALIBRATION_SCHEMA {
            return Err(Error::schema(
                "schema",
                format!("expected {CALIBRATION_SCHEMA:?}, found {:?}", r.schema),
            ));
        }
        Ok(r)
    }
}

pub fn calibrate(slices: &[MarketSlice], asset: Asset) -> Result<CalibrationResult> {
    calibrate_with(slices, asset, &SolverConfig::default())
}

pub fn calibrate_with(
    slices: &[MarketSlice],
    asset: Asset,
    config: &SolverConfig,
) -> Result<CalibrationResult> {
    let model = build_calibration_lp(slices)?;
    let sol = lp::solve(&model.lp, config)?;
    if !sol.is_optimal() {
        let rows = lp::phase_one_diagnosis(&model.lp, config).unwrap_or_default();
        let mut families: Vec<String> = rows
            .iter()
            .map(|r| r.label.split('_').next().unwrap_or_default().to_string())
            .collect();
        families.sort();
        families.dedup();
        return Err(Error::Infeasible {
            context: format!("calibration LP is {}", sol.status),
            diagnostic: format!(
                "no martingale measure on the strike grids; failing constraint families: {}",
                families.join(", ")
            ),
        });
    }
    let shape: Vec<usize> = model.supports.iter().map(Vec::len).collect();
    let total: usize = shape.iter().product();
    let mut joint: Vec<f64> = sol.primal[..total].iter().map(|m| m.max(0.0)).collect();
    let sum: f64 = joint.iter().sum();
    joint.iter_mut().for_each(|m| *m /= sum);

    let marginals: Vec<MarginalLaw> = (0..slices.len())
        .map(|t| {
            let masses = crate::coupling::project_raw(&joint, &shape, &[t]);
            MarginalLaw::from_parts(asset, t + 1, model.supports[t].clone(), masses)
        })
        .collect::<Result<_>>()?;

    let mut fitted = Vec::new();
    let mut spread_floor = 0.0;
    for (t, slice) in slices.iter().enumerate() {
        let sq = &model.scaled[t];
        for (i, q) in slice.quotes.iter().enumerate() {
            let c = sol.primal[model.price_vars[t][i]];
            spread_floor += (sq.ask[i] - sq.bid[i]).abs();
            fitted.push(FittedQuote {
                maturity_index: slice.maturity_index,
                strike: q.strike,
                scaled_strike: sq.strike[i],
                scaled_bid: sq.bid[i],
                scaled_ask: sq.ask[i],
                fitted_scaled: c,
                fitted_price: c * slice.discount * slice.forward,
            });
        }
    }
    let objective = sol.objective_value;
    Ok(CalibrationResult {
        schema: CALIBRATION_SCHEMA.into(),
        asset,
        forwards: slices.iter().map(|s| s.forward).collect(),
        discounts: slices.iter().map(|s| s.discount).collect(),
        supports: model.supports,
        joint,
        marginals,
        fitted,
        objective,
        all_quotes_feasible: objective <= spread_floor + FEASIBLE_TOL,
        spread_floor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteDiagnosis {
    pub maturity_index: usize,
    pub strike: f64,
    pub fitted_scaled: f64,
    /// Distance from the fitted scaled price to `[bid, ask]`.
    pub distance: f64,
    pub infeasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub quotes: Vec<QuoteDiagnosis>,
    /// `objective - spread_floor`; twice the summed distances.
    pub excess: f64,
    pub convex_order_ok: bool,
}

pub fn feasibility_diagnosis(result: &CalibrationResult) -> FeasibilityReport {
    let quotes = result
        .fitted
        .iter()
        .map(|f| {
            let distance = (f.scaled_bid - f.fitted_scaled)
                .max(f.fitted_scaled - f.scaled_ask)
                .max(0.0);
            QuoteDiagnosis {
                maturity_index: f.maturity_index,
                strike: f.strike,
                fitted_scaled: f.fitted_scaled,
                distance,
                infeasible: distance > FEASIBLE_TOL,
            }
        })
        .collect();
    FeasibilityReport {
        quotes,
        excess: result.objective - result.spread_floor,
        convex_order_ok: result
            .marginals
            .windows(2)
            .all(|w| check_convex_order(&w[0], &w[1]).ordered),
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SliceParams {
    pub forward: f64,
    pub discount: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SidecarEntry {
    forward: f64,
    discount: f64,
    #[serde(default)]
    extra_support: Vec<f64>,
}

/// Reads quotes (`maturity_index,strike,bid,ask`) and the JSON sidecar
/// `{"<maturity_index>": {"forward": F, "discount": D}}` into slices.
pub fn read_option_chain<R: Read>(csv_input: R, sidecar_json: &str) -> Result<Vec<MarketSlice>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv_input);
    let headers = reader.headers()?.clone();
    let expected = ["maturity_index", "strike", "bid", "ask"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::schema(
            "line 1",
            format!("expected header {}, found {}", expected.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut by_maturity: BTreeMap<usize, Vec<OptionQuote>> = BTreeMap::new();
    for (i, rec) in reader.deserialize::<OptionQuote>().enumerate() {
        let q = rec.map_err(|e| Error::schema(format!("line {}", i + 2), e.to_string()))?;
        q.validate()
            .map_err(|e| Error::schema(format!("line {}", i + 2), e.to_string()))?;
        by_maturity.entry(q.maturity_index).or_default().push(q);
    }
    let sidecar: BTreeMap<String, SidecarEntry> = serde_json::from_str(sidecar_json)
        .map_err(|e| Error::schema("sidecar", e.to_string()))?;
    let mut params: BTreeMap<usize, SidecarEntry> = BTreeMap::new();
    for (k, v) in sidecar {
        let t: usize = k
            .parse()
            .map_err(|_| Error::schema("sidecar", format!("key {k:?} is not a maturity index")))?;
        params.insert(t, v);
    }
    by_maturity
        .into_iter()
        .map(|(t, quotes)| {
            let p = params
                .get(&t)
                .ok_or_else(|| Error::schema("sidecar", format!("no forward/discount for maturity {t}")))?;
            MarketSlice::new(t, p.forward, p.discount, quotes)?.with_extra_support(p.extra_support.clone())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quote(t: usize, k: f64, bid: f64, ask: f64) -> OptionQuote {
        OptionQuote {
            maturity_index: t,
            strike: k,
            bid,
            ask,
        }
    }

    #[test]
    fn scaling_examples() {
        let s = MarketSlice::new(1, 100.0, 0.99, vec![quote(1, 100.0, 4.0, 5.0)]).unwrap();
        let sq = scale_quotes(&s).unwrap();
        assert!((sq.ask[0] - 5.0 / 99.0).abs() < 1e-15);
        assert_eq!(sq.strike[0], 1.0);
        let unit = MarketSlice::new(1, 1.0, 1.0, vec![quote(1, 0.5, 0.1, 0.2)]).unwrap();
        let sq = scale_quotes(&unit).unwrap();
        assert_eq!((sq.bid[0], sq.ask[0], sq.strike[0]), (0.1, 0.2, 0.5));
        assert!(MarketSlice::new(1, 0.0, 1.0, vec![quote(1, 1.0, 0.0, 0.0)]).is_err());
        assert!(MarketSlice::new(1, 1.0, 1.5, vec![quote(1, 1.0, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn two_by_three_grid() {
        let mk = |t| {
            MarketSlice::new(
                t,
                100.0,
                1.0,
                vec![quote(t, 90.0, 8.0, 12.0), quote(t, 100.0, 3.0, 6.0), quote(t, 110.0, 0.0, 2.0)],
            )
            .unwrap()
        };
        let model = build_calibration_lp(&[mk(1), mk(2)]).unwrap();
        assert_eq!(model.lp.var_labels.iter().filter(|l| l.starts_with("mu")).count(), 9);
        assert!(build_calibration_lp(&[]).is_err());
    }

    #[test]
    fn single_maturity_two_points() {
        // support {0.9, 1.1}, mean 1 -> masses 1/2 each, call at 0.9 worth 0.1
        let s = MarketSlice::new(1, 100.0, 1.0, vec![quote(1, 90.0, 9.0, 11.0), quote(1, 110.0, 0.0, 0.0)])
            .unwrap();
        let r = calibrate(&[s], Asset::X).unwrap();
        assert!((r.objective - 0.02).abs() < 1e-9);
        assert!(r.all_quotes_feasible);
        assert!((r.marginals[0].masses()[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn point_mass_recovered() {
        let s = MarketSlice::new(1, 50.0, 1.0, vec![quote(1, 50.0, 0.0, 0.0)]).unwrap();
        let r = calibrate(&[s], Asset::Y).unwrap();
        assert_eq!(r.marginals[0].points(), &[1.0]);
        assert_eq!(r.marginals[0].masses(), &[1.0]);
        assert!(r.objective.abs() < 1e-12);
        assert_eq!(r.price_marginals().unwrap()[0].points(), &[50.0]);
    }

    #[test]
    fn infeasible_quote_flagged() {
        // the 90 call must be worth 0.1 under any unit-mean law on {0.9, 1.1};
        // an ask of 5 is below that
        let s = MarketSlice::new(1, 100.0, 1.0, vec![quote(1, 90.0, 4.0, 5.0), quote(1, 110.0, 0.0, 0.5)])
            .unwrap();
        let r = calibrate(&[s], Asset::X).unwrap();
        assert!(!r.all_quotes_feasible);
        assert!(r.objective > r.spread_floor + 1e-6);
        let d = feasibility_diagnosis(&r);
        assert!(d.quotes[0].infeasible && !d.quotes[1].infeasible);
        let total: f64 = d.quotes.iter().map(|q| q.distance).sum();
        assert!((d.excess - 2.0 * total).abs() < 1e-7);
    }

    #[test]
    fn chain_files() {
        let csv = "maturity_index,strike,bid,ask\n1,90,9,11\n1,110,0,0\n2,90,9.5,11.5\n2,110,0.5,1\n";
        let sidecar = r#"{"1": {"forward": 100, "discount": 1}, "2": {"forward": 100, "discount": 1, "extra_support": [70, 130]}}"#;
        let slices = read_option_chain(csv.as_bytes(), sidecar).unwrap();
        assert_eq!(slices.len(), 2);
        assert_eq!(slices[1].extra_support, vec![70.0, 130.0]);
        let bad = "maturity_index,strike,bid,ask\n1,90,11,9\n";
        match read_option_chain(bad.as_bytes(), sidecar) {
            Err(Error::Schema { location, .. }) => assert_eq!(location, "line 2"),
            other => panic!("{other:?}"),
        }
        assert!(read_option_chain(csv.as_bytes(), r#"{"1": {"forward": 100, "discount": 1}}"#).is_err());
    }
}
