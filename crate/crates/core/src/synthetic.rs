//! Seeded generators for discrete martingale measures, option chains priced
//! from them, and random marginal systems in convex order.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::calibration::{calibrate_with, MarketSlice, OptionQuote};
use crate::coupling::PathLaw;
use crate::error::Result;
use crate::lp::SolverConfig;
use crate::marginals::{Asset, MarginalLaw, MarginalSystem};
use crate::mccormick::{solve_mccormick_with, McCormickInstance};
use crate::mot::{solve_mot_with, Direction, MotInstance};
use crate::payoffs::{PayoffSpec, PayoffTable};
use crate::report::{Interval, RatioRecord};

/// Random distribution on `grid` with mean `v` (`grid` must straddle `v`):
/// a mixture of two-point laws `a <= v <= b`.
fn bridge_mixture<R: Rng>(rng: &mut R, v: f64, grid: &[f64], pieces: usize) -> Vec<f64> {
    let below: Vec<usize> = (0..grid.len()).filter(|&i| grid[i] <= v).collect();
    let above: Vec<usize> = (0..grid.len()).filter(|&i| grid[i] >= v).collect();
    assert!(!below.is_empty() && !above.is_empty(), "grid must straddle {v}");
    let mut out = vec![0.0; grid.len()];
    let weights: Vec<f64> = (0..pieces).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    for w in weights {
        let a = *below.choose(rng).unwrap();
        let b = *above.choose(rng).unwrap();
        if grid[a] == grid[b] {
            out[a] += w / total;
        } else {
            let pb = (v - grid[a]) / (grid[b] - grid[a]);
            out[a] += w / total * (1.0 - pb);
            out[b] += w / total * pb;
        }
    }
    out
}

/// A martingale path law started at `x0` on the given grids (each grid must
/// straddle every point of the previous one, the first must straddle `x0`).
pub fn random_path_law<R: Rng>(rng: &mut R, x0: f64, grids: &[Vec<f64>]) -> PathLaw {
    let shape: Vec<usize> = grids.iter().map(Vec::len).collect();
    let mut masses = bridge_mixture(rng, x0, &grids[0], 3);
    for t in 1..grids.len() {
        let kernels: Vec<Vec<f64>> = grids[t - 1]
            .iter()
            .map(|&v| bridge_mixture(rng, v, &grids[t], 3))
            .collect();
        let prev_len: usize = shape[..t].iter().product();
        let mut next = Vec::with_capacity(prev_len * shape[t]);
        for h in 0..prev_len {
            let last = h % shape[t - 1];
            for j in 0..shape[t] {
                next.push(masses[h] * kernels[last][j]);
            }
        }
        masses = next;
    }
    PathLaw {
        points: grids.to_vec(),
        masses,
    }
}

fn distinct_points<R: Rng>(rng: &mut R, count: usize, lo: i64, hi: i64, forced: &[(i64, i64)]) -> Vec<f64> {
    let mut pts: Vec<i64> = forced.iter().map(|&(a, b)| rng.gen_range(a..=b)).collect();
    while pts.len() < count {
        let p = rng.gen_range(lo..=hi);
        if !pts.contains(&p) {
            pts.push(p);
        }
    }
    pts.sort_unstable();
    pts.dedup();
    while pts.len() < count {
        let p = rng.gen_range(lo..=hi);
        if !pts.contains(&p) {
            pts.push(p);
            pts.sort_unstable();
        }
    }
    pts.into_iter().map(|p| p as f64).collect()
}

/// Marginals of a path law, dropping points that carry no mass.
fn path_marginals(law: &PathLaw, asset: Asset) -> Result<Vec<MarginalLaw>> {
    let shape = law.shape();
    (0..shape.len())
        .map(|t| {
            let m = crate::coupling::project_raw(&law.masses, &shape, &[t]);
            let (pts, ms): (Vec<f64>, Vec<f64>) = law.points[t]
                .iter()
                .zip(&m)
                .filter(|(_, &w)| w > 1e-12)
                .map(|(&p, &w)| (p, w))
                .unzip();
            let total: f64 = ms.iter().sum();
            MarginalLaw::from_parts(asset, t + 1, pts, ms.iter().map(|w| w / total).collect())
        })
        .collect()
}

/// Two assets, two maturities, 2..=4 support points per marginal, in convex
/// order by construction.
pub fn random_system<R: Rng>(rng: &mut R) -> Result<MarginalSystem> {
    let mut laws = Vec::new();
    for (asset, x0) in [(Asset::X, 20.0), (Asset::Y, 40.0)] {
        let c = x0 as i64;
        let n1 = rng.gen_range(2..=4);
        let g1 = distinct_points(rng, n1, c - 8, c + 8, &[(c - 8, c - 1), (c + 1, c + 8)]);
        let (lo, hi) = (g1[0] as i64, *g1.last().unwrap() as i64);
        let n2 = rng.gen_range(2..=4);
        let g2 = distinct_points(rng, n2, c - 16, c + 16, &[(c - 16, lo - 1), (hi + 1, c + 16)]);
        let law = random_path_law(rng, x0, &[g1, g2]);
        laws.push(path_marginals(&law, asset)?);
    }
    let y = laws.pop().unwrap();
    let x = laws.pop().unwrap();
    MarginalSystem::new(x, y)
}

/// Random payoff values on the system's product grid.
pub fn random_table<R: Rng>(rng: &mut R, system: &MarginalSystem) -> PayoffTable {
    let shape = system.product_grid().shape();
    let len = shape.iter().product();
    PayoffTable {
        shape,
        values: (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    }
}

/// A joint martingale measure for one asset over two maturities, with the
/// subset of support points that carry option quotes.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMeasure {
    pub forward: f64,
    pub law: PathLaw,
    pub strikes: Vec<Vec<f64>>,
}

impl SyntheticMeasure {
    pub fn call_price(&self, t: usize, strike: f64) -> f64 {
        let shape = self.law.shape();
        let m = crate::coupling::project_raw(&self.law.masses, &shape, &[t]);
        self.law.points[t]
            .iter()
            .zip(&m)
            .map(|(s, w)| (s - strike).max(0.0) * w)
            .sum()
    }

    pub fn marginals(&self, asset: Asset) -> Result<Vec<MarginalLaw>> {
        path_marginals(&self.law, asset)
    }
}

/// Forward 100; strikes `3..=max_strikes` per maturity in `[50, 125]`; an
/// unquoted wing at 200 (both maturities) and a low point at 20 (second
/// maturity). The first maturity puts mass 0.2 on the wing, so every call is
/// worth at least 0.15 forwards and bids stay positive for spreads below that.
pub fn random_measure<R: Rng>(rng: &mut R, max_strikes: usize) -> SyntheticMeasure {
    let forward = 100.0;
    let n1 = rng.gen_range(3..=max_strikes.max(3));
    let strikes1 = distinct_points(rng, n1, 50, 125, &[(50, 70), (80, 125)]);
    let n2 = rng.gen_range(3..=max_strikes.max(3));
    let strikes2 = distinct_points(rng, n2, 50, 125, &[]);
    let mut g1 = strikes1.clone();
    g1.push(200.0);
    let mut g2 = strikes2.clone();
    g2.insert(0, 20.0);
    g2.push(200.0);

    let inner = bridge_mixture(rng, 75.0, &strikes1, 4);
    let mut m1: Vec<f64> = inner.iter().map(|w| 0.8 * w).collect();
    m1.push(0.2);
    let mut masses = Vec::with_capacity(g1.len() * g2.len());
    for (i, &v) in g1.iter().enumerate() {
        let k = bridge_mixture(rng, v, &g2, 3);
        masses.extend(k.iter().map(|w| m1[i] * w));
    }
    SyntheticMeasure {
        forward,
        law: PathLaw {
            points: vec![g1, g2],
            masses,
        },
        strikes: vec![strikes1, strikes2],
    }
}

/// Quotes `C -+ s D F` around the measure's discounted call prices, so the
/// scaled bid/ask spread is exactly `2 s`. Unquoted support points are passed
/// as extra support.
pub fn synthetic_chain(measure: &SyntheticMeasure, spread: f64, discounts: &[f64]) -> Result<Vec<MarketSlice>> {
    let f = measure.forward;
    measure
        .strikes
        .iter()
        .enumerate()
        .map(|(t, strikes)| {
            let d = discounts[t];
            let quotes = strikes
                .iter()
                .map(|&k| {
                    let c = d * measure.call_price(t, k);
                    OptionQuote {
                        maturity_index: t + 1,
                        strike: k,
                        bid: c - spread * d * f,
                        ask: c + spread * d * f,
                    }
                })
                .collect();
            let extra = measure.law.points[t]
                .iter()
                .copied()
                .filter(|p| !strikes.contains(p))
                .collect();
            MarketSlice::new(t + 1, f, d, quotes)?.with_extra_support(extra)
        })
        .collect()
}

/// Calibrates one synthetic chain per asset, prices a basket Asian call
/// struck at the average forward, and returns the ratio of the McCormick
/// interval width to the classical one.
pub fn synthetic_ratio<R: Rng>(
    rng: &mut R,
    label: &str,
    max_strikes: usize,
    spread: f64,
    config: &SolverConfig,
) -> Result<RatioRecord> {
    let mut marginals = Vec::new();
    for (asset, scale) in [(Asset::X, 1.0), (Asset::Y, 0.5)] {
        let measure = random_measure(rng, max_strikes);
        let discounts: Vec<f64> = (0..2).map(|_| rng.gen_range(0.95..1.0)).collect();
        let mut slices = synthetic_chain(&measure, spread, &discounts)?;
        for s in &mut slices {
            s.forward *= scale;
            for q in &mut s.quotes {
                q.strike *= scale;
                q.bid *= scale;
                q.ask *= scale;
            }
            s.extra_support.iter_mut().for_each(|p| *p *= scale);
        }
        let cal = calibrate_with(&slices, asset, config)?;
        marginals.push(
            cal.price_marginals()?
                .iter()
                .map(|l| l.trimmed(1e-12))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let y = marginals.pop().unwrap();
    let x = marginals.pop().unwrap();
    let system = MarginalSystem::new(x, y)?;
    let strike = (100.0 + 50.0) / 2.0;
    let mot = MotInstance::new(system, &PayoffSpec::BasketAsianCall { strike })?;
    let mot_iv = Interval::new(
        solve_mot_with(&mot, Direction::Min, config)?.value,
        solve_mot_with(&mot, Direction::Max, config)?.value,
    );
    let mc = McCormickInstance::with_default_bounds(mot);
    let mc_iv = Interval::new(
        solve_mccormick_with(&mc, Direction::Min, config)?.value,
        solve_mccormick_with(&mc, Direction::Max, config)?.value,
    );
    RatioRecord::new(label, mot_iv, mc_iv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginals::validate_system;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_systems_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let sys = random_system(&mut rng).unwrap();
            assert!(validate_system(&sys).pass);
            for a in [Asset::X, Asset::Y] {
                assert!(sys.laws(a).iter().all(|l| (2..=4).contains(&l.len())));
            }
        }
    }

    #[test]
    fn measures_are_martingales_with_positive_bids() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let m = random_measure(&mut rng, 6);
            assert!(m.law.martingale_residual() < 1e-12);
            let total: f64 = m.law.masses.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            let chain = synthetic_chain(&m, 0.05, &[0.98, 0.97]).unwrap();
            assert!(chain.iter().flat_map(|s| &s.quotes).all(|q| q.bid > 0.0));
        }
    }
}
