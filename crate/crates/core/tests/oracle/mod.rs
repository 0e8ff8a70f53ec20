//! Multistart alternating optimizer over two-period bicausal martingale
//! couplings, written against explicit `[x1][x2][y1][y2]` indexing.
//!
//! A bicausal coupling is `P(x1, y1) * G(x2, y2 | x1, y1)` where `G` couples
//! the kernels `q(. | x1)` and `r(. | y1)`. Block F fixes the two path laws
//! `q(x1, x2)`, `r(y1, y2)` and optimizes over the rest; block P fixes the
//! first-period coupling `P(x1, y1)`. Each block is a plain LP.

#![allow(dead_code)]

use mcmot::lp::{self, LinearProgram, RowSense, Sense, SolverConfig};
use mcmot::marginals::{Asset, MarginalSystem};
use rand::Rng;

pub struct Dims {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub d: usize,
}

impl Dims {
    pub fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.b + j) * self.c + k) * self.d + l
    }

    pub fn len(&self) -> usize {
        self.a * self.b * self.c * self.d
    }
}

struct Data {
    dims: Dims,
    x1: Vec<f64>,
    x2: Vec<f64>,
    y1: Vec<f64>,
    y2: Vec<f64>,
    mu1: Vec<f64>,
    mu2: Vec<f64>,
    nu1: Vec<f64>,
    nu2: Vec<f64>,
}

impl Data {
    fn of(system: &MarginalSystem) -> Self {
        let law = |a, t| system.law(a, t);
        let dims = Dims {
            a: law(Asset::X, 1).len(),
            b: law(Asset::X, 2).len(),
            c: law(Asset::Y, 1).len(),
            d: law(Asset::Y, 2).len(),
        };
        Data {
            dims,
            x1: law(Asset::X, 1).points().to_vec(),
            x2: law(Asset::X, 2).points().to_vec(),
            y1: law(Asset::Y, 1).points().to_vec(),
            y2: law(Asset::Y, 2).points().to_vec(),
            mu1: law(Asset::X, 1).masses().to_vec(),
            mu2: law(Asset::X, 2).masses().to_vec(),
            nu1: law(Asset::Y, 1).masses().to_vec(),
            nu2: law(Asset::Y, 2).masses().to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub value: f64,
    pub masses: Vec<f64>,
}

fn coupling_vars(lp: &mut LinearProgram, d: &Dims, cost: &[f64]) {
    for p in 0..d.len() {
        let v = lp.add_var(0.0, f64::INFINITY, format!("pi{p}"));
        lp.set_cost(v, cost[p]);
    }
}

fn solve(lp: &LinearProgram) -> Option<Vec<f64>> {
    let sol = lp::solve(lp, &SolverConfig::default()).ok()?;
    sol.is_optimal().then_some(sol.primal)
}

/// A vertex of the martingale transport polytope for the cost `cost`.
fn mot_vertex(data: &Data, cost: &[f64]) -> Option<Vec<f64>> {
    let d = &data.dims;
    let mut lp = LinearProgram::new(Sense::Minimize);
    coupling_vars(&mut lp, d, cost);
    for i in 0..d.a {
        let mut row = Vec::new();
        for j in 0..d.b {
            for k in 0..d.c {
                for l in 0..d.d {
                    row.push((d.idx(i, j, k, l), 1.0));
                }
            }
        }
        lp.add_row(row, RowSense::Eq, data.mu1[i], "mu1");
    }
    for j in 0..d.b {
        let mut row = Vec::new();
        for i in 0..d.a {
            for k in 0..d.c {
                for l in 0..d.d {
                    row.push((d.idx(i, j, k, l), 1.0));
                }
            }
        }
        lp.add_row(row, RowSense::Eq, data.mu2[j], "mu2");
    }
    for k in 0..d.c {
        let mut row = Vec::new();
        for i in 0..d.a {
            for j in 0..d.b {
                for l in 0..d.d {
                    row.push((d.idx(i, j, k, l), 1.0));
                }
            }
        }
        lp.add_row(row, RowSense::Eq, data.nu1[k], "nu1");
    }
    for l in 0..d.d {
        let mut row = Vec::new();
        for i in 0..d.a {
            for j in 0..d.b {
                for k in 0..d.c {
                    row.push((d.idx(i, j, k, l), 1.0));
                }
            }
        }
        lp.add_row(row, RowSense::Eq, data.nu2[l], "nu2");
    }
    for i in 0..d.a {
        for k in 0..d.c {
            let mut mx = Vec::new();
            let mut my = Vec::new();
            for j in 0..d.b {
                for l in 0..d.d {
                    mx.push((d.idx(i, j, k, l), data.x2[j] - data.x1[i]));
                    my.push((d.idx(i, j, k, l), data.y2[l] - data.y1[k]));
                }
            }
            lp.add_row(mx, RowSense::Eq, 0.0, "mx");
            lp.add_row(my, RowSense::Eq, 0.0, "my");
        }
    }
    solve(&lp)
}

fn path_laws(d: &Dims, pi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut q = vec![0.0; d.a * d.b];
    let mut r = vec![0.0; d.c * d.d];
    for i in 0..d.a {
        for j in 0..d.b {
            for k in 0..d.c {
                for l in 0..d.d {
                    let m = pi[d.idx(i, j, k, l)];
                    q[i * d.b + j] += m;
                    r[k * d.d + l] += m;
                }
            }
        }
    }
    (q, r)
}

fn first_period(d: &Dims, pi: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; d.a * d.c];
    for i in 0..d.a {
        for j in 0..d.b {
            for k in 0..d.c {
                for l in 0..d.d {
                    p[i * d.c + k] += pi[d.idx(i, j, k, l)];
                }
            }
        }
    }
    p
}

/// Block F: path laws `q`, `r` fixed.
fn block_f(data: &Data, cost: &[f64], q: &[f64], r: &[f64]) -> Option<Vec<f64>> {
    let d = &data.dims;
    let qm: Vec<f64> = (0..d.a).map(|i| (0..d.b).map(|j| q[i * d.b + j]).sum()).collect();
    let rm: Vec<f64> = (0..d.c).map(|k| (0..d.d).map(|l| r[k * d.d + l]).sum()).collect();
    let mut lp = LinearProgram::new(Sense::Minimize);
    coupling_vars(&mut lp, d, cost);
    for i in 0..d.a {
        for j in 0..d.b {
            let mut row = Vec::new();
            for k in 0..d.c {
                for l in 0..d.d {
                    row.push((d.idx(i, j, k, l), 1.0));
                }
            }
            lp.add_row(row, RowSense::Eq, q[i * d.b + j], "q");
        }
    }
    for k in 0..d.c {
        for l in 0..d.d {
            let mut row = Vec::new();
            for i in 0..d.a {
                for j in 0..d.b {
                    row.push((d.idx(i, j, k, l), 1.0));
                }
            }
            lp.add_row(row, RowSense::Eq, r[k * d.d + l], "r");
        }
    }
    // pi(x1, x2, y1) = q(x2 | x1) pi(x1, y1)
    for i in 0..d.a {
        for k in 0..d.c {
            for j in 0..d.b {
                let ratio = if qm[i] > 0.0 { q[i * d.b + j] / qm[i] } else { 0.0 };
                let mut row = Vec::new();
                for jj in 0..d.b {
                    for l in 0..d.d {
                        let coef = if jj == j { 1.0 - ratio } else { -ratio };
                        row.push((d.idx(i, jj, k, l), coef));
                    }
                }
                lp.add_row(row, RowSense::Eq, 0.0, "kx");
            }
        }
    }
    // pi(x1, y1, y2) = r(y2 | y1) pi(x1, y1)
    for i in 0..d.a {
        for k in 0..d.c {
            for l in 0..d.d {
                let ratio = if rm[k] > 0.0 { r[k * d.d + l] / rm[k] } else { 0.0 };
                let mut row = Vec::new();
                for j in 0..d.b {
                    for ll in 0..d.d {
                        let coef = if ll == l { 1.0 - ratio } else { -ratio };
                        row.push((d.idx(i, j, k, ll), coef));
                    }
                }
                lp.add_row(row, RowSense::Eq, 0.0, "ky");
            }
        }
    }
    solve(&lp)
}

/// Block P: first-period coupling `p` fixed; path laws free.
fn block_p(data: &Data, cost: &[f64], p: &[f64]) -> Option<Vec<f64>> {
    let d = &data.dims;
    let mut lp = LinearProgram::new(Sense::Minimize);
    coupling_vars(&mut lp, d, cost);
    let q0 = lp.num_vars();
    for n in 0..d.a * d.b {
        lp.add_var(0.0, f64::INFINITY, format!("q{n}"));
    }
    let r0 = lp.num_vars();
    for n in 0..d.c * d.d {
        lp.add_var(0.0, f64::INFINITY, format!("r{n}"));
    }
    for i in 0..d.a {
        for k in 0..d.c {
            let pik = p[i * d.c + k];
            for j in 0..d.b {
                let mut row: Vec<(usize, f64)> = (0..d.d).map(|l| (d.idx(i, j, k, l), 1.0)).collect();
                row.push((q0 + i * d.b + j, -pik / data.mu1[i]));
                lp.add_row(row, RowSense::Eq, 0.0, "kx");
            }
            for l in 0..d.d {
                let mut row: Vec<(usize, f64)> = (0..d.b).map(|j| (d.idx(i, j, k, l), 1.0)).collect();
                row.push((r0 + k * d.d + l, -pik / data.nu1[k]));
                lp.add_row(row, RowSense::Eq, 0.0, "ky");
            }
        }
    }
    // martingale path laws with the given marginals
    for i in 0..d.a {
        let row = (0..d.b).map(|j| (q0 + i * d.b + j, 1.0)).collect();
        lp.add_row(row, RowSense::Eq, data.mu1[i], "q1");
        let row = (0..d.b).map(|j| (q0 + i * d.b + j, data.x2[j] - data.x1[i])).collect();
        lp.add_row(row, RowSense::Eq, 0.0, "qm");
    }
    for j in 0..d.b {
        let row = (0..d.a).map(|i| (q0 + i * d.b + j, 1.0)).collect();
        lp.add_row(row, RowSense::Eq, data.mu2[j], "q2");
    }
    for k in 0..d.c {
        let row = (0..d.d).map(|l| (r0 + k * d.d + l, 1.0)).collect();
        lp.add_row(row, RowSense::Eq, data.nu1[k], "r1");
        let row = (0..d.d).map(|l| (r0 + k * d.d + l, data.y2[l] - data.y1[k])).collect();
        lp.add_row(row, RowSense::Eq, 0.0, "rm");
    }
    for l in 0..d.d {
        let row = (0..d.c).map(|k| (r0 + k * d.d + l, 1.0)).collect();
        lp.add_row(row, RowSense::Eq, data.nu2[l], "r2");
    }
    solve(&lp).map(|x| x[..d.len()].to_vec())
}

fn value(payoff: &[f64], pi: &[f64]) -> f64 {
    payoff.iter().zip(pi).map(|(f, m)| f * m).sum()
}

/// Best value of `sign * payoff` found over `restarts` random starts, reported
/// back in payoff units. `payoff` uses the `[x1][x2][y1][y2]` layout.
pub fn alternating_oracle<R: Rng>(
    rng: &mut R,
    system: &MarginalSystem,
    payoff: &[f64],
    sign: f64,
    restarts: usize,
) -> Option<OracleResult> {
    let data = Data::of(system);
    let d = &data.dims;
    assert_eq!(payoff.len(), d.len());
    let cost: Vec<f64> = payoff.iter().map(|v| sign * v).collect();
    let mut best: Option<OracleResult> = None;
    for _ in 0..restarts {
        let random_cost: Vec<f64> = (0..d.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let Some(start) = mot_vertex(&data, &random_cost) else {
            continue;
        };
        let (q, r) = path_laws(d, &start);
        let Some(mut pi) = block_f(&data, &cost, &q, &r) else {
            continue;
        };
        let mut current = value(&cost, &pi);
        for it in 0..60 {
            let next = if it % 2 == 0 {
                block_p(&data, &cost, &first_period(d, &pi))
            } else {
                let (q, r) = path_laws(d, &pi);
                block_f(&data, &cost, &q, &r)
            };
            let Some(next) = next else { break };
            let v = value(&cost, &next);
            let improved = v < current - 1e-12;
            if v <= current {
                pi = next;
                current = v;
            }
            if !improved && it > 0 {
                break;
            }
        }
        if best.as_ref().map_or(true, |b| sign * current < sign * b.value) {
            best = Some(OracleResult {
                value: sign * current,
                masses: pi,
            });
        }
    }
    best
}
