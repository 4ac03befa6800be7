//! Oracles shared by the integration tests.

#![allow(dead_code)]

use panelalpha::optimizer::{OptProblem, RiskModel, RiskParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const RISK: RiskParams = RiskParams {
    sector_vol: 0.2,
    sector_corr: 0.3,
    idio_fraction: 0.5,
};

/// Small long-short problem solved by exhaustive search on a 1e-3 lattice.
#[derive(Debug, Clone)]
pub struct GridProblem {
    pub alpha: Vec<f64>,
    pub cost: Vec<f64>,
    pub prev: Vec<f64>,
    pub sigma: Vec<f64>,
    pub sectors: Vec<usize>,
    pub w_max: f64,
    pub lambda_tc: f64,
    pub lambda_risk: f64,
}

impl GridProblem {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    /// Dense covariance `B F B' + D` built entry by entry.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let v = RISK.sector_vol * RISK.sector_vol;
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let f = if self.sectors[i] == self.sectors[j] { v } else { RISK.sector_corr * v };
                        let d = if i == j { RISK.idio_fraction * self.sigma[i] * self.sigma[i] } else { 0.0 };
                        f + d
                    })
                    .collect()
            })
            .collect()
    }

    pub fn objective(&self, cov: &[Vec<f64>], w: &[f64]) -> f64 {
        let n = self.len();
        let mut risk = 0.0;
        for i in 0..n {
            for j in 0..n {
                risk += w[i] * cov[i][j] * w[j];
            }
        }
        let gain: f64 = (0..n).map(|i| self.alpha[i] * w[i]).sum();
        let tc: f64 = (0..n).map(|i| self.cost[i] * (w[i] - self.prev[i]).abs()).sum();
        gain - self.lambda_tc * tc - self.lambda_risk * risk
    }

    /// Best objective over lattice weights: longs on positive alpha, shorts
    /// on negative alpha, each side summing to one, each weight within the cap.
    pub fn grid_best(&self, neutral: bool) -> f64 {
        const UNITS: i64 = 1000;
        let n = self.len();
        let cap = (self.w_max * UNITS as f64).round() as i64;
        let longs: Vec<usize> = (0..n).filter(|&i| self.alpha[i] > 0.0).collect();
        let shorts: Vec<usize> = (0..n).filter(|&i| self.alpha[i] < 0.0).collect();
        let cov = self.covariance();
        let long_sets = compositions(longs.len(), UNITS, cap);
        let short_sets = compositions(shorts.len(), UNITS, cap);
        let n_sectors = self.sectors.iter().max().map_or(0, |m| m + 1);
        let mut best = f64::NEG_INFINITY;
        let mut w = vec![0.0; n];
        let mut units = vec![0i64; n];
        for l in &long_sets {
            for s in &short_sets {
                for (k, &i) in longs.iter().enumerate() {
                    units[i] = l[k];
                }
                for (k, &i) in shorts.iter().enumerate() {
                    units[i] = -s[k];
                }
                if neutral {
                    let mut net = vec![0i64; n_sectors];
                    for i in 0..n {
                        net[self.sectors[i]] += units[i];
                    }
                    if net.iter().any(|v| *v != 0) {
                        continue;
                    }
                }
                for i in 0..n {
                    w[i] = units[i] as f64 / UNITS as f64;
                }
                best = best.max(self.objective(&cov, &w));
            }
        }
        best
    }

    pub fn to_solver(&self, neutral: bool) -> (OptProblem, RiskModel) {
        let labels: Vec<Option<String>> = self.sectors.iter().map(|s| Some(format!("G{s}"))).collect();
        let risk = RiskModel::sector_factor(&self.sigma, &labels, &RISK);
        let problem = OptProblem {
            alpha: self.alpha.clone(),
            cost: self.cost.clone(),
            prev: self.prev.clone(),
            lambda_tc: self.lambda_tc,
            lambda_risk: self.lambda_risk,
            w_max: self.w_max,
            sector_neutral: neutral,
            sectors: self.sectors.clone(),
        };
        (problem, risk)
    }
}

/// All ways to split `total` units over `k` slots with each slot at most `cap`.
pub fn compositions(k: usize, total: i64, cap: i64) -> Vec<Vec<i64>> {
    if k == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    if k == 1 {
        return if total <= cap { vec![vec![total]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in 0..=total.min(cap) {
        for mut rest in compositions(k - 1, total - first, cap) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random problem with `n_long` positive and `n - n_long` negative alphas in
/// shuffled positions and `n_sectors` sectors.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, n_long: usize, w_max: f64, n_sectors: usize) -> GridProblem {
    let mut alpha: Vec<f64> = (0..n)
        .map(|i| {
            let m = 0.02 + 0.1 * rng.random::<f64>();
            if i < n_long { m } else { -m }
        })
        .collect();
    for i in (1..n).rev() {
        alpha.swap(i, rng.random_range(0..=i));
    }
    GridProblem {
        cost: (0..n).map(|_| 0.05 * rng.random::<f64>()).collect(),
        prev: (0..n).map(|_| 0.5 * normal(rng)).collect(),
        sigma: (0..n).map(|_| rng.random_range(0.1..0.5)).collect(),
        sectors: (0..n).map(|_| rng.random_range(0..n_sectors)).collect(),
        alpha,
        w_max,
        lambda_tc: rng.random_range(0.0..2.0),
        lambda_risk: rng.random_range(0.2..2.0),
    }
}

/// Sector map where sector `j` holds the `j`-th long and `j`-th short name;
/// surplus names on the larger side join the last sector.
pub fn paired_sectors(alpha: &[f64]) -> Vec<usize> {
    let longs: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i] > 0.0).collect();
    let shorts: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i] < 0.0).collect();
    let pairs = longs.len().min(shorts.len());
    let mut s = vec![pairs.saturating_sub(1); alpha.len()];
    for j in 0..pairs {
        s[longs[j]] = j;
        s[shorts[j]] = j;
    }
    s
}
