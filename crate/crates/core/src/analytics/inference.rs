//! HAC mean-difference tests and the stationary bootstrap.
//!
//! Newey-West variance of a sample mean with Bartlett weights:
//!
//! ```text
//! gamma_l = (1/n) sum_{t>l} (x_t - m)(x_{t-l} - m)
//! Var(m)  = (gamma_0 + 2 sum_{l=1..L} (1 - l/(L+1)) gamma_l) / n
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{AnalyticsError, MIN_OVERLAP};
use crate::portfolio::ReturnSeries;
use crate::stats;

/// Newey-West estimate of the variance of the sample mean of `x`.
pub fn newey_west_variance(x: &[f64], lags: usize) -> f64 {
    let n = x.len();
    if n == 0 {
        return f64::NAN;
    }
    let m = stats::mean(x);
    let gamma0 = stats::pop_variance(x);
    let mut long_run = gamma0;
    for l in 1..=lags.min(n - 1) {
        let gamma: f64 = (l..n).map(|t| (x[t] - m) * (x[t - l] - m)).sum::<f64>() / n as f64;
        long_run += 2.0 * (1.0 - l as f64 / (lags as f64 + 1.0)) * gamma;
    }
    long_run / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct NwTest {
    pub n: usize,
    pub mean_diff: f64,
    pub std_error: f64,
    pub t: f64,
    /// Two-sided normal p-value.
    pub p: f64,
}

/// Tests `mean(a_t - b_t) = 0` on common dates with a Newey-West standard error.
pub fn nw_diff_test(a: &ReturnSeries, b: &ReturnSeries, lags: usize) -> Result<NwTest, AnalyticsError> {
    let (_, xa, xb) = ReturnSeries::align(a, b);
    if xa.len() < MIN_OVERLAP {
        return Err(AnalyticsError::TooFewObservations {
            needed: MIN_OVERLAP,
            found: xa.len(),
        });
    }
    let d: Vec<f64> = xa.iter().zip(&xb).map(|(x, y)| x - y).collect();
    let mean_diff = stats::mean(&d);
    let var = newey_west_variance(&d, lags).max(0.0);
    let se = var.sqrt();
    let t = if mean_diff == 0.0 {
        0.0
    } else if se > 0.0 {
        mean_diff / se
    } else {
        mean_diff.signum() * f64::INFINITY
    };
    let normal = Normal::standard();
    let p = (2.0 * (1.0 - normal.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(NwTest {
        n: d.len(),
        mean_diff,
        std_error: se,
        t,
        p,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub level: f64,
    pub resamples: usize,
    /// Mean block length; `ceil(n^(1/3))` when `None`.
    pub mean_block: Option<f64>,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> BootstrapConfig {
        BootstrapConfig {
            level: 0.95,
            resamples: 2000,
            mean_block: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Minimum series length accepted by [`stationary_bootstrap_ci`].
pub const MIN_BOOTSTRAP_LEN: usize = 100;

fn resample(x: &[f64], p_new_block: f64, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
    let n = x.len();
    out.clear();
    let mut at = rng.random_range(0..n);
    for _ in 0..n {
        out.push(x[at]);
        at = if rng.random::<f64>() < p_new_block {
            rng.random_range(0..n)
        } else {
            (at + 1) % n
        };
    }
}

/// Percentile interval of `statistic` under the Politis-Romano stationary
/// bootstrap (geometric block lengths, circular wrap). Resample `b` draws
/// from its own ChaCha stream, so results do not depend on thread count.
/// Resamples where the statistic is not finite are discarded.
pub fn stationary_bootstrap_ci<F>(x: &[f64], statistic: F, config: &BootstrapConfig) -> Result<Interval, AnalyticsError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x.len();
    if n < MIN_BOOTSTRAP_LEN {
        return Err(AnalyticsError::TooFewObservations {
            needed: MIN_BOOTSTRAP_LEN,
            found: n,
        });
    }
    let block = config.mean_block.unwrap_or_else(|| (n as f64).cbrt().ceil()).max(1.0);
    let p = 1.0 / block;
    let mut draws: Vec<f64> = (0..config.resamples)
        .into_par_iter()
        .map_init(Vec::new, |buf, b| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(b as u64);
            resample(x, p, &mut rng, buf);
            statistic(buf)
        })
        .filter(|v| v.is_finite())
        .collect();
    draws.sort_by(f64::total_cmp);
    let alpha = (1.0 - config.level) / 2.0;
    Ok(Interval {
        point: statistic(x),
        lower: stats::quantile_sorted(&draws, alpha),
        upper: stats::quantile_sorted(&draws, 1.0 - alpha),
    })
}
