//! Performance metrics and statistical inference on daily return series.
//!
//! ```text
//! SR     = sqrt(252) * mean(R) / std(R)              (population std)
//! IC_t   = Corr_Spearman(r_hat_{., t}, r_{., t+h})
//! MaxDD  = min_t (V_t / max_{s<=t} V_s - 1),   V_t = prod_{s<=t} (1 + R_s)
//! Calmar = 252 * mean(R) / |MaxDD|
//! ```

mod attribution;
mod inference;
mod robustness;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::panel::{Date, PanelError, ScorePanel};
use crate::portfolio::{PortfolioError, ReturnSeries};
use crate::stats;

pub use attribution::{
    factor_attribution, load_factor_panel, FactorPanel, FactorRegression, FACTOR_NAMES,
    MIN_FACTOR_OBS, RF_NAME,
};
pub use inference::{
    newey_west_variance, nw_diff_test, stationary_bootstrap_ci, BootstrapConfig, Interval,
    NwTest, MIN_BOOTSTRAP_LEN,
};
pub use robustness::{
    alpha_decay, cap_segment_report, pipeline_returns, DecayRow, SegmentReport,
    DEFAULT_DECAY_LAGS, MIN_SEGMENT_NAMES, SEGMENT_NAMES,
};

/// Trading days per year.
pub const ANNUALIZATION: f64 = 252.0;

/// Minimum overlapping dates for correlations and difference tests.
pub const MIN_OVERLAP: usize = 30;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("need at least {needed} observations, found {found}")]
    TooFewObservations { needed: usize, found: usize },
    #[error("design matrix is singular: column {column:?} is collinear with earlier columns")]
    Singular { column: String },
    #[error("factor file line {line}: {message}")]
    FactorFile { line: usize, message: String },
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Annualized Sharpe ratio with population standard deviation.
pub fn sharpe(values: &[f64]) -> Result<f64, AnalyticsError> {
    if values.len() < 2 {
        return Err(AnalyticsError::TooFewObservations {
            needed: 2,
            found: values.len(),
        });
    }
    let m = stats::mean(values);
    let sd = stats::pop_std(values);
    if !(sd > 1e-14 * m.abs()) || sd == 0.0 {
        return Err(AnalyticsError::ZeroVariance);
    }
    Ok(ANNUALIZATION.sqrt() * m / sd)
}

/// Fraction of strictly positive returns.
pub fn hit_rate(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().filter(|v| **v > 0.0).count() as f64 / values.len() as f64
}

/// Largest peak-to-trough loss of the compounded equity curve (starting at
/// 1), as a non-positive fraction.
pub fn max_drawdown(values: &[f64]) -> f64 {
    let mut equity = 1.0;
    let mut peak = 1.0;
    let mut worst = 0.0;
    for r in values {
        equity *= 1.0 + r;
        if equity > peak {
            peak = equity;
        }
        let dd = equity / peak - 1.0;
        if dd < worst {
            worst = dd;
        }
    }
    worst
}

/// `252 * mean / |MaxDD|`; `None` without a drawdown.
pub fn calmar(values: &[f64]) -> Option<f64> {
    let dd = max_drawdown(values);
    if dd == 0.0 || values.is_empty() {
        return None;
    }
    Some(stats::mean(values) * ANNUALIZATION / dd.abs())
}

/// Compounded (`prod(1 + R) - 1`) or arithmetic (`sum R`) total return.
pub fn total_return(values: &[f64], compounded: bool) -> f64 {
    if compounded {
        values.iter().fold(1.0, |acc, r| acc * (1.0 + r)) - 1.0
    } else {
        values.iter().sum()
    }
}

/// Sharpe per calendar year; `None` where a year has fewer than two points
/// or no variance.
pub fn yearly_sharpe(series: &ReturnSeries) -> Vec<(i32, Option<f64>)> {
    let mut by_year: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for (d, v) in series.dates.iter().zip(&series.values) {
        by_year.entry(d.year()).or_default().push(*v);
    }
    by_year
        .into_iter()
        .map(|(y, v)| (y, sharpe(&v).ok()))
        .collect()
}

/// Daily Spearman rank correlation between scores and realized returns.
///
/// `realized` is aligned to the scores' rows. Dates with fewer than three
/// complete pairs, or with no rank dispersion on either side, are skipped.
pub fn spearman_ic(scores: &ScorePanel, realized: &ScorePanel) -> Vec<(Date, f64)> {
    let aligned = realized.reindex(scores.index());
    let (s, r) = (scores.values(), aligned.values());
    scores
        .index()
        .date_groups()
        .iter()
        .filter_map(|g| {
            let pairs: Vec<(f64, f64)> = g
                .rows
                .iter()
                .map(|&i| (s[i], r[i]))
                .filter(|(a, b)| !a.is_nan() && !b.is_nan())
                .collect();
            if pairs.len() < 3 {
                return None;
            }
            let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            stats::pearson(&stats::average_ranks(&xs), &stats::average_ranks(&ys)).map(|ic| (g.date, ic))
        })
        .collect()
}

/// Pairwise Pearson correlation on common dates; `None` below
/// [`MIN_OVERLAP`] shared dates or without variance. Diagonal is 1.
pub fn strategy_correlations(series: &[ReturnSeries]) -> Vec<Vec<Option<f64>>> {
    let n = series.len();
    let mut out = vec![vec![None; n]; n];
    for i in 0..n {
        out[i][i] = Some(1.0);
        for j in 0..i {
            let (_, a, b) = ReturnSeries::align(&series[i], &series[j]);
            let c = if a.len() >= MIN_OVERLAP {
                stats::pearson(&a, &b)
            } else {
                None
            };
            out[i][j] = c;
            out[j][i] = c;
        }
    }
    out
}

/// Summary statistics of one strategy's daily returns.
#[derive(Debug, Clone, PartialEq)]
pub struct PerfReport {
    pub n_days: usize,
    pub sharpe: Option<f64>,
    pub mean_daily: f64,
    pub annual_return: f64,
    pub annual_vol: f64,
    pub max_drawdown: f64,
    pub calmar: Option<f64>,
    pub mean_ic: Option<f64>,
    pub hit_rate: f64,
    pub total_return: f64,
    pub yearly_sharpe: Vec<(i32, Option<f64>)>,
}

impl PerfReport {
    pub fn from_series(series: &ReturnSeries, ic: Option<&[(Date, f64)]>, compounded_total: bool) -> PerfReport {
        let v = &series.values;
        let mean_ic = ic.filter(|x| !x.is_empty()).map(|x| {
            let values: Vec<f64> = x.iter().map(|p| p.1).collect();
            stats::mean(&values)
        });
        PerfReport {
            n_days: v.len(),
            sharpe: sharpe(v).ok(),
            mean_daily: stats::mean(v),
            annual_return: stats::mean(v) * ANNUALIZATION,
            annual_vol: if v.is_empty() { f64::NAN } else { stats::pop_std(v) * ANNUALIZATION.sqrt() },
            max_drawdown: max_drawdown(v),
            calmar: calmar(v),
            mean_ic,
            hit_rate: hit_rate(v),
            total_return: total_return(v, compounded_total),
            yearly_sharpe: yearly_sharpe(series),
        }
    }

    fn yearly_values(&self) -> Vec<f64> {
        self.yearly_sharpe.iter().filter_map(|(_, s)| *s).collect()
    }

    /// Mean of the per-year Sharpe ratios.
    pub fn avg_yearly_sharpe(&self) -> Option<f64> {
        let v = self.yearly_values();
        (!v.is_empty()).then(|| stats::mean(&v))
    }

    /// Sample standard deviation of the per-year Sharpe ratios.
    pub fn yearly_sharpe_std(&self) -> Option<f64> {
        let v = self.yearly_values();
        (v.len() >= 2).then(|| stats::sample_std(&v))
    }

    pub fn best_year(&self) -> Option<(i32, f64)> {
        self.yearly_sharpe
            .iter()
            .filter_map(|(y, s)| s.map(|s| (*y, s)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn worst_year(&self) -> Option<(i32, f64)> {
        self.yearly_sharpe
            .iter()
            .filter_map(|(y, s)| s.map(|s| (*y, s)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}
