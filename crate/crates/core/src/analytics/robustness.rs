//! Execution-delay decay and market-cap segment checks.
//!
//! Decay re-runs the portfolio pipeline against `r_{i, t+N+1}` for each lag
//! `N`. Segments split each date's names by cap at positions
//! `floor(k n / 3)`, `k = 1, 2`, and run the pipeline inside each third.

use std::collections::HashSet;

use super::{sharpe, AnalyticsError};
use crate::panel::{forward_return, forward_return_column, Date, Panel, ScorePanel, SecurityId};
use crate::portfolio::{construct_book, portfolio_returns, ConstructionSpec, ReturnSeries};

/// Execution lags reported by default.
pub const DEFAULT_DECAY_LAGS: [usize; 6] = [0, 1, 2, 3, 5, 10];

/// Fewest names on a date for a cap split.
pub const MIN_SEGMENT_NAMES: usize = 6;

pub const SEGMENT_NAMES: [&str; 3] = ["small", "mid", "large"];

/// Gross daily returns of the scores' portfolio against `target_column`.
pub fn pipeline_returns(
    scores: &ScorePanel,
    panel: &Panel,
    target_column: &str,
    spec: &ConstructionSpec,
) -> Result<ReturnSeries, AnalyticsError> {
    let book = construct_book(scores, spec, None)?;
    Ok(portfolio_returns(&book, panel, target_column)?.series)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayRow {
    pub lag: usize,
    pub sharpe: Option<f64>,
    pub mean_daily: f64,
    pub n_days: usize,
}

/// Sharpe of the same scores with execution delayed by each lag. `panel`
/// must carry the daily return column.
pub fn alpha_decay(
    scores: &ScorePanel,
    panel: &Panel,
    lags: &[usize],
    spec: &ConstructionSpec,
) -> Result<Vec<DecayRow>, AnalyticsError> {
    let book = construct_book(scores, spec, None)?;
    lags.iter()
        .map(|&lag| {
            let shifted = forward_return(panel, lag)?;
            let series = portfolio_returns(&book, &shifted, &forward_return_column(lag))?.series;
            Ok(DecayRow {
                lag,
                sharpe: sharpe(&series.values).ok(),
                mean_daily: crate::stats::mean(&series.values),
                n_days: series.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentReport {
    pub full: Option<f64>,
    /// Small, mid and large.
    pub terciles: [Option<f64>; 3],
    pub tercile_series: [ReturnSeries; 3],
    /// Dates with fewer than six capitalized names.
    pub skipped_dates: Vec<Date>,
}

/// Full-universe and per-cap-tercile Sharpe ratios.
pub fn cap_segment_report(
    panel: &Panel,
    scores: &ScorePanel,
    cap_column: &str,
    target_column: &str,
    spec: &ConstructionSpec,
) -> Result<SegmentReport, AnalyticsError> {
    let cap = panel.column(cap_column)?;
    let index = panel.index();
    let mut members: [HashSet<(SecurityId, Date)>; 3] = Default::default();
    let mut skipped_dates = Vec::new();
    for g in index.date_groups() {
        let mut rows: Vec<usize> = g.rows.iter().copied().filter(|&r| !cap[r].is_nan()).collect();
        let n = rows.len();
        if n < MIN_SEGMENT_NAMES {
            skipped_dates.push(g.date);
            continue;
        }
        rows.sort_by(|&a, &b| cap[a].total_cmp(&cap[b]).then_with(|| index.id(a).cmp(index.id(b))));
        let cuts = [0, n / 3, 2 * n / 3, n];
        for k in 0..3 {
            for &r in &rows[cuts[k]..cuts[k + 1]] {
                members[k].insert((index.id(r).clone(), g.date));
            }
        }
    }

    let full = pipeline_returns(scores, panel, target_column, spec)?;
    let mut terciles = [None; 3];
    let mut tercile_series: [ReturnSeries; 3] = Default::default();
    for k in 0..3 {
        let set = &members[k];
        let eligible = |id: &str, d: Date| set.contains(&(SecurityId::from(id), d));
        let book = construct_book(scores, spec, Some(&eligible))?;
        let series = portfolio_returns(&book, panel, target_column)?.series;
        let series = drop_empty_dates(series, &book.flagged_dates());
        terciles[k] = sharpe(&series.values).ok();
        tercile_series[k] = series;
    }
    Ok(SegmentReport {
        full: sharpe(&full.values).ok(),
        terciles,
        tercile_series,
        skipped_dates,
    })
}

fn drop_empty_dates(series: ReturnSeries, flagged: &[Date]) -> ReturnSeries {
    let flagged: HashSet<Date> = flagged.iter().copied().collect();
    let (dates, values) = series
        .dates
        .iter()
        .zip(&series.values)
        .filter(|(d, _)| !flagged.contains(d))
        .map(|(d, v)| (*d, *v))
        .unzip();
    ReturnSeries::new(dates, values)
}
