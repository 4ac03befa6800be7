//! Score-to-weight construction and portfolio returns.
//!
//! Per date, standardized and winsorized scores
//!
//! ```text
//! a_{i,t} = clamp((r_hat_{i,t} - mean_t) / std_t, -3, 3)
//! ```
//!
//! map to dollar-neutral weights with unit leverage on each side:
//!
//! ```text
//! w_{i,t} = a+_{i,t} / sum_j a+_{j,t}  -  a-_{i,t} / sum_j a-_{j,t}
//! ```
//!
//! so `sum w = 0` and `sum |w| = 2`. The portfolio return pairs weights at `t`
//! with the configured forward return: `R_t = sum_i w_{i,t} r_{i,t+h}`.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::dsl::RollingStat;
use crate::panel::{Date, Panel, PanelError, RowIndex, ScorePanel, SecurityId};
use crate::stats;

/// Winsorization bound in cross-sectional standard deviations.
pub const WINSOR_BOUND: f64 = 3.0;

#[derive(Debug, Error)]
pub enum PortfolioError {
    #[error("ensemble needs at least one score panel")]
    EmptyEnsemble,
    #[error("smoothing window must be at least 1")]
    InvalidWindow,
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Weights held on one date. `flagged` marks a date whose scores had no long
/// or no short side; such a date carries no positions.
#[derive(Debug, Clone, PartialEq)]
pub struct BookEntry {
    pub date: Date,
    pub positions: Vec<(SecurityId, f64)>,
    pub flagged: bool,
}

impl BookEntry {
    pub fn weight(&self, id: &str) -> f64 {
        self.positions
            .binary_search_by(|(p, _)| (**p).cmp(id))
            .map_or(0.0, |i| self.positions[i].1)
    }

    pub fn gross(&self) -> f64 {
        self.positions.iter().map(|(_, w)| w.abs()).sum()
    }

    pub fn net(&self) -> f64 {
        self.positions.iter().map(|(_, w)| w).sum()
    }
}

/// Date-ordered sequence of weight vectors; each entry's predecessor is the
/// previous entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightBook {
    entries: Vec<BookEntry>,
}

impl WeightBook {
    /// Entries are sorted by date and positions by id.
    pub fn new(mut entries: Vec<BookEntry>) -> WeightBook {
        entries.sort_by_key(|e| e.date);
        for e in &mut entries {
            e.positions.sort_by(|a, b| a.0.cmp(&b.0));
        }
        WeightBook { entries }
    }

    pub fn entries(&self) -> &[BookEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dates(&self) -> Vec<Date> {
        self.entries.iter().map(|e| e.date).collect()
    }

    pub fn get(&self, date: Date) -> Option<&BookEntry> {
        self.entries
            .binary_search_by_key(&date, |e| e.date)
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn flagged_dates(&self) -> Vec<Date> {
        self.entries.iter().filter(|e| e.flagged).map(|e| e.date).collect()
    }

    /// Writes `date,id,weight` rows.
    pub fn write_delimited(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "date,id,weight")?;
        for e in &self.entries {
            for (id, w) in &e.positions {
                writeln!(out, "{},{},{}", e.date, id, w)?;
            }
        }
        Ok(())
    }
}

/// Daily portfolio return series.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReturnSeries {
    pub dates: Vec<Date>,
    pub values: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(dates: Vec<Date>, values: Vec<f64>) -> ReturnSeries {
        assert_eq!(dates.len(), values.len(), "dates and values must align");
        ReturnSeries { dates, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Keeps the dates present in both series, in date order.
    pub fn align(a: &ReturnSeries, b: &ReturnSeries) -> (Vec<Date>, Vec<f64>, Vec<f64>) {
        let lookup: BTreeMap<Date, f64> = b.dates.iter().copied().zip(b.values.iter().copied()).collect();
        let mut dates = Vec::new();
        let mut xa = Vec::new();
        let mut xb = Vec::new();
        for (d, v) in a.dates.iter().zip(&a.values) {
            if let Some(w) = lookup.get(d) {
                dates.push(*d);
                xa.push(*v);
                xb.push(*w);
            }
        }
        (dates, xa, xb)
    }
}

fn map_by_date<F>(scores: &ScorePanel, f: F) -> ScorePanel
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let index = scores.index();
    let values = scores.values();
    let parts: Vec<Vec<f64>> = index
        .date_groups()
        .par_iter()
        .map(|g| f(&g.rows.iter().map(|&r| values[r]).collect::<Vec<_>>()))
        .collect();
    let mut out = vec![f64::NAN; values.len()];
    for (g, part) in index.date_groups().iter().zip(parts) {
        for (&r, v) in g.rows.iter().zip(part) {
            out[r] = v;
        }
    }
    scores.with_values(out)
}

/// Per-date population z-score clamped to `[-3, 3]`; a zero-variance date is
/// all zeros and missing scores stay missing.
pub fn standardize_and_winsorize(scores: &ScorePanel) -> ScorePanel {
    map_by_date(scores, |x| {
        let present: Vec<f64> = x.iter().copied().filter(|v| !v.is_nan()).collect();
        if present.is_empty() {
            return x.to_vec();
        }
        let m = stats::mean(&present);
        let sd = stats::pop_std(&present);
        x.iter()
            .map(|&v| {
                if v.is_nan() {
                    f64::NAN
                } else if sd > 0.0 {
                    ((v - m) / sd).clamp(-WINSOR_BOUND, WINSOR_BOUND)
                } else {
                    0.0
                }
            })
            .collect()
    })
}

/// Positive scores scaled to sum to 1, negative scores to sum to -1.
pub fn weights_from_scores(alpha: &ScorePanel) -> WeightBook {
    let index = alpha.index();
    let values = alpha.values();
    let entries = index
        .date_groups()
        .par_iter()
        .map(|g| {
            let pos: f64 = g.rows.iter().map(|&r| values[r]).filter(|v| *v > 0.0).sum();
            let neg: f64 = g.rows.iter().map(|&r| values[r]).filter(|v| *v < 0.0).map(|v| -v).sum();
            if pos <= 0.0 || neg <= 0.0 {
                return BookEntry {
                    date: g.date,
                    positions: Vec::new(),
                    flagged: true,
                };
            }
            let positions = g
                .rows
                .iter()
                .filter_map(|&r| {
                    let v = values[r];
                    let w = if v > 0.0 {
                        v / pos
                    } else if v < 0.0 {
                        v / neg
                    } else {
                        return None;
                    };
                    Some((index.id(r).clone(), w))
                })
                .collect();
            BookEntry {
                date: g.date,
                positions,
                flagged: false,
            }
        })
        .collect();
    WeightBook::new(entries)
}

/// Trailing mean of each security's last `window` scores over the values
/// present (at least one).
pub fn smooth_scores(scores: &ScorePanel, window: usize) -> Result<ScorePanel, PortfolioError> {
    if window == 0 {
        return Err(PortfolioError::InvalidWindow);
    }
    if window == 1 {
        return Ok(scores.clone());
    }
    let values = scores.values();
    let parts: Vec<Vec<f64>> = scores
        .index()
        .blocks()
        .par_iter()
        .map(|b| crate::dsl::rolling_window(&values[b.rows.clone()], RollingStat::Mean, window, 1))
        .collect();
    Ok(scores.with_values(parts.concat()))
}

/// Equal-weight average over the inputs present at each `(security, date)`.
pub fn ensemble_scores(inputs: &[ScorePanel]) -> Result<ScorePanel, PortfolioError> {
    if inputs.is_empty() {
        return Err(PortfolioError::EmptyEnsemble);
    }
    let mut acc: BTreeMap<(SecurityId, Date), (f64, usize)> = BTreeMap::new();
    for s in inputs {
        let index = s.index();
        for (r, &v) in s.values().iter().enumerate() {
            let cell = acc.entry((index.id(r).clone(), index.date(r))).or_insert((0.0, 0));
            if !v.is_nan() {
                cell.0 += v;
                cell.1 += 1;
            }
        }
    }
    let mut ids = Vec::with_capacity(acc.len());
    let mut dates = Vec::with_capacity(acc.len());
    let mut values = Vec::with_capacity(acc.len());
    for ((id, date), (sum, n)) in acc {
        ids.push(id);
        dates.push(date);
        values.push(if n > 0 { sum / n as f64 } else { f64::NAN });
    }
    let index = RowIndex::from_sorted(ids, dates)?;
    Ok(ScorePanel::new(Arc::new(index), values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rebalance {
    Daily,
    /// First book date of each ISO week.
    Weekly,
    /// First book date of each calendar month.
    Monthly,
}

impl Rebalance {
    pub fn parse(text: &str) -> Option<Rebalance> {
        match text.to_ascii_lowercase().as_str() {
            "daily" | "d" => Some(Rebalance::Daily),
            "weekly" | "w" => Some(Rebalance::Weekly),
            "monthly" | "m" => Some(Rebalance::Monthly),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Rebalance::Daily => "daily",
            Rebalance::Weekly => "weekly",
            Rebalance::Monthly => "monthly",
        }
    }

    /// Holding period of `date`; `None` when every date rebalances.
    pub(crate) fn period_key(self, date: Date) -> Option<(i32, u32)> {
        (self != Rebalance::Daily).then(|| self.period(date))
    }

    fn period(self, date: Date) -> (i32, u32) {
        match self {
            Rebalance::Daily => (date.ordinal(), 0),
            Rebalance::Weekly => date.iso_week(),
            Rebalance::Monthly => (date.year(), date.month()),
        }
    }
}

/// Recomputes weights only on rebalance dates and holds them otherwise.
pub fn apply_rebalance(book: &WeightBook, frequency: Rebalance) -> WeightBook {
    if frequency == Rebalance::Daily {
        return book.clone();
    }
    let mut out: Vec<BookEntry> = Vec::with_capacity(book.len());
    let mut held: Option<((i32, u32), BookEntry)> = None;
    for e in book.entries() {
        let period = frequency.period(e.date);
        match &held {
            Some((p, h)) if *p == period => out.push(BookEntry {
                date: e.date,
                positions: h.positions.clone(),
                flagged: h.flagged,
            }),
            _ => {
                held = Some((period, e.clone()));
                out.push(e.clone());
            }
        }
    }
    WeightBook { entries: out }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioReturns {
    pub series: ReturnSeries,
    /// Positions whose return was missing (contributing 0), per date.
    pub missing: Vec<usize>,
}

/// `R_t = sum_i w_{i,t} r_{i,t}` where `r` is `target_column` on row `(i, t)`.
pub fn portfolio_returns(
    book: &WeightBook,
    panel: &Panel,
    target_column: &str,
) -> Result<PortfolioReturns, PortfolioError> {
    let target = panel.column(target_column)?;
    let index = panel.index();
    let mut dates = Vec::with_capacity(book.len());
    let mut values = Vec::with_capacity(book.len());
    let mut missing = Vec::with_capacity(book.len());
    for e in book.entries() {
        let mut r = 0.0;
        let mut miss = 0;
        for (id, w) in &e.positions {
            match index.find(id, e.date).map(|row| target[row]) {
                Some(v) if !v.is_nan() => r += w * v,
                _ => miss += 1,
            }
        }
        dates.push(e.date);
        values.push(r);
        missing.push(miss);
    }
    Ok(PortfolioReturns {
        series: ReturnSeries::new(dates, values),
        missing,
    })
}

/// Steps from raw scores to a weight book.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstructionSpec {
    /// Trailing mean window applied to raw scores (1 = none).
    pub smoothing_window: usize,
    pub rebalance: Rebalance,
}

impl Default for ConstructionSpec {
    fn default() -> ConstructionSpec {
        ConstructionSpec {
            smoothing_window: 1,
            rebalance: Rebalance::Daily,
        }
    }
}

/// Smooth, standardize and winsorize, drop names failing `eligible`, form
/// weights and apply the rebalance schedule.
pub fn construct_book(
    raw: &ScorePanel,
    spec: &ConstructionSpec,
    eligible: Option<&dyn Fn(&str, Date) -> bool>,
) -> Result<WeightBook, PortfolioError> {
    let smoothed = smooth_scores(raw, spec.smoothing_window)?;
    let mut alpha = standardize_and_winsorize(&smoothed);
    if let Some(ok) = eligible {
        let index = alpha.index().clone();
        let values = alpha
            .values()
            .iter()
            .enumerate()
            .map(|(r, &v)| if ok(index.id(r), index.date(r)) { v } else { f64::NAN })
            .collect();
        alpha = alpha.with_values(values);
    }
    Ok(apply_rebalance(&weights_from_scores(&alpha), spec.rebalance))
}
