use std::sync::Arc;

use super::{Date, Panel, PanelError, RowIndex, ScorePanel, SecurityId};

/// Name of the log-return column added by [`compute_log_returns`].
pub const RETURN_COLUMN: &str = "ret";

/// Column name used by [`forward_return`] for a given execution lag.
pub fn forward_return_column(lag: usize) -> String {
    format!("fwd_ret_lag{lag}")
}

/// Adds `ret = ln(P_t / P_{t-1})` per security.
///
/// The first observation of each security is missing. A non-positive price on
/// either end makes that row's return missing; the second element of the
/// result counts such rows.
pub fn compute_log_returns(panel: &Panel, price_column: &str) -> Result<(Panel, usize), PanelError> {
    let prices = panel.column(price_column)?;
    let mut out = vec![f64::NAN; panel.len()];
    let mut warnings = 0;
    for block in panel.index().blocks() {
        for row in block.rows.start + 1..block.rows.end {
            let (prev, cur) = (prices[row - 1], prices[row]);
            if prev.is_nan() || cur.is_nan() {
                continue;
            }
            if prev <= 0.0 || cur <= 0.0 {
                warnings += 1;
                continue;
            }
            out[row] = (cur / prev).ln();
        }
    }
    Ok((panel.with_column(RETURN_COLUMN, out)?, warnings))
}

/// Adds `fwd_ret_lag{lag}`: the return realised `lag + 1` rows ahead on the
/// security's own calendar. Lag 0 is the next-day return, lag 1 the F1 target.
pub fn forward_return(panel: &Panel, lag: usize) -> Result<Panel, PanelError> {
    let ret = panel.column(RETURN_COLUMN)?;
    let shift = lag + 1;
    let mut out = vec![f64::NAN; panel.len()];
    for block in panel.index().blocks() {
        for row in block.rows.clone() {
            if row + shift < block.rows.end {
                out[row] = ret[row + shift];
            }
        }
    }
    panel.with_column(&forward_return_column(lag), out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniverseSpec {
    pub top_k: usize,
    pub cap_column: String,
    pub exclusion_flags: Vec<String>,
}

impl UniverseSpec {
    pub fn new(top_k: usize, cap_column: &str) -> Result<UniverseSpec, PanelError> {
        if top_k == 0 {
            return Err(PanelError::InvalidSpec("top_k must be at least 1".into()));
        }
        Ok(UniverseSpec {
            top_k,
            cap_column: cap_column.to_string(),
            exclusion_flags: Vec::new(),
        })
    }

    pub fn with_exclusions(mut self, flags: &[&str]) -> UniverseSpec {
        self.exclusion_flags = flags.iter().map(|s| s.to_string()).collect();
        self
    }
}

/// Keeps, per date, the `top_k` largest securities by cap after dropping rows
/// with any exclusion flag set. Cap ties at the boundary go to the
/// lexicographically smaller id. Rows with missing cap are not eligible.
pub fn apply_universe_filter(panel: &Panel, spec: &UniverseSpec) -> Result<Panel, PanelError> {
    if spec.top_k == 0 {
        return Err(PanelError::InvalidSpec("top_k must be at least 1".into()));
    }
    let cap = panel.column(&spec.cap_column)?;
    let flags = spec
        .exclusion_flags
        .iter()
        .map(|f| panel.column(f))
        .collect::<Result<Vec<_>, _>>()?;
    let index = panel.index();
    let mut keep = vec![false; panel.len()];
    for group in index.date_groups() {
        let mut eligible: Vec<usize> = group
            .rows
            .iter()
            .copied()
            .filter(|&r| !cap[r].is_nan())
            .filter(|&r| flags.iter().all(|f| f[r].is_nan() || f[r] == 0.0))
            .collect();
        eligible.sort_by(|&a, &b| {
            cap[b]
                .total_cmp(&cap[a])
                .then_with(|| index.id(a).cmp(index.id(b)))
        });
        for &r in eligible.iter().take(spec.top_k) {
            keep[r] = true;
        }
    }
    Ok(panel.select_rows(&keep))
}

/// Holds each security's latest score forward over `calendar`.
///
/// The output has one row per security and calendar date; dates before the
/// security's first non-missing score are missing.
pub fn forward_fill_to_daily(scores: &ScorePanel, calendar: &[Date]) -> ScorePanel {
    let mut calendar = calendar.to_vec();
    calendar.sort_unstable();
    calendar.dedup();
    let index = scores.index();
    let values = scores.values();
    let mut ids: Vec<SecurityId> = Vec::new();
    let mut dates = Vec::new();
    let mut out = Vec::new();
    for block in index.blocks() {
        let mut cursor = block.rows.start;
        let mut held = f64::NAN;
        for &date in &calendar {
            while cursor < block.rows.end && index.date(cursor) <= date {
                if !values[cursor].is_nan() {
                    held = values[cursor];
                }
                cursor += 1;
            }
            ids.push(block.id.clone());
            dates.push(date);
            out.push(held);
        }
    }
    let index = RowIndex::from_sorted(ids, dates).expect("grid keys are sorted and unique");
    ScorePanel::new(Arc::new(index), out)
}
