use std::sync::Arc;

use super::{fit_rows, BoostParams, LearnerError, Model};
use crate::panel::{Date, Panel, ScorePanel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainWindow {
    /// Start fixed at `train_start`; the end advances with each block.
    Expanding,
    /// Start and end both advance, keeping the training span constant.
    Rolling,
}

/// Out-of-sample schedule. Test dates are split into blocks of
/// `refit_interval` trading dates; the model for a block starting at `s` is
/// trained on rows dated up to `train_end + (s - test_start)` whose target is
/// fully realized before `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkForwardSchedule {
    pub train_start: Date,
    pub train_end: Date,
    pub test_start: Date,
    pub test_end: Date,
    pub refit_interval: usize,
    pub window: TrainWindow,
}

impl WalkForwardSchedule {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let fail = |m: String| Err(LearnerError::InvalidSchedule(m));
        if self.train_start > self.train_end {
            return fail(format!(
                "train_start {} is after train_end {}",
                self.train_start, self.train_end
            ));
        }
        if self.train_end >= self.test_start {
            return fail(format!(
                "train_end {} must precede test_start {}",
                self.train_end, self.test_start
            ));
        }
        if self.test_start > self.test_end {
            return fail(format!(
                "test_start {} is after test_end {}",
                self.test_start, self.test_end
            ));
        }
        if self.refit_interval == 0 {
            return fail("refit_interval must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockFit {
    pub start: Date,
    pub end: Date,
    pub train_from: Date,
    pub train_to: Date,
    pub train_rows: usize,
    pub fitted: bool,
}

#[derive(Debug, Clone)]
pub struct WalkForwardOutput {
    /// One score per test-period row; rows of skipped blocks are missing.
    pub scores: ScorePanel,
    pub blocks: Vec<BlockFit>,
    pub warnings: Vec<String>,
    /// Model of the last fitted block.
    pub last_model: Option<Model>,
}

/// Walk-forward fit and predict.
///
/// `horizon` is the number of rows ahead on each security's calendar at which
/// the target is realized (`lag + 1` for `fwd_ret_lag{lag}`). A training row
/// is used only if that realization date precedes the block start.
pub fn run_walk_forward<S: AsRef<str>>(
    panel: &Panel,
    features: &[S],
    target: &str,
    horizon: usize,
    schedule: &WalkForwardSchedule,
    params: &BoostParams,
) -> Result<WalkForwardOutput, LearnerError> {
    schedule.validate()?;
    params.validate()?;
    if horizon == 0 {
        return Err(LearnerError::InvalidInput("target horizon must be at least 1".into()));
    }
    let index = panel.index();
    let y = panel.column(target)?;
    panel.require_columns(features)?;

    // realization date of each row's target on its own security's calendar
    let mut realized: Vec<Option<Date>> = vec![None; panel.len()];
    for block in index.blocks() {
        for row in block.rows.clone() {
            if row + horizon < block.rows.end {
                realized[row] = Some(index.date(row + horizon));
            }
        }
    }

    let test_dates: Vec<Date> = index
        .calendar()
        .into_iter()
        .filter(|d| *d >= schedule.test_start && *d <= schedule.test_end)
        .collect();
    let keep: Vec<bool> = (0..panel.len())
        .map(|r| {
            let d = index.date(r);
            d >= schedule.test_start && d <= schedule.test_end
        })
        .collect();
    let test_panel = panel.select_rows(&keep);
    let test_index = test_panel.index().clone();
    let mut values = vec![f64::NAN; test_panel.len()];
    let mut blocks = Vec::new();
    let mut warnings = Vec::new();
    let mut last_model = None;

    for chunk in test_dates.chunks(schedule.refit_interval) {
        let (start, end) = (chunk[0], *chunk.last().expect("non-empty chunk"));
        let shift = start.ordinal() - schedule.test_start.ordinal();
        let train_to = schedule.train_end.add_days(shift);
        let train_from = match schedule.window {
            TrainWindow::Expanding => schedule.train_start,
            TrainWindow::Rolling => schedule.train_start.add_days(shift),
        };
        let rows: Vec<usize> = (0..panel.len())
            .filter(|&r| {
                let d = index.date(r);
                d >= train_from
                    && d <= train_to
                    && !y[r].is_nan()
                    && realized[r].is_some_and(|rd| rd < start)
            })
            .collect();
        let mut fit = BlockFit {
            start,
            end,
            train_from,
            train_to,
            train_rows: rows.len(),
            fitted: false,
        };
        if rows.is_empty() || rows.len() < params.min_leaf_count {
            warnings.push(format!(
                "block {start}..{end}: {} training rows, block skipped",
                rows.len()
            ));
            blocks.push(fit);
            continue;
        }
        let model = fit_rows(panel, features, target, &rows, params)?;
        let columns = model
            .feature_names
            .iter()
            .map(|n| test_panel.column(n))
            .collect::<Result<Vec<&[f64]>, _>>()?;
        let in_block: Vec<usize> = (0..test_panel.len())
            .filter(|&r| {
                let d = test_index.date(r);
                d >= start && d <= end
            })
            .collect();
        for &r in &in_block {
            let x: Vec<f64> = columns.iter().map(|c| c[r]).collect();
            values[r] = model.predict_row(&x);
        }
        fit.fitted = true;
        blocks.push(fit);
        last_model = Some(model);
    }
    Ok(WalkForwardOutput {
        scores: ScorePanel::new(Arc::clone(&test_index), values),
        blocks,
        warnings,
        last_model,
    })
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub params: BoostParams,
    pub mean_ic: f64,
    pub n_dates: usize,
}

/// Runs the walk-forward for each candidate and reports the mean daily rank
/// IC of its scores against `target`.
pub fn grid_sweep<S: AsRef<str>>(
    panel: &Panel,
    features: &[S],
    target: &str,
    horizon: usize,
    schedule: &WalkForwardSchedule,
    grid: &[BoostParams],
) -> Result<Vec<GridResult>, LearnerError> {
    let realized = ScorePanel::new(panel.index().clone(), panel.column(target)?.to_vec());
    grid.iter()
        .map(|params| {
            let out = run_walk_forward(panel, features, target, horizon, schedule, params)?;
            let ic = crate::analytics::spearman_ic(&out.scores, &realized);
            let values: Vec<f64> = ic.iter().map(|(_, v)| *v).collect();
            Ok(GridResult {
                params: params.clone(),
                mean_ic: crate::stats::mean(&values),
                n_dates: values.len(),
            })
        })
        .collect()
}
