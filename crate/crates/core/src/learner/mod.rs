//! Cross-sectional standardization and boosted-tree return models.
//!
//! Each feature is standardized per date before fitting:
//!
//! ```text
//! z_{i,t} = (x_{i,t} - mean_t(x)) / std_t(x)      (population std, 0 when std_t = 0)
//! ```
//!
//! The model `r_hat = f(z; theta)` is an additive ensemble of regression trees
//! fit to minimize squared error, with an L2 penalty on leaf values.

mod tree;
mod walk;

use rayon::prelude::*;
use thiserror::Error;

use crate::panel::{Panel, PanelError, ScorePanel};
use crate::stats;

pub use tree::{fit_matrix, Model, Node, Tree};
pub use walk::{
    grid_sweep, run_walk_forward, BlockFit, GridResult, TrainWindow, WalkForwardOutput,
    WalkForwardSchedule,
};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("invalid boosting parameters: {0}")]
    InvalidParams(String),
    #[error("training set has {rows} usable rows, need at least {required}")]
    EmptyTrainingSet { rows: usize, required: usize },
    #[error("invalid walk-forward schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("model dump line {line}: {message}")]
    Dump { line: usize, message: String },
    #[error(transparent)]
    Panel(#[from] PanelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf_count: usize,
    /// Strength of the L2 penalty on leaf values.
    pub l2_leaf_penalty: f64,
    /// Fraction of training rows drawn (without replacement) for each tree.
    pub subsample_fraction: f64,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> BoostParams {
        BoostParams {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.05,
            min_leaf_count: 50,
            l2_leaf_penalty: 1.0,
            subsample_fraction: 0.8,
            seed: 0,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let fail = |m: &str| Err(LearnerError::InvalidParams(m.to_string()));
        if self.n_trees == 0 {
            return fail("n_trees must be at least 1");
        }
        if self.max_depth == 0 {
            return fail("max_depth must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return fail("learning_rate must be in (0, 1]");
        }
        if !(self.l2_leaf_penalty >= 0.0 && self.l2_leaf_penalty.is_finite()) {
            return fail("l2_leaf_penalty must be non-negative");
        }
        if self.min_leaf_count == 0 {
            return fail("min_leaf_count must be at least 1");
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return fail("subsample_fraction must be in (0, 1]");
        }
        Ok(())
    }
}

/// Per-date z-score of one column with population std; missing stays
/// missing and a zero-variance cross-section becomes all zeros.
pub fn standardize_column(panel: &Panel, values: &[f64]) -> Vec<f64> {
    let groups = panel.index().date_groups();
    let parts: Vec<Vec<f64>> = groups
        .par_iter()
        .map(|g| {
            let present: Vec<f64> = g
                .rows
                .iter()
                .map(|&r| values[r])
                .filter(|v| !v.is_nan())
                .collect();
            let (m, sd) = if present.is_empty() {
                (0.0, 0.0)
            } else {
                (stats::mean(&present), stats::pop_std(&present))
            };
            g.rows
                .iter()
                .map(|&r| {
                    let v = values[r];
                    if v.is_nan() {
                        f64::NAN
                    } else if sd > 0.0 {
                        (v - m) / sd
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let mut out = vec![f64::NAN; values.len()];
    for (g, part) in groups.iter().zip(parts) {
        for (&r, v) in g.rows.iter().zip(part) {
            out[r] = v;
        }
    }
    out
}

/// Replaces each named column with its per-date z-score.
pub fn standardize_features<S: AsRef<str>>(panel: &Panel, features: &[S]) -> Result<Panel, PanelError> {
    let mut out = panel.clone();
    for name in features {
        let z = standardize_column(panel, panel.column(name.as_ref())?);
        out = out.with_column(name.as_ref(), z)?;
    }
    Ok(out)
}

/// Fits on the panel rows whose target is present.
pub fn fit_boosted_trees<S: AsRef<str>>(
    train: &Panel,
    features: &[S],
    target: &str,
    params: &BoostParams,
) -> Result<Model, LearnerError> {
    let y = train.column(target)?;
    let rows: Vec<usize> = (0..train.len()).filter(|&r| !y[r].is_nan()).collect();
    fit_rows(train, features, target, &rows, params)
}

pub(crate) fn fit_rows<S: AsRef<str>>(
    panel: &Panel,
    features: &[S],
    target: &str,
    rows: &[usize],
    params: &BoostParams,
) -> Result<Model, LearnerError> {
    let y = panel.column(target)?;
    let names: Vec<String> = features.iter().map(|s| s.as_ref().to_string()).collect();
    let columns = names
        .iter()
        .map(|n| panel.column(n).map(|c| rows.iter().map(|&r| c[r]).collect()))
        .collect::<Result<Vec<Vec<f64>>, _>>()?;
    let target: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    fit_matrix(&names, &columns, &target, params)
}

/// One raw prediction per panel row.
pub fn predict(model: &Model, panel: &Panel) -> Result<ScorePanel, LearnerError> {
    let columns = model
        .feature_names
        .iter()
        .map(|n| panel.column(n))
        .collect::<Result<Vec<&[f64]>, _>>()?;
    let values = if columns.is_empty() {
        let constant = model.predict_row(&[]);
        vec![constant; panel.len()]
    } else {
        model.predict_matrix(&columns)
    };
    Ok(ScorePanel::new(panel.index().clone(), values))
}
