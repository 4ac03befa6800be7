//! Syntactic classification of feature expressions.
//!
//! Each rule inspects the AST only:
//!
//! * ranking: contains `cs_rank` or `cs_zscore`.
//! * regime normalization: a division whose denominator contains a
//!   dispersion node, i.e. `rolling_std` or `ewm_mean` of `abs(a)` or `a * a`.
//! * interaction: a `*` or `/` whose operands reference different, non-empty
//!   column sets.
//! * multi-timeframe: a binary node whose operands both carry windows and
//!   whose window sets differ.
//! * outlier z-scoring: `group_zscore`, or `(a - rolling_mean(a, ..)) / d`.
//! * momentum with adjustment: a trend node (`rolling_mean`, `ewm_mean`,
//!   `a - lag(a, k)`) inside the numerator of a dispersion division, or
//!   applied on top of one.
//!
//! Operation count is the number of AST nodes other than columns and constants.

use std::collections::BTreeSet;

use super::ast::{BinaryOp, Expr, RollingStat, UnaryOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WindowBucket {
    W5,
    W10,
    W20To21,
    W60,
    Other,
}

impl WindowBucket {
    pub const ALL: [WindowBucket; 5] = [
        WindowBucket::W5,
        WindowBucket::W10,
        WindowBucket::W20To21,
        WindowBucket::W60,
        WindowBucket::Other,
    ];

    pub fn of(window: i64) -> WindowBucket {
        match window {
            5 => WindowBucket::W5,
            10 => WindowBucket::W10,
            20 | 21 => WindowBucket::W20To21,
            60 => WindowBucket::W60,
            _ => WindowBucket::Other,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            WindowBucket::W5 => "5",
            WindowBucket::W10 => "10",
            WindowBucket::W20To21 => "20-21",
            WindowBucket::W60 => "60",
            WindowBucket::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FeatureFlags {
    pub ranking: bool,
    pub regime_normalization: bool,
    pub interaction: bool,
    pub multi_timeframe: bool,
    pub outlier_zscore: bool,
    pub momentum_adjustment: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternStats {
    pub n_features: usize,
    pub operation_counts: Vec<usize>,
    pub flags: Vec<FeatureFlags>,
    pub ranking: f64,
    pub regime_normalization: f64,
    pub interaction: f64,
    pub multi_timeframe: f64,
    pub outlier_zscore: f64,
    pub momentum_adjustment: f64,
    /// Fraction of all window specifications per bucket; empty when no
    /// feature uses a window.
    pub window_histogram: Vec<(WindowBucket, f64)>,
    pub n_windows: usize,
}

impl PatternStats {
    pub fn mean_operations(&self) -> f64 {
        let counts: Vec<f64> = self.operation_counts.iter().map(|&c| c as f64).collect();
        crate::stats::mean(&counts)
    }

    pub fn median_operations(&self) -> f64 {
        let counts: Vec<f64> = self.operation_counts.iter().map(|&c| c as f64).collect();
        crate::stats::median(&counts)
    }
}

fn is_dispersion(e: &Expr) -> bool {
    match e {
        Expr::Rolling {
            stat: RollingStat::Std { .. },
            ..
        } => true,
        Expr::EwmMean { arg, .. } => match arg.as_ref() {
            Expr::Unary {
                op: UnaryOp::Abs, ..
            } => true,
            Expr::Binary {
                op: BinaryOp::Mul,
                lhs,
                rhs,
            } => lhs == rhs,
            _ => false,
        },
        _ => false,
    }
}

fn contains_dispersion(e: &Expr) -> bool {
    e.any(&is_dispersion)
}

fn is_dispersion_division(e: &Expr) -> bool {
    matches!(e, Expr::Binary { op: BinaryOp::Div, rhs, .. } if contains_dispersion(rhs))
}

fn is_trend(e: &Expr) -> bool {
    match e {
        Expr::Rolling {
            stat: RollingStat::Mean,
            ..
        }
        | Expr::EwmMean { .. } => true,
        Expr::Binary {
            op: BinaryOp::Sub,
            lhs,
            rhs,
        } => matches!(rhs.as_ref(), Expr::Lag { arg, .. } if arg == lhs),
        _ => false,
    }
}

fn window_set(e: &Expr) -> BTreeSet<i64> {
    e.windows().into_iter().collect()
}

pub fn classify(expr: &Expr) -> FeatureFlags {
    let ranking = expr.any(&|e| matches!(e, Expr::CsRank(_) | Expr::CsZScore(_)));
    let regime_normalization = expr.any(&is_dispersion_division);
    let interaction = expr.any(&|e| match e {
        Expr::Binary {
            op: BinaryOp::Mul | BinaryOp::Div,
            lhs,
            rhs,
        } => {
            let (a, b) = (lhs.columns(), rhs.columns());
            !a.is_empty() && !b.is_empty() && a != b
        }
        _ => false,
    });
    let multi_timeframe = expr.any(&|e| match e {
        Expr::Binary { lhs, rhs, .. } => {
            let (a, b) = (window_set(lhs), window_set(rhs));
            !a.is_empty() && !b.is_empty() && a != b
        }
        _ => false,
    });
    let outlier_zscore = expr.any(&|e| match e {
        Expr::GroupZScore { .. } => true,
        Expr::Binary {
            op: BinaryOp::Div,
            lhs,
            ..
        } => matches!(
            lhs.as_ref(),
            Expr::Binary { op: BinaryOp::Sub, lhs: a, rhs: m }
                if matches!(m.as_ref(), Expr::Rolling { stat: RollingStat::Mean, arg, .. } if arg == a)
        ),
        _ => false,
    });
    let momentum_adjustment = expr.any(&|e| match e {
        Expr::Binary {
            op: BinaryOp::Div,
            lhs,
            rhs,
        } if contains_dispersion(rhs) => lhs.any(&is_trend),
        _ => is_trend(e) && e.children().iter().any(|c| c.any(&is_dispersion_division)),
    });
    FeatureFlags {
        ranking,
        regime_normalization,
        interaction,
        multi_timeframe,
        outlier_zscore,
        momentum_adjustment,
    }
}

/// Corpus-level prevalence, operation counts and window histogram.
/// Returns `None` for an empty corpus.
pub fn analyze_patterns(corpus: &[Expr]) -> Option<PatternStats> {
    if corpus.is_empty() {
        return None;
    }
    let n = corpus.len() as f64;
    let flags: Vec<FeatureFlags> = corpus.iter().map(classify).collect();
    let share = |f: fn(&FeatureFlags) -> bool| flags.iter().filter(|x| f(x)).count() as f64 / n;
    let windows: Vec<i64> = corpus.iter().flat_map(|e| e.windows()).collect();
    let window_histogram = if windows.is_empty() {
        Vec::new()
    } else {
        WindowBucket::ALL
            .iter()
            .map(|&b| {
                let count = windows.iter().filter(|&&w| WindowBucket::of(w) == b).count();
                (b, count as f64 / windows.len() as f64)
            })
            .collect()
    };
    Some(PatternStats {
        n_features: corpus.len(),
        operation_counts: corpus.iter().map(Expr::operation_count).collect(),
        ranking: share(|f| f.ranking),
        regime_normalization: share(|f| f.regime_normalization),
        interaction: share(|f| f.interaction),
        multi_timeframe: share(|f| f.multi_timeframe),
        outlier_zscore: share(|f| f.outlier_zscore),
        momentum_adjustment: share(|f| f.momentum_adjustment),
        flags,
        window_histogram,
        n_windows: windows.len(),
    })
}
