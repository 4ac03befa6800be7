//! Feature expression language.
//!
//! Expressions combine panel columns with per-security time-series operators
//! (`lag`, `rolling_*`, `ewm_mean`, `group_zscore`), per-date cross-sectional
//! operators (`cs_rank`, `cs_zscore`) and arithmetic. For a security with
//! observations `x_1..x_t` on its own calendar:
//!
//! ```text
//! lag(x, k)_t            = x_{t-k}
//! rolling_mean(x, w, m)_t = mean of non-missing x_{t-w+1..t}, if at least m present
//! rolling_std(x, w, m)_t  = sqrt(sum (x - mean)^2 / (n - ddof)), ddof 0 by default
//! ewm_mean(x, s)_t       = sum_k (1 - a)^k x_{t-k} / sum_k (1 - a)^k,  a = 2 / (s + 1)
//! group_zscore(x, w)_t   = (x_t - rolling_mean(x, w)_t) / (rolling_std(x, w, ddof=1)_t + 1e-8)
//! cs_rank(x)_{i,t}       = average_rank(x_{i,t}) / N_t
//! cs_zscore(x)_{i,t}     = (x_{i,t} - mean_t) / std_t
//! ```
//!
//! Every value at `(i, t)` depends only on rows of security `i` dated at or
//! before `t`, or on other securities' rows dated exactly `t`.

mod ast;
mod check;
mod corpus;
mod eval;
mod parser;
mod patterns;

pub use ast::{BinaryOp, Expr, RollingStat, UnaryOp, ZSCORE_EPSILON};
pub use check::{check_point_in_time, check_with_columns, ValidationReport, Violation};
pub use corpus::{
    load_manifest, parse_manifest, reference_corpus, ManifestError, NamedFeature,
    REFERENCE_MANIFEST,
};
pub use eval::{evaluate, EvalError};
pub use parser::{parse_feature, ParseError, ParseErrorKind};
pub use patterns::{analyze_patterns, classify, FeatureFlags, PatternStats, WindowBucket};
pub(crate) use eval::rolling as rolling_window;
