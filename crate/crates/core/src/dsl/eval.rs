use rayon::prelude::*;
use thiserror::Error;

use super::ast::{BinaryOp, Expr, RollingStat, UnaryOp, ZSCORE_EPSILON};
use super::check::{check_with_columns, ValidationReport};
use crate::panel::{FeatureColumn, Panel, RowIndex};
use crate::stats;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("expression failed point-in-time validation: {0}")]
    Invalid(ValidationReport),
}

/// Evaluates a feature over every row of `panel`.
///
/// The expression is validated against the panel's columns first. Missing
/// inputs propagate; division by zero, `log` of a non-positive value and
/// `sqrt` of a negative value yield missing at that cell.
pub fn evaluate(expr: &Expr, panel: &Panel) -> Result<FeatureColumn, EvalError> {
    let names: Vec<&str> = panel.column_names().collect();
    let report = check_with_columns(expr, &names);
    if !report.passed() {
        return Err(EvalError::Invalid(report));
    }
    Ok(eval_node(expr, panel))
}

fn eval_node(expr: &Expr, panel: &Panel) -> Vec<f64> {
    let index = panel.index();
    match expr {
        Expr::Column(name) => panel.column(name).expect("validated column").to_vec(),
        Expr::Const(v) => vec![*v; panel.len()],
        Expr::Unary { op, arg } => {
            let mut x = eval_node(arg, panel);
            for v in &mut x {
                *v = match op {
                    UnaryOp::Neg => -*v,
                    UnaryOp::Abs => v.abs(),
                    UnaryOp::Log if *v > 0.0 => v.ln(),
                    UnaryOp::Sqrt if *v >= 0.0 => v.sqrt(),
                    _ => f64::NAN,
                };
            }
            x
        }
        Expr::Binary { op, lhs, rhs } => {
            let a = eval_node(lhs, panel);
            let b = eval_node(rhs, panel);
            a.iter().zip(&b).map(|(&x, &y)| binary(*op, x, y)).collect()
        }
        Expr::Lag { arg, periods } => {
            let k = *periods as usize;
            per_security(index, &eval_node(arg, panel), |x| {
                (0..x.len()).map(|j| if j >= k { x[j - k] } else { f64::NAN }).collect()
            })
        }
        Expr::Rolling {
            stat,
            arg,
            window,
            min_periods,
        } => {
            let (w, m) = (*window as usize, *min_periods as usize);
            per_security(index, &eval_node(arg, panel), |x| rolling(x, *stat, w, m))
        }
        Expr::EwmMean { arg, span } => {
            let alpha = 2.0 / (*span as f64 + 1.0);
            per_security(index, &eval_node(arg, panel), |x| ewm_mean(x, alpha))
        }
        Expr::GroupZScore { arg, window } => {
            let w = *window as usize;
            per_security(index, &eval_node(arg, panel), |x| {
                let mean = rolling(x, RollingStat::Mean, w, w);
                let sd = rolling(x, RollingStat::Std { sample: true }, w, w);
                (0..x.len())
                    .map(|j| (x[j] - mean[j]) / (sd[j] + ZSCORE_EPSILON))
                    .collect()
            })
        }
        Expr::CsRank(arg) => per_date(index, &eval_node(arg, panel), cs_rank),
        Expr::CsZScore(arg) => per_date(index, &eval_node(arg, panel), cs_zscore),
        Expr::FillMissing { arg, value } => {
            let mut x = eval_node(arg, panel);
            for v in &mut x {
                if v.is_nan() {
                    *v = *value;
                }
            }
            x
        }
    }
}

fn binary(op: BinaryOp, x: f64, y: f64) -> f64 {
    match op {
        BinaryOp::Add => x + y,
        BinaryOp::Sub => x - y,
        BinaryOp::Mul => x * y,
        BinaryOp::Div if y == 0.0 => f64::NAN,
        BinaryOp::Div => x / y,
    }
}

/// Applies `f` to each security's contiguous slice (rows are sorted by id).
fn per_security<F>(index: &RowIndex, x: &[f64], f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let parts: Vec<Vec<f64>> = index
        .blocks()
        .par_iter()
        .map(|b| f(&x[b.rows.clone()]))
        .collect();
    parts.concat()
}

/// Applies `f` to each date's cross-section and scatters the results back.
fn per_date<F>(index: &RowIndex, x: &[f64], f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let parts: Vec<Vec<f64>> = index
        .date_groups()
        .par_iter()
        .map(|g| f(&g.rows.iter().map(|&r| x[r]).collect::<Vec<_>>()))
        .collect();
    let mut out = vec![f64::NAN; x.len()];
    for (group, values) in index.date_groups().iter().zip(parts) {
        for (&r, v) in group.rows.iter().zip(values) {
            out[r] = v;
        }
    }
    out
}

/// Trailing-window statistic over the last `window` rows, using the
/// non-missing values only; missing unless at least `min_periods` are present.
pub(crate) fn rolling(x: &[f64], stat: RollingStat, window: usize, min_periods: usize) -> Vec<f64> {
    let mut buf = Vec::with_capacity(window);
    (0..x.len())
        .map(|j| {
            let start = (j + 1).saturating_sub(window);
            buf.clear();
            buf.extend(x[start..=j].iter().copied().filter(|v| !v.is_nan()));
            if buf.len() < min_periods.max(1) {
                return f64::NAN;
            }
            match stat {
                RollingStat::Mean => stats::mean(&buf),
                RollingStat::Std { sample: false } => stats::pop_std(&buf),
                RollingStat::Std { sample: true } => stats::sample_std(&buf),
                RollingStat::Min => buf.iter().copied().fold(f64::INFINITY, f64::min),
                RollingStat::Max => buf.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

/// Bias-adjusted exponential average
/// `sum_k (1-alpha)^k x_{t-k} / sum_k (1-alpha)^k` over non-missing `x`.
/// Weights decay by position, so a missing input still ages older values;
/// the output at a missing input equals the previous one.
pub(crate) fn ewm_mean(x: &[f64], alpha: f64) -> Vec<f64> {
    let decay = 1.0 - alpha;
    let (mut num, mut den) = (0.0, 0.0);
    x.iter()
        .map(|&v| {
            num *= decay;
            den *= decay;
            if !v.is_nan() {
                num += v;
                den += 1.0;
            }
            if den > 0.0 {
                num / den
            } else {
                f64::NAN
            }
        })
        .collect()
}

/// Average rank divided by the number of non-missing values.
fn cs_rank(x: &[f64]) -> Vec<f64> {
    let present: Vec<usize> = (0..x.len()).filter(|&i| !x[i].is_nan()).collect();
    let values: Vec<f64> = present.iter().map(|&i| x[i]).collect();
    let ranks = stats::average_ranks(&values);
    let n = present.len() as f64;
    let mut out = vec![f64::NAN; x.len()];
    for (&i, r) in present.iter().zip(ranks) {
        out[i] = r / n;
    }
    out
}

/// `(x - mean) / population_std`; a degenerate cross-section is missing.
fn cs_zscore(x: &[f64]) -> Vec<f64> {
    let values: Vec<f64> = x.iter().copied().filter(|v| !v.is_nan()).collect();
    if values.is_empty() {
        return vec![f64::NAN; x.len()];
    }
    let m = stats::mean(&values);
    let sd = stats::pop_std(&values);
    x.iter()
        .map(|&v| if sd > 0.0 { (v - m) / sd } else { f64::NAN })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_feature;
    use crate::panel::Date;

    fn one_date(values: &[f64]) -> Panel {
        let ids: Vec<String> = (0..values.len()).map(|i| format!("S{i}")).collect();
        let dates = vec![Date::from_ymd(2021, 3, 1).unwrap(); values.len()];
        Panel::from_rows(&ids, &dates, vec![("x".into(), values.to_vec())]).unwrap()
    }

    fn one_security(values: &[f64]) -> Panel {
        let ids = vec!["A"; values.len()];
        let dates: Vec<Date> = (0..values.len())
            .map(|i| Date::from_ymd(2021, 1, 1).unwrap().add_days(i as i32))
            .collect();
        Panel::from_rows(&ids, &dates, vec![("x".into(), values.to_vec())]).unwrap()
    }

    #[test]
    fn cs_rank_examples() {
        let out = evaluate(&parse_feature("cs_rank(x)").unwrap(), &one_date(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(out, vec![1.0, 1.0 / 3.0, 2.0 / 3.0]);
        let out = evaluate(&parse_feature("cs_rank(x)").unwrap(), &one_date(&[1.0, 1.0])).unwrap();
        assert_eq!(out, vec![0.75, 0.75]);
    }

    #[test]
    fn rolling_std_partial_window() {
        let x = [1.0, 4.0, 2.0, 8.0, 5.0];
        let out = evaluate(&parse_feature("rolling_std(x, 20, 1)").unwrap(), &one_security(&x)).unwrap();
        assert!((out[4] - stats::pop_std(&x)).abs() < 1e-15);
        let out = evaluate(&parse_feature("rolling_std(x, 20, 1, ddof=1)").unwrap(), &one_security(&x)).unwrap();
        assert!((out[4] - stats::sample_std(&x)).abs() < 1e-15);
        assert!(out[0].is_nan());
        let out = evaluate(&parse_feature("rolling_std(x, 20)").unwrap(), &one_security(&x)).unwrap();
        assert!(out.iter().all(|v| v.is_nan()));
    }

    #[test]
    fn missing_value_rules() {
        let p = one_security(&[0.0, -1.0, 4.0]);
        let out = evaluate(&parse_feature("1 / x").unwrap(), &p).unwrap();
        assert!(out[0].is_nan());
        assert_eq!(out[1], -1.0);
        let out = evaluate(&parse_feature("log(x)").unwrap(), &p).unwrap();
        assert!(out[0].is_nan() && out[1].is_nan());
        let out = evaluate(&parse_feature("sqrt(x)").unwrap(), &p).unwrap();
        assert_eq!(out[2], 2.0);
        assert!(out[1].is_nan());
        let out = evaluate(&parse_feature("fillna(sqrt(x), 0)").unwrap(), &p).unwrap();
        assert_eq!(out, vec![0.0, 0.0, 2.0]);
        let out = evaluate(&parse_feature("cs_zscore(x)").unwrap(), &one_date(&[2.0, 2.0])).unwrap();
        assert!(out.iter().all(|v| v.is_nan()));
    }

    #[test]
    fn ewm_adjusted_weights() {
        let out = ewm_mean(&[f64::NAN, 1.0, f64::NAN, 4.0], 0.5);
        assert!(out[0].is_nan());
        assert_eq!(out[1], 1.0);
        assert!((out[2] - 1.0).abs() < 1e-15);
        // weights 1 (for 4.0) and 0.25 (for 1.0, two steps back)
        assert!((out[3] - (4.0 + 0.25) / 1.25).abs() < 1e-15);
    }

    #[test]
    fn lag_stays_within_security() {
        let p = Panel::from_rows(
            &["A", "A", "B", "B"],
            &[Date::from_ymd(2021, 1, 4).unwrap(), Date::from_ymd(2021, 1, 5).unwrap(),
              Date::from_ymd(2021, 1, 4).unwrap(), Date::from_ymd(2021, 1, 5).unwrap()],
            vec![("x".into(), vec![1.0, 2.0, 3.0, 4.0])],
        )
        .unwrap();
        let out = evaluate(&parse_feature("lag(x, 1)").unwrap(), &p).unwrap();
        assert!(out[0].is_nan() && out[2].is_nan());
        assert_eq!((out[1], out[3]), (1.0, 3.0));
    }

    #[test]
    fn invalid_expression_is_refused() {
        let p = one_security(&[1.0]);
        assert!(evaluate(&parse_feature("lag(x, -1)").unwrap(), &p).is_err());
        assert!(evaluate(&parse_feature("lag(y, 1)").unwrap(), &p).is_err());
    }
}
