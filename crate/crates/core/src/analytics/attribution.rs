//! Factor regression of daily strategy returns.
//!
//! ```text
//! R_t = a + sum_k b_k F_{k, t+s} + e_t
//! V   = (X'X)^-1 S (X'X)^-1
//! S   = sum_t e_t^2 x_t x_t' + sum_{l=1..L} (1 - l/(L+1)) sum_{t>l} e_t e_{t-l} (x_t x_{t-l}' + x_{t-l} x_t')
//! ```
//!
//! `s` is the forward shift in factor trading days; the intercept is
//! reported annualized (`252 a`).

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{AnalyticsError, ANNUALIZATION};
use crate::panel::Date;
use crate::portfolio::ReturnSeries;

/// Factor columns expected in a factor file, in regression order.
pub const FACTOR_NAMES: [&str; 6] = ["MktRF", "SMB", "HML", "RMW", "CMA", "Mom"];

/// Risk-free column of a factor file.
pub const RF_NAME: &str = "RF";

/// Minimum overlapping dates for a factor regression.
pub const MIN_FACTOR_OBS: usize = 100;

/// Daily factor returns on one calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    pub dates: Vec<Date>,
    pub names: Vec<String>,
    /// `values[k][t]` is factor `k` on `dates[t]`.
    pub values: Vec<Vec<f64>>,
    pub rf: Vec<f64>,
}

impl FactorPanel {
    pub fn new(dates: Vec<Date>, names: Vec<String>, values: Vec<Vec<f64>>, rf: Vec<f64>) -> Result<FactorPanel, AnalyticsError> {
        let bad = |message: String| AnalyticsError::FactorFile { line: 0, message };
        if names.len() != values.len() {
            return Err(bad(format!("{} names for {} factor columns", names.len(), values.len())));
        }
        if values.iter().any(|v| v.len() != dates.len()) || rf.len() != dates.len() {
            return Err(bad("factor columns differ in length from the dates".into()));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("dates must be strictly increasing".into()));
        }
        Ok(FactorPanel { dates, names, values, rf })
    }

    pub fn write_delimited(&self, mut out: impl Write) -> std::io::Result<()> {
        write!(out, "date")?;
        for n in &self.names {
            write!(out, ",{n}")?;
        }
        writeln!(out, ",{RF_NAME}")?;
        for (t, d) in self.dates.iter().enumerate() {
            write!(out, "{d}")?;
            for col in &self.values {
                write!(out, ",{}", col[t])?;
            }
            writeln!(out, ",{}", self.rf[t])?;
        }
        Ok(())
    }
}

/// Loads `date` plus the six factor columns and `RF` (daily decimal returns)
/// from a comma- or tab-delimited file with a header row.
pub fn load_factor_panel(path: impl AsRef<Path>) -> Result<FactorPanel, AnalyticsError> {
    let text = std::fs::read_to_string(path)?;
    let delimiter = if text.lines().next().unwrap_or("").contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AnalyticsError::FactorFile {
                line: 1,
                message: format!("missing column {name:?}"),
            })
    };
    let date_col = position("date")?;
    let factor_cols = FACTOR_NAMES.iter().map(|n| position(n)).collect::<Result<Vec<_>, _>>()?;
    let rf_col = position(RF_NAME)?;

    let mut dates = Vec::new();
    let mut values = vec![Vec::new(); FACTOR_NAMES.len()];
    let mut rf = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let field = |c: usize| record.get(c).unwrap_or("");
        let date = Date::parse(field(date_col)).ok_or_else(|| AnalyticsError::FactorFile {
            line,
            message: format!("bad date {:?}", field(date_col)),
        })?;
        let number = |c: usize| {
            field(c).parse::<f64>().map_err(|_| AnalyticsError::FactorFile {
                line,
                message: format!("bad number {:?}", field(c)),
            })
        };
        for (k, &c) in factor_cols.iter().enumerate() {
            values[k].push(number(c)?);
        }
        rf.push(number(rf_col)?);
        dates.push(date);
    }
    let names = FACTOR_NAMES.iter().map(|s| s.to_string()).collect();
    FactorPanel::new(dates, names, values, rf)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorRegression {
    pub alpha_annual: f64,
    pub alpha_t: f64,
    /// `(factor, beta, t)` in factor-panel order.
    pub betas: Vec<(String, f64, f64)>,
    pub r2: f64,
    pub n_obs: usize,
}

impl FactorRegression {
    pub fn beta(&self, name: &str) -> Option<f64> {
        self.betas.iter().find(|b| b.0 == name).map(|b| b.1)
    }
}

/// Classical Gram-Schmidt pass naming the first column that adds nothing to
/// the span of the columns before it.
fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<(), AnalyticsError> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let col = x.column(j).into_owned();
        let scale = col.norm();
        let mut r = col;
        for q in &basis {
            let proj = q.dot(&r);
            r -= q * proj;
        }
        let norm = r.norm();
        if scale == 0.0 || norm <= 1e-9 * scale {
            let earlier = names[..j].join(", ");
            return Err(AnalyticsError::Singular {
                column: if earlier.is_empty() {
                    name.clone()
                } else {
                    format!("{name} (with {earlier})")
                },
            });
        }
        basis.push(r / norm);
    }
    Ok(())
}

/// OLS of `strategy` on the factors with Bartlett HAC standard errors.
///
/// The strategy return dated `t` is paired with the factor row `shift`
/// trading days after `t` on the factor calendar; strategy dates absent from
/// that calendar are dropped.
pub fn factor_attribution(
    strategy: &ReturnSeries,
    factors: &FactorPanel,
    lags: usize,
    shift: usize,
) -> Result<FactorRegression, AnalyticsError> {
    let position: HashMap<Date, usize> = factors.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let k = factors.names.len();
    let mut y = Vec::new();
    let mut rows: Vec<usize> = Vec::new();
    for (d, v) in strategy.dates.iter().zip(&strategy.values) {
        let Some(&p) = position.get(d) else { continue };
        let q = p + shift;
        if q >= factors.dates.len() || !v.is_finite() || factors.values.iter().any(|c| !c[q].is_finite()) {
            continue;
        }
        y.push(*v);
        rows.push(q);
    }
    let n = y.len();
    if n < MIN_FACTOR_OBS {
        return Err(AnalyticsError::TooFewObservations {
            needed: MIN_FACTOR_OBS,
            found: n,
        });
    }
    let x = DMatrix::from_fn(n, k + 1, |t, j| if j == 0 { 1.0 } else { factors.values[j - 1][rows[t]] });
    let mut names = vec!["const".to_string()];
    names.extend(factors.names.iter().cloned());
    check_rank(&x, &names)?;

    let y = DVector::from_vec(y);
    let xtx = x.transpose() * &x;
    let xtx_inv = xtx.clone().try_inverse().ok_or_else(|| AnalyticsError::Singular {
        column: names.join(", "),
    })?;
    let beta = &xtx_inv * (x.transpose() * &y);
    let resid = &y - &x * &beta;

    let p = k + 1;
    let mut s = DMatrix::<f64>::zeros(p, p);
    let scores: Vec<DVector<f64>> = (0..n).map(|t| x.row(t).transpose() * resid[t]).collect();
    for g in &scores {
        s += g * g.transpose();
    }
    for l in 1..=lags.min(n - 1) {
        let w = 1.0 - l as f64 / (lags as f64 + 1.0);
        let mut gamma = DMatrix::<f64>::zeros(p, p);
        for t in l..n {
            gamma += &scores[t] * scores[t - l].transpose();
        }
        s += (&gamma + gamma.transpose()) * w;
    }
    let v = &xtx_inv * s * &xtx_inv;
    let t_stat = |j: usize| {
        let se = v[(j, j)].max(0.0).sqrt();
        if se > 0.0 { beta[j] / se } else { f64::NAN }
    };

    let y_mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let rss = resid.norm_squared();
    let r2 = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { f64::NAN };

    Ok(FactorRegression {
        alpha_annual: beta[0] * ANNUALIZATION,
        alpha_t: t_stat(0),
        betas: factors
            .names
            .iter()
            .enumerate()
            .map(|(j, name)| (name.clone(), beta[j + 1], t_stat(j + 1)))
            .collect(),
        r2,
        n_obs: n,
    })
}
