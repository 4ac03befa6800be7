//! Python bindings: feature parsing and checking, return statistics and the
//! single-date portfolio solver.
//!
//! Built as the extension module `panelalpha`.

use panelalpha::analytics::{self, newey_west_variance, nw_diff_test};
use panelalpha::dsl::{check_point_in_time, parse_feature, parse_manifest};
use panelalpha::optimizer::{solve_portfolio, OptProblem, RiskModel, RiskParams, SolverSettings};
use panelalpha::panel::Date;
use panelalpha::portfolio::ReturnSeries;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Parses an expression and returns its canonical text.
#[pyfunction]
fn parse(text: &str) -> PyResult<String> {
    parse_feature(text).map(|e| e.to_string()).map_err(value_error)
}

/// Point-in-time check of one expression: `(passed, report)`.
#[pyfunction]
fn check(text: &str) -> PyResult<(bool, String)> {
    let expr = parse_feature(text).map_err(value_error)?;
    let report = check_point_in_time(&expr);
    Ok((report.passed(), report.to_string()))
}

/// Checks every `name = expression` line of a manifest: `[(name, passed, report)]`.
#[pyfunction]
fn validate_manifest(text: &str) -> PyResult<Vec<(String, bool, String)>> {
    let features = parse_manifest(text).map_err(value_error)?;
    Ok(features
        .into_iter()
        .map(|f| {
            let report = check_point_in_time(&f.expr);
            (f.name, report.passed(), report.to_string())
        })
        .collect())
}

/// Annualized Sharpe ratio of daily returns.
#[pyfunction]
fn sharpe(returns: Vec<f64>) -> PyResult<f64> {
    analytics::sharpe(&returns).map_err(value_error)
}

/// Largest peak-to-trough loss of the compounded equity curve.
#[pyfunction]
fn max_drawdown(returns: Vec<f64>) -> f64 {
    analytics::max_drawdown(&returns)
}

/// Bartlett-weighted long-run variance of the sample mean.
#[pyfunction]
fn nw_variance(x: Vec<f64>, lags: usize) -> f64 {
    newey_west_variance(&x, lags)
}

/// HAC test of a zero mean difference between two aligned daily series:
/// `(mean_diff, std_error, t, p)`.
#[pyfunction]
fn nw_test(a: Vec<f64>, b: Vec<f64>, lags: usize) -> PyResult<(f64, f64, f64, f64)> {
    if a.len() != b.len() {
        return Err(PyValueError::new_err("series lengths differ"));
    }
    let start = Date::from_ymd(2000, 1, 3).expect("valid date");
    let dates: Vec<Date> = (0..a.len()).map(|i| start.add_days(i as i32)).collect();
    let t = nw_diff_test(&ReturnSeries::new(dates.clone(), a), &ReturnSeries::new(dates, b), lags).map_err(value_error)?;
    Ok((t.mean_diff, t.std_error, t.t, t.p))
}

/// Solves one date of the cost- and risk-penalized long-short problem with a
/// sector factor risk model. Returns `(weights, objective, status)`.
#[pyfunction]
#[pyo3(signature = (alpha, sigma, sectors, prev=None, cost=None, w_max=0.1, lambda_tc=1.0, lambda_risk=1.0, sector_neutral=false))]
#[allow(clippy::too_many_arguments)]
fn solve(
    alpha: Vec<f64>,
    sigma: Vec<f64>,
    sectors: Vec<String>,
    prev: Option<Vec<f64>>,
    cost: Option<Vec<f64>>,
    w_max: f64,
    lambda_tc: f64,
    lambda_risk: f64,
    sector_neutral: bool,
) -> PyResult<(Vec<f64>, f64, String)> {
    let n = alpha.len();
    if sigma.len() != n || sectors.len() != n {
        return Err(PyValueError::new_err("alpha, sigma and sectors must have equal length"));
    }
    let labels: Vec<Option<&str>> = sectors.iter().map(|s| Some(s.as_str())).collect();
    let risk = RiskModel::sector_factor(&sigma, &labels, &RiskParams::default());
    let problem = OptProblem {
        alpha,
        cost: cost.unwrap_or_else(|| vec![0.0; n]),
        prev: prev.unwrap_or_else(|| vec![0.0; n]),
        lambda_tc,
        lambda_risk,
        w_max,
        sector_neutral,
        sectors: risk.sector_of.clone(),
    };
    let sol = solve_portfolio(&problem, &risk, &SolverSettings::default()).map_err(value_error)?;
    Ok((sol.weights, sol.objective, sol.status.name().to_string()))
}

#[pymodule]
#[pyo3(name = "panelalpha")]
fn panelalpha_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(parse, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(validate_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(sharpe, m)?)?;
    m.add_function(wrap_pyfunction!(max_drawdown, m)?)?;
    m.add_function(wrap_pyfunction!(nw_variance, m)?)?;
    m.add_function(wrap_pyfunction!(nw_test, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    Ok(())
}
