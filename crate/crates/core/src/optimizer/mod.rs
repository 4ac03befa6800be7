//! Convex long-short construction with cost and risk penalties.
//!
//! ```text
//! max  alpha'(w+ - w-) - l_tc sum_i c_i |w_i - w_prev_i| - l_risk Risk(w)
//! s.t. sum w+ = 1,  sum w- = 1,  0 <= w+, w- <= w_max,  [sum_{i in S_j} w_i = 0 for all j]
//! ```
//!
//! Risk models:
//!
//! ```text
//! diagonal:      Risk(w) = sum_i sigma_i^2 w_i^2
//! sector factor: Risk(w) = f'F f + sum_i d_i w_i^2,   f = B'w,  d_i = 0.5 sigma_i^2
//!                F_jk = sigma_s^2 (j = k),  rho sigma_s^2 (j != k)
//! ```
//!
//! Concentration of a book:
//!
//! ```text
//! N_eff = 1 / sum_i w_i^2     max |w_i|     tilts = sum_j |sum_{i in S_j} w_i|
//! ```

mod solver;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::Hash;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

use crate::analytics::sharpe;
use crate::frictions::{impact_cost, net_returns, CostInputs, CostMode, CostParams, FrictionError};
use crate::panel::{Date, Panel, PanelError, ScorePanel, SecurityId};
use crate::portfolio::{
    construct_book, portfolio_returns, smooth_scores, standardize_and_winsorize, weights_from_scores,
    BookEntry, ConstructionSpec, PortfolioError, WeightBook,
};
use crate::stats;

pub use solver::SolverSettings;

pub const DEFAULT_LAMBDA_TC: f64 = 1.0;
pub const DEFAULT_LAMBDA_RISK: f64 = 1.0;
pub const DEFAULT_W_MAX: f64 = 0.02;

/// Sector assigned to names without a label.
pub const UNCLASSIFIED: &str = "UNCLASSIFIED";

#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityReport {
    pub reason: String,
    pub n_long: usize,
    pub n_short: usize,
    pub w_max: f64,
    /// Largest attainable gross on one side under the constraints.
    pub capacity: f64,
}

impl fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (longs {}, shorts {}, w_max {}, attainable side gross {:.6})",
            self.reason, self.n_long, self.n_short, self.w_max, self.capacity
        )
    }
}

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid optimizer input: {0}")]
    InvalidInput(String),
    #[error("infeasible problem: {0}")]
    Infeasible(InfeasibilityReport),
    #[error("unknown variant {0:?}; expected naive, sector_neutral:W or pure_alpha:W")]
    UnknownVariant(String),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
    #[error(transparent)]
    Frictions(#[from] FrictionError),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskKind {
    Diagonal,
    SectorFactor,
}

impl RiskKind {
    pub fn parse(text: &str) -> Option<RiskKind> {
        match text {
            "diagonal" => Some(RiskKind::Diagonal),
            "sector_factor" => Some(RiskKind::SectorFactor),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskParams {
    /// Daily sector volatility.
    pub sector_vol: f64,
    pub sector_corr: f64,
    /// Share of total variance treated as idiosyncratic.
    pub idio_fraction: f64,
}

impl Default for RiskParams {
    fn default() -> RiskParams {
        RiskParams {
            sector_vol: 0.02,
            sector_corr: 0.30,
            idio_fraction: 0.5,
        }
    }
}

/// `F_jk = sigma_s^2` on the diagonal and `rho sigma_s^2` off it.
pub fn sector_covariance(k: usize, params: &RiskParams) -> DMatrix<f64> {
    let v = params.sector_vol * params.sector_vol;
    DMatrix::from_fn(k, k, |a, b| if a == b { v } else { params.sector_corr * v })
}

/// Maps labels to dense sector indices in sorted label order; missing labels
/// go to [`UNCLASSIFIED`].
pub fn encode_sectors<S: AsRef<str>>(labels: &[Option<S>]) -> (Vec<usize>, Vec<String>) {
    let name = |l: &Option<S>| l.as_ref().map_or(UNCLASSIFIED, |s| s.as_ref()).to_string();
    let names: Vec<String> = labels.iter().map(name).collect::<BTreeSet<_>>().into_iter().collect();
    let position: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let codes = labels.iter().map(|l| position[name(l).as_str()]).collect();
    (codes, names)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskModel {
    pub kind: RiskKind,
    /// Idiosyncratic variance `d_i`.
    pub idio: Vec<f64>,
    /// One-hot loadings stored as the sector index of each name.
    pub sector_of: Vec<usize>,
    pub sector_names: Vec<String>,
    /// Sector covariance; empty for the diagonal model.
    pub factor_cov: DMatrix<f64>,
}

impl RiskModel {
    pub fn diagonal(sigma: &[f64]) -> RiskModel {
        RiskModel {
            kind: RiskKind::Diagonal,
            idio: sigma.iter().map(|s| s * s).collect(),
            sector_of: vec![0; sigma.len()],
            sector_names: Vec::new(),
            factor_cov: DMatrix::zeros(0, 0),
        }
    }

    pub fn sector_factor<S: AsRef<str>>(sigma: &[f64], sectors: &[Option<S>], params: &RiskParams) -> RiskModel {
        let (sector_of, sector_names) = encode_sectors(sectors);
        RiskModel {
            kind: RiskKind::SectorFactor,
            idio: sigma.iter().map(|s| params.idio_fraction * s * s).collect(),
            factor_cov: sector_covariance(sector_names.len(), params),
            sector_of,
            sector_names,
        }
    }

    pub fn len(&self) -> usize {
        self.idio.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idio.is_empty()
    }

    fn exposures(&self, w: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.factor_cov.nrows()];
        if !f.is_empty() {
            for (i, wi) in w.iter().enumerate() {
                f[self.sector_of[i]] += wi;
            }
        }
        f
    }

    pub fn risk(&self, w: &[f64]) -> f64 {
        let mut grad = vec![0.0; w.len()];
        self.risk_and_gradient(w, &mut grad)
    }

    /// Risk and its gradient `2 (D w + B F B'w)`, in O(nk).
    pub(crate) fn risk_and_gradient(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let f = self.exposures(w);
        let k = f.len();
        let ff: Vec<f64> = (0..k).map(|a| (0..k).map(|b| self.factor_cov[(a, b)] * f[b]).sum()).collect();
        let mut value: f64 = f.iter().zip(&ff).map(|(a, b)| a * b).sum();
        for (i, wi) in w.iter().enumerate() {
            value += self.idio[i] * wi * wi;
            grad[i] = 2.0 * (self.idio[i] * wi + if k > 0 { ff[self.sector_of[i]] } else { 0.0 });
        }
        value
    }

    /// Upper bound on the largest eigenvalue of the implied covariance.
    pub fn max_eigenvalue(&self) -> f64 {
        let d = self.idio.iter().copied().fold(0.0, f64::max);
        let k = self.factor_cov.nrows();
        if k == 0 {
            return d;
        }
        let top = SymmetricEigen::new(self.factor_cov.clone()).eigenvalues.iter().copied().fold(0.0, f64::max);
        let mut sizes = vec![0usize; k];
        for &s in &self.sector_of {
            sizes[s] += 1;
        }
        d + top * sizes.into_iter().max().unwrap_or(0) as f64
    }
}

/// Builds a risk model from trailing volatilities; missing volatilities take
/// the cross-sectional median of the known ones.
pub fn build_risk_model<S: AsRef<str>>(
    sigma: &[f64],
    sectors: &[Option<S>],
    kind: RiskKind,
    params: &RiskParams,
) -> Result<RiskModel, OptimizerError> {
    if sigma.len() != sectors.len() {
        return Err(OptimizerError::InvalidInput(format!(
            "{} volatilities for {} sector labels",
            sigma.len(),
            sectors.len()
        )));
    }
    if !(params.sector_vol >= 0.0) || !(-1.0..=1.0).contains(&params.sector_corr) || !(0.0..=1.0).contains(&params.idio_fraction) {
        return Err(OptimizerError::InvalidInput("risk parameters out of range".into()));
    }
    let known: Vec<f64> = sigma.iter().copied().filter(|s| s.is_finite() && *s >= 0.0).collect();
    let fill = if known.is_empty() { 0.0 } else { stats::median(&known) };
    let sigma: Vec<f64> = sigma.iter().map(|&s| if s.is_finite() && s >= 0.0 { s } else { fill }).collect();
    Ok(match kind {
        RiskKind::Diagonal => RiskModel::diagonal(&sigma),
        RiskKind::SectorFactor => RiskModel::sector_factor(&sigma, sectors, params),
    })
}

/// One date's construction problem. Vectors share one name order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptProblem {
    /// Standardized predictions; missing entries are held flat.
    pub alpha: Vec<f64>,
    /// One-way cost per unit of weight traded.
    pub cost: Vec<f64>,
    pub prev: Vec<f64>,
    pub lambda_tc: f64,
    pub lambda_risk: f64,
    pub w_max: f64,
    pub sector_neutral: bool,
    pub sectors: Vec<usize>,
}

impl OptProblem {
    /// No costs, no previous book, one sector and default penalties.
    pub fn new(alpha: Vec<f64>) -> OptProblem {
        let n = alpha.len();
        OptProblem {
            alpha,
            cost: vec![0.0; n],
            prev: vec![0.0; n],
            lambda_tc: DEFAULT_LAMBDA_TC,
            lambda_risk: DEFAULT_LAMBDA_RISK,
            w_max: DEFAULT_W_MAX,
            sector_neutral: false,
            sectors: vec![0; n],
        }
    }

    fn validate(&self, risk: &RiskModel) -> Result<(), OptimizerError> {
        let n = self.alpha.len();
        let bad = |m: String| Err(OptimizerError::InvalidInput(m));
        if self.cost.len() != n || self.prev.len() != n || self.sectors.len() != n || risk.len() != n {
            return bad(format!(
                "dimension mismatch: alpha {n}, cost {}, prev {}, sectors {}, risk {}",
                self.cost.len(),
                self.prev.len(),
                self.sectors.len(),
                risk.len()
            ));
        }
        if !(self.lambda_tc >= 0.0 && self.lambda_tc.is_finite()) || !(self.lambda_risk >= 0.0 && self.lambda_risk.is_finite()) {
            return bad("penalties must be finite and non-negative".into());
        }
        if !(self.w_max > 0.0 && self.w_max <= 1.0) {
            return bad(format!("w_max {} outside (0, 1]", self.w_max));
        }
        if self.cost.iter().any(|c| !(c.is_finite() && *c >= 0.0)) || self.prev.iter().any(|p| !p.is_finite()) {
            return bad("costs must be finite and non-negative, previous weights finite".into());
        }
        if self.alpha.iter().any(|a| a.is_infinite()) {
            return bad("alpha must not be infinite".into());
        }
        Ok(())
    }

    /// `alpha'w - l_tc sum c |w - w_prev| - l_risk Risk(w)`.
    pub fn objective(&self, risk: &RiskModel, w: &[f64]) -> f64 {
        let gain: f64 = self.alpha.iter().zip(w).filter(|(a, _)| !a.is_nan()).map(|(a, w)| a * w).sum();
        let tc: f64 = (0..w.len()).map(|i| self.cost[i] * (w[i] - self.prev[i]).abs()).sum();
        gain - self.lambda_tc * tc - self.lambda_risk * risk.risk(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Gap certificate met.
    Optimal,
    /// Iteration limit hit; the best iterate is returned.
    MaxIterations,
    /// No non-zero alpha; the previous book is kept.
    DegenerateAlpha,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::DegenerateAlpha => "degenerate_alpha",
        }
    }
}

/// Constraint residuals of a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub long_sum: f64,
    pub short_sum: f64,
    pub cap: f64,
    pub sector: f64,
}

impl Feasibility {
    pub fn of(weights: &[f64], w_max: f64, sectors: Option<&[usize]>) -> Feasibility {
        let long: f64 = weights.iter().filter(|w| **w > 0.0).sum();
        let short: f64 = weights.iter().filter(|w| **w < 0.0).map(|w| -w).sum();
        let cap = weights.iter().map(|w| (w.abs() - w_max).max(0.0)).fold(0.0, f64::max);
        let sector = sectors.map_or(0.0, |s| {
            let mut net: BTreeMap<usize, f64> = BTreeMap::new();
            for (w, j) in weights.iter().zip(s) {
                *net.entry(*j).or_default() += w;
            }
            net.values().map(|v| v.abs()).fold(0.0, f64::max)
        });
        Feasibility {
            long_sum: (long - 1.0).abs(),
            short_sum: (short - 1.0).abs(),
            cap,
            sector,
        }
    }

    pub fn max(&self) -> f64 {
        self.long_sum.max(self.short_sum).max(self.cap).max(self.sector)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub weights: Vec<f64>,
    /// Objective in maximization form.
    pub objective: f64,
    /// Certified bound on the distance to the optimal objective.
    pub gap: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub feasibility: Feasibility,
}

impl Solution {
    /// One machine-readable log line.
    pub fn log_line(&self) -> String {
        format!(
            "status={} iters={} objective={:.12e} gap={:.3e} long_err={:.3e} short_err={:.3e} cap_err={:.3e} sector_err={:.3e}",
            self.status.name(),
            self.iterations,
            self.objective,
            self.gap,
            self.feasibility.long_sum,
            self.feasibility.short_sum,
            self.feasibility.cap,
            self.feasibility.sector
        )
    }
}

fn feasibility_check(problem: &OptProblem, layout: &solver::Layout) -> Result<(), InfeasibilityReport> {
    let (nl, ns) = (layout.longs.len(), layout.shorts.len());
    let w = problem.w_max;
    let report = |reason: &str, capacity: f64| InfeasibilityReport {
        reason: reason.to_string(),
        n_long: nl,
        n_short: ns,
        w_max: w,
        capacity,
    };
    if nl == 0 || ns == 0 {
        return Err(report("alpha has no long or no short candidates", 0.0));
    }
    let slack = 1e-12;
    if layout.groups.is_empty() {
        let capacity = w * nl.min(ns) as f64;
        if capacity < 1.0 - slack {
            return Err(report("w_max times the number of names on a side is below 1", capacity));
        }
    } else {
        let capacity: f64 = layout.groups.iter().map(|(l, s)| w * l.len().min(s.len()) as f64).sum();
        if capacity < 1.0 - slack {
            return Err(report("sector neutrality cannot be met: sectors lack offsetting long and short names", capacity));
        }
    }
    Ok(())
}

/// Solves one date's problem. Names may only be held on the side of their
/// alpha sign; zero or missing alpha names end flat.
pub fn solve_portfolio(problem: &OptProblem, risk: &RiskModel, settings: &SolverSettings) -> Result<Solution, OptimizerError> {
    problem.validate(risk)?;
    let sectors = problem.sector_neutral.then_some(problem.sectors.as_slice());
    if problem.alpha.iter().all(|a| *a == 0.0 || a.is_nan()) {
        let weights = problem.prev.clone();
        return Ok(Solution {
            objective: problem.objective(risk, &weights),
            feasibility: Feasibility::of(&weights, problem.w_max, sectors),
            weights,
            gap: 0.0,
            iterations: 0,
            status: SolveStatus::DegenerateAlpha,
        });
    }
    let layout = solver::Layout::new(problem);
    feasibility_check(problem, &layout).map_err(OptimizerError::Infeasible)?;
    let out = solver::minimize(problem, risk, &layout, settings);
    Ok(Solution {
        objective: problem.objective(risk, &out.x),
        feasibility: Feasibility::of(&out.x, problem.w_max, sectors),
        weights: out.x,
        gap: out.gap,
        iterations: out.iterations,
        status: if out.converged { SolveStatus::Optimal } else { SolveStatus::MaxIterations },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Concentration {
    pub effective_n: f64,
    pub max_position: f64,
    pub sector_tilts: f64,
}

pub fn concentration_metrics<T: Eq + Hash>(weights: &[f64], sectors: &[T]) -> Concentration {
    let hhi: f64 = weights.iter().map(|w| w * w).sum();
    let mut net: HashMap<&T, f64> = HashMap::new();
    for (w, s) in weights.iter().zip(sectors) {
        *net.entry(s).or_default() += w;
    }
    let mut nets: Vec<f64> = net.into_values().map(f64::abs).collect();
    nets.sort_by(f64::total_cmp);
    Concentration {
        effective_n: if hhi > 0.0 { 1.0 / hhi } else { f64::NAN },
        max_position: weights.iter().map(|w| w.abs()).fold(0.0, f64::max),
        sector_tilts: nets.iter().sum(),
    }
}

/// Prediction-weighted baseline, delegating to the portfolio weight map.
pub fn naive_weights(alpha: &[f64]) -> Result<Vec<f64>, OptimizerError> {
    let date = Date::from_ordinal(1);
    let ids: Vec<String> = (0..alpha.len()).map(|i| format!("{i:09}")).collect();
    let triples: Vec<(&str, Date, f64)> = ids.iter().zip(alpha).map(|(id, a)| (id.as_str(), date, *a)).collect();
    let book = weights_from_scores(&ScorePanel::from_triples(&triples)?);
    let entry = &book.entries()[0];
    if entry.flagged {
        let n_long = alpha.iter().filter(|a| **a > 0.0).count();
        let n_short = alpha.iter().filter(|a| **a < 0.0).count();
        return Err(OptimizerError::Infeasible(InfeasibilityReport {
            reason: "alpha has no long or no short candidates".into(),
            n_long,
            n_short,
            w_max: 1.0,
            capacity: 0.0,
        }));
    }
    Ok(ids.iter().map(|id| entry.weight(id)).collect())
}

/// Construction compared in the optimization table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Naive,
    SectorNeutral { w_max: f64 },
    PureAlpha { w_max: f64 },
}

impl Variant {
    /// `naive`, `sector_neutral:0.02` or `pure_alpha:0.01`; the cap defaults
    /// to 0.02.
    pub fn parse(text: &str) -> Result<Variant, OptimizerError> {
        let (kind, cap) = match text.split_once(':') {
            Some((k, c)) => (k, Some(c)),
            None => (text, None),
        };
        let w_max = match cap {
            Some(c) => c
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|w| *w > 0.0 && *w <= 1.0)
                .ok_or_else(|| OptimizerError::UnknownVariant(text.to_string()))?,
            None => DEFAULT_W_MAX,
        };
        match kind.trim() {
            "naive" if cap.is_none() => Ok(Variant::Naive),
            "sector_neutral" => Ok(Variant::SectorNeutral { w_max }),
            "pure_alpha" => Ok(Variant::PureAlpha { w_max }),
            _ => Err(OptimizerError::UnknownVariant(text.to_string())),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Variant::Naive => "naive".into(),
            Variant::SectorNeutral { w_max } => format!("sector_neutral:{w_max}"),
            Variant::PureAlpha { w_max } => format!("pure_alpha:{w_max}"),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Variant::Naive => "Naive (prediction-weighted)".into(),
            Variant::SectorNeutral { w_max } => format!("Sector-Neutral ({}% cap)", w_max * 100.0),
            Variant::PureAlpha { w_max } => format!("Pure Alpha ({}% cap)", w_max * 100.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSettings {
    pub construction: ConstructionSpec,
    pub target_column: String,
    pub sector_column: String,
    pub risk_kind: RiskKind,
    pub risk_params: RiskParams,
    pub lambda_tc: f64,
    pub lambda_risk: f64,
    pub solver: SolverSettings,
}

impl CompareSettings {
    pub fn new(target_column: &str, sector_column: &str) -> CompareSettings {
        CompareSettings {
            construction: ConstructionSpec::default(),
            target_column: target_column.to_string(),
            sector_column: sector_column.to_string(),
            risk_kind: RiskKind::SectorFactor,
            risk_params: RiskParams::default(),
            lambda_tc: DEFAULT_LAMBDA_TC,
            lambda_risk: DEFAULT_LAMBDA_RISK,
            solver: SolverSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub variant: Variant,
    pub net_sharpe: Option<f64>,
    pub gross_sharpe: Option<f64>,
    /// Time-series means over dates holding a book.
    pub effective_n: f64,
    pub max_position: f64,
    pub sector_tilts: f64,
    pub mean_turnover: f64,
    pub infeasible_dates: usize,
    pub unconverged_dates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOutput {
    pub rows: Vec<CompareRow>,
    /// Solver log, one line per optimized date.
    pub log: Vec<String>,
}

/// One-way cost per unit weight at a reference trade of `AUM / n` dollars.
fn unit_cost(inputs: &CostInputs, params: &CostParams, id: &str, date: Date, q_ref: f64) -> f64 {
    let multiplier = if params.round_trip { 2.0 } else { 1.0 };
    let fallback = params.static_cost_bps / 1e4;
    let c = match (params.mode, inputs.row(id, date)) {
        (CostMode::PositionLevel, Some(r)) if !inputs.half_spread[r].is_nan() => {
            impact_cost(params, inputs.sigma[r], q_ref, inputs.adv[r]).map_or(fallback, |imp| inputs.half_spread[r] + imp)
        }
        _ => fallback,
    };
    c * multiplier
}

struct SectorLookup<'a> {
    panel: &'a Panel,
    labels: &'a [Option<Arc<str>>],
}

impl SectorLookup<'_> {
    fn get(&self, id: &str, date: Date) -> Option<Arc<str>> {
        self.panel.index().find(id, date).and_then(|r| self.labels[r].clone())
    }
}

fn optimized_book(
    scores: &ScorePanel,
    inputs: &CostInputs,
    params: &CostParams,
    sectors: &SectorLookup<'_>,
    variant: Variant,
    settings: &CompareSettings,
) -> Result<(WeightBook, Vec<String>, usize, usize), OptimizerError> {
    let (w_max, neutral, lambda_risk) = match variant {
        Variant::SectorNeutral { w_max } => (w_max, true, settings.lambda_risk),
        Variant::PureAlpha { w_max } => (w_max, false, 0.0),
        Variant::Naive => unreachable!("naive books are not optimized"),
    };
    let alpha_panel = standardize_and_winsorize(&smooth_scores(scores, settings.construction.smoothing_window)?);
    let index = alpha_panel.index();
    let values = alpha_panel.values();
    let mut entries = Vec::with_capacity(index.date_groups().len());
    let mut log = Vec::new();
    let mut prev: BTreeMap<SecurityId, f64> = BTreeMap::new();
    let mut held: Option<(Option<(i32, u32)>, Vec<(SecurityId, f64)>, bool)> = None;
    let (mut infeasible, mut unconverged) = (0, 0);
    let frequency = settings.construction.rebalance;
    for g in index.date_groups() {
        let period = frequency.period_key(g.date);
        if let Some((p, positions, flagged)) = &held {
            if *p == period && period.is_some() {
                entries.push(BookEntry {
                    date: g.date,
                    positions: positions.clone(),
                    flagged: *flagged,
                });
                continue;
            }
        }
        let mut names: BTreeMap<SecurityId, f64> = prev.keys().map(|id| (id.clone(), f64::NAN)).collect();
        for &r in &g.rows {
            if !values[r].is_nan() {
                names.insert(index.id(r).clone(), values[r]);
            }
        }
        let ids: Vec<SecurityId> = names.keys().cloned().collect();
        let alpha: Vec<f64> = names.values().copied().collect();
        let n_active = alpha.iter().filter(|a| !a.is_nan()).count().max(1);
        let q_ref = params.aum / n_active as f64;
        let labels: Vec<Option<Arc<str>>> = ids.iter().map(|id| sectors.get(id, g.date)).collect();
        let sigma: Vec<f64> = ids
            .iter()
            .map(|id| inputs.row(id, g.date).map_or(f64::NAN, |r| inputs.sigma[r]))
            .collect();
        let risk = build_risk_model(&sigma, &labels, settings.risk_kind, &settings.risk_params)?;
        let problem = OptProblem {
            cost: ids.iter().map(|id| unit_cost(inputs, params, id, g.date, q_ref)).collect(),
            prev: ids.iter().map(|id| prev.get(id).copied().unwrap_or(0.0)).collect(),
            alpha,
            lambda_tc: settings.lambda_tc,
            lambda_risk,
            w_max,
            sector_neutral: neutral,
            sectors: encode_sectors(&labels).0,
        };
        let prefix = format!("variant={} date={} n={}", variant.name(), g.date, ids.len());
        let (positions, flagged) = match solve_portfolio(&problem, &risk, &settings.solver) {
            Ok(sol) => {
                log.push(format!("{prefix} {}", sol.log_line()));
                if sol.status == SolveStatus::MaxIterations {
                    unconverged += 1;
                }
                let positions: Vec<(SecurityId, f64)> =
                    ids.iter().cloned().zip(sol.weights).filter(|(_, w)| *w != 0.0).collect();
                (positions, false)
            }
            Err(OptimizerError::Infeasible(report)) => {
                log.push(format!("{prefix} status=infeasible reason={:?}", report.to_string()));
                infeasible += 1;
                (Vec::new(), true)
            }
            Err(e) => return Err(e),
        };
        prev = positions.iter().cloned().collect();
        entries.push(BookEntry {
            date: g.date,
            positions: positions.clone(),
            flagged,
        });
        held = Some((period, positions, flagged));
    }
    Ok((WeightBook::new(entries), log, infeasible, unconverged))
}

/// Net Sharpe and concentration of each construction on the same scores.
/// Optimized variants solve on each rebalance date in sequence, since each
/// problem depends on the previous book; variants run in parallel.
pub fn compare_constructions(
    scores: &ScorePanel,
    panel: &Panel,
    inputs: &CostInputs,
    cost_params: &CostParams,
    variants: &[Variant],
    settings: &CompareSettings,
) -> Result<CompareOutput, OptimizerError> {
    cost_params.validate()?;
    let labels = panel.labels(&settings.sector_column)?;
    let lookup = SectorLookup { panel, labels };
    panel.require_columns(&[settings.target_column.as_str()])?;
    let results: Vec<(CompareRow, Vec<String>)> = variants
        .par_iter()
        .map(|&variant| {
            let (book, log, infeasible, unconverged) = match variant {
                Variant::Naive => (construct_book(scores, &settings.construction, None)?, Vec::new(), 0, 0),
                _ => optimized_book(scores, inputs, cost_params, &lookup, variant, settings)?,
            };
            let gross = portfolio_returns(&book, panel, &settings.target_column)?.series;
            let net = net_returns(&gross, &book, Some(inputs), cost_params)?;
            let mut conc = Vec::new();
            for e in book.entries().iter().filter(|e| !e.positions.is_empty()) {
                let w: Vec<f64> = e.positions.iter().map(|p| p.1).collect();
                let s: Vec<Option<Arc<str>>> = e.positions.iter().map(|p| lookup.get(&p.0, e.date)).collect();
                let (codes, _) = encode_sectors(&s);
                conc.push(concentration_metrics(&w, &codes));
            }
            let mean_of = |f: fn(&Concentration) -> f64| {
                let v: Vec<f64> = conc.iter().map(f).collect();
                if v.is_empty() { f64::NAN } else { stats::mean(&v) }
            };
            let row = CompareRow {
                variant,
                net_sharpe: sharpe(&net.net.values).ok(),
                gross_sharpe: sharpe(&gross.values).ok(),
                effective_n: mean_of(|c| c.effective_n),
                max_position: mean_of(|c| c.max_position),
                sector_tilts: mean_of(|c| c.sector_tilts),
                mean_turnover: if net.turnover.is_empty() { f64::NAN } else { stats::mean(&net.turnover) },
                infeasible_dates: infeasible,
                unconverged_dates: unconverged,
            };
            Ok((row, log))
        })
        .collect::<Result<_, OptimizerError>>()?;
    let mut rows = Vec::with_capacity(results.len());
    let mut log = Vec::new();
    for (row, lines) in results {
        rows.push(row);
        log.extend(lines);
    }
    Ok(CompareOutput { rows, log })
}
