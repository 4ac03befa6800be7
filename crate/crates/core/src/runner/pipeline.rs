//! Staged experiment pipeline: prepare data, score strategies, evaluate
//! books and build report tables.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Display;

use super::config::ExperimentConfig;
use super::report::{stars, Cell, Format, Table};
use super::synth::{generate_synthetic, SignalSpec};
use super::RunError;
use crate::analytics::{
    alpha_decay, cap_segment_report, factor_attribution, load_factor_panel, nw_diff_test, sharpe, spearman_ic,
    stationary_bootstrap_ci, strategy_correlations, BootstrapConfig, FactorPanel, Interval, NwTest, PerfReport,
    ANNUALIZATION, FACTOR_NAMES, MIN_BOOTSTRAP_LEN,
};
use crate::dsl::{check_with_columns, evaluate, load_manifest, parse_manifest, NamedFeature};
use crate::frictions::{break_even_cost, liquidity_filter, net_returns, CostInputs, CostMode, LiquidityMask, NetReturns};
use crate::learner::{run_walk_forward, standardize_features, WalkForwardSchedule};
use crate::optimizer::{compare_constructions, CompareSettings, RiskParams, SolverSettings};
use crate::panel::{
    apply_universe_filter, compute_log_returns, forward_return, forward_return_column, load_panel, load_scores, read_header, Date,
    FormatSpec, Panel, ScorePanel, UniverseSpec, RETURN_COLUMN,
};
use crate::portfolio::{construct_book, portfolio_returns, ConstructionSpec, Rebalance, ReturnSeries, WeightBook};
use crate::stats;

/// Panel A/B stars: p < 0.001, 0.01, 0.05.
const PERF_STARS: [f64; 3] = [0.001, 0.01, 0.05];
/// Factor-table stars: p < 0.01, 0.05, 0.10.
const FACTOR_STARS: [f64; 3] = [0.01, 0.05, 0.10];

fn data_err<E: Display>(stage: &'static str) -> impl Fn(E) -> RunError {
    move |e| RunError::Data {
        stage,
        message: e.to_string(),
    }
}

fn numeric_err<E: Display>(stage: &'static str) -> impl Fn(E) -> RunError {
    move |e| RunError::Numeric {
        stage,
        message: e.to_string(),
    }
}

/// Loaded, validated and featurized data.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Every row, with returns, the target and raw features.
    pub full: Panel,
    /// Universe rows with per-date standardized features.
    pub universe: Panel,
    pub target: String,
    /// Rows ahead at which the target is realized.
    pub horizon: usize,
    pub features: Vec<NamedFeature>,
    pub truth: Option<Vec<SignalSpec>>,
    pub factors: Option<FactorPanel>,
    pub external: Vec<Option<ScorePanel>>,
    pub warnings: Vec<String>,
}

/// Panel from the data file or the synthetic generator.
pub fn load_data(config: &ExperimentConfig) -> Result<(Panel, Option<Vec<SignalSpec>>), RunError> {
    match &config.data.panel {
        Some(path) => {
            let path = config.resolve(path);
            let header = read_header(&path, None).map_err(data_err("load"))?;
            let missing: Vec<String> = [&config.data.id_column, &config.data.date_column]
                .into_iter()
                .filter(|c| !header.contains(c))
                .map(|c| format!("missing key column {c:?}"))
                .collect();
            if !missing.is_empty() {
                return Err(RunError::Data {
                    stage: "validate",
                    message: missing.join("; "),
                });
            }
            // absent label columns are reported by the schema check
            let mut spec = FormatSpec::new(&config.data.id_column, &config.data.date_column);
            spec.label_columns = config.data.label_columns.iter().filter(|c| header.contains(c)).cloned().collect();
            let panel = load_panel(&path, &spec).map_err(data_err("load"))?;
            Ok((panel, None))
        }
        None => {
            let synthetic = generate_synthetic(&config.synthetic_spec()?).map_err(data_err("synthetic"))?;
            Ok((synthetic.panel, Some(synthetic.truth)))
        }
    }
}

fn read_features(config: &ExperimentConfig) -> Result<Vec<NamedFeature>, RunError> {
    let mut text = String::new();
    if let Some(path) = &config.features.manifest {
        let path = config.resolve(path);
        text = std::fs::read_to_string(&path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        text.push('\n');
    }
    for line in &config.features.inline {
        text.push_str(line);
        text.push('\n');
    }
    parse_manifest(&text).map_err(|e| RunError::Config(format!("features: {e}")))
}

/// Manifest features from the config, for the feature verbs.
pub fn config_features(config: &ExperimentConfig) -> Result<Vec<NamedFeature>, RunError> {
    if config.features.manifest.is_none() && config.features.inline.is_empty() {
        return Err(RunError::Config("no [features] manifest or inline features configured".into()));
    }
    read_features(config)
}

fn check_paths(config: &ExperimentConfig) -> Result<(), RunError> {
    let mut paths = Vec::new();
    if let Some(p) = &config.data.panel {
        paths.push(("data.panel", p.clone()));
    }
    if let Some(p) = &config.data.factors {
        paths.push(("data.factors", p.clone()));
    }
    if let Some(p) = &config.features.manifest {
        paths.push(("features.manifest", p.clone()));
    }
    for s in &config.strategies {
        if let Some(p) = &s.scores {
            paths.push(("strategies.scores", p.clone()));
        }
    }
    for (field, p) in paths {
        let full = config.resolve(&p);
        if !full.is_file() {
            return Err(RunError::Config(format!("{field}: file {} not found", full.display())));
        }
    }
    Ok(())
}

/// Every column the run will touch, checked against the loaded panel.
fn check_schema(config: &ExperimentConfig, panel: &Panel, features: &[NamedFeature]) -> Result<(), RunError> {
    let numeric: HashSet<&str> = panel.column_names().collect();
    let labels: HashSet<&str> = panel.label_names().collect();
    let mut problems = Vec::new();
    let mut need = |name: &str, why: &str| {
        if !numeric.contains(name) {
            problems.push(format!("missing numeric column {name:?} ({why})"));
        }
    };
    if !numeric.contains(config.data.return_column.as_str()) {
        need(&config.data.price_column, "prices for returns");
    }
    if config.universe.top_k > 0 {
        need(&config.universe.cap_column, "universe cap");
    }
    for f in &config.universe.exclusion_flags {
        need(f, "universe exclusion flag");
    }
    let costs = &config.costs;
    if costs.mode != "static" || costs.liquidity_filter || config.optimizer.enabled {
        need(&costs.bid_column, "costs");
        need(&costs.ask_column, "costs");
        need(&costs.dollar_volume_column, "costs");
    }
    if let Some(c) = &config.segments.cap_column {
        need(c, "segments");
    }
    if config.optimizer.enabled && !labels.contains(config.optimizer.sector_column.as_str()) {
        problems.push(format!("missing label column {:?} (optimizer sectors)", config.optimizer.sector_column));
    }
    let mut declared: Vec<&str> = numeric.iter().copied().collect();
    declared.sort_unstable();
    for f in features {
        if numeric.contains(f.name.as_str()) {
            problems.push(format!("feature {:?} shadows a panel column", f.name));
        }
        let report = check_with_columns(&f.expr, &declared);
        if !report.passed() {
            problems.push(format!("feature {:?}: {report}", f.name));
        }
    }
    let known: HashSet<&str> = features.iter().map(|f| f.name.as_str()).collect();
    for s in &config.strategies {
        for name in &s.features {
            if !known.contains(name.as_str()) && !numeric.contains(name.as_str()) {
                problems.push(format!("strategy {:?}: unknown feature {name:?}", s.name));
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(RunError::Data {
            stage: "validate",
            message: problems.join("; "),
        })
    }
}

/// Validates everything that can be checked without computing, then
/// builds returns, the target and features.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared, RunError> {
    config.validate_static()?;
    check_paths(config)?;
    let features = read_features(config)?;
    let (panel, truth) = load_data(config)?;
    check_schema(config, &panel, &features)?;
    let factors = match &config.data.factors {
        Some(p) => Some(load_factor_panel(config.resolve(p)).map_err(data_err("factors"))?),
        None => None,
    };
    let score_spec = FormatSpec::new(&config.data.id_column, &config.data.date_column);
    let external = config
        .strategies
        .iter()
        .map(|s| match &s.scores {
            Some(p) => load_scores(config.resolve(p), &score_spec, &s.score_column)
                .map(Some)
                .map_err(data_err("scores")),
            None => Ok(None),
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut warnings = Vec::new();
    let mut full = if panel.has_column(&config.data.return_column) {
        let r = panel.column(&config.data.return_column).map_err(data_err("returns"))?.to_vec();
        panel.with_column(RETURN_COLUMN, r).map_err(data_err("returns"))?
    } else {
        let (p, bad) = compute_log_returns(&panel, &config.data.price_column).map_err(data_err("returns"))?;
        if bad > 0 {
            warnings.push(format!("{bad} returns missing for non-positive prices"));
        }
        p
    };
    let lag = config.portfolio.horizon_lag;
    full = forward_return(&full, lag).map_err(data_err("target"))?;
    for f in &features {
        let values = evaluate(&f.expr, &full).map_err(data_err("features"))?;
        full = full.with_column(&f.name, values).map_err(data_err("features"))?;
    }

    let mut universe = if config.universe.top_k > 0 {
        let flags: Vec<&str> = config.universe.exclusion_flags.iter().map(String::as_str).collect();
        let spec = UniverseSpec::new(config.universe.top_k, &config.universe.cap_column)
            .map_err(|e| RunError::Config(e.to_string()))?
            .with_exclusions(&flags);
        apply_universe_filter(&full, &spec).map_err(data_err("universe"))?
    } else {
        full.clone()
    };
    let used: BTreeSet<&str> = config.strategies.iter().flat_map(|s| s.features.iter().map(String::as_str)).collect();
    let used: Vec<&str> = used.into_iter().collect();
    universe = standardize_features(&universe, &used).map_err(data_err("features"))?;
    if universe.is_empty() {
        return Err(RunError::Data {
            stage: "universe",
            message: "no rows survive the universe filter".into(),
        });
    }
    Ok(Prepared {
        full,
        universe,
        target: forward_return_column(lag),
        horizon: lag + 1,
        features,
        truth,
        factors,
        external,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct StrategyScores {
    pub name: String,
    pub n_features: usize,
    pub scores: ScorePanel,
}

#[derive(Debug, Clone)]
pub struct Scored {
    pub schedule: WalkForwardSchedule,
    pub strategies: Vec<StrategyScores>,
    pub warnings: Vec<String>,
}

impl Scored {
    pub fn get(&self, name: &str) -> Option<&StrategyScores> {
        self.strategies.iter().find(|s| s.name == name)
    }
}

/// Explicit schedule dates, or a split of the universe calendar at
/// `train_fraction`.
pub fn schedule_for(config: &ExperimentConfig, calendar: &[Date]) -> Result<WalkForwardSchedule, RunError> {
    let window = config.train_window()?;
    let refit_interval = config.schedule.refit_interval;
    if let Some([train_start, train_end, test_start, test_end]) = config.schedule_dates()? {
        let s = WalkForwardSchedule {
            train_start,
            train_end,
            test_start,
            test_end,
            refit_interval,
            window,
        };
        s.validate().map_err(|e| RunError::Config(e.to_string()))?;
        return Ok(s);
    }
    let n = calendar.len();
    let k = (config.schedule.train_fraction * n as f64).floor() as usize;
    if k == 0 || k >= n {
        return Err(RunError::Data {
            stage: "schedule",
            message: format!("{n} dates cannot be split at fraction {}", config.schedule.train_fraction),
        });
    }
    Ok(WalkForwardSchedule {
        train_start: calendar[0],
        train_end: calendar[k - 1],
        test_start: calendar[k],
        test_end: calendar[n - 1],
        refit_interval,
        window,
    })
}

/// Per-date z-score; a zero-variance date is all zeros.
fn zscore_by_date(scores: &ScorePanel) -> ScorePanel {
    let values = scores.values();
    let mut out = vec![f64::NAN; values.len()];
    for g in scores.index().date_groups() {
        let present: Vec<f64> = g.rows.iter().map(|&r| values[r]).filter(|v| !v.is_nan()).collect();
        if present.is_empty() {
            continue;
        }
        let (m, sd) = (stats::mean(&present), stats::pop_std(&present));
        for &r in &g.rows {
            let v = values[r];
            if !v.is_nan() {
                out[r] = if sd > 0.0 { (v - m) / sd } else { 0.0 };
            }
        }
    }
    scores.with_values(out)
}

/// Walk-forward scores for each strategy plus the ensemble.
pub fn score_strategies(config: &ExperimentConfig, prepared: &Prepared) -> Result<Scored, RunError> {
    let panel = &prepared.universe;
    let schedule = schedule_for(config, &panel.index().calendar())?;
    let params = config.boost_params()?;
    let test_keep: Vec<bool> = panel
        .index()
        .dates()
        .iter()
        .map(|d| *d >= schedule.test_start && *d <= schedule.test_end)
        .collect();
    let test_index = panel.select_rows(&test_keep).index().clone();
    let mut warnings = Vec::new();
    let mut strategies = Vec::new();
    for (s, external) in config.strategies.iter().zip(&prepared.external) {
        let scores = match external {
            Some(e) => e.reindex(&test_index),
            None => {
                let out = run_walk_forward(panel, &s.features, &prepared.target, prepared.horizon, &schedule, &params)
                    .map_err(numeric_err("learn"))?;
                warnings.extend(out.warnings.iter().map(|w| format!("{}: {w}", s.name)));
                out.scores
            }
        };
        if scores.values().iter().all(|v| v.is_nan()) {
            return Err(RunError::Numeric {
                stage: "learn",
                message: format!("strategy {:?} produced no scores", s.name),
            });
        }
        strategies.push(StrategyScores {
            name: s.name.clone(),
            n_features: s.features.len(),
            scores,
        });
    }
    if config.has_ensemble() {
        let z: Vec<ScorePanel> = strategies.iter().map(|s| zscore_by_date(&s.scores)).collect();
        let combined = crate::portfolio::ensemble_scores(&z).map_err(numeric_err("ensemble"))?;
        let union: BTreeSet<&str> = config.strategies.iter().flat_map(|s| s.features.iter().map(String::as_str)).collect();
        strategies.push(StrategyScores {
            name: config.portfolio.ensemble.clone(),
            n_features: union.len(),
            scores: combined.reindex(&test_index),
        });
    }
    Ok(Scored {
        schedule,
        strategies,
        warnings,
    })
}

/// Cost inputs on every row, and the liquidity mask when enabled.
pub fn cost_inputs(config: &ExperimentConfig, prepared: &Prepared) -> Result<Option<(CostInputs, Option<LiquidityMask>)>, RunError> {
    let params = config.cost_params()?;
    let needed = params.mode == CostMode::PositionLevel || config.costs.liquidity_filter || config.optimizer.enabled;
    if !needed {
        return Ok(None);
    }
    let inputs = CostInputs::from_panel(&prepared.full, &params, &config.cost_columns()).map_err(data_err("costs"))?;
    let mask = config.costs.liquidity_filter.then(|| liquidity_filter(&inputs, &params));
    Ok(Some((inputs, mask)))
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub book: WeightBook,
    pub gross: ReturnSeries,
    pub net: NetReturns,
    pub ic: Vec<(Date, f64)>,
    pub gross_report: PerfReport,
    pub net_report: PerfReport,
}

pub struct Evaluator<'a> {
    pub config: &'a ExperimentConfig,
    pub prepared: &'a Prepared,
    pub inputs: Option<&'a CostInputs>,
    pub mask: Option<&'a LiquidityMask>,
}

impl Evaluator<'_> {
    pub fn construction(&self) -> Result<ConstructionSpec, RunError> {
        Ok(ConstructionSpec {
            smoothing_window: self.config.portfolio.smoothing_window,
            rebalance: self.config.rebalance()?,
        })
    }

    pub fn evaluate(&self, scores: &ScorePanel, spec: &ConstructionSpec) -> Result<Evaluation, RunError> {
        let params = self.config.cost_params()?;
        let eligible = self.mask.map(|m| move |id: &str, d: Date| m.allows(id, d));
        let eligible_ref = eligible.as_ref().map(|f| f as &dyn Fn(&str, Date) -> bool);
        let book = construct_book(scores, spec, eligible_ref).map_err(numeric_err("portfolio"))?;
        let panel = &self.prepared.universe;
        let gross = portfolio_returns(&book, panel, &self.prepared.target)
            .map_err(numeric_err("portfolio"))?
            .series;
        let net = net_returns(&gross, &book, self.inputs, &params).map_err(numeric_err("costs"))?;
        let realized = ScorePanel::new(
            panel.index().clone(),
            panel.column(&self.prepared.target).map_err(data_err("portfolio"))?.to_vec(),
        )
        .reindex(scores.index());
        let ic = spearman_ic(scores, &realized);
        let compounded = self.config.portfolio.compounded_total;
        Ok(Evaluation {
            gross_report: PerfReport::from_series(&gross, Some(&ic), compounded),
            net_report: PerfReport::from_series(&net.net, Some(&ic), compounded),
            book,
            gross,
            net,
            ic,
        })
    }
}

#[derive(Debug, Clone)]
pub struct InferenceRow {
    pub name: String,
    pub vs_first: Option<NwTest>,
    pub sharpe_ci: Option<Interval>,
}

fn sharpe_stat(x: &[f64]) -> f64 {
    sharpe(x).unwrap_or(f64::NAN)
}

pub fn inference(config: &ExperimentConfig, names: &[String], evals: &[Evaluation]) -> (Vec<InferenceRow>, Vec<String>) {
    let mut warnings = Vec::new();
    let root = config.seed_for("bootstrap");
    let rows = names
        .iter()
        .zip(evals)
        .enumerate()
        .map(|(i, (name, e))| {
            let vs_first = if i == 0 {
                None
            } else {
                match nw_diff_test(&e.net.net, &evals[0].net.net, config.inference.nw_lags) {
                    Ok(t) => Some(t),
                    Err(err) => {
                        warnings.push(format!("{name}: no HAC test ({err})"));
                        None
                    }
                }
            };
            let values = &e.net.net.values;
            let sharpe_ci = if values.len() >= MIN_BOOTSTRAP_LEN {
                let bc = BootstrapConfig {
                    level: config.inference.level,
                    resamples: config.inference.bootstrap_resamples,
                    mean_block: config.inference.mean_block,
                    seed: super::config::derive_seed(root, name),
                };
                match stationary_bootstrap_ci(values, sharpe_stat, &bc) {
                    Ok(ci) => Some(ci),
                    Err(err) => {
                        warnings.push(format!("{name}: no bootstrap interval ({err})"));
                        None
                    }
                }
            } else {
                warnings.push(format!("{name}: {} days is too short for a bootstrap interval", values.len()));
                None
            };
            InferenceRow {
                name: name.clone(),
                vs_first,
                sharpe_ci,
            }
        })
        .collect();
    (rows, warnings)
}

fn year_cell(y: Option<(i32, f64)>) -> Cell {
    match y {
        Some((year, s)) => Cell::text(format!("{s:.2} ({year})")),
        None => Cell::Num(None, Format::Fixed(2)),
    }
}

pub fn panel_a(names: &[String], evals: &[Evaluation], inference: &[InferenceRow]) -> Table {
    let mut t = Table::new(
        "panel_a",
        "Panel A: Strategy Performance",
        &["Strategy", "SR", "Return", "Vol", "MaxDD", "IC", "Hit", "Total"],
    );
    for ((name, e), inf) in names.iter().zip(evals).zip(inference) {
        let r = &e.net_report;
        let star = stars(inf.vs_first.as_ref().map(|t| t.p), PERF_STARS);
        t.push(vec![
            Cell::text(name),
            Cell::Starred(r.sharpe, star),
            Cell::num(r.annual_return, Format::Pct(1)),
            Cell::num(r.annual_vol, Format::Pct(1)),
            Cell::num(r.max_drawdown, Format::Pct(1)),
            Cell::opt(r.mean_ic, Format::Fixed(3)),
            Cell::num(r.hit_rate, Format::Pct(1)),
            Cell::num(r.total_return, Format::Pct(1)),
        ]);
    }
    t.note("Net of costs. Stars: HAC t-test of the daily return differential against the first strategy (*** p<0.001, ** p<0.01, * p<0.05).");
    t
}

pub fn panel_b(names: &[String], n_features: &[usize], evals: &[Evaluation]) -> Table {
    let mut t = Table::new(
        "panel_b",
        "Panel B: Performance Stability and Risk Characteristics",
        &["Strategy", "Features", "Avg SR", "SR Std", "Best Yr", "Worst Yr", "Calmar"],
    );
    for ((name, nf), e) in names.iter().zip(n_features).zip(evals) {
        let r = &e.net_report;
        t.push(vec![
            Cell::text(name),
            Cell::num(*nf as f64, Format::Int),
            Cell::opt(r.avg_yearly_sharpe(), Format::Fixed(2)),
            Cell::opt(r.yearly_sharpe_std(), Format::Fixed(2)),
            year_cell(r.best_year()),
            year_cell(r.worst_year()),
            Cell::opt(r.calmar, Format::Fixed(2)),
        ]);
    }
    t
}

pub fn panel_c(names: &[String], evals: &[Evaluation]) -> Table {
    let mut headers = vec![""];
    headers.extend(names.iter().map(String::as_str));
    let mut t = Table::new("panel_c", "Panel C: Strategy Correlations", &headers);
    let series: Vec<ReturnSeries> = evals.iter().map(|e| e.net.net.clone()).collect();
    let corr = strategy_correlations(&series);
    for (i, name) in names.iter().enumerate() {
        let mut row = vec![Cell::text(name)];
        for j in 0..names.len() {
            row.push(if j <= i { Cell::opt(corr[i][j], Format::Fixed(2)) } else { Cell::text("") });
        }
        t.push(row);
    }
    t
}

pub fn inference_table(inference: &[InferenceRow], level: f64) -> Table {
    let lo = format!("SR {:.0}% Lower", level * 100.0);
    let hi = format!("SR {:.0}% Upper", level * 100.0);
    let mut t = Table::new(
        "inference",
        "Inference: HAC Tests and Bootstrap Sharpe Intervals",
        &["Strategy", "Mean Diff (bps)", "HAC SE (bps)", "t", "p", "SR", &lo, &hi],
    );
    for r in inference {
        let nw = r.vs_first.as_ref();
        let ci = r.sharpe_ci.as_ref();
        t.push(vec![
            Cell::text(&r.name),
            Cell::opt(nw.map(|n| n.mean_diff * 1e4), Format::Fixed(3)),
            Cell::opt(nw.map(|n| n.std_error * 1e4), Format::Fixed(3)),
            Cell::opt(nw.map(|n| n.t), Format::Fixed(2)),
            Cell::opt(nw.map(|n| n.p), Format::Fixed(4)),
            Cell::opt(ci.map(|c| c.point), Format::Fixed(3)),
            Cell::opt(ci.map(|c| c.lower), Format::Fixed(3)),
            Cell::opt(ci.map(|c| c.upper), Format::Fixed(3)),
        ]);
    }
    t.note("Differentials are taken against the first strategy.");
    t
}

pub fn cost_table(e: &Evaluation, params_aum: f64) -> Table {
    let mut t = Table::new("costs", "Transaction Cost Impact", &["Metric", "Value"]);
    let turnover = stats::mean(&e.net.turnover);
    let (spread, impact, total) = e.net.average_cost_bps();
    let be = break_even_cost(&e.gross.values, &e.net.turnover).ok();
    let rows: Vec<(&str, Cell)> = vec![
        ("Gross Sharpe Ratio", Cell::opt(e.gross_report.sharpe, Format::Fixed(2))),
        ("Gross Annual Return", Cell::num(e.gross_report.annual_return, Format::Pct(1))),
        ("Daily Turnover", Cell::num(turnover, Format::Pct(1))),
        ("Annual Turnover", Cell::num(turnover * ANNUALIZATION, Format::Times(0))),
        ("Average Spread Cost", Cell::num(spread, Format::Bps(1))),
        ("Average Market Impact", Cell::num(impact, Format::Bps(1))),
        ("Average Total Cost", Cell::num(total, Format::Bps(1))),
        ("Net Sharpe Ratio", Cell::opt(e.net_report.sharpe, Format::Fixed(2))),
        ("Net Annual Return", Cell::num(e.net_report.annual_return, Format::Pct(1))),
        ("Trading Days", Cell::num(e.gross.len() as f64, Format::Int)),
        ("Break-even Cost", Cell::opt(be, Format::Bps(1))),
    ];
    for (k, v) in rows {
        t.push(vec![Cell::text(k), v]);
    }
    t.note(format!("Costs per unit of traded notional at AUM {params_aum:.0}."));
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub window: usize,
    pub daily_turnover: f64,
    pub total_cost_bps: f64,
    pub gross_sharpe: Option<f64>,
    pub net_sharpe: Option<f64>,
}

/// Smoothing sweep with daily rebalancing.
pub fn smoothing_sweep(ev: &Evaluator, scores: &ScorePanel) -> Result<Vec<SweepRow>, RunError> {
    ev.config
        .portfolio
        .smoothing_sweep
        .iter()
        .map(|&w| {
            let e = ev.evaluate(
                scores,
                &ConstructionSpec {
                    smoothing_window: w,
                    rebalance: Rebalance::Daily,
                },
            )?;
            Ok(SweepRow {
                window: w,
                daily_turnover: stats::mean(&e.net.turnover),
                total_cost_bps: e.net.average_cost_bps().2,
                gross_sharpe: e.gross_report.sharpe,
                net_sharpe: e.net_report.sharpe,
            })
        })
        .collect()
}

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(
        "smoothing",
        "Impact of Signal Smoothing",
        &["Smoothing Window", "Daily Turnover", "Annual Turnover", "Total Cost (bps)", "Gross Sharpe", "Net Sharpe"],
    );
    for r in rows {
        let label = if r.window <= 1 { "None".to_string() } else { format!("{}-day MA", r.window) };
        t.push(vec![
            Cell::text(label),
            Cell::num(r.daily_turnover, Format::Pct(1)),
            Cell::num(r.daily_turnover * ANNUALIZATION, Format::Times(0)),
            Cell::num(r.total_cost_bps, Format::Fixed(1)),
            Cell::opt(r.gross_sharpe, Format::Fixed(2)),
            Cell::opt(r.net_sharpe, Format::Fixed(2)),
        ]);
    }
    t.note("Daily rebalancing; moving average applied to raw scores.");
    t
}

/// Optimizer comparison table and solver log lines.
pub fn optimizer_table(ev: &Evaluator, scores: &ScorePanel) -> Result<(Table, Vec<String>), RunError> {
    let config = ev.config;
    let inputs = ev.inputs.ok_or_else(|| RunError::Config("optimizer comparison needs cost inputs".into()))?;
    let mut settings = CompareSettings::new(&ev.prepared.target, &config.optimizer.sector_column);
    settings.construction = ev.construction()?;
    settings.risk_kind = config.risk_kind()?;
    settings.risk_params = RiskParams::default();
    settings.lambda_tc = config.optimizer.lambda_tc;
    settings.lambda_risk = config.optimizer.lambda_risk;
    settings.solver = SolverSettings {
        max_iters: config.optimizer.max_iters,
        rel_tol: config.optimizer.rel_tol,
    };
    let out = compare_constructions(
        scores,
        &ev.prepared.universe,
        inputs,
        &config.cost_params()?,
        &config.variants()?,
        &settings,
    )
    .map_err(numeric_err("optimizer"))?;
    let mut t = Table::new(
        "optimizer",
        "Portfolio Optimization Comparison",
        &["Method", "Net Sharpe", "Effective N", "Max Position", "Sector Tilts"],
    );
    let mut notes = Vec::new();
    for r in &out.rows {
        t.push(vec![
            Cell::text(r.variant.label()),
            Cell::opt(r.net_sharpe, Format::Fixed(2)),
            Cell::num(r.effective_n, Format::Fixed(1)),
            Cell::num(r.max_position, Format::Pct(2)),
            Cell::num(r.sector_tilts, Format::Pct(2)),
        ]);
        if r.infeasible_dates > 0 || r.unconverged_dates > 0 {
            notes.push(format!(
                "{}: {} infeasible and {} unconverged rebalance dates.",
                r.variant.label(),
                r.infeasible_dates,
                r.unconverged_dates
            ));
        }
    }
    for n in notes {
        t.note(n);
    }
    Ok((t, out.log))
}

/// Decay rows per strategy with daily, unsmoothed construction.
pub fn decay_table(config: &ExperimentConfig, prepared: &Prepared, scored: &Scored) -> Result<Table, RunError> {
    let lags = &config.portfolio.decay_lags;
    let headers: Vec<String> = std::iter::once("Strategy".to_string())
        .chain(lags.iter().map(|l| format!("Lag {l}")))
        .collect();
    let headers: Vec<&str> = headers.iter().map(String::as_str).collect();
    let mut t = Table::new("decay", "Alpha Decay by Execution Lag", &headers);
    for s in &scored.strategies {
        let rows = alpha_decay(&s.scores, &prepared.full, lags, &ConstructionSpec::default()).map_err(numeric_err("decay"))?;
        let mut row = vec![Cell::text(&s.name)];
        row.extend(rows.iter().map(|r| Cell::opt(r.sharpe, Format::Fixed(2))));
        t.push(row);
    }
    t.note("Lag N earns r(t+N+1) on scores formed at t; daily rebalancing without smoothing.");
    Ok(t)
}

pub fn segment_table(ev: &Evaluator, name: &str, scores: &ScorePanel, cap_column: &str) -> Result<Table, RunError> {
    let rep = cap_segment_report(&ev.prepared.universe, scores, cap_column, &ev.prepared.target, &ev.construction()?)
        .map_err(numeric_err("segments"))?;
    let mut t = Table::new(
        "segments",
        "Performance by Market Capitalization Segment",
        &["Strategy", "Small Cap", "Mid Cap", "Large Cap", "Full Universe"],
    );
    t.push(vec![
        Cell::text(name),
        Cell::opt(rep.terciles[0], Format::Fixed(2)),
        Cell::opt(rep.terciles[1], Format::Fixed(2)),
        Cell::opt(rep.terciles[2], Format::Fixed(2)),
        Cell::opt(rep.full, Format::Fixed(2)),
    ]);
    t.note(format!("Gross Sharpe ratios; {} dates had too few names to split.", rep.skipped_dates.len()));
    Ok(t)
}

fn normal_p(t: f64) -> Option<f64> {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::new(0.0, 1.0).ok()?;
    t.is_finite().then(|| 2.0 * (1.0 - n.cdf(t.abs())))
}

pub fn attribution_table(
    config: &ExperimentConfig,
    factors: &FactorPanel,
    names: &[String],
    evals: &[Evaluation],
) -> (Table, Vec<String>) {
    let mut headers = vec!["Strategy", "Alpha", "t", "R2"];
    headers.extend(["Mkt", "SMB", "HML", "RMW", "CMA", "Mom"]);
    let mut t = Table::new("attribution", "Factor Attribution", &headers);
    let shift = config.inference.factor_shift.unwrap_or(config.portfolio.horizon_lag + 1);
    let mut warnings = Vec::new();
    for (name, e) in names.iter().zip(evals) {
        match factor_attribution(&e.net.net, factors, config.inference.nw_lags, shift) {
            Ok(reg) => {
                let mut row = vec![
                    Cell::text(name),
                    Cell::num(reg.alpha_annual, Format::Pct(2)),
                    Cell::Starred(reg.alpha_t.is_finite().then_some(reg.alpha_t), stars(normal_p(reg.alpha_t), FACTOR_STARS)),
                    Cell::num(reg.r2, Format::Pct(1)),
                ];
                for f in FACTOR_NAMES {
                    let (b, tb) = reg.betas.iter().find(|x| x.0 == f).map(|x| (x.1, x.2)).unwrap_or((f64::NAN, f64::NAN));
                    row.push(Cell::Starred(b.is_finite().then_some(b), stars(normal_p(tb), FACTOR_STARS)));
                }
                t.push(row);
            }
            Err(err) => warnings.push(format!("{name}: no factor regression ({err})")),
        }
    }
    t.note(format!(
        "Net daily returns on factors {shift} trading days ahead; HAC({}) t-statistics (*** p<0.01, ** p<0.05, * p<0.10).",
        config.inference.nw_lags
    ));
    (t, warnings)
}

pub fn truth_table(truth: &[SignalSpec]) -> Table {
    let mut t = Table::new("synthetic_truth", "Planted Signal Coefficients", &["Signal", "Beta", "Phi"]);
    for s in truth {
        t.push(vec![
            Cell::text(&s.name),
            Cell::num(s.beta, Format::Fixed(6)),
            Cell::num(s.phi, Format::Fixed(3)),
        ]);
    }
    t
}

/// All report tables and the solver log.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub solver_log: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn run_tables(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let prepared = prepare(config)?;
    let scored = score_strategies(config, &prepared)?;
    let costs = cost_inputs(config, &prepared)?;
    let ev = Evaluator {
        config,
        prepared: &prepared,
        inputs: costs.as_ref().map(|c| &c.0),
        mask: costs.as_ref().and_then(|c| c.1.as_ref()),
    };
    let mut warnings = prepared.warnings.clone();
    warnings.extend(scored.warnings.iter().cloned());
    if let Some(m) = ev.mask {
        warnings.push(format!("liquidity screen excluded {} rows", m.excluded()));
    }

    let spec = ev.construction()?;
    let names: Vec<String> = scored.strategies.iter().map(|s| s.name.clone()).collect();
    let n_features: Vec<usize> = scored.strategies.iter().map(|s| s.n_features).collect();
    let evals = scored
        .strategies
        .iter()
        .map(|s| ev.evaluate(&s.scores, &spec))
        .collect::<Result<Vec<_>, _>>()?;
    let (inf, inf_warnings) = inference(config, &names, &evals);
    warnings.extend(inf_warnings);

    let mut tables = vec![
        panel_a(&names, &evals, &inf),
        panel_b(&names, &n_features, &evals),
        panel_c(&names, &evals),
        inference_table(&inf, config.inference.level),
    ];
    let primary = config.primary_name();
    let p_idx = names
        .iter()
        .position(|n| *n == primary)
        .ok_or_else(|| RunError::Config(format!("primary strategy {primary:?} not found")))?;
    let p_scores = &scored.strategies[p_idx].scores;
    if let Some(factors) = &prepared.factors {
        let (t, w) = attribution_table(config, factors, &names, &evals);
        tables.push(t);
        warnings.extend(w);
    }
    if let Some(cap) = &config.segments.cap_column {
        tables.push(segment_table(&ev, &primary, p_scores, cap)?);
    }
    tables.push(cost_table(&evals[p_idx], config.costs.aum));
    tables.push(sweep_table(&smoothing_sweep(&ev, p_scores)?));
    let mut solver_log = Vec::new();
    if config.optimizer.enabled {
        let (t, log) = optimizer_table(&ev, p_scores)?;
        tables.push(t);
        solver_log = log;
    }
    tables.push(decay_table(config, &prepared, &scored)?);
    if let Some(truth) = &prepared.truth {
        tables.push(truth_table(truth));
    }
    Ok(RunOutput {
        tables,
        solver_log,
        warnings,
    })
}

/// Score-stage helper for the single-table verbs.
pub fn prepare_and_score(config: &ExperimentConfig) -> Result<(Prepared, Scored), RunError> {
    let prepared = prepare(config)?;
    let scored = score_strategies(config, &prepared)?;
    Ok((prepared, scored))
}

/// Manifest feature names plus the raw columns they read, for reporting.
pub fn feature_columns(features: &[NamedFeature]) -> Vec<(String, Vec<String>)> {
    features
        .iter()
        .map(|f| (f.name.clone(), f.expr.columns().into_iter().collect()))
        .collect()
}

/// Reads a manifest file directly.
pub fn manifest_from_path(path: &std::path::Path) -> Result<Vec<NamedFeature>, RunError> {
    load_manifest(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
}
