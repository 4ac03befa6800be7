//! TOML experiment configuration.
//!
//! Relative paths resolve against the directory holding the config file.
//! Every section except `[[strategies]]` is optional.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::synth::{SignalSpec, SyntheticSpec};
use super::RunError;
use crate::frictions::{CostColumns, CostMode, CostParams};
use crate::learner::{BoostParams, TrainWindow};
use crate::optimizer::{RiskKind, Variant};
use crate::panel::Date;
use crate::portfolio::Rebalance;

/// `splitmix64(root ^ fnv1a(name))`: independent sub-streams per stage.
pub fn derive_seed(root: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = (root ^ h).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub synthetic: SyntheticSection,
    #[serde(default)]
    pub universe: UniverseSection,
    #[serde(default)]
    pub features: FeatureSection,
    #[serde(default)]
    pub strategies: Vec<StrategySection>,
    #[serde(default)]
    pub learner: LearnerSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub portfolio: PortfolioSection,
    #[serde(default)]
    pub costs: CostSection,
    #[serde(default)]
    pub inference: InferenceSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub segments: SegmentSection,
    /// Directory the config was loaded from.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("report")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Long-format panel file; a synthetic panel is generated when absent.
    pub panel: Option<PathBuf>,
    pub id_column: String,
    pub date_column: String,
    /// Price column used to derive returns when `return_column` is absent
    /// from the file.
    pub price_column: String,
    pub return_column: String,
    pub label_columns: Vec<String>,
    pub factors: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> DataSection {
        DataSection {
            panel: None,
            id_column: "id".into(),
            date_column: "date".into(),
            price_column: "close".into(),
            return_column: "ret".into(),
            label_columns: vec!["sector".into()],
            factors: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalEntry {
    pub name: String,
    pub beta: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub n_securities: usize,
    pub n_days: usize,
    pub start: String,
    pub signals: Vec<SignalEntry>,
    pub noise_vol: f64,
    pub market_vol: f64,
    pub sector_vol: f64,
    pub n_sectors: usize,
    pub median_cap: f64,
    pub turnover_rate: f64,
    pub half_spread_bps: f64,
}

impl Default for SyntheticSection {
    fn default() -> SyntheticSection {
        let d = SyntheticSpec::default();
        SyntheticSection {
            n_securities: d.n_securities,
            n_days: d.n_days,
            start: d.start.to_string(),
            signals: d
                .signals
                .iter()
                .map(|s| SignalEntry {
                    name: s.name.clone(),
                    beta: s.beta,
                    phi: s.phi,
                })
                .collect(),
            noise_vol: d.noise_vol,
            market_vol: d.market_vol,
            sector_vol: d.sector_vol,
            n_sectors: d.n_sectors,
            median_cap: d.median_cap,
            turnover_rate: d.turnover_rate,
            half_spread_bps: d.half_spread_bps,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UniverseSection {
    /// Largest names by cap kept per date; 0 keeps everyone.
    pub top_k: usize,
    pub cap_column: String,
    /// Numeric columns; a non-zero value excludes the row.
    pub exclusion_flags: Vec<String>,
}

impl Default for UniverseSection {
    fn default() -> UniverseSection {
        UniverseSection {
            top_k: 0,
            cap_column: "cap".into(),
            exclusion_flags: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSection {
    pub manifest: Option<PathBuf>,
    /// Extra `name = expression` lines.
    pub inline: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    pub name: String,
    /// Learner inputs: manifest features or raw panel columns.
    #[serde(default)]
    pub features: Vec<String>,
    /// Precomputed scores (`id,date,score`) used instead of a learner.
    #[serde(default)]
    pub scores: Option<PathBuf>,
    #[serde(default = "default_score_column")]
    pub score_column: String,
}

fn default_score_column() -> String {
    "score".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerSection {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf_count: usize,
    pub l2_leaf_penalty: f64,
    pub subsample_fraction: f64,
}

impl Default for LearnerSection {
    fn default() -> LearnerSection {
        let d = BoostParams::default();
        LearnerSection {
            n_trees: d.n_trees,
            max_depth: d.max_depth,
            learning_rate: d.learning_rate,
            min_leaf_count: d.min_leaf_count,
            l2_leaf_penalty: d.l2_leaf_penalty,
            subsample_fraction: d.subsample_fraction,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub train_start: Option<String>,
    pub train_end: Option<String>,
    pub test_start: Option<String>,
    pub test_end: Option<String>,
    /// Share of the calendar used for training when explicit dates are absent.
    pub train_fraction: f64,
    pub refit_interval: usize,
    pub window: String,
}

impl Default for ScheduleSection {
    fn default() -> ScheduleSection {
        ScheduleSection {
            train_start: None,
            train_end: None,
            test_start: None,
            test_end: None,
            train_fraction: 0.4,
            refit_interval: 63,
            window: "expanding".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PortfolioSection {
    /// Evaluation target is `r_{t+lag+1}`.
    pub horizon_lag: usize,
    pub smoothing_window: usize,
    pub rebalance: String,
    pub smoothing_sweep: Vec<usize>,
    pub decay_lags: Vec<usize>,
    /// Name of the averaged strategy; omitted when empty or with fewer than
    /// two strategies.
    pub ensemble: String,
    /// Strategy used for the cost, smoothing, optimizer, decay-summary and
    /// segment tables; defaults to the ensemble or the last strategy.
    pub primary: Option<String>,
    /// Compounded (true) or summed total return.
    pub compounded_total: bool,
}

impl Default for PortfolioSection {
    fn default() -> PortfolioSection {
        PortfolioSection {
            horizon_lag: 1,
            smoothing_window: 1,
            rebalance: "daily".into(),
            smoothing_sweep: vec![1, 5, 10, 21],
            decay_lags: crate::analytics::DEFAULT_DECAY_LAGS.to_vec(),
            ensemble: "Combined".into(),
            primary: None,
            compounded_total: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    /// `position` or `static`.
    pub mode: String,
    pub impact_k: f64,
    pub static_cost_bps: f64,
    pub aum: f64,
    pub vol_window: usize,
    pub adv_window: usize,
    pub round_trip: bool,
    pub liquidity_filter: bool,
    pub min_adv: f64,
    pub max_spread_bps: f64,
    pub bid_column: String,
    pub ask_column: String,
    pub dollar_volume_column: String,
}

impl Default for CostSection {
    fn default() -> CostSection {
        let d = CostParams::default();
        let c = CostColumns::default();
        CostSection {
            mode: "position".into(),
            impact_k: d.impact_k,
            static_cost_bps: d.static_cost_bps,
            aum: d.aum,
            vol_window: d.vol_window,
            adv_window: d.adv_window,
            round_trip: d.round_trip,
            liquidity_filter: false,
            min_adv: d.min_adv,
            max_spread_bps: d.max_spread_bps,
            bid_column: c.bid,
            ask_column: c.ask,
            dollar_volume_column: c.dollar_volume,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceSection {
    pub nw_lags: usize,
    pub bootstrap_resamples: usize,
    pub level: f64,
    pub mean_block: Option<f64>,
    /// Factor rows ahead of each strategy date; defaults to `horizon_lag + 1`.
    pub factor_shift: Option<usize>,
}

impl Default for InferenceSection {
    fn default() -> InferenceSection {
        InferenceSection {
            nw_lags: 5,
            bootstrap_resamples: 2000,
            level: 0.95,
            mean_block: None,
            factor_shift: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub enabled: bool,
    pub variants: Vec<String>,
    pub sector_column: String,
    pub risk_model: String,
    pub lambda_tc: f64,
    pub lambda_risk: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for OptimizerSection {
    fn default() -> OptimizerSection {
        OptimizerSection {
            enabled: true,
            variants: vec!["naive".into(), "sector_neutral:0.02".into(), "pure_alpha:0.02".into()],
            sector_column: "sector".into(),
            risk_model: "sector_factor".into(),
            lambda_tc: crate::optimizer::DEFAULT_LAMBDA_TC,
            lambda_risk: crate::optimizer::DEFAULT_LAMBDA_RISK,
            max_iters: 20000,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentSection {
    /// Cap column for the tercile table; the table is skipped when absent.
    pub cap_column: Option<String>,
}

fn config_error(message: impl Into<String>) -> RunError {
    RunError::Config(message.into())
}

fn parse_date(field: &str, text: &str) -> Result<Date, RunError> {
    Date::parse(text).ok_or_else(|| config_error(format!("{field}: bad date {text:?}")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<ExperimentConfig, RunError> {
        let mut config: ExperimentConfig = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        config.base_dir = base_dir.to_path_buf();
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig, RunError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        ExperimentConfig::from_toml(&text, &base)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn seed_for(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }

    pub fn synthetic_spec(&self) -> Result<SyntheticSpec, RunError> {
        let s = &self.synthetic;
        let spec = SyntheticSpec {
            n_securities: s.n_securities,
            n_days: s.n_days,
            start: parse_date("synthetic.start", &s.start)?,
            signals: s
                .signals
                .iter()
                .map(|e| SignalSpec {
                    name: e.name.clone(),
                    beta: e.beta,
                    phi: e.phi,
                })
                .collect(),
            noise_vol: s.noise_vol,
            market_vol: s.market_vol,
            sector_vol: s.sector_vol,
            n_sectors: s.n_sectors,
            median_cap: s.median_cap,
            turnover_rate: s.turnover_rate,
            half_spread_bps: s.half_spread_bps,
            seed: self.seed_for("synthetic"),
        };
        spec.validate().map_err(|m| config_error(format!("synthetic: {m}")))?;
        Ok(spec)
    }

    pub fn boost_params(&self) -> Result<BoostParams, RunError> {
        let l = &self.learner;
        let params = BoostParams {
            n_trees: l.n_trees,
            max_depth: l.max_depth,
            learning_rate: l.learning_rate,
            min_leaf_count: l.min_leaf_count,
            l2_leaf_penalty: l.l2_leaf_penalty,
            subsample_fraction: l.subsample_fraction,
            seed: self.seed_for("learner"),
        };
        params.validate().map_err(|e| config_error(format!("learner: {e}")))?;
        Ok(params)
    }

    pub fn train_window(&self) -> Result<TrainWindow, RunError> {
        match self.schedule.window.to_ascii_lowercase().as_str() {
            "expanding" => Ok(TrainWindow::Expanding),
            "rolling" => Ok(TrainWindow::Rolling),
            other => Err(config_error(format!("schedule.window: unknown window {other:?}"))),
        }
    }

    /// Explicit schedule dates, all four or none.
    pub fn schedule_dates(&self) -> Result<Option<[Date; 4]>, RunError> {
        let s = &self.schedule;
        let fields = [
            ("schedule.train_start", &s.train_start),
            ("schedule.train_end", &s.train_end),
            ("schedule.test_start", &s.test_start),
            ("schedule.test_end", &s.test_end),
        ];
        let given = fields.iter().filter(|f| f.1.is_some()).count();
        match given {
            0 => Ok(None),
            4 => {
                let mut out = [Date::from_ordinal(0); 4];
                for (slot, (name, value)) in out.iter_mut().zip(fields) {
                    *slot = parse_date(name, value.as_deref().unwrap_or_default())?;
                }
                Ok(Some(out))
            }
            _ => Err(config_error("schedule: give all four of train_start, train_end, test_start, test_end or none")),
        }
    }

    pub fn rebalance(&self) -> Result<Rebalance, RunError> {
        Rebalance::parse(&self.portfolio.rebalance)
            .ok_or_else(|| config_error(format!("portfolio.rebalance: unknown frequency {:?}", self.portfolio.rebalance)))
    }

    pub fn cost_params(&self) -> Result<CostParams, RunError> {
        let c = &self.costs;
        let mode = match c.mode.to_ascii_lowercase().as_str() {
            "position" | "position_level" => CostMode::PositionLevel,
            "static" => CostMode::Static,
            other => return Err(config_error(format!("costs.mode: unknown mode {other:?}"))),
        };
        let params = CostParams {
            mode,
            impact_k: c.impact_k,
            static_cost_bps: c.static_cost_bps,
            aum: c.aum,
            vol_window: c.vol_window,
            adv_window: c.adv_window,
            round_trip: c.round_trip,
            min_adv: c.min_adv,
            max_spread_bps: c.max_spread_bps,
        };
        params.validate().map_err(|e| config_error(format!("costs: {e}")))?;
        Ok(params)
    }

    pub fn cost_columns(&self) -> CostColumns {
        CostColumns {
            bid: self.costs.bid_column.clone(),
            ask: self.costs.ask_column.clone(),
            dollar_volume: self.costs.dollar_volume_column.clone(),
            returns: self.data.return_column.clone(),
        }
    }

    pub fn variants(&self) -> Result<Vec<Variant>, RunError> {
        self.optimizer
            .variants
            .iter()
            .map(|v| Variant::parse(v).map_err(|e| config_error(format!("optimizer.variants: {e}"))))
            .collect()
    }

    pub fn risk_kind(&self) -> Result<RiskKind, RunError> {
        RiskKind::parse(&self.optimizer.risk_model)
            .ok_or_else(|| config_error(format!("optimizer.risk_model: unknown model {:?}", self.optimizer.risk_model)))
    }

    /// Checks values that need no data.
    pub fn validate_static(&self) -> Result<(), RunError> {
        if self.strategies.is_empty() {
            return Err(config_error("at least one [[strategies]] entry is required"));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.strategies {
            if !seen.insert(s.name.as_str()) {
                return Err(config_error(format!("duplicate strategy name {:?}", s.name)));
            }
            if s.features.is_empty() == s.scores.is_none() {
                return Err(config_error(format!(
                    "strategy {:?}: give exactly one of `features` or `scores`",
                    s.name
                )));
            }
        }
        if self.portfolio.smoothing_window == 0 || self.portfolio.smoothing_sweep.contains(&0) {
            return Err(config_error("smoothing windows must be at least 1"));
        }
        if !(self.schedule.train_fraction > 0.0 && self.schedule.train_fraction < 1.0) {
            return Err(config_error("schedule.train_fraction must lie in (0, 1)"));
        }
        if self.schedule.refit_interval == 0 {
            return Err(config_error("schedule.refit_interval must be at least 1"));
        }
        if !(self.inference.level > 0.0 && self.inference.level < 1.0) {
            return Err(config_error("inference.level must lie in (0, 1)"));
        }
        if self.inference.bootstrap_resamples == 0 {
            return Err(config_error("inference.bootstrap_resamples must be at least 1"));
        }
        if !(self.optimizer.lambda_tc >= 0.0 && self.optimizer.lambda_risk >= 0.0) {
            return Err(config_error("optimizer lambdas must be non-negative"));
        }
        if let Some(p) = &self.portfolio.primary {
            let known = self.strategies.iter().any(|s| &s.name == p) || (self.has_ensemble() && *p == self.portfolio.ensemble);
            if !known {
                return Err(config_error(format!("portfolio.primary: unknown strategy {p:?}")));
            }
        }
        if self.data.panel.is_none() {
            self.synthetic_spec()?;
        }
        self.boost_params()?;
        self.train_window()?;
        self.schedule_dates()?;
        self.rebalance()?;
        self.cost_params()?;
        self.variants()?;
        self.risk_kind()?;
        Ok(())
    }

    pub fn has_ensemble(&self) -> bool {
        !self.portfolio.ensemble.is_empty() && self.strategies.len() >= 2
    }

    pub fn primary_name(&self) -> String {
        match &self.portfolio.primary {
            Some(p) => p.clone(),
            None if self.has_ensemble() => self.portfolio.ensemble.clone(),
            None => self.strategies.last().map(|s| s.name.clone()).unwrap_or_default(),
        }
    }
}
