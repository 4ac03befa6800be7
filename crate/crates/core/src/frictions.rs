//! Transaction costs, liquidity screening and turnover.
//!
//! One-way cost per unit of weight traded in name `i`:
//!
//! ```text
//! c_i = (ask - bid) / (2 mid)  +  k sigma_i sqrt(Q_i / ADV_i),    Q_i = |dw_i| AUM
//! ```
//!
//! with `sigma_i` the trailing 20-day volatility of log returns and `ADV_i`
//! the trailing 21-day median dollar volume. Daily net return and turnover:
//!
//! ```text
//! net_t = gross_t - sum_i |w_{i,t} - w_{i,t-1}| c_i        T_t = sum_i |w_{i,t} - w_{i,t-1}|
//! ```

use std::sync::Arc;

use thiserror::Error;

use crate::dsl::RollingStat;
use crate::panel::{Date, Panel, PanelError, RowIndex, SecurityId};
use crate::portfolio::{ReturnSeries, WeightBook};
use crate::stats;

#[derive(Debug, Error)]
pub enum FrictionError {
    #[error("invalid cost parameters: {0}")]
    InvalidParams(String),
    #[error("break-even cost undefined: mean turnover is zero")]
    ZeroTurnover,
    #[error("gross series and turnover differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMode {
    /// Flat `static_cost_bps` per unit of turnover.
    Static,
    /// Half-spread plus square-root impact per name.
    PositionLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostParams {
    pub mode: CostMode,
    pub impact_k: f64,
    /// Flat cost in static mode, and the fallback for names without cost inputs.
    pub static_cost_bps: f64,
    pub aum: f64,
    pub vol_window: usize,
    pub adv_window: usize,
    /// Charge twice the one-way cost on every trade.
    pub round_trip: bool,
    /// Liquidity screen: minimum median dollar volume.
    pub min_adv: f64,
    /// Liquidity screen: maximum full quoted spread in bps of mid.
    pub max_spread_bps: f64,
}

impl Default for CostParams {
    fn default() -> CostParams {
        CostParams {
            mode: CostMode::PositionLevel,
            impact_k: 0.3,
            static_cost_bps: 3.0,
            aum: 1e8,
            vol_window: 20,
            adv_window: 21,
            round_trip: false,
            min_adv: 1e6,
            max_spread_bps: 50.0,
        }
    }
}

impl CostParams {
    /// Impact coefficient 0.3.
    pub fn preset_k030() -> CostParams {
        CostParams::default()
    }

    /// Impact coefficient 0.2.
    pub fn preset_k020() -> CostParams {
        CostParams {
            impact_k: 0.2,
            ..CostParams::default()
        }
    }

    pub fn static_bps(bps: f64) -> CostParams {
        CostParams {
            mode: CostMode::Static,
            static_cost_bps: bps,
            ..CostParams::default()
        }
    }

    pub fn validate(&self) -> Result<(), FrictionError> {
        let fail = |m: &str| Err(FrictionError::InvalidParams(m.to_string()));
        if !(self.impact_k >= 0.0) {
            return fail("impact_k must be non-negative");
        }
        if !(self.aum > 0.0) {
            return fail("aum must be positive");
        }
        if !(self.static_cost_bps >= 0.0) {
            return fail("static_cost_bps must be non-negative");
        }
        if self.vol_window < 2 || self.adv_window == 0 {
            return fail("vol_window must be at least 2 and adv_window at least 1");
        }
        Ok(())
    }
}

/// Half the quoted spread as a fraction of mid; `None` for invalid quotes.
pub fn spread_cost(bid: f64, ask: f64) -> Option<f64> {
    if !(bid > 0.0) || !(ask >= bid) {
        return None;
    }
    let mid = (ask + bid) / 2.0;
    Some((ask - bid) / (2.0 * mid))
}

/// `k sigma sqrt(Q / ADV)`; `None` when ADV is not positive.
pub fn impact_cost(params: &CostParams, sigma: f64, q_dollars: f64, adv_dollars: f64) -> Option<f64> {
    if !(adv_dollars > 0.0) || sigma.is_nan() || q_dollars.is_nan() {
        return None;
    }
    Some(params.impact_k * sigma * (q_dollars.abs() / adv_dollars).sqrt())
}

/// Panel columns read by [`CostInputs::from_panel`].
#[derive(Debug, Clone, PartialEq)]
pub struct CostColumns {
    pub bid: String,
    pub ask: String,
    pub dollar_volume: String,
    pub returns: String,
}

impl Default for CostColumns {
    fn default() -> CostColumns {
        CostColumns {
            bid: "bid".into(),
            ask: "ask".into(),
            dollar_volume: "dollar_volume".into(),
            returns: crate::panel::RETURN_COLUMN.into(),
        }
    }
}

/// Per-row cost inputs aligned with a panel.
#[derive(Debug, Clone)]
pub struct CostInputs {
    pub index: Arc<RowIndex>,
    /// Half-spread fraction.
    pub half_spread: Vec<f64>,
    pub sigma: Vec<f64>,
    pub adv: Vec<f64>,
    /// Rows with unusable quotes.
    pub bad_quotes: usize,
}

fn rolling_median(x: &[f64], window: usize) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let start = (j + 1).saturating_sub(window);
            let present: Vec<f64> = x[start..=j].iter().copied().filter(|v| !v.is_nan()).collect();
            if present.len() < window {
                f64::NAN
            } else {
                stats::median(&present)
            }
        })
        .collect()
}

impl CostInputs {
    pub fn from_panel(panel: &Panel, params: &CostParams, columns: &CostColumns) -> Result<CostInputs, FrictionError> {
        params.validate()?;
        let bid = panel.column(&columns.bid)?;
        let ask = panel.column(&columns.ask)?;
        let dv = panel.column(&columns.dollar_volume)?;
        let ret = panel.column(&columns.returns)?;
        let mut bad_quotes = 0;
        let half_spread = bid
            .iter()
            .zip(ask)
            .map(|(&b, &a)| {
                if b.is_nan() || a.is_nan() {
                    return f64::NAN;
                }
                spread_cost(b, a).unwrap_or_else(|| {
                    bad_quotes += 1;
                    f64::NAN
                })
            })
            .collect();
        let mut sigma = Vec::with_capacity(panel.len());
        let mut adv = Vec::with_capacity(panel.len());
        for block in panel.index().blocks() {
            let rows = block.rows.clone();
            sigma.extend(crate::dsl::rolling_window(
                &ret[rows.clone()],
                RollingStat::Std { sample: true },
                params.vol_window,
                params.vol_window,
            ));
            adv.extend(rolling_median(&dv[rows], params.adv_window));
        }
        Ok(CostInputs {
            index: panel.index().clone(),
            half_spread,
            sigma,
            adv,
            bad_quotes,
        })
    }

    pub fn row(&self, id: &str, date: Date) -> Option<usize> {
        self.index.find(id, date)
    }
}

/// Names passing the liquidity screen, keyed like the cost inputs.
#[derive(Debug, Clone)]
pub struct LiquidityMask {
    pub index: Arc<RowIndex>,
    pub keep: Vec<bool>,
}

impl LiquidityMask {
    /// Rows absent from the mask's panel are not tradable.
    pub fn allows(&self, id: &str, date: Date) -> bool {
        self.index.find(id, date).is_some_and(|r| self.keep[r])
    }

    pub fn excluded(&self) -> usize {
        self.keep.iter().filter(|k| !**k).count()
    }
}

/// Excludes a name when its median dollar volume is below `min_adv` or its
/// full quoted spread exceeds `max_spread_bps`. Unknown inputs do not exclude.
pub fn liquidity_filter(inputs: &CostInputs, params: &CostParams) -> LiquidityMask {
    let keep = inputs
        .adv
        .iter()
        .zip(&inputs.half_spread)
        .map(|(&adv, &hs)| !(adv < params.min_adv) && !(2.0 * hs * 1e4 > params.max_spread_bps))
        .collect();
    LiquidityMask {
        index: inputs.index.clone(),
        keep,
    }
}

/// Weight changes per book entry; names absent on either side count as zero.
pub fn trades(book: &WeightBook) -> Vec<Vec<(SecurityId, f64)>> {
    let mut out = Vec::with_capacity(book.len());
    let empty = Vec::new();
    let mut prev: &Vec<(SecurityId, f64)> = &empty;
    for e in book.entries() {
        let cur = &e.positions;
        let (mut i, mut j) = (0, 0);
        let mut delta = Vec::new();
        while i < cur.len() || j < prev.len() {
            let order = match (cur.get(i), prev.get(j)) {
                (Some(a), Some(b)) => a.0.cmp(&b.0),
                (Some(_), None) => std::cmp::Ordering::Less,
                _ => std::cmp::Ordering::Greater,
            };
            let (id, d) = match order {
                std::cmp::Ordering::Less => {
                    i += 1;
                    (cur[i - 1].0.clone(), cur[i - 1].1)
                }
                std::cmp::Ordering::Greater => {
                    j += 1;
                    (prev[j - 1].0.clone(), -prev[j - 1].1)
                }
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                    (cur[i - 1].0.clone(), cur[i - 1].1 - prev[j - 1].1)
                }
            };
            if d != 0.0 {
                delta.push((id, d));
            }
        }
        out.push(delta);
        prev = cur;
    }
    out
}

/// `T_t = sum_i |dw_i|`; the first entry's turnover is its gross exposure.
pub fn turnover(book: &WeightBook) -> Vec<f64> {
    trades(book)
        .iter()
        .map(|t| t.iter().map(|(_, d)| d.abs()).sum())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trade {
    pub date: Date,
    pub id: SecurityId,
    pub delta: f64,
    pub spread_bps: f64,
    pub impact_bps: f64,
    /// Charged cost per unit traded, after the round-trip multiplier.
    pub cost_bps: f64,
    /// Cost inputs were missing and the flat rate was charged.
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct NetReturns {
    pub net: ReturnSeries,
    /// Cost drag per date.
    pub cost: Vec<f64>,
    pub turnover: Vec<f64>,
    pub trades: Vec<Trade>,
}

impl NetReturns {
    pub fn fallback_trades(&self) -> usize {
        self.trades.iter().filter(|t| t.fallback).count()
    }

    /// Traded-notional weighted averages of (spread, impact, charged) in bps.
    pub fn average_cost_bps(&self) -> (f64, f64, f64) {
        let notional: f64 = self.trades.iter().map(|t| t.delta.abs()).sum();
        if notional <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let avg = |f: fn(&Trade) -> f64| self.trades.iter().map(|t| t.delta.abs() * f(t)).sum::<f64>() / notional;
        (avg(|t| t.spread_bps), avg(|t| t.impact_bps), avg(|t| t.cost_bps))
    }

    pub fn write_ledger(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "date,id,delta_w,spread_bps,impact_bps,cost_bps,fallback")?;
        for t in &self.trades {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                t.date, t.id, t.delta, t.spread_bps, t.impact_bps, t.cost_bps, t.fallback
            )?;
        }
        Ok(())
    }
}

/// Subtracts trading costs of `book` from `gross`. Book entries are matched
/// to gross returns by date; dates missing from the book carry no trades.
pub fn net_returns(
    gross: &ReturnSeries,
    book: &WeightBook,
    inputs: Option<&CostInputs>,
    params: &CostParams,
) -> Result<NetReturns, FrictionError> {
    params.validate()?;
    let deltas = trades(book);
    let multiplier = if params.round_trip { 2.0 } else { 1.0 };
    let mut net = Vec::with_capacity(gross.len());
    let mut cost = Vec::with_capacity(gross.len());
    let mut turn = Vec::with_capacity(gross.len());
    let mut ledger = Vec::new();
    for (date, g) in gross.dates.iter().zip(&gross.values) {
        let Ok(k) = book.entries().binary_search_by_key(date, |e| e.date) else {
            net.push(*g);
            cost.push(0.0);
            turn.push(0.0);
            continue;
        };
        let mut drag = 0.0;
        let mut t_sum = 0.0;
        for (id, d) in &deltas[k] {
            let traded = d.abs();
            t_sum += traded;
            let row = inputs.and_then(|inp| inp.row(id, *date).map(|r| (inp, r)));
            let position_level = match (params.mode, row) {
                (CostMode::PositionLevel, Some((inp, r))) => {
                    let hs = inp.half_spread[r];
                    impact_cost(params, inp.sigma[r], traded * params.aum, inp.adv[r])
                        .filter(|_| !hs.is_nan())
                        .map(|imp| (hs, imp))
                }
                _ => None,
            };
            let (spread, impact, fallback) = match position_level {
                Some((hs, imp)) => (hs, imp, false),
                None => (params.static_cost_bps / 1e4, 0.0, params.mode == CostMode::PositionLevel),
            };
            let c = (spread + impact) * multiplier;
            drag += traded * c;
            ledger.push(Trade {
                date: *date,
                id: id.clone(),
                delta: *d,
                spread_bps: spread * 1e4,
                impact_bps: impact * 1e4,
                cost_bps: c * 1e4,
                fallback,
            });
        }
        net.push(g - drag);
        cost.push(drag);
        turn.push(t_sum);
    }
    Ok(NetReturns {
        net: ReturnSeries::new(gross.dates.clone(), net),
        cost,
        turnover: turn,
        trades: ledger,
    })
}

/// Constant one-way cost in bps at which mean net return is zero:
/// `mean(gross) / mean(T) * 1e4`.
pub fn break_even_cost(gross: &[f64], turnover: &[f64]) -> Result<f64, FrictionError> {
    if gross.len() != turnover.len() {
        return Err(FrictionError::LengthMismatch(gross.len(), turnover.len()));
    }
    let mt = stats::mean(turnover);
    if !(mt > 0.0) {
        return Err(FrictionError::ZeroTurnover);
    }
    Ok(stats::mean(gross) / mt * 1e4)
}
