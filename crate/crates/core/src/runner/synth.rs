//! Synthetic panels with planted predictive signals.
//!
//! For security `i` on business day `t`, each signal follows a unit-variance
//! AR(1) and drives the next day's log return:
//!
//! ```text
//! x_{k,i,t}   = phi_k x_{k,i,t-1} + sqrt(1 - phi_k^2) e_{k,i,t}
//! r_{i,t+1}   = sum_k beta_k x_{k,i,t} + m_{t+1} + s_{j(i),t+1} + noise_vol u_{i,t+1}
//! ```
//!
//! so `E[r_{i,t+1} | x_{.,i,t}] = sum_k beta_k x_{k,i,t}`. Prices follow the
//! geometric walk of `r`; cap, dollar volume and quotes are derived from price.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::panel::{Date, Panel, PanelError};

/// Column names written by [`generate_synthetic`].
pub mod columns {
    pub const CLOSE: &str = "close";
    pub const RETURN: &str = "ret";
    pub const CAP: &str = "cap";
    pub const DOLLAR_VOLUME: &str = "dollar_volume";
    pub const BID: &str = "bid";
    pub const ASK: &str = "ask";
    pub const SECTOR: &str = "sector";
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub name: String,
    pub beta: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_securities: usize,
    pub n_days: usize,
    pub start: Date,
    pub signals: Vec<SignalSpec>,
    /// Daily idiosyncratic return volatility.
    pub noise_vol: f64,
    pub market_vol: f64,
    pub sector_vol: f64,
    pub n_sectors: usize,
    /// Median market cap in dollars.
    pub median_cap: f64,
    /// Median daily dollar volume as a fraction of cap.
    pub turnover_rate: f64,
    /// Half-spread in bps at the median cap.
    pub half_spread_bps: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> SyntheticSpec {
        SyntheticSpec {
            n_securities: 50,
            n_days: 500,
            start: Date::from_ymd(2019, 1, 2).expect("valid date"),
            signals: vec![
                SignalSpec { name: "signal_a".into(), beta: 0.002, phi: 0.9 },
                SignalSpec { name: "signal_b".into(), beta: 0.001, phi: 0.5 },
            ],
            noise_vol: 0.02,
            market_vol: 0.01,
            sector_vol: 0.005,
            n_sectors: 5,
            median_cap: 5e9,
            turnover_rate: 0.005,
            half_spread_bps: 3.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_securities == 0 || self.n_days < 2 {
            return Err("synthetic panel needs at least one security and two days".into());
        }
        if self.n_sectors == 0 {
            return Err("n_sectors must be at least 1".into());
        }
        for s in &self.signals {
            if !(s.phi > -1.0 && s.phi < 1.0) {
                return Err(format!("signal {:?}: phi must lie in (-1, 1)", s.name));
            }
            if !s.beta.is_finite() {
                return Err(format!("signal {:?}: beta must be finite", s.name));
            }
        }
        let vols = [self.noise_vol, self.market_vol, self.sector_vol, self.half_spread_bps];
        if vols.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err("volatilities and spreads must be finite and non-negative".into());
        }
        if !(self.median_cap > 0.0 && self.turnover_rate > 0.0) {
            return Err("median_cap and turnover_rate must be positive".into());
        }
        Ok(())
    }
}

/// Generated panel plus the planted coefficients.
#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub panel: Panel,
    pub truth: Vec<SignalSpec>,
}

/// Monday-to-Friday dates starting on or after `start`.
pub fn business_days(start: Date, n: usize) -> Vec<Date> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !d.is_weekend() {
            out.push(d);
        }
        d = d.add_days(1);
    }
    out
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Deterministic in `spec` (including its seed).
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticPanel, PanelError> {
    spec.validate().map_err(PanelError::InvalidSpec)?;
    let n = spec.n_securities;
    let days = business_days(spec.start, spec.n_days);
    let t_len = days.len();
    let k = spec.signals.len();

    // Common shocks come from stream 0; security i draws from stream i + 1.
    let mut common = ChaCha8Rng::seed_from_u64(spec.seed);
    common.set_stream(0);
    let market: Vec<f64> = (0..t_len).map(|_| spec.market_vol * normal(&mut common)).collect();
    let sector_shock: Vec<Vec<f64>> = (0..spec.n_sectors)
        .map(|_| (0..t_len).map(|_| spec.sector_vol * normal(&mut common)).collect())
        .collect();

    let rows = n * t_len;
    let mut ids = Vec::with_capacity(rows);
    let mut dates = Vec::with_capacity(rows);
    let mut signal_cols = vec![Vec::with_capacity(rows); k];
    let mut close = Vec::with_capacity(rows);
    let mut ret = Vec::with_capacity(rows);
    let mut cap = Vec::with_capacity(rows);
    let mut dollar_volume = Vec::with_capacity(rows);
    let mut bid = Vec::with_capacity(rows);
    let mut ask = Vec::with_capacity(rows);
    let mut sector = Vec::with_capacity(rows);
    let width = (n.max(2) - 1).to_string().len();
    let sector_names: Vec<Arc<str>> = (0..spec.n_sectors).map(|j| Arc::from(format!("SEC{j:02}"))).collect();

    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64 + 1);
        let id = format!("S{i:0width$}");
        let j = i % spec.n_sectors;
        let shares = spec.median_cap / 100.0 * (0.8 * normal(&mut rng)).exp();
        let mut x: Vec<f64> = (0..k).map(|_| normal(&mut rng)).collect();
        let mut price = 100.0;
        let mut prev_x = x.clone();
        for t in 0..t_len {
            let r = if t == 0 {
                f64::NAN
            } else {
                let expected: f64 = spec.signals.iter().zip(&prev_x).map(|(s, v)| s.beta * v).sum();
                expected + market[t] + sector_shock[j][t] + spec.noise_vol * normal(&mut rng)
            };
            if t > 0 {
                price *= r.exp();
                for (c, s) in spec.signals.iter().enumerate() {
                    x[c] = s.phi * x[c] + (1.0 - s.phi * s.phi).sqrt() * normal(&mut rng);
                }
            }
            let c = shares * price;
            let hs = spec.half_spread_bps * 1e-4 * (spec.median_cap / c).powf(0.3);
            ids.push(id.clone());
            dates.push(days[t]);
            for (col, v) in signal_cols.iter_mut().zip(&x) {
                col.push(*v);
            }
            close.push(price);
            ret.push(r);
            cap.push(c);
            dollar_volume.push(c * spec.turnover_rate * (0.4 * normal(&mut rng)).exp());
            bid.push(price * (1.0 - hs));
            ask.push(price * (1.0 + hs));
            sector.push(Some(sector_names[j].clone()));
            prev_x.copy_from_slice(&x);
        }
    }

    let mut cols: Vec<(String, Vec<f64>)> = spec.signals.iter().map(|s| s.name.clone()).zip(signal_cols).collect();
    cols.push((columns::CLOSE.into(), close));
    cols.push((columns::RETURN.into(), ret));
    cols.push((columns::CAP.into(), cap));
    cols.push((columns::DOLLAR_VOLUME.into(), dollar_volume));
    cols.push((columns::BID.into(), bid));
    cols.push((columns::ASK.into(), ask));
    let panel = Panel::from_rows(&ids, &dates, cols)?.with_labels(columns::SECTOR, sector)?;
    Ok(SyntheticPanel {
        panel,
        truth: spec.signals.clone(),
    })
}
