//! Seeded synthetic ETF panel.
//!
//! Each symbol follows a GJR-GARCH(1,1) variance recursion driven by unit-variance Student-t
//! shocks that load on a common market factor. A shared two-state regime chain scales returns
//! up during stressed spells. OHLC bars are built around the close path so they are always
//! internally consistent. The VIX proxy is a scaled cross-sectional rolling volatility.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use super::{Bar, MacroSnapshot, PanelDataset, SymbolSeries, TENOR_LONG, TENOR_SHORT};

const DEFAULT_SYMBOLS: [&str; 6] = ["SPY", "QQQ", "IWM", "EEM", "GLD", "TLT"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_symbols: usize,
    pub n_days: usize,
    pub seed: u64,
    pub start_date: NaiveDate,
    /// Student-t degrees of freedom of the shocks.
    pub nu: f64,
    /// Daily probability of entering / leaving the stressed regime.
    pub p_enter_stress: f64,
    pub p_exit_stress: f64,
    /// Return multiplier while stressed.
    pub stress_scale: f64,
    /// Probability that the yield curve is missing on a given day.
    pub macro_missing_prob: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_symbols: 6,
            n_days: 2000,
            seed: 7,
            start_date: NaiveDate::from_ymd_opt(2015, 1, 2).expect("valid date"),
            nu: 6.0,
            p_enter_stress: 0.01,
            p_exit_stress: 0.05,
            stress_scale: 1.6,
            macro_missing_prob: 0.11,
        }
    }
}

struct SymbolProcess {
    name: String,
    omega: f64,
    alpha: f64,
    gamma: f64,
    beta: f64,
    loading: f64,
    drift: f64,
    start_price: f64,
    base_volume: f64,
}

fn symbol_process(i: usize) -> SymbolProcess {
    let name = DEFAULT_SYMBOLS
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("SYM{}", i + 1));
    // Annualised vol between ~14% and ~30%, cycling over the default universe.
    let daily_vol = [0.011, 0.014, 0.016, 0.015, 0.009, 0.010][i % 6] * (1.0 + 0.05 * (i / 6) as f64);
    let alpha = [0.04, 0.05, 0.045, 0.06, 0.05, 0.035][i % 6];
    let gamma = [0.10, 0.11, 0.09, 0.08, 0.02, 0.03][i % 6];
    let beta = 0.965 - alpha - gamma / 2.0;
    let persistence = alpha + gamma / 2.0 + beta;
    let loading = [0.85, 0.8, 0.8, 0.6, 0.05, -0.3][i % 6];
    SymbolProcess {
        name,
        omega: daily_vol * daily_vol * (1.0 - persistence),
        alpha,
        gamma,
        beta,
        loading,
        drift: 0.0002,
        start_price: 50.0 + 30.0 * i as f64,
        base_volume: 2.0e6 * (1.0 + i as f64),
    }
}

fn trading_calendar(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

/// Generates a deterministic panel (same config, same bytes).
pub fn generate_synthetic_panel(cfg: &SyntheticConfig) -> PanelDataset {
    let n_sym = cfg.n_symbols.max(1);
    let n = cfg.n_days;
    let dates = trading_calendar(cfg.start_date, n);
    let procs: Vec<SymbolProcess> = (0..n_sym).map(symbol_process).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let student = StudentT::new(cfg.nu).expect("nu > 0");
    let t_scale = ((cfg.nu - 2.0) / cfg.nu).sqrt();
    let shock = |rng: &mut ChaCha8Rng| -> f64 {
        let z: f64 = student.sample(rng);
        z * t_scale
    };

    let mut var: Vec<f64> = procs
        .iter()
        .map(|p| p.omega / (1.0 - p.alpha - p.gamma / 2.0 - p.beta))
        .collect();
    let mut eps_prev = vec![0.0f64; n_sym];
    let mut close: Vec<f64> = procs.iter().map(|p| p.start_price).collect();
    let mut bars: Vec<Vec<Bar>> = vec![Vec::with_capacity(n); n_sym];
    let mut stressed = false;
    let mut returns: Vec<Vec<f64>> = vec![Vec::with_capacity(n); n_sym];

    let mut y_short = 2.0f64;
    let mut y_long = 3.0f64;
    let mut macros = Vec::with_capacity(n);

    for (t, &date) in dates.iter().enumerate() {
        if t > 0 {
            let flip: f64 = rng.random();
            stressed = if stressed {
                flip >= cfg.p_exit_stress
            } else {
                flip < cfg.p_enter_stress
            };
        }
        let regime = if stressed { cfg.stress_scale } else { 1.0 };
        let factor = shock(&mut rng);

        for (i, p) in procs.iter().enumerate() {
            let idio = shock(&mut rng);
            let gap_noise: f64 = StandardNormal.sample(&mut rng);
            let hi_noise: f64 = StandardNormal.sample(&mut rng);
            let lo_noise: f64 = StandardNormal.sample(&mut rng);
            let vol_noise: f64 = StandardNormal.sample(&mut rng);

            if t == 0 {
                let c = close[i];
                bars[i].push(Bar {
                    symbol: p.name.clone(),
                    date,
                    open: Some(c),
                    high: Some(c * 1.005),
                    low: Some(c * 0.995),
                    close: Some(c),
                    volume: Some(p.base_volume.round()),
                    ret: None,
                });
                continue;
            }

            let prev = eps_prev[i];
            let lev = if prev < 0.0 { p.gamma } else { 0.0 };
            var[i] = p.omega + (p.alpha + lev) * prev * prev + p.beta * var[i];
            let sigma = var[i].sqrt();
            let z = p.loading * factor + (1.0 - p.loading * p.loading).sqrt() * idio;
            let eps = sigma * z;
            eps_prev[i] = eps;
            let r = (p.drift + regime * eps).max(-0.5);

            let prev_close = close[i];
            let c = prev_close * (1.0 + r);
            let o = prev_close * (1.0 + 0.25 * regime * sigma * gap_noise).max(0.5);
            let h = o.max(c) * (1.0 + 0.5 * regime * sigma * hi_noise.abs());
            let l = o.min(c) * (1.0 - (0.5 * regime * sigma * lo_noise.abs()).min(0.5));
            let volume = p.base_volume * (0.3 * vol_noise + 0.6 * (r.abs() / sigma).min(6.0)).exp();
            close[i] = c;
            let ret = c / prev_close - 1.0;
            returns[i].push(ret);
            bars[i].push(Bar {
                symbol: p.name.clone(),
                date,
                open: Some(o),
                high: Some(h),
                low: Some(l),
                close: Some(c),
                volume: Some(volume.round()),
                ret: Some(ret),
            });
        }

        let dy_s: f64 = StandardNormal.sample(&mut rng);
        let dy_l: f64 = StandardNormal.sample(&mut rng);
        y_short = (y_short + 0.02 * dy_s).max(0.0);
        y_long = (y_long + 0.02 * dy_l).max(0.0);
        let curve_missing = rng.random::<f64>() < cfg.macro_missing_prob;

        // VIX proxy: annualised cross-sectional mean of 20-day return sd, in index points.
        let mut vols = Vec::with_capacity(n_sym);
        for r in &returns {
            let lo = r.len().saturating_sub(20);
            if let Some(sd) = crate::stats::sample_sd(&r[lo..]) {
                vols.push(sd);
            }
        }
        let vix = crate::stats::mean(&vols)
            .map(|v| 100.0 * v * 252f64.sqrt())
            .unwrap_or(20.0);

        let mut snap = MacroSnapshot::empty(date);
        snap.vix = Some(vix);
        if !curve_missing {
            snap.yields.insert(TENOR_SHORT.into(), y_short);
            snap.yields.insert(TENOR_LONG.into(), y_long);
        }
        macros.push(snap);
    }

    let series = procs
        .iter()
        .zip(bars)
        .map(|(p, bars)| SymbolSeries {
            symbol: p.name.clone(),
            bars,
        })
        .collect();
    PanelDataset {
        dates,
        series,
        macro_series: macros,
    }
}
