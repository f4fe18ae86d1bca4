//! Prediction-time features.
//!
//! Every value on day `t` is a function of data dated `<= t` only. Rolling statistics require
//! their full window; rows with insufficient history carry `None`.

use std::f64::consts::LN_2;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Bar, PanelDataset};
use crate::stats::{mean, median, sample_sd};

pub const DEFAULT_EWMA_LAMBDA: f64 = 0.94;
/// Lower bound on the local volatility reference scale (return units).
pub const SCALE_FLOOR: f64 = 1e-6;

const ROLL_VOL_WINDOW: usize = 20;
const Z_RETURN_WINDOW: usize = 60;
const Z_VOLUME_WINDOW: usize = 20;
/// Returns needed before the EWMA recursion is seeded with their mean square.
const EWMA_WARMUP: usize = 20;

/// Feature vector for one symbol-day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub symbol: String,
    pub symbol_idx: usize,
    pub date: NaiveDate,
    pub date_idx: usize,
    pub bar: Bar,
    pub ret: Option<f64>,
    pub ewma_vol: Option<f64>,
    pub parkinson_vol: Option<f64>,
    pub garman_klass_vol: Option<f64>,
    pub roll_vol_20: Option<f64>,
    pub cum_peak: Option<f64>,
    pub drawdown: Option<f64>,
    pub z_return_60: Option<f64>,
    pub z_volume_20: Option<f64>,
    pub xs_mean_return: Option<f64>,
    pub xs_mean_vol: Option<f64>,
    pub vix: Option<f64>,
    pub curve_slope: Option<f64>,
    /// Aggregate input-quality score, filled in by the quality layer.
    pub quality_q: Option<f64>,
    /// Local volatility reference scale, always `>= SCALE_FLOOR`.
    pub scale_s: f64,
}

/// One EWMA variance update: `lambda * prev + (1 - lambda) * r^2`.
pub fn ewma_variance_step(prev_var: f64, ret: f64, lambda: f64) -> f64 {
    lambda * prev_var + (1.0 - lambda) * ret * ret
}

/// Parkinson range volatility for one day, `None` when the range cannot be logged.
pub fn parkinson_vol(high: Option<f64>, low: Option<f64>) -> Option<f64> {
    let (h, l) = (high?, low?);
    if h <= 0.0 || l <= 0.0 {
        return None;
    }
    let hl = (h / l).ln();
    Some((hl * hl / (4.0 * LN_2)).sqrt())
}

/// Garman-Klass volatility for one day; the variance is clipped at zero before the root.
pub fn garman_klass_vol(
    open: Option<f64>,
    high: Option<f64>,
    low: Option<f64>,
    close: Option<f64>,
) -> Option<f64> {
    let (o, h, l, c) = (open?, high?, low?, close?);
    if o <= 0.0 || h <= 0.0 || l <= 0.0 || c <= 0.0 {
        return None;
    }
    let hl = (h / l).ln();
    let co = (c / o).ln();
    let var = 0.5 * hl * hl - (2.0 * LN_2 - 1.0) * co * co;
    Some(var.max(0.0).sqrt())
}

fn full_window(values: &[Option<f64>], t: usize, window: usize) -> Option<Vec<f64>> {
    if t + 1 < window {
        return None;
    }
    values[t + 1 - window..=t].iter().copied().collect()
}

fn zscore(values: &[Option<f64>], t: usize, window: usize) -> Option<f64> {
    let current = values[t]?;
    let w = full_window(values, t, window)?;
    let m = mean(&w)?;
    let sd = sample_sd(&w)?;
    if sd == 0.0 {
        Some(0.0)
    } else {
        Some((current - m) / sd)
    }
}

fn symbol_features(panel: &PanelDataset, sym: usize, lambda: f64) -> Vec<FeatureRow> {
    let series = &panel.series[sym];
    let n = series.bars.len();
    let rets: Vec<Option<f64>> = series.bars.iter().map(|b| b.ret).collect();
    let vols: Vec<Option<f64>> = series.bars.iter().map(|b| b.volume).collect();

    let mut rows = Vec::with_capacity(n);
    let mut ewma_var: Option<f64> = None;
    let mut warmup: Vec<f64> = Vec::with_capacity(EWMA_WARMUP);
    let mut peak: Option<f64> = None;

    for t in 0..n {
        let bar = &series.bars[t];

        // EWMA at t only sees returns up to t-1.
        if t > 0 {
            if let Some(r) = rets[t - 1] {
                match ewma_var {
                    Some(v) => ewma_var = Some(ewma_variance_step(v, r, lambda)),
                    None => {
                        warmup.push(r);
                        if warmup.len() == EWMA_WARMUP {
                            let ms = warmup.iter().map(|x| x * x).sum::<f64>() / EWMA_WARMUP as f64;
                            ewma_var = Some(ms);
                        }
                    }
                }
            }
        }
        let ewma_vol = ewma_var.map(f64::sqrt);

        if let Some(c) = bar.close.filter(|c| *c > 0.0) {
            peak = Some(peak.map_or(c, |p: f64| p.max(c)));
        }
        let drawdown = match (bar.close.filter(|c| *c > 0.0), peak) {
            (Some(c), Some(p)) => Some((c / p - 1.0).min(0.0)),
            _ => None,
        };

        let roll_vol_20 = full_window(&rets, t, ROLL_VOL_WINDOW).and_then(|w| sample_sd(&w));
        let scale = roll_vol_20
            .or_else(|| {
                let lo = (t + 1).saturating_sub(ROLL_VOL_WINDOW);
                let present: Vec<f64> = rets[lo..=t].iter().flatten().copied().collect();
                sample_sd(&present)
            })
            .or(ewma_vol)
            .unwrap_or(SCALE_FLOOR)
            .max(SCALE_FLOOR);

        let macro_snap = &panel.macro_series[t];
        rows.push(FeatureRow {
            symbol: series.symbol.clone(),
            symbol_idx: sym,
            date: panel.dates[t],
            date_idx: t,
            bar: bar.clone(),
            ret: bar.ret,
            ewma_vol,
            parkinson_vol: parkinson_vol(bar.high, bar.low),
            garman_klass_vol: garman_klass_vol(bar.open, bar.high, bar.low, bar.close),
            roll_vol_20,
            cum_peak: peak,
            drawdown,
            z_return_60: zscore(&rets, t, Z_RETURN_WINDOW),
            z_volume_20: zscore(&vols, t, Z_VOLUME_WINDOW),
            xs_mean_return: None,
            xs_mean_vol: None,
            vix: macro_snap.vix,
            curve_slope: macro_snap.curve_slope(),
            quality_q: None,
            scale_s: scale,
        });
    }
    rows
}

/// All features for a panel, indexed `[symbol][date]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<FeatureRow>>,
}

impl FeatureMatrix {
    pub fn get(&self, sym: usize, t: usize) -> &FeatureRow {
        &self.rows[sym][t]
    }

    pub fn n_symbols(&self) -> usize {
        self.rows.len()
    }
}

/// Computes every prediction-time feature. Per-symbol series are independent; the cross-asset
/// date aggregates are filled in a second pass.
pub fn compute_features(panel: &PanelDataset, ewma_lambda: f64) -> FeatureMatrix {
    use rayon::prelude::*;
    let mut rows: Vec<Vec<FeatureRow>> = (0..panel.n_symbols())
        .into_par_iter()
        .map(|s| symbol_features(panel, s, ewma_lambda))
        .collect();

    for t in 0..panel.n_dates() {
        let rets: Vec<f64> = rows.iter().filter_map(|r| r[t].ret).collect();
        let vols: Vec<f64> = rows.iter().filter_map(|r| r[t].roll_vol_20).collect();
        let (mr, mv) = (mean(&rets), mean(&vols));
        for sym_rows in rows.iter_mut() {
            sym_rows[t].xs_mean_return = mr;
            sym_rows[t].xs_mean_vol = mv;
        }
    }
    FeatureMatrix { rows }
}

const BASE_FEATURES: [&str; 12] = [
    "ret",
    "ewma_vol",
    "parkinson_vol",
    "garman_klass_vol",
    "roll_vol_20",
    "drawdown",
    "z_return_60",
    "z_volume_20",
    "xs_mean_return",
    "xs_mean_vol",
    "vix",
    "curve_slope",
];

pub const QUALITY_FEATURE: &str = "quality_q";

/// Ordered model feature list: stationary market features, the quality score (optional), and a
/// one-hot symbol encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub names: Vec<String>,
    pub symbols: Vec<String>,
    pub include_quality: bool,
}

impl FeatureSpec {
    pub fn new(symbols: &[String], include_quality: bool) -> Self {
        let mut names: Vec<String> = BASE_FEATURES.iter().map(|s| s.to_string()).collect();
        if include_quality {
            names.push(QUALITY_FEATURE.to_string());
        }
        names.extend(symbols.iter().map(|s| format!("sym_{s}")));
        FeatureSpec {
            names,
            symbols: symbols.to_vec(),
            include_quality,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Raw (un-imputed) model vector for one row.
    pub fn extract(&self, row: &FeatureRow) -> Vec<Option<f64>> {
        let mut x = vec![
            row.ret,
            row.ewma_vol,
            row.parkinson_vol,
            row.garman_klass_vol,
            row.roll_vol_20,
            row.drawdown,
            row.z_return_60,
            row.z_volume_20,
            row.xs_mean_return,
            row.xs_mean_vol,
            row.vix,
            row.curve_slope,
        ];
        if self.include_quality {
            x.push(row.quality_q);
        }
        x.extend(
            self.symbols
                .iter()
                .map(|s| Some(if *s == row.symbol { 1.0 } else { 0.0 })),
        );
        x
    }
}

/// Per-feature medians from a training window; a column with no observations imputes to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMedians {
    pub values: Vec<f64>,
}

impl TrainingMedians {
    pub fn fit(rows: &[Vec<Option<f64>>], n_features: usize) -> Self {
        let values = (0..n_features)
            .map(|j| {
                let col: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
                median(&col).unwrap_or(0.0)
            })
            .collect();
        TrainingMedians { values }
    }

    pub fn impute(&self, row: &[Option<f64>]) -> Vec<f64> {
        row.iter()
            .zip(&self.values)
            .map(|(v, m)| v.unwrap_or(*m))
            .collect()
    }
}

/// Replaces every missing value with its training-window median.
pub fn impute_with_medians(rows: &[Vec<Option<f64>>], medians: &TrainingMedians) -> Vec<Vec<f64>> {
    rows.iter().map(|r| medians.impute(r)).collect()
}
