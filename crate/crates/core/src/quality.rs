//! Service-time input-quality diagnostics.
//!
//! Five bounded components (missingness, OHLC consistency, return jump, volume anomaly, stale
//! close) are combined with fixed weights into `Q_t` and mapped to a traffic-light state. Nothing
//! here can fail: the layer exists to describe degraded inputs, not to reject them.

use serde::{Deserialize, Serialize};

use crate::market_data::{Bar, FeatureMatrix, FeatureRow, PanelDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum QualityState {
    Green,
    Yellow,
    Red,
}

impl QualityState {
    pub fn as_str(self) -> &'static str {
        match self {
            QualityState::Green => "GREEN",
            QualityState::Yellow => "YELLOW",
            QualityState::Red => "RED",
        }
    }
}

impl std::str::FromStr for QualityState {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "GREEN" => Ok(QualityState::Green),
            "YELLOW" => Ok(QualityState::Yellow),
            "RED" => Ok(QualityState::Red),
            other => Err(format!("unknown quality state {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityParams {
    /// Weights on (miss, ohlc, jump, vol, stale).
    pub weights: [f64; 5],
    pub jump_abs_return: f64,
    pub logistic_center: f64,
    pub logistic_slope: f64,
    pub green_max: f64,
    pub yellow_max: f64,
    pub stale_rel_tol: f64,
}

impl Default for QualityParams {
    fn default() -> Self {
        QualityParams {
            weights: [0.30, 0.35, 0.15, 0.10, 0.10],
            jump_abs_return: 0.15,
            logistic_center: 3.0,
            logistic_slope: 1.0,
            green_max: 0.25,
            yellow_max: 0.60,
            stale_rel_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityComponents {
    pub q_miss: f64,
    pub q_ohlc: f64,
    pub q_jump: f64,
    pub q_vol: f64,
    pub q_stale: f64,
}

impl QualityComponents {
    /// Worst observable value for every component.
    pub const WORST: QualityComponents = QualityComponents {
        q_miss: 1.0,
        q_ohlc: 1.0,
        q_jump: 1.0,
        q_vol: 1.0,
        q_stale: 1.0,
    };

    fn as_array(&self) -> [f64; 5] {
        [self.q_miss, self.q_ohlc, self.q_jump, self.q_vol, self.q_stale]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub components: QualityComponents,
    pub score_q: f64,
    pub state: QualityState,
}

impl QualityReport {
    pub fn from_components(components: QualityComponents, params: &QualityParams) -> Self {
        let score_q = quality_score(&components, params);
        QualityReport {
            components,
            score_q,
            state: quality_state(score_q, params),
        }
    }
}

/// `1 / (1 + exp(-(x - c) / s))`.
pub fn logistic(x: f64, center: f64, slope: f64) -> f64 {
    1.0 / (1.0 + (-(x - center) / slope).exp())
}

/// OHLC consistency predicate evaluated among the present fields.
pub fn ohlc_inconsistent(bar: &Bar) -> bool {
    let prices = [bar.open, bar.high, bar.low, bar.close];
    if prices.iter().flatten().any(|p| *p <= 0.0) {
        return true;
    }
    let lt = |a: Option<f64>, b: Option<f64>| matches!((a, b), (Some(x), Some(y)) if x < y);
    lt(bar.high, bar.low)
        || lt(bar.high, bar.open)
        || lt(bar.high, bar.close)
        || lt(bar.open, bar.low)
        || lt(bar.close, bar.low)
}

/// The five quality components for one symbol-day. `prev_close` is the most recent observed
/// close strictly before the row's date.
pub fn quality_components(
    bar: &Bar,
    features: &FeatureRow,
    prev_close: Option<f64>,
    params: &QualityParams,
) -> QualityComponents {
    let missing = bar.critical_fields().iter().filter(|f| f.is_none()).count();
    let q_miss = missing as f64 / 6.0;
    let q_ohlc = if ohlc_inconsistent(bar) { 1.0 } else { 0.0 };

    let (c, s) = (params.logistic_center, params.logistic_slope);
    let jump_indicator = match bar.ret {
        Some(r) if r.abs() > params.jump_abs_return => 1.0,
        _ => 0.0,
    };
    let jump_z = features
        .z_return_60
        .map_or(0.0, |z| logistic(z.abs(), c, s));
    let q_jump = f64::max(jump_indicator, jump_z);
    let q_vol = features
        .z_volume_20
        .map_or(0.0, |z| logistic(z.abs(), c, s));

    let q_stale = match (bar.close, prev_close) {
        (Some(now), Some(prev)) if (now - prev).abs() <= params.stale_rel_tol * prev.abs() => 1.0,
        _ => 0.0,
    };

    QualityComponents {
        q_miss,
        q_ohlc,
        q_jump,
        q_vol,
        q_stale,
    }
}

pub fn quality_score(components: &QualityComponents, params: &QualityParams) -> f64 {
    components
        .as_array()
        .iter()
        .zip(params.weights)
        .map(|(c, w)| c * w)
        .sum()
}

pub fn quality_state(score_q: f64, params: &QualityParams) -> QualityState {
    if score_q <= params.green_max {
        QualityState::Green
    } else if score_q <= params.yellow_max {
        QualityState::Yellow
    } else {
        QualityState::Red
    }
}

/// Quality reports for every symbol-day, indexed `[symbol][date]`; also writes `Q_t` into the
/// feature rows.
pub fn assess_panel(
    panel: &PanelDataset,
    features: &mut FeatureMatrix,
    params: &QualityParams,
) -> Vec<Vec<QualityReport>> {
    panel
        .series
        .iter()
        .zip(features.rows.iter_mut())
        .map(|(series, rows)| {
            let mut prev_close: Option<f64> = None;
            series
                .bars
                .iter()
                .zip(rows.iter_mut())
                .map(|(bar, row)| {
                    let comps = quality_components(bar, row, prev_close, params);
                    let report = QualityReport::from_components(comps, params);
                    row.quality_q = Some(report.score_q);
                    if bar.close.is_some() {
                        prev_close = bar.close;
                    }
                    report
                })
                .collect()
        })
        .collect()
}
