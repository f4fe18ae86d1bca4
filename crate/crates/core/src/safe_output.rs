//! Safe VaR: the calibrated forecast pushed down by a quality/uncertainty adjustment and floored
//! by the short historical anchor, plus the fallback ratio and the alert level.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::quality::QualityState;
use crate::uncertainty::UncertaintyLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafeParams {
    pub k_uncertainty: f64,
    pub k_quality: f64,
    pub drift_orange: f64,
    pub drift_red: f64,
    pub ratio_orange: f64,
    pub ratio_red: f64,
}

impl Default for SafeParams {
    fn default() -> Self {
        SafeParams {
            k_uncertainty: 0.75,
            k_quality: 0.50,
            drift_orange: 0.5,
            drift_red: 1.0,
            ratio_orange: 0.35,
            ratio_red: 0.75,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AlertLevel {
    Green,
    Orange,
    Red,
}

impl AlertLevel {
    pub const ALL: [AlertLevel; 3] = [AlertLevel::Green, AlertLevel::Orange, AlertLevel::Red];

    pub fn as_str(self) -> &'static str {
        match self {
            AlertLevel::Green => "GREEN",
            AlertLevel::Orange => "ORANGE",
            AlertLevel::Red => "RED",
        }
    }
}

impl fmt::Display for AlertLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which adjustment terms and alert inputs are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Calibrated model forecast, no fallback.
    Raw,
    /// Anchor only: `min(q_hist63, q_cal)`.
    Simple,
    QualityOnly,
    UncertaintyOnly,
    Full,
    /// Uncertainty adjustment only and quality state ignored by the alert.
    NoQualityService,
}

impl Variant {
    pub const FALLBACK_COMPARISON: [Variant; 5] = [
        Variant::Raw,
        Variant::Simple,
        Variant::QualityOnly,
        Variant::UncertaintyOnly,
        Variant::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Raw => "raw",
            Variant::Simple => "simple",
            Variant::QualityOnly => "quality_only",
            Variant::UncertaintyOnly => "uncertainty_only",
            Variant::Full => "full",
            Variant::NoQualityService => "no_quality_service",
        }
    }

    fn weights(self, params: &SafeParams) -> (f64, f64) {
        match self {
            Variant::Raw | Variant::Simple => (0.0, 0.0),
            Variant::QualityOnly => (0.0, params.k_quality),
            Variant::UncertaintyOnly | Variant::NoQualityService => (params.k_uncertainty, 0.0),
            Variant::Full => (params.k_uncertainty, params.k_quality),
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Variant::Raw,
            Variant::Simple,
            Variant::QualityOnly,
            Variant::UncertaintyOnly,
            Variant::Full,
            Variant::NoQualityService,
        ]
        .into_iter()
        .find(|v| v.as_str() == s)
        .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafeDecision {
    pub q_hist63: Option<f64>,
    pub adjustment_a: f64,
    pub q_safe: f64,
    pub ratio_r: f64,
    pub alert: AlertLevel,
    pub anchor_missing: bool,
}

/// `A = s * (k_u * U + k_q * Q)`.
pub fn adjustment(scale_s: f64, u: f64, q: f64, params: &SafeParams) -> f64 {
    scale_s * (params.k_uncertainty * u + params.k_quality * q)
}

/// `min(q_hist63, q_cal - A)`; without an anchor the model side alone is used.
pub fn safe_var(q_cal: f64, q_hist63: Option<f64>, a: f64) -> f64 {
    let model_side = q_cal - a;
    match q_hist63 {
        Some(anchor) => anchor.min(model_side),
        None => model_side,
    }
}

pub fn fallback_ratio(q_cal: f64, q_safe: f64, scale_s: f64) -> f64 {
    (q_cal - q_safe).max(0.0) / scale_s
}

pub fn alert_level(
    quality: Option<QualityState>,
    label: UncertaintyLabel,
    u_drift: f64,
    ratio_r: f64,
    params: &SafeParams,
) -> AlertLevel {
    if quality == Some(QualityState::Red)
        || label == UncertaintyLabel::High
        || u_drift >= params.drift_red
        || ratio_r >= params.ratio_red
    {
        AlertLevel::Red
    } else if quality == Some(QualityState::Yellow)
        || label == UncertaintyLabel::Medium
        || u_drift >= params.drift_orange
        || ratio_r >= params.ratio_orange
    {
        AlertLevel::Orange
    } else {
        AlertLevel::Green
    }
}

/// Inputs to the safe-output step for one symbol-day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeInputs {
    pub q_cal: f64,
    pub q_hist63: Option<f64>,
    pub scale_s: f64,
    pub score_u: f64,
    pub score_q: f64,
    pub quality_state: QualityState,
    pub label: UncertaintyLabel,
    pub u_drift: f64,
}

pub fn decide(inputs: &SafeInputs, variant: Variant, params: &SafeParams) -> SafeDecision {
    let (ku, kq) = variant.weights(params);
    let a = inputs.scale_s * (ku * inputs.score_u + kq * inputs.score_q);
    let q_safe = match variant {
        Variant::Raw => inputs.q_cal,
        _ => safe_var(inputs.q_cal, inputs.q_hist63, a),
    };
    let ratio_r = fallback_ratio(inputs.q_cal, q_safe, inputs.scale_s);
    let quality = match variant {
        Variant::NoQualityService => None,
        _ => Some(inputs.quality_state),
    };
    SafeDecision {
        q_hist63: inputs.q_hist63,
        adjustment_a: a,
        q_safe,
        ratio_r,
        alert: alert_level(quality, inputs.label, inputs.u_drift, ratio_r, params),
        anchor_missing: inputs.q_hist63.is_none(),
    }
}
