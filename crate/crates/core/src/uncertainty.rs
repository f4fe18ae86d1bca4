//! Epistemic, out-of-distribution and drift uncertainty, their aggregate, and the derived
//! diagnostic state and alert label.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{empirical_quantile, mean, sample_sd};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UncertaintyParams {
    pub w_model: f64,
    pub w_ood: f64,
    pub w_drift: f64,
    /// Member dispersion is measured in units of `dispersion_scale * s_t`.
    pub dispersion_scale: f64,
    pub ood_quantile: f64,
    pub ood_slope: f64,
    pub pca_variance: f64,
    pub pca_max_components: usize,
    pub drift_window: usize,
    pub drift_min_obs: usize,
    pub state_window: usize,
    pub state_min_history: usize,
    pub state_quantile: f64,
    pub label_low: f64,
    pub label_medium: f64,
}

impl Default for UncertaintyParams {
    fn default() -> Self {
        UncertaintyParams {
            w_model: 0.40,
            w_ood: 0.35,
            w_drift: 0.25,
            dispersion_scale: 3.0,
            ood_quantile: 0.95,
            ood_slope: 1.5,
            pca_variance: 0.95,
            pca_max_components: 10,
            drift_window: 60,
            drift_min_obs: 30,
            state_window: 252,
            state_min_history: 20,
            state_quantile: 0.90,
            label_low: 0.33,
            label_medium: 0.66,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum UncertaintyState {
    Low,
    Elevated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum UncertaintyLabel {
    Low,
    Medium,
    High,
}

impl UncertaintyState {
    pub fn as_str(self) -> &'static str {
        match self {
            UncertaintyState::Low => "LOW",
            UncertaintyState::Elevated => "ELEVATED",
        }
    }
}

impl UncertaintyLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            UncertaintyLabel::Low => "LOW",
            UncertaintyLabel::Medium => "MEDIUM",
            UncertaintyLabel::High => "HIGH",
        }
    }
}

impl fmt::Display for UncertaintyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for UncertaintyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub u_model: f64,
    pub u_ood: f64,
    pub u_drift: f64,
    pub score_u: f64,
    pub state: UncertaintyState,
    pub label: UncertaintyLabel,
}

impl UncertaintyReport {
    /// Report used when the forecast pipeline fails for a row.
    pub fn worst() -> Self {
        UncertaintyReport {
            u_model: 1.0,
            u_ood: 1.0,
            u_drift: 1.0,
            score_u: 1.0,
            state: UncertaintyState::Elevated,
            label: UncertaintyLabel::High,
        }
    }
}

/// `min(1, sd(members) / (scale * s))` with the n-1 sample sd.
pub fn model_dispersion(member_preds: &[f64], scale_s: f64, params: &UncertaintyParams) -> f64 {
    let sd = sample_sd(member_preds).unwrap_or(0.0);
    (sd / (params.dispersion_scale * scale_s)).min(1.0)
}

pub fn ood_score_from_distance(d: f64, d_ref: f64, params: &UncertaintyParams) -> f64 {
    ((d / d_ref - 1.0) / params.ood_slope).clamp(0.0, 1.0)
}

pub fn drift_score(breaches: usize, n: usize, alpha: f64, params: &UncertaintyParams) -> f64 {
    if n < params.drift_min_obs || n == 0 {
        return 0.0;
    }
    let p_hat = breaches as f64 / n as f64;
    ((p_hat - alpha).max(0.0) / (2.0 * alpha)).min(1.0)
}

pub fn combine(u_model: f64, u_ood: f64, u_drift: f64, params: &UncertaintyParams) -> f64 {
    params.w_model * u_model + params.w_ood * u_ood + params.w_drift * u_drift
}

/// LOW iff `u` does not exceed the 90% quantile of the prior history; LOW on a short history.
pub fn uncertainty_state(history: &[f64], u: f64, params: &UncertaintyParams) -> UncertaintyState {
    if history.len() < params.state_min_history {
        return UncertaintyState::Low;
    }
    match empirical_quantile(history, params.state_quantile) {
        Ok(tau) if u > tau => UncertaintyState::Elevated,
        _ => UncertaintyState::Low,
    }
}

pub fn uncertainty_label(u: f64, params: &UncertaintyParams) -> UncertaintyLabel {
    if u <= params.label_low {
        UncertaintyLabel::Low
    } else if u <= params.label_medium {
        UncertaintyLabel::Medium
    } else {
        UncertaintyLabel::High
    }
}

/// Standardization plus truncated PCA of the training feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodModel {
    /// Columns with non-zero training sd, in input order.
    pub kept: Vec<usize>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// One loading vector per retained component, each of length `kept.len()`.
    pub components: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
    pub d_ref: f64,
    pub degenerate: bool,
    pub n_features: usize,
}

impl OodModel {
    pub fn fit(rows: &[Vec<f64>], params: &UncertaintyParams) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "out-of-distribution model needs at least 2 rows, got {}",
                rows.len()
            )));
        }
        let p = rows[0].len();
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::FeatureMismatch {
                expected: p,
                got: bad.len(),
            });
        }
        let n = rows.len();
        let mut kept = Vec::new();
        let mut means = Vec::new();
        let mut sds = Vec::new();
        for j in 0..p {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let m = mean(&col).unwrap_or(0.0);
            let sd = sample_sd(&col).unwrap_or(0.0);
            if sd > 1e-12 && sd.is_finite() {
                kept.push(j);
                means.push(m);
                sds.push(sd);
            }
        }
        let mut model = OodModel {
            kept,
            means,
            sds,
            components: Vec::new(),
            variances: Vec::new(),
            d_ref: 1.0,
            degenerate: true,
            n_features: p,
        };
        let k = model.kept.len();
        if k == 0 {
            return Ok(model);
        }

        let z = DMatrix::from_fn(n, k, |i, c| {
            (rows[i][model.kept[c]] - model.means[c]) / model.sds[c]
        });
        let cov = (z.transpose() * &z) / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        let lam_max = eig.eigenvalues[order[0]].max(0.0);
        let cap = params.pca_max_components.min(k);
        let mut acc = 0.0;
        for &idx in order.iter().take(cap) {
            let lam = eig.eigenvalues[idx];
            // numerically null directions would blow the distance up
            if lam <= 1e-10 * lam_max.max(f64::MIN_POSITIVE) {
                break;
            }
            model.components.push(eig.eigenvectors.column(idx).iter().copied().collect());
            model.variances.push(lam);
            acc += lam;
            if acc >= params.pca_variance * total {
                break;
            }
        }
        if model.components.is_empty() {
            return Ok(model);
        }

        let dists: Vec<f64> = rows.iter().map(|r| model.raw_distance(r)).collect();
        let d_ref = empirical_quantile(&dists, params.ood_quantile)?;
        if d_ref > 0.0 && d_ref.is_finite() {
            model.d_ref = d_ref;
            model.degenerate = false;
        }
        Ok(model)
    }

    fn raw_distance(&self, x: &[f64]) -> f64 {
        let z: Vec<f64> = self
            .kept
            .iter()
            .enumerate()
            .map(|(c, &j)| (x[j] - self.means[c]) / self.sds[c])
            .collect();
        self.components
            .iter()
            .zip(&self.variances)
            .map(|(v, lam)| {
                let score: f64 = v.iter().zip(&z).map(|(a, b)| a * b).sum();
                score * score / lam
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Mahalanobis distance in the retained PCA space (0 for a degenerate model).
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::FeatureMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        if self.degenerate {
            return Ok(0.0);
        }
        Ok(self.raw_distance(x))
    }

    pub fn score(&self, x: &[f64], params: &UncertaintyParams) -> Result<f64> {
        if self.degenerate {
            return Ok(0.0);
        }
        Ok(ood_score_from_distance(self.distance(x)?, self.d_ref, params))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct SymbolTrack {
    breaches: VecDeque<bool>,
    u_history: VecDeque<f64>,
}

/// Per-symbol breach buffer and U history. Written by one day loop per symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftTracker {
    tracks: Vec<SymbolTrack>,
    drift_window: usize,
    state_window: usize,
}

impl DriftTracker {
    pub fn new(n_symbols: usize, params: &UncertaintyParams) -> Self {
        DriftTracker {
            tracks: vec![SymbolTrack::default(); n_symbols],
            drift_window: params.drift_window,
            state_window: params.state_window,
        }
    }

    /// Records whether the realized return fell strictly below the calibrated forecast.
    pub fn record_outcome(&mut self, sym: usize, realized: f64, q_cal: f64) {
        self.record_breach(sym, realized < q_cal);
    }

    pub fn record_breach(&mut self, sym: usize, breach: bool) {
        let buf = &mut self.tracks[sym].breaches;
        if buf.len() == self.drift_window {
            buf.pop_front();
        }
        buf.push_back(breach);
    }

    pub fn record_u(&mut self, sym: usize, u: f64) {
        let hist = &mut self.tracks[sym].u_history;
        if hist.len() == self.state_window {
            hist.pop_front();
        }
        hist.push_back(u);
    }

    /// `(breaches, observations)` in the symbol's window.
    pub fn breach_counts(&self, sym: usize) -> (usize, usize) {
        let buf = &self.tracks[sym].breaches;
        (buf.iter().filter(|b| **b).count(), buf.len())
    }

    pub fn drift_score(&self, sym: usize, alpha: f64, params: &UncertaintyParams) -> f64 {
        let (x, n) = self.breach_counts(sym);
        drift_score(x, n, alpha, params)
    }

    pub fn u_history(&self, sym: usize) -> Vec<f64> {
        self.tracks[sym].u_history.iter().copied().collect()
    }

    pub fn state(&self, sym: usize, u: f64, params: &UncertaintyParams) -> UncertaintyState {
        uncertainty_state(&self.u_history(sym), u, params)
    }
}

/// Assembles a report against the symbol's prior U history (today not yet recorded).
pub fn assess(
    u_model: f64,
    u_ood: f64,
    u_drift: f64,
    tracker: &DriftTracker,
    sym: usize,
    params: &UncertaintyParams,
) -> UncertaintyReport {
    let score_u = combine(u_model, u_ood, u_drift, params);
    UncertaintyReport {
        u_model,
        u_ood,
        u_drift,
        score_u,
        state: tracker.state(sym, score_u, params),
        label: uncertainty_label(score_u, params),
    }
}
