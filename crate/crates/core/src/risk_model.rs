//! Pooled bootstrap quantile ensemble and rolling residual calibration.
//!
//! Each member is a [`QuantileGbm`] fitted on a date-level bootstrap of the training window: dates
//! are drawn with replacement and every symbol observed on a drawn date enters once per draw.
//! The raw forecast is the member mean; the calibrated forecast adds the `alpha`-quantile of
//! recent residuals.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbm::{GbmParams, QuantileGbm};
use crate::market_data::{FeatureRow, FeatureSpec, TrainingMedians};
use crate::stats::empirical_quantile;

pub use crate::stats::pinball_loss;

pub const ENSEMBLE_SIZE: usize = 5;
pub const FORMAT_VERSION: &str = "tailwatch-ensemble/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleParams {
    pub alpha: f64,
    pub min_training_rows: usize,
    pub gbm: GbmParams,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        EnsembleParams {
            alpha: 0.05,
            min_training_rows: 500,
            gbm: GbmParams::default(),
        }
    }
}

/// One labelled training observation: features at `t`, label `r_{t+1}`.
#[derive(Debug, Clone, Copy)]
pub struct LabelledRow<'a> {
    pub features: &'a FeatureRow,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub seed: u64,
    pub member_seeds: Vec<u64>,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    pub n_rows: usize,
    pub n_dates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileEnsemble {
    pub format_version: String,
    pub alpha: f64,
    pub spec: FeatureSpec,
    pub medians: TrainingMedians,
    pub members: Vec<QuantileGbm>,
    pub meta: FitMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailForecast {
    pub symbol: String,
    pub date: NaiveDate,
    pub member_preds: Vec<f64>,
    pub q_raw: f64,
    pub q_cal: f64,
}

impl TailForecast {
    pub fn with_calibration(mut self, calibration: &CalibrationState) -> Self {
        self.q_cal = apply_calibration(self.q_raw, calibration.c_t);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationState {
    pub c_t: f64,
    pub n_residuals: usize,
    pub first_date_idx: Option<usize>,
    pub last_date_idx: Option<usize>,
}

impl CalibrationState {
    pub fn identity() -> Self {
        CalibrationState {
            c_t: 0.0,
            n_residuals: 0,
            first_date_idx: None,
            last_date_idx: None,
        }
    }
}

fn member_seed(seed: u64, b: usize) -> u64 {
    seed ^ (b as u64 + 1)
}

/// Draws dates with replacement; returns row indices (a row repeats once per draw of its date).
fn date_bootstrap(rows_by_date: &[Vec<usize>], seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rows_by_date.len();
    let mut sample = Vec::new();
    for _ in 0..d {
        let k = rng.random_range(0..d);
        sample.extend_from_slice(&rows_by_date[k]);
    }
    sample
}

/// Fits the five-member pooled ensemble. Medians for imputation come from these rows only.
pub fn fit_ensemble(
    rows: &[LabelledRow<'_>],
    spec: &FeatureSpec,
    params: &EnsembleParams,
    seed: u64,
) -> Result<QuantileEnsemble> {
    let usable: Vec<&LabelledRow> = rows.iter().filter(|r| r.label.is_finite()).collect();
    if usable.len() < params.min_training_rows {
        return Err(Error::Fit(format!(
            "{} labelled rows, need at least {}",
            usable.len(),
            params.min_training_rows
        )));
    }
    let raw: Vec<Vec<Option<f64>>> = usable.iter().map(|r| spec.extract(r.features)).collect();
    let medians = TrainingMedians::fit(&raw, spec.len());
    let x: Vec<Vec<f64>> = raw.iter().map(|r| medians.impute(r)).collect();
    let y: Vec<f64> = usable.iter().map(|r| r.label).collect();

    let mut by_date: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in usable.iter().enumerate() {
        by_date.entry(r.features.date_idx).or_default().push(i);
    }
    let rows_by_date: Vec<Vec<usize>> = by_date.into_values().collect();

    let member_seeds: Vec<u64> = (0..ENSEMBLE_SIZE).map(|b| member_seed(seed, b)).collect();
    let members = member_seeds
        .par_iter()
        .map(|&s| {
            let sample = date_bootstrap(&rows_by_date, s);
            QuantileGbm::fit(&x, &y, &sample, params.alpha, &params.gbm)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(QuantileEnsemble {
        format_version: FORMAT_VERSION.to_string(),
        alpha: params.alpha,
        spec: spec.clone(),
        medians,
        members,
        meta: FitMetadata {
            seed,
            member_seeds,
            first_date: usable.iter().map(|r| r.features.date).min(),
            last_date: usable.iter().map(|r| r.features.date).max(),
            n_rows: usable.len(),
            n_dates: rows_by_date.len(),
        },
    })
}

impl QuantileEnsemble {
    /// Member predictions on an already-imputed vector.
    pub fn member_predictions(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.members.iter().map(|m| m.predict(x)).collect()
    }

    /// Imputes with the training medians and forecasts; `q_cal` equals `q_raw` until calibrated.
    pub fn predict(&self, row: &FeatureRow) -> Result<TailForecast> {
        let raw = self.spec.extract(row);
        self.predict_raw(row, &raw)
    }

    fn predict_raw(&self, row: &FeatureRow, raw: &[Option<f64>]) -> Result<TailForecast> {
        if raw.len() != self.medians.values.len() {
            return Err(Error::FeatureMismatch {
                expected: self.medians.values.len(),
                got: raw.len(),
            });
        }
        let x = self.medians.impute(raw);
        let member_preds = self.member_predictions(&x)?;
        let q_raw = member_preds.iter().sum::<f64>() / member_preds.len() as f64;
        Ok(TailForecast {
            symbol: row.symbol.clone(),
            date: row.date,
            member_preds,
            q_raw,
            q_cal: q_raw,
        })
    }

    /// The imputed model vector for a row (as seen by the members).
    pub fn imputed_vector(&self, row: &FeatureRow) -> Vec<f64> {
        self.medians.impute(&self.spec.extract(row))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_vec(self).map_err(|e| Error::Serialize(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let model: QuantileEnsemble =
            serde_json::from_slice(&bytes).map_err(|e| Error::Serialize(e.to_string()))?;
        if model.format_version != FORMAT_VERSION {
            return Err(Error::Serialize(format!(
                "unsupported model format {:?}",
                model.format_version
            )));
        }
        Ok(model)
    }
}

/// `c_t` = `alpha`-quantile of the pooled residuals `r_{s+1} - q_raw_{s+1}`.
pub fn fit_calibration(pairs: &[(f64, f64)], alpha: f64) -> CalibrationState {
    let resid: Vec<f64> = pairs
        .iter()
        .filter(|(q, r)| q.is_finite() && r.is_finite())
        .map(|(q, r)| r - q)
        .collect();
    match empirical_quantile(&resid, alpha) {
        Ok(c_t) => CalibrationState {
            c_t,
            n_residuals: resid.len(),
            first_date_idx: None,
            last_date_idx: None,
        },
        Err(_) => {
            log::warn!("calibration window has no residuals; using c_t = 0");
            CalibrationState::identity()
        }
    }
}

pub fn apply_calibration(q_raw: f64, c_t: f64) -> f64 {
    q_raw + c_t
}
