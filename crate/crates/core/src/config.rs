//! Run configuration. Every field has a default, so an empty TOML file is a valid config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faults::FaultConfig;
use crate::gbm::GbmParams;
use crate::market_data::{MacroSchema, PanelSchema, SyntheticConfig, DEFAULT_EWMA_LAMBDA};
use crate::quality::QualityParams;
use crate::risk_model::EnsembleParams;
use crate::safe_output::SafeParams;
use crate::uncertainty::UncertaintyParams;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub panel: Option<PathBuf>,
    pub macro_data: Option<PathBuf>,
    /// Restricts the run to these symbols (in this order).
    pub symbols: Option<Vec<String>>,
    pub panel_schema: PanelSchema,
    pub macro_schema: MacroSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub train: usize,
    pub refit_step: usize,
    pub calibration: usize,
    pub hist_long: usize,
    pub hist_short: usize,
    pub rolling_breach: usize,
    pub stress_quantile: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            train: 756,
            refit_step: 63,
            calibration: 63,
            hist_long: 252,
            hist_short: 63,
            rolling_breach: 60,
            stress_quantile: 0.80,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub gbm: GbmParams,
    pub min_training_rows: usize,
    pub ewma_lambda: f64,
    pub include_quality_feature: bool,
    /// Calibrate on residuals of the previous segment's ensemble instead of the new one.
    pub out_of_sample_calibration: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            gbm: GbmParams::default(),
            min_training_rows: 500,
            ewma_lambda: DEFAULT_EWMA_LAMBDA,
            include_quality_feature: true,
            out_of_sample_calibration: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub alpha: f64,
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub synthetic: SyntheticConfig,
    pub windows: WindowConfig,
    pub model: ModelConfig,
    pub quality: QualityParams,
    pub uncertainty: UncertaintyParams,
    pub safe: SafeParams,
    pub faults: FaultConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            alpha: 0.05,
            threads: None,
            out_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            synthetic: SyntheticConfig::default(),
            windows: WindowConfig::default(),
            model: ModelConfig::default(),
            quality: QualityParams::default(),
            uncertainty: UncertaintyParams::default(),
            safe: SafeParams::default(),
            faults: FaultConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn ensemble_params(&self) -> EnsembleParams {
        EnsembleParams {
            alpha: self.alpha,
            min_training_rows: self.model.min_training_rows,
            gbm: self.model.gbm.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad(format!("alpha {} must lie in (0, 0.5)", self.alpha));
        }
        let w = &self.windows;
        if w.train == 0 || w.refit_step == 0 || w.hist_long == 0 || w.hist_short == 0 {
            return bad("window lengths must be positive".into());
        }
        if w.calibration == 0 || w.calibration >= w.train {
            return bad(format!(
                "calibration window {} must be positive and shorter than the training window {}",
                w.calibration, w.train
            ));
        }
        if !(0.0..=1.0).contains(&w.stress_quantile) {
            return bad(format!("stress quantile {} outside [0, 1]", w.stress_quantile));
        }
        if !(self.model.ewma_lambda > 0.0 && self.model.ewma_lambda < 1.0) {
            return bad(format!("EWMA decay {} must lie in (0, 1)", self.model.ewma_lambda));
        }
        let g = &self.model.gbm;
        if g.n_trees == 0 || g.max_depth == 0 || g.min_samples_leaf == 0 || g.max_bins < 2 || g.max_bins > 256 {
            return bad("invalid GBM hyperparameters".into());
        }
        if !(0.0..=1.0).contains(&self.faults.probability) {
            return bad(format!(
                "corruption probability {} outside [0, 1]",
                self.faults.probability
            ));
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }
}
