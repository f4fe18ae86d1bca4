//! Service-time input corruption with an audit log.
//!
//! Each eligible row draws from its own ChaCha stream keyed by `(seed, symbol, date)`, so the
//! outcome for a row does not depend on which other rows exist.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::market_data::{PanelDataset, CRITICAL_FIELD_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultMode {
    Missing,
    Stale,
    Ohlc,
}

impl FaultMode {
    pub const ALL: [FaultMode; 3] = [FaultMode::Missing, FaultMode::Stale, FaultMode::Ohlc];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultMode::Missing => "missing",
            FaultMode::Stale => "stale",
            FaultMode::Ohlc => "ohlc",
        }
    }
}

impl fmt::Display for FaultMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaultMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        FaultMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown fault mode {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultConfig {
    pub probability: f64,
    pub modes: Vec<FaultMode>,
    pub seed: u64,
}

impl Default for FaultConfig {
    fn default() -> Self {
        FaultConfig {
            probability: 0.15,
            modes: FaultMode::ALL.to_vec(),
            seed: 1234,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultEntry {
    pub symbol: String,
    pub date: NaiveDate,
    pub date_idx: usize,
    pub mode: FaultMode,
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultLog {
    pub probability: f64,
    pub seed: u64,
    pub eligible_rows: usize,
    pub entries: Vec<FaultEntry>,
}

impl FaultLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, mode: FaultMode) -> usize {
        self.entries.iter().filter(|e| e.mode == mode).count()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["symbol", "date", "mode", "fields"])
            .map_err(|e| Error::csv(path, e))?;
        for e in &self.entries {
            w.write_record([
                e.symbol.as_str(),
                &e.date.to_string(),
                e.mode.as_str(),
                &e.fields.join(";"),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn row_rng(seed: u64, symbol: &str, date: NaiveDate) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(symbol.as_bytes());
    h.update([0]);
    h.update(date.to_string().as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

const OHLC_FIELDS: [&str; 2] = ["high", "low"];
const STALE_FIELDS: [&str; 5] = ["open", "high", "low", "close", "return"];

/// Corrupts rows with date index `>= start_idx`. Rows outside the log are left untouched.
pub fn corrupt_panel(
    panel: &PanelDataset,
    cfg: &FaultConfig,
    start_idx: usize,
) -> Result<(PanelDataset, FaultLog)> {
    if !(0.0..=1.0).contains(&cfg.probability) {
        return Err(Error::Config(format!(
            "corruption probability {} outside [0, 1]",
            cfg.probability
        )));
    }
    let mut out = panel.clone();
    let mut log = FaultLog {
        probability: cfg.probability,
        seed: cfg.seed,
        ..FaultLog::default()
    };
    let mut modes = cfg.modes.clone();
    modes.sort();
    modes.dedup();

    for series in &mut out.series {
        let mut prev_close: Option<f64> = series.bars[..start_idx.min(series.bars.len())]
            .iter()
            .rev()
            .find_map(|b| b.close);
        for (t, bar) in series.bars.iter_mut().enumerate().skip(start_idx) {
            log.eligible_rows += 1;
            let mut rng = row_rng(cfg.seed, &series.symbol, bar.date);
            let hit = rng.random::<f64>() < cfg.probability;
            if hit && !modes.is_empty() {
                let mode = modes[rng.random_range(0..modes.len())];
                let fields: Vec<String> = match mode {
                    FaultMode::Missing => {
                        let k = rng.random_range(2..=4);
                        let mut idx = sample(&mut rng, 6, k).into_vec();
                        idx.sort_unstable();
                        for &i in &idx {
                            *bar.critical_field_mut(i) = None;
                        }
                        idx.iter().map(|&i| CRITICAL_FIELD_NAMES[i].to_string()).collect()
                    }
                    FaultMode::Stale => match prev_close {
                        Some(c) => {
                            bar.open = Some(c);
                            bar.high = Some(c);
                            bar.low = Some(c);
                            bar.close = Some(c);
                            bar.ret = Some(0.0);
                            STALE_FIELDS.iter().map(|s| s.to_string()).collect()
                        }
                        None => Vec::new(),
                    },
                    FaultMode::Ohlc => match (bar.high, bar.low) {
                        (Some(h), Some(l)) => {
                            if h != l {
                                bar.high = Some(l);
                                bar.low = Some(h);
                            } else {
                                bar.high = Some(0.99 * l);
                            }
                            OHLC_FIELDS.iter().map(|s| s.to_string()).collect()
                        }
                        _ => Vec::new(),
                    },
                };
                if !fields.is_empty() {
                    log.entries.push(FaultEntry {
                        symbol: series.symbol.clone(),
                        date: bar.date,
                        date_idx: t,
                        mode,
                        fields,
                    });
                }
            }
            if bar.close.is_some() {
                prev_close = bar.close;
            }
        }
    }
    Ok((out, log))
}
