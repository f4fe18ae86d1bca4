//! Daily ETF panel: raw bars, macro snapshots and the shared trading calendar.

mod features;
mod io;
mod synthetic;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use features::{
    compute_features, ewma_variance_step, garman_klass_vol, impute_with_medians, parkinson_vol,
    FeatureMatrix, FeatureRow, FeatureSpec, TrainingMedians, DEFAULT_EWMA_LAMBDA, QUALITY_FEATURE,
    SCALE_FLOOR,
};
pub use io::{load_macro, load_panel, MacroSchema, PanelSchema};
pub use synthetic::{generate_synthetic_panel, SyntheticConfig};

/// Tenor keys used for the yield curve.
pub const TENOR_SHORT: &str = "3m";
pub const TENOR_LONG: &str = "10y";

/// One asset-day of raw inputs. Every market field may be missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub symbol: String,
    pub date: NaiveDate,
    pub open: Option<f64>,
    pub high: Option<f64>,
    pub low: Option<f64>,
    pub close: Option<f64>,
    pub volume: Option<f64>,
    #[serde(rename = "return")]
    pub ret: Option<f64>,
}

impl Bar {
    /// A calendar day on which the symbol delivered nothing at all.
    pub fn gap(symbol: &str, date: NaiveDate) -> Self {
        Bar {
            symbol: symbol.to_string(),
            date,
            open: None,
            high: None,
            low: None,
            close: None,
            volume: None,
            ret: None,
        }
    }

    /// The six critical fields in a fixed order: open, high, low, close, volume, return.
    pub fn critical_fields(&self) -> [Option<f64>; 6] {
        [
            self.open, self.high, self.low, self.close, self.volume, self.ret,
        ]
    }

    pub fn critical_field_mut(&mut self, idx: usize) -> &mut Option<f64> {
        match idx {
            0 => &mut self.open,
            1 => &mut self.high,
            2 => &mut self.low,
            3 => &mut self.close,
            4 => &mut self.volume,
            _ => &mut self.ret,
        }
    }
}

pub const CRITICAL_FIELD_NAMES: [&str; 6] = ["open", "high", "low", "close", "volume", "return"];

/// One day of auxiliary macro inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroSnapshot {
    pub date: NaiveDate,
    pub vix: Option<f64>,
    /// Tenor -> zero-coupon yield in percent. Missing tenors are simply absent.
    pub yields: BTreeMap<String, f64>,
}

impl MacroSnapshot {
    pub fn empty(date: NaiveDate) -> Self {
        MacroSnapshot {
            date,
            vix: None,
            yields: BTreeMap::new(),
        }
    }

    /// Long minus short tenor, when both are present.
    pub fn curve_slope(&self) -> Option<f64> {
        Some(self.yields.get(TENOR_LONG)? - self.yields.get(TENOR_SHORT)?)
    }
}

/// Bars for one symbol, aligned to the panel calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSeries {
    pub symbol: String,
    pub bars: Vec<Bar>,
}

/// A rectangular panel: every symbol has exactly one bar per calendar date (gaps are explicit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    pub dates: Vec<NaiveDate>,
    pub series: Vec<SymbolSeries>,
    pub macro_series: Vec<MacroSnapshot>,
}

impl PanelDataset {
    /// Aligns loose bars and macro snapshots onto the union calendar. Bars must be unique per
    /// (symbol, date); macro snapshots outside the calendar are dropped.
    pub fn from_parts(bars: Vec<Bar>, macros: Vec<MacroSnapshot>) -> Self {
        let mut dates: Vec<NaiveDate> = bars.iter().map(|b| b.date).collect();
        dates.sort();
        dates.dedup();
        let index: BTreeMap<NaiveDate, usize> =
            dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();

        let mut by_symbol: BTreeMap<String, Vec<Option<Bar>>> = BTreeMap::new();
        for bar in bars {
            let slot = by_symbol
                .entry(bar.symbol.clone())
                .or_insert_with(|| vec![None; dates.len()]);
            let i = index[&bar.date];
            slot[i] = Some(bar);
        }
        let series = by_symbol
            .into_iter()
            .map(|(symbol, slots)| {
                let bars = slots
                    .into_iter()
                    .enumerate()
                    .map(|(i, b)| b.unwrap_or_else(|| Bar::gap(&symbol, dates[i])))
                    .collect();
                SymbolSeries { symbol, bars }
            })
            .collect();

        let mut macro_series: Vec<MacroSnapshot> =
            dates.iter().map(|d| MacroSnapshot::empty(*d)).collect();
        for m in macros {
            if let Some(&i) = index.get(&m.date) {
                macro_series[i] = m;
            }
        }
        PanelDataset {
            dates,
            series,
            macro_series,
        }
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_symbols(&self) -> usize {
        self.series.len()
    }

    pub fn symbols(&self) -> Vec<String> {
        self.series.iter().map(|s| s.symbol.clone()).collect()
    }

    pub fn symbol_index(&self, symbol: &str) -> Option<usize> {
        self.series.iter().position(|s| s.symbol == symbol)
    }

    pub fn vix(&self, t: usize) -> Option<f64> {
        self.macro_series.get(t).and_then(|m| m.vix)
    }

    /// Keeps dates `0..=last` only.
    pub fn truncate_at(&self, last: usize) -> Self {
        let end = (last + 1).min(self.dates.len());
        PanelDataset {
            dates: self.dates[..end].to_vec(),
            series: self
                .series
                .iter()
                .map(|s| SymbolSeries {
                    symbol: s.symbol.clone(),
                    bars: s.bars[..end].to_vec(),
                })
                .collect(),
            macro_series: self.macro_series[..end].to_vec(),
        }
    }

    /// Restricts the panel to the listed symbols, in the given order.
    pub fn select_symbols(&self, symbols: &[String]) -> Self {
        let series = symbols
            .iter()
            .filter_map(|s| self.series.iter().find(|x| &x.symbol == s).cloned())
            .collect();
        PanelDataset {
            dates: self.dates.clone(),
            series,
            macro_series: self.macro_series.clone(),
        }
    }

    /// Observed (non-missing) returns of one symbol on dates `0..=t`, oldest first.
    pub fn observed_returns(&self, symbol_idx: usize, t: usize) -> Vec<f64> {
        self.series[symbol_idx].bars[..=t]
            .iter()
            .filter_map(|b| b.ret)
            .collect()
    }

    /// Return of `symbol_idx` on date `t`, if that date exists and the return was observed.
    pub fn return_at(&self, symbol_idx: usize, t: usize) -> Option<f64> {
        self.series[symbol_idx].bars.get(t).and_then(|b| b.ret)
    }
}

/// Simple returns from consecutive closes. Where either close is missing, a delivered return
/// (if any) is kept instead.
pub(crate) fn recompute_returns(bars: &mut [Bar]) {
    let mut prev_close: Option<f64> = None;
    for bar in bars.iter_mut() {
        if let (Some(p), Some(c)) = (prev_close, bar.close) {
            if p > 0.0 {
                bar.ret = Some(c / p - 1.0);
            }
        }
        prev_close = bar.close;
    }
}
