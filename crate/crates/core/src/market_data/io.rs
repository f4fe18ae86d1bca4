//! CSV ingestion for the ETF panel and the macro series.

use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{recompute_returns, Bar, MacroSnapshot, PanelDataset, TENOR_LONG, TENOR_SHORT};
use crate::error::{Error, Result};

/// Column names of the panel file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelSchema {
    pub symbol: String,
    pub date: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
    pub volume: String,
    /// Optional delivered-return column, used only where the close is missing.
    pub ret: String,
}

impl Default for PanelSchema {
    fn default() -> Self {
        PanelSchema {
            symbol: "symbol".into(),
            date: "date".into(),
            open: "open".into(),
            high: "high".into(),
            low: "low".into(),
            close: "close".into(),
            volume: "volume".into(),
            ret: "return".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MacroSchema {
    pub date: String,
    pub vix: String,
    pub short_yield: String,
    pub long_yield: String,
}

impl Default for MacroSchema {
    fn default() -> Self {
        MacroSchema {
            date: "date".into(),
            vix: "vix".into(),
            short_yield: "y3m".into(),
            long_yield: "y10y".into(),
        }
    }
}

fn parse_cell(raw: Option<&str>) -> Option<f64> {
    let s = raw?.trim();
    if s.is_empty() {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_date(path: &Path, line: u64, raw: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d").map_err(|e| Error::Ingest {
        path: path.to_path_buf(),
        message: format!("line {line}: bad date {raw:?}: {e}"),
    })
}

fn column(path: &Path, headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Ingest {
            path: path.to_path_buf(),
            message: format!("missing column {name:?}"),
        })
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().flexible(true).from_reader(file))
}

/// Loads the panel CSV. Unparseable numeric cells become missing values; returns are recomputed
/// from consecutive closes.
pub fn load_panel(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<PanelDataset> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let c_sym = column(path, &headers, &schema.symbol)?;
    let c_date = column(path, &headers, &schema.date)?;
    let c_open = column(path, &headers, &schema.open)?;
    let c_high = column(path, &headers, &schema.high)?;
    let c_low = column(path, &headers, &schema.low)?;
    let c_close = column(path, &headers, &schema.close)?;
    let c_vol = column(path, &headers, &schema.volume)?;
    let c_ret = headers.iter().position(|h| h.trim() == schema.ret);

    let mut seen: HashMap<(String, NaiveDate), u64> = HashMap::new();
    let mut bars = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let symbol = record.get(c_sym).unwrap_or("").trim().to_string();
        if symbol.is_empty() {
            return Err(Error::Ingest {
                path: path.to_path_buf(),
                message: format!("line {line}: empty symbol"),
            });
        }
        let date = parse_date(path, line, record.get(c_date).unwrap_or(""))?;
        if let Some(first) = seen.insert((symbol.clone(), date), line) {
            return Err(Error::DuplicateRow {
                symbol,
                date: date.to_string(),
                first: first as usize,
                second: line as usize,
            });
        }
        bars.push(Bar {
            symbol,
            date,
            open: parse_cell(record.get(c_open)),
            high: parse_cell(record.get(c_high)),
            low: parse_cell(record.get(c_low)),
            close: parse_cell(record.get(c_close)),
            volume: parse_cell(record.get(c_vol)),
            ret: c_ret.and_then(|c| parse_cell(record.get(c))),
        });
    }
    if bars.is_empty() {
        return Err(Error::Ingest {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }

    let mut panel = PanelDataset::from_parts(bars, Vec::new());
    for series in &mut panel.series {
        recompute_returns(&mut series.bars);
    }
    Ok(panel)
}

/// Loads the macro CSV (`date,vix,y3m,y10y` by default). Missing cells stay missing.
pub fn load_macro(path: impl AsRef<Path>, schema: &MacroSchema) -> Result<Vec<MacroSnapshot>> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let c_date = column(path, &headers, &schema.date)?;
    let c_vix = headers.iter().position(|h| h.trim() == schema.vix);
    let c_short = headers.iter().position(|h| h.trim() == schema.short_yield);
    let c_long = headers.iter().position(|h| h.trim() == schema.long_yield);

    let mut out = Vec::new();
    let mut seen: HashMap<NaiveDate, u64> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let date = parse_date(path, line, record.get(c_date).unwrap_or(""))?;
        if let Some(first) = seen.insert(date, line) {
            return Err(Error::DuplicateRow {
                symbol: "<macro>".into(),
                date: date.to_string(),
                first: first as usize,
                second: line as usize,
            });
        }
        let mut snap = MacroSnapshot::empty(date);
        snap.vix = c_vix.and_then(|c| parse_cell(record.get(c)));
        if let Some(v) = c_short.and_then(|c| parse_cell(record.get(c))) {
            snap.yields.insert(TENOR_SHORT.into(), v);
        }
        if let Some(v) = c_long.and_then(|c| parse_cell(record.get(c))) {
            snap.yields.insert(TENOR_LONG.into(), v);
        }
        out.push(snap);
    }
    out.sort_by_key(|m| m.date);
    Ok(out)
}

impl PanelDataset {
    /// Attaches macro snapshots on matching dates; dates without a snapshot stay empty.
    pub fn with_macro(mut self, macros: Vec<MacroSnapshot>) -> Self {
        let index: HashMap<NaiveDate, usize> =
            self.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        for m in macros {
            if let Some(&i) = index.get(&m.date) {
                self.macro_series[i] = m;
            }
        }
        self
    }

    /// Writes the panel in the ingest format (`symbol,date,open,high,low,close,volume,return`).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["symbol", "date", "open", "high", "low", "close", "volume", "return"])
            .map_err(|e| Error::csv(path, e))?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.series {
            for b in &s.bars {
                w.write_record([
                    b.symbol.clone(),
                    b.date.to_string(),
                    cell(b.open),
                    cell(b.high),
                    cell(b.low),
                    cell(b.close),
                    cell(b.volume),
                    cell(b.ret),
                ])
                .map_err(|e| Error::csv(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes the macro series as `date,vix,y3m,y10y`.
    pub fn write_macro_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["date", "vix", "y3m", "y10y"])
            .map_err(|e| Error::csv(path, e))?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for m in &self.macro_series {
            w.write_record([
                m.date.to_string(),
                cell(m.vix),
                cell(m.yields.get(TENOR_SHORT).copied()),
                cell(m.yields.get(TENOR_LONG).copied()),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
