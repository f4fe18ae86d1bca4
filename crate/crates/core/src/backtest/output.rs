//! On-disk artifacts: records CSV, metrics JSON, rolling breach series, alert counts and
//! ablation tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ablation::{AblationRuns, AblationSummary};
use super::engine::{BacktestRecord, BacktestRun, SegmentSummary};
use super::metrics::{alert_counts, evaluate, rolling_breach, AlertCounts, MetricsRow, MetricsTable};
use crate::config::RunConfig;
use crate::error::{Error, Result};

pub const RECORDS_FILE: &str = "records.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const ROLLING_FILE: &str = "rolling_breach.csv";
pub const ALERTS_FILE: &str = "alerts.csv";
pub const ABLATION_FILE: &str = "ablation.json";
pub const COMPONENT_TABLE_FILE: &str = "ablation_components.csv";
pub const QUALITY_TABLE_FILE: &str = "ablation_quality.csv";
pub const FAULT_LOG_FILE: &str = "fault_log.csv";

pub const RECORD_COLUMNS: [&str; 33] = [
    "symbol",
    "date",
    "segment",
    "scale_s",
    "q_raw",
    "q_cal",
    "c_t",
    "var_hist252",
    "var_hist63",
    "var_ewma",
    "var_gjr",
    "q_miss",
    "q_ohlc",
    "q_jump",
    "q_vol",
    "q_stale",
    "score_q",
    "quality_state",
    "u_model",
    "u_ood",
    "u_drift",
    "score_u",
    "uncertainty_state",
    "uncertainty_label",
    "q_hist63",
    "adjustment_a",
    "q_safe",
    "ratio_r",
    "alert",
    "anchor_missing",
    "degraded",
    "realized_next",
    "stress",
];

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn record_row(r: &BacktestRecord) -> Vec<String> {
    let f = &r.forecast;
    let q = &f.quality.components;
    let u = &f.uncertainty;
    let s = &f.safe;
    vec![
        r.symbol.clone(),
        r.date.to_string(),
        f.segment.to_string(),
        num(f.scale_s),
        num(f.q_raw),
        num(f.q_cal),
        num(f.c_t),
        opt(f.var_hist252),
        opt(f.var_hist63),
        opt(f.var_ewma),
        opt(f.var_gjr),
        num(q.q_miss),
        num(q.q_ohlc),
        num(q.q_jump),
        num(q.q_vol),
        num(q.q_stale),
        num(f.quality.score_q),
        f.quality.state.as_str().to_string(),
        num(u.u_model),
        num(u.u_ood),
        num(u.u_drift),
        num(u.score_u),
        u.state.as_str().to_string(),
        u.label.as_str().to_string(),
        opt(s.q_hist63),
        num(s.adjustment_a),
        num(s.q_safe),
        num(s.ratio_r),
        s.alert.as_str().to_string(),
        s.anchor_missing.to_string(),
        f.degraded.to_string(),
        opt(r.evaluation.realized),
        r.evaluation.stress.to_string(),
    ]
}

/// One row per symbol-day; evaluation-only columns come last.
pub fn write_records_csv(path: &Path, records: &[BacktestRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(RECORD_COLUMNS).map_err(|e| Error::csv(path, e))?;
    for r in records {
        w.write_record(record_row(r)).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_rolling_csv(path: &Path, records: &[BacktestRecord], window: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["date", "method", "rate"]).map_err(|e| Error::csv(path, e))?;
    for p in rolling_breach(records, window) {
        w.write_record([p.date.to_string(), p.method, num(p.rate)])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Alert counts overall and per symbol.
pub fn write_alerts_csv(path: &Path, run: &BacktestRun) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["slice", "green", "orange", "red", "total"])
        .map_err(|e| Error::csv(path, e))?;
    let mut slices = vec![("overall".to_string(), overall_alerts(run))];
    for sym in &run.symbols {
        let c = alert_counts(
            run.records
                .iter()
                .filter(|r| &r.symbol == sym)
                .map(|r| &r.forecast.safe.alert),
        );
        slices.push((format!("symbol:{sym}"), c));
    }
    for (name, c) in slices {
        w.write_record([
            name,
            c.green.to_string(),
            c.orange.to_string(),
            c.red.to_string(),
            c.total().to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn overall_alerts(run: &BacktestRun) -> AlertCounts {
    alert_counts(run.records.iter().map(|r| &r.forecast.safe.alert))
}

/// Config echo for audit. Output location and thread count are left out so that the same run
/// written to two directories produces identical files.
pub fn config_echo(cfg: &RunConfig) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(cfg).map_err(|e| Error::Serialize(e.to_string()))?;
    if let Some(map) = v.as_object_mut() {
        map.remove("out_dir");
        map.remove("threads");
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: serde_json::Value,
    pub symbols: Vec<String>,
    pub feature_names: Vec<String>,
    pub first_prediction: Option<String>,
    pub last_prediction: Option<String>,
    pub records: usize,
    pub evaluable: usize,
    pub degraded: usize,
    pub availability: f64,
    pub stress_threshold: Option<f64>,
    pub alerts: AlertCounts,
    pub segments: Vec<SegmentSummary>,
    pub metrics: MetricsTable,
}

pub fn metrics_report(run: &BacktestRun, cfg: &RunConfig) -> Result<MetricsReport> {
    Ok(MetricsReport {
        config: config_echo(cfg)?,
        symbols: run.symbols.clone(),
        feature_names: run.feature_names.clone(),
        first_prediction: run.records.first().map(|r| r.date.to_string()),
        last_prediction: run.records.last().map(|r| r.date.to_string()),
        records: run.records.len(),
        evaluable: run.records.iter().filter(|r| r.is_evaluable()).count(),
        degraded: run.records.iter().filter(|r| r.forecast.degraded).count(),
        availability: run.availability(),
        stress_threshold: run.stress_threshold,
        alerts: overall_alerts(run),
        segments: run.segments.clone(),
        metrics: evaluate(&run.records, &run.symbols, cfg.alpha),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Ingest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes every backtest artifact into `dir`.
pub fn write_backtest_artifacts(dir: &Path, run: &BacktestRun, cfg: &RunConfig) -> Result<MetricsReport> {
    ensure_dir(dir)?;
    let report = metrics_report(run, cfg)?;
    write_records_csv(&dir.join(RECORDS_FILE), &run.records)?;
    write_json(&dir.join(METRICS_FILE), &report)?;
    write_rolling_csv(&dir.join(ROLLING_FILE), &run.records, cfg.windows.rolling_breach)?;
    write_alerts_csv(&dir.join(ALERTS_FILE), run)?;
    Ok(report)
}

fn cell(row: &MetricsRow) -> [String; 3] {
    [
        opt(row.breach_rate),
        row.breaches.to_string(),
        row.count.to_string(),
    ]
}

/// Writes the ablation summary, both tables and the fault log into `dir`.
pub fn write_ablation_artifacts(dir: &Path, runs: &AblationRuns) -> Result<()> {
    ensure_dir(dir)?;
    let s = &runs.summary;
    write_json(&dir.join(ABLATION_FILE), s)?;
    runs.fault_log.write_csv(dir.join(FAULT_LOG_FILE))?;

    let path = dir.join(COMPONENT_TABLE_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    let mut header = vec!["variant".to_string()];
    for col in ["clean_overall", "clean_stress", "corrupted_overall", "corrupted_stress"] {
        for suffix in ["rate", "breaches", "count"] {
            header.push(format!("{col}_{suffix}"));
        }
    }
    w.write_record(&header).map_err(|e| Error::csv(&path, e))?;
    for c in &s.components {
        let mut row = vec![c.variant.clone()];
        for m in [&c.clean_overall, &c.clean_stress, &c.corrupted_overall, &c.corrupted_stress] {
            row.extend(cell(m));
        }
        w.write_record(&row).map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(QUALITY_TABLE_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    w.write_record([
        "experiment",
        "overall_rate",
        "stress_rate",
        "pinball",
        "green",
        "orange",
        "red",
    ])
    .map_err(|e| Error::csv(&path, e))?;
    for q in &s.quality {
        w.write_record([
            q.experiment.clone(),
            opt(q.overall.breach_rate),
            opt(q.stress.breach_rate),
            opt(q.overall.pinball),
            q.alerts.green.to_string(),
            q.alerts.orange.to_string(),
            q.alerts.red.to_string(),
        ])
        .map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.2}", 100.0 * x))
}

fn fixed(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

/// Plain-text method x slice table for the headline slices.
pub fn render_metrics(report: &MetricsReport) -> String {
    let mut out = String::new();
    let a = &report.alerts;
    let _ = writeln!(
        out,
        "records {} (evaluable {}, degraded {}), availability {:.2}%",
        report.records,
        report.evaluable,
        report.degraded,
        100.0 * report.availability
    );
    let _ = writeln!(out, "alerts: {} green, {} orange, {} red", a.green, a.orange, a.red);
    let _ = writeln!(
        out,
        "{:<10} {:<14} {:>6} {:>5} {:>7} {:>7} {:>7} {:>9}",
        "method", "slice", "n", "x", "rate%", "LR", "p", "pinball"
    );
    for row in &report.metrics.rows {
        if row.slice.starts_with("symbol:") {
            continue;
        }
        let _ = writeln!(
            out,
            "{:<10} {:<14} {:>6} {:>5} {:>7} {:>7} {:>7} {:>9}",
            row.method,
            row.slice,
            row.count,
            row.breaches,
            pct(row.breach_rate),
            fixed(row.kupiec_lr, 2),
            fixed(row.kupiec_p, 3),
            fixed(row.pinball.map(|p| p * 1e4), 3),
        );
    }
    out.push_str("pinball in basis points of return\n");
    out
}

pub fn render_ablation(s: &AblationSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "corrupted {} of {} eligible rows (p = {}, fault seed = {}, run seed = {})",
        s.corrupted_rows, s.eligible_rows, s.probability, s.fault_seed, s.seed
    );
    let _ = writeln!(
        out,
        "alerts clean G/O/R {}/{}/{}, corrupted {}/{}/{}",
        s.clean_alerts.green,
        s.clean_alerts.orange,
        s.clean_alerts.red,
        s.corrupted_alerts.green,
        s.corrupted_alerts.orange,
        s.corrupted_alerts.red
    );
    let _ = writeln!(out, "\nbreach rate % by fallback variant");
    let _ = writeln!(
        out,
        "{:<18} {:>13} {:>12} {:>17} {:>16}",
        "variant", "clean overall", "clean stress", "corrupted overall", "corrupted stress"
    );
    for c in &s.components {
        let _ = writeln!(
            out,
            "{:<18} {:>13} {:>12} {:>17} {:>16}",
            c.variant,
            pct(c.clean_overall.breach_rate),
            pct(c.clean_stress.breach_rate),
            pct(c.corrupted_overall.breach_rate),
            pct(c.corrupted_stress.breach_rate),
        );
    }
    let _ = writeln!(out, "\nquality-layer ablation (corrupted inputs)");
    let _ = writeln!(
        out,
        "{:<20} {:>8} {:>8} {:>9} {:>16}",
        "experiment", "overall", "stress", "pinball", "G/O/R"
    );
    for q in &s.quality {
        let _ = writeln!(
            out,
            "{:<20} {:>8} {:>8} {:>9} {:>16}",
            q.experiment,
            pct(q.overall.breach_rate),
            pct(q.stress.breach_rate),
            fixed(q.overall.pinball.map(|p| p * 1e4), 3),
            format!("{}/{}/{}", q.alerts.green, q.alerts.orange, q.alerts.red),
        );
    }
    let _ = writeln!(out, "\ndirectional orderings (reported, not enforced)");
    for o in &s.orderings {
        let _ = writeln!(
            out,
            "{:<9} {} <= {}: {} ({} vs {})",
            o.panel,
            o.lower,
            o.upper,
            if o.holds { "holds" } else { "violated" },
            pct(o.lower_rate),
            pct(o.upper_rate)
        );
    }
    out
}
