//! Fallback-component and quality-layer ablations on clean and corrupted inputs.

use serde::{Deserialize, Serialize};

use super::engine::{run_backtest, run_backtest_with_reference, BacktestRecord, BacktestRun};
use super::metrics::{alert_counts, AlertCounts, MetricsRow};
use crate::config::RunConfig;
use crate::error::Result;
use crate::faults::{corrupt_panel, FaultLog, FaultMode};
use crate::market_data::PanelDataset;
use crate::safe_output::{decide, AlertLevel, SafeParams, Variant};

/// One row of the fallback-component comparison (clean/corrupted x overall/stress).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRow {
    pub variant: String,
    pub clean_overall: MetricsRow,
    pub clean_stress: MetricsRow,
    pub corrupted_overall: MetricsRow,
    pub corrupted_stress: MetricsRow,
}

/// One row of the quality-layer ablation on the corrupted panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityAblationRow {
    pub experiment: String,
    pub overall: MetricsRow,
    pub stress: MetricsRow,
    pub alerts: AlertCounts,
}

/// A directional breach-rate relation; reported, never enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub panel: String,
    pub lower: String,
    pub upper: String,
    pub lower_rate: Option<f64>,
    pub upper_rate: Option<f64>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub seed: u64,
    pub fault_seed: u64,
    pub probability: f64,
    pub modes: Vec<FaultMode>,
    pub eligible_rows: usize,
    pub corrupted_rows: usize,
    pub feature_columns_full: usize,
    pub feature_columns_no_quality: usize,
    pub clean_alerts: AlertCounts,
    pub corrupted_alerts: AlertCounts,
    pub clean_availability: f64,
    pub corrupted_availability: f64,
    pub components: Vec<ComponentRow>,
    pub quality: Vec<QualityAblationRow>,
    pub orderings: Vec<OrderingCheck>,
}

pub struct AblationRuns {
    pub clean: BacktestRun,
    pub corrupted: BacktestRun,
    pub no_quality_feature: BacktestRun,
    pub corrupted_panel: PanelDataset,
    pub fault_log: FaultLog,
    pub summary: AblationSummary,
}

/// Forecast/realized pairs for a variant recomputed from each record's safe inputs.
fn variant_pairs(
    records: &[BacktestRecord],
    variant: Variant,
    params: &SafeParams,
    stress_only: bool,
) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter(|r| !stress_only || r.evaluation.stress)
        .filter_map(|r| {
            let y = r.evaluation.realized?;
            Some((y, decide(&r.safe_inputs(), variant, params).q_safe))
        })
        .collect()
}

fn variant_rows(
    records: &[BacktestRecord],
    variant: Variant,
    cfg: &RunConfig,
) -> (MetricsRow, MetricsRow) {
    let name = variant.as_str();
    let overall = variant_pairs(records, variant, &cfg.safe, false);
    let stress = variant_pairs(records, variant, &cfg.safe, true);
    (
        MetricsRow::from_pairs(name, "overall", &overall, cfg.alpha),
        MetricsRow::from_pairs(name, "stress", &stress, cfg.alpha),
    )
}

fn variant_alerts(records: &[BacktestRecord], variant: Variant, params: &SafeParams) -> AlertCounts {
    let alerts: Vec<AlertLevel> = records
        .iter()
        .map(|r| decide(&r.safe_inputs(), variant, params).alert)
        .collect();
    alert_counts(&alerts)
}

pub fn component_table(clean: &[BacktestRecord], corrupted: &[BacktestRecord], cfg: &RunConfig) -> Vec<ComponentRow> {
    Variant::FALLBACK_COMPARISON
        .iter()
        .map(|&v| {
            let (clean_overall, clean_stress) = variant_rows(clean, v, cfg);
            let (corrupted_overall, corrupted_stress) = variant_rows(corrupted, v, cfg);
            ComponentRow {
                variant: v.as_str().to_string(),
                clean_overall,
                clean_stress,
                corrupted_overall,
                corrupted_stress,
            }
        })
        .collect()
}

pub fn quality_table(
    corrupted: &[BacktestRecord],
    no_quality_feature: &[BacktestRecord],
    cfg: &RunConfig,
) -> Vec<QualityAblationRow> {
    let row = |name: &str, records: &[BacktestRecord], variant: Variant| {
        let (mut overall, mut stress) = variant_rows(records, variant, cfg);
        overall.method = name.to_string();
        stress.method = name.to_string();
        QualityAblationRow {
            experiment: name.to_string(),
            overall,
            stress,
            alerts: variant_alerts(records, variant, &cfg.safe),
        }
    };
    vec![
        row("full", corrupted, Variant::Full),
        row("no_quality_feature", no_quality_feature, Variant::Full),
        row("no_quality_service", corrupted, Variant::NoQualityService),
    ]
}

/// `full <= quality_only, uncertainty_only <= simple <= raw` on overall breach rates.
pub fn orderings(components: &[ComponentRow]) -> Vec<OrderingCheck> {
    const PAIRS: [(&str, &str); 5] = [
        ("full", "quality_only"),
        ("full", "uncertainty_only"),
        ("quality_only", "simple"),
        ("uncertainty_only", "simple"),
        ("simple", "raw"),
    ];
    let rate = |name: &str, corrupted: bool| {
        components.iter().find(|c| c.variant == name).and_then(|c| {
            if corrupted {
                c.corrupted_overall.breach_rate
            } else {
                c.clean_overall.breach_rate
            }
        })
    };
    let mut out = Vec::new();
    for (panel, corrupted) in [("clean", false), ("corrupted", true)] {
        for (lo, hi) in PAIRS {
            let (a, b) = (rate(lo, corrupted), rate(hi, corrupted));
            out.push(OrderingCheck {
                panel: panel.to_string(),
                lower: lo.to_string(),
                upper: hi.to_string(),
                lower_rate: a,
                upper_rate: b,
                holds: matches!((a, b), (Some(a), Some(b)) if a <= b),
            });
        }
    }
    out
}

/// Builds the tables from already computed runs.
pub fn summarize(
    clean: &BacktestRun,
    corrupted: &BacktestRun,
    no_quality_feature: &BacktestRun,
    log: &FaultLog,
    cfg: &RunConfig,
) -> AblationSummary {
    let components = component_table(&clean.records, &corrupted.records, cfg);
    let mut modes = cfg.faults.modes.clone();
    modes.sort();
    modes.dedup();
    AblationSummary {
        seed: cfg.seed,
        fault_seed: cfg.faults.seed,
        probability: cfg.faults.probability,
        modes,
        eligible_rows: log.eligible_rows,
        corrupted_rows: log.len(),
        feature_columns_full: corrupted.feature_names.len(),
        feature_columns_no_quality: no_quality_feature.feature_names.len(),
        clean_alerts: alert_counts(clean.records.iter().map(|r| &r.forecast.safe.alert)),
        corrupted_alerts: alert_counts(corrupted.records.iter().map(|r| &r.forecast.safe.alert)),
        clean_availability: clean.availability(),
        corrupted_availability: corrupted.availability(),
        orderings: orderings(&components),
        quality: quality_table(&corrupted.records, &no_quality_feature.records, cfg),
        components,
    }
}

/// Corrupts the panel from the first prediction date on and runs the corrupted service twice
/// (with and without the quality feature). Evaluation always uses the clean panel.
pub fn run_corrupted(panel: &PanelDataset, cfg: &RunConfig) -> Result<(BacktestRun, BacktestRun, PanelDataset, FaultLog)> {
    let (corrupted_panel, log) = corrupt_panel(panel, &cfg.faults, cfg.windows.train)?;
    log::info!(
        "corrupted {} of {} eligible rows (p = {}, seed = {})",
        log.len(),
        log.eligible_rows,
        log.probability,
        log.seed
    );
    let corrupted = run_backtest_with_reference(&corrupted_panel, panel, cfg)?;
    let mut no_q = cfg.clone();
    no_q.model.include_quality_feature = false;
    let no_quality_feature = run_backtest_with_reference(&corrupted_panel, panel, &no_q)?;
    Ok((corrupted, no_quality_feature, corrupted_panel, log))
}

/// Clean run, corrupted run and the corrupted run without the quality feature.
pub fn run_ablations(panel: &PanelDataset, cfg: &RunConfig) -> Result<AblationRuns> {
    let clean = run_backtest(panel, cfg)?;
    run_ablations_from_clean(panel, cfg, clean)
}

pub fn run_ablations_from_clean(panel: &PanelDataset, cfg: &RunConfig, clean: BacktestRun) -> Result<AblationRuns> {
    let (corrupted, no_quality_feature, corrupted_panel, fault_log) = run_corrupted(panel, cfg)?;
    let summary = summarize(&clean, &corrupted, &no_quality_feature, &fault_log, cfg);
    Ok(AblationRuns {
        clean,
        corrupted,
        no_quality_feature,
        corrupted_panel,
        fault_log,
        summary,
    })
}
