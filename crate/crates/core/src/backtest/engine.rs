use std::sync::Arc;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::schedule::{build_schedule, Schedule, Segment};
use crate::baselines::{ewma_var, fit_gjr_garch, garch_step, garch_var, hist_var, GarchFit, GarchState, NORMAL_Q05};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::market_data::{compute_features, FeatureMatrix, FeatureSpec, PanelDataset};
use crate::quality::{assess_panel, QualityComponents, QualityReport};
use crate::risk_model::{fit_calibration, fit_ensemble, CalibrationState, LabelledRow, QuantileEnsemble};
use crate::safe_output::{decide, SafeDecision, SafeInputs, Variant};
use crate::stats::empirical_quantile;
use crate::uncertainty::{assess, model_dispersion, DriftTracker, OodModel, UncertaintyReport};

/// Everything the service knows on date `t` when forecasting `r_{t+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub segment: usize,
    pub scale_s: f64,
    pub q_raw: f64,
    pub q_cal: f64,
    pub c_t: f64,
    pub var_hist252: Option<f64>,
    pub var_hist63: Option<f64>,
    pub var_ewma: Option<f64>,
    pub var_gjr: Option<f64>,
    pub quality: QualityReport,
    pub uncertainty: UncertaintyReport,
    pub safe: SafeDecision,
    /// The forecast pipeline failed and conservative defaults were used.
    pub degraded: bool,
}

/// Evaluation-only quantities. Nothing in [`Forecast`] may depend on these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub realized: Option<f64>,
    pub stress: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRecord {
    pub symbol: String,
    pub symbol_idx: usize,
    pub date: NaiveDate,
    pub date_idx: usize,
    pub forecast: Forecast,
    pub evaluation: Evaluation,
}

impl BacktestRecord {
    pub fn safe_inputs(&self) -> SafeInputs {
        let f = &self.forecast;
        SafeInputs {
            q_cal: f.q_cal,
            q_hist63: f.var_hist63,
            scale_s: f.scale_s,
            score_u: f.uncertainty.score_u,
            score_q: f.quality.score_q,
            quality_state: f.quality.state,
            label: f.uncertainty.label,
            u_drift: f.uncertainty.u_drift,
        }
    }

    pub fn is_evaluable(&self) -> bool {
        self.evaluation.realized.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub segment: Segment,
    pub training_rows: usize,
    pub c_t: f64,
    pub calibration_residuals: usize,
    pub d_ref: Option<f64>,
    pub ood_degenerate: bool,
    /// Set when this segment's fit failed and an earlier model was carried forward.
    pub fit_error: Option<String>,
    pub garch_fitted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRun {
    pub schedule: Schedule,
    pub feature_names: Vec<String>,
    pub symbols: Vec<String>,
    pub segments: Vec<SegmentSummary>,
    pub stress_threshold: Option<f64>,
    /// Date-major: all symbols for the first prediction date, then the next date.
    pub records: Vec<BacktestRecord>,
}

impl BacktestRun {
    /// Records emitted over symbol-days in the prediction spans.
    pub fn availability(&self) -> f64 {
        let expected = self.symbols.len() * (self.schedule.end() - self.schedule.first_prediction());
        if expected == 0 {
            return 0.0;
        }
        self.records.len() as f64 / expected as f64
    }
}

struct SegmentModel {
    ensemble: Arc<QuantileEnsemble>,
    calibration: CalibrationState,
    ood: Arc<OodModel>,
}

fn segment_seed(seed: u64, seg: &Segment) -> u64 {
    seed ^ ((seg.pred_start as u64) << 16)
}

fn training_rows<'a>(
    service: &PanelDataset,
    features: &'a FeatureMatrix,
    from: usize,
    to: usize,
) -> Vec<LabelledRow<'a>> {
    // features at s, label r_{s+1}; both inside [from, to)
    let mut rows = Vec::new();
    for s in from..to.saturating_sub(1) {
        for sym in 0..service.n_symbols() {
            if let Some(label) = service.return_at(sym, s + 1) {
                rows.push(LabelledRow {
                    features: features.get(sym, s),
                    label,
                });
            }
        }
    }
    rows
}

fn fit_segment_ensemble(
    service: &PanelDataset,
    features: &FeatureMatrix,
    spec: &FeatureSpec,
    seg: &Segment,
    cfg: &RunConfig,
) -> Result<(QuantileEnsemble, OodModel)> {
    let rows = training_rows(service, features, seg.train_start, seg.pred_start);
    let ensemble = fit_ensemble(&rows, spec, &cfg.ensemble_params(), segment_seed(cfg.seed, seg))?;
    let x: Vec<Vec<f64>> = rows.iter().map(|r| ensemble.imputed_vector(r.features)).collect();
    let ood = OodModel::fit(&x, &cfg.uncertainty)?;
    Ok((ensemble, ood))
}

fn calibrate(
    service: &PanelDataset,
    features: &FeatureMatrix,
    ensemble: &QuantileEnsemble,
    seg: &Segment,
    cfg: &RunConfig,
) -> CalibrationState {
    let from = seg
        .calibration_start(cfg.windows.calibration)
        .saturating_sub(1)
        .max(seg.train_start);
    let rows = training_rows(service, features, from, seg.pred_start);
    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| ensemble.predict(r.features).ok().map(|f| (f.q_raw, r.label)))
        .collect();
    let mut state = fit_calibration(&pairs, cfg.alpha);
    state.first_date_idx = Some(from + 1);
    state.last_date_idx = Some(seg.pred_start - 1);
    state
}

fn fit_models(
    service: &PanelDataset,
    features: &FeatureMatrix,
    spec: &FeatureSpec,
    schedule: &Schedule,
    cfg: &RunConfig,
) -> (Vec<Option<SegmentModel>>, Vec<SegmentSummary>) {
    let fits: Vec<Result<(QuantileEnsemble, OodModel)>> = schedule
        .segments
        .par_iter()
        .map(|seg| fit_segment_ensemble(service, features, spec, seg, cfg))
        .collect();

    let mut models: Vec<Option<SegmentModel>> = Vec::with_capacity(fits.len());
    let mut summaries = Vec::with_capacity(fits.len());
    let mut last_good: Option<(Arc<QuantileEnsemble>, Arc<OodModel>)> = None;
    for (seg, fit) in schedule.segments.iter().zip(fits) {
        let training = training_rows(service, features, seg.train_start, seg.pred_start).len();
        let previous = last_good.as_ref().map(|(e, _)| e.clone());
        let (current, fit_error) = match fit {
            Ok((e, o)) => (Some((Arc::new(e), Arc::new(o))), None),
            Err(e) => {
                log::warn!("segment {} fit failed: {e}; reusing the previous model", seg.index);
                (last_good.clone(), Some(e.to_string()))
            }
        };
        let model = current.clone().map(|(ensemble, ood)| {
            let calib_model = match (&previous, cfg.model.out_of_sample_calibration, &fit_error) {
                (Some(prev), true, None) => prev.clone(),
                _ => ensemble.clone(),
            };
            let calibration = calibrate(service, features, &calib_model, seg, cfg);
            SegmentModel {
                ensemble,
                calibration,
                ood,
            }
        });
        summaries.push(SegmentSummary {
            segment: *seg,
            training_rows: training,
            c_t: model.as_ref().map_or(0.0, |m| m.calibration.c_t),
            calibration_residuals: model.as_ref().map_or(0, |m| m.calibration.n_residuals),
            d_ref: model.as_ref().map(|m| m.ood.d_ref),
            ood_degenerate: model.as_ref().is_some_and(|m| m.ood.degenerate),
            fit_error,
            garch_fitted: 0,
        });
        if current.is_some() {
            last_good = current;
        }
        models.push(model);
    }
    (models, summaries)
}

fn fit_garch_all(service: &PanelDataset, schedule: &Schedule) -> Vec<Vec<Option<GarchFit>>> {
    // [segment][symbol]
    schedule
        .segments
        .par_iter()
        .map(|seg| {
            (0..service.n_symbols())
                .into_par_iter()
                .map(|sym| {
                    let r: Vec<Option<f64>> = service.series[sym].bars[seg.train_start..seg.pred_start]
                        .iter()
                        .map(|b| b.ret)
                        .collect();
                    match fit_gjr_garch(&r) {
                        Ok(f) => Some(f),
                        Err(e) => {
                            log::debug!("GJR-GARCH skipped for {} at {}: {e}", service.series[sym].symbol, seg.pred_start);
                            None
                        }
                    }
                })
                .collect()
        })
        .collect()
}

struct DayContext<'a> {
    cfg: &'a RunConfig,
    features: &'a FeatureMatrix,
    quality: &'a [Vec<QualityReport>],
}

/// Quantities that do not depend on the fitted model.
struct DayBase {
    segment: usize,
    scale_s: f64,
    var_hist252: Option<f64>,
    var_hist63: Option<f64>,
    var_ewma: Option<f64>,
    var_gjr: Option<f64>,
}

impl DayBase {
    fn forecast(
        &self,
        q_raw: f64,
        c_t: f64,
        quality: QualityReport,
        uncertainty: UncertaintyReport,
        cfg: &RunConfig,
        degraded: bool,
    ) -> Forecast {
        let q_cal = q_raw + c_t;
        let inputs = SafeInputs {
            q_cal,
            q_hist63: self.var_hist63,
            scale_s: self.scale_s,
            score_u: uncertainty.score_u,
            score_q: quality.score_q,
            quality_state: quality.state,
            label: uncertainty.label,
            u_drift: uncertainty.u_drift,
        };
        Forecast {
            segment: self.segment,
            scale_s: self.scale_s,
            q_raw,
            q_cal,
            c_t,
            var_hist252: self.var_hist252,
            var_hist63: self.var_hist63,
            var_ewma: self.var_ewma,
            var_gjr: self.var_gjr,
            quality,
            uncertainty,
            safe: decide(&inputs, Variant::Full, &cfg.safe),
            degraded,
        }
    }

    /// Worst quality and uncertainty, forecast taken from the anchor, EWMA or a normal band.
    fn degraded(&self, cfg: &RunConfig) -> Forecast {
        let q = self
            .var_hist63
            .or(self.var_ewma)
            .unwrap_or(NORMAL_Q05 * self.scale_s);
        let quality = QualityReport::from_components(QualityComponents::WORST, &cfg.quality);
        self.forecast(q, 0.0, quality, UncertaintyReport::worst(), cfg, true)
    }
}

fn model_forecast(
    base: &DayBase,
    sym: usize,
    t: usize,
    model: Option<&SegmentModel>,
    tracker: &DriftTracker,
    ctx: &DayContext<'_>,
) -> Result<Forecast> {
    let cfg = ctx.cfg;
    let model = model.ok_or_else(|| Error::Fit("no fitted model for this segment".into()))?;
    let row = ctx.features.get(sym, t);
    let fc = model.ensemble.predict(row)?;
    let c_t = model.calibration.c_t;
    if !(fc.q_raw + c_t).is_finite() {
        return Err(Error::Fit(format!("non-finite forecast {}", fc.q_raw + c_t)));
    }
    let up = &cfg.uncertainty;
    let u_model = model_dispersion(&fc.member_preds, base.scale_s, up);
    let u_ood = model.ood.score(&model.ensemble.imputed_vector(row), up)?;
    let u_drift = tracker.drift_score(0, cfg.alpha, up);
    let uncertainty = assess(u_model, u_ood, u_drift, tracker, 0, up);
    Ok(base.forecast(fc.q_raw, c_t, ctx.quality[sym][t], uncertainty, cfg, false))
}

fn run_symbol(
    sym: usize,
    service: &PanelDataset,
    schedule: &Schedule,
    models: &[Option<SegmentModel>],
    garch: &[Vec<Option<GarchFit>>],
    ctx: &DayContext<'_>,
) -> Vec<Forecast> {
    let cfg = ctx.cfg;
    let bars = &service.series[sym].bars;
    let first = schedule.first_prediction();
    let mut tracker = DriftTracker::new(1, &cfg.uncertainty);
    let mut observed: Vec<f64> = bars[..first].iter().filter_map(|b| b.ret).collect();
    let mut prev_q_cal: Option<f64> = None;
    let mut out = Vec::with_capacity(schedule.end() - first);

    for seg in &schedule.segments {
        let fit = garch[seg.index][sym].as_ref();
        let window: Vec<Option<f64>> = bars[seg.train_start..seg.pred_start].iter().map(|b| b.ret).collect();
        let mut garch_state: Option<GarchState> = fit.map(|f| f.filter(&window));
        for t in seg.pred_start..seg.pred_end {
            let r_t = bars[t].ret;
            // yesterday's forecast is now evaluable
            if let (Some(q), Some(r)) = (prev_q_cal, r_t) {
                tracker.record_outcome(0, r, q);
            }
            if let Some(r) = r_t {
                observed.push(r);
            }
            let var_gjr = match (fit, garch_state.as_mut()) {
                (Some(f), Some(state)) => {
                    *state = garch_step(&f.params, state, r_t);
                    Some(garch_var(&f.params, state, cfg.alpha))
                }
                _ => None,
            };
            let row = ctx.features.get(sym, t);
            let base = DayBase {
                segment: seg.index,
                scale_s: row.scale_s,
                var_hist252: hist_var(&observed, cfg.windows.hist_long, cfg.alpha),
                var_hist63: hist_var(&observed, cfg.windows.hist_short, cfg.alpha),
                var_ewma: ewma_var(row.ewma_vol),
                var_gjr,
            };
            let forecast = match model_forecast(&base, sym, t, models[seg.index].as_ref(), &tracker, ctx) {
                Ok(f) => f,
                Err(e) => {
                    log::warn!(
                        "{} {}: {e}; emitting conservative record",
                        service.series[sym].symbol,
                        service.dates[t]
                    );
                    base.degraded(cfg)
                }
            };
            prev_q_cal = Some(forecast.q_cal);
            tracker.record_u(0, forecast.uncertainty.score_u);
            out.push(forecast);
        }
    }
    out
}

/// Pooled `quantile` of the VIX over prediction dates; `None` if no VIX is observed.
pub fn stress_threshold(vix: &[Option<f64>], quantile: f64) -> Option<f64> {
    let values: Vec<f64> = vix.iter().flatten().copied().collect();
    if values.is_empty() {
        log::warn!("no VIX observations in the prediction sample; no day is flagged as stress");
        return None;
    }
    empirical_quantile(&values, quantile).ok()
}

/// Stress flag per date: VIX at or above the threshold. Missing VIX is non-stress.
pub fn stress_mask(vix: &[Option<f64>], quantile: f64) -> Vec<bool> {
    match stress_threshold(vix, quantile) {
        Some(th) => vix.iter().map(|v| v.is_some_and(|v| v >= th)).collect(),
        None => vec![false; vix.len()],
    }
}

/// Walk-forward run on a clean panel (service inputs are also the evaluation reference).
pub fn run_backtest(panel: &PanelDataset, cfg: &RunConfig) -> Result<BacktestRun> {
    run_backtest_with_reference(panel, panel, cfg)
}

/// Walk-forward run where the service sees `service` and realized returns for evaluation come
/// from `reference` (the clean panel when inputs are corrupted).
pub fn run_backtest_with_reference(
    service: &PanelDataset,
    reference: &PanelDataset,
    cfg: &RunConfig,
) -> Result<BacktestRun> {
    cfg.validate()?;
    if service.n_symbols() == 0 {
        return Err(Error::InsufficientData("panel has no symbols".into()));
    }
    if reference.n_dates() != service.n_dates() || reference.n_symbols() != service.n_symbols() {
        return Err(Error::InsufficientData(
            "reference panel does not match the service panel's shape".into(),
        ));
    }
    let schedule = build_schedule(service.n_dates(), cfg.windows.train, cfg.windows.refit_step)?;

    let mut features = compute_features(service, cfg.model.ewma_lambda);
    let quality = assess_panel(service, &mut features, &cfg.quality);
    let symbols = service.symbols();
    let spec = FeatureSpec::new(&symbols, cfg.model.include_quality_feature);

    let (models, mut summaries) = fit_models(service, &features, &spec, &schedule, cfg);
    let garch = fit_garch_all(service, &schedule);
    for (s, g) in summaries.iter_mut().zip(&garch) {
        s.garch_fitted = g.iter().filter(|f| f.is_some()).count();
    }

    let ctx = DayContext {
        cfg,
        features: &features,
        quality: &quality,
    };
    let per_symbol: Vec<Vec<Forecast>> = (0..service.n_symbols())
        .into_par_iter()
        .map(|sym| run_symbol(sym, service, &schedule, &models, &garch, &ctx))
        .collect();

    let first = schedule.first_prediction();
    let vix: Vec<Option<f64>> = (first..schedule.end()).map(|t| reference.vix(t)).collect();
    let threshold = stress_threshold(&vix, cfg.windows.stress_quantile);

    let mut records = Vec::with_capacity(per_symbol.len() * (schedule.end() - first));
    let mut iters: Vec<_> = per_symbol.into_iter().map(Vec::into_iter).collect();
    for t in first..schedule.end() {
        let stress = match (threshold, reference.vix(t)) {
            (Some(th), Some(v)) => v >= th,
            _ => false,
        };
        for (sym, it) in iters.iter_mut().enumerate() {
            let forecast = it.next().expect("one forecast per symbol-day");
            records.push(BacktestRecord {
                symbol: symbols[sym].clone(),
                symbol_idx: sym,
                date: service.dates[t],
                date_idx: t,
                forecast,
                evaluation: Evaluation {
                    realized: reference.return_at(sym, t + 1),
                    stress,
                },
            });
        }
    }

    Ok(BacktestRun {
        schedule,
        feature_names: spec.names.clone(),
        symbols,
        segments: summaries,
        stress_threshold: threshold,
        records,
    })
}
