//! C ABI over the `tailwatch` library.
//!
//! Panels and backtest runs live behind opaque handles that the caller frees. Every function
//! returns a [`TwStatus`]; on failure `tw_last_error()` describes the problem for the calling
//! thread. Missing numeric values are reported as NaN.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use tailwatch::backtest::{kupiec_lr, run_backtest, write_backtest_artifacts, BacktestRun};
use tailwatch::config::RunConfig;
use tailwatch::market_data::{generate_synthetic_panel, load_macro, load_panel, PanelDataset, SyntheticConfig};
use tailwatch::quality::{quality_score, quality_state, QualityComponents, QualityParams, QualityState};
use tailwatch::safe_output::{safe_var, AlertLevel};
use tailwatch::stats::empirical_quantile;
use tailwatch::uncertainty::UncertaintyState;
use tailwatch::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    DataError = 4,
    InternalError = 5,
    OutOfRange = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwAlert {
    Green = 0,
    Orange = 1,
    Red = 2,
}

/// Loaded or generated market panel.
pub struct TwPanel {
    inner: PanelDataset,
}

/// Finished walk-forward run together with the configuration that produced it.
pub struct TwBacktest {
    run: BacktestRun,
    config: RunConfig,
}

/// Flat view of one backtest record. Indices refer to the panel's symbol and date order.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TwRecord {
    pub symbol_index: usize,
    pub date_index: usize,
    /// Date as `yyyymmdd`.
    pub date_ymd: i32,
    pub q_raw: f64,
    pub q_cal: f64,
    pub q_safe: f64,
    pub var_hist252: f64,
    pub var_hist63: f64,
    pub var_ewma: f64,
    pub var_gjr: f64,
    pub score_q: f64,
    /// 0 green, 1 yellow, 2 red.
    pub quality_state: i32,
    pub score_u: f64,
    /// 0 low, 1 elevated.
    pub uncertainty_state: i32,
    pub adjustment_a: f64,
    pub ratio_r: f64,
    pub alert: TwAlert,
    pub degraded: bool,
    /// Next-day return used for evaluation only.
    pub realized_next: f64,
    pub stress: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(TwStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) => TwStatus::ConfigError,
            e if e.is_data_error() => TwStatus::DataError,
            _ => TwStatus::InternalError,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: TwStatus, msg: &str) -> Result<T, Failure> {
    Err(Failure(status, msg.to_string()))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            TwStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside tailwatch");
            TwStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return fail(TwStatus::NullPointer, &format!("{what} is null"));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => fail(TwStatus::InvalidArgument, &format!("{what} is not UTF-8")),
    }
}

unsafe fn out_ref<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().map_or_else(|| fail(TwStatus::NullPointer, "output pointer is null"), Ok)
}

fn nan(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

/// Message for the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn tw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a long-format panel CSV and an optional macro CSV (`macro_path` may be null).
#[no_mangle]
pub unsafe extern "C" fn tw_panel_load(
    panel_path: *const c_char,
    macro_path: *const c_char,
    out: *mut *mut TwPanel,
) -> TwStatus {
    guard(|| {
        let out = out_ref(out)?;
        let cfg = RunConfig::default();
        let path = path_arg(panel_path, "panel_path")?;
        let mut panel = load_panel(path, &cfg.data.panel_schema)?;
        if !macro_path.is_null() {
            let m = path_arg(macro_path, "macro_path")?;
            panel = panel.with_macro(load_macro(m, &cfg.data.macro_schema)?);
        }
        *out = Box::into_raw(Box::new(TwPanel { inner: panel }));
        Ok(())
    })
}

/// Generates a seeded synthetic panel with default process settings.
#[no_mangle]
pub unsafe extern "C" fn tw_panel_synthetic(
    n_symbols: usize,
    n_days: usize,
    seed: u64,
    out: *mut *mut TwPanel,
) -> TwStatus {
    guard(|| {
        let out = out_ref(out)?;
        if n_symbols == 0 || n_symbols > 6 || n_days == 0 {
            return fail(TwStatus::InvalidArgument, "need 1..=6 symbols and at least one day");
        }
        let panel = generate_synthetic_panel(&SyntheticConfig {
            n_symbols,
            n_days,
            seed,
            ..SyntheticConfig::default()
        });
        *out = Box::into_raw(Box::new(TwPanel { inner: panel }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tw_panel_shape(
    panel: *const TwPanel,
    n_symbols: *mut usize,
    n_dates: *mut usize,
) -> TwStatus {
    guard(|| {
        let p = panel.as_ref().ok_or(Failure(TwStatus::NullPointer, "panel is null".into()))?;
        *out_ref(n_symbols)? = p.inner.n_symbols();
        *out_ref(n_dates)? = p.inner.n_dates();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tw_panel_free(panel: *mut TwPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// Runs the walk-forward backtest. `config_toml` holds a TOML run configuration or is null for
/// defaults.
#[no_mangle]
pub unsafe extern "C" fn tw_backtest_run(
    panel: *const TwPanel,
    config_toml: *const c_char,
    out: *mut *mut TwBacktest,
) -> TwStatus {
    guard(|| {
        let out = out_ref(out)?;
        let p = panel.as_ref().ok_or(Failure(TwStatus::NullPointer, "panel is null".into()))?;
        let config = if config_toml.is_null() {
            RunConfig::default()
        } else {
            let text = CStr::from_ptr(config_toml)
                .to_str()
                .map_err(|_| Failure(TwStatus::InvalidArgument, "config is not UTF-8".into()))?;
            RunConfig::from_toml_str(text)?
        };
        let run = run_backtest(&p.inner, &config)?;
        *out = Box::into_raw(Box::new(TwBacktest { run, config }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tw_backtest_len(bt: *const TwBacktest, len: *mut usize) -> TwStatus {
    guard(|| {
        let b = bt.as_ref().ok_or(Failure(TwStatus::NullPointer, "backtest is null".into()))?;
        *out_ref(len)? = b.run.records.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tw_backtest_record(bt: *const TwBacktest, index: usize, out: *mut TwRecord) -> TwStatus {
    guard(|| {
        let b = bt.as_ref().ok_or(Failure(TwStatus::NullPointer, "backtest is null".into()))?;
        let out = out_ref(out)?;
        let Some(r) = b.run.records.get(index) else {
            return fail(
                TwStatus::OutOfRange,
                &format!("record {index} out of range ({} records)", b.run.records.len()),
            );
        };
        let f = &r.forecast;
        let ymd: i32 = r.date.format("%Y%m%d").to_string().parse().unwrap_or(0);
        *out = TwRecord {
            symbol_index: r.symbol_idx,
            date_index: r.date_idx,
            date_ymd: ymd,
            q_raw: f.q_raw,
            q_cal: f.q_cal,
            q_safe: f.safe.q_safe,
            var_hist252: nan(f.var_hist252),
            var_hist63: nan(f.var_hist63),
            var_ewma: nan(f.var_ewma),
            var_gjr: nan(f.var_gjr),
            score_q: f.quality.score_q,
            quality_state: f.quality.state as i32,
            score_u: f.uncertainty.score_u,
            uncertainty_state: match f.uncertainty.state {
                UncertaintyState::Low => 0,
                UncertaintyState::Elevated => 1,
            },
            adjustment_a: f.safe.adjustment_a,
            ratio_r: f.safe.ratio_r,
            alert: match f.safe.alert {
                AlertLevel::Green => TwAlert::Green,
                AlertLevel::Orange => TwAlert::Orange,
                AlertLevel::Red => TwAlert::Red,
            },
            degraded: f.degraded,
            realized_next: nan(r.evaluation.realized),
            stress: r.evaluation.stress,
        };
        Ok(())
    })
}

/// Writes records.csv, metrics.json, rolling_breach.csv and alerts.csv into `dir`.
#[no_mangle]
pub unsafe extern "C" fn tw_backtest_write(bt: *const TwBacktest, dir: *const c_char) -> TwStatus {
    guard(|| {
        let b = bt.as_ref().ok_or(Failure(TwStatus::NullPointer, "backtest is null".into()))?;
        let dir = path_arg(dir, "dir")?;
        write_backtest_artifacts(&dir, &b.run, &b.config)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tw_backtest_free(bt: *mut TwBacktest) {
    if !bt.is_null() {
        drop(Box::from_raw(bt));
    }
}

/// Kupiec unconditional-coverage statistic and its chi-square(1) p-value.
#[no_mangle]
pub unsafe extern "C" fn tw_kupiec_lr(n: usize, x: usize, p: f64, lr: *mut f64, pvalue: *mut f64) -> TwStatus {
    guard(|| {
        if n == 0 || x > n || !(p > 0.0 && p < 1.0) {
            return fail(TwStatus::InvalidArgument, "need n > 0, x <= n and 0 < p < 1");
        }
        let (l, pv) = kupiec_lr(n, x, p);
        *out_ref(lr)? = l;
        *out_ref(pvalue)? = pv;
        Ok(())
    })
}

/// Weighted quality score and state (0 green, 1 yellow, 2 red) from the five components
/// (miss, ohlc, jump, vol, stale), using the default weights and thresholds.
#[no_mangle]
pub unsafe extern "C" fn tw_quality_score(components: *const f64, score: *mut f64, state: *mut i32) -> TwStatus {
    guard(|| {
        if components.is_null() {
            return fail(TwStatus::NullPointer, "components is null");
        }
        let c = std::slice::from_raw_parts(components, 5);
        if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return fail(TwStatus::InvalidArgument, "components must lie in [0, 1]");
        }
        let params = QualityParams::default();
        let comps = QualityComponents {
            q_miss: c[0],
            q_ohlc: c[1],
            q_jump: c[2],
            q_vol: c[3],
            q_stale: c[4],
        };
        let q = quality_score(&comps, &params);
        *out_ref(score)? = q;
        *out_ref(state)? = match quality_state(q, &params) {
            QualityState::Green => 0,
            QualityState::Yellow => 1,
            QualityState::Red => 2,
        };
        Ok(())
    })
}

/// `min(q_hist63, q_cal - a)`; pass NaN for a missing anchor.
#[no_mangle]
pub unsafe extern "C" fn tw_safe_var(q_cal: f64, q_hist63: f64, a: f64, out: *mut f64) -> TwStatus {
    guard(|| {
        if !q_cal.is_finite() || !a.is_finite() || a < 0.0 {
            return fail(TwStatus::InvalidArgument, "q_cal must be finite and a finite and non-negative");
        }
        let anchor = if q_hist63.is_nan() { None } else { Some(q_hist63) };
        *out_ref(out)? = safe_var(q_cal, anchor, a);
        Ok(())
    })
}

/// Linear-interpolation empirical quantile of `n` values.
#[no_mangle]
pub unsafe extern "C" fn tw_empirical_quantile(values: *const f64, n: usize, alpha: f64, out: *mut f64) -> TwStatus {
    guard(|| {
        if values.is_null() {
            return fail(TwStatus::NullPointer, "values is null");
        }
        let v = std::slice::from_raw_parts(values, n);
        let q = empirical_quantile(v, alpha).map_err(|e| Failure(TwStatus::InvalidArgument, e.to_string()))?;
        *out_ref(out)? = q;
        Ok(())
    })
}
