use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::engine::BacktestRecord;
use crate::safe_output::AlertLevel;
use crate::stats::{chi2_1_sf, pinball_loss};
use crate::uncertainty::UncertaintyState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Model,
    Safe,
    Hist252,
    Ewma,
    Gjr,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Model, Method::Safe, Method::Hist252, Method::Ewma, Method::Gjr];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Model => "model",
            Method::Safe => "safe",
            Method::Hist252 => "hist252",
            Method::Ewma => "ewma",
            Method::Gjr => "gjr",
        }
    }

    pub fn forecast(self, r: &BacktestRecord) -> Option<f64> {
        let f = &r.forecast;
        match self {
            Method::Model => Some(f.q_cal),
            Method::Safe => Some(f.safe.q_safe),
            Method::Hist252 => f.var_hist252,
            Method::Ewma => f.var_ewma,
            Method::Gjr => f.var_gjr,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `LR = 2[x ln(p̂/p) + (n-x) ln((1-p̂)/(1-p))]` with `0 ln 0 = 0`; returns `(LR, p-value)`.
pub fn kupiec_lr(n: usize, x: usize, p: f64) -> (f64, f64) {
    assert!(n > 0 && x <= n, "kupiec_lr needs 0 <= x <= n and n > 0");
    let (nf, xf) = (n as f64, x as f64);
    let p_hat = xf / nf;
    let term = |k: f64, ratio: f64| if k == 0.0 { 0.0 } else { k * ratio.ln() };
    let lr = 2.0 * (term(xf, p_hat / p) + term(nf - xf, (1.0 - p_hat) / (1.0 - p)));
    let lr = lr.max(0.0);
    (lr, chi2_1_sf(lr))
}

/// Breach and loss counts for one method over one slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub slice: String,
    pub count: usize,
    pub breaches: usize,
    /// `None` when the slice is empty.
    pub breach_rate: Option<f64>,
    pub kupiec_lr: Option<f64>,
    pub kupiec_p: Option<f64>,
    pub pinball: Option<f64>,
}

impl MetricsRow {
    pub fn from_pairs(method: &str, slice: &str, pairs: &[(f64, f64)], alpha: f64) -> Self {
        let count = pairs.len();
        let breaches = pairs.iter().filter(|(y, q)| y < q).count();
        let (breach_rate, kupiec_lr, kupiec_p, pinball) = if count == 0 {
            (None, None, None, None)
        } else {
            let (lr, pv) = kupiec_lr(count, breaches, alpha);
            let loss = pairs.iter().map(|(y, q)| pinball_loss(*y, *q, alpha)).sum::<f64>() / count as f64;
            (Some(breaches as f64 / count as f64), Some(lr), Some(pv), Some(loss))
        };
        MetricsRow {
            method: method.to_string(),
            slice: slice.to_string(),
            count,
            breaches,
            breach_rate,
            kupiec_lr,
            kupiec_p,
            pinball,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub alpha: f64,
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn get(&self, method: Method, slice: &str) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.method == method.as_str() && r.slice == slice)
    }
}

/// Slice labels a record belongs to, besides `overall`.
pub fn record_slices(r: &BacktestRecord) -> [String; 4] {
    [
        if r.evaluation.stress { "stress" } else { "non_stress" }.to_string(),
        match r.forecast.uncertainty.state {
            UncertaintyState::Low => "unc_low",
            UncertaintyState::Elevated => "unc_elevated",
        }
        .to_string(),
        format!("symbol:{}", r.symbol),
        format!("alert:{}", r.forecast.safe.alert),
    ]
}

/// Every slice name in a fixed order, including empty ones, for the given symbols.
pub fn slice_names(symbols: &[String]) -> Vec<String> {
    let mut names: Vec<String> = ["overall", "stress", "non_stress", "unc_low", "unc_elevated"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend(symbols.iter().map(|s| format!("symbol:{s}")));
    names.extend(AlertLevel::ALL.iter().map(|a| format!("alert:{a}")));
    names
}

/// Breach rate, Kupiec and pinball per method and slice over evaluable records.
pub fn evaluate(records: &[BacktestRecord], symbols: &[String], alpha: f64) -> MetricsTable {
    let names = slice_names(symbols);
    let mut rows = Vec::with_capacity(Method::ALL.len() * names.len());
    for method in Method::ALL {
        let mut by_slice: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
        let mut tagged: Vec<([String; 4], (f64, f64))> = Vec::new();
        for r in records {
            let (Some(y), Some(q)) = (r.evaluation.realized, method.forecast(r)) else {
                continue;
            };
            by_slice.entry("overall").or_default().push((y, q));
            tagged.push((record_slices(r), (y, q)));
        }
        for name in &names {
            let pairs: Vec<(f64, f64)> = if name == "overall" {
                by_slice.remove("overall").unwrap_or_default()
            } else {
                tagged
                    .iter()
                    .filter(|(tags, _)| tags.iter().any(|t| t == name))
                    .map(|(_, p)| *p)
                    .collect()
            };
            rows.push(MetricsRow::from_pairs(method.as_str(), name, &pairs, alpha));
        }
    }
    MetricsTable { alpha, rows }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingPoint {
    pub date: NaiveDate,
    pub method: String,
    pub rate: f64,
}

/// Pooled breach rate over the trailing `window` evaluable prediction dates, per method.
pub fn rolling_breach(records: &[BacktestRecord], window: usize) -> Vec<RollingPoint> {
    let mut by_date: BTreeMap<usize, Vec<&BacktestRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_evaluable()) {
        by_date.entry(r.date_idx).or_default().push(r);
    }
    let days: Vec<(NaiveDate, Vec<&BacktestRecord>)> = by_date
        .into_values()
        .map(|rs| (rs[0].date, rs))
        .collect();
    let mut out = Vec::new();
    if window == 0 || days.len() < window {
        return out;
    }
    for method in Method::ALL {
        let daily: Vec<(usize, usize)> = days
            .iter()
            .map(|(_, rs)| {
                let mut n = 0;
                let mut x = 0;
                for r in rs {
                    if let (Some(y), Some(q)) = (r.evaluation.realized, method.forecast(r)) {
                        n += 1;
                        x += usize::from(y < q);
                    }
                }
                (n, x)
            })
            .collect();
        for end in window..=daily.len() {
            let (n, x) = daily[end - window..end]
                .iter()
                .fold((0, 0), |(a, b), (n, x)| (a + n, b + x));
            if n > 0 {
                out.push(RollingPoint {
                    date: days[end - 1].0,
                    method: method.as_str().to_string(),
                    rate: x as f64 / n as f64,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertCounts {
    pub green: usize,
    pub orange: usize,
    pub red: usize,
}

impl AlertCounts {
    pub fn total(&self) -> usize {
        self.green + self.orange + self.red
    }

    pub fn elevated(&self) -> usize {
        self.orange + self.red
    }
}

pub fn alert_counts<'a>(alerts: impl IntoIterator<Item = &'a AlertLevel>) -> AlertCounts {
    let mut c = AlertCounts::default();
    for a in alerts {
        match a {
            AlertLevel::Green => c.green += 1,
            AlertLevel::Orange => c.orange += 1,
            AlertLevel::Red => c.red += 1,
        }
    }
    c
}
