//! Daily ETF tail-risk monitoring with data-quality scoring, a quantile ensemble VaR, uncertainty
//! scores and a conservative fallback, plus walk-forward backtests and fault injection.

pub mod backtest;
pub mod baselines;
pub mod cli;
pub mod config;
pub mod error;
pub mod faults;
pub mod gbm;
pub mod market_data;
pub mod quality;
pub mod risk_model;
pub mod safe_output;
pub mod stats;
pub mod uncertainty;

pub use error::{Error, Result};
