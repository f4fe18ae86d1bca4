//! Benchmark VaR models: rolling historical quantile, EWMA-normal and GJR-GARCH(1,1)-t.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::stats::{empirical_quantile, sample_sd, student_t_quantile};

/// Standard normal 5% quantile as used by the EWMA benchmark.
pub const NORMAL_Q05: f64 = -1.64485;

pub const MIN_GARCH_RETURNS: usize = 250;
const MAX_PERSISTENCE: f64 = 0.999;
const MAX_NU: f64 = 500.0;

/// Empirical `alpha`-quantile of the trailing `window` returns, `None` on a short history.
pub fn hist_var(returns: &[f64], window: usize, alpha: f64) -> Option<f64> {
    if window == 0 || returns.len() < window {
        return None;
    }
    empirical_quantile(&returns[returns.len() - window..], alpha).ok()
}

pub fn ewma_var(ewma_vol: Option<f64>) -> Option<f64> {
    ewma_vol.map(|s| NORMAL_Q05 * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GjrGarchParams {
    pub omega: f64,
    pub alpha_arch: f64,
    pub gamma_lev: f64,
    pub beta_garch: f64,
    pub nu: f64,
}

impl GjrGarchParams {
    pub fn persistence(&self) -> f64 {
        self.alpha_arch + self.gamma_lev / 2.0 + self.beta_garch
    }

    pub fn is_valid(&self) -> bool {
        self.omega > 0.0
            && self.alpha_arch >= 0.0
            && self.gamma_lev >= 0.0
            && self.beta_garch >= 0.0
            && self.persistence() < 1.0
            && self.nu > 2.0
    }

    /// Fixed starting point, variance-targeted to the sample.
    pub fn initial(sample_var: f64) -> Self {
        let (alpha_arch, gamma_lev, beta_garch) = (0.05, 0.05, 0.85);
        GjrGarchParams {
            omega: sample_var * (1.0 - (alpha_arch + gamma_lev / 2.0 + beta_garch)),
            alpha_arch,
            gamma_lev,
            beta_garch,
            nu: 8.0,
        }
    }

    fn to_theta(self) -> Vec<f64> {
        let p = self.persistence();
        let w = [self.alpha_arch / p, self.gamma_lev / 2.0 / p, self.beta_garch / p];
        let x = p / MAX_PERSISTENCE;
        let floor = 1e-9;
        vec![
            self.omega.ln(),
            (x / (1.0 - x)).ln(),
            (w[0].max(floor) / w[2].max(floor)).ln(),
            (w[1].max(floor) / w[2].max(floor)).ln(),
            (self.nu - 2.0).ln(),
        ]
    }

    fn from_theta(t: &[f64]) -> Self {
        let p = MAX_PERSISTENCE / (1.0 + (-t[1]).exp());
        let (e0, e1) = (t[2].min(50.0).exp(), t[3].min(50.0).exp());
        let z = e0 + e1 + 1.0;
        GjrGarchParams {
            omega: t[0].exp(),
            alpha_arch: p * e0 / z,
            gamma_lev: 2.0 * p * e1 / z,
            beta_garch: p / z,
            nu: 2.0 + t[4].exp().min(MAX_NU),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchState {
    pub variance: f64,
    pub last_return: Option<f64>,
}

/// One step of the GJR recursion. A missing return uses its conditional expectation.
pub fn garch_step(params: &GjrGarchParams, state: &GarchState, ret: Option<f64>) -> GarchState {
    let variance = match ret {
        Some(r) => {
            let lev = if r < 0.0 { params.gamma_lev } else { 0.0 };
            params.omega + (params.alpha_arch + lev) * r * r + params.beta_garch * state.variance
        }
        None => params.omega + params.persistence() * state.variance,
    };
    GarchState {
        variance: variance.max(f64::MIN_POSITIVE),
        last_return: ret,
    }
}

/// `sigma * t_nu^{-1}(alpha) * sqrt((nu - 2) / nu)` for unit-variance t innovations.
pub fn garch_var(params: &GjrGarchParams, state: &GarchState, alpha: f64) -> f64 {
    let nu = params.nu;
    state.variance.sqrt() * student_t_quantile(alpha, nu) * ((nu - 2.0) / nu).sqrt()
}

fn neg_log_likelihood(params: &GjrGarchParams, returns: &[Option<f64>], var0: f64) -> f64 {
    let nu = params.nu;
    let c = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (std::f64::consts::PI * (nu - 2.0)).ln();
    let mut state = GarchState {
        variance: var0,
        last_return: None,
    };
    let mut ll = 0.0;
    for (i, r) in returns.iter().enumerate() {
        if i > 0 {
            state = garch_step(params, &state, returns[i - 1]);
        }
        if let Some(r) = r {
            let v = state.variance;
            ll += c - 0.5 * v.ln() - (nu + 1.0) / 2.0 * (r * r / ((nu - 2.0) * v)).ln_1p();
        }
    }
    if ll.is_finite() {
        -ll
    } else {
        f64::INFINITY
    }
}

struct GarchObjective<'a> {
    returns: &'a [Option<f64>],
    var0: f64,
}

impl CostFunction for GarchObjective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let p = GjrGarchParams::from_theta(theta);
        Ok(neg_log_likelihood(&p, self.returns, self.var0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchFit {
    pub params: GjrGarchParams,
    pub log_likelihood: f64,
    pub converged: bool,
    /// Sample variance of the fit window; seeds the filtered variance.
    pub sample_variance: f64,
}

impl GarchFit {
    /// Filters the fit window and returns the state after its last return.
    pub fn filter(&self, returns: &[Option<f64>]) -> GarchState {
        let mut state = GarchState {
            variance: self.sample_variance,
            last_return: None,
        };
        for r in returns {
            state = garch_step(&self.params, &state, *r);
        }
        state
    }
}

fn nelder_mead(obj: GarchObjective<'_>, start: Vec<f64>) -> Option<(Vec<f64>, f64, bool)> {
    let mut simplex = vec![start.clone()];
    for i in 0..start.len() {
        let mut v = start.clone();
        v[i] += 0.5;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-9).ok()?;
    let res = Executor::new(obj, solver)
        .configure(|s| s.max_iters(3000))
        .run()
        .ok()?;
    let state = res.state();
    let best = state.get_best_param()?.clone();
    let converged = state.get_iter() < state.get_max_iters();
    Some((best, state.get_best_cost(), converged))
}

/// Log-likelihoods within this distance are treated as a tie and the less persistent fit wins.
/// With no ARCH effect the GARCH coefficient is unidentified and the surface is flat along it.
const LL_TIE: f64 = 0.5;

/// Maximum likelihood fit over an unconstrained reparameterization, from a fixed set of
/// starting points. Never fails on well-formed input; a failed search keeps the initial point.
pub fn fit_gjr_garch(returns: &[Option<f64>]) -> Result<GarchFit> {
    let obs: Vec<f64> = returns.iter().flatten().copied().collect();
    if obs.len() < MIN_GARCH_RETURNS {
        return Err(Error::InsufficientData(format!(
            "GJR-GARCH needs {MIN_GARCH_RETURNS} returns, got {}",
            obs.len()
        )));
    }
    let var0 = sample_sd(&obs).map(|s| s * s).unwrap_or(0.0).max(1e-12);
    let init = GjrGarchParams::initial(var0);
    let starts = [
        init,
        GjrGarchParams {
            omega: var0 * 0.7,
            alpha_arch: 0.02,
            gamma_lev: 0.02,
            beta_garch: 0.27,
            nu: 8.0,
        },
    ];

    let mut best: Option<GarchFit> = None;
    for start in starts {
        let obj = GarchObjective {
            returns,
            var0,
        };
        let Some((theta, cost, converged)) = nelder_mead(obj, start.to_theta()) else {
            continue;
        };
        if !cost.is_finite() {
            continue;
        }
        let cand = GarchFit {
            params: GjrGarchParams::from_theta(&theta),
            log_likelihood: -cost,
            converged,
            sample_variance: var0,
        };
        best = match best {
            None => Some(cand),
            Some(b) => {
                let tie = (cand.log_likelihood - b.log_likelihood).abs() <= LL_TIE;
                let better = if tie {
                    cand.params.persistence() < b.params.persistence()
                } else {
                    cand.log_likelihood > b.log_likelihood
                };
                Some(if better { cand } else { b })
            }
        };
    }
    Ok(best.unwrap_or_else(|| {
        log::warn!("GJR-GARCH search failed; keeping the initial point");
        GarchFit {
            params: init,
            log_likelihood: -neg_log_likelihood(&init, returns, var0),
            converged: false,
            sample_variance: var0,
        }
    }))
}

/// Simulates a zero-mean GJR-GARCH-t path (unit-variance innovations).
pub fn simulate_gjr_garch(params: &GjrGarchParams, n: usize, seed: u64) -> Vec<f64> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StudentT};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let t = StudentT::new(params.nu).expect("nu > 0");
    let scale = ((params.nu - 2.0) / params.nu).sqrt();
    let uncond = params.omega / (1.0 - params.persistence());
    let mut state = GarchState {
        variance: uncond,
        last_return: None,
    };
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let z: f64 = t.sample(&mut rng);
        let r = state.variance.sqrt() * z * scale;
        out.push(r);
        state = garch_step(params, &state, Some(r));
    }
    out
}
