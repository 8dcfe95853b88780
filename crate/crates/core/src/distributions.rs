//! Weibull distribution primitives, three-parameter maximum-likelihood
//! fitting, and the Student-t upper-tail probability used by the paired
//! t-test.
//!
//! The three-parameter likelihood is unbounded as the location approaches
//! the sample minimum, so the location is profiled over a small grid
//! strictly below `min(data)` and the remaining two parameters are solved
//! by Newton iteration on the profile equation for the shape, with the
//! scale available in closed form given the shape.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Relative offsets of the location grid below `min(data)`, as fractions of
/// the sample range.
const NU_EPS_GRID: [f64; 5] = [0.001, 0.01, 0.05, 0.1, 0.5];

/// Convergence tolerance on the relative shape update.
const FIT_TOL: f64 = 1e-9;
const FIT_MAX_ITERS: usize = 200;

/// Spread below this is treated as a degenerate (effectively constant) tail.
pub const DEGENERATE_SPREAD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    /// Location ν.
    pub nu: f64,
    /// Scale λ > 0.
    pub lambda: f64,
    /// Shape κ > 0.
    pub kappa: f64,
}

impl WeibullParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu.is_finite() && self.lambda > 0.0 && self.lambda.is_finite() && self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::Domain("invalid Weibull parameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSide {
    /// Lowest fraction of the match scores.
    LowerMatch,
    /// Highest fraction of the nonmatch scores.
    UpperNonmatch,
}

/// Extracted extreme values of a score sample, sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSample {
    pub values: Vec<f64>,
    pub side: TailSide,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullFit {
    pub params: WeibullParams,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// CDF of the three-parameter Weibull: 0 at or below ν, else
/// `1 - exp(-((x-ν)/λ)^κ)`.
pub fn weibull_cdf(p: &WeibullParams, x: f64) -> f64 {
    if x <= p.nu {
        0.0
    } else {
        1.0 - (-((x - p.nu) / p.lambda).powf(p.kappa)).exp()
    }
}

/// Log-likelihood of `data` under `p`. Every datum must lie strictly above
/// the location.
pub fn weibull_loglik(p: &WeibullParams, data: &[f64]) -> Result<f64> {
    p.validate()?;
    let mut ll = 0.0;
    for &x in data {
        if x <= p.nu {
            return Err(Error::Domain(format!(
                "datum {x} not above location {}",
                p.nu
            )));
        }
        let z = (x - p.nu) / p.lambda;
        ll += p.kappa.ln() - p.lambda.ln() + (p.kappa - 1.0) * z.ln() - z.powf(p.kappa);
    }
    Ok(ll)
}

/// Two-parameter MLE for data already shifted to be positive: Newton on the
/// profile equation for κ, λ in closed form given κ.
fn fit_two_param(z: &[f64]) -> (f64, f64, bool, usize) {
    let n = z.len() as f64;
    let logs: Vec<f64> = z.iter().map(|v| v.ln()).collect();
    let mean_log = logs.iter().sum::<f64>() / n;
    let mut kappa: f64 = 1.0;
    let mut converged = false;
    let mut iters = 0;
    for i in 0..FIT_MAX_ITERS {
        iters = i + 1;
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (&zi, &li) in z.iter().zip(&logs) {
            let p = zi.powf(kappa);
            s0 += p;
            s1 += p * li;
            s2 += p * li * li;
        }
        let g = s1 / s0 - 1.0 / kappa - mean_log;
        let dg = (s2 * s0 - s1 * s1) / (s0 * s0) + 1.0 / (kappa * kappa);
        let step = g / dg;
        let mut next = kappa - step;
        if next <= 0.0 {
            next = kappa / 2.0;
        }
        let rel = ((next - kappa) / kappa).abs();
        kappa = next;
        if rel < FIT_TOL {
            converged = true;
            break;
        }
    }
    let lambda = (z.iter().map(|v| v.powf(kappa)).sum::<f64>() / n).powf(1.0 / kappa);
    (lambda, kappa, converged, iters)
}

/// Three-parameter Weibull MLE. The location is profiled over a grid
/// strictly below `min(data)`; the best grid point by log-likelihood wins.
pub fn fit_weibull(data: &[f64], min_n: usize) -> Result<WeibullFit> {
    let min_n = min_n.max(2);
    if data.len() < min_n {
        return Err(Error::InsufficientTail {
            got: data.len(),
            min: min_n,
        });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite data".into()));
    }
    let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = hi - lo;
    if spread < DEGENERATE_SPREAD {
        return Err(Error::DegenerateTail { spread });
    }

    let mut best: Option<WeibullFit> = None;
    for eps in NU_EPS_GRID {
        let nu = lo - eps * spread;
        let z: Vec<f64> = data.iter().map(|&x| x - nu).collect();
        let (lambda, kappa, converged, iterations) = fit_two_param(&z);
        let params = WeibullParams { nu, lambda, kappa };
        if params.validate().is_err() {
            continue;
        }
        let Ok(loglik) = weibull_loglik(&params, data) else {
            continue;
        };
        if !loglik.is_finite() {
            continue;
        }
        let better = best.map(|b| loglik > b.loglik).unwrap_or(true);
        if better {
            best = Some(WeibullFit {
                params,
                loglik,
                converged,
                iterations,
            });
        }
    }
    best.ok_or_else(|| Error::Domain("likelihood not finite at any location grid point".into()))
}

/// One-sided upper-tail probability `P(T > t)` of Student's t with `df`
/// degrees of freedom, via the regularized incomplete beta function.
pub fn student_t_sf(t: f64, df: usize) -> f64 {
    assert!(df >= 1, "df must be positive");
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let dff = df as f64;
    if t >= 0.0 {
        let x = dff / (dff + t * t);
        0.5 * beta_reg(dff / 2.0, 0.5, x)
    } else {
        1.0 - student_t_sf(-t, df)
    }
}
