//! Poisson likelihood composed with the quantile link.

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::quantile::{qmap_lambda, qmap_with_derivatives, QuantileLevel, MAX_QUANTILE};
use crate::special::ln_factorial;

/// Where the expected count enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetMode {
    /// `q = E·e^η`, `λ = h(q)`.
    #[default]
    OffsetInPredictor,
    /// `q = e^η`, `λ = E·h(q)`.
    ScaleParameter,
}

/// Quantile `q` and Poisson rate `λ` for a linear predictor.
pub fn predictor_to_quantile_and_lambda(eta: f64, e: f64, alpha: QuantileLevel, mode: OffsetMode) -> Result<(f64, f64)> {
    match mode {
        OffsetMode::OffsetInPredictor => {
            let q = e * eta.exp();
            Ok((q, qmap_lambda(q, alpha)?))
        }
        OffsetMode::ScaleParameter => {
            let q = eta.exp();
            Ok((q, e * qmap_lambda(q, alpha)?))
        }
    }
}

/// Largest predictor whose quantile stays within [`MAX_QUANTILE`].
pub fn max_predictor(e: f64, mode: OffsetMode) -> f64 {
    match mode {
        OffsetMode::OffsetInPredictor => (MAX_QUANTILE / e).ln(),
        OffsetMode::ScaleParameter => MAX_QUANTILE.ln(),
    }
}

/// One observation's log-likelihood and its first two derivatives in `η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoglikTerm {
    pub value: f64,
    pub d1: f64,
    /// Raw second derivative; Newton clamps it, reporting never does.
    pub d2: f64,
}

pub fn loglik_value(y: u64, eta: f64, e: f64, alpha: QuantileLevel, mode: OffsetMode) -> Result<f64> {
    let (_, lam) = predictor_to_quantile_and_lambda(eta, e, alpha, mode)?;
    Ok(poisson_log_pmf(y, lam))
}

fn poisson_log_pmf(y: u64, lam: f64) -> f64 {
    if y == 0 {
        -lam
    } else {
        y as f64 * lam.ln() - lam - ln_factorial(y)
    }
}

/// `y ln λ − λ − ln y!` with `λ(η)` through the quantile map.
///
/// With `u = ln q`, `dλ/dη = s·h'(q)·q` and
/// `d²λ/dη² = s·(h''(q)·q² + h'(q)·q)`, where `s` is `E` in
/// [`OffsetMode::ScaleParameter`] and 1 otherwise.
pub fn loglik_term(y: u64, eta: f64, e: f64, alpha: QuantileLevel, mode: OffsetMode) -> Result<LoglikTerm> {
    let (q, s) = match mode {
        OffsetMode::OffsetInPredictor => (e * eta.exp(), 1.0),
        OffsetMode::ScaleParameter => (eta.exp(), e),
    };
    let (h, h1, h2) = qmap_with_derivatives(q, alpha)?;
    let lam = s * h;
    let l1 = s * h1 * q;
    let l2 = s * (h2 * q * q + h1 * q);
    let yf = y as f64;
    let dl = yf / lam - 1.0;
    Ok(LoglikTerm { value: poisson_log_pmf(y, lam), d1: dl * l1, d2: -yf / (lam * lam) * l1 * l1 + dl * l2 })
}
