//! INLA-style inference for latent Gaussian models.
//!
//! For each hyperparameter value the latent conditional is replaced by the
//! Gaussian matching mode and curvature ([`gaussian_approx`]). The Laplace
//! ratio at that mode gives `log π̃(θ | y)` ([`log_marginal_theta`]), which is
//! maximised ([`optimize_theta`]), explored around the mode
//! ([`integration_points`]) and finally mixed into marginals.

mod integrate;
mod marginal;
mod optimize;
mod stub;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

pub use integrate::{integration_points, IntegrationPoint, IntegrationSet, Strategy};
pub use marginal::{hyper_marginals, latent_marginals, GaussianMixture, LatentMarginals, Marginal, Summary};
pub use optimize::{hessian_fd, optimize_theta, ThetaMode};
pub use stub::GaussianStub;

use crate::error::{Error, Result};
use crate::gmrf::{Ordering, SparsePrecision};
use crate::model::{HyperParams, LoglikTerm};

/// Curvature floor used in Newton steps: `d2` is clamped to `min(d2, −1e-8)`.
pub const D2_CLAMP: f64 = -1e-8;

/// A latent Gaussian model `y | η ~ Π p(y_i | η_i)`, `η = A(θ) x`,
/// `x | θ ~ N(0, Q(θ)⁻¹)`, `θ ~ π(θ)`.
pub trait LatentGaussianModel {
    fn latent_dim(&self) -> usize;
    fn n_obs(&self) -> usize;
    fn hyper(&self) -> &HyperParams;
    fn prior_precision(&self, theta: &[f64]) -> Result<SparsePrecision>;
    /// Sparse rows `a_i(θ)`, one per observation.
    fn design_rows(&self, theta: &[f64]) -> Vec<Vec<(usize, f64)>>;
    fn loglik(&self, obs: usize, eta: f64) -> Result<LoglikTerm>;
    fn loglik_value(&self, obs: usize, eta: f64) -> Result<f64> {
        self.loglik(obs, eta).map(|t| t.value)
    }
    /// Upper end of the predictor range the likelihood accepts.
    fn max_predictor(&self, _obs: usize) -> f64 {
        f64::INFINITY
    }
    fn log_hyperprior(&self, theta: &[f64]) -> f64 {
        self.hyper().log_prior(theta)
    }
}

/// Tuning constants of the engine. Defaults are the pinned values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceOptions {
    pub newton_max_iter: usize,
    pub newton_tol: f64,
    pub newton_max_halvings: usize,
    pub fd_step: f64,
    pub grad_tol: f64,
    pub optim_max_iter: usize,
    pub hessian_step: f64,
    pub grid_spacing: f64,
    pub grid_drop: f64,
    pub grid_max_points: usize,
    /// Grid points further than this many standard deviations out along
    /// any axis are not explored.
    pub grid_max_z: f64,
    pub ccd_f0: f64,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            newton_max_iter: 50,
            newton_tol: 1e-6,
            newton_max_halvings: 10,
            fd_step: 1e-4,
            grad_tol: 1e-3,
            optim_max_iter: 200,
            hessian_step: 5e-3,
            grid_spacing: 0.75,
            grid_drop: 6.0,
            grid_max_points: 20_000,
            grid_max_z: 4.0,
            ccd_f0: 1.1,
        }
    }
}

pub(crate) fn predictors(rows: &[Vec<(usize, f64)>], x: &[f64]) -> Vec<f64> {
    rows.iter().map(|r| r.iter().map(|&(j, a)| a * x[j]).sum()).collect()
}

/// `log π(x, θ | y)` up to the evidence: likelihood, Gaussian prior density
/// of `x` and hyperprior.
pub fn log_joint<M: LatentGaussianModel + ?Sized>(m: &M, x: &[f64], theta: &[f64]) -> Result<f64> {
    check_dims(m, x, theta)?;
    let q = m.prior_precision(theta)?;
    let eta = predictors(&m.design_rows(theta), x);
    let mut total = 0.0;
    for (i, &e) in eta.iter().enumerate() {
        let v = m.loglik_value(i, e)?;
        if !v.is_finite() {
            return Err(Error::NonFinite(i));
        }
        total += v;
    }
    let n = x.len() as f64;
    let prior = 0.5 * q.log_det()? - 0.5 * n * crate::special::LN_2PI - 0.5 * q.quad_form(x);
    let value = total + prior + m.log_hyperprior(theta);
    if !value.is_finite() {
        return Err(Error::NonFinite(eta.len()));
    }
    Ok(value)
}

/// Gradient of [`log_joint`] in `x`.
pub fn log_joint_gradient<M: LatentGaussianModel + ?Sized>(m: &M, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    check_dims(m, x, theta)?;
    let q = m.prior_precision(theta)?;
    let rows = m.design_rows(theta);
    let eta = predictors(&rows, x);
    let mut g: Vec<f64> = q.mul_vec(x).into_iter().map(|v| -v).collect();
    for (i, r) in rows.iter().enumerate() {
        let t = m.loglik(i, eta[i])?;
        for &(j, a) in r {
            g[j] += a * t.d1;
        }
    }
    Ok(g)
}

fn check_dims<M: LatentGaussianModel + ?Sized>(m: &M, x: &[f64], theta: &[f64]) -> Result<()> {
    if x.len() != m.latent_dim() || theta.len() != m.hyper().len() {
        return Err(Error::InvalidDimension(format!(
            "latent {} (want {}), theta {} (want {})",
            x.len(),
            m.latent_dim(),
            theta.len(),
            m.hyper().len()
        )));
    }
    Ok(())
}

/// Gaussian approximation of `π(x | θ, y)` at its mode.
#[derive(Debug, Clone)]
pub struct GaussianApprox {
    pub theta: Vec<f64>,
    pub mode: Vec<f64>,
    /// `Q(θ) + Σ a_i (−d2_i) a_iᵀ` at the mode.
    pub precision: SparsePrecision,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub eta: Vec<f64>,
    /// `Σ_i log p(y_i | η_i)` at the mode.
    pub log_lik: f64,
    /// `½ log|Q(θ)| − ½ μᵀ Q(θ) μ`.
    pub log_prior_kernel: f64,
    pub log_det_precision: f64,
    pub iterations: usize,
}

struct NewtonState {
    eta: Vec<f64>,
    terms: Vec<LoglikTerm>,
    value: f64,
}

fn newton_state<M: LatentGaussianModel + ?Sized>(m: &M, q: &SparsePrecision, rows: &[Vec<(usize, f64)>], x: &[f64]) -> Result<NewtonState> {
    let eta = predictors(rows, x);
    let mut terms = Vec::with_capacity(eta.len());
    let mut value = -0.5 * q.quad_form(x);
    for (i, &e) in eta.iter().enumerate() {
        let t = m.loglik(i, e)?;
        if !(t.value.is_finite() && t.d1.is_finite() && t.d2.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        value += t.value;
        terms.push(t);
    }
    Ok(NewtonState { eta, terms, value })
}

fn gradient(q: &SparsePrecision, rows: &[Vec<(usize, f64)>], s: &NewtonState, x: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = q.mul_vec(x).into_iter().map(|v| -v).collect();
    for (r, t) in rows.iter().zip(&s.terms) {
        for &(j, a) in r {
            g[j] += a * t.d1;
        }
    }
    g
}

/// `Q + Σ a_i w_i a_iᵀ` with `w_i = −min(d2_i, D2_CLAMP)`. Rows must hold
/// distinct indices.
fn posterior_precision(q: &SparsePrecision, rows: &[Vec<(usize, f64)>], terms: &[LoglikTerm]) -> Result<SparsePrecision> {
    let mut trip: Vec<(usize, usize, f64)> = q.lower_entries().collect();
    for (r, t) in rows.iter().zip(terms) {
        let w = -t.d2.min(D2_CLAMP);
        for (a_idx, &(ja, va)) in r.iter().enumerate() {
            for &(jb, vb) in &r[..=a_idx] {
                let (i, j) = if ja >= jb { (ja, jb) } else { (jb, ja) };
                trip.push((i, j, w * va * vb));
            }
        }
    }
    Ok(SparsePrecision::from_triplets(q.dim(), trip)?.with_ordering(Ordering::ReverseCuthillMcKee))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton on `log π(x | θ, y)`.
///
/// Converged when `‖∇‖∞ ≤ tol·(1 + |f|)`; one further full step is then
/// taken so the mode is accurate to second order, which keeps finite
/// differences of [`log_marginal_theta`] smooth.
pub fn gaussian_approx<M: LatentGaussianModel + ?Sized>(m: &M, theta: &[f64], x0: Option<&[f64]>, opts: &InferenceOptions) -> Result<GaussianApprox> {
    let n = m.latent_dim();
    if theta.len() != m.hyper().len() {
        return Err(Error::InvalidDimension(format!("theta has {} entries, model has {}", theta.len(), m.hyper().len())));
    }
    let q = m.prior_precision(theta)?;
    let rows = m.design_rows(theta);
    let mut x = match x0 {
        Some(v) if v.len() == n => v.to_vec(),
        _ => vec![0.0; n],
    };
    let mut state = match newton_state(m, &q, &rows, &x) {
        Ok(s) => s,
        Err(_) if x0.is_some() => {
            x = vec![0.0; n];
            newton_state(m, &q, &rows, &x)?
        }
        Err(e) => return Err(e),
    };
    let mut iterations = 0;
    let mut polished = false;
    loop {
        let g = gradient(&q, &rows, &state, &x);
        let converged = inf_norm(&g) <= opts.newton_tol * (1.0 + state.value.abs());
        if converged && polished {
            break;
        }
        if iterations >= opts.newton_max_iter {
            if converged {
                break;
            }
            return Err(Error::NewtonMaxIter(opts.newton_max_iter));
        }
        iterations += 1;
        let h = posterior_precision(&q, &rows, &state.terms)?;
        let dir = h.factorize()?.solve(&g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.newton_max_halvings {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            if let Ok(s) = newton_state(m, &q, &rows, &trial) {
                if s.value >= state.value - 1e-12 * (1.0 + state.value.abs()) {
                    accepted = Some((trial, s));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((nx, ns)) => {
                x = nx;
                state = ns;
            }
            None if converged => break,
            None => {
                // no ascent along the Newton direction: accept if already flat
                if inf_norm(&g) <= 1e3 * opts.newton_tol * (1.0 + state.value.abs()) {
                    break;
                }
                return Err(Error::NewtonMaxIter(iterations));
            }
        }
        if converged {
            polished = true;
        }
    }
    let precision = posterior_precision(&q, &rows, &state.terms)?;
    let log_det_precision = precision.factorize()?.log_det();
    let log_lik: f64 = state.terms.iter().map(|t| t.value).sum();
    let log_prior_kernel = 0.5 * q.log_det()? - 0.5 * q.quad_form(&x);
    Ok(GaussianApprox {
        theta: theta.to_vec(),
        mode: x,
        precision,
        rows,
        eta: state.eta,
        log_lik,
        log_prior_kernel,
        log_det_precision,
        iterations,
    })
}

impl GaussianApprox {
    /// Laplace value `log π̃(θ | y)` given the hyperprior term.
    pub fn log_marginal(&self, log_hyperprior: f64) -> f64 {
        self.log_lik + self.log_prior_kernel + log_hyperprior - 0.5 * self.log_det_precision
    }

    /// Marginal means and variances of the predictors.
    pub fn predictor_moments(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let f = self.precision.factorize()?;
        let var = self.rows.iter().map(|r| f.inverse_quadratic_form(r)).collect();
        Ok((self.eta.clone(), var))
    }
}

/// `log π̃(θ | y)`: likelihood and prior at the conditional mode, plus the
/// hyperprior, minus the Gaussian approximation's log density at its mode.
pub fn log_marginal_theta<M: LatentGaussianModel + ?Sized>(m: &M, theta: &[f64], opts: &InferenceOptions) -> Result<f64> {
    let ga = gaussian_approx(m, theta, None, opts)?;
    Ok(ga.log_marginal(m.log_hyperprior(theta)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_newton_is_exact_in_one_step() {
        let stub = GaussianStub::chain(6, 0.5);
        let theta = [0.4];
        let ga = gaussian_approx(&stub, &theta, None, &InferenceOptions::default()).unwrap();
        let (mean, prec) = stub.exact_posterior(&theta);
        for i in 0..6 {
            assert!((ga.mode[i] - mean[i]).abs() < 1e-10);
            for j in 0..6 {
                assert!((ga.precision.get(i, j) - prec[i * 6 + j]).abs() < 1e-10);
            }
        }
        // one step, then the polishing step
        assert!(ga.iterations <= 2);
    }

    #[test]
    fn no_observations_give_prior() {
        let stub = GaussianStub::new(vec![], vec![], 1.0, 4);
        let ga = gaussian_approx(&stub, &[0.3], None, &InferenceOptions::default()).unwrap();
        assert!(ga.mode.iter().all(|&v| v == 0.0));
        let q = stub.prior_precision(&[0.3]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((ga.precision.get(i, j) - q.get(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn laplace_is_exact_for_stub() {
        let stub = GaussianStub::chain(5, 0.8);
        let opts = InferenceOptions::default();
        let diffs: Vec<f64> = [-1.0, -0.3, 0.0, 0.6, 1.4]
            .iter()
            .map(|&t| log_marginal_theta(&stub, &[t], &opts).unwrap() - stub.exact_log_evidence(&[t]) - stub.log_hyperprior(&[t]))
            .collect();
        let spread = diffs.iter().cloned().fold(f64::MIN, f64::max) - diffs.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-8, "{diffs:?}");
    }
}
