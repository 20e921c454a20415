//! One region, one hyperparameter: the engine against brute-force quadrature
//! over `(log τ, x)`.

use qdm_core::gmrf::SparsePrecision;
use qdm_core::inference::{hyper_marginals, integration_points, latent_marginals, optimize_theta, InferenceOptions, LatentGaussianModel, Marginal, Strategy};
use qdm_core::model::{loglik_term, HyperKind, HyperParam, HyperParams, HyperPrior, LoglikTerm, OffsetMode, Transform};
use qdm_core::quantile::QuantileLevel;
use qdm_core::Result;

/// `y ~ Poisson(λ)` with `log q_α(λ) = x`, `x ~ N(0, 1/τ)`, `τ ~ Gamma(2, 1)`.
pub struct OneRegion {
    y: u64,
    alpha: QuantileLevel,
    hyper: HyperParams,
}

impl OneRegion {
    pub fn new(y: u64, alpha: f64) -> Self {
        let hyper = HyperParams {
            params: vec![HyperParam {
                name: "tau".into(),
                kind: HyperKind::SharedPrecision,
                transform: Transform::Log,
                prior: HyperPrior::LogGamma { shape: 2.0, rate: 1.0 },
            }],
        };
        OneRegion { y, alpha: QuantileLevel::new(alpha).unwrap(), hyper }
    }
}

impl LatentGaussianModel for OneRegion {
    fn latent_dim(&self) -> usize {
        1
    }
    fn n_obs(&self) -> usize {
        1
    }
    fn hyper(&self) -> &HyperParams {
        &self.hyper
    }
    fn prior_precision(&self, theta: &[f64]) -> Result<SparsePrecision> {
        SparsePrecision::from_triplets(1, vec![(0, 0, theta[0].exp())])
    }
    fn design_rows(&self, _theta: &[f64]) -> Vec<Vec<(usize, f64)>> {
        vec![vec![(0, 1.0)]]
    }
    fn loglik(&self, _obs: usize, eta: f64) -> Result<LoglikTerm> {
        loglik_term(self.y, eta, 1.0, self.alpha, OffsetMode::OffsetInPredictor)
    }
}

pub struct Quadrature {
    pub theta: Vec<f64>,
    /// Normalised density of `θ = log τ`.
    pub density: Vec<f64>,
    pub x_mean: f64,
}

pub fn brute_force(m: &OneRegion) -> Quadrature {
    let (dt, dx) = (0.01, 0.004);
    let theta: Vec<f64> = (0..=1400).map(|i| -6.0 + i as f64 * dt).collect();
    let xs: Vec<f64> = (0..=4000).map(|i| -8.0 + i as f64 * dx).collect();
    let ll: Vec<f64> = xs.iter().map(|&x| m.loglik_value(0, x).unwrap()).collect();
    let mut joint = vec![vec![0.0; xs.len()]; theta.len()];
    let mut top = f64::NEG_INFINITY;
    for (i, &t) in theta.iter().enumerate() {
        let lp = m.log_hyperprior(&[t]);
        for (j, &x) in xs.iter().enumerate() {
            let v = lp + 0.5 * t - 0.5 * t.exp() * x * x + ll[j];
            joint[i][j] = v;
            top = top.max(v);
        }
    }
    let mut density = vec![0.0; theta.len()];
    let (mut total, mut xsum) = (0.0, 0.0);
    for i in 0..theta.len() {
        for j in 0..xs.len() {
            let w = (joint[i][j] - top).exp();
            density[i] += w * dx;
            xsum += w * xs[j] * dx * dt;
        }
        total += density[i] * dt;
    }
    density.iter_mut().for_each(|d| *d /= total);
    Quadrature { theta, density, x_mean: xsum / total }
}

/// Density of `log τ` implied by a marginal over `τ`.
pub fn log_scale_density(m: &Marginal, theta: f64) -> f64 {
    let tau = theta.exp();
    let k = m.x.partition_point(|&v| v < tau);
    if k == 0 || k == m.x.len() {
        return 0.0;
    }
    let w = (tau - m.x[k - 1]) / (m.x[k] - m.x[k - 1]);
    ((1.0 - w) * m.density[k - 1] + w * m.density[k]) * tau
}

pub fn engine(m: &OneRegion, strategy: Strategy) -> (Marginal, f64) {
    let opts = InferenceOptions::default();
    let mode = optimize_theta(m, None, &opts).unwrap();
    let set = integration_points(m, &mode, strategy, &opts).unwrap();
    let hyper = hyper_marginals(m, &set).unwrap();
    let latent = latent_marginals(&set).unwrap();
    (hyper[0].clone(), latent.latent[0].mean())
}

pub fn total_variation(q: &Quadrature, m: &Marginal) -> f64 {
    let dt = q.theta[1] - q.theta[0];
    0.5 * q.theta.iter().zip(&q.density).map(|(&t, &d)| (log_scale_density(m, t) - d).abs() * dt).sum::<f64>()
}

