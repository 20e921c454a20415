//! Linear-Gaussian model with closed-form posterior, used to check the engine.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use super::LatentGaussianModel;
use crate::error::Result;
use crate::gmrf::SparsePrecision;
use crate::linalg;
use crate::model::{HyperKind, HyperParam, HyperParams, HyperPrior, LoglikTerm, Transform};
use crate::special::LN_2PI;

/// `y_i = x_{k_i} + ε_i`, `ε_i ~ N(0, 1/τ_ε)` with known `τ_ε`, and
/// `x ~ N(0, (e^θ Q₀)⁻¹)` for a fixed tridiagonal `Q₀`.
#[derive(Debug, Clone)]
pub struct GaussianStub {
    pub observed: Vec<usize>,
    pub y: Vec<f64>,
    pub noise_precision: f64,
    q0: SparsePrecision,
    hyper: HyperParams,
}

impl GaussianStub {
    pub fn new(observed: Vec<usize>, y: Vec<f64>, noise_precision: f64, dim: usize) -> Self {
        let mut trip = Vec::new();
        for i in 0..dim {
            trip.push((i, i, 2.5));
            if i > 0 {
                trip.push((i, i - 1, -1.0));
            }
        }
        let q0 = SparsePrecision::from_triplets(dim, trip).expect("valid tridiagonal");
        let hyper = HyperParams {
            params: vec![HyperParam {
                name: "log_precision".into(),
                kind: HyperKind::SharedPrecision,
                transform: Transform::Log,
                prior: HyperPrior::LogGamma { shape: 1.0, rate: 0.5 },
            }],
        };
        GaussianStub { observed, y, noise_precision, q0, hyper }
    }

    /// Every element observed once, with fixed pseudo-random responses.
    pub fn chain(dim: usize, noise_precision: f64) -> Self {
        let y = (0..dim).map(|i| (1.7 * i as f64 + 0.3).sin() * 1.5).collect();
        GaussianStub::new((0..dim).collect(), y, noise_precision, dim)
    }

    fn dim(&self) -> usize {
        self.q0.dim()
    }

    /// Exact posterior mean and dense precision.
    pub fn exact_posterior(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let mut p = self.q0.to_dense();
        p.iter_mut().for_each(|v| *v *= theta[0].exp());
        let mut b = vec![0.0; n];
        for (&k, &y) in self.observed.iter().zip(&self.y) {
            p[k * n + k] += self.noise_precision;
            b[k] += self.noise_precision * y;
        }
        let l = linalg::cholesky(&p, n).expect("posterior precision is PD");
        (linalg::cholesky_solve(&l, n, &b), p)
    }

    /// `log p(y | θ)` from `y ~ N(0, A Q⁻¹ Aᵀ + I/τ_ε)`.
    pub fn exact_log_evidence(&self, theta: &[f64]) -> f64 {
        let n = self.dim();
        let m = self.y.len();
        let mut q = self.q0.to_dense();
        q.iter_mut().for_each(|v| *v *= theta[0].exp());
        let cov_x = linalg::inverse_spd(&q, n).expect("prior is PD");
        let mut c = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                c[a * m + b] = cov_x[self.observed[a] * n + self.observed[b]];
            }
            c[a * m + a] += 1.0 / self.noise_precision;
        }
        let l = linalg::cholesky(&c, m).expect("marginal covariance is PD");
        let sol = linalg::cholesky_solve(&l, m, &self.y);
        let logdet = 2.0 * (0..m).map(|i| l[i * m + i].ln()).sum::<f64>();
        -0.5 * (m as f64 * LN_2PI + logdet + linalg::dot(&self.y, &sol))
    }
}

impl LatentGaussianModel for GaussianStub {
    fn latent_dim(&self) -> usize {
        self.dim()
    }

    fn n_obs(&self) -> usize {
        self.y.len()
    }

    fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    fn prior_precision(&self, theta: &[f64]) -> Result<SparsePrecision> {
        Ok(self.q0.scaled(theta[0].exp()))
    }

    fn design_rows(&self, _theta: &[f64]) -> Vec<Vec<(usize, f64)>> {
        self.observed.iter().map(|&k| vec![(k, 1.0)]).collect()
    }

    fn loglik(&self, obs: usize, eta: f64) -> Result<LoglikTerm> {
        let r = self.y[obs] - eta;
        let t = self.noise_precision;
        Ok(LoglikTerm { value: 0.5 * (t.ln() - LN_2PI) - 0.5 * t * r * r, d1: t * r, d2: -t })
    }
}
