//! Model comparison criteria and posterior summary tables.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{GaussianMixture, IntegrationSet, LatentGaussianModel, LatentMarginals, Marginal, Strategy, Summary};
use crate::model::ModelContext;
use crate::special::GaussHermite;

/// Gauss–Hermite nodes used for every expectation over a predictor.
pub const GH_NODES: usize = 21;

/// Which of the three comparison models a fit is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelTag {
    #[serde(rename = "joint")]
    Joint,
    #[serde(rename = "separate-1")]
    Separate1,
    #[serde(rename = "separate-2")]
    Separate2,
}

impl ModelTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::Joint => "joint",
            ModelTag::Separate1 => "separate-1",
            ModelTag::Separate2 => "separate-2",
        }
    }

    pub fn separate(disease: usize) -> Result<Self> {
        match disease {
            1 => Ok(ModelTag::Separate1),
            2 => Ok(ModelTag::Separate2),
            d => Err(Error::InvalidParameter(format!("disease must be 1 or 2, got {d}"))),
        }
    }
}

/// Deviance information criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dic {
    pub dic: f64,
    /// Posterior mean deviance `D̄`.
    pub mean_deviance: f64,
    /// Deviance at the posterior-mean predictors.
    pub deviance_at_mean: f64,
    pub p_d: f64,
}

/// Widely applicable information criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waic {
    pub waic: f64,
    /// `Σ log E p(y_i | η_i)`.
    pub lppd: f64,
    /// `Σ Var log p(y_i | η_i)`.
    pub p_waic: f64,
}

fn deviance_term<M: LatentGaussianModel + ?Sized>(m: &M, i: usize, eta: f64) -> Result<f64> {
    Ok(-2.0 * m.loglik_value(i, eta.min(m.max_predictor(i)))?)
}

/// `DIC = 2·D̄ − D(η̄)` with `D = −2 Σ log p(y_i | η_i)`, `D̄` by quadrature
/// over the predictor marginals.
pub fn dic<M: LatentGaussianModel + ?Sized>(m: &M, predictors: &[GaussianMixture]) -> Result<Dic> {
    let gh = GaussHermite::new(GH_NODES);
    let mut mean_deviance = 0.0;
    let mut deviance_at_mean = 0.0;
    for (i, mix) in predictors.iter().enumerate() {
        for ((w, mu), sd) in mix.weights.iter().zip(&mix.means).zip(&mix.sds) {
            let mut err = None;
            let e = gh.expect(*mu, *sd, |x| deviance_term(m, i, x).unwrap_or_else(|e| {
                err = Some(e);
                0.0
            }));
            if let Some(e) = err {
                return Err(e);
            }
            mean_deviance += w * e;
        }
        deviance_at_mean += deviance_term(m, i, mix.mean())?;
    }
    Ok(Dic { dic: 2.0 * mean_deviance - deviance_at_mean, mean_deviance, deviance_at_mean, p_d: mean_deviance - deviance_at_mean })
}

/// `WAIC = −2 Σ_i [log E p(y_i | η_i) − Var log p(y_i | η_i)]`, expectations
/// over the mixture predictor marginals.
pub fn waic<M: LatentGaussianModel + ?Sized>(m: &M, predictors: &[GaussianMixture]) -> Result<Waic> {
    let gh = GaussHermite::new(GH_NODES);
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    for (i, mix) in predictors.iter().enumerate() {
        // log-likelihood at every (component, node) pair with its weight
        let mut terms: Vec<(f64, f64)> = Vec::with_capacity(mix.weights.len() * GH_NODES);
        for ((w, mu), sd) in mix.weights.iter().zip(&mix.means).zip(&mix.sds) {
            for (z, wz) in gh.nodes.iter().zip(&gh.weights) {
                terms.push((w * wz, m.loglik_value(i, (mu + sd * z).min(m.max_predictor(i)))?));
            }
        }
        let top = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = terms.iter().map(|(w, l)| w * (l - top).exp()).sum();
        let mean: f64 = terms.iter().map(|(w, l)| w * l).sum();
        let var: f64 = terms.iter().map(|(w, l)| w * (l - mean) * (l - mean)).sum();
        lppd += top + s.ln();
        p_waic += var;
    }
    Ok(Waic { waic: -2.0 * (lppd - p_waic), lppd, p_waic })
}

/// Summary row of a tabulated marginal.
pub fn summarize(marginal: &Marginal) -> Summary {
    marginal.summary()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSummary {
    pub name: String,
    pub summary: Summary,
    pub marginal: Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSummary {
    pub block: String,
    pub index: usize,
    pub summary: Summary,
}

/// Per-region posterior of one disease.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub region: String,
    pub observed: u64,
    pub expected: f64,
    pub predictor: Summary,
    /// `λ / E`.
    pub relative_risk: Summary,
    /// Posterior mean of `λ`.
    pub predicted_cases: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub strategy: Strategy,
    pub optimizer_iterations: usize,
    pub gradient_norm: f64,
    pub hessian_regularized: bool,
    pub integration_points: usize,
    pub max_newton_iterations: usize,
    /// Internal-scale mode of `π̃(θ | y)`.
    pub theta_mode: Vec<f64>,
    pub log_density_at_mode: f64,
}

/// Everything reported about one fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelTag,
    pub hyperparameters: Vec<HyperSummary>,
    pub latent: Vec<LatentSummary>,
    /// One table per disease in the model, regions in graph order.
    pub regions: Vec<Vec<RegionSummary>>,
    /// Disease number (1-based) of each table in `regions`.
    pub diseases: Vec<usize>,
    pub dic: Dic,
    pub waic: Waic,
    pub diagnostics: Diagnostics,
}

impl FitResult {
    pub fn hyper(&self, name: &str) -> Option<&HyperSummary> {
        self.hyperparameters.iter().find(|h| h.name == name)
    }

    pub fn latent_block(&self, block: &str) -> Vec<&LatentSummary> {
        self.latent.iter().filter(|l| l.block == block).collect()
    }
}

/// Summary of `λ / E` given the predictor mixture; quantiles map through the
/// monotone link.
fn rate_summary(ctx: &ModelContext, o: usize, mix: &GaussianMixture, eta: &Summary, scale: f64) -> Result<(Summary, f64)> {
    let gh = GaussHermite::new(GH_NODES);
    // far quadrature nodes can leave the link's range; their weight is negligible
    let cap = ctx.max_predictor(o);
    let lam = |x: f64| ctx.quantile_and_lambda(o, x.min(cap)).map(|r| r.1);
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for ((w, mu), sd) in mix.weights.iter().zip(&mix.means).zip(&mix.sds) {
        let mut err = None;
        let mut acc = |x: f64, p: i32| match lam(x) {
            Ok(v) => v.powi(p),
            Err(e) => {
                err = Some(e);
                0.0
            }
        };
        let a = gh.expect(*mu, *sd, |x| acc(x, 1));
        let b = gh.expect(*mu, *sd, |x| acc(x, 2));
        if let Some(e) = err {
            return Err(e);
        }
        m1 += w * a;
        m2 += w * b;
    }
    let sd = (m2 - m1 * m1).max(0.0).sqrt();
    let s = Summary {
        mean: m1 / scale,
        sd: Some(sd / scale),
        q025: lam(eta.q025)? / scale,
        q50: lam(eta.q50)? / scale,
        q975: lam(eta.q975)? / scale,
        mode: lam(eta.mode)? / scale,
    };
    Ok((s, m1))
}

/// Assembles the result tables from an integration set and its marginals.
pub fn assemble(
    ctx: &ModelContext,
    tag: ModelTag,
    set: &IntegrationSet,
    hyper: &[Marginal],
    latent: &LatentMarginals,
) -> Result<FitResult> {
    let names = ctx.hyper.names();
    let hyperparameters = names
        .into_iter()
        .zip(hyper)
        .map(|(name, m)| HyperSummary { name, summary: summarize(m), marginal: m.clone() })
        .collect();
    let mut latent_rows = Vec::with_capacity(ctx.layout.dim);
    for b in &ctx.layout.blocks {
        for j in 0..b.len {
            latent_rows.push(LatentSummary { block: b.name.clone(), index: j, summary: latent.latent[b.offset + j].summary() });
        }
    }
    let n = ctx.n_regions();
    let data = ctx.data();
    let mut regions = Vec::with_capacity(ctx.n_diseases());
    for k in 0..ctx.n_diseases() {
        let mut table = Vec::with_capacity(n);
        for i in 0..n {
            let o = k * n + i;
            let mix = &latent.predictors[o];
            let predictor = mix.summary();
            let e = data.expected[k][i];
            let (relative_risk, predicted_cases) = rate_summary(ctx, o, mix, &predictor, e)?;
            table.push(RegionSummary {
                region: data.region_ids[i].clone(),
                observed: data.counts[k][i],
                expected: e,
                predictor,
                relative_risk,
                predicted_cases,
            });
        }
        regions.push(table);
    }
    let diseases = match tag {
        ModelTag::Joint => (1..=ctx.n_diseases()).collect(),
        ModelTag::Separate1 => alloc::vec![1],
        ModelTag::Separate2 => alloc::vec![2],
    };
    let dic = dic(ctx, &latent.predictors)?;
    let waic = waic(ctx, &latent.predictors)?;
    if !dic.dic.is_finite() || !waic.waic.is_finite() {
        return Err(Error::Model("information criteria are not finite".into()));
    }
    let diagnostics = Diagnostics {
        strategy: set.strategy,
        optimizer_iterations: set.mode.iterations,
        gradient_norm: set.mode.gradient_norm,
        hessian_regularized: set.mode.hessian_regularized,
        integration_points: set.points.len(),
        max_newton_iterations: set.points.iter().map(|p| p.approx.iterations).max().unwrap_or(0),
        theta_mode: set.mode.theta.clone(),
        log_density_at_mode: set.mode.log_density,
    };
    Ok(FitResult { model: tag, hyperparameters, latent: latent_rows, regions, diseases, dic, waic, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::inference::GaussianStub;

    fn point(means: &[f64]) -> Vec<GaussianMixture> {
        means.iter().map(|&m| GaussianMixture { weights: vec![1.0], means: vec![m], sds: vec![0.0] }).collect()
    }

    #[test]
    fn degenerate_posterior_has_no_penalty() {
        let stub = GaussianStub::chain(4, 2.0);
        let preds = point(&[0.1, -0.3, 0.8, 0.0]);
        let d = dic(&stub, &preds).unwrap();
        assert!(d.p_d.abs() < 1e-12);
        assert!((d.dic - d.deviance_at_mean).abs() < 1e-12);
        let w = waic(&stub, &preds).unwrap();
        assert!(w.p_waic.abs() < 1e-12);
        assert!((w.waic - d.deviance_at_mean).abs() < 1e-10);
    }

    #[test]
    fn gaussian_penalties_are_closed_form() {
        // Gaussian likelihood with precision t: −2ℓ is quadratic in η, so
        // p_D = t·Σ σ_i² exactly and Var ℓ = t²σ²(r² + σ²/2) per term
        let t = 2.0;
        let stub = GaussianStub::chain(3, t);
        let preds: Vec<GaussianMixture> =
            [(0.2, 0.3), (-0.1, 0.5), (0.4, 0.2)].iter().map(|&(m, s)| GaussianMixture { weights: vec![1.0], means: vec![m], sds: vec![s] }).collect();
        let d = dic(&stub, &preds).unwrap();
        let want: f64 = preds.iter().map(|p| t * p.sds[0] * p.sds[0]).sum();
        assert!((d.p_d - want).abs() < 1e-12);
        let w = waic(&stub, &preds).unwrap();
        let want: f64 = preds
            .iter()
            .zip(&stub.y)
            .map(|(p, y)| {
                let (r, s2) = (y - p.means[0], p.sds[0] * p.sds[0]);
                t * t * s2 * (r * r + s2 / 2.0)
            })
            .sum();
        assert!((w.p_waic - want).abs() < 1e-10);
    }

    #[test]
    fn tags_round_trip() {
        assert_eq!(ModelTag::separate(2).unwrap(), ModelTag::Separate2);
        assert!(ModelTag::separate(3).is_err());
        assert_eq!(ModelTag::Joint.as_str(), "joint");
    }
}
