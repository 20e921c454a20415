//! Hyperparameters: internal/natural scales and their priors.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{ln_gamma, LN_2PI};

/// Map from the unconstrained internal scale to the natural scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Log,
    Logit,
}

impl Transform {
    pub fn to_natural(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Log => v.exp(),
            Transform::Logit => logistic(v),
        }
    }

    pub fn to_internal(self, v: f64) -> Result<f64> {
        let out = match self {
            Transform::Identity => v,
            Transform::Log if v > 0.0 => v.ln(),
            Transform::Logit if v > 0.0 && v < 1.0 => (v / (1.0 - v)).ln(),
            _ => f64::NAN,
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::InvalidParameter(format!("{v} is outside the natural range of a {self:?} transform")))
        }
    }

    /// `d natural / d internal` at internal value `v`.
    pub fn jacobian(self, v: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Log => v.exp(),
            Transform::Logit => {
                let p = logistic(v);
                p * (1.0 - p)
            }
        }
    }
}

fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

/// Prior density, always expressed on the internal scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum HyperPrior {
    /// `exp(θ) ~ Gamma(shape, rate)`.
    LogGamma { shape: f64, rate: f64 },
    /// `logistic(θ) ~ U(0, 1)`.
    LogitUniform,
    Normal { mean: f64, variance: f64 },
}

impl HyperPrior {
    pub fn log_density(&self, v: f64) -> f64 {
        match *self {
            HyperPrior::LogGamma { shape, rate } => shape * rate.ln() - ln_gamma(shape) + shape * v - rate * v.exp(),
            HyperPrior::LogitUniform => -softplus(-v) - softplus(v),
            HyperPrior::Normal { mean, variance } => -0.5 * (LN_2PI + variance.ln()) - (v - mean) * (v - mean) / (2.0 * variance),
        }
    }
}

/// Which symbol of the model a hyperparameter is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperKind {
    /// `c`, coefficient of the shared field in disease 2.
    SharedScale,
    /// `τ` of the shared proper Besag field.
    SharedPrecision,
    /// `d` of the shared proper Besag field.
    SharedProperness,
    /// `τ_{b_k}`.
    BymPrecision { disease: usize },
    /// `φ_{b_k}`.
    BymMixing { disease: usize },
    /// Precision of spline term `term` of disease `disease`.
    SplinePrecision { disease: usize, term: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParam {
    pub name: String,
    pub kind: HyperKind,
    pub transform: Transform,
    pub prior: HyperPrior,
}

/// The ordered hyperparameter vector `θ` of a model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HyperParams {
    pub params: Vec<HyperParam>,
}

impl HyperParams {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn position(&self, kind: HyperKind) -> Option<usize> {
        self.params.iter().position(|p| p.kind == kind)
    }

    pub fn to_natural(&self, internal: &[f64]) -> Vec<f64> {
        self.params.iter().zip(internal).map(|(p, &v)| p.transform.to_natural(v)).collect()
    }

    pub fn to_internal(&self, natural: &[f64]) -> Result<Vec<f64>> {
        self.params.iter().zip(natural).map(|(p, &v)| p.transform.to_internal(v)).collect()
    }

    /// `log π(θ)` for internal `θ`; the Jacobian of each transform is
    /// already part of the internal-scale densities.
    pub fn log_prior(&self, internal: &[f64]) -> f64 {
        self.params.iter().zip(internal).map(|(p, &v)| p.prior.log_density(v)).sum()
    }

    /// Starting point: `τ = d = 1`, `φ = 0.5`, `c = 0`, i.e. all zeros.
    pub fn initial(&self) -> Vec<f64> {
        alloc::vec![0.0; self.len()]
    }
}
