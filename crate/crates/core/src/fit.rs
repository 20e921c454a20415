//! End-to-end fitting: mode search, integration, marginals and tables.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::assessment::{assemble, FitResult, ModelTag};
use crate::error::Result;
use crate::inference::{hyper_marginals, integration_points, latent_marginals, optimize_theta, InferenceOptions, IntegrationSet, LatentMarginals, Strategy};
use crate::model::ModelContext;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// `None` picks grid for up to three hyperparameters and CCD beyond.
    pub strategy: Option<Strategy>,
    pub inference: InferenceOptions,
    /// Internal-scale starting point for the mode search.
    pub start: Option<Vec<f64>>,
}

impl FitOptions {
    pub fn with_strategy(strategy: Strategy) -> Self {
        FitOptions { strategy: Some(strategy), ..Default::default() }
    }
}

/// A fit together with the intermediate objects it was built from.
#[derive(Debug, Clone)]
pub struct Fit {
    pub result: FitResult,
    pub set: IntegrationSet,
    pub latent: LatentMarginals,
}

pub fn fit_detailed(ctx: &ModelContext, tag: ModelTag, opts: &FitOptions) -> Result<Fit> {
    let strategy = opts.strategy.unwrap_or_else(|| Strategy::auto(ctx.hyper.len()));
    let mode = optimize_theta(ctx, opts.start.as_deref(), &opts.inference)?;
    let set = integration_points(ctx, &mode, strategy, &opts.inference)?;
    let hyper = hyper_marginals(ctx, &set)?;
    let latent = latent_marginals(&set)?;
    let result = assemble(ctx, tag, &set, &hyper, &latent)?;
    Ok(Fit { result, set, latent })
}

pub fn fit(ctx: &ModelContext, tag: ModelTag, opts: &FitOptions) -> Result<FitResult> {
    fit_detailed(ctx, tag, opts).map(|f| f.result)
}
