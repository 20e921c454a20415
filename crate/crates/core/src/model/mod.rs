//! Model assembly: latent layout, design map, prior precision and likelihood.
//!
//! The latent vector stacks, in order, the intercepts `m_k`, fixed effects,
//! spline coefficients, the two standardised BYM blocks of each disease and
//! the shared field `S`. Linear predictors are not stored; each observation
//! has a sparse design row `a_i(θ)` so that `η_i = a_i(θ)·x`. BYM weights and
//! `c` enter only through these rows.

mod data;
mod hyper;
mod likelihood;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

pub use data::{expected_counts, smr, Covariate, ObservationTable};
pub use hyper::{HyperKind, HyperParam, HyperParams, HyperPrior, Transform};
pub use likelihood::{loglik_term, loglik_value, predictor_to_quantile_and_lambda, LoglikTerm, OffsetMode};

use crate::error::{Error, Result};
use crate::gmrf::{
    besag_proper_precision, besag_structure, bym_component_weights, rw_precision, scale_to_unit_geometric_mean, BesagProperParams,
    BymParams, Ordering, RwOrder, SparsePrecision,
};
use crate::graph::ArealGraph;
use crate::inference::{self, LatentGaussianModel};
use crate::quantile::QuantileLevel;

/// Most knots a spline covariate is binned to.
pub const MAX_SPLINE_BINS: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineTerm {
    pub covariate: String,
    pub order: RwOrder,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiseaseSpec {
    pub alpha: QuantileLevel,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub splines: Vec<SplineTerm>,
    #[serde(default)]
    pub bym: bool,
}

impl DiseaseSpec {
    pub fn new(alpha: QuantileLevel) -> Self {
        DiseaseSpec { alpha, covariates: Vec::new(), splines: Vec::new(), bym: false }
    }

    pub fn with_bym(mut self) -> Self {
        self.bym = true;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSettings {
    pub shared_tau: HyperPrior,
    pub shared_d: HyperPrior,
    pub shared_c: HyperPrior,
    pub bym_tau: HyperPrior,
    pub spline_tau: HyperPrior,
    /// Precision of intercepts and fixed effects.
    pub fixed_precision: f64,
    /// `κ` of the soft sum-to-zero term on scaled Besag and spline blocks.
    pub sum_to_zero_precision: f64,
}

impl Default for PriorSettings {
    fn default() -> Self {
        PriorSettings {
            shared_tau: HyperPrior::LogGamma { shape: 1.0, rate: 5e-4 },
            shared_d: HyperPrior::LogGamma { shape: 1.0, rate: 1.0 },
            shared_c: HyperPrior::Normal { mean: 0.0, variance: 1000.0 },
            bym_tau: HyperPrior::LogGamma { shape: 1.0, rate: 5e-4 },
            spline_tau: HyperPrior::LogGamma { shape: 1.0, rate: 5e-4 },
            fixed_precision: 1e-3,
            sum_to_zero_precision: 1e3,
        }
    }
}

/// Declarative model: one or two diseases, optional shared component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub diseases: Vec<DiseaseSpec>,
    /// Shared proper-Besag field `S` in disease 1 and `c·S` in disease 2.
    pub shared: bool,
    #[serde(default)]
    pub offset_mode: OffsetMode,
    #[serde(default)]
    pub priors: PriorSettings,
}

impl ModelSpec {
    pub fn single(d: DiseaseSpec) -> Self {
        ModelSpec { diseases: vec![d], shared: false, offset_mode: OffsetMode::default(), priors: PriorSettings::default() }
    }

    pub fn joint(d1: DiseaseSpec, d2: DiseaseSpec) -> Self {
        ModelSpec { diseases: vec![d1, d2], shared: true, offset_mode: OffsetMode::default(), priors: PriorSettings::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.diseases.is_empty() || self.diseases.len() > 2 {
            return Err(Error::Model(format!("one or two diseases supported, got {}", self.diseases.len())));
        }
        if self.shared && self.diseases.len() != 2 {
            return Err(Error::Model("a shared component needs two diseases".into()));
        }
        if !(self.priors.fixed_precision > 0.0) || !(self.priors.sum_to_zero_precision > 0.0) {
            return Err(Error::Model("fixed-effect and sum-to-zero precisions must be positive".into()));
        }
        for (k, d) in self.diseases.iter().enumerate() {
            for s in &d.splines {
                if s.bins < s.order.as_usize() + 1 || s.bins > MAX_SPLINE_BINS {
                    return Err(Error::Model(format!(
                        "spline on {} for disease {} needs between {} and {MAX_SPLINE_BINS} bins, got {}",
                        s.covariate,
                        k + 1,
                        s.order.as_usize() + 1,
                        s.bins
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockKind {
    Intercept { disease: usize },
    Fixed { disease: usize, term: usize },
    Spline { disease: usize, term: usize },
    BymIid { disease: usize },
    BymStruct { disease: usize },
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub kind: BlockKind,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LatentLayout {
    pub blocks: Vec<Block>,
    pub dim: usize,
}

impl LatentLayout {
    fn push(&mut self, name: String, kind: BlockKind, len: usize) -> usize {
        let offset = self.dim;
        self.blocks.push(Block { name, kind, offset, len });
        self.dim += len;
        offset
    }

    pub fn block(&self, kind: BlockKind) -> Option<&Block> {
        self.blocks.iter().find(|b| b.kind == kind)
    }

    pub fn by_name(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

/// Coefficient of one design-row entry.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Coef {
    Value(f64),
    BymIid(usize),
    BymStruct(usize),
    SharedScale,
}

/// A compiled model: layout, design map and θ-dependent prior.
#[derive(Debug, Clone)]
pub struct ModelContext {
    pub spec: ModelSpec,
    pub layout: LatentLayout,
    pub hyper: HyperParams,
    graph: ArealGraph,
    data: ObservationTable,
    rows: Vec<Vec<(usize, Coef)>>,
    /// θ-independent part of the prior precision (lower triangle).
    fixed_prior: Vec<(usize, usize, f64)>,
    /// Standardised spline structures with their block offset and the
    /// index of their precision in θ.
    splines: Vec<(usize, usize, SparsePrecision)>,
    shared_offset: Option<usize>,
    /// Natural-scale θ positions `(τ_b, φ_b)` per disease.
    bym_hyper: Vec<Option<(usize, usize)>>,
    c_index: Option<usize>,
    tau_index: Option<usize>,
    d_index: Option<usize>,
}

/// Equal-frequency bin index per value, at most `bins` distinct bins, ties
/// kept together.
pub fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut raw = vec![0usize; n];
    let mut first_rank = 0;
    for r in 0..n {
        if r > 0 && values[order[r]] != values[order[r - 1]] {
            first_rank = r;
        }
        raw[order[r]] = first_rank * bins / n;
    }
    // renumber to consecutive indices
    let mut used: Vec<usize> = raw.clone();
    used.sort_unstable();
    used.dedup();
    raw.iter().map(|b| used.binary_search(b).unwrap_or(0)).collect()
}

pub fn build_model(spec: &ModelSpec, g: &ArealGraph, data: &ObservationTable) -> Result<ModelContext> {
    spec.validate()?;
    data.validate()?;
    data.check_against(g)?;
    g.require_connected()?;
    let n = g.n_regions();
    let nd = spec.diseases.len();
    if data.n_diseases() < nd {
        return Err(Error::Data(format!("model has {nd} diseases, data has {}", data.n_diseases())));
    }
    let pri = &spec.priors;
    let kappa = pri.sum_to_zero_precision;

    let mut hyper = HyperParams::default();
    let mut push_hyper = |name: String, kind, transform, prior| {
        hyper.params.push(HyperParam { name, kind, transform, prior });
        hyper.params.len() - 1
    };
    let (mut c_index, mut tau_index, mut d_index) = (None, None, None);
    if spec.shared {
        c_index = Some(push_hyper("c".into(), HyperKind::SharedScale, Transform::Identity, pri.shared_c));
        tau_index = Some(push_hyper("tau".into(), HyperKind::SharedPrecision, Transform::Log, pri.shared_tau));
        d_index = Some(push_hyper("d".into(), HyperKind::SharedProperness, Transform::Log, pri.shared_d));
    }
    let mut bym_hyper = vec![None; nd];
    for (k, d) in spec.diseases.iter().enumerate() {
        if d.bym {
            let t = push_hyper(format!("tau_b{}", k + 1), HyperKind::BymPrecision { disease: k }, Transform::Log, pri.bym_tau);
            let p = push_hyper(format!("phi_b{}", k + 1), HyperKind::BymMixing { disease: k }, Transform::Logit, HyperPrior::LogitUniform);
            bym_hyper[k] = Some((t, p));
        }
    }
    let mut spline_hyper = Vec::new();
    for (k, d) in spec.diseases.iter().enumerate() {
        for (j, s) in d.splines.iter().enumerate() {
            let idx = push_hyper(
                format!("tau_spline{}_{}", k + 1, s.covariate),
                HyperKind::SplinePrecision { disease: k, term: j },
                Transform::Log,
                pri.spline_tau,
            );
            spline_hyper.push(idx);
        }
    }

    let mut layout = LatentLayout::default();
    let mut rows: Vec<Vec<(usize, Coef)>> = vec![Vec::new(); nd * n];
    let mut fixed_prior = Vec::new();

    for k in 0..nd {
        let off = layout.push(format!("m{}", k + 1), BlockKind::Intercept { disease: k }, 1);
        fixed_prior.push((off, off, pri.fixed_precision));
        for i in 0..n {
            rows[k * n + i].push((off, Coef::Value(1.0)));
        }
    }
    for (k, d) in spec.diseases.iter().enumerate() {
        for (j, name) in d.covariates.iter().enumerate() {
            let values = data.covariate(name).ok_or_else(|| Error::Data(format!("missing covariate {name}")))?;
            let off = layout.push(format!("beta{}.{name}", k + 1), BlockKind::Fixed { disease: k, term: j }, 1);
            fixed_prior.push((off, off, pri.fixed_precision));
            for i in 0..n {
                rows[k * n + i].push((off, Coef::Value(values[i])));
            }
        }
    }
    let mut splines = Vec::new();
    let mut spline_counter = 0;
    for (k, d) in spec.diseases.iter().enumerate() {
        for (j, s) in d.splines.iter().enumerate() {
            let values = data.covariate(&s.covariate).ok_or_else(|| Error::Data(format!("missing covariate {}", s.covariate)))?;
            let bin = equal_frequency_bins(values, s.bins);
            let nb = bin.iter().max().map_or(0, |m| m + 1);
            if nb < s.order.as_usize() + 1 {
                return Err(Error::Model(format!("covariate {} has too few distinct values for a {:?} spline", s.covariate, s.order)));
            }
            let off = layout.push(format!("rho{}.{}", k + 1, s.covariate), BlockKind::Spline { disease: k, term: j }, nb);
            for i in 0..n {
                rows[k * n + i].push((off + bin[i], Coef::Value(1.0)));
            }
            let (std_q, _) = scale_to_unit_geometric_mean(&rw_precision(nb, s.order, 1.0, kappa)?, s.order.as_usize())?;
            splines.push((off, spline_hyper[spline_counter], std_q));
            spline_counter += 1;
        }
    }
    let struct_q = if spec.diseases.iter().any(|d| d.bym) {
        Some(scale_to_unit_geometric_mean(&besag_structure(g, kappa)?, 1)?.0)
    } else {
        None
    };
    for (k, d) in spec.diseases.iter().enumerate() {
        if !d.bym {
            continue;
        }
        let iid = layout.push(format!("b{}.iid", k + 1), BlockKind::BymIid { disease: k }, n);
        let st = layout.push(format!("b{}.struct", k + 1), BlockKind::BymStruct { disease: k }, n);
        for i in 0..n {
            fixed_prior.push((iid + i, iid + i, 1.0));
            rows[k * n + i].push((iid + i, Coef::BymIid(k)));
            rows[k * n + i].push((st + i, Coef::BymStruct(k)));
        }
        if let Some(q) = &struct_q {
            fixed_prior.extend(q.lower_entries().map(|(i, j, v)| (st + i, st + j, v)));
        }
    }
    let mut shared_offset = None;
    if spec.shared {
        let off = layout.push("S".into(), BlockKind::Shared, n);
        for i in 0..n {
            rows[i].push((off + i, Coef::Value(1.0)));
            rows[n + i].push((off + i, Coef::SharedScale));
        }
        shared_offset = Some(off);
    }
    for r in &mut rows {
        r.sort_by_key(|e| e.0);
    }

    let data = if data.n_diseases() == nd { data.clone() } else { data.select(0)? };
    Ok(ModelContext {
        spec: spec.clone(),
        layout,
        hyper,
        graph: g.clone(),
        data,
        rows,
        fixed_prior,
        splines,
        shared_offset,
        bym_hyper,
        c_index,
        tau_index,
        d_index,
    })
}

impl ModelContext {
    pub fn n_regions(&self) -> usize {
        self.graph.n_regions()
    }

    pub fn n_diseases(&self) -> usize {
        self.spec.diseases.len()
    }

    pub fn graph(&self) -> &ArealGraph {
        &self.graph
    }

    pub fn data(&self) -> &ObservationTable {
        &self.data
    }

    /// `(disease, region)` of observation `o`.
    pub fn observation(&self, o: usize) -> (usize, usize) {
        (o / self.n_regions(), o % self.n_regions())
    }

    pub fn alpha(&self, disease: usize) -> QuantileLevel {
        self.spec.diseases[disease].alpha
    }

    fn coef_value(&self, c: Coef, theta: &[f64]) -> f64 {
        match c {
            Coef::Value(v) => v,
            Coef::SharedScale => theta[self.c_index.expect("shared block without c")],
            Coef::BymIid(k) | Coef::BymStruct(k) => {
                let (t, p) = self.bym_hyper[k].expect("BYM block without hyperparameters");
                let params = BymParams { tau_b: theta[t].exp(), phi: Transform::Logit.to_natural(theta[p]) };
                let (wi, ws) = bym_component_weights(&params);
                if matches!(c, Coef::BymIid(_)) {
                    wi
                } else {
                    ws
                }
            }
        }
    }

    /// `(q, λ)` for observation `o` at predictor `η`.
    pub fn quantile_and_lambda(&self, o: usize, eta: f64) -> Result<(f64, f64)> {
        let (k, i) = self.observation(o);
        predictor_to_quantile_and_lambda(eta, self.data.expected[k][i], self.alpha(k), self.spec.offset_mode)
    }
}

impl LatentGaussianModel for ModelContext {
    fn latent_dim(&self) -> usize {
        self.layout.dim
    }

    fn n_obs(&self) -> usize {
        self.rows.len()
    }

    fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    fn prior_precision(&self, theta: &[f64]) -> Result<SparsePrecision> {
        let mut trip = self.fixed_prior.clone();
        if let Some(off) = self.shared_offset {
            let p = BesagProperParams::new(theta[self.tau_index.unwrap()].exp(), theta[self.d_index.unwrap()].exp())?;
            let q = besag_proper_precision(&self.graph, &p)?;
            trip.extend(q.lower_entries().map(|(i, j, v)| (off + i, off + j, v)));
        }
        for (off, idx, q) in &self.splines {
            let tau = theta[*idx].exp();
            trip.extend(q.lower_entries().map(|(i, j, v)| (off + i, off + j, tau * v)));
        }
        Ok(SparsePrecision::from_triplets(self.layout.dim, trip)?.with_ordering(Ordering::ReverseCuthillMcKee))
    }

    fn design_rows(&self, theta: &[f64]) -> Vec<Vec<(usize, f64)>> {
        self.rows.iter().map(|r| r.iter().map(|&(j, c)| (j, self.coef_value(c, theta))).collect()).collect()
    }

    fn loglik(&self, o: usize, eta: f64) -> Result<LoglikTerm> {
        let (k, i) = self.observation(o);
        loglik_term(self.data.counts[k][i], eta, self.data.expected[k][i], self.alpha(k), self.spec.offset_mode)
    }

    fn loglik_value(&self, o: usize, eta: f64) -> Result<f64> {
        let (k, i) = self.observation(o);
        loglik_value(self.data.counts[k][i], eta, self.data.expected[k][i], self.alpha(k), self.spec.offset_mode)
    }

    fn max_predictor(&self, o: usize) -> f64 {
        let (k, i) = self.observation(o);
        likelihood::max_predictor(self.data.expected[k][i], self.spec.offset_mode)
    }
}

/// `log π(x, θ | y)` up to the evidence.
pub fn log_posterior(ctx: &ModelContext, x: &[f64], theta: &[f64]) -> Result<f64> {
    inference::log_joint(ctx, x, theta)
}
