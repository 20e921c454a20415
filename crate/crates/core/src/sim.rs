//! Two-disease simulation with a shared proper-Besag field, and the
//! replication harness for parameter recovery and model selection.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assessment::{FitResult, ModelTag};
use crate::error::{Error, Result};
use crate::fit::{fit, FitOptions};
use crate::gmrf::{besag_proper_precision, BesagProperParams};
use crate::graph::ArealGraph;
use crate::inference::{Strategy, Summary};
use crate::model::{build_model, DiseaseSpec, ModelSpec, ObservationTable};
use crate::quantile::{poisson_sample, qmap_lambda, CPoisParams, QuantileLevel};

/// Truth and design of a simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimScenario {
    pub m1: f64,
    pub m2: f64,
    pub c: f64,
    pub tau: f64,
    pub d: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// `false` replaces `S` and `c·S` by two independent fields.
    pub correlated: bool,
    pub replications: usize,
    pub seed: u64,
}

impl Default for SimScenario {
    fn default() -> Self {
        SimScenario { m1: 1.0, m2: 1.0, c: 0.7, tau: 1.0, d: 1.0, alpha1: 0.2, alpha2: 0.8, correlated: true, replications: 1, seed: 42 }
    }
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        QuantileLevel::new(self.alpha1)?;
        QuantileLevel::new(self.alpha2)?;
        BesagProperParams::new(self.tau, self.d)?;
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replication count must be at least 1".into()));
        }
        if ![self.m1, self.m2, self.c].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("m1, m2 and c must be finite".into()));
        }
        Ok(())
    }

    pub fn levels(&self) -> Result<(QuantileLevel, QuantileLevel)> {
        Ok((QuantileLevel::new(self.alpha1)?, QuantileLevel::new(self.alpha2)?))
    }

    /// Generator for replication `rep`: the master seed with stream `rep`.
    pub fn rng(&self, rep: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep as u64);
        rng
    }
}

/// One simulated data set with the fields that generated it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReplicate {
    pub rep: usize,
    pub data: ObservationTable,
    /// Field of disease 1 (`S`).
    pub field1: Vec<f64>,
    /// Field of disease 2 before scaling: `S` when correlated, an
    /// independent draw otherwise.
    pub field2: Vec<f64>,
    /// True quantiles `q_{ik}`.
    pub quantiles: Vec<Vec<f64>>,
    /// True rates `λ_{ik}`.
    pub rates: Vec<Vec<f64>>,
}

/// `log q_{i1} = m₁ + S_i`, `log q_{i2} = m₂ + c·S_i`, `y_{ik} ~ Poisson(λ_{ik})`
/// with `λ_{ik}` the rate whose `α_k`-quantile is `q_{ik}`; `E = 1`.
pub fn simulate_joint(g: &ArealGraph, s: &SimScenario, rep: usize) -> Result<SimReplicate> {
    s.validate()?;
    g.require_connected()?;
    let (a1, a2) = s.levels()?;
    let prec = besag_proper_precision(g, &BesagProperParams::new(s.tau, s.d)?)?;
    let q = prec.factorize()?;
    let mut rng = s.rng(rep);
    let field1 = q.sample(&mut rng);
    let (field2, c) = if s.correlated { (field1.clone(), s.c) } else { (q.sample(&mut rng), 1.0) };
    let n = g.n_regions();
    let mut quantiles = vec![Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut rates = vec![Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut counts = vec![Vec::with_capacity(n), Vec::with_capacity(n)];
    for i in 0..n {
        for (k, (eta, alpha)) in [(s.m1 + field1[i], a1), (s.m2 + c * field2[i], a2)].into_iter().enumerate() {
            let qk = eta.exp();
            let lam = qmap_lambda(qk, alpha)?;
            counts[k].push(poisson_sample(&mut rng, CPoisParams::new(lam)?)?);
            quantiles[k].push(qk);
            rates[k].push(lam);
        }
    }
    let data = ObservationTable::new(g.region_ids().to_vec(), counts, vec![vec![1.0; n]; 2], Vec::new())?;
    Ok(SimReplicate { rep, data, field1, field2, quantiles, rates })
}

/// Joint model used on simulated data: intercepts and the shared field.
pub fn joint_spec(s: &SimScenario) -> Result<ModelSpec> {
    let (a1, a2) = s.levels()?;
    Ok(ModelSpec::joint(DiseaseSpec::new(a1), DiseaseSpec::new(a2)))
}

/// Separate model for disease `k` (1 or 2): intercept and a BYM field.
pub fn separate_spec(s: &SimScenario, k: usize) -> Result<ModelSpec> {
    let (a1, a2) = s.levels()?;
    let a = if k == 1 { a1 } else { a2 };
    Ok(ModelSpec::single(DiseaseSpec::new(a).with_bym()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOptions {
    pub joint: FitOptions,
    pub separate: FitOptions,
    /// Also fit the two separate models for the criteria comparison.
    pub compare: bool,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions { joint: FitOptions::default(), separate: FitOptions::with_strategy(Strategy::Eb), compare: true }
    }
}

/// Posterior summaries of the joint fit against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEstimates {
    pub m1: Summary,
    pub m2: Summary,
    pub c: Summary,
    pub tau: Summary,
    pub d: Summary,
    pub dic: f64,
    pub waic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub rep: usize,
    pub joint: Option<JointEstimates>,
    /// `(disease 1, disease 2)` criteria of the separate fits.
    pub separate_dic: Option<(f64, f64)>,
    pub separate_waic: Option<(f64, f64)>,
    /// Failures, recorded rather than propagated.
    pub errors: Vec<String>,
}

impl ReplicateOutcome {
    pub fn covers(&self, truth: &SimScenario) -> Option<[bool; 3]> {
        let j = self.joint.as_ref()?;
        let inside = |s: &Summary, v: f64| s.q025 <= v && v <= s.q975;
        Some([inside(&j.m1, truth.m1), inside(&j.m2, truth.m2), inside(&j.c, truth.c)])
    }

    /// `Some(true)` when the joint model has the lower DIC.
    pub fn joint_preferred_dic(&self) -> Option<bool> {
        Some(self.joint.as_ref()?.dic < self.separate_dic.map(|(a, b)| a + b)?)
    }

    pub fn joint_preferred_waic(&self) -> Option<bool> {
        Some(self.joint.as_ref()?.waic < self.separate_waic.map(|(a, b)| a + b)?)
    }
}

fn latent_summary(r: &FitResult, block: &str) -> Result<Summary> {
    r.latent_block(block).first().map(|l| l.summary).ok_or_else(|| Error::Model(format!("no latent block {block}")))
}

fn hyper_summary(r: &FitResult, name: &str) -> Result<Summary> {
    r.hyper(name).map(|h| h.summary).ok_or_else(|| Error::Model(format!("no hyperparameter {name}")))
}

fn fit_joint(g: &ArealGraph, s: &SimScenario, data: &ObservationTable, opts: &FitOptions) -> Result<JointEstimates> {
    let ctx = build_model(&joint_spec(s)?, g, data)?;
    let r = fit(&ctx, ModelTag::Joint, opts)?;
    Ok(JointEstimates {
        m1: latent_summary(&r, "m1")?,
        m2: latent_summary(&r, "m2")?,
        c: hyper_summary(&r, "c")?,
        tau: hyper_summary(&r, "tau")?,
        d: hyper_summary(&r, "d")?,
        dic: r.dic.dic,
        waic: r.waic.waic,
    })
}

fn fit_separate(g: &ArealGraph, s: &SimScenario, data: &ObservationTable, k: usize, opts: &FitOptions) -> Result<(f64, f64)> {
    let ctx = build_model(&separate_spec(s, k)?, g, &data.select(k - 1)?)?;
    let r = fit(&ctx, ModelTag::separate(k)?, opts)?;
    Ok((r.dic.dic, r.waic.waic))
}

/// Simulates replication `rep` and fits the joint and (optionally) the two
/// separate models.
pub fn run_replicate(g: &ArealGraph, s: &SimScenario, rep: usize, opts: &RecoveryOptions) -> ReplicateOutcome {
    let mut out = ReplicateOutcome { rep, joint: None, separate_dic: None, separate_waic: None, errors: Vec::new() };
    let sim = match simulate_joint(g, s, rep) {
        Ok(v) => v,
        Err(e) => {
            out.errors.push(format!("simulate: {e}"));
            return out;
        }
    };
    match fit_joint(g, s, &sim.data, &opts.joint) {
        Ok(j) => out.joint = Some(j),
        Err(e) => out.errors.push(format!("joint: {e}")),
    }
    if opts.compare {
        let one = fit_separate(g, s, &sim.data, 1, &opts.separate);
        let two = fit_separate(g, s, &sim.data, 2, &opts.separate);
        match (one, two) {
            (Ok(a), Ok(b)) => {
                out.separate_dic = Some((a.0, b.0));
                out.separate_waic = Some((a.1, b.1));
            }
            (Err(e), _) | (_, Err(e)) => out.errors.push(format!("separate: {e}")),
        }
    }
    out
}

/// Empirical 2.5% and 97.5% quantiles of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

fn empirical_range(mut v: Vec<f64>) -> Option<Range> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let at = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let i = h.floor() as usize;
        let j = (i + 1).min(v.len() - 1);
        v[i] + (h - i as f64) * (v[j] - v[i])
    };
    Some(Range { lo: at(0.025), hi: at(0.975) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub scenario: SimScenario,
    pub outcomes: Vec<ReplicateOutcome>,
    pub failures: usize,
    /// Fraction of all replications whose 95% interval covers the truth;
    /// failed fits count as misses.
    pub coverage_m1: f64,
    pub coverage_m2: f64,
    pub coverage_c: f64,
    /// Average posterior mean of `c` over successful fits.
    pub mean_c: f64,
    /// Empirical 2.5–97.5% range of the posterior means.
    pub range_m1: Option<Range>,
    pub range_m2: Option<Range>,
    pub range_c: Option<Range>,
    /// Fraction of replications where the joint model wins.
    pub joint_preferred_dic: f64,
    pub joint_preferred_waic: f64,
}

impl RecoveryReport {
    pub fn from_outcomes(scenario: &SimScenario, mut outcomes: Vec<ReplicateOutcome>) -> Self {
        outcomes.sort_by_key(|o| o.rep);
        let n = outcomes.len().max(1) as f64;
        let mut cover = [0usize; 3];
        for o in &outcomes {
            if let Some(c) = o.covers(scenario) {
                for k in 0..3 {
                    cover[k] += c[k] as usize;
                }
            }
        }
        let joints: Vec<&JointEstimates> = outcomes.iter().filter_map(|o| o.joint.as_ref()).collect();
        let mean_c = if joints.is_empty() { f64::NAN } else { joints.iter().map(|j| j.c.mean).sum::<f64>() / joints.len() as f64 };
        let frac = |f: &dyn Fn(&ReplicateOutcome) -> Option<bool>| outcomes.iter().filter(|o| f(o) == Some(true)).count() as f64 / n;
        RecoveryReport {
            scenario: scenario.clone(),
            failures: outcomes.iter().filter(|o| !o.errors.is_empty()).count(),
            coverage_m1: cover[0] as f64 / n,
            coverage_m2: cover[1] as f64 / n,
            coverage_c: cover[2] as f64 / n,
            mean_c,
            range_m1: empirical_range(joints.iter().map(|j| j.m1.mean).collect()),
            range_m2: empirical_range(joints.iter().map(|j| j.m2.mean).collect()),
            range_c: empirical_range(joints.iter().map(|j| j.c.mean).collect()),
            joint_preferred_dic: frac(&|o| o.joint_preferred_dic()),
            joint_preferred_waic: frac(&|o| o.joint_preferred_waic()),
            outcomes,
        }
    }
}

/// Runs every replication in order. Callers wanting parallelism run
/// [`run_replicate`] themselves and collect with
/// [`RecoveryReport::from_outcomes`].
pub fn recovery_experiment(g: &ArealGraph, s: &SimScenario, opts: &RecoveryOptions) -> Result<RecoveryReport> {
    s.validate()?;
    let outcomes = (0..s.replications).map(|rep| run_replicate(g, s, rep, opts)).collect();
    Ok(RecoveryReport::from_outcomes(s, outcomes))
}

impl core::fmt::Display for RecoveryReport {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        writeln!(f, "replications {} (failures {})", self.outcomes.len(), self.failures)?;
        writeln!(f, "coverage m1 {:.3} m2 {:.3} c {:.3}", self.coverage_m1, self.coverage_m2, self.coverage_c)?;
        writeln!(f, "mean posterior mean of c {:.4}", self.mean_c)?;
        for (name, r) in [("m1", self.range_m1), ("m2", self.range_m2), ("c", self.range_c)] {
            if let Some(r) = r {
                writeln!(f, "{name} posterior means 2.5-97.5% range ({:.3}, {:.3})", r.lo, r.hi)?;
            }
        }
        write!(f, "joint preferred: DIC {:.3} WAIC {:.3}", self.joint_preferred_dic, self.joint_preferred_waic)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulation_is_deterministic() {
        let g = ArealGraph::lattice67();
        let s = SimScenario::default();
        let a = simulate_joint(&g, &s, 3).unwrap();
        let b = simulate_joint(&g, &s, 3).unwrap();
        assert_eq!(a, b);
        let c = simulate_joint(&g, &s, 4).unwrap();
        assert_ne!(a.data.counts, c.data.counts);
        assert_eq!(a.data.n_regions(), 67);
    }

    #[test]
    fn zero_coupling_leaves_disease_two_flat() {
        let g = ArealGraph::lattice67();
        let s = SimScenario { c: 0.0, ..Default::default() };
        let r = simulate_joint(&g, &s, 0).unwrap();
        let q0 = r.quantiles[1][0];
        assert!(r.quantiles[1].iter().all(|&q| q == q0));
        assert!((q0 - 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn independent_fields_differ() {
        let g = ArealGraph::lattice67();
        let s = SimScenario { correlated: false, ..Default::default() };
        let r = simulate_joint(&g, &s, 0).unwrap();
        assert_ne!(r.field1, r.field2);
        assert!((r.quantiles[1][5].ln() - (1.0 + r.field2[5])).abs() < 1e-12);
    }

    #[test]
    fn scenario_validation() {
        assert!(SimScenario { alpha1: 1.0, ..Default::default() }.validate().is_err());
        assert!(SimScenario { replications: 0, ..Default::default() }.validate().is_err());
        assert!(SimScenario { d: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn empirical_range_interpolates() {
        let r = empirical_range((0..=40).map(|v| v as f64).collect()).unwrap();
        assert!((r.lo - 1.0).abs() < 1e-12 && (r.hi - 39.0).abs() < 1e-12);
    }
}
