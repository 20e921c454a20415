//! Integration designs over the hyperparameters.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{gaussian_approx, GaussianApprox, InferenceOptions, LatentGaussianModel, ThetaMode};
use crate::error::{Error, Result};
use crate::linalg;

/// How `π̃(θ | y)` is explored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// All mass at the mode.
    Eb,
    /// Axis-aligned grid in standardised coordinates (dimension ≤ 3).
    Grid,
    /// Central composite design.
    Ccd,
}

impl Strategy {
    /// Grid up to three hyperparameters, CCD beyond.
    pub fn auto(dim: usize) -> Self {
        if dim <= 3 {
            Strategy::Grid
        } else {
            Strategy::Ccd
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Eb => "eb",
            Strategy::Grid => "grid",
            Strategy::Ccd => "ccd",
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "eb" => Ok(Strategy::Eb),
            "grid" => Ok(Strategy::Grid),
            "ccd" => Ok(Strategy::Ccd),
            other => Err(format!("unknown strategy {other:?} (expected eb, grid or ccd)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IntegrationPoint {
    /// Internal-scale hyperparameters.
    pub theta: Vec<f64>,
    /// Design coordinates (grid steps or CCD units).
    pub z: Vec<f64>,
    pub log_density: f64,
    /// Design weight `Δ_k`.
    pub delta: f64,
    /// Normalised posterior weight; sums to one over the set.
    pub weight: f64,
    pub approx: GaussianApprox,
}

#[derive(Debug, Clone)]
pub struct IntegrationSet {
    pub strategy: Strategy,
    pub points: Vec<IntegrationPoint>,
    pub mode: ThetaMode,
    /// Per-hyperparameter standard deviations `√((−H)⁻¹)_jj`.
    pub sd: Vec<f64>,
    /// Grid spacing in standard deviations.
    pub spacing: f64,
    /// CCD: eigenvalues and eigenvectors (columns) of `(−H)⁻¹`.
    pub eigen: Option<(Vec<f64>, Vec<f64>)>,
    /// CCD: `(σ₋, σ₊)` stretch per eigen-axis from the axial points.
    pub axial_stretch: Vec<(f64, f64)>,
}

fn evaluate<M: LatentGaussianModel + ?Sized>(m: &M, theta: Vec<f64>, x0: &[f64], opts: &InferenceOptions) -> Result<(f64, GaussianApprox)> {
    let ga = gaussian_approx(m, &theta, Some(x0), opts)?;
    let l = ga.log_marginal(m.log_hyperprior(&theta));
    if l.is_finite() {
        Ok((l, ga))
    } else {
        Err(Error::NonFinite(0))
    }
}

fn normalise(points: &mut [IntegrationPoint]) {
    let top = points.iter().map(|p| p.log_density).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = points.iter().map(|p| p.delta * (p.log_density - top).exp()).sum();
    for p in points.iter_mut() {
        p.weight = p.delta * (p.log_density - top).exp() / total;
    }
}

/// Central composite design in `p` dimensions: centre, `2p` axial points and
/// a two-level factorial (full for `p ≤ 4`, half fraction with
/// `z_p = Π_{j<p} z_j` beyond), all on the sphere of radius `f0·√p`.
pub fn ccd_design(p: usize, f0: f64) -> Vec<(Vec<f64>, f64)> {
    let radius = f0 * (p as f64).sqrt();
    let mut pts: Vec<Vec<f64>> = Vec::new();
    for j in 0..p {
        for s in [1.0, -1.0] {
            let mut z = vec![0.0; p];
            z[j] = s * radius;
            pts.push(z);
        }
    }
    if p >= 2 {
        let free = if p <= 4 { p } else { p - 1 };
        for mask in 0..(1usize << free) {
            let mut z: Vec<f64> = (0..free).map(|j| if mask >> j & 1 == 1 { -f0 } else { f0 }).collect();
            if free < p {
                let sign: f64 = z.iter().map(|v| v.signum()).product();
                z.push(sign * f0);
            }
            pts.push(z);
        }
    }
    let n = pts.len() as f64;
    let delta = 1.0 / (n * (f0 * f0 - 1.0) * (-(p as f64) * f0 * f0 / 2.0).exp());
    let mut out = vec![(vec![0.0; p], 1.0)];
    out.extend(pts.into_iter().map(|z| (z, delta)));
    out
}

/// Integration points around the mode for the chosen strategy.
pub fn integration_points<M: LatentGaussianModel + ?Sized>(m: &M, mode: &ThetaMode, strategy: Strategy, opts: &InferenceOptions) -> Result<IntegrationSet> {
    let p = mode.theta.len();
    let cov = if p > 0 { linalg::inverse_spd(&mode.neg_hessian, p)? } else { Vec::new() };
    let sd: Vec<f64> = (0..p).map(|j| cov[j * p + j].sqrt()).collect();
    let x0 = &mode.latent_mode;
    let mut set = IntegrationSet {
        strategy,
        points: Vec::new(),
        mode: mode.clone(),
        sd: sd.clone(),
        spacing: opts.grid_spacing,
        eigen: None,
        axial_stretch: Vec::new(),
    };
    let (l0, ga0) = evaluate(m, mode.theta.clone(), x0, opts)?;
    let centre = IntegrationPoint { theta: mode.theta.clone(), z: vec![0.0; p], log_density: l0, delta: 1.0, weight: 1.0, approx: ga0 };
    match strategy {
        Strategy::Eb => set.points.push(centre),
        Strategy::Grid => {
            if p > 3 {
                return Err(Error::GridTooLarge(p));
            }
            set.points.push(centre);
            let mut seen: BTreeSet<Vec<i32>> = BTreeSet::new();
            seen.insert(vec![0; p]);
            let mut queue: VecDeque<Vec<i32>> = VecDeque::new();
            queue.push_back(vec![0; p]);
            while let Some(k) = queue.pop_front() {
                for j in 0..p {
                    for s in [1, -1] {
                        let mut nk = k.clone();
                        nk[j] += s;
                        if !seen.insert(nk.clone()) {
                            continue;
                        }
                        if set.points.len() >= opts.grid_max_points {
                            return Err(Error::InsufficientPoints(set.points.len()));
                        }
                        let z: Vec<f64> = nk.iter().map(|&v| v as f64 * opts.grid_spacing).collect();
                        if z.iter().any(|v| v.abs() > opts.grid_max_z + 1e-9) {
                            continue;
                        }
                        let theta: Vec<f64> = (0..p).map(|i| mode.theta[i] + sd[i] * z[i]).collect();
                        if let Ok((l, ga)) = evaluate(m, theta.clone(), x0, opts) {
                            if l0 - l <= opts.grid_drop {
                                set.points.push(IntegrationPoint { theta, z, log_density: l, delta: 1.0, weight: 0.0, approx: ga });
                                queue.push_back(nk);
                            }
                        }
                    }
                }
            }
        }
        Strategy::Ccd => {
            let (vals, vecs) = linalg::symmetric_eigen(&cov, p);
            let design = ccd_design(p, opts.ccd_f0);
            set.points.push(centre);
            for (z, delta) in design.into_iter().skip(1) {
                let theta: Vec<f64> = (0..p)
                    .map(|i| mode.theta[i] + (0..p).map(|k| vecs[i * p + k] * vals[k].sqrt() * z[k]).sum::<f64>())
                    .collect();
                if let Ok((l, ga)) = evaluate(m, theta.clone(), x0, opts) {
                    set.points.push(IntegrationPoint { theta, z, log_density: l, delta, weight: 0.0, approx: ga });
                }
            }
            // the first 2p design points are the axial pairs
            let radius = opts.ccd_f0 * (p as f64).sqrt();
            set.axial_stretch = (0..p)
                .map(|k| {
                    let stretch = |sign: f64| {
                        set.points
                            .iter()
                            .find(|pt| (pt.z[k] - sign * radius).abs() < 1e-12)
                            .map(|pt| {
                                let drop = l0 - pt.log_density;
                                if drop > 1e-8 {
                                    (radius / (2.0 * drop).sqrt()).clamp(0.2, 5.0)
                                } else {
                                    5.0
                                }
                            })
                            .unwrap_or(1.0)
                    };
                    (stretch(-1.0), stretch(1.0))
                })
                .collect();
            set.eigen = Some((vals, vecs));
        }
    }
    normalise(&mut set.points);
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ccd_sizes() {
        assert_eq!(ccd_design(1, 1.1).len(), 3);
        assert_eq!(ccd_design(2, 1.1).len(), 1 + 4 + 4);
        assert_eq!(ccd_design(3, 1.1).len(), 1 + 6 + 8);
        assert_eq!(ccd_design(4, 1.1).len(), 1 + 8 + 16);
        assert_eq!(ccd_design(5, 1.1).len(), 1 + 10 + 16);
        assert_eq!(ccd_design(7, 1.1).len(), 1 + 14 + 64);
    }

    #[test]
    fn ccd_is_exact_for_gaussian_second_moments() {
        for p in 1..=7 {
            let f0 = 1.1;
            let d = ccd_design(p, f0);
            let w: Vec<f64> = d.iter().map(|(z, delta)| delta * (-0.5 * linalg::dot(z, z)).exp()).collect();
            let total: f64 = w.iter().sum();
            for i in 0..p {
                let mean: f64 = d.iter().zip(&w).map(|((z, _), w)| w * z[i]).sum::<f64>() / total;
                assert!(mean.abs() < 1e-12);
                for j in 0..p {
                    let m2: f64 = d.iter().zip(&w).map(|((z, _), w)| w * z[i] * z[j]).sum::<f64>() / total;
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((m2 - want).abs() < 1e-12, "p={p} ({i},{j}): {m2}");
                }
            }
        }
    }

    #[test]
    fn half_fraction_is_balanced() {
        let d = ccd_design(5, 1.1);
        let fact: Vec<&Vec<f64>> = d.iter().skip(11).map(|(z, _)| z).collect();
        for a in 0..5 {
            for b in 0..a {
                let s: f64 = fact.iter().map(|z| z[a] * z[b]).sum();
                assert!(s.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("EB".parse::<Strategy>().unwrap(), Strategy::Eb);
        assert_eq!("ccd".parse::<Strategy>().unwrap(), Strategy::Ccd);
        assert!("laplace".parse::<Strategy>().is_err());
        assert_eq!(Strategy::auto(3), Strategy::Grid);
        assert_eq!(Strategy::auto(7), Strategy::Ccd);
    }
}
