//! Posterior marginals of hyperparameters, latent elements and predictors.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{IntegrationSet, LatentGaussianModel, Strategy};
use crate::error::{Error, Result};
use crate::special::{brent, normal_cdf, normal_log_pdf};

/// Posterior summary row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// `None` for point masses.
    pub sd: Option<f64>,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub mode: f64,
}

impl Summary {
    pub fn point(v: f64) -> Self {
        Summary { mean: v, sd: None, q025: v, q50: v, q975: v, mode: v }
    }

    /// Whether the 95% interval excludes zero.
    pub fn excludes_zero(&self) -> bool {
        self.q025 > 0.0 || self.q975 < 0.0
    }
}

/// A density tabulated on an increasing grid, normalised by the trapezoid
/// rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    #[serde(default)]
    pub point_mass: bool,
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(a, b)| 0.5 * (a[1] - a[0]) * (b[0] + b[1])).sum()
}

impl Marginal {
    pub fn from_grid(x: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if x.len() < 2 || x.len() != density.len() || x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InsufficientPoints(x.len()));
        }
        if density.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::Domain("marginal density must be finite and non-negative".into()));
        }
        let total = trapezoid(&x, &density);
        if !(total > 0.0) {
            return Err(Error::Domain("marginal density has no mass".into()));
        }
        let density = density.into_iter().map(|d| d / total).collect();
        Ok(Marginal { x, density, point_mass: false })
    }

    pub fn point(v: f64) -> Self {
        Marginal { x: vec![v], density: vec![1.0], point_mass: true }
    }

    pub fn integral(&self) -> f64 {
        if self.point_mass {
            1.0
        } else {
            trapezoid(&self.x, &self.density)
        }
    }

    fn cumulative(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.x.len()];
        for i in 1..self.x.len() {
            c[i] = c[i - 1] + 0.5 * (self.x[i] - self.x[i - 1]) * (self.density[i] + self.density[i - 1]);
        }
        c
    }

    pub fn quantile(&self, p: f64) -> f64 {
        if self.point_mass {
            return self.x[0];
        }
        let c = self.cumulative();
        let total = c[c.len() - 1];
        let target = p * total;
        let k = c.partition_point(|&v| v < target).clamp(1, c.len() - 1);
        let (c0, c1) = (c[k - 1], c[k]);
        let t = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
        self.x[k - 1] + t * (self.x[k] - self.x[k - 1])
    }

    pub fn summary(&self) -> Summary {
        if self.point_mass {
            return Summary::point(self.x[0]);
        }
        let xy: Vec<f64> = self.x.iter().zip(&self.density).map(|(x, d)| x * d).collect();
        let x2y: Vec<f64> = self.x.iter().zip(&self.density).map(|(x, d)| x * x * d).collect();
        let mean = trapezoid(&self.x, &xy);
        let var = (trapezoid(&self.x, &x2y) - mean * mean).max(0.0);
        let imax = (0..self.x.len()).fold(0, |b, i| if self.density[i] > self.density[b] { i } else { b });
        Summary {
            mean,
            sd: Some(var.sqrt()),
            q025: self.quantile(0.025),
            q50: self.quantile(0.5),
            q975: self.quantile(0.975),
            mode: self.x[imax],
        }
    }
}

/// Weighted mixture of Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl GaussianMixture {
    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        let m2: f64 = self.weights.iter().zip(&self.means).zip(&self.sds).map(|((w, m), s)| w * (s * s + m * m)).sum();
        (m2 - mu * mu).max(0.0)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((w, m), s)| {
                if *s > 0.0 {
                    w * normal_cdf((x - m) / s)
                } else if x >= *m {
                    *w
                } else {
                    0.0
                }
            })
            .sum()
    }

    pub fn density(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .filter(|(_, s)| **s > 0.0)
            .map(|((w, m), s)| w * (normal_log_pdf((x - m) / s)).exp() / s)
            .sum()
    }

    fn span(&self) -> (f64, f64) {
        let lo = self.means.iter().zip(&self.sds).map(|(m, s)| m - 8.0 * s).fold(f64::INFINITY, f64::min);
        let hi = self.means.iter().zip(&self.sds).map(|(m, s)| m + 8.0 * s).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    pub fn is_degenerate(&self) -> bool {
        self.sds.iter().all(|&s| s == 0.0)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let (lo, hi) = self.span();
        if self.is_degenerate() || !(hi > lo) {
            // point masses: smallest mean whose cumulative weight reaches p
            let mut idx: Vec<usize> = (0..self.means.len()).collect();
            idx.sort_by(|&a, &b| self.means[a].total_cmp(&self.means[b]));
            let mut acc = 0.0;
            for i in idx {
                acc += self.weights[i];
                if acc >= p - 1e-12 {
                    return self.means[i];
                }
            }
            return self.mean();
        }
        let scale = hi - lo;
        brent(|x| self.cdf(x) - p, lo, hi, 1e-12 * scale, 0.0, 200).unwrap_or_else(|| self.mean())
    }

    pub fn mode(&self) -> f64 {
        if self.means.len() == 1 || self.is_degenerate() {
            return self.means[0];
        }
        let (lo, hi) = self.span();
        let n = 400;
        let h = (hi - lo) / n as f64;
        let best = (0..=n).map(|i| lo + i as f64 * h).fold((lo, f64::NEG_INFINITY), |b, x| {
            let d = self.density(x);
            if d > b.1 {
                (x, d)
            } else {
                b
            }
        });
        // golden-section refinement within one grid cell either side
        let (mut a, mut b) = (best.0 - h, best.0 + h);
        let g = 0.618_033_988_749_895;
        for _ in 0..60 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if self.density(c) > self.density(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    pub fn summary(&self) -> Summary {
        let sd = self.variance().sqrt();
        Summary {
            mean: self.mean(),
            sd: Some(sd),
            q025: self.quantile(0.025),
            q50: self.quantile(0.5),
            q975: self.quantile(0.975),
            mode: self.mode(),
        }
    }

    /// Density tabulated on `n` points spanning the mixture.
    pub fn to_marginal(&self, n: usize) -> Result<Marginal> {
        if self.is_degenerate() {
            return Ok(Marginal::point(self.mean()));
        }
        let (lo, hi) = self.span();
        let x: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let d = x.iter().map(|&v| self.density(v)).collect();
        Marginal::from_grid(x, d)
    }
}

/// Natural cubic spline through `(x_i, y_i)`, extrapolated linearly.
struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl NaturalSpline {
    fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for interior second derivatives
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            }
            for i in 1..k {
                let lower = x[i + 1] - x[i];
                let f = lower / diag[i - 1];
                diag[i] -= f * upper[i - 1];
                rhs[i] -= f * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        NaturalSpline { x, y, m }
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let slope = |i: usize| {
            let h = self.x[i + 1] - self.x[i];
            (self.y[i + 1] - self.y[i]) / h - h * (2.0 * self.m[i] + self.m[i + 1]) / 6.0
        };
        if t <= self.x[0] {
            return self.y[0] + slope(0) * (t - self.x[0]);
        }
        if t >= self.x[n - 1] {
            let i = n - 2;
            let h = self.x[n - 1] - self.x[i];
            let end_slope = (self.y[n - 1] - self.y[i]) / h + h * (self.m[i] + 2.0 * self.m[n - 1]) / 6.0;
            return self.y[n - 1] + end_slope * (t - self.x[n - 1]);
        }
        let i = self.x.partition_point(|&v| v <= t).clamp(1, n - 1) - 1;
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i] + b * self.y[i + 1] + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

const HYPER_GRID: usize = 301;

fn to_natural_marginal(theta: &[f64], internal_density: &[f64], transform: crate::model::Transform) -> Result<Marginal> {
    let x: Vec<f64> = theta.iter().map(|&t| transform.to_natural(t)).collect();
    let d: Vec<f64> = theta.iter().zip(internal_density).map(|(&t, &p)| p / transform.jacobian(t)).collect();
    // drop grid points that collapse numerically at the ends of the range
    let mut xs = Vec::with_capacity(x.len());
    let mut ds = Vec::with_capacity(x.len());
    for (xi, di) in x.into_iter().zip(d) {
        if xs.last().map_or(true, |&l: &f64| xi > l) && di.is_finite() {
            xs.push(xi);
            ds.push(di);
        }
    }
    Marginal::from_grid(xs, ds)
}

fn gaussian_grid(mu: f64, sd_lo: f64, sd_hi: f64) -> (Vec<f64>, Vec<f64>) {
    let lo = mu - 6.0 * sd_lo;
    let hi = mu + 6.0 * sd_hi;
    let theta: Vec<f64> = (0..HYPER_GRID).map(|i| lo + (hi - lo) * i as f64 / (HYPER_GRID - 1) as f64).collect();
    let dens = theta
        .iter()
        .map(|&t| {
            let s = if t < mu { sd_lo } else { sd_hi };
            (-0.5 * ((t - mu) / s).powi(2)).exp()
        })
        .collect();
    (theta, dens)
}

/// Hyperparameter marginals on the natural scale.
///
/// Grid: point masses are summed per coordinate value, the log masses
/// interpolated by a natural cubic spline and transformed with the Jacobian.
/// CCD: split-normal with the axial stretches. EB: point masses.
pub fn hyper_marginals<M: LatentGaussianModel + ?Sized>(m: &M, set: &IntegrationSet) -> Result<Vec<Marginal>> {
    let p = set.mode.theta.len();
    let hyper = m.hyper();
    (0..p)
        .map(|j| {
            let transform = hyper.params[j].transform;
            let mu = set.mode.theta[j];
            match set.strategy {
                Strategy::Eb => Ok(Marginal::point(transform.to_natural(mu))),
                Strategy::Grid => {
                    let mut groups: BTreeMap<i64, f64> = BTreeMap::new();
                    for pt in &set.points {
                        let key = (pt.z[j] / set.spacing).round() as i64;
                        *groups.entry(key).or_insert(0.0) += pt.weight;
                    }
                    let step = set.spacing * set.sd[j];
                    if groups.len() < 3 {
                        let (t, d) = gaussian_grid(mu, set.sd[j], set.sd[j]);
                        return to_natural_marginal(&t, &d, transform);
                    }
                    let xs: Vec<f64> = groups.keys().map(|&k| mu + k as f64 * step).collect();
                    let top = groups.values().cloned().fold(0.0, f64::max);
                    let ys: Vec<f64> = groups.values().map(|&v| (v / top).ln()).collect();
                    let lo = xs[0] - step;
                    let hi = xs[xs.len() - 1] + step;
                    let spline = NaturalSpline::new(xs, ys);
                    let theta: Vec<f64> = (0..HYPER_GRID).map(|i| lo + (hi - lo) * i as f64 / (HYPER_GRID - 1) as f64).collect();
                    let dens: Vec<f64> = theta.iter().map(|&t| spline.eval(t).min(0.0).exp()).collect();
                    to_natural_marginal(&theta, &dens, transform)
                }
                Strategy::Ccd => {
                    let (vals, vecs) = set.eigen.as_ref().ok_or(Error::InsufficientPoints(set.points.len()))?;
                    let mut var_lo = 0.0;
                    let mut var_hi = 0.0;
                    for k in 0..p {
                        let v = vecs[j * p + k];
                        let (s_minus, s_plus) = set.axial_stretch[k];
                        let (up, down) = if v >= 0.0 { (s_plus, s_minus) } else { (s_minus, s_plus) };
                        var_hi += v * v * vals[k] * up * up;
                        var_lo += v * v * vals[k] * down * down;
                    }
                    let (t, d) = gaussian_grid(mu, var_lo.sqrt(), var_hi.sqrt());
                    to_natural_marginal(&t, &d, transform)
                }
            }
        })
        .collect()
}

/// Mixture marginals of every latent element and predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentMarginals {
    pub latent: Vec<GaussianMixture>,
    pub predictors: Vec<GaussianMixture>,
}

/// `π̃(x_i | y) ≈ Σ_k w_k N(μ_k,i, σ²_k,i)` over the integration points,
/// using each point's Gaussian approximation; predictors likewise with
/// `a_i(θ_k)`-projected moments.
pub fn latent_marginals(set: &IntegrationSet) -> Result<LatentMarginals> {
    let first = &set.points[0].approx;
    let n = first.mode.len();
    let m = first.rows.len();
    let k = set.points.len();
    let mut latent: Vec<GaussianMixture> =
        (0..n).map(|_| GaussianMixture { weights: Vec::with_capacity(k), means: Vec::with_capacity(k), sds: Vec::with_capacity(k) }).collect();
    let mut predictors: Vec<GaussianMixture> =
        (0..m).map(|_| GaussianMixture { weights: Vec::with_capacity(k), means: Vec::with_capacity(k), sds: Vec::with_capacity(k) }).collect();
    for pt in &set.points {
        let ga = &pt.approx;
        let f = ga.precision.factorize()?;
        let var = f.marginal_variances();
        for i in 0..n {
            latent[i].weights.push(pt.weight);
            latent[i].means.push(ga.mode[i]);
            latent[i].sds.push(var[i].max(0.0).sqrt());
        }
        for (i, r) in ga.rows.iter().enumerate() {
            predictors[i].weights.push(pt.weight);
            predictors[i].means.push(ga.eta[i]);
            predictors[i].sds.push(f.inverse_quadratic_form(r).max(0.0).sqrt());
        }
    }
    Ok(LatentMarginals { latent, predictors })
}
