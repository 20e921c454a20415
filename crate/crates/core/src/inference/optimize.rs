//! Quasi-Newton search for the mode of `π̃(θ | y)` and its curvature.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{gaussian_approx, InferenceOptions, LatentGaussianModel};
use crate::error::{Error, Result};
use crate::linalg;

/// Mode of `log π̃(θ | y)` on the internal scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaMode {
    pub theta: Vec<f64>,
    pub log_density: f64,
    /// `−∇² log π̃(θ | y)` at the mode, row-major.
    pub neg_hessian: Vec<f64>,
    /// Set when the finite-difference Hessian was not positive definite
    /// and had its spectrum lifted.
    pub hessian_regularized: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Latent mode at `theta`, a warm start for later evaluations.
    pub latent_mode: Vec<f64>,
}

struct Objective<'a, M: LatentGaussianModel + ?Sized> {
    m: &'a M,
    opts: &'a InferenceOptions,
}

impl<M: LatentGaussianModel + ?Sized> Objective<'_, M> {
    /// `(−log π̃(θ | y), latent mode)`.
    fn eval(&self, theta: &[f64], x0: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
        let ga = gaussian_approx(self.m, theta, x0, self.opts)?;
        let v = -ga.log_marginal(self.m.log_hyperprior(theta));
        if v.is_finite() {
            Ok((v, ga.mode))
        } else {
            Err(Error::NonFinite(0))
        }
    }

    fn value(&self, theta: &[f64], x0: &[f64]) -> Result<f64> {
        self.eval(theta, Some(x0)).map(|r| r.0)
    }
}

/// Central-difference gradient; also returns the diagonal curvature the
/// same evaluations give for free.
fn fd_gradient(f: &mut dyn FnMut(&[f64]) -> Result<f64>, theta: &[f64], f0: f64, h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = theta.len();
    let mut g = vec![0.0; p];
    let mut curv = vec![0.0; p];
    let mut t = theta.to_vec();
    for j in 0..p {
        t[j] = theta[j] + h;
        let fp = f(&t);
        t[j] = theta[j] - h;
        let fm = f(&t);
        t[j] = theta[j];
        match (fp, fm) {
            (Ok(fp), Ok(fm)) => {
                g[j] = (fp - fm) / (2.0 * h);
                curv[j] = (fp - 2.0 * f0 + fm) / (h * h);
            }
            (Ok(fp), Err(_)) => g[j] = (fp - f0) / h,
            (Err(_), Ok(fm)) => g[j] = (f0 - fm) / h,
            (Err(e), Err(_)) => return Err(e),
        }
    }
    Ok((g, curv))
}

pub(crate) struct MinimizeResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// BFGS on `f` with finite-difference gradients. The inverse Hessian starts
/// from the diagonal curvature of the first gradient evaluation.
pub(crate) fn minimize(
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
    start: &[f64],
    h: f64,
    tol: f64,
    max_iter: usize,
    on_accept: &mut dyn FnMut(&[f64]),
) -> Result<MinimizeResult> {
    let p = start.len();
    let mut x = start.to_vec();
    let mut fx = f(&x)?;
    if p == 0 {
        return Ok(MinimizeResult { x, iterations: 0, gradient_norm: 0.0 });
    }
    let (mut g, curv) = fd_gradient(f, &x, fx, h)?;
    let mut hinv = vec![0.0; p * p];
    for j in 0..p {
        hinv[j * p + j] = if curv[j] > 1e-2 { 1.0 / curv[j] } else { 1.0 };
    }
    let mut iterations = 0;
    loop {
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm <= tol {
            return Ok(MinimizeResult { x, iterations, gradient_norm: gnorm });
        }
        if iterations >= max_iter {
            return Err(Error::OptimNoConvergence(max_iter));
        }
        iterations += 1;
        let mut d: Vec<f64> = (0..p).map(|i| -(0..p).map(|j| hinv[i * p + j] * g[j]).sum::<f64>()).collect();
        let mut slope = linalg::dot(&g, &d);
        if !(slope < 0.0) {
            hinv.iter_mut().enumerate().for_each(|(k, v)| *v = if k % (p + 1) == 0 { 1.0 } else { 0.0 });
            d = g.iter().map(|v| -v).collect();
            slope = linalg::dot(&g, &d);
        }
        // internal-scale steps beyond 2 units are never trusted in one go
        let big = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if big > 2.0 {
            d.iter_mut().for_each(|v| *v *= 2.0 / big);
            slope *= 2.0 / big;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            if let Ok(fnew) = f(&xn) {
                if fnew <= fx + 1e-4 * t * slope {
                    accepted = Some((xn, fnew));
                    break;
                }
            }
            t *= 0.5;
        }
        // one parabolic refinement along d, exact on quadratics
        if let Some((_, fa)) = &accepted {
            let curvature = fa - fx - slope * t;
            let ts = if curvature > 0.0 { -slope * t * t / (2.0 * curvature) } else { f64::INFINITY };
            if ts > 0.1 * t && ts < 4.0 * t && (ts - t).abs() > 0.01 * t {
                let xs: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + ts * b).collect();
                if let Ok(fs) = f(&xs) {
                    if fs < *fa {
                        accepted = Some((xs, fs));
                    }
                }
            } else if t == 1.0 && ts >= 4.0 {
                // nearly linear along d: keep doubling within the step cap
                let big = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let mut te = 2.0;
                while te * big <= 2.0 {
                    let xe: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + te * b).collect();
                    match f(&xe) {
                        Ok(fe) if fe < accepted.as_ref().map_or(f64::INFINITY, |a| a.1) => accepted = Some((xe, fe)),
                        _ => break,
                    }
                    te *= 2.0;
                }
            }
        }
        let Some((xn, fnew)) = accepted else {
            // the line search stalls only where the FD gradient is noise
            if gnorm <= 10.0 * tol {
                return Ok(MinimizeResult { x, iterations, gradient_norm: gnorm });
            }
            return Err(Error::OptimNoConvergence(iterations));
        };
        on_accept(&xn);
        let (gn, _) = fd_gradient(f, &xn, fnew, h)?;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = linalg::dot(&s, &y);
        if sy > 1e-12 * linalg::dot(&s, &s).sqrt() * linalg::dot(&y, &y).sqrt() {
            let hy = linalg::mat_vec(&hinv, p, &y);
            let yhy = linalg::dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..p {
                for j in 0..p {
                    hinv[i * p + j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
        x = xn;
        fx = fnew;
        g = gn;
    }
}

/// Central finite-difference Hessian of `f` at `x`.
pub(crate) fn fd_hessian(f: &mut dyn FnMut(&[f64]) -> Result<f64>, x: &[f64], f0: f64, h: f64) -> Result<Vec<f64>> {
    let p = x.len();
    let mut hess = vec![0.0; p * p];
    let mut t = x.to_vec();
    for i in 0..p {
        t[i] = x[i] + h;
        let fp = f(&t)?;
        t[i] = x[i] - h;
        let fm = f(&t)?;
        t[i] = x[i];
        hess[i * p + i] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let mut v = 0.0;
            for (si, sj, sign) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                t[i] = x[i] + si * h;
                t[j] = x[j] + sj * h;
                v += sign * f(&t)?;
            }
            t[i] = x[i];
            t[j] = x[j];
            hess[i * p + j] = v / (4.0 * h * h);
            hess[j * p + i] = hess[i * p + j];
        }
    }
    Ok(hess)
}

/// Lifts a symmetric matrix to positive definiteness by flooring its
/// eigenvalues. Returns whether anything changed.
fn make_positive_definite(a: &mut [f64], p: usize) -> bool {
    if linalg::cholesky(a, p).is_ok() {
        return false;
    }
    let (vals, vecs) = linalg::symmetric_eigen(a, p);
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-3 * top).max(1e-6);
    let vals: Vec<f64> = vals.iter().map(|v| v.abs().max(floor)).collect();
    for i in 0..p {
        for j in 0..p {
            a[i * p + j] = (0..p).map(|k| vecs[i * p + k] * vals[k] * vecs[j * p + k]).sum();
        }
    }
    true
}

/// `−∇² log π̃(θ | y)` by central differences, warm-started from `x0`.
pub fn hessian_fd<M: LatentGaussianModel + ?Sized>(m: &M, theta: &[f64], x0: &[f64], opts: &InferenceOptions) -> Result<Vec<f64>> {
    let obj = Objective { m, opts };
    let (f0, _) = obj.eval(theta, Some(x0))?;
    let mut f = |t: &[f64]| obj.value(t, x0);
    fd_hessian(&mut f, theta, f0, opts.hessian_step)
}

/// Locates the mode of `log π̃(θ | y)` and its curvature there.
pub fn optimize_theta<M: LatentGaussianModel + ?Sized>(m: &M, start: Option<&[f64]>, opts: &InferenceOptions) -> Result<ThetaMode> {
    let obj = Objective { m, opts };
    let start = start.map(|s| s.to_vec()).unwrap_or_else(|| m.hyper().initial());
    let (_, x_start) = obj.eval(&start, None)?;
    let warm = core::cell::RefCell::new(x_start);
    let res = {
        let mut f = |t: &[f64]| obj.value(t, &warm.borrow());
        let mut on_accept = |t: &[f64]| {
            let next = obj.eval(t, Some(&warm.borrow()));
            if let Ok((_, x)) = next {
                *warm.borrow_mut() = x;
            }
        };
        minimize(&mut f, &start, opts.fd_step, opts.grad_tol, opts.optim_max_iter, &mut on_accept)?
    };
    let (f0, latent_mode) = obj.eval(&res.x, Some(&warm.borrow()))?;
    let p = res.x.len();
    let mut neg_hessian = hessian_fd(m, &res.x, &latent_mode, opts)?;
    let hessian_regularized = p > 0 && make_positive_definite(&mut neg_hessian, p);
    Ok(ThetaMode {
        theta: res.x,
        log_density: -f0,
        neg_hessian,
        hessian_regularized,
        iterations: res.iterations,
        gradient_norm: res.gradient_norm,
        latent_mode,
    })
}
