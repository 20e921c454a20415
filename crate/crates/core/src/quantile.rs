//! The continuous Poisson distribution and the quantile → rate map.
//!
//! The continuous Poisson with rate λ has CDF `F(x) = Q(x + 1, λ)` on
//! `x > −1`, where `Q` is the regularised upper incomplete gamma function.
//! At integers it coincides with the discrete Poisson CDF, and
//! `⌈X′⌉ ~ Poisson(λ)`.
//!
//! The map `h(q, α)` returns the unique λ for which `q` is the level-α
//! quantile, i.e. the root of `Q(q + 1, λ) = α`. It is strictly increasing
//! in `q` and strictly decreasing in `α`.

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{brent, digamma, gamma_q, ln_gamma};

/// Largest quantile the map accepts.
pub const MAX_QUANTILE: f64 = 1e6;

/// A quantile level strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(QuantileLevel(alpha))
        } else {
            Err(Error::InvalidParameter(alloc::format!("quantile level must lie in (0, 1), got {alpha}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for QuantileLevel {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<QuantileLevel> for f64 {
    fn from(q: QuantileLevel) -> f64 {
        q.0
    }
}

/// Rate of a (continuous) Poisson distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CPoisParams {
    lambda: f64,
}

impl CPoisParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda > 0.0 && lambda.is_finite() {
            Ok(CPoisParams { lambda })
        } else {
            Err(Error::InvalidParameter(alloc::format!("Poisson rate must be positive and finite, got {lambda}")))
        }
    }

    pub fn lambda(self) -> f64 {
        self.lambda
    }
}

/// `F(x) = Γ(x+1, λ)/Γ(x+1)` for `x > −1`.
pub fn cpois_cdf(x: f64, p: CPoisParams) -> Result<f64> {
    if !(x > -1.0) || x.is_nan() {
        return Err(Error::Domain(alloc::format!("continuous Poisson support is x > -1, got {x}")));
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    gamma_q(x + 1.0, p.lambda)
}

/// Level-α quantile of the continuous Poisson: the root of `F(x) = α` on `(−1, ∞)`.
pub fn cpois_quantile(alpha: QuantileLevel, p: CPoisParams) -> Result<f64> {
    let a = alpha.value();
    let f = |x: f64| {
        if x <= -1.0 {
            -a
        } else {
            gamma_q(x + 1.0, p.lambda).map_or(f64::NAN, |v| v - a)
        }
    };
    let mut hi = p.lambda.max(1.0);
    let mut guard = 0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::RootBracket { q: hi, alpha: a });
        }
    }
    brent(f, -1.0, hi, 1e-14, 1e-13, 300).ok_or(Error::RootBracket { q: hi, alpha: a })
}

/// `∂F/∂λ` at `(q, λ)`: `−e^{−λ} λ^q / Γ(q+1)`.
fn cdf_dlambda(q: f64, lambda: f64) -> f64 {
    -(-lambda + q * lambda.ln() - ln_gamma(q + 1.0)).exp()
}

fn check_q(q: f64) -> Result<()> {
    if !(q > -1.0) || !q.is_finite() {
        return Err(Error::Domain(alloc::format!("quantile must be > -1 and finite, got {q}")));
    }
    if q > MAX_QUANTILE {
        return Err(Error::QuantileOverflow(q));
    }
    Ok(())
}

/// `h(q, α)`: the rate whose continuous-Poisson level-α quantile is `q`.
pub fn qmap_lambda(q: f64, alpha: QuantileLevel) -> Result<f64> {
    check_q(q)?;
    let a = alpha.value();
    let s = q + 1.0;
    let g = |lam: f64| gamma_q(s, lam).map(|v| v - a);
    let fail = || Error::RootBracket { q, alpha: a };

    // bracket [lo, hi] with g(lo) >= 0 >= g(hi)
    let start = q.max(1.0);
    let g0 = g(start)?;
    let (mut lo, mut hi, mut glo, mut ghi);
    if g0 > 0.0 {
        lo = start;
        glo = g0;
        hi = 2.0 * start;
        ghi = g(hi)?;
        let mut k = 0;
        while ghi > 0.0 {
            lo = hi;
            glo = ghi;
            hi *= 2.0;
            ghi = g(hi)?;
            k += 1;
            if k > 100 {
                return Err(fail());
            }
        }
    } else {
        hi = start;
        ghi = g0;
        lo = 0.5 * start;
        glo = g(lo)?;
        let mut k = 0;
        while glo < 0.0 {
            hi = lo;
            ghi = glo;
            lo *= 0.5;
            if lo < 1e-300 {
                return Err(fail());
            }
            glo = g(lo)?;
            k += 1;
            if k > 1100 {
                return Err(fail());
            }
        }
    }
    if glo == 0.0 {
        return Ok(lo);
    }
    if ghi == 0.0 {
        return Ok(hi);
    }

    // safeguarded Newton inside the bracket
    let mut lam = if (hi / lo) > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
    for _ in 0..200 {
        let gv = g(lam)?;
        if gv == 0.0 {
            return Ok(lam);
        }
        if gv > 0.0 {
            lo = lam;
        } else {
            hi = lam;
        }
        let dg = cdf_dlambda(q, lam);
        let newton = lam - gv / dg;
        let next = if dg < 0.0 && newton > lo && newton < hi {
            newton
        } else if hi / lo > 4.0 {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if (next - lam).abs() <= 1e-15 * lam || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        lam = next;
    }
    Ok(lam)
}

/// `(h(q, α), ∂h/∂q)`.
///
/// The derivative follows from the implicit function theorem on
/// `F(q, λ) = α`: `dλ/dq = −(∂F/∂q)/(∂F/∂λ)`, with `∂F/∂q` by central
/// differences at fixed λ.
pub fn qmap_with_derivative(q: f64, alpha: QuantileLevel) -> Result<(f64, f64)> {
    let lam = qmap_lambda(q, alpha)?;
    let step = 1e-6f64.max(1e-6 * (1.0 + q.abs())).min(0.5 * (q + 1.0));
    let fp = gamma_q(q + step + 1.0, lam)?;
    let fm = gamma_q(q - step + 1.0, lam)?;
    let dfdq = (fp - fm) / (2.0 * step);
    let dfdl = cdf_dlambda(q, lam);
    let d = -dfdq / dfdl;
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain(alloc::format!("non-positive dλ/dq = {d} at q = {q}, alpha = {}", alpha.value())));
    }
    Ok((lam, d))
}

/// `(h, h', h'')` in `q`.
///
/// The second derivative differentiates the implicit relation once more:
/// `h'' = −(F_qq + 2 F_qλ h' + F_λλ h'²) / F_λ`, where `F_λλ` and `F_qλ` are
/// closed form. `F_q` and `F_qq` come from extrapolated central
/// differences at fixed λ whose step grows like the `√q` width of the
/// distribution; the wider step keeps the cancellation in `h''` clear of
/// round-off for large `q`, so `h'` here is slightly more accurate than the
/// one from [`qmap_with_derivative`].
pub fn qmap_with_derivatives(q: f64, alpha: QuantileLevel) -> Result<(f64, f64, f64)> {
    let lam = qmap_lambda(q, alpha)?;
    let p = -cdf_dlambda(q, lam);
    let h = (0.1 * (1.0 + q.abs()).sqrt()).min(0.5 * (q + 1.0));
    let f0 = gamma_q(q + 1.0, lam)?;
    let mut d1s = [0.0; 3];
    let mut d2s = [0.0; 3];
    for (k, hk) in [h, 0.5 * h, 0.25 * h].into_iter().enumerate() {
        let fp = gamma_q(q + hk + 1.0, lam)?;
        let fm = gamma_q(q - hk + 1.0, lam)?;
        d1s[k] = (fp - fm) / (2.0 * hk);
        d2s[k] = (fp - 2.0 * f0 + fm) / (hk * hk);
    }
    let f_q = richardson(d1s);
    let f_qq = richardson(d2s);
    let d1 = f_q / p;
    if !(d1 > 0.0) || !d1.is_finite() {
        return Err(Error::Domain(alloc::format!("non-positive dλ/dq = {d1} at q = {q}, alpha = {}", alpha.value())));
    }
    let f_ll = p * (1.0 - q / lam);
    let f_ql = -p * (lam.ln() - digamma(q + 1.0));
    let d2 = (f_qq + 2.0 * f_ql * d1 + f_ll * d1 * d1) / p;
    Ok((lam, d1, d2))
}

/// Two rounds of Richardson extrapolation on central differences taken at
/// steps `h, h/2, h/4`.
fn richardson(d: [f64; 3]) -> f64 {
    let r0 = (4.0 * d[1] - d[0]) / 3.0;
    let r1 = (4.0 * d[2] - d[1]) / 3.0;
    (16.0 * r1 - r0) / 15.0
}

pub fn qmap_dlambda_dq(q: f64, alpha: QuantileLevel) -> Result<f64> {
    qmap_with_derivative(q, alpha).map(|r| r.1)
}

/// Inverse-CDF draw from the continuous Poisson.
pub fn cpois_sample<R: Rng + ?Sized>(rng: &mut R, p: CPoisParams) -> Result<f64> {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return cpois_quantile(QuantileLevel(u), p);
        }
    }
}

/// Discrete Poisson draw as the ceiling of a continuous-Poisson draw.
pub fn poisson_sample<R: Rng + ?Sized>(rng: &mut R, p: CPoisParams) -> Result<u64> {
    let x = cpois_sample(rng, p)?;
    Ok(x.ceil().max(0.0) as u64)
}
