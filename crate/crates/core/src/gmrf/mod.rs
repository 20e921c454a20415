//! Precision-matrix constructors for the latent components.
//!
//! All constructors return proper (positive-definite) matrices. Intrinsic
//! structures (random walks, the plain Besag graph Laplacian) carry a soft
//! sum-to-zero term `κ·(1/n)·J` that removes their null space.

mod sparse;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

pub use sparse::{Factorization, Ordering, SparsePrecision};

use crate::error::{Error, Result};
use crate::graph::ArealGraph;
use crate::linalg;

/// Largest dimension accepted by [`scale_to_unit_geometric_mean`], which
/// needs every marginal variance.
pub const MAX_SCALING_DIM: usize = 5000;

/// Parameters of the proper Besag field `Q_ii = τ(n_i + d)`, `Q_ij = −τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesagProperParams {
    pub tau: f64,
    pub d: f64,
}

impl BesagProperParams {
    pub fn new(tau: f64, d: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) || !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidParameter(format!("proper Besag needs tau > 0 and d > 0, got tau = {tau}, d = {d}")));
        }
        Ok(BesagProperParams { tau, d })
    }
}

/// Marginal precision and spatial fraction of a scaled BYM field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BymParams {
    pub tau_b: f64,
    pub phi: f64,
}

impl BymParams {
    pub fn new(tau_b: f64, phi: f64) -> Result<Self> {
        if !(tau_b > 0.0 && tau_b.is_finite()) || !(0.0..=1.0).contains(&phi) {
            return Err(Error::InvalidParameter(format!("BYM needs tau_b > 0 and phi in [0,1], got {tau_b}, {phi}")));
        }
        Ok(BymParams { tau_b, phi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RwOrder {
    First,
    Second,
}

impl RwOrder {
    pub fn as_usize(self) -> usize {
        match self {
            RwOrder::First => 1,
            RwOrder::Second => 2,
        }
    }
}

pub fn besag_proper_precision(g: &ArealGraph, p: &BesagProperParams) -> Result<SparsePrecision> {
    g.require_connected()?;
    if g.n_regions() < 2 {
        return Err(Error::InvalidDimension("proper Besag needs at least two regions".into()));
    }
    BesagProperParams::new(p.tau, p.d)?;
    let n = g.n_regions();
    let mut trip = Vec::with_capacity(n + 2 * g.n_edges());
    for i in 0..n {
        trip.push((i, i, p.tau * (g.degree(i) as f64 + p.d)));
        for &j in g.neighbors(i) {
            if j < i {
                trip.push((i, j, -p.tau));
            }
        }
    }
    SparsePrecision::from_triplets(n, trip)
}

pub fn iid_precision(n: usize, tau: f64) -> Result<SparsePrecision> {
    if n == 0 || !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("iid precision needs n >= 1 and tau > 0, got n = {n}, tau = {tau}")));
    }
    SparsePrecision::from_triplets(n, (0..n).map(|i| (i, i, tau)))
}

fn add_sum_to_zero(trip: &mut Vec<(usize, usize, f64)>, n: usize, kappa: f64) {
    if kappa == 0.0 {
        return;
    }
    let v = kappa / n as f64;
    for i in 0..n {
        for j in 0..=i {
            trip.push((i, j, v));
        }
    }
}

/// `τ·R + κ·(1/n)·J` where `R` is the random-walk structure of the given order.
/// For RW2 a matching soft term `κ·v vᵀ/‖v‖²` on the centred index `v`
/// removes the linear part of the null space as well.
pub fn rw_precision(n: usize, order: RwOrder, tau: f64, kappa: f64) -> Result<SparsePrecision> {
    let k = order.as_usize();
    if n < k + 1 {
        return Err(Error::InvalidDimension(format!("RW{k} needs at least {} nodes, got {n}", k + 1)));
    }
    if !(tau > 0.0) || kappa < 0.0 {
        return Err(Error::InvalidParameter(format!("RW precision needs tau > 0, kappa >= 0, got {tau}, {kappa}")));
    }
    let stencil: &[f64] = match order {
        RwOrder::First => &[-1.0, 1.0],
        RwOrder::Second => &[1.0, -2.0, 1.0],
    };
    let mut trip = Vec::new();
    for r in 0..n - k {
        for (a, &ca) in stencil.iter().enumerate() {
            for (b, &cb) in stencil.iter().enumerate().take(a + 1) {
                trip.push((r + a, r + b, tau * ca * cb));
            }
        }
    }
    add_sum_to_zero(&mut trip, n, kappa);
    if order == RwOrder::Second && kappa > 0.0 {
        // the RW2 null space also holds linear trends
        let centre = (n as f64 - 1.0) / 2.0;
        let v: Vec<f64> = (0..n).map(|i| i as f64 - centre).collect();
        let norm: f64 = v.iter().map(|x| x * x).sum();
        for i in 0..n {
            for j in 0..=i {
                trip.push((i, j, kappa * v[i] * v[j] / norm));
            }
        }
    }
    SparsePrecision::from_triplets(n, trip)
}

/// Intrinsic Besag structure (graph Laplacian) plus the soft sum-to-zero term.
pub fn besag_structure(g: &ArealGraph, kappa: f64) -> Result<SparsePrecision> {
    g.require_connected()?;
    let n = g.n_regions();
    let mut trip = Vec::new();
    for i in 0..n {
        trip.push((i, i, g.degree(i) as f64));
        for &j in g.neighbors(i) {
            if j < i {
                trip.push((i, j, -1.0));
            }
        }
    }
    add_sum_to_zero(&mut trip, n, kappa);
    SparsePrecision::from_triplets(n, trip)
}

/// Rescales `Q` so that the geometric mean of the marginal variances is one.
///
/// With `null_space_rank = r > 0`, variances are taken under the hard
/// constraint that removes the polynomial null space of degree `< r`
/// (constant for RW1 / Besag, constant and linear for RW2); the soft
/// constraint's own variance along that space is excluded.
pub fn scale_to_unit_geometric_mean(q: &SparsePrecision, null_space_rank: usize) -> Result<(SparsePrecision, f64)> {
    let n = q.dim();
    if n > MAX_SCALING_DIM {
        return Err(Error::InvalidDimension(format!("scaling supports dimension <= {MAX_SCALING_DIM}, got {n}")));
    }
    let f = Factorization::new(q, Ordering::ReverseCuthillMcKee)?;
    let mut var = f.marginal_variances();
    if null_space_rank > 0 {
        let r = null_space_rank.min(n);
        let centre = (n as f64 - 1.0) / 2.0;
        let basis: Vec<Vec<f64>> = (0..r)
            .map(|k| (0..n).map(|i| (i as f64 - centre).powi(k as i32)).collect())
            .collect();
        let sigma_v: Vec<Vec<f64>> = basis.iter().map(|v| f.solve(v)).collect();
        let mut vsv = vec![0.0; r * r];
        for a in 0..r {
            for b in 0..r {
                vsv[a * r + b] = linalg::dot(&basis[a], &sigma_v[b]);
            }
        }
        let inv = linalg::inverse_spd(&vsv, r)?;
        for i in 0..n {
            let mut corr = 0.0;
            for a in 0..r {
                for b in 0..r {
                    corr += sigma_v[a][i] * inv[a * r + b] * sigma_v[b][i];
                }
            }
            var[i] -= corr;
        }
    }
    if var.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Domain("non-positive marginal variance while scaling".into()));
    }
    let s = (var.iter().map(|v| v.ln()).sum::<f64>() / n as f64).exp();
    Ok((q.scaled(s), s))
}

/// Predictor weights `(√((1−φ)/τ_b), √(φ/τ_b))` of the unit-scaled IID and
/// Besag blocks that make up a BYM field.
pub fn bym_component_weights(p: &BymParams) -> (f64, f64) {
    (((1.0 - p.phi) / p.tau_b).sqrt(), (p.phi / p.tau_b).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn path3() -> ArealGraph {
        ArealGraph::parse("3\n1 1 2\n2 2 1 3\n3 1 2\n").unwrap()
    }

    #[test]
    fn proper_besag_entries() {
        let q = besag_proper_precision(&path3(), &BesagProperParams { tau: 1.0, d: 1.0 }).unwrap();
        assert_eq!(q.diag(), vec![2.0, 3.0, 2.0]);
        assert_eq!(q.get(0, 1), -1.0);
        assert_eq!(q.get(1, 2), -1.0);
        assert_eq!(q.get(0, 2), 0.0);
        let two = ArealGraph::lattice(1, 2).unwrap();
        let q = besag_proper_precision(&two, &BesagProperParams { tau: 2.0, d: 0.5 }).unwrap();
        assert_eq!(q.to_dense(), vec![3.0, -2.0, -2.0, 3.0]);
    }

    #[test]
    fn proper_besag_rejects_bad_inputs() {
        let disc = ArealGraph::from_adjacency(vec![vec![1], vec![0], vec![3], vec![2]]).unwrap();
        let p = BesagProperParams { tau: 1.0, d: 1.0 };
        assert_eq!(besag_proper_precision(&disc, &p).unwrap_err(), Error::Disconnected(2));
        assert!(besag_proper_precision(&path3(), &BesagProperParams { tau: 0.0, d: 1.0 }).is_err());
        assert!(besag_proper_precision(&path3(), &BesagProperParams { tau: 1.0, d: -1.0 }).is_err());
    }

    #[test]
    fn gershgorin_margin() {
        let g = ArealGraph::lattice(4, 5).unwrap();
        let p = BesagProperParams { tau: 0.7, d: 0.3 };
        let q = besag_proper_precision(&g, &p).unwrap();
        let dense = q.to_dense();
        for i in 0..20 {
            let off: f64 = (0..20).filter(|&j| j != i).map(|j| dense[i * 20 + j].abs()).sum();
            assert!(dense[i * 20 + i] - off >= p.tau * p.d - 1e-12);
        }
    }

    #[test]
    fn iid() {
        assert_eq!(iid_precision(3, 1.0).unwrap().to_dense(), vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(iid_precision(2, 4.0).unwrap().diag(), vec![4.0, 4.0]);
        assert!(iid_precision(0, 1.0).is_err());
        assert!(iid_precision(2, 0.0).is_err());
    }

    #[test]
    fn rw1_structure_and_null_space() {
        let q = rw_precision(3, RwOrder::First, 1.0, 0.0).unwrap();
        assert_eq!(q.to_dense(), vec![1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        assert!(matches!(q.factorize(), Err(Error::NotPositiveDefinite { .. })));
        let q = rw_precision(3, RwOrder::First, 1.0, 1e-3).unwrap();
        assert!(q.factorize().is_ok());
        assert!(rw_precision(2, RwOrder::Second, 1.0, 1e-3).is_err());
    }

    #[test]
    fn rw2_penalty_annihilates_quadratics() {
        // Independent oracle: build the second-difference matrix D explicitly and form DᵀD.
        let n = 8;
        let mut d = vec![0.0; (n - 2) * n];
        for r in 0..n - 2 {
            d[r * n + r] = 1.0;
            d[r * n + r + 1] = -2.0;
            d[r * n + r + 2] = 1.0;
        }
        let q = rw_precision(n, RwOrder::Second, 1.0, 0.0).unwrap().to_dense();
        for i in 0..n {
            for j in 0..n {
                let dtd: f64 = (0..n - 2).map(|r| d[r * n + i] * d[r * n + j]).sum();
                assert!((q[i * n + j] - dtd).abs() < 1e-12);
            }
        }
        // R x for x_i = i^2: second differences are constant 2, so R x = Dᵀ(2·1)
        // which vanishes away from the two boundary rows at each end.
        let x: Vec<f64> = (0..n).map(|i| (i * i) as f64).collect();
        let rx = linalg::mat_vec(&q, n, &x);
        for i in 2..n - 2 {
            assert!(rx[i].abs() < 1e-10, "row {i}: {}", rx[i]);
        }
        // Linear sequences lie exactly in the null space.
        let lin: Vec<f64> = (0..n).map(|i| 3.0 * i as f64 - 1.0).collect();
        assert!(linalg::mat_vec(&q, n, &lin).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn scaling_examples() {
        let (q, s) = scale_to_unit_geometric_mean(&iid_precision(5, 1.0).unwrap(), 0).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(q.diag(), vec![1.0; 5]);
        let (q, s) = scale_to_unit_geometric_mean(&iid_precision(2, 4.0).unwrap(), 0).unwrap();
        assert!((s - 0.25).abs() < 1e-15);
        assert!((q.get(0, 0) - 1.0).abs() < 1e-15);
        // explicit 2x2 inverse of [[2,-1],[-1,2]] is (1/3)[[2,1],[1,2]]
        let two = ArealGraph::lattice(1, 2).unwrap();
        let p = besag_proper_precision(&two, &BesagProperParams { tau: 1.0, d: 1.0 }).unwrap();
        let (_, s) = scale_to_unit_geometric_mean(&p, 0).unwrap();
        assert!((s - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn scaling_is_idempotent() {
        let g = ArealGraph::lattice(5, 6).unwrap();
        let q = besag_structure(&g, 1e-3).unwrap();
        let (q1, s1) = scale_to_unit_geometric_mean(&q, 1).unwrap();
        assert!(s1 > 0.0 && (s1 - 1.0).abs() > 1e-3);
        let (_, s2) = scale_to_unit_geometric_mean(&q1, 1).unwrap();
        assert!((s2 - 1.0).abs() < 1e-10);
        let rw = rw_precision(12, RwOrder::Second, 1.0, 1e-3).unwrap();
        let (rw1, _) = scale_to_unit_geometric_mean(&rw, 2).unwrap();
        let (_, s) = scale_to_unit_geometric_mean(&rw1, 2).unwrap();
        assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn constrained_scaling_ignores_kappa() {
        let g = ArealGraph::lattice(3, 4).unwrap();
        let (_, a) = scale_to_unit_geometric_mean(&besag_structure(&g, 1e-3).unwrap(), 1).unwrap();
        let (_, b) = scale_to_unit_geometric_mean(&besag_structure(&g, 10.0).unwrap(), 1).unwrap();
        assert!((a - b).abs() < 1e-8 * a);
    }

    #[test]
    fn bym_weights() {
        assert_eq!(bym_component_weights(&BymParams { tau_b: 1.0, phi: 0.0 }), (1.0, 0.0));
        assert_eq!(bym_component_weights(&BymParams { tau_b: 1.0, phi: 1.0 }), (0.0, 1.0));
        let (a, b) = bym_component_weights(&BymParams { tau_b: 4.0, phi: 0.5 });
        assert!((a - 0.125f64.sqrt()).abs() < 1e-15 && (b - 0.125f64.sqrt()).abs() < 1e-15);
        assert!(BymParams::new(1.0, 1.5).is_err());
    }

    #[test]
    fn sample_covariance_two_node_besag() {
        let two = ArealGraph::lattice(1, 2).unwrap();
        let q = besag_proper_precision(&two, &BesagProperParams { tau: 1.0, d: 1.0 }).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let (mut s00, mut s01, mut s11) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = q.sample(&mut rng).unwrap();
            s00 += x[0] * x[0];
            s01 += x[0] * x[1];
            s11 += x[1] * x[1];
        }
        let n = n as f64;
        assert!((s00 / n / (2.0 / 3.0) - 1.0).abs() < 0.02);
        assert!((s11 / n / (2.0 / 3.0) - 1.0).abs() < 0.02);
        assert!((s01 / n / (1.0 / 3.0) - 1.0).abs() < 0.02);
    }

    #[test]
    fn iid_sample_variance() {
        let q = iid_precision(1, 4.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let v: f64 = (0..n).map(|_| q.sample(&mut rng).unwrap()[0].powi(2)).sum::<f64>() / n as f64;
        assert!((v / 0.25 - 1.0).abs() < 0.02);
    }
}
