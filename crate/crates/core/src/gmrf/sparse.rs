//! Symmetric sparse precision matrices and their envelope Cholesky factor.

use alloc::boxed::Box;
use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;
use once_cell::race::OnceBox;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Fill-reducing permutation applied before factorisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ordering {
    #[default]
    Natural,
    /// Reverse Cuthill-McKee on the sparsity graph, with dense "hub" rows
    /// (intercepts and the like) moved to the end.
    ReverseCuthillMcKee,
}

/// Symmetric sparse matrix stored as sorted lower-triangular rows.
pub struct SparsePrecision {
    dim: usize,
    rows: Vec<Vec<(usize, f64)>>,
    ordering: Ordering,
    factor: OnceBox<Factorization>,
}

impl Clone for SparsePrecision {
    fn clone(&self) -> Self {
        SparsePrecision {
            dim: self.dim,
            rows: self.rows.clone(),
            ordering: self.ordering,
            factor: OnceBox::new(),
        }
    }
}

impl fmt::Debug for SparsePrecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SparsePrecision")
            .field("dim", &self.dim)
            .field("nnz_lower", &self.nnz_lower())
            .field("ordering", &self.ordering)
            .finish()
    }
}

impl SparsePrecision {
    /// Builds from `(i, j, value)` triplets. Entries above the diagonal are
    /// mirrored into the lower triangle; duplicates are summed. Supply each
    /// off-diagonal pair once.
    pub fn from_triplets(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("precision matrix of dimension 0".into()));
        }
        let mut lower: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, v) in triplets {
            if i >= dim || j >= dim {
                return Err(Error::InvalidDimension(alloc::format!(
                    "entry ({i}, {j}) outside dimension {dim}"
                )));
            }
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            lower.push((r, c, v));
        }
        lower.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
        for (r, c, v) in lower {
            let row = &mut rows[r];
            match row.last_mut() {
                Some(last) if last.0 == c => last.1 += v,
                _ => row.push((c, v)),
            }
        }
        Ok(SparsePrecision { dim, rows, ordering: Ordering::Natural, factor: OnceBox::new() })
    }

    pub fn from_dense(a: &[f64], dim: usize) -> Result<Self> {
        let trip = (0..dim).flat_map(|i| (0..=i).map(move |j| (i, j, a[i * dim + j]))).filter(|t| t.2 != 0.0);
        Self::from_triplets(dim, trip)
    }

    /// Block-diagonal concatenation.
    pub fn block_diag(blocks: &[&SparsePrecision]) -> Result<Self> {
        let dim: usize = blocks.iter().map(|b| b.dim).sum();
        let mut offset = 0;
        let mut trip = Vec::new();
        for b in blocks {
            trip.extend(b.lower_entries().map(|(i, j, v)| (i + offset, j + offset, v)));
            offset += b.dim;
        }
        Self::from_triplets(dim, trip)
    }

    pub fn with_ordering(mut self, ordering: Ordering) -> Self {
        self.ordering = ordering;
        self.factor = OnceBox::new();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz_lower(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Lower-triangular entries `(i, j, v)` with `j <= i`.
    pub fn lower_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(i, row)| row.iter().map(move |&(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.rows[r].binary_search_by_key(&c, |e| e.0).map_or(0.0, |k| self.rows[r][k].1)
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        SparsePrecision {
            dim: self.dim,
            rows: self.rows.iter().map(|r| r.iter().map(|&(j, v)| (j, v * s)).collect()).collect(),
            ordering: self.ordering,
            factor: OnceBox::new(),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                y[i] += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                s += if i == j { v * x[i] * x[i] } else { 2.0 * v * x[i] * x[j] };
            }
        }
        s
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim;
        let mut a = vec![0.0; n * n];
        for (i, j, v) in self.lower_entries() {
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
        a
    }

    /// Cached Cholesky factorisation. The cache is initialised at most once
    /// even under concurrent callers; failures are not cached.
    pub fn factorize(&self) -> Result<&Factorization> {
        self.factor.get_or_try_init(|| Factorization::new(self, self.ordering).map(Box::new))
    }

    pub fn log_det(&self) -> Result<f64> {
        Ok(self.factorize()?.log_det())
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.factorize()?.solve(b))
    }

    /// Draws from `N(0, Q⁻¹)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.factorize()?.sample(rng))
    }

    fn pattern_graph(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.dim];
        for (i, j, _) in self.lower_entries() {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        adj
    }
}

/// Permutation `new -> old` for the requested ordering.
fn permutation(q: &SparsePrecision, ordering: Ordering) -> Vec<usize> {
    let n = q.dim;
    match ordering {
        Ordering::Natural => (0..n).collect(),
        Ordering::ReverseCuthillMcKee => {
            let adj = q.pattern_graph();
            let hub_threshold = 8 + 2 * (libm::sqrt(n as f64) as usize);
            let is_hub: Vec<bool> = adj.iter().map(|a| a.len() > hub_threshold).collect();
            let degree = |i: usize| adj[i].iter().filter(|&&j| !is_hub[j]).count();
            let mut visited = is_hub.clone();
            let mut order = Vec::with_capacity(n);
            let mut queue = VecDeque::new();
            loop {
                let start = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| (degree(i), i));
                let Some(start) = start else { break };
                visited[start] = true;
                queue.push_back(start);
                while let Some(i) = queue.pop_front() {
                    order.push(i);
                    let mut next: Vec<usize> = adj[i].iter().copied().filter(|&j| !visited[j]).collect();
                    next.sort_by_key(|&j| (degree(j), j));
                    for j in next {
                        visited[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            order.reverse();
            order.extend((0..n).filter(|&i| is_hub[i]));
            order
        }
    }
}

/// Envelope (profile) Cholesky factor `P Q Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Factorization {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    first: Vec<usize>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl Factorization {
    pub fn new(q: &SparsePrecision, ordering: Ordering) -> Result<Self> {
        let n = q.dim;
        let perm = permutation(q, ordering);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut entries: Vec<(usize, usize, f64)> = q
            .lower_entries()
            .map(|(i, j, v)| {
                let (a, b) = (iperm[i], iperm[j]);
                if a >= b { (a, b, v) } else { (b, a, v) }
            })
            .collect();
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut first: Vec<usize> = (0..n).collect();
        for &(i, j, _) in &entries {
            first[i] = first[i].min(j);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            offsets.push(offsets[i] + (i - first[i] + 1));
        }
        let mut values = vec![0.0; offsets[n]];
        for &(i, j, v) in &entries {
            values[offsets[i] + (j - first[i])] += v;
        }

        for i in 0..n {
            let fi = first[i];
            let row_i = offsets[i];
            for j in fi..i {
                let fj = first[j];
                let row_j = offsets[j];
                let start = fi.max(fj);
                let mut s = values[row_i + (j - fi)];
                for k in start..j {
                    s -= values[row_i + (k - fi)] * values[row_j + (k - fj)];
                }
                values[row_i + (j - fi)] = s / values[row_j + (j - fj)];
            }
            let mut d = values[row_i + (i - fi)];
            for k in fi..i {
                let l = values[row_i + (k - fi)];
                d -= l * l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: perm[i] });
            }
            values[row_i + (i - fi)] = d.sqrt();
        }
        Ok(Factorization { n, perm, iperm, first, offsets, values })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn l(&self, i: usize, j: usize) -> f64 {
        self.values[self.offsets[i] + (j - self.first[i])]
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l(i, i).ln()).sum::<f64>()
    }

    /// In-place forward solve `L y = b` in permuted coordinates, starting at row `from`.
    fn forward(&self, y: &mut [f64], from: usize) {
        for i in from..self.n {
            let fi = self.first[i].max(from);
            let row = self.offsets[i] - self.first[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.values[row + k] * y[k];
            }
            y[i] = s / self.l(i, i);
        }
    }

    /// In-place backward solve `Lᵀ x = y` in permuted coordinates.
    fn backward(&self, x: &mut [f64]) {
        for i in (0..self.n).rev() {
            x[i] /= self.l(i, i);
            let xi = x[i];
            let fi = self.first[i];
            let row = self.offsets[i] - fi;
            for k in fi..i {
                x[k] -= self.values[row + k] * xi;
            }
        }
    }

    /// Solves `Q x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        self.forward(&mut y, 0);
        self.backward(&mut y);
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// `aᵀ Q⁻¹ a` for a sparse vector `a` given as `(index, value)` pairs.
    pub fn inverse_quadratic_form(&self, a: &[(usize, f64)]) -> f64 {
        if a.is_empty() {
            return 0.0;
        }
        let mut y = vec![0.0; self.n];
        let mut from = self.n;
        for &(i, v) in a {
            let p = self.iperm[i];
            y[p] += v;
            from = from.min(p);
        }
        self.forward(&mut y, from);
        y[from..].iter().map(|v| v * v).sum()
    }

    /// Diagonal of `Q⁻¹`.
    pub fn marginal_variances(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let mut y = vec![0.0; self.n];
        for p in 0..self.n {
            y[p..].iter_mut().for_each(|v| *v = 0.0);
            y[p] = 1.0;
            self.forward(&mut y, p);
            out[self.perm[p]] = y[p..].iter().map(|v| v * v).sum();
        }
        out
    }

    /// Dense `Q⁻¹`, row-major.
    pub fn inverse_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }

    /// Draws `x ~ N(0, Q⁻¹)` via `x = P̃ᵀ L⁻ᵀ z`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut z: Vec<f64> = (0..self.n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        self.backward(&mut z);
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = z[new];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    fn tridiag(n: usize) -> SparsePrecision {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0 + i as f64 * 0.1));
            if i + 1 < n {
                t.push((i + 1, i, -1.0));
            }
        }
        // a dense hub row
        for i in 0..n - 1 {
            t.push((n - 1, i, 0.05));
        }
        SparsePrecision::from_triplets(n, t).unwrap()
    }

    #[test]
    fn duplicates_sum_and_mirror() {
        let q = SparsePrecision::from_triplets(2, [(0, 1, -1.0), (1, 0, -0.5), (0, 0, 2.0), (1, 1, 2.0)]).unwrap();
        assert_eq!(q.get(0, 1), -1.5);
        assert_eq!(q.get(1, 0), -1.5);
    }

    #[test]
    fn log_det_of_diagonal() {
        let q = SparsePrecision::from_triplets(2, [(0, 0, 2.0), (1, 1, 8.0)]).unwrap();
        assert!((q.log_det().unwrap() - libm::log(16.0)).abs() < 1e-14);
        let eye = SparsePrecision::from_triplets(4, (0..4).map(|i| (i, i, 1.0))).unwrap();
        assert_eq!(eye.log_det().unwrap(), 0.0);
    }

    #[test]
    fn orderings_agree_with_dense() {
        let n = 40;
        for ord in [Ordering::Natural, Ordering::ReverseCuthillMcKee] {
            let q = tridiag(n).with_ordering(ord);
            let dense = q.to_dense();
            let f = q.factorize().unwrap();
            assert!((f.log_det() - linalg::log_det_spd(&dense, n).unwrap()).abs() < 1e-10);
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let x = f.solve(&b);
            let qx = q.mul_vec(&x);
            for i in 0..n {
                assert!((qx[i] - b[i]).abs() < 1e-12);
            }
            let inv = linalg::inverse_spd(&dense, n).unwrap();
            let var = f.marginal_variances();
            for i in 0..n {
                assert!((var[i] - inv[i * n + i]).abs() < 1e-12);
            }
            let a = [(3usize, 1.0), (n - 1, -2.0)];
            let expect = inv[3 * n + 3] + 4.0 * inv[(n - 1) * n + n - 1] - 4.0 * inv[3 * n + n - 1];
            assert!((f.inverse_quadratic_form(&a) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn rcm_moves_hub_last() {
        let q = tridiag(60);
        let perm = permutation(&q, Ordering::ReverseCuthillMcKee);
        assert_eq!(*perm.last().unwrap(), 59);
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..60).collect::<Vec<_>>());
    }

    #[test]
    fn indefinite_is_rejected() {
        let q = SparsePrecision::from_triplets(2, [(0, 0, 1.0), (1, 1, 1.0), (1, 0, 2.0)]).unwrap();
        assert!(matches!(q.factorize(), Err(Error::NotPositiveDefinite { .. })));
    }
}
