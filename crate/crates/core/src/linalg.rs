//! Banded and block-tridiagonal linear algebra.
//!
//! Every discretized operator in this crate couples a grid node only to its
//! two neighbours, with a small dense block per node when several components
//! are present. Two kernels cover all uses:
//!
//! * [`BandMatrix`] / [`BandLu`]: general banded LU with partial pivoting,
//!   used for Newton steps and inverse iteration.
//! * [`SymBlockTridiag`]: a symmetric-definite pencil `(K, B)` with dense
//!   symmetric diagonal blocks, diagonal off-diagonal blocks and a diagonal
//!   positive mass `B`. Eigenvalue counts come from the inertia of a block
//!   LDLᵀ factorization of `K - σB` (Sylvester's law), eigenvalues from
//!   bisection on that count, eigenvectors from inverse iteration.

use crate::error::{Error, Result};

/// Square banded matrix stored row-wise with room for LU fill-in.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku {
            return 0.0;
        }
        self.data[self.idx(i, j)]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i},{j}) outside band"
        );
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            *yi = (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum();
        }
        y
    }

    /// LU factorization with partial pivoting. With `perturb_singular` an exact
    /// zero pivot is replaced by a tiny value (inverse iteration at an exact
    /// eigenvalue), otherwise it is reported as [`Error::Singular`].
    pub fn factor(mut self, perturb_singular: bool) -> Result<BandLu> {
        let n = self.n;
        let scale = self
            .data
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let tiny = f64::EPSILON * scale;
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            let jmax = (k + self.kl + self.ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let d = self.idx(k, k);
            if self.data[d] == 0.0 || !self.data[d].is_finite() {
                if perturb_singular && self.data[d] == 0.0 {
                    self.data[d] = tiny;
                } else {
                    return Err(Error::Singular);
                }
            }
            let pivot = self.data[d];
            for i in k + 1..=last {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l != 0.0 {
                    for j in k + 1..=jmax {
                        let kj = self.data[self.idx(k, j)];
                        let ij = self.idx(i, j);
                        self.data[ij] -= l * kj;
                    }
                }
            }
        }
        Ok(BandLu { m: self, piv })
    }
}

/// Factorized band matrix.
#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.m.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                let last = (k + self.m.kl).min(n - 1);
                for i in k + 1..=last {
                    b[i] -= self.m.data[self.m.idx(i, k)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let jmax = (k + self.m.kl + self.m.ku).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=jmax {
                s -= self.m.data[self.m.idx(k, j)] * b[j];
            }
            b[k] = s / self.m.data[self.m.idx(k, k)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Eigen-decomposition of a small dense symmetric matrix (cyclic Jacobi).
/// `a` is row-major `b×b` and is destroyed; eigenvalues land in `vals`,
/// eigenvectors in the columns of `vecs`.
pub(crate) fn small_sym_eigen(a: &mut [f64], b: usize, vals: &mut [f64], vecs: &mut [f64]) {
    for i in 0..b {
        for j in 0..b {
            vecs[i * b + j] = if i == j { 1.0 } else { 0.0 };
        }
    }
    if b == 1 {
        vals[0] = a[0];
        return;
    }
    for _sweep in 0..60 {
        let mut off = 0.0;
        let mut diag = 0.0;
        for p in 0..b {
            diag += a[p * b + p] * a[p * b + p];
            for q in p + 1..b {
                off += a[p * b + q] * a[p * b + q];
            }
        }
        if off <= 1e-34 * diag || off == 0.0 {
            break;
        }
        for p in 0..b {
            for q in p + 1..b {
                let apq = a[p * b + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * b + p];
                let aqq = a[q * b + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..b {
                    let akp = a[k * b + p];
                    let akq = a[k * b + q];
                    a[k * b + p] = c * akp - s * akq;
                    a[k * b + q] = s * akp + c * akq;
                }
                for k in 0..b {
                    let apk = a[p * b + k];
                    let aqk = a[q * b + k];
                    a[p * b + k] = c * apk - s * aqk;
                    a[q * b + k] = s * apk + c * aqk;
                }
                for k in 0..b {
                    let vkp = vecs[k * b + p];
                    let vkq = vecs[k * b + q];
                    vecs[k * b + p] = c * vkp - s * vkq;
                    vecs[k * b + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    for i in 0..b {
        vals[i] = a[i * b + i];
    }
}

/// Symmetric block-tridiagonal pencil `(K, B)`.
///
/// Unknowns are interleaved: entry `(node i, component p)` sits at index
/// `i * block + p`.
#[derive(Debug, Clone)]
pub struct SymBlockTridiag {
    pub block: usize,
    pub nodes: usize,
    /// `nodes` dense symmetric `block×block` diagonal blocks, row-major.
    pub diag: Vec<f64>,
    /// `(nodes-1)*block` entries: the coupling between node `i` and `i+1` is
    /// `diag(off[i*block..(i+1)*block])`.
    pub off: Vec<f64>,
    /// Diagonal of `B`, strictly positive.
    pub mass: Vec<f64>,
}

/// Eigenvalues below zero / near zero of a pencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
}

impl SymBlockTridiag {
    pub fn new(block: usize, nodes: usize) -> Self {
        Self {
            block,
            nodes,
            diag: vec![0.0; nodes * block * block],
            off: vec![0.0; nodes.saturating_sub(1) * block],
            mass: vec![1.0; nodes * block],
        }
    }

    pub fn dim(&self) -> usize {
        self.block * self.nodes
    }

    /// `K x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let b = self.block;
        let mut y = vec![0.0; self.dim()];
        for i in 0..self.nodes {
            let d = &self.diag[i * b * b..(i + 1) * b * b];
            for p in 0..b {
                let mut s = 0.0;
                for q in 0..b {
                    s += d[p * b + q] * x[i * b + q];
                }
                if i > 0 {
                    s += self.off[(i - 1) * b + p] * x[(i - 1) * b + p];
                }
                if i + 1 < self.nodes {
                    s += self.off[i * b + p] * x[(i + 1) * b + p];
                }
                y[i * b + p] = s;
            }
        }
        y
    }

    /// `x^T B y`.
    pub fn mass_dot(&self, x: &[f64], y: &[f64]) -> f64 {
        self.mass
            .iter()
            .zip(x)
            .zip(y)
            .map(|((m, a), b)| m * a * b)
            .sum()
    }

    /// Number of eigenvalues of `K v = σ B v` strictly below `sigma`
    /// (a numerically zero pivot counts as negative).
    pub fn count_below(&self, sigma: f64) -> usize {
        let b = self.block;
        let bb = b * b;
        let scale = self.scale();
        let pivmin = f64::EPSILON * f64::EPSILON * scale.max(1.0);
        if b == 1 {
            let mut count = 0;
            let mut d_prev = 1.0;
            for i in 0..self.nodes {
                let mut d = self.diag[i] - sigma * self.mass[i];
                if i > 0 {
                    let o = self.off[i - 1];
                    d -= o * o / d_prev;
                }
                if d.abs() < pivmin {
                    d = -pivmin;
                }
                if d < 0.0 {
                    count += 1;
                }
                d_prev = d;
            }
            return count;
        }
        let mut dinv = vec![0.0; bb];
        let mut work = vec![0.0; bb];
        let mut vals = vec![0.0; b];
        let mut vecs = vec![0.0; bb];
        let mut count = 0;
        for i in 0..self.nodes {
            work.copy_from_slice(&self.diag[i * bb..(i + 1) * bb]);
            for p in 0..b {
                work[p * b + p] -= sigma * self.mass[i * b + p];
            }
            if i > 0 {
                let o = &self.off[(i - 1) * b..i * b];
                for p in 0..b {
                    for q in 0..b {
                        work[p * b + q] -= o[p] * dinv[p * b + q] * o[q];
                    }
                }
            }
            small_sym_eigen(&mut work, b, &mut vals, &mut vecs);
            for v in vals.iter_mut() {
                if v.abs() < pivmin {
                    *v = -pivmin;
                }
                if *v < 0.0 {
                    count += 1;
                }
            }
            for p in 0..b {
                for q in 0..b {
                    let mut s = 0.0;
                    for r in 0..b {
                        s += vecs[p * b + r] * vecs[q * b + r] / vals[r];
                    }
                    dinv[p * b + q] = s;
                }
            }
        }
        count
    }

    /// Negative count and near-zero count relative to `zero_tol`.
    pub fn inertia(&self, zero_tol: f64) -> Inertia {
        let neg = self.count_below(-zero_tol);
        let below = self.count_below(zero_tol);
        Inertia {
            negative: neg,
            zero: below.saturating_sub(neg),
        }
    }

    fn scale(&self) -> f64 {
        let d = self.diag.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let o = self.off.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        d.max(o)
    }

    /// Gershgorin enclosure of the spectrum of `B^{-1/2} K B^{-1/2}`.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let b = self.block;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.nodes {
            for p in 0..b {
                let mp = self.mass[i * b + p];
                let center = self.diag[i * b * b + p * b + p] / mp;
                let mut radius = 0.0;
                for q in 0..b {
                    if q != p {
                        radius += self.diag[i * b * b + p * b + q].abs()
                            / (mp * self.mass[i * b + q]).sqrt();
                    }
                }
                if i > 0 {
                    radius +=
                        self.off[(i - 1) * b + p].abs() / (mp * self.mass[(i - 1) * b + p]).sqrt();
                }
                if i + 1 < self.nodes {
                    radius += self.off[i * b + p].abs() / (mp * self.mass[(i + 1) * b + p]).sqrt();
                }
                lo = lo.min(center - radius);
                hi = hi.max(center + radius);
            }
        }
        let pad = 1e-10 * (hi - lo).abs().max(1.0);
        (lo - pad, hi + pad)
    }

    /// The `k` smallest eigenvalues by Sturm bisection, each to absolute
    /// accuracy `tol` (plus a few ulps of the bracket magnitude).
    pub fn lowest_eigenvalues(&self, k: usize, tol: f64) -> Vec<f64> {
        let k = k.min(self.dim());
        let (lo, hi) = self.spectral_bounds();
        // (point, count below point), kept for bracket reuse.
        let mut probes: Vec<(f64, usize)> = vec![(lo, 0), (hi, self.dim())];
        let mut out = Vec::with_capacity(k);
        for j in 0..k {
            let mut a = probes
                .iter()
                .filter(|(_, c)| *c <= j)
                .map(|(x, _)| *x)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut b = probes
                .iter()
                .filter(|(_, c)| *c > j)
                .map(|(x, _)| *x)
                .fold(f64::INFINITY, f64::min);
            for _ in 0..200 {
                if b - a <= tol + 4.0 * f64::EPSILON * a.abs().max(b.abs()) {
                    break;
                }
                let mid = 0.5 * (a + b);
                let c = self.count_below(mid);
                probes.push((mid, c));
                if c > j {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            out.push(0.5 * (a + b));
        }
        out
    }

    /// Banded matrix of `K - σB`.
    pub fn shifted_band(&self, sigma: f64) -> BandMatrix {
        let b = self.block;
        let mut m = BandMatrix::zeros(self.dim(), b, b);
        for i in 0..self.nodes {
            for p in 0..b {
                for q in 0..b {
                    m.add(i * b + p, i * b + q, self.diag[i * b * b + p * b + q]);
                }
                m.add(i * b + p, i * b + p, -sigma * self.mass[i * b + p]);
                if i + 1 < self.nodes {
                    let o = self.off[i * b + p];
                    m.add(i * b + p, (i + 1) * b + p, o);
                    m.add((i + 1) * b + p, i * b + p, o);
                }
            }
        }
        m
    }

    /// `B`-orthonormal eigenvectors for a cluster of eigenvalues near
    /// `sigma`, by subspace inverse iteration. `exclude` holds previously
    /// computed (B-orthonormal) vectors to deflate against.
    pub fn cluster_eigenvectors(
        &self,
        sigma: f64,
        count: usize,
        exclude: &[Vec<f64>],
    ) -> Result<Vec<Vec<f64>>> {
        let n = self.dim();
        let shift = sigma + 1e-12 * sigma.abs().max(1.0);
        let lu = self.shifted_band(shift).factor(true)?;
        let mut basis: Vec<Vec<f64>> = (0..count)
            .map(|c| {
                (0..n)
                    .map(|i| {
                        let t = (i as f64 + 1.0) * (0.7548776662466927 + 0.13 * c as f64);
                        (t.fract() - 0.5) + 0.05 * ((c + 1) as f64 * 0.618 * i as f64).sin()
                    })
                    .collect()
            })
            .collect();
        for _ in 0..6 {
            for v in basis.iter_mut() {
                let rhs: Vec<f64> = v.iter().zip(&self.mass).map(|(a, m)| a * m).collect();
                *v = lu.solve(&rhs);
            }
            self.orthonormalize(&mut basis, exclude)?;
        }
        Ok(basis)
    }

    /// Modified Gram-Schmidt in the `B` inner product (two passes).
    pub fn orthonormalize(&self, basis: &mut [Vec<f64>], exclude: &[Vec<f64>]) -> Result<()> {
        for idx in 0..basis.len() {
            for _pass in 0..2 {
                for e in exclude {
                    let c = self.mass_dot(&basis[idx], e);
                    basis[idx].iter_mut().zip(e).for_each(|(a, b)| *a -= c * b);
                }
                for prev in 0..idx {
                    let (head, tail) = basis.split_at_mut(idx);
                    let c = self.mass_dot(&tail[0], &head[prev]);
                    tail[0]
                        .iter_mut()
                        .zip(&head[prev])
                        .for_each(|(a, b)| *a -= c * b);
                }
            }
            let nrm = self.mass_dot(&basis[idx], &basis[idx]).sqrt();
            if !(nrm > 0.0) || !nrm.is_finite() {
                return Err(Error::EigensolverFailure(
                    "inverse iteration collapsed".into(),
                ));
            }
            basis[idx].iter_mut().for_each(|a| *a /= nrm);
        }
        Ok(())
    }
}

/// Groups sorted values into clusters whose consecutive members differ by at
/// most `rel_tol * max(1, |value|)`. Returns index ranges.
pub fn cluster_sorted(values: &[f64], rel_tol: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        let split = i == values.len()
            || (values[i] - values[i - 1]).abs() > rel_tol * values[i - 1].abs().max(1.0);
        if split {
            out.push(start..i);
            start = i;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn to_dense(p: &SymBlockTridiag) -> (DMatrix<f64>, Vec<f64>) {
        let n = p.dim();
        let band = p.shifted_band(0.0);
        let k = DMatrix::from_fn(n, n, |i, j| band.get(i, j));
        (k, p.mass.clone())
    }

    fn sample_pencil(block: usize, nodes: usize) -> SymBlockTridiag {
        let mut p = SymBlockTridiag::new(block, nodes);
        let mut seed = 12345u64;
        let mut rnd = move || {
            seed = seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for i in 0..nodes {
            for a in 0..block {
                for c in a..block {
                    let v = rnd() + if a == c { 2.0 } else { 0.0 };
                    p.diag[i * block * block + a * block + c] = v;
                    p.diag[i * block * block + c * block + a] = v;
                }
                p.mass[i * block + a] = 0.5 + rnd().abs();
            }
        }
        for o in p.off.iter_mut() {
            *o = rnd();
        }
        p
    }

    #[test]
    fn band_lu_solves_pivoting_case() {
        let mut m = BandMatrix::zeros(4, 1, 1);
        // zero leading pivot forces a row swap
        let entries = [
            (0, 0, 0.0),
            (0, 1, 1.0),
            (1, 0, 2.0),
            (1, 1, 1.0),
            (1, 2, 3.0),
            (2, 1, 1.0),
            (2, 2, -1.0),
            (2, 3, 1.0),
            (3, 2, 4.0),
            (3, 3, 1.0),
        ];
        for (i, j, v) in entries {
            m.add(i, j, v);
        }
        let x = [1.0, -2.0, 0.5, 3.0];
        let b = m.matvec(&x);
        let sol = m.factor(false).unwrap().solve(&b);
        for (a, e) in sol.iter().zip(&x) {
            assert!((a - e).abs() < 1e-13, "{a} vs {e}");
        }
    }

    #[test]
    fn jacobi_small_matches_nalgebra() {
        let a = [4.0, 1.0, -2.0, 1.0, 3.0, 0.5, -2.0, 0.5, -1.0];
        let mut w = a;
        let mut vals = [0.0; 3];
        let mut vecs = [0.0; 9];
        small_sym_eigen(&mut w, 3, &mut vals, &mut vecs);
        let mut got = vals.to_vec();
        got.sort_by(f64::total_cmp);
        let reference = SymmetricEigen::new(DMatrix::from_row_slice(3, 3, &a));
        let mut expect: Vec<f64> = reference.eigenvalues.iter().copied().collect();
        expect.sort_by(f64::total_cmp);
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-13);
        }
    }

    #[test]
    fn sturm_count_matches_dense_generalized_spectrum() {
        for block in 1..=3 {
            let p = sample_pencil(block, 12);
            let (k, mass) = to_dense(&p);
            let n = p.dim();
            let s = DMatrix::from_fn(n, n, |i, j| k[(i, j)] / (mass[i] * mass[j]).sqrt());
            let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            for probe in [-3.0, -0.7, 0.0, 0.4, 1.3, 2.9, 5.0] {
                let expect = ev.iter().filter(|&&e| e < probe).count();
                assert_eq!(p.count_below(probe), expect, "block {block} probe {probe}");
            }
            let low = p.lowest_eigenvalues(5, 1e-13);
            for (a, b) in low.iter().zip(&ev) {
                assert!((a - b).abs() < 1e-11, "{a} vs {b}");
            }
            let vecs = p.cluster_eigenvectors(ev[0], 1, &[]).unwrap();
            let kv = p.apply(&vecs[0]);
            let res: f64 = kv
                .iter()
                .zip(&vecs[0])
                .zip(&p.mass)
                .map(|((a, v), m)| (a - ev[0] * m * v).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(res < 1e-9, "residual {res}");
        }
    }

    #[test]
    fn clustering_groups_close_values() {
        let v = [1.0, 2.0, 2.0 + 1e-9, 5.0];
        let c = cluster_sorted(&v, 1e-7);
        assert_eq!(c, vec![0..1, 1..3, 3..4]);
    }
}
