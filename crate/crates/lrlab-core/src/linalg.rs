//! Dense complex linear algebra on Fock-space matrices.
//!
//! Matrices indexed by occupation-number basis states are partitioned by
//! particle number (popcount of the basis index). Number-conserving
//! Hamiltonians are diagonalized sector by sector, and zero blocks are
//! skipped in basis changes and norms.

use faer::{c64, Mat, Side};

use crate::{Error, Result};

pub type CMat = Mat<c64>;

pub fn zeros(n: usize, m: usize) -> CMat {
    Mat::zeros(n, m)
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) })
}

pub fn adjoint(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    a * b
}

pub fn max_abs(a: &CMat) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

pub fn frobenius(a: &CMat) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

pub fn is_zero(a: &CMat) -> bool {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, j)];
            if v.re != 0.0 || v.im != 0.0 {
                return false;
            }
        }
    }
    true
}

pub fn hermiticity_defect(a: &CMat) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..=j.min(a.nrows() - 1) {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

fn popcount_sectors(n: usize) -> Vec<Vec<usize>> {
    let mut by: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let c = i.count_ones() as usize;
        if by.len() <= c {
            by.resize(c + 1, Vec::new());
        }
        by[c].push(i);
    }
    by.into_iter().filter(|v| !v.is_empty()).collect()
}

fn gather(a: &CMat, rows: &[usize], cols: &[usize]) -> CMat {
    Mat::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

fn block_is_zero(a: &CMat, rows: &[usize], cols: &[usize]) -> bool {
    for &j in cols {
        for &i in rows {
            let v = a[(i, j)];
            if v.re != 0.0 || v.im != 0.0 {
                return false;
            }
        }
    }
    true
}

/// Partition of basis indices into particle-number sectors, or a single
/// sector when the matrix couples different particle numbers.
fn sectors_for(a: &CMat) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let secs = popcount_sectors(n);
    for (ia, ra) in secs.iter().enumerate() {
        for (ib, rb) in secs.iter().enumerate() {
            if ia != ib && !block_is_zero(a, ra, rb) {
                return vec![(0..n).collect()];
            }
        }
    }
    secs
}

#[derive(Clone, Debug)]
pub struct Sector {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub vectors: CMat,
    pub offset: usize,
}

/// Eigendecomposition H = Σ_sectors V diag(E) V* of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct Spectral {
    pub dim: usize,
    pub sectors: Vec<Sector>,
}

impl Spectral {
    pub fn new(h: &CMat) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n {
            return Err(Error::InvalidParameter("matrix must be square".into()));
        }
        let scale = max_abs(h).max(1.0);
        if hermiticity_defect(h) > 1e-12 * scale {
            return Err(Error::Hypothesis("generator is not self-adjoint".into()));
        }
        let mut sectors = Vec::new();
        let mut offset = 0;
        for idx in sectors_for(h) {
            let block = gather(h, &idx, &idx);
            let (values, vectors) = if is_zero(&block) {
                (vec![0.0; idx.len()], identity(idx.len()))
            } else {
                let evd = block
                    .self_adjoint_eigen(Side::Lower)
                    .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
                let s = evd.S();
                let values: Vec<f64> = (0..idx.len()).map(|i| s[i].re).collect();
                (values, evd.U().to_owned())
            };
            let len = idx.len();
            sectors.push(Sector { indices: idx, values, vectors, offset });
            offset += len;
        }
        Ok(Spectral { dim: n, sectors })
    }

    /// Eigenvalues in sector-major order, matching `to_eigenbasis`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.sectors.iter().flat_map(|s| s.values.iter().copied()).collect()
    }

    /// X = V* B V, indexed by eigenvector position.
    pub fn to_eigenbasis(&self, b: &CMat) -> CMat {
        let mut out = zeros(self.dim, self.dim);
        for sa in &self.sectors {
            for sb in &self.sectors {
                if block_is_zero(b, &sa.indices, &sb.indices) {
                    continue;
                }
                let blk = gather(b, &sa.indices, &sb.indices);
                let x = sa.vectors.adjoint() * &blk * &sb.vectors;
                for j in 0..sb.indices.len() {
                    for i in 0..sa.indices.len() {
                        out[(sa.offset + i, sb.offset + j)] = x[(i, j)];
                    }
                }
            }
        }
        out
    }

    /// B = V X V*, inverse of `to_eigenbasis`.
    pub fn from_eigenbasis(&self, x: &CMat) -> CMat {
        let mut out = zeros(self.dim, self.dim);
        for sa in &self.sectors {
            for sb in &self.sectors {
                let (ra, rb) = (sa.offset..sa.offset + sa.indices.len(), sb.offset..sb.offset + sb.indices.len());
                let blk = x.as_ref().submatrix(ra.start, rb.start, ra.len(), rb.len()).to_owned();
                if is_zero(&blk) {
                    continue;
                }
                let y = &sa.vectors * &blk * sb.vectors.adjoint();
                for j in 0..sb.indices.len() {
                    for i in 0..sa.indices.len() {
                        out[(sa.indices[i], sb.indices[j])] = y[(i, j)];
                    }
                }
            }
        }
        out
    }

    /// e^{itH} B e^{-itH}.
    pub fn evolve(&self, b: &CMat, t: f64) -> CMat {
        let x = self.to_eigenbasis(b);
        self.from_eigenbasis(&self.phase(&x, t))
    }

    /// Entrywise X_{mn} e^{it(E_m - E_n)} in the eigenbasis.
    pub fn phase(&self, x: &CMat, t: f64) -> CMat {
        let e = self.eigenvalues();
        let ph: Vec<c64> = e.iter().map(|&v| c64::new((t * v).cos(), (t * v).sin())).collect();
        Mat::from_fn(self.dim, self.dim, |i, j| {
            let v = x[(i, j)];
            if v.re == 0.0 && v.im == 0.0 {
                v
            } else {
                v * ph[i] * ph[j].conj()
            }
        })
    }

    /// e^{-itH}.
    pub fn propagator(&self, t: f64) -> CMat {
        let mut out = zeros(self.dim, self.dim);
        for s in &self.sectors {
            let n = s.indices.len();
            let scaled = Mat::from_fn(n, n, |i, j| {
                let v = s.values[j] * t;
                s.vectors[(i, j)] * c64::new(v.cos(), -v.sin())
            });
            let u = &scaled * s.vectors.adjoint();
            for j in 0..n {
                for i in 0..n {
                    out[(s.indices[i], s.indices[j])] = u[(i, j)];
                }
            }
        }
        out
    }
}

/// exp(-i h G) for Hermitian G; exactly the identity when G vanishes.
pub fn expm_hermitian(g: &CMat, h: f64) -> Result<CMat> {
    if is_zero(g) {
        return Ok(identity(g.nrows()));
    }
    Ok(Spectral::new(g)?.propagator(h))
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn max_eigenvalue_hermitian(a: &CMat) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for idx in sectors_for(a) {
        let block = gather(a, &idx, &idx);
        let ev = block
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Numerical(format!("eigenvalue computation failed: {e:?}")))?;
        for v in ev {
            best = best.max(v);
        }
    }
    Ok(best)
}

/// Operator norm (largest singular value).
///
/// Row and column particle-number sectors joined by a nonzero block form the
/// connected components of a bipartite graph; the matrix is block diagonal
/// over these components, so the norm is the largest component norm. Each
/// component norm comes from a Hermitian eigensolve of its Gram matrix.
pub fn spectral_norm(a: &CMat) -> Result<f64> {
    let (nr, nc) = (a.nrows(), a.ncols());
    if nr == 0 || nc == 0 {
        return Ok(0.0);
    }
    let rs = popcount_sectors(nr);
    let cs = popcount_sectors(nc);
    let nrs = rs.len();
    let mut parent: Vec<usize> = (0..nrs + cs.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut used = vec![false; nrs + cs.len()];
    for (i, r) in rs.iter().enumerate() {
        for (j, c) in cs.iter().enumerate() {
            if !block_is_zero(a, r, c) {
                let (x, y) = (find(&mut parent, i), find(&mut parent, nrs + j));
                parent[x] = y;
                used[i] = true;
                used[nrs + j] = true;
            }
        }
    }
    let mut best: f64 = 0.0;
    let mut roots: Vec<usize> = (0..parent.len()).filter(|&v| used[v]).map(|v| find(&mut parent, v)).collect();
    roots.sort_unstable();
    roots.dedup();
    for root in roots {
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        for (i, r) in rs.iter().enumerate() {
            if used[i] && find(&mut parent, i) == root {
                rows.extend_from_slice(r);
            }
        }
        for (j, c) in cs.iter().enumerate() {
            if used[nrs + j] && find(&mut parent, nrs + j) == root {
                cols.extend_from_slice(c);
            }
        }
        let blk = gather(a, &rows, &cols);
        let gram = if rows.len() <= cols.len() { &blk * blk.adjoint() } else { blk.adjoint() * &blk };
        let ev = gram
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Numerical(format!("eigenvalue computation failed: {e:?}")))?;
        let top = ev.into_iter().fold(0.0, f64::max);
        best = best.max(top.max(0.0).sqrt());
    }
    Ok(best)
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Composite Gauss–Legendre rule on [a, b].
pub fn composite_rule(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((lo + 0.5 * h * (xi + 1.0), 0.5 * h * wi));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(n, n, |_, _| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn hermitian(n: usize, seed: u64) -> CMat {
        let a = random(n, seed);
        Mat::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for p in 0..32 {
            let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(p)).sum();
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-13, "p = {p}");
        }
    }

    #[test]
    fn norm_matches_svd_oracle() {
        for seed in 0..5 {
            let a = random(16, seed);
            let sv = a.singular_values().unwrap();
            let oracle = sv.iter().cloned().fold(0.0, f64::max);
            assert!((spectral_norm(&a).unwrap() - oracle).abs() < 1e-9 * oracle);
        }
    }

    #[test]
    fn spectral_roundtrip_and_propagator() {
        let h = hermitian(8, 3);
        let sp = Spectral::new(&h).unwrap();
        let b = random(8, 4);
        let back = sp.from_eigenbasis(&sp.to_eigenbasis(&b));
        assert!(max_abs_diff(&back, &b) < 1e-12);
        let u = sp.propagator(0.7);
        let ud = adjoint(&u);
        let direct = &ud * &b * &u;
        assert!(max_abs_diff(&direct, &sp.evolve(&b, 0.7)) < 1e-12);
        assert!(max_abs_diff(&(&ud * &u), &identity(8)) < 1e-12);
    }

    #[test]
    fn rejects_non_hermitian() {
        assert!(Spectral::new(&random(4, 1)).is_err());
    }
}
