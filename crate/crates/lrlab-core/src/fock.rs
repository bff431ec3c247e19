//! CAR algebra of a finite box in the occupation-number representation.
//!
//! Mode `i` of a context is bit `i` of the basis index. A basis vector is
//! `(a*_{c_0})^{n_0} ... (a*_{c_{N-1}})^{n_{N-1}} |0>`, so `a_{c_i}` carries the
//! sign `(-1)^{n_0 + ... + n_{i-1}}`.

use std::ops::{Add, Mul, Neg, Sub};

use faer::{c64, Mat};

use crate::lattice::Site;
use crate::linalg::{self, CMat};
use crate::{Error, Result};

/// Contexts with more modes are rejected outright.
pub const MAX_MODES: usize = 14;

const PARITY_TOL: f64 = 1e-12;
const GAUGE_GRID: usize = 29;

/// Sorted, duplicate-free list of sites fixing the mode order.
pub fn context(sites: &[Site]) -> Vec<Site> {
    let mut v = sites.to_vec();
    v.sort();
    v.dedup();
    v
}

pub fn union_context(a: &[Site], b: &[Site]) -> Vec<Site> {
    let mut v: Vec<Site> = a.iter().chain(b.iter()).cloned().collect();
    v.sort();
    v.dedup();
    v
}

fn mode_index(x: &Site, ctx: &[Site]) -> Result<usize> {
    ctx.binary_search(x).map_err(|_| Error::SiteNotInContext(x.to_string()))
}

fn check_context(ctx: &[Site]) -> Result<()> {
    if ctx.len() > MAX_MODES {
        return Err(Error::ResourceGuard(format!("{} modes exceed the limit of {MAX_MODES}", ctx.len())));
    }
    if ctx.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("context must be sorted without repeats".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParityTag {
    Even,
    Odd,
    Neither,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Parity {
    pub tag: ParityTag,
    pub gauge_invariant: bool,
}

#[derive(Clone, Debug)]
pub struct FockOperator {
    sites: Vec<Site>,
    support: Vec<Site>,
    matrix: CMat,
}

impl FockOperator {
    /// Wraps a matrix on `ctx`; the support defaults to the whole context.
    pub fn from_matrix(ctx: &[Site], matrix: CMat) -> Result<Self> {
        check_context(ctx)?;
        let dim = 1usize << ctx.len();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::InvalidParameter(format!("matrix must be {dim}x{dim}")));
        }
        Ok(FockOperator { sites: ctx.to_vec(), support: ctx.to_vec(), matrix })
    }

    pub fn with_support(mut self, support: &[Site]) -> Result<Self> {
        let s = context(support);
        for x in &s {
            mode_index(x, &self.sites)?;
        }
        self.support = s;
        Ok(self)
    }

    pub fn identity(ctx: &[Site]) -> Result<Self> {
        check_context(ctx)?;
        Ok(FockOperator { sites: ctx.to_vec(), support: Vec::new(), matrix: linalg::identity(1 << ctx.len()) })
    }

    pub fn zero(ctx: &[Site]) -> Result<Self> {
        check_context(ctx)?;
        let n = 1 << ctx.len();
        Ok(FockOperator { sites: ctx.to_vec(), support: Vec::new(), matrix: linalg::zeros(n, n) })
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn support(&self) -> &[Site] {
        &self.support
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        FockOperator { sites: self.sites.clone(), support: self.support.clone(), matrix: linalg::adjoint(&self.matrix) }
    }

    pub fn scale(&self, c: c64) -> Self {
        let m = Mat::from_fn(self.dim(), self.dim(), |i, j| self.matrix[(i, j)] * c);
        FockOperator { sites: self.sites.clone(), support: self.support.clone(), matrix: m }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(c64::new(c, 0.0))
    }

    pub fn spectral_norm(&self) -> f64 {
        linalg::spectral_norm(&self.matrix).expect("eigenvalue solver failed")
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.matrix)
    }

    pub fn is_zero(&self) -> bool {
        linalg::is_zero(&self.matrix)
    }

    /// ‖B − B*‖ in max-entry norm.
    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.matrix)
    }

    /// Max-entry distance after embedding both into the union context.
    pub fn max_abs_diff(&self, other: &FockOperator) -> f64 {
        let (a, b) = align(self, other);
        linalg::max_abs_diff(&a.matrix, &b.matrix)
    }

    /// Embeds into a context containing this operator's sites.
    ///
    /// With S the source modes and R the remaining ones,
    /// `<m|B|n> = ε(m) ε(n) B_{m_S n_S} δ_{m_R n_R}`, where `ε(n)` counts
    /// occupied R modes preceding occupied S modes.
    pub fn embed(&self, target: &[Site]) -> Result<FockOperator> {
        if target == self.sites.as_slice() {
            return Ok(self.clone());
        }
        check_context(target)?;
        let dim = 1usize << target.len();
        let mut out = linalg::zeros(dim, dim);
        self.accumulate_into(target, &mut out, c64::new(1.0, 0.0))?;
        Ok(FockOperator { sites: target.to_vec(), support: self.support.clone(), matrix: out })
    }

    /// Adds `c` times the embedding of this operator into `out`, a matrix on `target`.
    pub fn accumulate_into(&self, target: &[Site], out: &mut CMat, c: c64) -> Result<()> {
        let pos: Vec<usize> = self.sites.iter().map(|x| mode_index(x, target)).collect::<Result<_>>()?;
        let dim = 1usize << target.len();
        if out.nrows() != dim || out.ncols() != dim {
            return Err(Error::InvalidParameter("target matrix has the wrong dimension".into()));
        }
        let s_mask: usize = pos.iter().map(|&p| 1usize << p).sum();
        let dim_s = self.dim();
        let scatter: Vec<usize> =
            (0..dim_s).map(|mu| pos.iter().enumerate().filter(|(i, _)| mu >> i & 1 == 1).map(|(_, &p)| 1usize << p).sum()).collect();
        let sign = |n: usize| -> f64 {
            let r = n & !s_mask;
            let mut k = 0u32;
            for &p in &pos {
                if n >> p & 1 == 1 {
                    k += (r & ((1usize << p) - 1)).count_ones();
                }
            }
            if k.is_multiple_of(2) {
                1.0
            } else {
                -1.0
            }
        };
        let eps: Vec<f64> = (0..dim).map(sign).collect();
        let gather = |n: usize| -> usize { pos.iter().enumerate().map(|(i, &p)| (n >> p & 1) << i).sum() };
        let columns: Vec<Vec<(usize, c64)>> = (0..dim_s)
            .map(|nu| {
                (0..dim_s)
                    .filter_map(|mu| {
                        let v = self.matrix[(mu, nu)];
                        (v.re != 0.0 || v.im != 0.0).then_some((mu, v * c))
                    })
                    .collect()
            })
            .collect();
        for n in 0..dim {
            let nr = n & !s_mask;
            for &(mu, v) in &columns[gather(n)] {
                let m = nr | scatter[mu];
                out[(m, n)] += v * (eps[m] * eps[n]);
            }
        }
        Ok(())
    }

    /// χ_x(B) realized in `target`: every site y of the context moves to y+x.
    pub fn translate(&self, x: &Site, target: &[Site]) -> Result<FockOperator> {
        for y in self.support.iter().map(|y| y.add(x)) {
            if target.binary_search(&y).is_err() {
                return Err(Error::Geometry(format!("translated support site {y} escapes the target context")));
            }
        }
        // translation preserves the lexicographic order, so the matrix is unchanged
        let support: Vec<Site> = self.support.iter().map(|y| y.add(x)).collect();
        let restricted = self.restrict_to_support()?;
        let shifted_ctx: Vec<Site> = restricted.sites.iter().map(|y| y.add(x)).collect();
        FockOperator { sites: shifted_ctx, support, matrix: restricted.matrix }.embed(target)
    }

    /// Representation on the minimal context equal to the support.
    ///
    /// Valid when the operator acts as the identity outside its support,
    /// which holds for every operator built by this module.
    pub fn restrict_to_support(&self) -> Result<FockOperator> {
        if self.support == self.sites {
            return Ok(self.clone());
        }
        let pos: Vec<usize> = self.support.iter().map(|x| mode_index(x, &self.sites)).collect::<Result<_>>()?;
        let dim_s = 1usize << pos.len();
        let scatter = |mu: usize| -> usize { pos.iter().enumerate().map(|(i, &p)| (mu >> i & 1) << p).sum() };
        // rest modes empty: ε = 1 on these basis states
        let m = Mat::from_fn(dim_s, dim_s, |a, b| self.matrix[(scatter(a), scatter(b))]);
        let small = FockOperator { sites: self.support.clone(), support: self.support.clone(), matrix: m };
        let check = small.embed(&self.sites)?;
        if linalg::max_abs_diff(&check.matrix, &self.matrix) > 1e-12 * self.max_abs().max(1.0) {
            return Err(Error::Geometry("operator acts outside its declared support".into()));
        }
        Ok(small)
    }

    /// σ_θ(B) with σ_θ(a_x) = e^{-iθ} a_x.
    pub fn gauge_transform(&self, theta: f64) -> FockOperator {
        let n = self.dim();
        let m = Mat::from_fn(n, n, |i, j| {
            let q = i.count_ones() as f64 - j.count_ones() as f64;
            self.matrix[(i, j)] * c64::new((q * theta).cos(), (q * theta).sin())
        });
        FockOperator { sites: self.sites.clone(), support: self.support.clone(), matrix: m }
    }

    pub fn parity(&self) -> Parity {
        let scale = self.max_abs().max(1.0);
        let sp = self.gauge_transform(std::f64::consts::PI);
        let even = linalg::max_abs_diff(&sp.matrix, &self.matrix) <= PARITY_TOL * scale;
        let odd = {
            let n = self.dim();
            let mut d: f64 = 0.0;
            for j in 0..n {
                for i in 0..n {
                    d = d.max((sp.matrix[(i, j)] + self.matrix[(i, j)]).norm());
                }
            }
            d <= PARITY_TOL * scale
        };
        let tag = if even {
            ParityTag::Even
        } else if odd {
            ParityTag::Odd
        } else {
            ParityTag::Neither
        };
        let gauge_invariant = even
            && (1..GAUGE_GRID).all(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / GAUGE_GRID as f64;
                linalg::max_abs_diff(&self.gauge_transform(th).matrix, &self.matrix) <= PARITY_TOL * scale
            });
        Parity { tag, gauge_invariant }
    }

    pub fn is_even(&self) -> bool {
        self.parity().tag == ParityTag::Even
    }
}

/// Both operators re-expressed on their union context.
pub fn align(a: &FockOperator, b: &FockOperator) -> (FockOperator, FockOperator) {
    if a.sites == b.sites {
        return (a.clone(), b.clone());
    }
    let u = union_context(&a.sites, &b.sites);
    (a.embed(&u).expect("union context"), b.embed(&u).expect("union context"))
}

fn union_support(a: &FockOperator, b: &FockOperator) -> Vec<Site> {
    union_context(&a.support, &b.support)
}

impl Add for &FockOperator {
    type Output = FockOperator;
    fn add(self, rhs: &FockOperator) -> FockOperator {
        let (a, b) = align(self, rhs);
        let support = union_support(self, rhs);
        FockOperator { support, matrix: &a.matrix + &b.matrix, sites: a.sites }
    }
}

impl Sub for &FockOperator {
    type Output = FockOperator;
    fn sub(self, rhs: &FockOperator) -> FockOperator {
        let (a, b) = align(self, rhs);
        let support = union_support(self, rhs);
        FockOperator { support, matrix: &a.matrix - &b.matrix, sites: a.sites }
    }
}

impl Mul for &FockOperator {
    type Output = FockOperator;
    fn mul(self, rhs: &FockOperator) -> FockOperator {
        let (a, b) = align(self, rhs);
        let support = union_support(self, rhs);
        FockOperator { support, matrix: &a.matrix * &b.matrix, sites: a.sites }
    }
}

impl Neg for &FockOperator {
    type Output = FockOperator;
    fn neg(self) -> FockOperator {
        self.scale_real(-1.0)
    }
}

pub fn annihilation(x: &Site, ctx: &[Site]) -> Result<FockOperator> {
    check_context(ctx)?;
    let i = mode_index(x, ctx)?;
    let dim = 1usize << ctx.len();
    let bit = 1usize << i;
    let mut m = linalg::zeros(dim, dim);
    for n in 0..dim {
        if n & bit != 0 {
            let s = if (n & (bit - 1)).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
            m[(n ^ bit, n)] = c64::new(s, 0.0);
        }
    }
    Ok(FockOperator { sites: ctx.to_vec(), support: vec![x.clone()], matrix: m })
}

pub fn creation(x: &Site, ctx: &[Site]) -> Result<FockOperator> {
    Ok(annihilation(x, ctx)?.adjoint())
}

/// n_x = a*_x a_x.
pub fn number(x: &Site, ctx: &[Site]) -> Result<FockOperator> {
    number_operator(std::slice::from_ref(x), ctx)
}

/// N_Λ = Σ_{x∈Λ} n_x.
pub fn number_operator(region: &[Site], ctx: &[Site]) -> Result<FockOperator> {
    check_context(ctx)?;
    let mask: usize = region.iter().map(|x| mode_index(x, ctx).map(|i| 1usize << i)).collect::<Result<Vec<_>>>()?.into_iter().fold(0, |a, b| a | b);
    let dim = 1usize << ctx.len();
    let mut m = linalg::zeros(dim, dim);
    for n in 0..dim {
        m[(n, n)] = c64::new((n & mask).count_ones() as f64, 0.0);
    }
    Ok(FockOperator { sites: ctx.to_vec(), support: context(region), matrix: m })
}

/// a*_x a_y, built directly; for x ≠ y the sign is that of the modes strictly between.
pub fn hopping(x: &Site, y: &Site, ctx: &[Site]) -> Result<FockOperator> {
    check_context(ctx)?;
    let (i, j) = (mode_index(x, ctx)?, mode_index(y, ctx)?);
    if i == j {
        return number(x, ctx);
    }
    let dim = 1usize << ctx.len();
    let (bi, bj) = (1usize << i, 1usize << j);
    let (lo, hi) = (i.min(j), i.max(j));
    let between = ((1usize << hi) - 1) & !((1usize << (lo + 1)) - 1);
    let mut m = linalg::zeros(dim, dim);
    for n in 0..dim {
        if n & bj != 0 && n & bi == 0 {
            let s = if (n & between).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
            m[(n ^ bj ^ bi, n)] = c64::new(s, 0.0);
        }
    }
    Ok(FockOperator { sites: ctx.to_vec(), support: context(&[x.clone(), y.clone()]), matrix: m })
}

/// B1 B0 − B0 B1.
pub fn commutator(b1: &FockOperator, b0: &FockOperator) -> FockOperator {
    let (a, b) = align(b1, b0);
    let m = &(&a.matrix * &b.matrix) - &(&b.matrix * &a.matrix);
    FockOperator { support: union_support(b1, b0), matrix: m, sites: a.sites }
}

/// [B_k, [B_{k-1}, ..., [B_1, B_0]...]] for `ops = [B_k, ..., B_0]`.
pub fn multicommutator(ops: &[FockOperator]) -> Result<FockOperator> {
    if ops.len() < 2 {
        return Err(Error::InvalidParameter("multicommutator needs at least two operators".into()));
    }
    let mut acc = ops[ops.len() - 1].clone();
    for b in ops[..ops.len() - 1].iter().rev() {
        acc = commutator(b, &acc);
    }
    Ok(acc)
}

/// Basis-index particle-number difference classes present in the matrix.
pub fn charges(b: &FockOperator) -> Vec<i32> {
    let n = b.dim();
    let mut q = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let v = b.matrix[(i, j)];
            if v.re != 0.0 || v.im != 0.0 {
                q.push(i.count_ones() as i32 - j.count_ones() as i32);
            }
        }
    }
    q.sort_unstable();
    q.dedup();
    q
}
