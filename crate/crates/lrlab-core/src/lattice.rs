//! Geometry of Z^d, cubic boxes and decay functions.
//!
//! Every infinite lattice sum is returned as a certified upper bound: an exact
//! truncated sum plus a closed-form majorant of the neglected tail.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default truncation radius for lattice sums.
pub const DEFAULT_RADIUS: u32 = 64;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site(pub Vec<i64>);

impl Site {
    pub fn new(coords: Vec<i64>) -> Self {
        Site(coords)
    }

    pub fn origin(d: usize) -> Self {
        Site(vec![0; d])
    }

    /// Unit vector along axis `q` (0-based).
    pub fn unit(d: usize, q: usize) -> Self {
        let mut c = vec![0; d];
        c[q] = 1;
        Site(c)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn add(&self, other: &Site) -> Site {
        Site(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Site) -> Site {
        Site(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn max_norm(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn norm(&self) -> f64 {
        (self.0.iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt()
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Euclidean distance |x - y|.
pub fn dist(x: &Site, y: &Site) -> f64 {
    x.0.iter()
        .zip(&y.0)
        .map(|(a, b)| ((a - b) * (a - b)) as f64)
        .sum::<f64>()
        .sqrt()
}

/// Max-norm distance |x - y|_inf.
pub fn dist_inf(x: &Site, y: &Site) -> i64 {
    x.0.iter().zip(&y.0).map(|(a, b)| (a - b).abs()).max().unwrap_or(0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Box {
    pub radius: u32,
    pub d: usize,
}

impl Box {
    pub fn new(radius: u32, d: usize) -> Self {
        Box { radius, d }
    }

    pub fn len(&self) -> usize {
        box_size(self.radius, self.d)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sites(&self) -> Vec<Site> {
        box_sites(self.radius, self.d)
    }

    pub fn contains(&self, x: &Site) -> bool {
        x.max_norm() <= self.radius as i64
    }
}

/// All sites with max-norm at most `l`, in lexicographic order.
pub fn box_sites(l: u32, d: usize) -> Vec<Site> {
    translated_box(l, &Site::origin(d))
}

/// Sites of Λ_l + x in lexicographic order.
pub fn translated_box(l: u32, x: &Site) -> Vec<Site> {
    let d = x.dim();
    let l = l as i64;
    let mut out = Vec::with_capacity(box_size(l as u32, d));
    let mut cur: Vec<i64> = vec![-l; d];
    if d == 0 {
        return out;
    }
    loop {
        out.push(Site(cur.iter().zip(&x.0).map(|(c, o)| c + o).collect()));
        let mut i = d;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < l {
                cur[i] += 1;
                for c in cur.iter_mut().skip(i + 1) {
                    *c = -l;
                }
                break;
            }
        }
    }
}

pub fn box_size(l: u32, d: usize) -> usize {
    (2 * l as usize + 1).pow(d as u32)
}

/// |Λ_n \ Λ_{n-1}|, with the convention Λ_{-1} = ∅.
pub fn shell_size(n: u32, d: usize) -> usize {
    if n == 0 {
        1
    } else {
        box_size(n, d) - box_size(n - 1, d)
    }
}

/// Sites with max-norm exactly `n`, lexicographic.
pub fn shell_sites(n: u32, d: usize) -> Vec<Site> {
    box_sites(n, d)
        .into_iter()
        .filter(|s| s.max_norm() == n as i64)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayKind {
    Polynomial,
    ExponentialPolynomial,
}

/// F(r) = e^{-2ςr} (1+r)^{-(d+ε)}, with ς = 0 for the polynomial kind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFunction {
    pub kind: DecayKind,
    pub d: usize,
    pub epsilon: f64,
    #[serde(default)]
    pub sigma: f64,
}

impl DecayFunction {
    pub fn new(kind: DecayKind, d: usize, epsilon: f64, sigma: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        match kind {
            DecayKind::Polynomial if sigma != 0.0 => {
                return Err(Error::InvalidParameter("polynomial decay carries sigma = 0".into()))
            }
            DecayKind::ExponentialPolynomial if !(sigma > 0.0 && sigma.is_finite()) => {
                return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")))
            }
            _ => {}
        }
        Ok(DecayFunction { kind, d, epsilon, sigma })
    }

    pub fn polynomial(d: usize, epsilon: f64) -> Result<Self> {
        Self::new(DecayKind::Polynomial, d, epsilon, 0.0)
    }

    pub fn exponential(d: usize, epsilon: f64, sigma: f64) -> Result<Self> {
        Self::new(DecayKind::ExponentialPolynomial, d, epsilon, sigma)
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.kind, self.d, self.epsilon, self.sigma).map(|_| ())
    }

    pub fn value(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::InvalidParameter(format!("distance must be nonnegative, got {r}")));
        }
        Ok(self.eval(r))
    }

    /// Unchecked evaluation for r ≥ 0.
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        let poly = (1.0 + r).powf(-(self.d as f64 + self.epsilon));
        match self.kind {
            DecayKind::Polynomial => poly,
            DecayKind::ExponentialPolynomial => (-2.0 * self.sigma * r).exp() * poly,
        }
    }

    /// Rate ς entering the polynomial and exponential decay sequences.
    /// The polynomial kind uses ς = ε/2, which keeps u_{·,m} summable.
    pub fn decay_rate(&self) -> f64 {
        match self.kind {
            DecayKind::Polynomial => 0.5 * self.epsilon,
            DecayKind::ExponentialPolynomial => self.sigma,
        }
    }

    /// Majorant of Σ_{|x|_inf > radius} F(|x|).
    pub fn tail_majorant(&self, radius: u32) -> f64 {
        let d = self.d as f64;
        let r = radius as f64;
        d * 2f64.powi(self.d as i32) * (-2.0 * self.sigma * (r + 1.0)).exp() * (1.0 + r).powf(-self.epsilon)
            / self.epsilon
    }

    /// Exact Σ_{|x|_inf ≤ radius} F(|x|).
    pub fn box_sum(&self, radius: u32) -> f64 {
        let d = self.d;
        let r = radius as i64;
        let mut cur = vec![0i64; d];
        let mut total = 0.0;
        loop {
            let nz = cur.iter().filter(|&&c| c != 0).count();
            let sq: f64 = cur.iter().map(|&c| (c * c) as f64).sum();
            total += (1u64 << nz) as f64 * self.eval(sq.sqrt());
            let mut i = d;
            loop {
                if i == 0 {
                    return total;
                }
                i -= 1;
                if cur[i] < r {
                    cur[i] += 1;
                    for c in cur.iter_mut().skip(i + 1) {
                        *c = 0;
                    }
                    break;
                }
            }
        }
    }

    /// Certified upper bound on ‖F‖_{1} = Σ_{x∈Z^d} F(|x|).
    pub fn f_norm_bound(&self) -> f64 {
        self.f_norm_bound_with(DEFAULT_RADIUS)
    }

    pub fn f_norm_bound_with(&self, radius: u32) -> f64 {
        self.box_sum(radius) + self.tail_majorant(radius)
    }

    /// Certified upper bound on the convolution constant D, 2^{d+1+ε}‖F‖_1.
    /// The exponential kind reuses the bound of its polynomial factor.
    pub fn convolution_constant_bound(&self) -> f64 {
        let poly = DecayFunction { kind: DecayKind::Polynomial, d: self.d, epsilon: self.epsilon, sigma: 0.0 };
        2f64.powf(self.d as f64 + 1.0 + self.epsilon) * poly.f_norm_bound()
    }

    /// |Λ_n \ Λ_{n-1}| Σ_{z∈Λ_m} max_{y∈Λ_n\Λ_{n-1}} F(|z-y|), exact for n > m.
    ///
    /// The closest shell point to z lies at Euclidean distance n - |z|_inf.
    pub fn shell_max_sum(&self, m: u32, n: u32) -> f64 {
        assert!(n > m);
        let inner: f64 = (0..=m)
            .map(|j| shell_size(j, self.d) as f64 * self.eval((n - j) as f64))
            .sum();
        shell_size(n, self.d) as f64 * inner
    }

    /// Σ_{z∈Λ_m} Σ_{y∈Λ_n\Λ_{n-1}} F(|z-y|), by enumeration.
    pub fn shell_pair_sum(&self, m: u32, n: u32) -> f64 {
        let inner = box_sites(m, self.d);
        let shell = shell_sites(n, self.d);
        let mut total = 0.0;
        for y in &shell {
            for z in &inner {
                total += self.eval(dist(y, z));
            }
        }
        total
    }

    /// Majorant of Σ_{n > big_n} Σ_{z∈Λ_m} Σ_{y∈Λ_n\Λ_{n-1}} F(|z-y|).
    pub fn shell_pair_tail(&self, m: u32, big_n: u32) -> f64 {
        assert!(big_n >= m);
        let d = self.d as f64;
        let (mf, nf) = (m as f64, big_n as f64);
        box_size(m, self.d) as f64
            * d
            * 2f64.powi(self.d as i32)
            * (1.0 + mf).powf(d + self.epsilon)
            * (-2.0 * self.sigma * (nf + 1.0 - mf)).exp()
            * (1.0 + nf).powf(-self.epsilon)
            / self.epsilon
    }

    /// Decay sequence for the box radius m, computed exactly for m < n ≤ n_max
    /// and closed by a certified tail.
    pub fn decay_sequences(&self, m: u32, n_max: u32) -> Result<DecaySequence> {
        if n_max <= m {
            return Err(Error::InvalidParameter(format!("n_max = {n_max} must exceed m = {m}")));
        }
        let rate = self.decay_rate();
        let d = self.d as f64;
        let mf = m as f64;
        let shell: Vec<f64> = ((m + 1)..=n_max).map(|n| self.shell_max_sum(m, n)).collect();
        let lam = box_size(m, self.d) as f64;
        let envelope = d * 2f64.powi(self.d as i32) * lam * (1.0 + mf).powf(d + self.epsilon);
        let nm = n_max as f64;
        match self.kind {
            DecayKind::Polynomial => {
                let u: Vec<f64> = shell
                    .iter()
                    .zip((m + 1)..=n_max)
                    .map(|(s, n)| s * (1.0 + n as f64).powf(rate))
                    .collect();
                let tail = envelope * (1.0 + nm).powf(-(self.epsilon - rate)) / (self.epsilon - rate);
                let l1 = u.iter().sum::<f64>() + tail;
                Ok(DecaySequence { m, n_max, rate, shell, payload: SequencePayload::Polynomial { u, tail, l1 } })
            }
            DecayKind::ExponentialPolynomial => {
                let head = shell
                    .iter()
                    .zip((m + 1)..=n_max)
                    .map(|(s, n)| s * (2.0 * rate * n as f64).exp())
                    .fold(0.0, f64::max);
                let e_m: f64 = (0..=m).map(|j| shell_size(j, self.d) as f64 * (2.0 * rate * j as f64).exp()).sum();
                let tail_sup = d
                    * 2f64.powi(self.d as i32)
                    * e_m
                    * (1.0 + mf).powf(d + self.epsilon)
                    * (2.0 + nm).powf(-1.0 - self.epsilon);
                Ok(DecaySequence {
                    m,
                    n_max,
                    rate,
                    shell,
                    payload: SequencePayload::Exponential { c_m: head.max(tail_sup), tail_sup },
                })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SequencePayload {
    /// u_{n,m} for n = m+1..n_max, the tail majorant of Σ_{n>n_max} u_{n,m}, and ‖u_{·,m}‖_1 bound.
    Polynomial { u: Vec<f64>, tail: f64, l1: f64 },
    /// C_m = sup_{n>m} shell_max_sum(n) e^{2ςn}, and the tail supremum used to certify it.
    Exponential { c_m: f64, tail_sup: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecaySequence {
    pub m: u32,
    pub n_max: u32,
    pub rate: f64,
    /// shell_max_sum(m, n) for n = m+1..n_max.
    pub shell: Vec<f64>,
    pub payload: SequencePayload,
}

impl DecaySequence {
    pub fn u_l1(&self) -> Option<f64> {
        match &self.payload {
            SequencePayload::Polynomial { l1, .. } => Some(*l1),
            _ => None,
        }
    }

    pub fn c_m(&self) -> Option<f64> {
        match &self.payload {
            SequencePayload::Exponential { c_m, .. } => Some(*c_m),
            _ => None,
        }
    }
}

/// Σ_{x∈a} Σ_{y∈b} F(|x-y|).
pub fn pair_sum(f: &DecayFunction, a: &[Site], b: &[Site]) -> f64 {
    let mut total = 0.0;
    for x in a {
        for y in b {
            total += f.eval(dist(x, y));
        }
    }
    total
}
