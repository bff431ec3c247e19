//! Trees T ∈ T_{k+1} on the vertices {0, ..., k}, cluster indicators and the
//! remainder coefficients of the multi-commutator bounds.

use std::collections::BTreeMap;

use crate::lattice::{dist, dist_inf, DecayFunction, DecaySequence, Site};
use crate::{Error, Result};

/// Enumeration guard: |T_{k+1}| = k!.
pub const MAX_K: usize = 9;

/// Extra shells summed explicitly beyond the largest radius.
pub const DEFAULT_EXTRA_SHELLS: u32 = 48;

/// A tree given by its parent map j ↦ P(j) < j for j = 1..k.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tree {
    parent: Vec<usize>,
}

impl Tree {
    pub fn new(parent: Vec<usize>) -> Result<Self> {
        if parent.is_empty() {
            return Err(Error::InvalidParameter("a tree needs k ≥ 1".into()));
        }
        for (i, &p) in parent.iter().enumerate() {
            if p > i {
                return Err(Error::InvalidParameter(format!("P({}) = {p} is not below {}", i + 1, i + 1)));
            }
        }
        Ok(Tree { parent })
    }

    pub fn k(&self) -> usize {
        self.parent.len()
    }

    /// P_T(j) for j = 1..k.
    pub fn parent(&self, j: usize) -> usize {
        self.parent[j - 1]
    }

    /// Bonds {P_T(j), j}.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        (1..=self.k()).map(|j| (self.parent(j), j)).collect()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.k() + 1];
        for (p, j) in self.bonds() {
            d[p] += 1;
            d[j] += 1;
        }
        d
    }

    /// (P_T(2), ..., P_T(k)).
    pub fn code(&self) -> Vec<usize> {
        self.parent[1..].to_vec()
    }

    /// d_T! = ∏_j d_T(j)!.
    pub fn degree_factorial(&self) -> f64 {
        self.degrees().iter().map(|&d| factorial(d as u32)).product()
    }

    /// Connected and acyclic, checked by union-find over the bonds.
    pub fn is_tree(&self) -> bool {
        let n = self.k() + 1;
        let mut p: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (a, b) in self.bonds() {
            let (ra, rb) = (find(&mut p, a), find(&mut p, b));
            if ra == rb {
                return false;
            }
            p[ra] = rb;
        }
        let r = find(&mut p, 0);
        (0..n).all(|v| find(&mut p, v) == r)
    }
}

/// T_{k+1}, built by attaching vertex k to every vertex of every tree in T_k.
pub fn enumerate_trees(k: usize) -> Result<Vec<Tree>> {
    if k == 0 || k > MAX_K {
        return Err(Error::ResourceGuard(format!("tree order k = {k} outside 1..={MAX_K}")));
    }
    let mut level = vec![Tree { parent: vec![0] }];
    for kk in 2..=k {
        let mut next = Vec::with_capacity(level.len() * kk);
        for t in &level {
            for p in 0..kk {
                let mut parent = t.parent.clone();
                parent.push(p);
                next.push(Tree { parent });
            }
        }
        level = next;
    }
    Ok(level)
}

pub fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |a, j| a * j as f64)
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// |T_{k+1}(d)| by enumeration and the bound (k-1)!/∏(d(j)-1)!.
pub fn count_by_degree(k: usize, d: &[usize]) -> Result<(u64, f64)> {
    if d.len() != k + 1 || d.contains(&0) {
        return Err(Error::InvalidParameter("degree sequence must have k+1 positive entries".into()));
    }
    let exact = enumerate_trees(k)?.iter().filter(|t| t.degrees() == d).count() as u64;
    let bound = factorial(k as u32 - 1) / d.iter().map(|&v| factorial(v as u32 - 1)).product::<f64>();
    Ok((exact, bound))
}

/// #{d ∈ N^{k+1} : Σ d = 2k}, counted by dynamic programming, with the bound 4^k.
pub fn composition_count(k: usize) -> Result<(u64, f64)> {
    if k == 0 || k > 12 {
        return Err(Error::InvalidParameter(format!("k = {k} outside 1..=12")));
    }
    let target = 2 * k;
    // ways[s] = number of tuples of the current length with sum s
    let mut ways = vec![0u64; target + 1];
    ways[0] = 1;
    for _ in 0..=k {
        let mut next = vec![0u64; target + 1];
        for s in 0..=target {
            if ways[s] == 0 {
                continue;
            }
            for v in 1..=target - s {
                next[s + v] += ways[s];
            }
        }
        ways = next;
    }
    Ok((ways[target], 4f64.powi(k as i32)))
}

pub fn composition_closed_form(k: usize) -> u64 {
    binomial(2 * k as u64 - 1, k as u64)
}

/// Radius of a box, `None` standing for an unbounded one.
pub type Radius = Option<u32>;

fn boxes_meet(na: Radius, xa: &Site, nb: Radius, xb: &Site) -> bool {
    match (na, nb) {
        (Some(a), Some(b)) => dist_inf(xa, xb) <= a as i64 + b as i64,
        _ => true,
    }
}

/// κ_T: every bond joins intersecting boxes Λ_{n_j} + x_j.
pub fn kappa(t: &Tree, n: &[u32], x: &[Site]) -> bool {
    assert_eq!(n.len(), t.k() + 1);
    assert_eq!(x.len(), t.k() + 1);
    t.bonds().iter().all(|&(p, j)| boxes_meet(Some(n[p]), &x[p], Some(n[j]), &x[j]))
}

/// Strictly increasing maps {ℓ..k} → {1..k}, listed by their images.
pub fn monotone_maps(l: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    if l == 0 || l > k {
        return Err(Error::InvalidParameter(format!("need 1 ≤ ℓ ≤ k, got ℓ = {l}, k = {k}")));
    }
    let r = k - l + 1;
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(r);
    fn rec(start: usize, k: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for v in start..=k {
            if k - v + 1 < r - cur.len() {
                break;
            }
            cur.push(v);
            rec(v + 1, k, r, cur, out);
            cur.pop();
        }
    }
    rec(1, k, r, &mut cur, &mut out);
    Ok(out)
}

/// Σ_{T} Π_bonds 1[...] Π_j w_j(n_j) by message passing from the leaves,
/// each vertex ranging over a finite list of (radius, weight) pairs.
fn tree_sum(t: &Tree, x: &[Site], domains: &[Vec<(Radius, f64)>]) -> f64 {
    let k = t.k();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); k + 1];
    for j in 1..=k {
        children[t.parent(j)].push(j);
    }
    // msg[j][i] = contribution of the subtree at j given its parent takes its i-th value
    let mut msg: Vec<Vec<f64>> = vec![Vec::new(); k + 1];
    let inner = |v: usize, u: usize, msg: &Vec<Vec<f64>>| -> f64 { children[v].iter().map(|&c| msg[c][u]).product::<f64>() };
    for j in (1..=k).rev() {
        let p = t.parent(j);
        let below: Vec<f64> = (0..domains[j].len()).map(|u| domains[j][u].1 * inner(j, u, &msg)).collect();
        msg[j] = domains[p]
            .iter()
            .map(|&(np, _)| {
                domains[j]
                    .iter()
                    .zip(&below)
                    .filter(|((nj, _), _)| boxes_meet(*nj, &x[j], np, &x[p]))
                    .map(|(_, b)| b)
                    .sum()
            })
            .collect();
    }
    (0..domains[0].len()).map(|u| domains[0][u].1 * inner(0, u, &msg)).sum()
}

/// Inputs of the remainder ℜ_{T,α}: times s_1..s_k, radii and sites for 0..k.
#[derive(Clone, Debug)]
pub struct MultiConfig {
    pub s: Vec<f64>,
    pub m: Vec<u32>,
    pub x: Vec<Site>,
}

impl MultiConfig {
    pub fn k(&self) -> usize {
        self.s.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.s.is_empty() || self.m.len() != self.s.len() + 1 || self.x.len() != self.s.len() + 1 {
            return Err(Error::InvalidParameter("need k times and k+1 radii and sites".into()));
        }
        Ok(())
    }

    /// max(m_max + 48, largest pairwise max-norm distance).
    pub fn default_truncation(&self) -> u32 {
        let mmax = *self.m.iter().max().unwrap_or(&0);
        let spread = self.x.iter().flat_map(|a| self.x.iter().map(move |b| dist_inf(a, b))).max().unwrap_or(0);
        (mmax + DEFAULT_EXTRA_SHELLS).max(spread as u32)
    }
}

/// Shell weights g_m(n) = Σ_{z∈Λ_m} Σ_{y∈Λ_n∖Λ_{n-1}} F(|z-y|) for m < n ≤ N and
/// a majorant of their sum beyond N.
#[derive(Clone, Debug)]
pub struct ShellTables {
    pub truncation: u32,
    pub tables: BTreeMap<u32, (Vec<f64>, f64)>,
}

impl ShellTables {
    pub fn new(f: &DecayFunction, radii: &[u32], truncation: u32) -> Result<Self> {
        let mut tables = BTreeMap::new();
        for &m in radii {
            if truncation <= m {
                return Err(Error::InvalidParameter("truncation must exceed every radius".into()));
            }
            tables.entry(m).or_insert_with(|| {
                let g = ((m + 1)..=truncation).map(|n| f.shell_pair_sum(m, n)).collect();
                (g, f.shell_pair_tail(m, truncation))
            });
        }
        Ok(ShellTables { truncation, tables })
    }
}

fn subsets(k: usize) -> Vec<(usize, Vec<usize>)> {
    let mut out = Vec::new();
    for l in 1..=k {
        for img in monotone_maps(l, k).expect("valid range") {
            out.push((l, img));
        }
    }
    out
}

/// Upper bound on ℜ_{T,α}: the n-sums are explicit up to the truncation and
/// the remaining shells are counted with κ = 1.
pub fn remainder_r(t: &Tree, alpha: f64, cfg: &MultiConfig, d_const: f64, tables: &ShellTables) -> Result<f64> {
    cfg.validate()?;
    let k = cfg.k();
    if t.k() != k {
        return Err(Error::InvalidParameter("tree order differs from the configuration".into()));
    }
    if alpha == 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (l, img) in subsets(k) {
        let mut pref = (2.0 * alpha).powi((k - l + 1) as i32);
        for &j in &img {
            let s = cfg.s[j - 1].abs();
            pref *= s * (4.0 * d_const * alpha * s).exp();
        }
        if pref == 0.0 {
            continue;
        }
        let domains: Vec<Vec<(Radius, f64)>> = (0..=k)
            .map(|j| {
                if img.contains(&j) {
                    let (g, tail) = &tables.tables[&cfg.m[j]];
                    let mut dom: Vec<(Radius, f64)> =
                        g.iter().enumerate().map(|(i, &w)| (Some(cfg.m[j] + 1 + i as u32), w)).collect();
                    dom.push((None, *tail));
                    dom
                } else {
                    vec![(Some(cfg.m[j]), 1.0)]
                }
            })
            .collect();
        total += pref * tree_sum(t, &cfg.x, &domains);
    }
    Ok(total)
}

fn max_degree_per_bond(t: &Tree) -> Vec<(usize, usize, f64)> {
    let deg = t.degrees();
    t.bonds().into_iter().map(|(p, j)| (p, j, deg[p].max(deg[j]) as f64)).collect()
}

/// Polynomial closed form; `seqs[m]` must hold the decay sequence for radius m.
pub fn remainder_bound_poly(
    t: &Tree,
    alpha: f64,
    cfg: &MultiConfig,
    f: &DecayFunction,
    d_const: f64,
    seqs: &BTreeMap<u32, DecaySequence>,
) -> Result<f64> {
    cfg.validate()?;
    let k = cfg.k();
    if alpha == 0.0 {
        return Ok(0.0);
    }
    let rate = f.decay_rate();
    let d = f.d as f64;
    let bonds: f64 = max_degree_per_bond(t)
        .iter()
        .map(|&(p, j, md)| (1.0 + dist(&cfg.x[p], &cfg.x[j])).powf(-rate / md))
        .product();
    let mut total = 0.0;
    for (l, img) in subsets(k) {
        let mut term = (2.0 * alpha).powi((k - l + 1) as i32);
        for j in 0..=k {
            if img.contains(&j) {
                let u = seqs
                    .get(&cfg.m[j])
                    .and_then(|s| s.u_l1())
                    .ok_or_else(|| Error::InvalidParameter(format!("no polynomial sequence for m = {}", cfg.m[j])))?;
                let s = cfg.s[j - 1].abs();
                term *= u * s * (4.0 * d_const * s * alpha).exp();
            } else {
                term *= (1.0 + cfg.m[j] as f64).powf(rate);
            }
        }
        total += term;
    }
    Ok(d.powf(rate * k as f64 / 2.0) * total * bonds)
}

/// Exponential closed form; `seqs[m]` must hold C_m.
pub fn remainder_bound_exp(
    t: &Tree,
    alpha: f64,
    cfg: &MultiConfig,
    f: &DecayFunction,
    d_const: f64,
    seqs: &BTreeMap<u32, DecaySequence>,
) -> Result<f64> {
    cfg.validate()?;
    let k = cfg.k();
    if alpha == 0.0 {
        return Ok(0.0);
    }
    let rate = f.decay_rate();
    let sd = (f.d as f64).sqrt();
    let bonds: f64 = max_degree_per_bond(t)
        .iter()
        .map(|&(p, j, md)| (-rate * dist(&cfg.x[p], &cfg.x[j]) / (sd * md)).exp())
        .product();
    let mut total = 0.0;
    for (l, img) in subsets(k) {
        let mut term = (2.0 * alpha / rate.exp_m1()).powi((k - l + 1) as i32);
        for j in 0..=k {
            let mj = cfg.m[j] as f64;
            if img.contains(&j) {
                let c = seqs
                    .get(&cfg.m[j])
                    .and_then(|s| s.c_m())
                    .ok_or_else(|| Error::InvalidParameter(format!("no exponential constant for m = {}", cfg.m[j])))?;
                let s = cfg.s[j - 1].abs();
                term *= c * s * (4.0 * d_const * s * alpha - rate * mj).exp();
            } else {
                term *= (rate * mj).exp();
            }
        }
        total += term;
    }
    Ok(total * bonds)
}

/// Σ_{y∈Z^d} e^{-c|y|}: explicit over a box plus a geometric majorant of the rest.
pub fn lattice_exp_sum(c: f64, d: usize) -> Result<f64> {
    if !(c > 0.0) || !(1..=2).contains(&d) {
        return Err(Error::InvalidParameter("need c > 0 and d ∈ {1, 2}".into()));
    }
    let cap = if d == 1 { 20000 } else { 600 };
    let r = ((60.0 / c).ceil() as i64).min(cap);
    let q = (-c).exp();
    let rf = r as f64;
    let (body, tail) = if d == 1 {
        let body: f64 = 1.0 + 2.0 * (1..=r).map(|n| (-c * n as f64).exp()).sum::<f64>();
        (body, 2.0 * q.powf(rf + 1.0) / (1.0 - q))
    } else {
        let mut body = 0.0;
        for a in 0..=r {
            for b in 0..=r {
                let w = match (a == 0, b == 0) {
                    (true, true) => 1.0,
                    (true, false) | (false, true) => 2.0,
                    _ => 4.0,
                };
                body += w * (-c * ((a * a + b * b) as f64).sqrt()).exp();
            }
        }
        let tail = 8.0 * q.powf(rf + 1.0) * ((rf + 2.0) / (1.0 - q) + q / (1.0 - q).powi(2));
        (body, tail)
    };
    Ok(body + tail)
}

#[derive(Clone, Debug)]
pub struct TreeSumReport {
    pub k: usize,
    pub d: usize,
    pub rate: f64,
    pub lhs: f64,
    pub constant: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// S_d = (1 + 2d/ς)^d bounds Σ_x e^{-ς|x|/(g√d)} by S_d g^d for every g ≥ 1.
pub fn s_constant(d: usize, rate: f64) -> f64 {
    (1.0 + 2.0 * d as f64 / rate).powi(d as i32)
}

/// Σ_T max_j max_{x_j} Σ_{other x} Π_bonds exp(-ς|x_p - x_l|/(√d max degree))
/// against D^k (k!)^d with D = 4 S_d e^{2d+2}. Translation invariance makes the
/// inner sum a product of one lattice sum per bond.
pub fn tree_sum_bound_check(k: usize, d: usize, rate: f64) -> Result<TreeSumReport> {
    if k == 0 || k > 6 || !(1..=2).contains(&d) || !(rate > 0.0) {
        return Err(Error::InvalidParameter("need 1 ≤ k ≤ 6, d ∈ {1, 2}, ς > 0".into()));
    }
    let sd = (d as f64).sqrt();
    let mut cache: BTreeMap<usize, f64> = BTreeMap::new();
    let mut lhs = 0.0;
    for t in enumerate_trees(k)? {
        let mut prod = 1.0;
        for (_, _, md) in max_degree_per_bond(&t) {
            let key = md as usize;
            let g = match cache.get(&key) {
                Some(&g) => g,
                None => {
                    let g = lattice_exp_sum(rate / (sd * md), d)?;
                    cache.insert(key, g);
                    g
                }
            };
            prod *= g;
        }
        lhs += prod;
    }
    let constant = 4.0 * s_constant(d, rate) * (2.0 * d as f64 + 2.0).exp();
    let rhs = constant.powi(k as i32) * factorial(k as u32).powi(d as i32);
    Ok(TreeSumReport { k, d, rate, lhs, constant, rhs, pass: lhs <= rhs })
}

/// Σ_{T∈T_{k+1}} d_T!.
pub fn sum_degree_factorials(k: usize) -> Result<f64> {
    Ok(enumerate_trees(k)?.iter().map(|t| t.degree_factorial()).sum())
}

/// Lower and upper Stirling-type bounds on g!.
pub fn stirling_bounds(g: u32) -> (f64, f64) {
    let gf = g as f64;
    let base = gf.powf(gf) * (-gf).exp() * (2.0 * std::f64::consts::PI * gf).sqrt();
    (base * (1.0 / (12.0 * gf + 1.0)).exp(), base * (1.0 / (12.0 * gf)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::box_sites;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn enumeration_sizes() {
        assert_eq!(enumerate_trees(1).unwrap(), vec![Tree::new(vec![0]).unwrap()]);
        assert_eq!(enumerate_trees(2).unwrap().len(), 2);
        let t4 = enumerate_trees(4).unwrap();
        assert_eq!(t4.len(), 24);
        assert_eq!(t4.iter().map(|t| t.code()).collect::<HashSet<_>>().len(), 24);
        assert!(enumerate_trees(10).is_err());
        for t in enumerate_trees(5).unwrap() {
            assert!(t.is_tree());
            assert_eq!(*t.degrees().last().unwrap(), 1);
        }
    }

    #[test]
    fn degrees_and_codes() {
        assert_eq!(Tree::new(vec![0]).unwrap().degrees(), vec![1, 1]);
        assert_eq!(Tree::new(vec![0, 1]).unwrap().degrees(), vec![1, 2, 1]);
        assert_eq!(Tree::new(vec![0, 0, 0]).unwrap().code(), vec![0, 0]);
        for t in enumerate_trees(6).unwrap() {
            let d = t.degrees();
            for (j, &dj) in d.iter().enumerate() {
                assert_eq!(t.code().iter().filter(|&&c| c == j).count(), dj - 1);
            }
        }
    }

    #[test]
    fn degree_counts() {
        assert_eq!(count_by_degree(2, &[1, 2, 1]).unwrap(), (1, 1.0));
        assert_eq!(count_by_degree(2, &[2, 1, 1]).unwrap(), (1, 1.0));
        assert_eq!(count_by_degree(2, &[2, 2, 1]).unwrap().0, 0);
        let brute = |k: usize| -> u64 {
            // all tuples in {1..2k}^{k+1} with the right sum
            let mut c = 0;
            let mut v = vec![1usize; k + 1];
            loop {
                if v.iter().sum::<usize>() == 2 * k {
                    c += 1;
                }
                let mut i = 0;
                loop {
                    if i == v.len() {
                        return c;
                    }
                    v[i] += 1;
                    if v[i] <= 2 * k {
                        break;
                    }
                    v[i] = 1;
                    i += 1;
                }
            }
        };
        for k in 1..=5 {
            assert_eq!(composition_count(k).unwrap().0, brute(k));
        }
        assert_eq!(composition_count(1).unwrap(), (1, 4.0));
        assert_eq!(composition_count(2).unwrap(), (3, 16.0));
        assert_eq!(composition_count(5).unwrap().0, 126);
    }

    #[test]
    fn kappa_matches_site_intersection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trees = enumerate_trees(3).unwrap();
        for _ in 0..200 {
            let t = &trees[rng.random_range(0..trees.len())];
            let n: Vec<u32> = (0..4).map(|_| rng.random_range(0..3)).collect();
            let x: Vec<Site> = (0..4).map(|_| Site::new(vec![rng.random_range(-5..6), rng.random_range(-5..6)])).collect();
            let brute = t.bonds().iter().all(|&(p, j)| {
                let a: HashSet<Site> = box_sites(n[p], 2).iter().map(|y| y.add(&x[p])).collect();
                box_sites(n[j], 2).iter().any(|y| a.contains(&y.add(&x[j])))
            });
            assert_eq!(kappa(t, &n, &x), brute);
            let mut bigger = n.clone();
            bigger[rng.random_range(0..4)] += 1;
            assert!(!kappa(t, &n, &x) || kappa(t, &bigger, &x));
        }
    }

    #[test]
    fn monotone_map_counts() {
        assert_eq!(monotone_maps(3, 3).unwrap().len(), 3);
        assert_eq!(monotone_maps(1, 4).unwrap(), vec![vec![1, 2, 3, 4]]);
        for k in 1..=6u64 {
            for l in 1..=k {
                assert_eq!(monotone_maps(l as usize, k as usize).unwrap().len() as u64, binomial(k, k - l + 1));
            }
        }
    }

    fn sample_cfg(rng: &mut ChaCha8Rng, k: usize) -> MultiConfig {
        MultiConfig {
            s: (0..k).map(|_| rng.random_range(-1.0..1.0)).collect(),
            m: (0..=k).map(|_| rng.random_range(0..2)).collect(),
            x: (0..=k).map(|_| Site::new(vec![rng.random_range(-6..7)])).collect(),
        }
    }

    fn seqs(f: &DecayFunction) -> BTreeMap<u32, DecaySequence> {
        (0..3).map(|m| (m, f.decay_sequences(m, 400).unwrap())).collect()
    }

    #[test]
    fn remainder_dominated_by_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fp = DecayFunction::polynomial(1, 1.5).unwrap();
        let fe = DecayFunction::exponential(1, 1.0, 0.4).unwrap();
        let (sp, se) = (seqs(&fp), seqs(&fe));
        for case in 0..50 {
            let k = 1 + case % 3;
            let cfg = sample_cfg(&mut rng, k);
            let alpha = rng.random_range(0.1..2.0);
            let n = cfg.default_truncation();
            for (f, s) in [(&fp, &sp), (&fe, &se)] {
                let dconst = f.convolution_constant_bound();
                let tables = ShellTables::new(f, &cfg.m, n).unwrap();
                for t in enumerate_trees(k).unwrap() {
                    let raw = remainder_r(&t, alpha, &cfg, dconst, &tables).unwrap();
                    let bound = if f.sigma == 0.0 {
                        remainder_bound_poly(&t, alpha, &cfg, f, dconst, s).unwrap()
                    } else {
                        remainder_bound_exp(&t, alpha, &cfg, f, dconst, s).unwrap()
                    };
                    assert!(raw <= bound * (1.0 + 1e-12), "k={k} raw={raw} bound={bound}");
                    assert_eq!(remainder_r(&t, 0.0, &cfg, dconst, &tables).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn remainder_monotone_in_alpha_and_time() {
        let f = DecayFunction::polynomial(1, 2.0).unwrap();
        let cfg = MultiConfig { s: vec![0.3, -0.5], m: vec![0, 1, 0], x: vec![Site::new(vec![0]), Site::new(vec![3]), Site::new(vec![-4])] };
        let tables = ShellTables::new(&f, &cfg.m, cfg.default_truncation()).unwrap();
        let dc = f.convolution_constant_bound();
        for t in enumerate_trees(2).unwrap() {
            let mut last = 0.0;
            for a in [0.1, 0.2, 0.5, 1.0] {
                let r = remainder_r(&t, a, &cfg, dc, &tables).unwrap();
                assert!(r >= last);
                last = r;
            }
            let mut longer = cfg.clone();
            longer.s[1] = -0.9;
            assert!(remainder_r(&t, 0.5, &longer, dc, &tables).unwrap() >= remainder_r(&t, 0.5, &cfg, dc, &tables).unwrap());
        }
    }

    #[test]
    fn tree_dp_matches_nested_sum() {
        // κ-weighted sum by direct enumeration over all n-tuples
        let f = DecayFunction::polynomial(1, 1.0).unwrap();
        let cfg = MultiConfig { s: vec![0.4, 0.7], m: vec![0, 1, 0], x: vec![Site::new(vec![0]), Site::new(vec![5]), Site::new(vec![-3])] };
        let n = 10;
        let tables = ShellTables::new(&f, &cfg.m, n).unwrap();
        let dc = 3.0;
        let alpha = 0.3;
        for t in enumerate_trees(2).unwrap() {
            let mut want = 0.0;
            for l in 1..=2 {
                for img in monotone_maps(l, 2).unwrap() {
                    let mut pref = (2.0 * alpha as f64).powi((2 - l + 1) as i32);
                    for &j in &img {
                        pref *= cfg.s[j - 1].abs() * (4.0 * dc * alpha * cfg.s[j - 1].abs()).exp();
                    }
                    let range = |j: usize| -> Vec<Radius> {
                        if img.contains(&j) {
                            ((cfg.m[j] + 1)..=n).map(Some).chain(std::iter::once(None)).collect()
                        } else {
                            vec![Some(cfg.m[j])]
                        }
                    };
                    let w = |j: usize, r: Radius| -> f64 {
                        if !img.contains(&j) {
                            return 1.0;
                        }
                        let (g, tail) = &tables.tables[&cfg.m[j]];
                        match r {
                            Some(v) => g[(v - cfg.m[j] - 1) as usize],
                            None => *tail,
                        }
                    };
                    for &a in &range(0) {
                        for &b in &range(1) {
                            for &c in &range(2) {
                                let rs = [a, b, c];
                                let ok = t.bonds().iter().all(|&(p, j)| boxes_meet(rs[p], &cfg.x[p], rs[j], &cfg.x[j]));
                                if ok {
                                    want += pref * w(0, a) * w(1, b) * w(2, c);
                                }
                            }
                        }
                    }
                }
            }
            let got = remainder_r(&t, alpha, &cfg, dc, &tables).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn exponential_bound_decreases_with_distance() {
        let f = DecayFunction::exponential(1, 1.0, 0.3).unwrap();
        let s = seqs(&f);
        let t = Tree::new(vec![0, 1]).unwrap();
        let mut last = f64::INFINITY;
        for gap in 0..6 {
            let cfg = MultiConfig { s: vec![0.5, 0.5], m: vec![0, 0, 0], x: vec![Site::new(vec![0]), Site::new(vec![gap]), Site::new(vec![gap + 1])] };
            let b = remainder_bound_exp(&t, 1.0, &cfg, &f, f.convolution_constant_bound(), &s).unwrap();
            assert!(b <= last);
            last = b;
        }
    }

    #[test]
    fn proposition_and_factorial_sums() {
        // k = 1, d = 1: two-vertex sum Σ_y e^{-ς|y|} by direct summation
        let rate: f64 = 0.7;
        let direct: f64 = (-20000i64..=20000).map(|y| (-rate * y.abs() as f64).exp()).sum();
        let rep = tree_sum_bound_check(1, 1, rate).unwrap();
        assert!((rep.lhs - direct).abs() < 1e-9);
        assert!(rep.pass);
        let geo = (1.0 + (-rate).exp()) / (1.0 - (-rate).exp());
        assert!((lattice_exp_sum(rate, 1).unwrap() - geo).abs() < 1e-12);
        for k in 1..=6 {
            for d in 1..=2 {
                assert!(tree_sum_bound_check(k, d, 0.5).unwrap().pass);
            }
            let s = sum_degree_factorials(k).unwrap();
            assert!(s <= factorial(k as u32) * (4.0 * std::f64::consts::E.powi(2)).powi(k as i32));
        }
        for g in 1..=50 {
            let (lo, hi) = stirling_bounds(g);
            let f = factorial(g);
            assert!(lo <= f && f <= hi);
        }
    }
}
