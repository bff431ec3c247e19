//! Finite-range interactions, one-site potentials and Hamiltonian assembly.

use std::collections::BTreeMap;

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::fock::{self, FockOperator};
use crate::lattice::{box_sites, dist, DecayFunction, Site};
use crate::{Error, Result};

pub const MAX_RANGE: f64 = 8.0;

const RADIUS_TOL: f64 = 1e-9;
const TERM_TOL: f64 = 1e-13;

/// Real function of the Euclidean distance, zero off its table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RadialTable {
    pub entries: Vec<(f64, f64)>,
}

impl RadialTable {
    pub fn new(entries: Vec<(f64, f64)>) -> Result<Self> {
        for &(r, v) in &entries {
            if !(r >= 0.0 && r.is_finite() && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("bad radial entry ({r}, {v})")));
            }
        }
        Ok(RadialTable { entries })
    }

    pub fn zero() -> Self {
        RadialTable::default()
    }

    pub fn get(&self, r: f64) -> f64 {
        self.entries.iter().filter(|(q, _)| (q - r).abs() < RADIUS_TOL).map(|(_, v)| v).sum()
    }

    pub fn range(&self) -> f64 {
        self.entries.iter().filter(|(_, v)| *v != 0.0).map(|(r, _)| *r).fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        RadialTable { entries: self.entries.iter().map(|&(r, v)| (r, c * v)).collect() }
    }
}

/// Ψ_Z stored on the context Z.
#[derive(Clone, Debug)]
pub struct Term {
    pub sites: Vec<Site>,
    pub op: FockOperator,
}

#[derive(Clone, Debug)]
enum Generator {
    HoppingDensity { h: RadialTable, v: RadialTable },
    Explicit(Vec<Term>),
}

#[derive(Clone, Debug)]
pub struct Interaction {
    parts: Vec<(f64, Generator)>,
    pub decay_tag: Option<DecayFunction>,
}

fn check_term(op: &FockOperator) -> Result<()> {
    let scale = op.max_abs().max(1.0);
    if op.hermiticity_defect() > TERM_TOL * scale {
        return Err(Error::Hypothesis("interaction term is not self-adjoint".into()));
    }
    if !op.is_even() {
        return Err(Error::Hypothesis("interaction term is not even".into()));
    }
    Ok(())
}

fn pair_term(x: &Site, y: &Site, h: f64, v: f64) -> Result<FockOperator> {
    let ctx = fock::context(&[x.clone(), y.clone()]);
    let hop = &fock::hopping(x, y, &ctx)? + &fock::hopping(y, x, &ctx)?;
    let dens = &fock::number(x, &ctx)? * &fock::number(y, &ctx)?;
    Ok(&hop.scale_real(h) + &dens.scale_real(2.0 * v))
}

impl Interaction {
    pub fn zero() -> Self {
        Interaction { parts: Vec::new(), decay_tag: None }
    }

    /// Ψ^{(h,v)}: on {x,y}, h(|x-y|)(a*_x a_y + a*_y a_x) + 2v(|x-y|) n_x n_y; on {x}, (h(0)+v(0)) n_x.
    pub fn hopping_density(h: RadialTable, v: RadialTable) -> Result<Self> {
        let r = h.range().max(v.range());
        if r > MAX_RANGE {
            return Err(Error::InvalidParameter(format!("range {r} exceeds {MAX_RANGE}")));
        }
        Ok(Interaction { parts: vec![(1.0, Generator::HoppingDensity { h, v })], decay_tag: None })
    }

    /// Ψ^{(d)}: 2d n_x on sites and -(a*_x a_y + a*_y a_x) on nearest neighbours.
    pub fn discrete_laplacian(d: usize) -> Self {
        let h = RadialTable { entries: vec![(0.0, 2.0 * d as f64), (1.0, -1.0)] };
        Interaction { parts: vec![(1.0, Generator::HoppingDensity { h, v: RadialTable::zero() })], decay_tag: None }
    }

    pub fn explicit(terms: Vec<Term>) -> Result<Self> {
        for t in &terms {
            if t.sites.is_empty() {
                return Err(Error::InvalidParameter("Ψ_∅ must vanish".into()));
            }
            if t.op.sites() != fock::context(&t.sites).as_slice() {
                return Err(Error::InvalidParameter("term must live on its own support".into()));
            }
            check_term(&t.op)?;
            let diam = t.sites.iter().flat_map(|a| t.sites.iter().map(move |b| dist(a, b))).fold(0.0, f64::max);
            if diam > MAX_RANGE {
                return Err(Error::InvalidParameter(format!("term diameter {diam} exceeds {MAX_RANGE}")));
            }
        }
        Ok(Interaction { parts: vec![(1.0, Generator::Explicit(terms))], decay_tag: None })
    }

    pub fn with_decay_tag(mut self, f: DecayFunction) -> Self {
        self.decay_tag = Some(f);
        self
    }

    pub fn scaled(&self, c: f64) -> Self {
        Interaction { parts: self.parts.iter().map(|(a, g)| (a * c, g.clone())).collect(), decay_tag: self.decay_tag }
    }

    pub fn plus(&self, other: &Interaction) -> Self {
        let mut parts = self.parts.clone();
        parts.extend(other.parts.iter().cloned());
        Interaction { parts, decay_tag: self.decay_tag.or_else(|| other.decay_tag) }
    }

    /// Largest diameter of a supported Z.
    pub fn range(&self) -> f64 {
        self.parts
            .iter()
            .filter(|(c, _)| *c != 0.0)
            .map(|(_, g)| match g {
                Generator::HoppingDensity { h, v } => h.range().max(v.range()),
                Generator::Explicit(ts) => ts
                    .iter()
                    .map(|t| t.sites.iter().flat_map(|a| t.sites.iter().map(move |b| dist(a, b))).fold(0.0, f64::max))
                    .fold(0.0, f64::max),
            })
            .fold(0.0, f64::max)
    }

    /// All nonzero Ψ_Z with Z ⊆ region, keyed by Z.
    pub fn terms_in(&self, region: &[Site]) -> Result<Vec<Term>> {
        let region = fock::context(region);
        let mut acc: BTreeMap<Vec<Site>, FockOperator> = BTreeMap::new();
        let mut add = |z: Vec<Site>, op: FockOperator| {
            match acc.get_mut(&z) {
                Some(prev) => *prev = &*prev + &op,
                None => {
                    acc.insert(z, op);
                }
            };
        };
        for (c, g) in &self.parts {
            if *c == 0.0 {
                continue;
            }
            match g {
                Generator::HoppingDensity { h, v } => {
                    let r = h.range().max(v.range());
                    for (i, x) in region.iter().enumerate() {
                        let onsite = h.get(0.0) + v.get(0.0);
                        if onsite != 0.0 {
                            let ctx = vec![x.clone()];
                            add(ctx.clone(), fock::number(x, &ctx)?.scale_real(c * onsite));
                        }
                        for y in &region[i + 1..] {
                            let rr = dist(x, y);
                            if rr > r + RADIUS_TOL {
                                continue;
                            }
                            let (hv, vv) = (h.get(rr), v.get(rr));
                            if hv == 0.0 && vv == 0.0 {
                                continue;
                            }
                            add(vec![x.clone(), y.clone()], pair_term(x, y, c * hv, c * vv)?);
                        }
                    }
                }
                Generator::Explicit(ts) => {
                    for t in ts {
                        if t.sites.iter().all(|s| region.binary_search(s).is_ok()) {
                            add(t.sites.clone(), t.op.scale_real(*c));
                        }
                    }
                }
            }
        }
        Ok(acc.into_iter().filter(|(_, op)| !op.is_zero()).map(|(sites, op)| Term { sites, op }).collect())
    }

    /// Every term is self-adjoint and even.
    pub fn validate(&self, region: &[Site]) -> Result<()> {
        for t in self.terms_in(region)? {
            check_term(&t.op)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Potential {
    pub onsite: BTreeMap<Site, FockOperator>,
}

impl Potential {
    pub fn zero() -> Self {
        Potential::default()
    }

    pub fn new(onsite: BTreeMap<Site, FockOperator>) -> Result<Self> {
        for (x, op) in &onsite {
            if op.sites() != std::slice::from_ref(x) {
                return Err(Error::InvalidParameter(format!("potential at {x} must act on that site alone")));
            }
            check_term(op)?;
        }
        Ok(Potential { onsite })
    }

    /// V_x = c_x n_x.
    pub fn density(coeffs: &BTreeMap<Site, f64>) -> Result<Self> {
        let mut onsite = BTreeMap::new();
        for (x, &c) in coeffs {
            let ctx = vec![x.clone()];
            onsite.insert(x.clone(), fock::number(x, &ctx)?.scale_real(c));
        }
        Ok(Potential { onsite })
    }

    /// V_x = λ ω(x) n_x.
    pub fn random(lambda: f64, omega: &BTreeMap<Site, f64>) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParameter("λ must be nonnegative".into()));
        }
        if let Some((x, w)) = omega.iter().find(|(_, w)| !(w.abs() <= 1.0)) {
            return Err(Error::InvalidParameter(format!("ω({x}) = {w} outside [-1, 1]")));
        }
        let coeffs = omega.iter().map(|(x, w)| (x.clone(), lambda * w)).collect();
        Potential::density(&coeffs)
    }
}

/// H = Σ_{Z ⊆ region} Ψ_Z + Σ_{x ∈ region} V_x on the context `region`.
pub fn hamiltonian_on(psi: &Interaction, v: &Potential, region: &[Site]) -> Result<FockOperator> {
    let ctx = fock::context(region);
    let mut h = FockOperator::zero(&ctx)?.into_matrix();
    let one = c64::new(1.0, 0.0);
    for t in psi.terms_in(&ctx)? {
        t.op.accumulate_into(&ctx, &mut h, one)?;
    }
    for (x, op) in &v.onsite {
        if ctx.binary_search(x).is_ok() {
            op.accumulate_into(&ctx, &mut h, one)?;
        }
    }
    FockOperator::from_matrix(&ctx, h)?.with_support(&ctx)
}

/// H_L on Λ_L.
pub fn hamiltonian(psi: &Interaction, v: &Potential, l: u32, d: usize) -> Result<FockOperator> {
    hamiltonian_on(psi, v, &box_sites(l, d))
}

/// ‖Ψ‖_W restricted to x, y in the window, with the maximizing pair.
pub fn w_norm_witness(psi: &Interaction, f: &DecayFunction, window: &crate::lattice::Box) -> Result<(f64, Option<(Site, Site)>)> {
    let reach = psi.range().ceil() as u32;
    let region = box_sites(window.radius + reach, window.d);
    let mut acc: BTreeMap<(Site, Site), f64> = BTreeMap::new();
    for t in psi.terms_in(&region)? {
        let nrm = t.op.spectral_norm();
        for x in t.sites.iter().filter(|x| window.contains(x)) {
            for y in t.sites.iter().filter(|y| window.contains(y)) {
                *acc.entry((x.clone(), y.clone())).or_insert(0.0) += nrm;
            }
        }
    }
    let mut best = 0.0;
    let mut arg = None;
    for ((x, y), s) in acc {
        let q = s / f.value(dist(&x, &y))?;
        if q > best {
            best = q;
            arg = Some((x, y));
        }
    }
    Ok((best, arg))
}

pub fn w_norm(psi: &Interaction, f: &DecayFunction, window: &crate::lattice::Box) -> Result<f64> {
    Ok(w_norm_witness(psi, f, window)?.0)
}

/// ∂_Ψ Λ. Terms are taken inside `universe` when given, otherwise in a box
/// large enough to hold every term meeting Λ.
pub fn boundary_set(psi: &Interaction, lam: &[Site], universe: Option<&[Site]>) -> Result<Vec<Site>> {
    let lam = fock::context(lam);
    if lam.is_empty() {
        return Ok(Vec::new());
    }
    let terms = match universe {
        Some(u) => psi.terms_in(u)?,
        None => {
            let r = lam.iter().map(|x| x.max_norm()).max().unwrap_or(0) as u32 + psi.range().ceil() as u32;
            psi.terms_in(&box_sites(r, lam[0].dim()))?
        }
    };
    let mut out = Vec::new();
    for t in terms {
        let inside = t.sites.iter().any(|s| lam.binary_search(s).is_ok());
        let outside = t.sites.iter().any(|s| lam.binary_search(s).is_err());
        if inside && outside {
            out.extend(t.sites.iter().filter(|s| lam.binary_search(s).is_ok()).cloned());
        }
    }
    Ok(fock::context(&out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Box;
    use crate::linalg;

    fn chain(n: i64) -> Vec<Site> {
        (0..n).map(|i| Site::new(vec![i])).collect()
    }

    fn nn(h1: f64, v1: f64) -> Interaction {
        Interaction::hopping_density(RadialTable::new(vec![(1.0, h1)]).unwrap(), RadialTable::new(vec![(1.0, v1)]).unwrap()).unwrap()
    }

    #[test]
    fn zero_models() {
        let ctx = chain(3);
        let z = Interaction::hopping_density(RadialTable::zero(), RadialTable::zero()).unwrap();
        assert!(z.terms_in(&ctx).unwrap().is_empty());
        assert!(hamiltonian_on(&z, &Potential::zero(), &ctx).unwrap().is_zero());
        let f = DecayFunction::polynomial(1, 1.0).unwrap();
        assert_eq!(w_norm(&Interaction::zero(), &f, &Box::new(2, 1)).unwrap(), 0.0);
    }

    #[test]
    fn two_site_spectrum() {
        let ctx = chain(2);
        let h = hamiltonian_on(&nn(-1.0, 0.0), &Potential::zero(), &ctx).unwrap();
        let mut ev = h.matrix().self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        ev.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip([-1.0, 0.0, 0.0, 1.0]) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn hamiltonian_matches_double_sum() {
        let ctx = box_sites(1, 1);
        let h = RadialTable::new(vec![(0.0, 0.3), (1.0, -0.7), (2.0, 0.2)]).unwrap();
        let v = RadialTable::new(vec![(0.0, 0.1), (1.0, 0.5), (2.0, -0.25)]).unwrap();
        let psi = Interaction::hopping_density(h.clone(), v.clone()).unwrap();
        let got = hamiltonian_on(&psi, &Potential::zero(), &ctx).unwrap();
        let mut want = FockOperator::zero(&ctx).unwrap();
        for x in &ctx {
            for y in &ctx {
                let r = dist(x, y);
                want = &want + &fock::hopping(x, y, &ctx).unwrap().scale_real(h.get(r));
                let nn = &fock::number(x, &ctx).unwrap() * &fock::number(y, &ctx).unwrap();
                want = &want + &nn.scale_real(v.get(r));
            }
        }
        assert!(got.max_abs_diff(&want) < 1e-13);
        assert!(got.hermiticity_defect() < 1e-13);
        for t in psi.terms_in(&ctx).unwrap() {
            assert!(t.op.is_even());
        }
    }

    #[test]
    fn laplacian_terms_and_spectrum() {
        let psi = Interaction::discrete_laplacian(1);
        let one = vec![Site::new(vec![0])];
        let t = psi.terms_in(&one).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t[0].op.max_abs_diff(&fock::number(&one[0], &one).unwrap().scale_real(2.0)) == 0.0);
        let ctx = box_sites(1, 1);
        let h = hamiltonian(&psi, &Potential::zero(), 1, 1).unwrap();
        // one-particle sector against the 3x3 Dirichlet Laplacian 2 - 2cos(kπ/4)
        let idx: Vec<usize> = (0..8).filter(|i: &usize| i.count_ones() == 1).collect();
        let block = faer::Mat::from_fn(3, 3, |i, j| h.matrix()[(idx[i], idx[j])]);
        let mut ev = block.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        ev.sort_by(f64::total_cmp);
        for (k, e) in ev.iter().enumerate() {
            let want = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / 4.0).cos();
            assert!((e - want).abs() < 1e-12);
        }
        let n = fock::number_operator(&ctx, &ctx).unwrap();
        assert!(fock::commutator(&h, &n).max_abs() < 1e-13);
    }

    #[test]
    fn potentials() {
        let x = Site::new(vec![0]);
        let mut om = BTreeMap::new();
        om.insert(x.clone(), -0.6);
        let p = Potential::random(0.5, &om).unwrap();
        assert!((p.onsite[&x].spectral_norm() - 0.3).abs() < 1e-14);
        assert!(Potential::random(0.0, &om).unwrap().onsite[&x].is_zero());
        om.insert(Site::new(vec![1]), 1.5);
        assert!(Potential::random(1.0, &om).is_err());
    }

    #[test]
    fn w_norm_nearest_neighbour() {
        let f = DecayFunction::polynomial(1, 1.0).unwrap();
        let psi = nn(1.0, 0.0);
        let w = w_norm(&psi, &f, &Box::new(2, 1)).unwrap();
        // ‖a*_0 a_1 + a*_1 a_0‖ = 1, F(1) = 1/4
        assert!((w - 4.0).abs() < 1e-12);
        let w3 = w_norm(&psi.scaled(-3.0), &f, &Box::new(2, 1)).unwrap();
        assert!((w3 - 12.0).abs() < 1e-11);
        // brute force over pairs including the diagonal
        let psi = nn(0.5, 0.4);
        let win = Box::new(2, 1);
        let region = box_sites(3, 1);
        let terms = psi.terms_in(&region).unwrap();
        let mut best: f64 = 0.0;
        for x in win.sites() {
            for y in win.sites() {
                let s: f64 = terms
                    .iter()
                    .filter(|t| t.sites.contains(&x) && t.sites.contains(&y))
                    .map(|t| linalg::spectral_norm(t.op.matrix()).unwrap())
                    .sum();
                best = best.max(s / f.eval(dist(&x, &y)));
            }
        }
        assert!((w_norm(&psi, &f, &win).unwrap() - best).abs() < 1e-12);
    }

    #[test]
    fn boundary_sets() {
        let onsite = Interaction::hopping_density(RadialTable::new(vec![(0.0, 1.0)]).unwrap(), RadialTable::zero()).unwrap();
        assert!(boundary_set(&onsite, &chain(3), None).unwrap().is_empty());
        let psi = nn(1.0, 0.0);
        assert_eq!(boundary_set(&psi, &[Site::new(vec![0])], None).unwrap(), vec![Site::new(vec![0])]);
        let b = boundary_set(&psi, &chain(5), None).unwrap();
        assert_eq!(b, vec![Site::new(vec![0]), Site::new(vec![4])]);
        let b = boundary_set(&psi, &chain(3), Some(&chain(5))).unwrap();
        assert_eq!(b, vec![Site::new(vec![2])]);
    }
}
