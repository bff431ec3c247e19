//! Heisenberg dynamics on a finite box.
//!
//! Autonomous evolution is exact through the spectral decomposition of H.
//! Time-dependent generators are integrated with a fourth-order
//! commutator-free Magnus scheme under step doubling.

use std::collections::BTreeMap;
use std::sync::Arc;

use faer::{c64, Mat};

use crate::fock::{self, FockOperator};
use crate::interactions::{hamiltonian_on, Interaction, Potential};
use crate::lattice::{translated_box, Site};
use crate::linalg::{self, CMat, Spectral};
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-9;

const MIN_STEP: f64 = 1e-10;
const DYSON_NODES: usize = 16;

/// Autonomous evolution with a cached spectral decomposition.
#[derive(Clone, Debug)]
pub struct Evolution {
    sites: Vec<Site>,
    spectral: Spectral,
}

impl Evolution {
    pub fn new(h: &FockOperator) -> Result<Self> {
        Ok(Evolution { sites: h.sites().to_vec(), spectral: Spectral::new(h.matrix())? })
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// τ_t(B) = e^{itH} B e^{-itH}.
    pub fn evolve(&self, b: &FockOperator, t: f64) -> Result<FockOperator> {
        let b = b.embed(&self.sites)?;
        if t == 0.0 {
            return Ok(b);
        }
        let m = self.spectral.evolve(b.matrix(), t);
        FockOperator::from_matrix(&self.sites, m)?.with_support(&self.sites)
    }
}

pub fn evolve_heisenberg(h: &FockOperator, b: &FockOperator, t: f64) -> Result<FockOperator> {
    Evolution::new(h)?.evolve(b, t)
}

type HamFn = dyn Fn(f64) -> CMat + Send + Sync;

/// t ↦ H_t on a fixed context.
#[derive(Clone)]
pub struct TimeProtocol {
    sites: Vec<Site>,
    f: Arc<HamFn>,
    pub smoothness: &'static str,
}

impl std::fmt::Debug for TimeProtocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TimeProtocol").field("sites", &self.sites).field("smoothness", &self.smoothness).finish()
    }
}

impl TimeProtocol {
    pub fn new(sites: &[Site], f: impl Fn(f64) -> CMat + Send + Sync + 'static) -> Self {
        TimeProtocol { sites: sites.to_vec(), f: Arc::new(f), smoothness: "smooth" }
    }

    pub fn constant(h: &FockOperator) -> Self {
        let m = h.matrix().clone();
        TimeProtocol { sites: h.sites().to_vec(), f: Arc::new(move |_| m.clone()), smoothness: "constant" }
    }

    /// H_t = H_0 + Σ_i c_i(t) O_i with all operators embedded into the context of H_0.
    pub fn driven(h0: &FockOperator, drives: Vec<(Arc<dyn Fn(f64) -> f64 + Send + Sync>, FockOperator)>) -> Result<Self> {
        let sites = h0.sites().to_vec();
        let base = h0.matrix().clone();
        let ops: Vec<(Arc<dyn Fn(f64) -> f64 + Send + Sync>, CMat)> =
            drives.into_iter().map(|(c, o)| Ok((c, o.embed(&sites)?.into_matrix()))).collect::<Result<_>>()?;
        Ok(TimeProtocol {
            sites,
            f: Arc::new(move |t| {
                let mut m = base.clone();
                for (c, o) in &ops {
                    let ct = c(t);
                    if ct != 0.0 {
                        m += o * faer::Scale(c64::new(ct, 0.0));
                    }
                }
                m
            }),
            smoothness: "smooth",
        })
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn matrix_at(&self, t: f64) -> CMat {
        (self.f)(t)
    }

    pub fn at(&self, t: f64) -> Result<FockOperator> {
        FockOperator::from_matrix(&self.sites, self.matrix_at(t))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Exact,
    Magnus4,
    Dyson(usize),
}

/// U_{t,s} with i∂_t U_{t,s} = H_t U_{t,s} and U_{s,s} = 1.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub unitary: FockOperator,
    pub interval: (f64, f64),
    pub method: Method,
}

impl Propagator {
    pub fn unitarity_defect(&self) -> f64 {
        let u = self.unitary.matrix();
        let p = u.adjoint() * u;
        linalg::spectral_norm(&(&p - &linalg::identity(p.nrows()))).unwrap_or(f64::INFINITY)
    }

    /// τ_{t,s}(B) = U*_{t,s} B U_{t,s}.
    pub fn conjugate(&self, b: &FockOperator) -> Result<FockOperator> {
        let sites = self.unitary.sites();
        let b = b.embed(sites)?;
        let u = self.unitary.matrix();
        let m = u.adjoint() * b.matrix() * u;
        FockOperator::from_matrix(sites, m)?.with_support(sites)
    }
}

fn cf4_step(protocol: &TimeProtocol, t0: f64, h: f64) -> Result<CMat> {
    let r3 = 3f64.sqrt();
    let (c1, c2) = (0.5 - r3 / 6.0, 0.5 + r3 / 6.0);
    let (a1, a2) = ((3.0 - 2.0 * r3) / 12.0, (3.0 + 2.0 * r3) / 12.0);
    let h1 = protocol.matrix_at(t0 + c1 * h);
    let h2 = protocol.matrix_at(t0 + c2 * h);
    let g_first = &h1 * faer::Scale(c64::new(a2, 0.0)) + &h2 * faer::Scale(c64::new(a1, 0.0));
    let g_second = &h1 * faer::Scale(c64::new(a1, 0.0)) + &h2 * faer::Scale(c64::new(a2, 0.0));
    let e1 = linalg::expm_hermitian(&hermitize(&g_first), h)?;
    let e2 = linalg::expm_hermitian(&hermitize(&g_second), h)?;
    Ok(&e2 * &e1)
}

fn hermitize(a: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// Magnus propagator with local error at most `tol` per unit time.
pub fn propagator(protocol: &TimeProtocol, s: f64, t: f64, tol: f64) -> Result<Propagator> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let dim = 1usize << protocol.sites.len();
    let mut u = linalg::identity(dim);
    let total = t - s;
    let dir = total.signum();
    let mut h = total.abs().min(0.25);
    let mut now = s;
    while (t - now) * dir > 1e-14 {
        let step = h.min((t - now) * dir) * dir;
        let big = cf4_step(protocol, now, step)?;
        let half = &cf4_step(protocol, now + 0.5 * step, 0.5 * step)? * &cf4_step(protocol, now, 0.5 * step)?;
        let err = linalg::frobenius(&(&big - &half)) / 15.0;
        if err <= tol * step.abs() {
            u = &half * &u;
            now += step;
            if err < tol * step.abs() / 32.0 {
                h = (2.0 * h).min(1.0);
            }
        } else {
            h *= 0.5;
            if h < MIN_STEP {
                return Err(Error::Numerical("step-size underflow in the propagator".into()));
            }
        }
    }
    Ok(Propagator {
        unitary: FockOperator::from_matrix(&protocol.sites, u)?.with_support(&protocol.sites)?,
        interval: (s, t),
        method: Method::Magnus4,
    })
}

pub fn exact_propagator(h: &FockOperator, s: f64, t: f64) -> Result<Propagator> {
    let u = Spectral::new(h.matrix())?.propagator(t - s);
    Ok(Propagator { unitary: FockOperator::from_matrix(h.sites(), u)?.with_support(h.sites())?, interval: (s, t), method: Method::Exact })
}

fn lagrange(nodes: &[f64], l: usize, x: f64) -> f64 {
    let mut p = 1.0;
    for (q, &xq) in nodes.iter().enumerate() {
        if q != l {
            p *= (x - xq) / (nodes[l] - xq);
        }
    }
    p
}

/// Dyson–Phillips series truncated at order k. Each level integrates the
/// previous one by Gauss–Legendre collocation with 16 nodes on [s, t].
pub fn dyson_phillips(protocol: &TimeProtocol, s: f64, t: f64, k: usize) -> Result<Propagator> {
    let dim = 1usize << protocol.sites.len();
    let (x, w) = linalg::gauss_legendre(DYSON_NODES);
    let half = 0.5 * (t - s);
    let nodes: Vec<f64> = x.iter().map(|xi| s + half * (xi + 1.0)).collect();
    let weights: Vec<f64> = w.iter().map(|wi| half * wi).collect();
    // S[i][l] = ∫_s^{τ_i} L_l
    let integ: Vec<Vec<f64>> = nodes
        .iter()
        .map(|&ti| {
            let hh = 0.5 * (ti - s);
            (0..DYSON_NODES)
                .map(|l| x.iter().zip(&w).map(|(xq, wq)| hh * wq * lagrange(&nodes, l, s + hh * (xq + 1.0))).sum())
                .collect()
        })
        .collect();
    let hs: Vec<CMat> = nodes.iter().map(|&ti| protocol.matrix_at(ti)).collect();
    let mut level: Vec<CMat> = vec![linalg::identity(dim); DYSON_NODES];
    let mut u = linalg::identity(dim);
    let mut phase = c64::new(1.0, 0.0);
    for _ in 0..k {
        phase *= c64::new(0.0, -1.0);
        let integrand: Vec<CMat> = hs.iter().zip(&level).map(|(h, d)| h * d).collect();
        let mut end = linalg::zeros(dim, dim);
        for (g, &wl) in integrand.iter().zip(&weights) {
            end += g * faer::Scale(c64::new(wl, 0.0));
        }
        u += &end * faer::Scale(phase);
        level = integ
            .iter()
            .map(|row| {
                let mut acc = linalg::zeros(dim, dim);
                for (g, &sil) in integrand.iter().zip(row) {
                    acc += g * faer::Scale(c64::new(sil, 0.0));
                }
                acc
            })
            .collect();
    }
    Ok(Propagator {
        unitary: FockOperator::from_matrix(&protocol.sites, u)?.with_support(&protocol.sites)?,
        interval: (s, t),
        method: Method::Dyson(k),
    })
}

/// (sup ‖H‖ |t-s|)^{k+1}/(k+1)!.
pub fn dyson_envelope(sup_norm: f64, s: f64, t: f64, k: usize) -> f64 {
    let x = sup_norm * (t - s).abs();
    (1..=k + 1).fold(1.0, |acc, j| acc * x / j as f64)
}

/// τ_{t,s}(B) for a time-dependent generator.
pub fn evolve_nonautonomous(b: &FockOperator, s: f64, t: f64, protocol: &TimeProtocol, tol: f64) -> Result<FockOperator> {
    if s == t {
        return b.embed(protocol.sites());
    }
    propagator(protocol, s, t, tol)?.conjugate(b)
}

/// Time-dependent one-site potential V_x(t) = v_x(t) n_x.
#[derive(Clone)]
pub struct DensityProtocol {
    pub coeffs: BTreeMap<Site, Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl DensityProtocol {
    pub fn zero() -> Self {
        DensityProtocol { coeffs: BTreeMap::new() }
    }

    /// ∫_s^t v_x by composite Gauss–Legendre quadrature.
    pub fn integral(&self, x: &Site, s: f64, t: f64) -> f64 {
        match self.coeffs.get(x) {
            None => 0.0,
            Some(f) => {
                let panels = ((t - s).abs() * 8.0).ceil().max(1.0) as usize;
                linalg::composite_rule(s, t, panels, 16).iter().map(|&(u, w)| w * f(u)).sum()
            }
        }
    }

    pub fn operator_at(&self, sites: &[Site], t: f64) -> Result<FockOperator> {
        let coeffs: BTreeMap<Site, f64> =
            self.coeffs.iter().filter(|(x, _)| sites.binary_search(x).is_ok()).map(|(x, f)| (x.clone(), f(t))).collect();
        let mut m = FockOperator::zero(sites)?.into_matrix();
        for op in Potential::density(&coeffs)?.onsite.values() {
            op.accumulate_into(sites, &mut m, c64::new(1.0, 0.0))?;
        }
        FockOperator::from_matrix(sites, m)
    }

    /// Diagonal of U^V_{t,s} = exp(-i Σ_x (∫_s^t v_x) n_x) in the occupation basis.
    pub fn propagator_diagonal(&self, sites: &[Site], s: f64, t: f64) -> Vec<c64> {
        let theta: Vec<f64> = sites.iter().map(|x| self.integral(x, s, t)).collect();
        (0..1usize << sites.len())
            .map(|n| {
                let ph: f64 = theta.iter().enumerate().filter(|(i, _)| n >> i & 1 == 1).map(|(_, th)| th).sum();
                c64::new(ph.cos(), -ph.sin())
            })
            .collect()
    }
}

fn diag_conjugate(d: &[c64], b: &CMat) -> CMat {
    // D* B D
    Mat::from_fn(b.nrows(), b.ncols(), |i, j| d[i].conj() * b[(i, j)] * d[j])
}

#[derive(Clone, Debug)]
pub struct InteractionPicture {
    pub value: FockOperator,
    /// Distance between τ_{t,s}(B) and τ̃_{t,s}(U^V* B U^V).
    pub identity_defect: f64,
}

/// τ̃_{t,s}(B) built from the sandwiched propagator, whose generator is
/// U^V_{t,s}* H_Ψ U^V_{t,s}; the identity with the full evolution is checked
/// against an independent integration of H_Ψ + V(t).
pub fn interaction_picture(
    b: &FockOperator,
    s: f64,
    t: f64,
    h_psi: &FockOperator,
    v: &DensityProtocol,
    tol: f64,
) -> Result<InteractionPicture> {
    let sites = h_psi.sites().to_vec();
    let hm = h_psi.matrix().clone();
    let vv = v.clone();
    let sites_g = sites.clone();
    let sandwiched = TimeProtocol::new(&sites, move |u| {
        let d = vv.propagator_diagonal(&sites_g, s, u);
        diag_conjugate(&d, &hm)
    });
    let ul = if s == t {
        linalg::identity(1 << sites.len())
    } else {
        propagator(&sandwiched, s, t, tol)?.unitary.into_matrix()
    };
    let tilde = |x: &CMat| -> CMat { ul.adjoint() * x * &ul };
    let bm = b.embed(&sites)?.into_matrix();
    let value = FockOperator::from_matrix(&sites, tilde(&bm))?.with_support(&sites)?;

    let vv = v.clone();
    let sites_f = sites.clone();
    let hm = h_psi.matrix().clone();
    let full = TimeProtocol::new(&sites, move |u| &hm + vv.operator_at(&sites_f, u).expect("potential").matrix());
    let direct = evolve_nonautonomous(b, s, t, &full, tol)?;
    let dv = v.propagator_diagonal(&sites, s, t);
    let rotated = diag_conjugate(&dv, &bm);
    let via = tilde(&rotated);
    let identity_defect = linalg::spectral_norm(&(direct.matrix() - &via))?;
    Ok(InteractionPicture { value, identity_defect })
}

/// Largest N with Λ_N + x inside the working box Λ_R.
pub fn largest_admissible_n(x: &Site, working_radius: u32) -> Option<u32> {
    let r = working_radius as i64 - x.max_norm();
    (r >= 0).then_some(r as u32)
}

/// 𝔅(m) = τ^{(m,x)}χ_x(B) and 𝔅(n) = (τ^{(n,x)} - τ^{(n-1,x)})χ_x(B) for m < n ≤ N,
/// all realized on Λ_N + x.
pub fn telescoping_blocks(
    b: &FockOperator,
    t: f64,
    x: &Site,
    m: u32,
    n_max: u32,
    psi: &Interaction,
    v: &Potential,
) -> Result<Vec<FockOperator>> {
    if n_max < m {
        return Err(Error::Geometry("N must be at least m".into()));
    }
    let d = x.dim();
    let lam_m = crate::lattice::box_sites(m, d);
    if b.support().iter().any(|y| lam_m.binary_search(y).is_err()) {
        return Err(Error::Geometry("B must be supported in Λ_m".into()));
    }
    let top = fock::context(&translated_box(n_max, x));
    let moved = b.translate(x, &top)?;
    let mut prev: Option<FockOperator> = None;
    let mut out = Vec::new();
    for n in m..=n_max {
        let region = fock::context(&translated_box(n, x));
        let h = hamiltonian_on(psi, v, &region)?;
        let local = moved.restrict_to_support()?.embed(&region)?;
        let cur = evolve_heisenberg(&h, &local, t)?.embed(&top)?;
        out.push(match &prev {
            None => cur.clone(),
            Some(p) => &cur - p,
        });
        prev = Some(cur);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interactions::RadialTable;
    use crate::lattice::box_sites;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain(n: i64) -> Vec<Site> {
        (0..n).map(|i| Site::new(vec![i])).collect()
    }

    fn model() -> Interaction {
        Interaction::hopping_density(
            RadialTable::new(vec![(0.0, 0.2), (1.0, -1.0)]).unwrap(),
            RadialTable::new(vec![(1.0, 0.6)]).unwrap(),
        )
        .unwrap()
    }

    fn random_op(ctx: &[Site], seed: u64) -> FockOperator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 1 << ctx.len();
        let m = Mat::from_fn(n, n, |_, _| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        FockOperator::from_matrix(ctx, m).unwrap()
    }

    fn driven(ctx: &[Site]) -> TimeProtocol {
        let h0 = hamiltonian_on(&model(), &Potential::zero(), ctx).unwrap();
        let hop = hamiltonian_on(
            &Interaction::hopping_density(RadialTable::new(vec![(1.0, 1.0)]).unwrap(), RadialTable::zero()).unwrap(),
            &Potential::zero(),
            ctx,
        )
        .unwrap();
        TimeProtocol::driven(&h0, vec![(Arc::new(|t: f64| 0.5 * (2.0 * t).sin()), hop)]).unwrap()
    }

    #[test]
    fn two_level_phase() {
        let ctx = chain(1);
        let n = fock::number(&ctx[0], &ctx).unwrap();
        let a = fock::annihilation(&ctx[0], &ctx).unwrap();
        let t = 0.83;
        let got = evolve_heisenberg(&n, &a, t).unwrap();
        assert!(got.max_abs_diff(&a.scale(c64::new(t.cos(), -t.sin()))) < 1e-14);
        assert_eq!(evolve_heisenberg(&n, &a, 0.0).unwrap().max_abs_diff(&a), 0.0);
    }

    #[test]
    fn automorphism_isometry_group() {
        let ctx = chain(4);
        let h = hamiltonian_on(&model(), &Potential::zero(), &ctx).unwrap();
        let ev = Evolution::new(&h).unwrap();
        let b1 = random_op(&ctx, 1);
        let b2 = random_op(&ctx, 2);
        let t = 1.7;
        let prod = ev.evolve(&(&b1 * &b2), t).unwrap();
        let sep = &ev.evolve(&b1, t).unwrap() * &ev.evolve(&b2, t).unwrap();
        assert!((&prod - &sep).spectral_norm() < 1e-9);
        let r = ev.evolve(&b1, t).unwrap().spectral_norm() / b1.spectral_norm();
        assert!((r - 1.0).abs() < 1e-10);
        let g = ev.evolve(&ev.evolve(&b1, 0.4).unwrap(), -1.1).unwrap();
        assert!((&g - &ev.evolve(&b1, -0.7).unwrap()).spectral_norm() < 1e-9);
        let n = fock::number_operator(&ctx, &ctx).unwrap();
        assert!(ev.evolve(&n, 2.3).unwrap().max_abs_diff(&n) < 1e-12);
    }

    #[test]
    fn constant_protocol_matches_exact() {
        let ctx = chain(3);
        let h = hamiltonian_on(&model(), &Potential::zero(), &ctx).unwrap();
        let p = propagator(&TimeProtocol::constant(&h), 0.3, -1.2, DEFAULT_TOL).unwrap();
        let e = exact_propagator(&h, 0.3, -1.2).unwrap();
        assert!((&p.unitary - &e.unitary).spectral_norm() < 1e-9);
        let id = propagator(&TimeProtocol::constant(&h), 0.5, 0.5, DEFAULT_TOL).unwrap();
        assert_eq!(id.unitary.max_abs_diff(&FockOperator::identity(&ctx).unwrap()), 0.0);
    }

    #[test]
    fn cocycles() {
        let ctx = chain(3);
        let p = driven(&ctx);
        let tol = DEFAULT_TOL;
        let (s, r, t) = (-0.3, 0.4, 1.1);
        let uts = propagator(&p, s, t, tol).unwrap();
        let utr = propagator(&p, r, t, tol).unwrap();
        let urs = propagator(&p, s, r, tol).unwrap();
        let ck = &uts.unitary - &(&utr.unitary * &urs.unitary);
        assert!(ck.spectral_norm() < 10.0 * tol);
        assert!(uts.unitarity_defect() < 1e-9);
        let b = random_op(&ctx, 7);
        let lhs = evolve_nonautonomous(&b, s, t, &p, tol).unwrap();
        let rhs = evolve_nonautonomous(&evolve_nonautonomous(&b, r, t, &p, tol).unwrap(), s, r, &p, tol).unwrap();
        assert!((&lhs - &rhs).spectral_norm() < 10.0 * tol * b.spectral_norm());
    }

    #[test]
    fn dyson_series() {
        let ctx = chain(2);
        let h = hamiltonian_on(&model(), &Potential::zero(), &ctx).unwrap().scale_real(0.5);
        let nh = h.spectral_norm();
        let (s, t) = (0.0, 1.0 / nh);
        let exact = exact_propagator(&h, s, t).unwrap();
        let p0 = dyson_phillips(&TimeProtocol::constant(&h), s, t, 0).unwrap();
        assert_eq!(p0.unitary.max_abs_diff(&FockOperator::identity(&ctx).unwrap()), 0.0);
        let p8 = dyson_phillips(&TimeProtocol::constant(&h), s, t, 8).unwrap();
        assert!((&p8.unitary - &exact.unitary).spectral_norm() <= dyson_envelope(nh, s, t, 8));
        let drv = driven(&ctx);
        let reference = propagator(&drv, 0.0, 0.3, 1e-13).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..=6 {
            let dp = dyson_phillips(&drv, 0.0, 0.3, k).unwrap();
            let e = (&dp.unitary - &reference.unitary).spectral_norm();
            assert!(e < last);
            last = e;
        }
    }

    #[test]
    fn interaction_picture_identity() {
        let ctx = chain(4);
        let h = hamiltonian_on(&model(), &Potential::zero(), &ctx).unwrap();
        let mut v = DensityProtocol::zero();
        for (i, x) in ctx.iter().enumerate() {
            let a = 0.3 * (i as f64 + 1.0);
            v.coeffs.insert(x.clone(), Arc::new(move |t: f64| a * (1.3 * t).cos()));
        }
        let b = random_op(&ctx[1..3].to_vec(), 3).embed(&ctx).unwrap();
        let ip = interaction_picture(&b, 0.1, 0.9, &h, &v, DEFAULT_TOL).unwrap();
        assert!(ip.identity_defect < 10.0 * DEFAULT_TOL * b.spectral_norm());
        assert!((ip.value.spectral_norm() - b.spectral_norm()).abs() < 1e-9 * b.spectral_norm());
        let plain = interaction_picture(&b, 0.1, 0.9, &h, &DensityProtocol::zero(), DEFAULT_TOL).unwrap();
        let direct = evolve_heisenberg(&h, &b, 0.8).unwrap();
        assert!((&plain.value - &direct).spectral_norm() < 1e-8);
    }

    #[test]
    fn telescoping_partial_sums() {
        let d1 = box_sites(0, 1);
        let b = &fock::creation(&d1[0], &d1).unwrap() + &fock::number(&d1[0], &d1).unwrap();
        let x = Site::new(vec![1]);
        let psi = model();
        let blocks = telescoping_blocks(&b, 0.9, &x, 0, 3, &psi, &Potential::zero()).unwrap();
        assert_eq!(blocks.len(), 4);
        assert!((blocks[0].spectral_norm() - b.spectral_norm()).abs() < 1e-10);
        let mut sum = blocks[0].clone();
        for blk in &blocks[1..] {
            sum = &sum + blk;
        }
        let top = fock::context(&translated_box(3, &x));
        let h = hamiltonian_on(&psi, &Potential::zero(), &top).unwrap();
        let direct = evolve_heisenberg(&h, &b.translate(&x, &top).unwrap(), 0.9).unwrap();
        assert!(sum.max_abs_diff(&direct) < 1e-10);
        let frozen = telescoping_blocks(&b, 0.0, &x, 0, 2, &psi, &Potential::zero()).unwrap();
        assert!(frozen[1].max_abs() < 1e-15 && frozen[2].max_abs() < 1e-15);
        assert_eq!(largest_admissible_n(&x, 4), Some(3));
    }
}
