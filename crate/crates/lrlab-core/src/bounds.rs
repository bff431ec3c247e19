//! Certification harness: exact left-hand sides on small boxes against
//! right-hand sides assembled from certified constants.
//!
//! Dynamics on a finite region Λ is the dynamics of the interaction truncated
//! to Λ, whose W-norm never exceeds that of the full interaction, so every
//! case below is an instance of the bound it checks.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use faer::{c64, Mat};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, evolve_heisenberg, evolve_nonautonomous, Evolution, TimeProtocol, DEFAULT_TOL};
use crate::fock::{self, FockOperator};
use crate::interactions::{boundary_set, hamiltonian_on, w_norm, Interaction, Potential, RadialTable};
use crate::lattice::{box_sites, dist, pair_sum, translated_box, Box, DecayFunction, DecayKind, DecaySequence, Site};
use crate::trees::{enumerate_trees, kappa, remainder_bound_exp, remainder_bound_poly, remainder_r, MultiConfig, ShellTables, Tree};
use crate::{Error, Result};

/// Absolute slack in lhs ≤ rhs + SLACK.
pub const SLACK: f64 = 1e-10;

/// Shells summed explicitly in the decay sequences.
pub const SEQUENCE_SHELLS: u32 = 256;

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub case_id: String,
    pub theorem: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
    /// The right-hand side is finite and built from certified majorants only.
    pub certified: bool,
    pub params: Vec<(String, f64)>,
}

impl BoundReport {
    pub fn new(case_id: &str, theorem: &str, lhs: f64, rhs: f64, params: Vec<(String, f64)>) -> Self {
        let margin = rhs - lhs;
        BoundReport {
            case_id: case_id.to_string(),
            theorem: theorem.to_string(),
            lhs,
            rhs,
            margin,
            pass: margin >= -SLACK,
            certified: rhs.is_finite(),
            params,
        }
    }

    /// A failed bound counts as a counterexample only when its RHS is certified.
    pub fn is_violation(&self) -> bool {
        !self.pass && self.certified
    }
}

fn param(name: &str, v: f64) -> (String, f64) {
    (name.to_string(), v)
}

/// Certified D and ‖Ψ‖_W.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants {
    pub d: f64,
    pub w: f64,
}

impl Constants {
    pub fn certified(psi: &Interaction, f: &DecayFunction, region: &[Site]) -> Result<Self> {
        Ok(Constants { d: f.convolution_constant_bound(), w: certified_w(psi, f, region)? })
    }
}

/// ‖Ψ‖_W on a window of radius max(2R, reach of the region), exact for
/// finite-range interactions.
pub fn certified_w(psi: &Interaction, f: &DecayFunction, region: &[Site]) -> Result<f64> {
    let reach = region.iter().map(|x| x.max_norm()).max().unwrap_or(0) as u32;
    let radius = (2 * psi.range().ceil() as u32).max(reach).max(1);
    w_norm(psi, f, &Box::new(radius, f.d))
}

/// 2D⁻¹‖B1‖‖B2‖(e^{2D|t|W} − 1).
pub fn lr_envelope(n1: f64, n2: f64, dt: f64, c: Constants) -> f64 {
    2.0 / c.d * n1 * n2 * (2.0 * c.d * dt.abs() * c.w).exp_m1()
}

/// 2‖B‖W|t|e^{4D|t|W}.
pub fn convergence_envelope(nb: f64, dt: f64, c: Constants) -> f64 {
    let dt = dt.abs();
    2.0 * nb * c.w * dt * (4.0 * c.d * dt * c.w).exp()
}

fn inside(ops: &[Site], region: &[Site]) -> bool {
    ops.iter().all(|x| region.binary_search(x).is_ok())
}

fn check_lr_hypotheses(b1: &FockOperator, b2: &FockOperator, lam1: &[Site], lam2: &[Site]) -> Result<()> {
    if lam1.iter().any(|x| lam2.binary_search(x).is_ok()) {
        return Err(Error::Geometry("Λ1 and Λ2 overlap".into()));
    }
    if !inside(b1.support(), lam1) || !inside(b2.support(), lam2) {
        return Err(Error::Geometry("operator not localized in its region".into()));
    }
    if !b1.is_even() {
        return Err(Error::Hypothesis("B1 must be even".into()));
    }
    Ok(())
}

/// Lieb–Robinson right-hand side. The boundary ∂_ΨΛ1 uses the terms inside
/// `universe` when given.
#[allow(clippy::too_many_arguments)]
pub fn lr_rhs(
    b1: &FockOperator,
    b2: &FockOperator,
    lam1: &[Site],
    lam2: &[Site],
    t: f64,
    psi: &Interaction,
    f: &DecayFunction,
    c: Constants,
    universe: Option<&[Site]>,
) -> Result<f64> {
    let lam1 = fock::context(lam1);
    let lam2 = fock::context(lam2);
    check_lr_hypotheses(b1, b2, &lam1, &lam2)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let boundary = boundary_set(psi, &lam1, universe)?;
    let sum = pair_sum(f, &boundary, &lam2);
    if sum == 0.0 {
        return Ok(0.0);
    }
    Ok(lr_envelope(b1.spectral_norm(), b2.spectral_norm(), t, c) * sum)
}

/// ‖[τ_t(B1), B2]‖ on the context of `evol`.
pub fn lr_lhs(evol: &Evolution, b1: &FockOperator, b2: &FockOperator, t: f64) -> Result<f64> {
    let tb1 = evol.evolve(b1, t)?;
    let b2 = b2.embed(evol.sites())?;
    Ok(fock::commutator(&tb1, &b2).spectral_norm())
}

#[derive(Clone, Debug)]
pub struct LrCase {
    pub id: String,
    pub psi: Interaction,
    pub v: Potential,
    pub f: DecayFunction,
    pub region: Vec<Site>,
    pub lam1: Vec<Site>,
    pub lam2: Vec<Site>,
    pub b1: FockOperator,
    pub b2: FockOperator,
    pub t: f64,
}

fn region_guard(region: &[Site], max: usize) -> Result<Vec<Site>> {
    let region = fock::context(region);
    if region.is_empty() || region.len() > max {
        return Err(Error::Geometry(format!("region of {} sites, expected 1..={max}", region.len())));
    }
    Ok(region)
}

fn min_distance(a: &[Site], b: &[Site]) -> f64 {
    a.iter().flat_map(|x| b.iter().map(move |y| dist(x, y))).fold(f64::INFINITY, f64::min)
}

pub fn verify_lr(case: &LrCase) -> Result<BoundReport> {
    let region = region_guard(&case.region, 10)?;
    if !inside(&case.lam1, &region) || !inside(&case.lam2, &region) {
        return Err(Error::Geometry("supports must lie in the region".into()));
    }
    let c = Constants::certified(&case.psi, &case.f, &region)?;
    let rhs = lr_rhs(&case.b1, &case.b2, &case.lam1, &case.lam2, case.t, &case.psi, &case.f, c, Some(&region))?;
    let evol = Evolution::new(&hamiltonian_on(&case.psi, &case.v, &region)?)?;
    let lhs = lr_lhs(&evol, &case.b1, &case.b2, case.t)?;
    let params = vec![
        param("t", case.t),
        param("sites", region.len() as f64),
        param("separation", min_distance(&case.lam1, &case.lam2)),
        param("w_norm", c.w),
        param("d_const", c.d),
    ];
    Ok(BoundReport::new(&case.id, "lieb-robinson", lhs, rhs, params))
}

#[derive(Clone, Debug)]
pub struct ConvergenceCase {
    pub id: String,
    pub psi: Interaction,
    pub v: Potential,
    pub f: DecayFunction,
    pub b: FockOperator,
    pub t: f64,
    pub l1: u32,
    pub l2: u32,
}

fn check_volumes(b: &FockOperator, l1: u32, l2: u32, d: usize) -> Result<(Vec<Site>, Vec<Site>)> {
    if l2 <= l1 {
        return Err(Error::Geometry("need Λ_{L1} ⊊ Λ_{L2}".into()));
    }
    let inner = box_sites(l1, d);
    let outer = box_sites(l2, d);
    if !inside(b.support(), &inner) {
        return Err(Error::Geometry("B must be supported in Λ_{L1}".into()));
    }
    Ok((inner, outer))
}

fn shell_between(inner: &[Site], outer: &[Site]) -> Vec<Site> {
    outer.iter().filter(|y| inner.binary_search(y).is_err()).cloned().collect()
}

pub fn convergence_rate_check(case: &ConvergenceCase) -> Result<BoundReport> {
    let (inner, outer) = check_volumes(&case.b, case.l1, case.l2, case.f.d)?;
    let c = Constants::certified(&case.psi, &case.f, &outer)?;
    let small = evolve_heisenberg(&hamiltonian_on(&case.psi, &case.v, &inner)?, &case.b, case.t)?.embed(&outer)?;
    let large = evolve_heisenberg(&hamiltonian_on(&case.psi, &case.v, &outer)?, &case.b, case.t)?;
    let lhs = (&large - &small).spectral_norm();
    let shell = shell_between(&inner, &outer);
    let rhs = convergence_envelope(case.b.spectral_norm(), case.t, c) * pair_sum(&case.f, &shell, case.b.support());
    let params = vec![
        param("t", case.t),
        param("l1", case.l1 as f64),
        param("l2", case.l2 as f64),
        param("w_norm", c.w),
        param("d_const", c.d),
    ];
    Ok(BoundReport::new(&case.id, "convergence", lhs, rhs, params))
}

/// Ψ^{(t)} = Ψ0 + a sin(ωt + φ) Ψ1.
#[derive(Clone, Debug)]
pub struct Drive {
    pub psi0: Interaction,
    pub psi1: Interaction,
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
}

impl Drive {
    pub fn constant(psi: Interaction) -> Self {
        Drive { psi0: psi, psi1: Interaction::zero(), amplitude: 0.0, omega: 0.0, phase: 0.0 }
    }

    pub fn coefficient(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t + self.phase).sin()
    }

    pub fn interaction_at(&self, t: f64) -> Interaction {
        self.psi0.plus(&self.psi1.scaled(self.coefficient(t)))
    }

    /// sup_t ‖Ψ^{(t)}‖_W: the W-norm is convex in the coefficient, so the
    /// supremum over [−a, a] sits at an endpoint.
    pub fn sup_w(&self, f: &DecayFunction, region: &[Site]) -> Result<f64> {
        let a = self.amplitude.abs();
        let plus = certified_w(&self.psi0.plus(&self.psi1.scaled(a)), f, region)?;
        let minus = certified_w(&self.psi0.plus(&self.psi1.scaled(-a)), f, region)?;
        Ok(plus.max(minus))
    }

    pub fn boundary(&self, lam: &[Site], universe: &[Site]) -> Result<Vec<Site>> {
        let mut out = boundary_set(&self.psi0, lam, Some(universe))?;
        if self.amplitude != 0.0 {
            out.extend(boundary_set(&self.psi1, lam, Some(universe))?);
        }
        Ok(fock::context(&out))
    }

    pub fn protocol(&self, v: &Potential, region: &[Site]) -> Result<TimeProtocol> {
        let h0 = hamiltonian_on(&self.psi0, v, region)?;
        if self.amplitude == 0.0 {
            return Ok(TimeProtocol::constant(&h0));
        }
        let h1 = hamiltonian_on(&self.psi1, &Potential::zero(), region)?;
        let (a, w, p) = (self.amplitude, self.omega, self.phase);
        TimeProtocol::driven(&h0, vec![(Arc::new(move |t: f64| a * (w * t + p).sin()), h1)])
    }
}

#[derive(Clone, Debug)]
pub enum NonautoTarget {
    Lr { region: Vec<Site>, lam1: Vec<Site>, lam2: Vec<Site>, b1: FockOperator, b2: FockOperator },
    Convergence { b: FockOperator, l1: u32, l2: u32 },
}

#[derive(Clone, Debug)]
pub struct NonautoCase {
    pub id: String,
    pub drive: Drive,
    pub v: Potential,
    pub f: DecayFunction,
    pub s: f64,
    pub t: f64,
    pub target: NonautoTarget,
}

/// The autonomous contracts with ‖Ψ‖_W replaced by sup_t ‖Ψ^{(t)}‖_W and |t| by |t − s|.
pub fn nonautonomous_variants(case: &NonautoCase) -> Result<BoundReport> {
    let dt = case.t - case.s;
    let d_const = case.f.convolution_constant_bound();
    match &case.target {
        NonautoTarget::Lr { region, lam1, lam2, b1, b2 } => {
            let region = region_guard(region, 10)?;
            let (lam1, lam2) = (fock::context(lam1), fock::context(lam2));
            if !inside(&lam1, &region) || !inside(&lam2, &region) {
                return Err(Error::Geometry("supports must lie in the region".into()));
            }
            check_lr_hypotheses(b1, b2, &lam1, &lam2)?;
            let c = Constants { d: d_const, w: case.drive.sup_w(&case.f, &region)? };
            let sum = pair_sum(&case.f, &case.drive.boundary(&lam1, &region)?, &lam2);
            let rhs = if dt == 0.0 || sum == 0.0 {
                0.0
            } else {
                lr_envelope(b1.spectral_norm(), b2.spectral_norm(), dt, c) * sum
            };
            let protocol = case.drive.protocol(&case.v, &region)?;
            let tb1 = evolve_nonautonomous(&b1.embed(&region)?, case.s, case.t, &protocol, DEFAULT_TOL)?;
            let lhs = fock::commutator(&tb1, &b2.embed(&region)?).spectral_norm();
            let params = vec![param("s", case.s), param("t", case.t), param("sup_w", c.w), param("amplitude", case.drive.amplitude)];
            Ok(BoundReport::new(&case.id, "nonauto-lieb-robinson", lhs, rhs, params))
        }
        NonautoTarget::Convergence { b, l1, l2 } => {
            let (inner, outer) = check_volumes(b, *l1, *l2, case.f.d)?;
            let c = Constants { d: d_const, w: case.drive.sup_w(&case.f, &outer)? };
            let small = evolve_nonautonomous(b, case.s, case.t, &case.drive.protocol(&case.v, &inner)?, DEFAULT_TOL)?;
            let large = evolve_nonautonomous(b, case.s, case.t, &case.drive.protocol(&case.v, &outer)?, DEFAULT_TOL)?;
            let lhs = (&large - &small.embed(&outer)?).spectral_norm();
            let shell = shell_between(&inner, &outer);
            let rhs = convergence_envelope(b.spectral_norm(), dt, c) * pair_sum(&case.f, &shell, b.support());
            let params = vec![
                param("s", case.s),
                param("t", case.t),
                param("l1", *l1 as f64),
                param("l2", *l2 as f64),
                param("sup_w", c.w),
            ];
            Ok(BoundReport::new(&case.id, "nonauto-convergence", lhs, rhs, params))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsMode {
    Raw,
    Poly,
    Exp,
}

impl RhsMode {
    pub fn label(&self) -> &'static str {
        match self {
            RhsMode::Raw => "multicomm-raw",
            RhsMode::Poly => "multicomm-poly",
            RhsMode::Exp => "multicomm-exp",
        }
    }
}

fn sequences(f: &DecayFunction, radii: &[u32]) -> Result<BTreeMap<u32, DecaySequence>> {
    let mut out = BTreeMap::new();
    for &m in radii {
        if let std::collections::btree_map::Entry::Vacant(e) = out.entry(m) {
            e.insert(f.decay_sequences(m, m + SEQUENCE_SHELLS)?);
        }
    }
    Ok(out)
}

/// 2^k ∏‖B_j‖ Σ_T (κ_T + ℜ_{T,α}), with ℜ from the truncated nested sums (raw)
/// or from the closed forms (poly, exp).
pub fn multicomm_rhs(
    norms: &[f64],
    cfg: &MultiConfig,
    alpha: f64,
    d_const: f64,
    f: &DecayFunction,
    mode: RhsMode,
) -> Result<f64> {
    cfg.validate()?;
    let k = cfg.k();
    if norms.len() != k + 1 {
        return Err(Error::InvalidParameter("need one norm per operator".into()));
    }
    let trees = enumerate_trees(k)?;
    let kap = |t: &Tree| if kappa(t, &cfg.m, &cfg.x) { 1.0 } else { 0.0 };
    let mut total = 0.0;
    match mode {
        RhsMode::Raw => {
            let tables = ShellTables::new(f, &cfg.m, cfg.default_truncation())?;
            for t in &trees {
                total += kap(t) + remainder_r(t, alpha, cfg, d_const, &tables)?;
            }
        }
        RhsMode::Poly | RhsMode::Exp => {
            let want = if mode == RhsMode::Poly { DecayKind::Polynomial } else { DecayKind::ExponentialPolynomial };
            if f.kind != want {
                return Err(Error::InvalidParameter(format!("{} needs a {want:?} decay function", mode.label())));
            }
            let seqs = sequences(f, &cfg.m)?;
            for t in &trees {
                let r = if mode == RhsMode::Poly {
                    remainder_bound_poly(t, alpha, cfg, f, d_const, &seqs)?
                } else {
                    remainder_bound_exp(t, alpha, cfg, f, d_const, &seqs)?
                };
                total += kap(t) + r;
            }
        }
    }
    Ok(2f64.powi(k as i32) * norms.iter().product::<f64>() * total)
}

#[derive(Clone, Debug)]
pub struct MultiCase {
    pub id: String,
    pub psi: Interaction,
    pub v: Potential,
    pub region: Vec<Site>,
    /// B_0, ..., B_k with B_j localized in Λ_{m_j}.
    pub ops: Vec<FockOperator>,
    pub cfg: MultiConfig,
    pub poly: DecayFunction,
    pub exp: DecayFunction,
}

fn check_multi(case: &MultiCase) -> Result<Vec<Site>> {
    let region = region_guard(&case.region, 9)?;
    case.cfg.validate()?;
    if case.ops.len() != case.cfg.k() + 1 {
        return Err(Error::InvalidParameter("need k+1 operators".into()));
    }
    for (j, b) in case.ops.iter().enumerate() {
        let d = case.cfg.x[j].dim();
        if !inside(b.support(), &box_sites(case.cfg.m[j], d)) {
            return Err(Error::Geometry(format!("B_{j} is not localized in Λ_{}", case.cfg.m[j])));
        }
        if j > 0 && !b.is_even() {
            return Err(Error::Hypothesis(format!("B_{j} must be even")));
        }
    }
    Ok(region)
}

/// ‖[τ_{s_k}χ_{x_k}(B_k), ..., τ_{s_1}χ_{x_1}(B_1), χ_{x_0}(B_0)]‖.
pub fn multicomm_lhs(case: &MultiCase) -> Result<f64> {
    let region = check_multi(case)?;
    let evol = Evolution::new(&hamiltonian_on(&case.psi, &case.v, &region)?)?;
    let k = case.cfg.k();
    let mut seq = Vec::with_capacity(k + 1);
    for j in (1..=k).rev() {
        let moved = case.ops[j].translate(&case.cfg.x[j], &region)?;
        seq.push(evol.evolve(&moved, case.cfg.s[j - 1])?);
    }
    seq.push(case.ops[0].translate(&case.cfg.x[0], &region)?);
    Ok(fock::multicommutator(&seq)?.spectral_norm())
}

/// One report per RHS mode: raw and poly with the polynomial F, exp with the
/// exponential F.
pub fn verify_multicomm(case: &MultiCase) -> Result<Vec<BoundReport>> {
    let region = check_multi(case)?;
    let lhs = multicomm_lhs(case)?;
    let norms: Vec<f64> = case.ops.iter().map(|b| b.spectral_norm()).collect();
    let mut out = Vec::new();
    for mode in [RhsMode::Raw, RhsMode::Poly, RhsMode::Exp] {
        let f = if mode == RhsMode::Exp { &case.exp } else { &case.poly };
        let c = Constants::certified(&case.psi, f, &region)?;
        let rhs = multicomm_rhs(&norms, &case.cfg, c.w, c.d, f, mode)?;
        let smax = case.cfg.s.iter().fold(0.0f64, |a, s| a.max(s.abs()));
        let params = vec![param("k", case.cfg.k() as f64), param("s_max", smax), param("w_norm", c.w), param("d_const", c.d)];
        out.push(BoundReport::new(&case.id, mode.label(), lhs, rhs, params));
    }
    Ok(out)
}

/// K₀ = 2d^{ς/2}(2^ς + 2‖u_{·,1}‖₁ W|t|e^{4D|t|W}).
pub fn k0_constant(d: usize, rate: f64, u1: f64, w: f64, d_const: f64, t: f64) -> f64 {
    let t = t.abs();
    2.0 * (d as f64).powf(rate / 2.0) * (2f64.powf(rate) + 2.0 * u1 * w * t * (4.0 * d_const * t * w).exp())
}

/// K₁ = 2(e^ς + 2C₁W|t|e^{4D|t|W}/(e^{2ς} − e^ς)).
pub fn k1_constant(rate: f64, c1: f64, w: f64, d_const: f64, t: f64) -> f64 {
    let t = t.abs();
    2.0 * (rate.exp() + 2.0 * c1 * w * t * (4.0 * d_const * t * w).exp() / ((2.0 * rate).exp() - rate.exp()))
}

/// Σ_T ∏_{bonds} of the polynomial or exponential bond weight of F's kind.
pub fn tree_bond_sum(x: &[Site], f: &DecayFunction) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::InvalidParameter("need at least two sites".into()));
    }
    let rate = f.decay_rate();
    let sd = (f.d as f64).sqrt();
    let mut total = 0.0;
    for t in enumerate_trees(x.len() - 1)? {
        let deg = t.degrees();
        let mut prod = 1.0;
        for (p, j) in t.bonds() {
            let md = deg[p].max(deg[j]) as f64;
            let r = dist(&x[p], &x[j]);
            prod *= match f.kind {
                DecayKind::Polynomial => (1.0 + r).powf(-rate / md),
                DecayKind::ExponentialPolynomial => (-rate * r / (sd * md)).exp(),
            };
        }
        total += prod;
    }
    Ok(total)
}

#[derive(Clone, Debug)]
pub struct TreeDecayCase {
    pub id: String,
    pub psi: Interaction,
    pub v: Potential,
    pub region: Vec<Site>,
    pub b0: FockOperator,
    pub m0: u32,
    /// x_0, ..., x_k.
    pub x: Vec<Site>,
    /// z_1, ..., z_k with |z_j| = 1.
    pub z: Vec<Site>,
    pub s: Vec<f64>,
    pub t: f64,
    pub poly: DecayFunction,
    pub exp: DecayFunction,
}

/// ‖[τ_{s_k}(a*_{x_k}a_{x_k+z_k}), ..., τ_{s_1}(a*_{x_1}a_{x_1+z_1}), χ_{x_0}(B_0)]‖.
pub fn tree_decay_lhs(case: &TreeDecayCase, region: &[Site]) -> Result<f64> {
    let evol = Evolution::new(&hamiltonian_on(&case.psi, &case.v, region)?)?;
    let k = case.s.len();
    let mut seq = Vec::with_capacity(k + 1);
    for j in (1..=k).rev() {
        let b = fock::hopping(&case.x[j], &case.x[j].add(&case.z[j - 1]), region)?;
        seq.push(evol.evolve(&b, case.s[j - 1])?);
    }
    seq.push(case.b0.translate(&case.x[0], region)?);
    Ok(fock::multicommutator(&seq)?.spectral_norm())
}

/// Corollary forms: polynomial with K₀ and exponential with K₁.
pub fn tree_decay_check(case: &TreeDecayCase) -> Result<Vec<BoundReport>> {
    let region = region_guard(&case.region, 9)?;
    let k = case.s.len();
    if k == 0 || case.x.len() != k + 1 || case.z.len() != k {
        return Err(Error::InvalidParameter("need k ≥ 1 times, k+1 sites and k steps".into()));
    }
    if case.z.iter().any(|z| z.norm() != 1.0) {
        return Err(Error::Geometry("every z_j must have unit length".into()));
    }
    if !(case.t >= 0.0) || case.s.iter().any(|s| s.abs() > case.t) {
        return Err(Error::InvalidParameter("need s_j ∈ [−t, t]".into()));
    }
    if !inside(case.b0.support(), &box_sites(case.m0, case.x[0].dim())) {
        return Err(Error::Geometry("B_0 is not localized in Λ_{m0}".into()));
    }
    let lhs = tree_decay_lhs(case, &region)?;
    let nb0 = case.b0.spectral_norm();
    let mut out = Vec::new();

    let cp = Constants::certified(&case.psi, &case.poly, &region)?;
    let rate = case.poly.decay_rate();
    let u1 = case.poly.decay_sequences(1, 1 + SEQUENCE_SHELLS)?.u_l1().expect("polynomial sequence");
    let k0 = k0_constant(case.poly.d, rate, u1, cp.w, cp.d, case.t);
    let rhs = nb0 * (1.0 + case.m0 as f64).powf(rate) * k0.powi(k as i32) * tree_bond_sum(&case.x, &case.poly)?;
    out.push(BoundReport::new(&case.id, "tree-decay-poly", lhs, rhs, vec![param("t", case.t), param("k0", k0)]));

    let ce = Constants::certified(&case.psi, &case.exp, &region)?;
    let rate = case.exp.decay_rate();
    let c1 = case.exp.decay_sequences(1, 1 + SEQUENCE_SHELLS)?.c_m().expect("exponential sequence");
    let k1 = k1_constant(rate, c1, ce.w, ce.d, case.t);
    let rhs = nb0 * (case.m0 as f64 * rate).exp() * k1.powi(k as i32) * tree_bond_sum(&case.x, &case.exp)?;
    out.push(BoundReport::new(&case.id, "tree-decay-exp", lhs, rhs, vec![param("t", case.t), param("k1", k1)]));
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct TelescopingCase {
    pub id: String,
    pub psi: Interaction,
    pub v: Potential,
    pub f: DecayFunction,
    pub b: FockOperator,
    pub t: f64,
    pub x: Site,
    pub m: u32,
    pub n_max: u32,
}

/// Rows: the base block norm, the partial-sum identity against a direct
/// evolution on Λ_N + x, and the bound for every m < n ≤ N.
pub fn telescoping_bound_check(case: &TelescopingCase) -> Result<Vec<BoundReport>> {
    let top = fock::context(&translated_box(case.n_max, &case.x));
    let blocks = dynamics::telescoping_blocks(&case.b, case.t, &case.x, case.m, case.n_max, &case.psi, &case.v)?;
    let nb = case.b.spectral_norm();
    let mut out = Vec::new();
    let base = (blocks[0].spectral_norm() - nb).abs();
    out.push(BoundReport::new(&case.id, "telescoping-base", base, 0.0, vec![param("n", case.m as f64)]));

    let direct = evolve_heisenberg(&hamiltonian_on(&case.psi, &case.v, &top)?, &case.b.translate(&case.x, &top)?, case.t)?;
    let mut sum = blocks[0].clone();
    for blk in &blocks[1..] {
        sum = &sum + blk;
    }
    let defect = sum.max_abs_diff(&direct);
    out.push(BoundReport::new(&case.id, "telescoping-sum", defect, 0.0, vec![param("n", case.n_max as f64)]));

    let c = Constants::certified(&case.psi, &case.f, &top)?;
    let env = convergence_envelope(nb, case.t, c);
    for (i, blk) in blocks.iter().enumerate().skip(1) {
        let n = case.m + i as u32;
        let rhs = env * case.f.shell_pair_sum(case.m, n);
        let params = vec![param("n", n as f64), param("t", case.t), param("w_norm", c.w)];
        out.push(BoundReport::new(&case.id, "telescoping-block", blk.spectral_norm(), rhs, params));
    }
    Ok(out)
}

/// Sites lo..=hi of the one-dimensional chain.
pub fn chain(lo: i64, hi: i64) -> Vec<Site> {
    (lo..=hi).map(|i| Site::new(vec![i])).collect()
}

/// Random operator on `ctx` changing the particle number by exactly q.
pub fn random_charged<R: Rng>(ctx: &[Site], q: i32, rng: &mut R) -> Result<FockOperator> {
    let ctx = fock::context(ctx);
    let n = 1usize << ctx.len();
    let mut m = Mat::<c64>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            if i.count_ones() as i32 - j.count_ones() as i32 == q {
                m[(i, j)] = c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
        }
    }
    FockOperator::from_matrix(&ctx, m)
}

/// Even charge in {−2, 0, 2} that fits into `modes` modes.
fn even_charge<R: Rng>(modes: usize, rng: &mut R) -> i32 {
    if modes < 2 {
        0
    } else {
        [-2, 0, 2][rng.random_range(0..3)]
    }
}

/// Ranges of the seeded hopping+density models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRanges {
    pub onsite: f64,
    pub hopping: f64,
    pub next_hopping: f64,
    pub density: f64,
    pub disorder: f64,
}

impl Default for ModelRanges {
    fn default() -> Self {
        ModelRanges { onsite: 1.0, hopping: 1.0, next_hopping: 0.5, density: 1.0, disorder: 1.0 }
    }
}

impl ModelRanges {
    pub fn small() -> Self {
        ModelRanges { onsite: 0.5, hopping: 0.5, next_hopping: 0.0, density: 0.5, disorder: 1.0 }
    }
}

fn sym<R: Rng>(rng: &mut R, a: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        rng.random_range(-a..=a)
    }
}

/// h(0), h(1) and optionally h(2) uniform in the given ranges, v(1) ∈ [0, density].
pub fn random_model<R: Rng>(rng: &mut R, r: &ModelRanges) -> Result<Interaction> {
    let mut h = vec![(0.0, sym(rng, r.onsite)), (1.0, sym(rng, r.hopping))];
    if r.next_hopping > 0.0 && rng.random_bool(0.5) {
        h.push((2.0, sym(rng, r.next_hopping)));
    }
    let v = vec![(1.0, rng.random_range(0.0..=r.density))];
    Interaction::hopping_density(RadialTable::new(h)?, RadialTable::new(v)?)
}

/// λ ω_x n_x with λ ∈ [0, max] and ω_x uniform in [−1, 1].
pub fn random_potential<R: Rng>(rng: &mut R, sites: &[Site], max: f64) -> Result<Potential> {
    let lambda = if max > 0.0 { rng.random_range(0.0..=max) } else { 0.0 };
    let omega: BTreeMap<Site, f64> = sites.iter().map(|x| (x.clone(), rng.random_range(-1.0..=1.0))).collect();
    Potential::random(lambda, &omega)
}

fn interval<R: Rng>(rng: &mut R, lo: i64, hi: i64, len: i64) -> Vec<Site> {
    let a = rng.random_range(lo..=hi - len + 1);
    chain(a, a + len - 1)
}

/// Chains of 6–10 sites, |t| ≤ 2, polynomial F with ε ∈ [0.5, 1.5].
pub fn lr_cases(seed: u64, n: usize) -> Result<Vec<LrCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranges = ModelRanges::default();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let len = rng.random_range(6..=10i64);
        let region = chain(0, len - 1);
        let f = DecayFunction::polynomial(1, rng.random_range(0.5..=1.5))?;
        let psi = random_model(&mut rng, &ranges)?;
        let v = random_potential(&mut rng, &region, ranges.disorder)?;
        let w1 = rng.random_range(1..=2);
        let lam1 = interval(&mut rng, 0, len - 1, w1);
        let lam2 = loop {
            let w2 = rng.random_range(1..=2);
            let cand = interval(&mut rng, 0, len - 1, w2);
            if cand.iter().all(|x| lam1.binary_search(x).is_err()) {
                break cand;
            }
        };
        let q1 = even_charge(lam1.len(), &mut rng);
        let b1 = random_charged(&lam1, q1, &mut rng)?;
        let q2 = rng.random_range(-1..=1);
        let b2 = random_charged(&lam2, q2, &mut rng)?;
        let t = rng.random_range(-2.0..=2.0);
        out.push(LrCase { id: format!("lr-{i:03}"), psi, v, f, region, lam1, lam2, b1, b2, t });
    }
    Ok(out)
}

fn near_origin_op<R: Rng>(rng: &mut R) -> Result<FockOperator> {
    let ctx = match rng.random_range(0..3) {
        0 => chain(0, 0),
        1 => chain(-1, 0),
        _ => chain(0, 1),
    };
    let q = rng.random_range(-1..=1);
    random_charged(&ctx, q, rng)
}

/// L1 cycles through `l1s`, L2 = L1 + 2, |t| ≤ 1.5.
pub fn convergence_cases(seed: u64, n: usize, l1s: &[u32]) -> Result<Vec<ConvergenceCase>> {
    if l1s.is_empty() || l1s.contains(&0) {
        return Err(Error::InvalidParameter("need L1 values ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranges = ModelRanges::default();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let l1 = l1s[i % l1s.len()];
        let l2 = l1 + 2;
        let f = DecayFunction::polynomial(1, rng.random_range(0.5..=1.5))?;
        let psi = random_model(&mut rng, &ranges)?;
        let v = random_potential(&mut rng, &box_sites(l2, 1), ranges.disorder)?;
        let b = near_origin_op(&mut rng)?;
        let t = rng.random_range(-1.5..=1.5);
        out.push(ConvergenceCase { id: format!("conv-{i:03}"), psi, v, f, b, t, l1, l2 });
    }
    Ok(out)
}

/// One model, operator and time swept over L1 = 1, 2, 3 with L2 = L1 + 2.
pub fn convergence_sweep(seed: u64) -> Result<Vec<ConvergenceCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = DecayFunction::polynomial(1, 1.0)?;
    let psi = Interaction::hopping_density(
        RadialTable::new(vec![(0.0, 0.3), (1.0, -1.0)])?,
        RadialTable::new(vec![(1.0, 0.5)])?,
    )?;
    let v = random_potential(&mut rng, &box_sites(5, 1), 0.5)?;
    let b = random_charged(&chain(0, 0), 1, &mut rng)?;
    let t = 1.0;
    Ok((1..=3)
        .map(|l1| ConvergenceCase {
            id: format!("sweep-{l1}"),
            psi: psi.clone(),
            v: v.clone(),
            f,
            b: b.clone(),
            t,
            l1,
            l2: l1 + 2,
        })
        .collect())
}

/// Nine-site chain, m_j ∈ {0, 1}, |s_j| ≤ 0.5.
pub fn multicomm_cases(seed: u64, k: usize, n: usize) -> Result<Vec<MultiCase>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let region = chain(-4, 4);
    let ranges = ModelRanges::small();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let eps = rng.random_range(0.5..=1.5);
        let poly = DecayFunction::polynomial(1, eps)?;
        let exp = DecayFunction::exponential(1, eps, rng.random_range(0.25..=0.75))?;
        let psi = random_model(&mut rng, &ranges)?;
        let v = random_potential(&mut rng, &region, ranges.disorder)?;
        let m: Vec<u32> = (0..=k).map(|_| rng.random_range(0..=1)).collect();
        let x: Vec<Site> = m
            .iter()
            .map(|&mj| Site::new(vec![rng.random_range(-4 + mj as i64..=4 - mj as i64)]))
            .collect();
        let s: Vec<f64> = (0..k).map(|_| rng.random_range(-0.5..=0.5)).collect();
        let mut ops = Vec::with_capacity(k + 1);
        for (j, &mj) in m.iter().enumerate() {
            let ctx = box_sites(mj, 1);
            let q = if j == 0 { rng.random_range(-1..=1) } else { even_charge(ctx.len(), &mut rng) };
            ops.push(random_charged(&ctx, q, &mut rng)?);
        }
        out.push(MultiCase {
            id: format!("mc{k}-{i:03}"),
            psi,
            v,
            region: region.clone(),
            ops,
            cfg: MultiConfig { s, m, x },
            poly,
            exp,
        });
    }
    Ok(out)
}

/// Eight-site chain, t ∈ [0, 1], s_j ∈ [−t, t].
pub fn tree_decay_cases(seed: u64, k: usize, n: usize) -> Result<Vec<TreeDecayCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let region = chain(-4, 3);
    let ranges = ModelRanges::small();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let eps = rng.random_range(0.5..=1.5);
        let poly = DecayFunction::polynomial(1, eps)?;
        let exp = DecayFunction::exponential(1, eps, rng.random_range(0.25..=0.75))?;
        let psi = random_model(&mut rng, &ranges)?;
        let v = random_potential(&mut rng, &region, ranges.disorder)?;
        let m0 = rng.random_range(0..=1u32);
        let mut x = vec![Site::new(vec![rng.random_range(-4 + m0 as i64..=3 - m0 as i64)])];
        let mut z = Vec::with_capacity(k);
        for _ in 0..k {
            let xj = rng.random_range(-4..=3i64);
            let step = if xj == -4 {
                1
            } else if xj == 3 {
                -1
            } else if rng.random_bool(0.5) {
                1
            } else {
                -1
            };
            x.push(Site::new(vec![xj]));
            z.push(Site::new(vec![step]));
        }
        let t = rng.random_range(0.0..=1.0);
        let s: Vec<f64> = (0..k).map(|_| if t > 0.0 { rng.random_range(-t..=t) } else { 0.0 }).collect();
        let b0 = random_charged(&box_sites(m0, 1), rng.random_range(-1..=1), &mut rng)?;
        out.push(TreeDecayCase { id: format!("td{k}-{i:03}"), psi, v, region: region.clone(), b0, m0, x, z, s, t, poly, exp });
    }
    Ok(out)
}

/// (m, N) ∈ {(0, 3), (1, 3), (1, 4)}, `per` cases each, |t| ≤ 2.
pub fn telescoping_cases(seed: u64, per: usize) -> Result<Vec<TelescopingCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranges = ModelRanges::default();
    let mut out = Vec::new();
    for (m, n_max) in [(0u32, 3u32), (1, 3), (1, 4)] {
        for i in 0..per {
            let f = DecayFunction::polynomial(1, rng.random_range(0.5..=1.5))?;
            let psi = random_model(&mut rng, &ranges)?;
            let x = Site::new(vec![rng.random_range(-2..=2)]);
            let v = random_potential(&mut rng, &translated_box(n_max, &x), ranges.disorder)?;
            let ctx = box_sites(m, 1);
            let b = random_charged(&ctx, rng.random_range(-1..=1), &mut rng)?;
            let t = rng.random_range(-2.0..=2.0);
            out.push(TelescopingCase { id: format!("tel-m{m}-n{n_max}-{i:02}"), psi, v, f, b, t, x, m, n_max });
        }
    }
    Ok(out)
}

/// Sinusoidally driven hopping with |t − s| ≤ 1; even indices give Lieb–Robinson
/// cases on six sites, odd ones convergence cases with L1 ∈ {1, 2}.
pub fn nonauto_cases(seed: u64, n: usize) -> Result<Vec<NonautoCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranges = ModelRanges::default();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let f = DecayFunction::polynomial(1, rng.random_range(0.5..=1.5))?;
        let psi0 = random_model(&mut rng, &ranges)?;
        let psi1 = Interaction::hopping_density(RadialTable::new(vec![(1.0, 1.0)])?, RadialTable::zero())?;
        let drive = Drive {
            psi0,
            psi1,
            amplitude: rng.random_range(0.0..=0.5),
            omega: rng.random_range(0.5..=3.0),
            phase: rng.random_range(0.0..2.0 * PI),
        };
        let s = rng.random_range(-0.5..=0.5);
        let t = s + rng.random_range(-1.0..=1.0);
        let (target, v) = if i % 2 == 0 {
            let region = chain(0, 5);
            let v = random_potential(&mut rng, &region, ranges.disorder)?;
            let w1 = rng.random_range(1..=2);
            let lam1 = interval(&mut rng, 0, 2, w1);
            let w2 = rng.random_range(1..=2);
            let lam2 = interval(&mut rng, 3, 5, w2);
            let b1 = random_charged(&lam1, even_charge(lam1.len(), &mut rng), &mut rng)?;
            let b2 = random_charged(&lam2, rng.random_range(-1..=1), &mut rng)?;
            (NonautoTarget::Lr { region, lam1, lam2, b1, b2 }, v)
        } else {
            let l1 = 1 + (i as u32 / 2) % 2;
            let v = random_potential(&mut rng, &box_sites(l1 + 2, 1), ranges.disorder)?;
            (NonautoTarget::Convergence { b: near_origin_op(&mut rng)?, l1, l2: l1 + 2 }, v)
        };
        out.push(NonautoCase { id: format!("na-{i:03}"), drive, v, f, s, t, target });
    }
    Ok(out)
}
