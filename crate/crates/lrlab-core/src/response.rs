//! Disordered interacting fermions in a box driven by a Peierls perturbation:
//! currents, paramagnetic coefficients, increments and the atomic
//! AC-conductivity measure of the Gibbs state.
//!
//! The perturbation acts on the bonds {x, x+e_q} with x in the active box Λ_l,
//! in both directions. It is self-adjoint and uses the same bonds as the
//! current observables I_{(x+e_q,x)}.

use std::collections::BTreeMap;
use std::sync::Arc;

use faer::{c64, Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{propagator, TimeProtocol};
use crate::fock::{self, FockOperator};
use crate::interactions::{hamiltonian_on, Interaction, Potential, RadialTable};
use crate::lattice::{box_sites, translated_box, Site};
use crate::linalg::{self, CMat, Spectral};
use crate::{Error, Result};

/// Bohr frequencies closer than this are merged.
pub const CLUSTER_GAP: f64 = 1e-9;

/// Imaginary parts of state values below this are discarded silently.
pub const IMAG_TOL: f64 = 1e-9;

/// Magnus tolerance for the perturbed dynamics.
pub const INCREMENT_TOL: f64 = 1e-11;

/// ⟨e_x, Δ_d e_{x±e_q}⟩.
const BOND: f64 = -1.0;

const QUAD_ORDER: usize = 16;

/// Seeded family of disorder realizations sharing L, d, λ, β and Ψ^{IP}.
#[derive(Clone, Debug)]
pub struct ModelFamily {
    pub big_l: u32,
    pub d: usize,
    pub lambda: f64,
    pub beta: f64,
    pub seed: u64,
    pub interaction: Interaction,
}

impl ModelFamily {
    pub fn new(big_l: u32, d: usize, lambda: f64, beta: f64, seed: u64, interaction: Interaction) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter("λ must be finite and nonnegative".into()));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter("β must be finite and positive".into()));
        }
        Ok(ModelFamily { big_l, d, lambda, beta, seed, interaction })
    }

    /// Chain Λ_2 ⊂ Z with nearest-neighbour density coupling `v` n_x n_{x+1}.
    pub fn chain(lambda: f64, beta: f64, v: f64, seed: u64) -> Result<Self> {
        let ip = Interaction::hopping_density(RadialTable::zero(), RadialTable::new(vec![(1.0, 0.5 * v)])?)?;
        ModelFamily::new(2, 1, lambda, beta, seed, ip)
    }

    /// Realization `index`: ω i.i.d. uniform on [-1, 1] from stream `index` of the seed.
    pub fn realization(&self, index: u64) -> Result<DisorderedModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let omega = box_sites(self.big_l, self.d).into_iter().map(|x| (x, rng.random_range(-1.0..=1.0))).collect();
        let mut m = DisorderedModel::new(self.big_l, self.d, self.lambda, self.beta, omega, self.interaction.clone())?;
        m.seed = self.seed;
        m.stream = index;
        Ok(m)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub index: u64,
    pub seed: u64,
    pub omega_hash: String,
}

/// H^{(ω)} = Σ_{Z ⊆ Λ_L} (Ψ^{(d)} + Ψ^{IP})_Z + λ Σ_x ω(x) n_x with Gibbs parameter β.
#[derive(Clone, Debug)]
pub struct DisorderedModel {
    pub big_l: u32,
    pub d: usize,
    pub lambda: f64,
    pub beta: f64,
    pub seed: u64,
    pub stream: u64,
    pub omega: BTreeMap<Site, f64>,
    pub interaction: Interaction,
}

impl DisorderedModel {
    pub fn new(big_l: u32, d: usize, lambda: f64, beta: f64, omega: BTreeMap<Site, f64>, interaction: Interaction) -> Result<Self> {
        ModelFamily::new(big_l, d, lambda, beta, 0, Interaction::zero())?;
        let sites = box_sites(big_l, d);
        if omega.len() != sites.len() || sites.iter().any(|x| !omega.contains_key(x)) {
            return Err(Error::InvalidParameter("ω must be defined exactly on Λ_L".into()));
        }
        if let Some((x, w)) = omega.iter().find(|(_, w)| !(w.abs() <= 1.0)) {
            return Err(Error::InvalidParameter(format!("ω({x}) = {w} outside [-1, 1]")));
        }
        Ok(DisorderedModel { big_l, d, lambda, beta, seed: 0, stream: 0, omega, interaction })
    }

    pub fn sites(&self) -> Vec<Site> {
        box_sites(self.big_l, self.d)
    }

    /// Ψ^{(d)} + Ψ^{IP}.
    pub fn full_interaction(&self) -> Interaction {
        Interaction::discrete_laplacian(self.d).plus(&self.interaction)
    }

    pub fn potential(&self) -> Result<Potential> {
        Potential::random(self.lambda, &self.omega)
    }

    pub fn hamiltonian(&self) -> Result<FockOperator> {
        hamiltonian_on(&self.full_interaction(), &self.potential()?, &self.sites())
    }

    pub fn omega_hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for (x, w) in &self.omega {
            for c in &x.0 {
                feed(&c.to_le_bytes());
            }
            feed(&w.to_bits().to_le_bytes());
        }
        format!("{h:016x}")
    }

    pub fn provenance(&self) -> Provenance {
        Provenance { index: self.stream, seed: self.seed, omega_hash: self.omega_hash() }
    }

    /// Number conservation of H and translation covariance of Ψ^{IP} on radius-1 windows inside Λ_L.
    pub fn check_invariants(&self) -> Result<()> {
        if !self.hamiltonian()?.parity().gauge_invariant {
            return Err(Error::Hypothesis("H does not conserve the particle number".into()));
        }
        if self.big_l == 0 {
            return Ok(());
        }
        let inner = box_sites(self.big_l - 1, self.d);
        let zero = Potential::zero();
        for c in &inner {
            let here = translated_box(1, c);
            let hc = hamiltonian_on(&self.interaction, &zero, &here)?;
            if !hc.parity().gauge_invariant {
                return Err(Error::Hypothesis("Ψ^IP does not conserve the particle number".into()));
            }
            for q in 0..self.d {
                let e = Site::unit(self.d, q);
                let c2 = c.add(&e);
                if inner.binary_search(&c2).is_err() {
                    continue;
                }
                let there = translated_box(1, &c2);
                let moved = hc.translate(&e, &fock::context(&there))?;
                let direct = hamiltonian_on(&self.interaction, &zero, &there)?;
                if moved.max_abs_diff(&direct) > 1e-12 {
                    return Err(Error::Hypothesis(format!("Ψ^IP is not translation covariant at {c}")));
                }
            }
        }
        Ok(())
    }
}

/// Homogeneous field with vector potential 𝒜(t) = A₀ ψ(t/T) sin(ω₀ t) u,
/// ψ a smooth bump supported in (0, 1) with ψ(1/2) = 1.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FieldProtocol {
    pub direction: Vec<f64>,
    pub amplitude: f64,
    pub frequency: f64,
    pub duration: f64,
    pub eta: f64,
    pub l: u32,
}

fn bump(u: f64) -> (f64, f64) {
    if u <= 0.0 || u >= 1.0 {
        return (0.0, 0.0);
    }
    let g = u * (1.0 - u);
    let v = (4.0 - 1.0 / g).exp();
    (v, v * (1.0 - 2.0 * u) / (g * g))
}

impl FieldProtocol {
    pub fn new(direction: Vec<f64>, amplitude: f64, frequency: f64, duration: f64, eta: f64, l: u32) -> Result<Self> {
        if direction.is_empty() || direction.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("field direction must be a finite vector".into()));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidParameter("field duration must be positive".into()));
        }
        if ![amplitude, frequency, eta].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("field parameters must be finite".into()));
        }
        Ok(FieldProtocol { direction, amplitude, frequency, duration, eta, l })
    }

    pub fn with_eta(&self, eta: f64) -> Self {
        FieldProtocol { eta, ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    fn profile(&self, t: f64) -> (f64, f64) {
        let (p, dp) = bump(t / self.duration);
        if p == 0.0 {
            return (0.0, 0.0);
        }
        let (s, c) = (self.frequency * t).sin_cos();
        (self.amplitude * p * s, self.amplitude * (dp / self.duration * s + p * self.frequency * c))
    }

    pub fn vector_potential(&self, t: f64) -> Vec<f64> {
        let a = self.profile(t).0;
        self.direction.iter().map(|u| u * a).collect()
    }

    /// E = −∂_t 𝒜.
    pub fn field(&self, t: f64) -> Vec<f64> {
        let da = self.profile(t).1;
        self.direction.iter().map(|u| -u * da).collect()
    }

    /// ∫₀ᵗ E = −𝒜(t), since 𝒜 vanishes for t ≤ 0.
    pub fn field_integral(&self, t: f64) -> Vec<f64> {
        self.vector_potential(t).into_iter().map(|a| -a).collect()
    }
}

fn unit_direction(z: &Site, d: usize) -> Result<(usize, f64)> {
    if z.dim() != d {
        return Err(Error::InvalidParameter(format!("direction {z} has the wrong dimension")));
    }
    let nz: Vec<(usize, i64)> = z.0.iter().copied().enumerate().filter(|(_, c)| *c != 0).collect();
    match nz.as_slice() {
        [(q, c)] if c.abs() == 1 => Ok((*q, *c as f64)),
        _ => Err(Error::InvalidParameter(format!("{z} is not a unit lattice direction"))),
    }
}

/// e^{iθ} − 1 without cancellation.
fn expm1_i(theta: f64) -> c64 {
    let s = (0.5 * theta).sin();
    c64::new(-2.0 * s * s, theta.sin())
}

/// w_{x,x+z}(η,t) = (exp(∓iη∫₀ᵗE_q) − 1)⟨e_x, Δ_d e_{x+z}⟩ for z = ±e_q; independent of x.
pub fn peierls_weight(protocol: &FieldProtocol, z: &Site, t: f64) -> Result<c64> {
    let (q, sign) = unit_direction(z, protocol.dim())?;
    let theta = -sign * protocol.eta * protocol.field_integral(t)[q];
    Ok(expm1_i(theta) * BOND)
}

/// ∂_η w_{x,x+z}(η,t) at η = 0.
pub fn peierls_weight_slope(protocol: &FieldProtocol, z: &Site, t: f64) -> Result<c64> {
    let (q, sign) = unit_direction(z, protocol.dim())?;
    Ok(c64::new(0.0, -sign * protocol.field_integral(t)[q] * BOND))
}

fn active_bonds(l: u32, d: usize, ctx: &[Site]) -> Result<Vec<(Site, Site, usize)>> {
    let mut out = Vec::new();
    for x in box_sites(l, d) {
        for q in 0..d {
            let y = x.add(&Site::unit(d, q));
            if ctx.binary_search(&x).is_err() || ctx.binary_search(&y).is_err() {
                return Err(Error::Geometry(format!("bond ({x}, {y}) of the active box leaves the working box")));
            }
            out.push((x.clone(), y, q));
        }
    }
    Ok(out)
}

/// W_t^{(l,η)} = Σ_{x∈Λ_l} Σ_q (w_{x,x+e_q} a*_x a_{x+e_q} + w_{x+e_q,x} a*_{x+e_q} a_x) on `ctx`.
pub fn perturbation_operator(protocol: &FieldProtocol, t: f64, ctx: &[Site]) -> Result<FockOperator> {
    let ctx = fock::context(ctx);
    let d = protocol.dim();
    let mut m = FockOperator::zero(&ctx)?.into_matrix();
    for (x, y, q) in active_bonds(protocol.l, d, &ctx)? {
        let e = Site::unit(d, q);
        let wf = peierls_weight(protocol, &e, t)?;
        let wb = peierls_weight(protocol, &Site::origin(d).sub(&e), t)?;
        fock::hopping(&x, &y, &ctx)?.accumulate_into(&ctx, &mut m, wf)?;
        fock::hopping(&y, &x, &ctx)?.accumulate_into(&ctx, &mut m, wb)?;
    }
    FockOperator::from_matrix(&ctx, m)
}

/// I_{(x,y)} = i(a*_y a_x − a*_x a_y).
pub fn current_observable(x: &Site, y: &Site, ctx: &[Site]) -> Result<FockOperator> {
    let ctx = fock::context(ctx);
    Ok((&fock::hopping(y, x, &ctx)? - &fock::hopping(x, y, &ctx)?).scale(c64::new(0.0, 1.0)))
}

/// ρ(B) = tr(e^{−βH} B) / tr(e^{−βH}).
#[derive(Clone, Debug)]
pub struct GibbsState {
    sites: Vec<Site>,
    spectral: Arc<Spectral>,
    energies: Vec<f64>,
    populations: Vec<f64>,
    pub beta: f64,
}

impl GibbsState {
    pub fn new(h: &FockOperator, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter("β must be finite and positive".into()));
        }
        let spectral = Spectral::new(h.matrix())?;
        let energies = spectral.eigenvalues();
        let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = energies.iter().map(|e| (-beta * (e - e0)).exp()).collect();
        let z: f64 = w.iter().sum();
        Ok(GibbsState {
            sites: h.sites().to_vec(),
            spectral: Arc::new(spectral),
            energies,
            populations: w.iter().map(|v| v / z).collect(),
            beta,
        })
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn populations(&self) -> &[f64] {
        &self.populations
    }

    pub fn expect(&self, b: &FockOperator) -> Result<c64> {
        Ok(self.expect_matrix(b.embed(&self.sites)?.matrix()))
    }

    fn expect_matrix(&self, b: &CMat) -> c64 {
        self.expect_eigen(&self.spectral.to_eigenbasis(b))
    }

    fn expect_eigen(&self, x: &CMat) -> c64 {
        self.populations.iter().enumerate().fold(c64::new(0.0, 0.0), |acc, (n, p)| acc + x[(n, n)] * *p)
    }
}

pub fn gibbs_state(h: &FockOperator, beta: f64) -> Result<GibbsState> {
    GibbsState::new(h, beta)
}

/// (1 − e^{−itω})/ω, equal to i∫₀ᵗ e^{−isω} ds.
fn lehmann_kernel(t: f64, omega: f64) -> c64 {
    let z = t * omega;
    if z.abs() < 1e-4 {
        let z2 = z * z;
        return c64::new(t * z * (0.5 - z2 / 24.0), t * (1.0 - z2 / 6.0 + z2 * z2 / 120.0));
    }
    let s = (0.5 * z).sin();
    c64::new(2.0 * s * s / omega, z.sin() / omega)
}

fn scale(a: &CMat, c: c64) -> CMat {
    a * faer::Scale(c)
}

/// Exact finite-volume machinery for one realization and active box Λ_l.
#[derive(Clone, Debug)]
pub struct Workbench {
    pub model: DisorderedModel,
    pub l: u32,
    sites: Vec<Site>,
    gibbs: GibbsState,
    forward: Arc<Vec<CMat>>,
    currents: Vec<CMat>,
    currents_eig: Vec<CMat>,
}

impl Workbench {
    pub fn new(model: &DisorderedModel, l: u32) -> Result<Self> {
        if l >= model.big_l {
            return Err(Error::Geometry(format!("active box radius {l} needs a working box larger than {}", model.big_l)));
        }
        let sites = model.sites();
        let gibbs = GibbsState::new(&model.hamiltonian()?, model.beta)?;
        let bonds = active_bonds(l, model.d, &sites)?;
        let mut forward = vec![linalg::zeros(gibbs.spectral.dim, gibbs.spectral.dim); model.d];
        for (x, y, q) in &bonds {
            fock::hopping(x, y, &sites)?.accumulate_into(&sites, &mut forward[*q], c64::new(1.0, 0.0))?;
        }
        // Σ_x I_{(x+e_q,x)} = i(F_q − F_q*)
        let currents: Vec<CMat> = forward.iter().map(|f| scale(&(f - f.adjoint()), c64::new(0.0, 1.0))).collect();
        let currents_eig = currents.iter().map(|a| gibbs.spectral.to_eigenbasis(a)).collect();
        Ok(Workbench { model: model.clone(), l, sites, gibbs, forward: Arc::new(forward), currents, currents_eig })
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn gibbs(&self) -> &GibbsState {
        &self.gibbs
    }

    pub fn d(&self) -> usize {
        self.model.d
    }

    /// |Λ_l|.
    pub fn volume(&self) -> f64 {
        box_sites(self.l, self.model.d).len() as f64
    }

    /// Σ_{x∈Λ_l} I_{(x+e_q,x)}.
    pub fn current_sum(&self, q: usize) -> Result<FockOperator> {
        FockOperator::from_matrix(&self.sites, self.currents[q].clone())
    }

    fn check_protocol(&self, protocol: &FieldProtocol) -> Result<()> {
        if protocol.dim() != self.model.d || protocol.l != self.l {
            return Err(Error::Geometry("field protocol does not match the workbench".into()));
        }
        Ok(())
    }

    fn bond_matrix(&self, fw: c64, bw: c64) -> CMat {
        let dim = self.gibbs.spectral.dim;
        let mut m = linalg::zeros(dim, dim);
        for f in self.forward.iter() {
            m += scale(f, fw) + scale(&f.adjoint().to_owned(), bw);
        }
        m
    }

    /// ρ(C_{p,l}(t))_{k,q}, row-major in (k, q).
    pub fn coefficient_state(&self, t: f64) -> Vec<c64> {
        let d = self.model.d;
        let (e, p) = (&self.gibbs.energies, &self.gibbs.populations);
        let vol = self.volume();
        let mut out = vec![c64::new(0.0, 0.0); d * d];
        if t == 0.0 {
            return out;
        }
        for n in 0..e.len() {
            for m in 0..e.len() {
                let dp = p[n] - p[m];
                if dp == 0.0 {
                    continue;
                }
                let kern = lehmann_kernel(t, e[n] - e[m]) * dp;
                for k in 0..d {
                    let bk = self.currents_eig[k][(m, n)];
                    if bk == c64::new(0.0, 0.0) {
                        continue;
                    }
                    for q in 0..d {
                        out[k * d + q] += kern * self.currents_eig[q][(n, m)] * bk / vol;
                    }
                }
            }
        }
        out
    }

    /// C_{p,l}(t)_{k,q} = |Λ_l|⁻¹ i[Ã_q, A_k] with Ã_q = ∫₀ᵗ τ_{−s}(A_q) ds in closed form.
    pub fn coefficient_observable(&self, t: f64, k: usize, q: usize) -> Result<FockOperator> {
        let d = self.model.d;
        if k >= d || q >= d {
            return Err(Error::InvalidParameter(format!("axis out of range for d = {d}")));
        }
        let e = &self.gibbs.energies;
        let a = &self.currents_eig[q];
        let tilde = Mat::from_fn(e.len(), e.len(), |n, m| a[(n, m)] * lehmann_kernel(t, e[n] - e[m]) * c64::new(0.0, -1.0));
        let b = &self.currents_eig[k];
        let x = scale(&(&tilde * b - b * &tilde), c64::new(0.0, 1.0 / self.volume()));
        FockOperator::from_matrix(&self.sites, self.gibbs.spectral.from_eigenbasis(&x))
    }

    /// Positive Bohr-frequency atoms of μ and the weight collapsed at ν = 0.
    pub fn lehmann_atoms(&self) -> (Vec<(f64, Vec<f64>)>, Vec<f64>) {
        let d = self.model.d;
        let (e, p) = (&self.gibbs.energies, &self.gibbs.populations);
        let vol = self.volume();
        let mut positive = Vec::new();
        let mut zero = vec![0.0; d * d];
        for n in 0..e.len() {
            for m in n + 1..e.len() {
                let c = (e[n] - e[m]) * (p[m] - p[n]);
                if c == 0.0 {
                    continue;
                }
                let w: Vec<f64> = (0..d * d)
                    .map(|i| c * (self.currents_eig[i % d][(n, m)] * self.currents_eig[i / d][(n, m)].conj()).re / vol)
                    .collect();
                if w.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let nu = (e[n] - e[m]).abs();
                if nu <= CLUSTER_GAP {
                    zero.iter_mut().zip(&w).for_each(|(z, v)| *z += 2.0 * v);
                } else {
                    positive.push((nu, w));
                }
            }
        }
        (positive, zero)
    }

    /// Ω_{t,s} with τ̃_{t,s}(B) = Ω* τ_{t−s}(B) Ω; exactly the identity at η = 0.
    pub fn perturbed_conjugator(&self, protocol: &FieldProtocol, s: f64, t: f64) -> Result<CMat> {
        self.check_protocol(protocol)?;
        let me = self.clone();
        let p = protocol.clone();
        let generator = TimeProtocol::new(&self.sites, move |u| {
            let d = p.dim();
            let mut m = linalg::zeros(me.gibbs.spectral.dim, me.gibbs.spectral.dim);
            for (q, f) in me.forward.iter().enumerate() {
                let e = Site::unit(d, q);
                let wf = peierls_weight(&p, &e, u).unwrap_or_default();
                let wb = peierls_weight(&p, &Site::origin(d).sub(&e), u).unwrap_or_default();
                if wf != c64::new(0.0, 0.0) || wb != c64::new(0.0, 0.0) {
                    m += scale(f, wf) + scale(&f.adjoint().to_owned(), wb);
                }
            }
            if linalg::is_zero(&m) {
                m
            } else {
                me.gibbs.spectral.evolve(&m, u - s)
            }
        });
        Ok(propagator(&generator, s, t, INCREMENT_TOL)?.unitary.into_matrix())
    }

    /// W_t at the protocol's η on the working box.
    pub fn perturbation(&self, protocol: &FieldProtocol, t: f64) -> Result<FockOperator> {
        self.check_protocol(protocol)?;
        let d = protocol.dim();
        let e = Site::unit(d, 0);
        let (wf, wb) = (peierls_weight(protocol, &e, t)?, peierls_weight(protocol, &Site::origin(d).sub(&e), t)?);
        if d == 1 {
            return FockOperator::from_matrix(&self.sites, self.bond_matrix(wf, wb));
        }
        perturbation_operator(protocol, t, &self.sites)
    }

    /// T_{t,s} = τ̃_{t,s}(U) − τ_{t,s}(U).
    pub fn increment(&self, protocol: &FieldProtocol, u: &FockOperator, s: f64, t: f64) -> Result<FockOperator> {
        let u = u.embed(&self.sites)?;
        let x = self.gibbs.spectral.evolve(u.matrix(), t - s);
        let om = self.perturbed_conjugator(protocol, s, t)?;
        let y = om.adjoint() * &x * &om;
        FockOperator::from_matrix(&self.sites, &y - &x)?.with_support(&self.sites)
    }

    /// ∂_η T_{t,s} at η = 0: i∫_s^t τ_{s₁−s}([∂_η W_{s₁}, τ_{t−s₁}(U)]) ds₁.
    pub fn increment_slope(&self, protocol: &FieldProtocol, u: &FockOperator, s: f64, t: f64) -> Result<FockOperator> {
        self.check_protocol(protocol)?;
        let u = u.embed(&self.sites)?;
        let d = protocol.dim();
        let dim = self.gibbs.spectral.dim;
        let mut acc = linalg::zeros(dim, dim);
        let panels = ((t - s).abs() * 16.0).ceil().max(8.0) as usize;
        for (s1, w) in linalg::composite_rule(s, t, panels, QUAD_ORDER) {
            let mut wp = linalg::zeros(dim, dim);
            for (q, f) in self.forward.iter().enumerate() {
                let e = Site::unit(d, q);
                let sf = peierls_weight_slope(protocol, &e, s1)?;
                let sb = peierls_weight_slope(protocol, &Site::origin(d).sub(&e), s1)?;
                wp += scale(f, sf) + scale(&f.adjoint().to_owned(), sb);
            }
            if linalg::is_zero(&wp) {
                continue;
            }
            let inner = self.gibbs.spectral.evolve(u.matrix(), t - s1);
            let c = &wp * &inner - &inner * &wp;
            acc += scale(&self.gibbs.spectral.evolve(&c, s1 - s), c64::new(0.0, w));
        }
        FockOperator::from_matrix(&self.sites, acc)?.with_support(&self.sites)
    }

    /// ρ(𝕁_k(t, η)) with 𝕁_k = |Λ_l|⁻¹ Σ_{x∈Λ_l} (τ̃_{t,0} − τ_t)(I_{(x+e_k,x)}).
    pub fn current_increment(&self, protocol: &FieldProtocol, t: f64) -> Result<Vec<f64>> {
        let om = self.perturbed_conjugator(protocol, 0.0, t)?;
        let vol = self.volume();
        Ok(self
            .currents
            .iter()
            .map(|a| {
                let x = self.gibbs.spectral.evolve(a, t);
                let y = om.adjoint() * &x * &om;
                ((self.gibbs.expect_matrix(&y) - self.gibbs.expect_matrix(a)) / vol).re
            })
            .collect())
    }

    /// J_p(t)_k = Σ_q ∫₀ᵗ ρ(C_{p,l}(t−s))_{k,q} E_q(s) ds.
    pub fn linear_response_current(&self, protocol: &FieldProtocol, t: f64) -> Result<Vec<f64>> {
        self.check_protocol(protocol)?;
        let d = self.model.d;
        let mut out = vec![0.0; d];
        let hi = t.min(protocol.duration);
        if hi <= 0.0 {
            return Ok(out);
        }
        let panels = (32.0 * hi).ceil().max(8.0) as usize;
        for (s, w) in linalg::composite_rule(0.0, hi, panels, QUAD_ORDER) {
            let e = protocol.field(s);
            if e.iter().all(|v| *v == 0.0) {
                continue;
            }
            let c = self.coefficient_state(t - s);
            for k in 0..d {
                out[k] += w * (0..d).map(|q| c[k * d + q].re * e[q]).sum::<f64>();
            }
        }
        Ok(out)
    }

    /// Remainders of the order-m Taylor expansion of T_{t,s}(η) about η = 0.
    pub fn taylor_report(&self, protocol: &FieldProtocol, u: &FockOperator, s: f64, t: f64, etas: &[f64]) -> Result<TaylorReport> {
        let inc = |eta: f64| self.increment(&protocol.with_eta(eta), u, s, t);
        let zero_increment = inc(0.0)?.max_abs();
        let c1 = self.increment_slope(protocol, u, s, t)?;
        let h1 = 1e-3;
        let (p1, m1, p2, m2) = (inc(h1)?, inc(-h1)?, inc(2.0 * h1)?, inc(-2.0 * h1)?);
        let fd = (&(&p1 - &m1).scale_real(8.0) - &(&p2 - &m2)).scale_real(1.0 / (12.0 * h1));
        let derivative_defect = (&fd - &c1).spectral_norm();
        let h2 = 1e-2;
        let (p1, m1, p2, m2) = (inc(h2)?, inc(-h2)?, inc(2.0 * h2)?, inc(-2.0 * h2)?);
        let c2 = (&(&p1 + &m1).scale_real(16.0) - &(&p2 + &m2)).scale_real(1.0 / (24.0 * h2 * h2));
        let mut remainders = vec![Vec::new(); 3];
        for &eta in etas {
            let full = inc(eta)?;
            let r1 = &full - &c1.scale_real(eta);
            let r2 = &r1 - &c2.scale_real(eta * eta);
            remainders[0].push(full.spectral_norm());
            remainders[1].push(r1.spectral_norm());
            remainders[2].push(r2.spectral_norm());
        }
        let slopes = remainders.iter().map(|r| loglog_slope(etas, r)).collect();
        Ok(TaylorReport { etas: etas.to_vec(), remainders, slopes, derivative_defect, zero_increment })
    }
}

fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.abs().ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.max(1e-300).ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

#[derive(Clone, Debug, Serialize)]
pub struct TaylorReport {
    pub etas: Vec<f64>,
    /// remainders[m][i] = ‖T(η_i) − Σ_{k≤m} η_iᵏ T_k‖.
    pub remainders: Vec<Vec<f64>>,
    pub slopes: Vec<f64>,
    /// ‖five-point central difference − single-integral slope‖ at step 10⁻³.
    pub derivative_defect: f64,
    pub zero_increment: f64,
}

/// ρ(C_{p,l}(t))_{k,q} and the observable C_{p,l}(t)_{k,q}.
pub fn paramagnetic_coefficient(model: &DisorderedModel, l: u32, t: f64, k: usize, q: usize) -> Result<(c64, FockOperator)> {
    let wb = Workbench::new(model, l)?;
    let d = model.d;
    if k >= d || q >= d {
        return Err(Error::InvalidParameter(format!("axis out of range for d = {d}")));
    }
    Ok((wb.coefficient_state(t)[k * d + q], wb.coefficient_observable(t, k, q)?))
}

pub fn linear_response_current(model: &DisorderedModel, protocol: &FieldProtocol, t: f64) -> Result<Vec<f64>> {
    Workbench::new(model, protocol.l)?.linear_response_current(protocol, t)
}

/// T_{t,s}^{(l,η,L)} with U = U^Φ_{Λ_L}.
pub fn increment(model: &DisorderedModel, protocol: &FieldProtocol, phi: &Interaction, s: f64, t: f64, eta: f64) -> Result<FockOperator> {
    let wb = Workbench::new(model, protocol.l)?;
    let u = hamiltonian_on(phi, &Potential::zero(), wb.sites())?;
    wb.increment(&protocol.with_eta(eta), &u, s, t)
}

#[derive(Clone, Debug, Serialize)]
pub struct XiReport {
    pub d: usize,
    pub times: Vec<f64>,
    /// Disorder mean of Re ρ(C_{p,l}(t)), row-major per time.
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    /// Largest discarded imaginary part.
    pub max_imag: f64,
    pub provenance: Vec<Provenance>,
}

impl XiReport {
    pub fn imag_ok(&self) -> bool {
        self.max_imag <= IMAG_TOL
    }
}

/// Ξ_p on a time grid, averaged over realizations 0..n of the family.
pub fn xi_p(family: &ModelFamily, l: u32, times: &[f64], n: usize) -> Result<XiReport> {
    if n == 0 {
        return Err(Error::InvalidParameter("at least one realization is required".into()));
    }
    let samples: Vec<Result<(Vec<Vec<c64>>, Provenance)>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let m = family.realization(i)?;
            let wb = Workbench::new(&m, l)?;
            Ok((times.iter().map(|&t| wb.coefficient_state(t)).collect(), m.provenance()))
        })
        .collect();
    let samples: Vec<(Vec<Vec<c64>>, Provenance)> = samples.into_iter().collect::<Result<_>>()?;
    let dd = family.d * family.d;
    let nf = n as f64;
    let mut mean = vec![vec![0.0; dd]; times.len()];
    let mut stderr = vec![vec![0.0; dd]; times.len()];
    let mut max_imag: f64 = 0.0;
    for (vals, _) in &samples {
        for (ti, v) in vals.iter().enumerate() {
            for i in 0..dd {
                mean[ti][i] += v[i].re / nf;
                max_imag = max_imag.max(v[i].im.abs());
            }
        }
    }
    if n > 1 {
        for (vals, _) in &samples {
            for (ti, v) in vals.iter().enumerate() {
                for i in 0..dd {
                    stderr[ti][i] += (v[i].re - mean[ti][i]).powi(2);
                }
            }
        }
        for row in &mut stderr {
            for s in row.iter_mut() {
                *s = (*s / (nf - 1.0) / nf).sqrt();
            }
        }
    }
    Ok(XiReport {
        d: family.d,
        times: times.to_vec(),
        mean,
        stderr,
        max_imag,
        provenance: samples.into_iter().map(|(_, p)| p).collect(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Atom {
    pub nu: f64,
    pub weight_matrix: Vec<Vec<f64>>,
}

/// Finite symmetric atomic measure on R with d×d weights; the atom at ν = 0 is always present.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralMeasure {
    pub d: usize,
    pub atoms: Vec<Atom>,
    /// Number of Bohr frequencies absorbed into a neighbouring cluster.
    pub merged: usize,
}

fn to_matrix(w: &[f64], d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|k| w[k * d..(k + 1) * d].to_vec()).collect()
}

fn transpose(w: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = w.len();
    (0..d).map(|k| (0..d).map(|q| w[q][k]).collect()).collect()
}

fn min_eigenvalue(w: &[Vec<f64>]) -> f64 {
    let d = w.len();
    let m = Mat::<f64>::from_fn(d, d, |i, j| 0.5 * (w[i][j] + w[j][i]));
    match m.self_adjoint_eigenvalues(Side::Lower) {
        Ok(v) => v.into_iter().fold(f64::INFINITY, f64::min),
        Err(_) => f64::NEG_INFINITY,
    }
}

impl SpectralMeasure {
    /// Clusters positive frequencies closer than CLUSTER_GAP and mirrors them to −ν.
    pub fn from_lehmann(d: usize, mut positive: Vec<(f64, Vec<f64>)>, zero: Vec<f64>) -> Self {
        positive.sort_by(|a, b| a.0.total_cmp(&b.0));
        // (last ν, Σν, count, Σw)
        let mut clusters: Vec<(f64, f64, usize, Vec<f64>)> = Vec::new();
        let mut merged = 0;
        for (nu, w) in positive {
            match clusters.last_mut() {
                Some(c) if nu - c.0 < CLUSTER_GAP => {
                    c.0 = nu;
                    c.1 += nu;
                    c.2 += 1;
                    c.3.iter_mut().zip(&w).for_each(|(a, b)| *a += b);
                    merged += 1;
                }
                _ => clusters.push((nu, nu, 1, w)),
            }
        }
        let pos: Vec<Atom> =
            clusters.into_iter().map(|(_, s, c, w)| Atom { nu: s / c as f64, weight_matrix: to_matrix(&w, d) }).collect();
        let mut atoms: Vec<Atom> =
            pos.iter().rev().map(|a| Atom { nu: -a.nu, weight_matrix: transpose(&a.weight_matrix) }).collect();
        atoms.push(Atom { nu: 0.0, weight_matrix: to_matrix(&zero, d) });
        atoms.extend(pos);
        SpectralMeasure { d, atoms, merged }
    }

    pub fn zero_mass(&self) -> &[Vec<f64>] {
        &self.atoms.iter().find(|a| a.nu == 0.0).expect("zero atom").weight_matrix
    }

    pub fn total_mass(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.d]; self.d];
        for a in &self.atoms {
            for (o, w) in out.iter_mut().zip(&a.weight_matrix) {
                o.iter_mut().zip(w).for_each(|(x, y)| *x += y);
            }
        }
        out
    }

    /// −(t²/2)μ({0}) + Σ_{ν≠0} (cos tν − 1)ν⁻² μ({ν}).
    pub fn reconstruct(&self, t: f64) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.d]; self.d];
        for a in &self.atoms {
            let f = if a.nu == 0.0 {
                -0.5 * t * t
            } else {
                let s = (0.5 * t * a.nu).sin();
                -2.0 * s * s / (a.nu * a.nu)
            };
            for (o, w) in out.iter_mut().zip(&a.weight_matrix) {
                o.iter_mut().zip(w).for_each(|(x, y)| *x += f * y);
            }
        }
        out
    }

    /// Largest negative part of a weight eigenvalue.
    pub fn psd_defect(&self) -> f64 {
        self.atoms.iter().map(|a| (-min_eigenvalue(&a.weight_matrix)).max(0.0)).fold(0.0, f64::max)
    }

    /// max over atoms of |μ({−ν}) − μ({ν})ᵀ|, an unmatched atom counting with its full size.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in &self.atoms {
            let size = a.weight_matrix.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            let partner = self.atoms.iter().find(|b| b.nu == -a.nu);
            let defect = match partner {
                Some(b) => {
                    let bt = transpose(&b.weight_matrix);
                    a.weight_matrix.iter().flatten().zip(bt.iter().flatten()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
                }
                None => size,
            };
            worst = worst.max(defect);
        }
        worst
    }

    /// μ_AC = ν⁻² μ restricted to ν ≠ 0.
    pub fn ac_part(&self) -> Vec<Atom> {
        self.atoms
            .iter()
            .filter(|a| a.nu != 0.0)
            .map(|a| Atom {
                nu: a.nu,
                weight_matrix: a.weight_matrix.iter().map(|r| r.iter().map(|w| w / (a.nu * a.nu)).collect()).collect(),
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentReport {
    /// moments[j] = ∫ νʲ μ_AC(dν), j = 0..=M.
    pub moments: Vec<Vec<Vec<f64>>>,
    /// Largest odd moment entry relative to the matching absolute moment.
    pub odd_defect: f64,
    /// Largest negative eigenvalue of an even moment relative to its size.
    pub even_psd_defect: f64,
    pub finite: bool,
}

pub fn moment_report(measure: &SpectralMeasure, max_order: u32) -> MomentReport {
    let ac = measure.ac_part();
    let d = measure.d;
    let mut moments = Vec::new();
    let (mut odd_defect, mut even_psd_defect): (f64, f64) = (0.0, 0.0);
    let mut finite = true;
    for j in 0..=max_order {
        let mut m = vec![vec![0.0; d]; d];
        let mut abs = vec![vec![0.0; d]; d];
        for a in &ac {
            let p = a.nu.powi(j as i32);
            for k in 0..d {
                for q in 0..d {
                    m[k][q] += p * a.weight_matrix[k][q];
                    abs[k][q] += (p * a.weight_matrix[k][q]).abs();
                }
            }
        }
        finite &= m.iter().flatten().all(|v| v.is_finite());
        let scale = abs.iter().flatten().fold(0.0f64, |s, v| s.max(*v));
        if scale > 0.0 {
            if j % 2 == 1 {
                odd_defect = odd_defect.max(m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs())) / scale);
            } else {
                even_psd_defect = even_psd_defect.max((-min_eigenvalue(&m)).max(0.0) / scale);
            }
        }
        moments.push(m);
    }
    MomentReport { moments, odd_defect, even_psd_defect, finite }
}

/// Atomic proxy of the AC-conductivity measure averaged over realizations 0..n.
pub fn ac_measure(family: &ModelFamily, l: u32, n: usize) -> Result<(SpectralMeasure, Vec<Provenance>)> {
    if n == 0 {
        return Err(Error::InvalidParameter("at least one realization is required".into()));
    }
    let parts: Vec<Result<((Vec<(f64, Vec<f64>)>, Vec<f64>), Provenance)>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let m = family.realization(i)?;
            Ok((Workbench::new(&m, l)?.lehmann_atoms(), m.provenance()))
        })
        .collect();
    let dd = family.d * family.d;
    let inv = 1.0 / n as f64;
    let mut positive = Vec::new();
    let mut zero = vec![0.0; dd];
    let mut prov = Vec::new();
    for part in parts {
        let ((pos, z), p) = part?;
        positive.extend(pos.into_iter().map(|(nu, w)| (nu, w.into_iter().map(|v| v * inv).collect::<Vec<f64>>())));
        zero.iter_mut().zip(&z).for_each(|(a, b)| *a += b * inv);
        prov.push(p);
    }
    Ok((SpectralMeasure::from_lehmann(family.d, positive, zero), prov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::ParityTag;

    fn family(lambda: f64) -> ModelFamily {
        ModelFamily::chain(lambda, 1.0, 1.0, 11).unwrap()
    }

    fn protocol(eta: f64) -> FieldProtocol {
        FieldProtocol::new(vec![1.0], 0.5, 2.0, 2.0, eta, 1).unwrap()
    }

    fn bench(lambda: f64) -> Workbench {
        Workbench::new(&family(lambda).realization(0).unwrap(), 1).unwrap()
    }

    #[test]
    fn realizations_are_reproducible_and_bounded() {
        let f = family(0.5);
        let (a, b, c) = (f.realization(3).unwrap(), f.realization(3).unwrap(), f.realization(4).unwrap());
        assert_eq!(a.omega, b.omega);
        assert_ne!(a.omega, c.omega);
        assert_eq!(a.omega_hash(), b.omega_hash());
        assert!(a.omega.values().all(|w| w.abs() <= 1.0));
        a.check_invariants().unwrap();
    }

    #[test]
    fn invariants_reject_non_conserving_interaction() {
        let (x, y) = (Site::new(vec![0]), Site::new(vec![1]));
        let ctx = fock::context(&[x.clone(), y.clone()]);
        let pair = &fock::creation(&x, &ctx).unwrap() * &fock::creation(&y, &ctx).unwrap();
        let op = &pair + &pair.adjoint();
        let bad = Interaction::explicit(vec![crate::interactions::Term { sites: ctx.clone(), op }]).unwrap();
        let omega: BTreeMap<Site, f64> = box_sites(2, 1).into_iter().map(|x| (x, 0.0)).collect();
        let m = DisorderedModel::new(2, 1, 0.0, 1.0, omega, bad).unwrap();
        assert!(matches!(m.check_invariants(), Err(Error::Hypothesis(_))));
        let omega: BTreeMap<Site, f64> = box_sites(1, 1).into_iter().map(|x| (x, 2.0)).collect();
        assert!(DisorderedModel::new(1, 1, 1.0, 1.0, omega, Interaction::zero()).is_err());
    }

    #[test]
    fn field_vanishes_outside_support_and_is_minus_derivative() {
        let p = protocol(1.0);
        assert_eq!(p.vector_potential(-0.3), vec![0.0]);
        assert_eq!(p.vector_potential(0.0), vec![0.0]);
        assert_eq!(p.field(2.5), vec![0.0]);
        for t in [0.3, 0.9, 1.4] {
            let h = 1e-5;
            let fd = -(p.vector_potential(t + h)[0] - p.vector_potential(t - h)[0]) / (2.0 * h);
            assert!((fd - p.field(t)[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn peierls_weights_vanish_at_zero_coupling_and_are_hermitian() {
        let e = Site::unit(1, 0);
        let me = Site::new(vec![-1]);
        assert_eq!(peierls_weight(&protocol(0.0), &e, 0.7).unwrap(), c64::new(0.0, 0.0) * BOND);
        assert_eq!(peierls_weight(&protocol(0.8), &e, 3.0).unwrap().norm(), 0.0);
        for (eta, t) in [(0.3, 0.4), (-1.2, 1.1), (2.0, 1.7)] {
            let p = protocol(eta);
            let (a, b) = (peierls_weight(&p, &e, t).unwrap(), peierls_weight(&p, &me, t).unwrap());
            assert!((a.conj() - b).norm() < 1e-15);
            let direct = (c64::new(0.0, -eta * p.field_integral(t)[0]).exp() - 1.0) * BOND;
            assert!((a - direct).norm() < 1e-14);
        }
        assert!(peierls_weight(&protocol(1.0), &Site::new(vec![2]), 0.5).is_err());
    }

    #[test]
    fn perturbation_is_self_adjoint_and_bounded() {
        let sites = box_sites(2, 1);
        assert!(perturbation_operator(&protocol(0.0), 0.8, &sites).unwrap().is_zero());
        let p = protocol(0.9);
        let w = perturbation_operator(&p, 0.8, &sites).unwrap();
        assert!(w.hermiticity_defect() < 1e-13);
        let k1 = peierls_weight(&p, &Site::unit(1, 0), 0.8).unwrap().norm();
        assert!(w.spectral_norm() <= k1 * 3.0 * 3.0 + 1e-12);
        let wb = bench(0.0);
        assert!(wb.perturbation(&p, 0.8).unwrap().max_abs_diff(&w) < 1e-14);
        assert!(matches!(perturbation_operator(&p, 0.8, &box_sites(1, 1)), Err(Error::Geometry(_))));
    }

    #[test]
    fn currents_are_self_adjoint_even_and_gauge_invariant() {
        let ctx = box_sites(1, 1);
        let (x, y) = (Site::new(vec![0]), Site::new(vec![1]));
        assert!(current_observable(&x, &x, &ctx).unwrap().is_zero());
        let i = current_observable(&x, &y, &ctx).unwrap();
        assert!(i.hermiticity_defect() < 1e-13);
        let par = i.parity();
        assert_eq!(par.tag, ParityTag::Even);
        assert!(par.gauge_invariant);
        assert!(i.max_abs_diff(&-&current_observable(&y, &x, &ctx).unwrap()) < 1e-15);
    }

    #[test]
    fn gibbs_state_is_normalized_positive_and_invariant() {
        let m = family(0.7).realization(1).unwrap();
        let h = m.hamiltonian().unwrap();
        let rho = gibbs_state(&h, 1.3).unwrap();
        let one = FockOperator::identity(&m.sites()).unwrap();
        assert!((rho.expect(&one).unwrap() - 1.0).norm() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ctx = m.sites();
        let b = crate::bounds::random_charged(&ctx, 1, &mut rng).unwrap();
        let bb = &b.adjoint() * &b;
        assert!(rho.expect(&bb).unwrap().re >= -1e-12);
        let ev = crate::dynamics::Evolution::new(&h).unwrap();
        let c = &b + &b.adjoint();
        let t = 1.7;
        assert!((rho.expect(&ev.evolve(&c, t).unwrap()).unwrap() - rho.expect(&c).unwrap()).norm() < 1e-9);
        // trace oracle with e^{−βH} from a scaled Taylor series and repeated squaring
        let n = h.dim();
        let a = scale(h.matrix(), c64::new(-1.3 / 1024.0, 0.0));
        let mut e = linalg::identity(n);
        let mut term = linalg::identity(n);
        for k in 1..20 {
            term = scale(&(&term * &a), c64::new(1.0 / k as f64, 0.0));
            e += &term;
        }
        for _ in 0..10 {
            e = &e * &e;
        }
        let tr = |m: &CMat| (0..n).fold(c64::new(0.0, 0.0), |s, i| s + m[(i, i)]);
        let oracle = tr(&(&e * c.matrix())) / tr(&e);
        assert!((oracle - rho.expect(&c).unwrap()).norm() < 1e-10);
    }

    #[test]
    fn coefficient_matches_time_quadrature() {
        let wb = bench(0.5);
        let a = wb.current_sum(0).unwrap();
        let t = 1.3;
        let mut acc = FockOperator::zero(wb.sites()).unwrap();
        for (s, w) in linalg::composite_rule(0.0, t, 40, 16) {
            let ev = FockOperator::from_matrix(wb.sites(), wb.gibbs().spectral().evolve(a.matrix(), -s)).unwrap();
            acc = &acc + &fock::commutator(&ev, &a).scale(c64::new(0.0, w));
        }
        let quad = acc.scale_real(1.0 / wb.volume());
        let obs = wb.coefficient_observable(t, 0, 0).unwrap();
        assert!(obs.max_abs_diff(&quad) < 1e-8);
        assert!(obs.hermiticity_defect() < 1e-12);
        let state = wb.coefficient_state(t)[0];
        assert!((wb.gibbs().expect(&obs).unwrap() - state).norm() < 1e-10);
        assert!(state.im.abs() < 1e-12 && state.re <= 0.0);
        assert_eq!(wb.coefficient_state(0.0)[0], c64::new(0.0, 0.0));
    }

    #[test]
    fn xi_single_realization_and_clean_limit() {
        let f = family(0.5);
        let r = xi_p(&f, 1, &[0.0, 0.8], 1).unwrap();
        assert_eq!(r.mean[0][0], 0.0);
        let (direct, _) = paramagnetic_coefficient(&f.realization(0).unwrap(), 1, 0.8, 0, 0).unwrap();
        assert_eq!(r.mean[1][0], direct.re);
        let clean = xi_p(&family(0.0), 1, &[0.8], 4).unwrap();
        assert_eq!(clean.stderr[0][0], 0.0);
        assert!(clean.imag_ok());
        assert_eq!(clean.provenance.len(), 4);
    }

    #[test]
    fn ac_measure_reconstructs_xi() {
        let f = family(0.5);
        let times: Vec<f64> = (0..16).map(|i| 0.25 * i as f64).collect();
        let xi = xi_p(&f, 1, &times, 3).unwrap();
        let (mu, prov) = ac_measure(&f, 1, 3).unwrap();
        assert_eq!(prov.len(), 3);
        for (i, &t) in times.iter().enumerate() {
            assert!((mu.reconstruct(t)[0][0] - xi.mean[i][0]).abs() < 1e-8, "t = {t}");
        }
        assert!(mu.psd_defect() <= 1e-9);
        assert!(mu.symmetry_defect() <= 1e-9);
        let rep = moment_report(&mu, 8);
        assert!(rep.finite && rep.odd_defect <= 1e-9 && rep.even_psd_defect <= 1e-9);
        let total: f64 = mu.atoms.iter().map(|a| a.weight_matrix[0][0]).sum();
        assert!((mu.total_mass()[0][0] - total).abs() < 1e-15);
    }

    #[test]
    fn clustering_merges_close_frequencies() {
        let mu = SpectralMeasure::from_lehmann(1, vec![(1.0, vec![1.0]), (1.0 + 1e-10, vec![2.0]), (2.0, vec![0.5])], vec![0.0]);
        assert_eq!(mu.merged, 1);
        assert_eq!(mu.atoms.len(), 5);
        assert_eq!(mu.atoms[3].weight_matrix[0][0], 3.0);
        assert_eq!(mu.atoms[1].nu, -mu.atoms[3].nu);
    }

    #[test]
    fn increment_vanishes_at_zero_coupling_and_equal_times() {
        let m = family(0.5).realization(0).unwrap();
        let phi = m.full_interaction();
        assert!(increment(&m, &protocol(1.0), &phi, 0.0, 2.0, 0.0).unwrap().is_zero());
        assert!(increment(&m, &protocol(1.0), &phi, 0.7, 0.7, 0.4).unwrap().is_zero());
        assert!(!increment(&m, &protocol(1.0), &phi, 0.0, 2.0, 0.4).unwrap().is_zero());
    }

    #[test]
    fn linear_response_matches_current_slope() {
        let wb = bench(0.5);
        let t = 2.5;
        let eta = 1e-3;
        let j = wb.linear_response_current(&protocol(1.0), t).unwrap()[0];
        let up = wb.current_increment(&protocol(eta), t).unwrap()[0];
        let down = wb.current_increment(&protocol(-eta), t).unwrap()[0];
        let slope = (up - down) / (2.0 * eta);
        assert!(j.abs() > 1e-4);
        assert!((slope - j).abs() <= 1e-3 * j.abs(), "{slope} vs {j}");
        assert_eq!(wb.linear_response_current(&protocol(1.0), 0.0).unwrap(), vec![0.0]);
        let quiet = FieldProtocol { amplitude: 0.0, ..protocol(1.0) };
        assert_eq!(wb.linear_response_current(&quiet, t).unwrap(), vec![0.0]);
    }

    #[test]
    fn taylor_remainders_scale() {
        let wb = bench(0.5);
        let u = hamiltonian_on(&wb.model.full_interaction(), &Potential::zero(), wb.sites()).unwrap();
        let rep = wb.taylor_report(&protocol(1.0), &u, 0.0, 2.5, &[1e-1, 1e-2, 1e-3]).unwrap();
        assert_eq!(rep.zero_increment, 0.0);
        assert!(rep.derivative_defect <= 1e-6, "{}", rep.derivative_defect);
        for (m, s) in rep.slopes.iter().enumerate() {
            assert!(*s >= m as f64 + 0.9, "m = {m}: slope {s} {:?}", rep.remainders[m]);
        }
    }
}
