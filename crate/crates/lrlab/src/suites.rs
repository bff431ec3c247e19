//! Suite runners. Cases are generated sequentially from the seed and
//! evaluated in parallel; rows keep case order.

use std::f64::consts::PI;

use lrlab_core::bounds::{self, BoundReport, Drive, ModelRanges};
use lrlab_core::dynamics::{dyson_envelope, dyson_phillips, exact_propagator, propagator, TimeProtocol};
use lrlab_core::fock::{self, FockOperator};
use lrlab_core::interactions::{hamiltonian_on, Interaction, Potential, RadialTable};
use lrlab_core::lattice::{box_sites, Site};
use lrlab_core::linalg::composite_rule;
use lrlab_core::response::{self, FieldProtocol, ModelFamily, Workbench};
use lrlab_core::trees;
use lrlab_core::{c64, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    VerifyLr,
    VerifyMulticomm,
    TreeSuite,
    Convergence,
    Telescoping,
    Nonauto,
    Conductivity,
    AcMeasure,
    Increments,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::VerifyLr,
        Suite::VerifyMulticomm,
        Suite::TreeSuite,
        Suite::Convergence,
        Suite::Telescoping,
        Suite::Nonauto,
        Suite::Conductivity,
        Suite::AcMeasure,
        Suite::Increments,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::VerifyLr => "verify-lr",
            Suite::VerifyMulticomm => "verify-multicomm",
            Suite::TreeSuite => "tree-suite",
            Suite::Convergence => "convergence",
            Suite::Telescoping => "telescoping",
            Suite::Nonauto => "nonauto",
            Suite::Conductivity => "conductivity",
            Suite::AcMeasure => "ac-measure",
            Suite::Increments => "increments",
        }
    }

    /// Whether the suite draws seeded random cases.
    pub fn randomized(self) -> bool {
        self != Suite::TreeSuite
    }
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub rows: Vec<BoundReport>,
    /// (file name, contents) written next to the CSV and JSON.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

pub fn run_suite(suite: Suite, cfg: &RunConfig, seed: u64) -> Result<Outcome> {
    let count = |default: usize| cfg.batch.count.unwrap_or(default);
    match suite {
        Suite::VerifyLr => rows_only(par_rows(&bounds::lr_cases(seed, count(100))?, |c| Ok(vec![bounds::verify_lr(c)?]))),
        Suite::VerifyMulticomm => multicomm(cfg, seed, count(30)),
        Suite::TreeSuite => rows_only(tree_rows(cfg.trees.k_max)),
        Suite::Convergence => rows_only(convergence(cfg, seed, count(20))),
        Suite::Telescoping => {
            rows_only(par_rows(&bounds::telescoping_cases(seed, count(3))?, bounds::telescoping_bound_check))
        }
        Suite::Nonauto => {
            let mut rows = par_rows(&bounds::nonauto_cases(seed, count(10))?, |c| Ok(vec![bounds::nonautonomous_variants(c)?]))?;
            rows.extend(dynamics_rows(seed, count(10))?);
            Ok(Outcome { rows, artifacts: Vec::new() })
        }
        Suite::Conductivity => conductivity(cfg, seed),
        Suite::AcMeasure => ac(cfg, seed),
        Suite::Increments => rows_only(increments(cfg, seed)),
    }
}

fn rows_only(rows: Result<Vec<BoundReport>>) -> Result<Outcome> {
    Ok(Outcome { rows: rows?, artifacts: Vec::new() })
}

fn par_rows<T: Sync>(cases: &[T], f: impl Fn(&T) -> Result<Vec<BoundReport>> + Sync + Send) -> Result<Vec<BoundReport>> {
    let parts: Vec<Result<Vec<BoundReport>>> = cases.par_iter().map(f).collect();
    Ok(parts.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}

/// Row that passes only when lhs equals rhs exactly.
pub fn equality(case_id: &str, theorem: &str, lhs: f64, rhs: f64) -> BoundReport {
    let mut r = BoundReport::new(case_id, theorem, lhs, rhs, Vec::new());
    r.margin = -(lhs - rhs).abs();
    r.pass = lhs == rhs;
    r
}

fn row(case_id: &str, theorem: &str, lhs: f64, rhs: f64) -> BoundReport {
    BoundReport::new(case_id, theorem, lhs, rhs, Vec::new())
}

fn multicomm(cfg: &RunConfig, seed: u64, count: usize) -> Result<Outcome> {
    let mut rows = Vec::new();
    for &k in &cfg.multicomm.orders {
        let cases = bounds::multicomm_cases(seed.wrapping_add(k as u64), k, count)?;
        rows.extend(par_rows(&cases, bounds::verify_multicomm)?);
    }
    for &k in &cfg.multicomm.orders {
        let cases = bounds::tree_decay_cases(seed.wrapping_add(100 + k as u64), k, cfg.multicomm.tree_decay_cases)?;
        rows.extend(par_rows(&cases, bounds::tree_decay_check)?);
    }
    Ok(Outcome { rows, artifacts: Vec::new() })
}

fn convergence(cfg: &RunConfig, seed: u64, count: usize) -> Result<Vec<BoundReport>> {
    let mut rows = par_rows(&bounds::convergence_cases(seed, count, &cfg.convergence.l1)?, |c| {
        Ok(vec![bounds::convergence_rate_check(c)?])
    })?;
    if cfg.convergence.sweep {
        let sweep = par_rows(&bounds::convergence_sweep(seed)?, |c| Ok(vec![bounds::convergence_rate_check(c)?]))?;
        let rise = sweep.windows(2).map(|w| w[1].lhs - w[0].lhs).fold(f64::NEG_INFINITY, f64::max);
        rows.extend(sweep);
        rows.push(row("sweep", "convergence-monotone", rise, 0.0));
    }
    Ok(rows)
}

/// All d ∈ N^{len} with Σ d = total.
fn compositions(total: usize, len: usize) -> Vec<Vec<usize>> {
    if len == 1 {
        return if total >= 1 { vec![vec![total]] } else { Vec::new() };
    }
    let mut out = Vec::new();
    for first in 1..total {
        for mut rest in compositions(total - first, len - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

pub fn tree_rows(k_max: usize) -> Result<Vec<BoundReport>> {
    let mut rows = Vec::new();
    for k in 1..=k_max {
        let ts = trees::enumerate_trees(k)?;
        let id = format!("k{k}");
        rows.push(equality(&id, "tree-count", ts.len() as f64, trees::factorial(k as u32)));
        let worst = ts.iter().map(|t| (t.degrees().iter().sum::<usize>() as f64 - 2.0 * k as f64).abs()).fold(0.0, f64::max);
        rows.push(equality(&id, "tree-degree-sum", worst, 0.0));
        if k <= 6 {
            let codes: std::collections::HashSet<Vec<usize>> = ts.iter().map(|t| t.code()).collect();
            rows.push(equality(&id, "tree-code-injective", codes.len() as f64, ts.len() as f64));
            let sum = trees::sum_degree_factorials(k)?;
            rows.push(row(&id, "degree-factorial-sum", sum, trees::factorial(k as u32) * (4.0 * 2f64.exp()).powi(k as i32)));
            for d in [1, 2] {
                let rep = trees::tree_sum_bound_check(k, d, 1.0)?;
                rows.push(row(&format!("{id}-d{d}"), "tree-sum-bound", rep.lhs, rep.rhs));
            }
        }
        if k <= 5 {
            let mut total = 0.0;
            for seq in compositions(2 * k, k + 1) {
                let (exact, bound) = trees::count_by_degree(k, &seq)?;
                let direct = ts.iter().filter(|t| t.degrees() == seq).count() as f64;
                let sid = format!("{id}-{}", seq.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("."));
                rows.push(equality(&sid, "degree-count-exact", exact as f64, direct));
                rows.push(row(&sid, "degree-count-bound", exact as f64, bound));
                total += exact as f64;
            }
            rows.push(equality(&id, "degree-count-total", total, ts.len() as f64));
        }
    }
    for k in 1..=10 {
        let (exact, bound) = trees::composition_count(k)?;
        let id = format!("k{k}");
        rows.push(equality(&id, "composition-count", exact as f64, trees::composition_closed_form(k) as f64));
        rows.push(row(&id, "composition-bound", exact as f64, bound));
    }
    for g in 1..=50u32 {
        let (lo, hi) = trees::stirling_bounds(g);
        let f = trees::factorial(g);
        let id = format!("g{g}");
        rows.push(row(&id, "stirling-lower", lo / f, 1.0));
        rows.push(row(&id, "stirling-upper", f / hi, 1.0));
    }
    Ok(rows)
}

struct DynamicsCase {
    id: String,
    drive: Drive,
    sites: Vec<Site>,
    b: FockOperator,
    s: f64,
    r: f64,
    t: f64,
}

const DYNAMICS_TOL: f64 = 1e-11;

/// Chapman–Kolmogorov, reverse cocycle, Dyson–Phillips envelopes and the
/// constant-protocol limit on seeded sinusoidal protocols over four sites.
pub fn dynamics_rows(seed: u64, n: usize) -> Result<Vec<BoundReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let sites = bounds::chain(0, 3);
    let mut cases = Vec::new();
    for i in 0..n {
        let drive = Drive {
            psi0: bounds::random_model(&mut rng, &ModelRanges::default())?,
            psi1: bounds::random_model(&mut rng, &ModelRanges::small())?,
            amplitude: rng.random_range(0.2..=1.0),
            omega: rng.random_range(0.5..=3.0),
            phase: rng.random_range(0.0..2.0 * PI),
        };
        let q = rng.random_range(0..=1);
        let b = bounds::random_charged(&sites, q, &mut rng)?;
        let (s, r, t) = (rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
        cases.push(DynamicsCase { id: format!("dyn-{i}"), drive, sites: sites.clone(), b, s, r, t });
    }
    par_rows(&cases, dynamics_case)
}

fn dynamics_case(c: &DynamicsCase) -> Result<Vec<BoundReport>> {
    let zero = Potential::zero();
    let p = c.drive.protocol(&zero, &c.sites)?;
    let (u_ts, u_tr, u_rs) = (
        propagator(&p, c.s, c.t, DYNAMICS_TOL)?,
        propagator(&p, c.r, c.t, DYNAMICS_TOL)?,
        propagator(&p, c.s, c.r, DYNAMICS_TOL)?,
    );
    let mut rows = Vec::new();
    let composed = &u_tr.unitary * &u_rs.unitary;
    rows.push(row(&c.id, "chapman-kolmogorov", (&u_ts.unitary - &composed).spectral_norm(), 1e-8));
    let direct = u_ts.conjugate(&c.b)?;
    let nested = u_rs.conjugate(&u_tr.conjugate(&c.b)?)?;
    rows.push(row(&c.id, "reverse-cocycle", (&direct - &nested).spectral_norm(), 1e-8));
    let h0 = hamiltonian_on(&c.drive.psi0, &zero, &c.sites)?;
    let h1 = hamiltonian_on(&c.drive.psi1, &zero, &c.sites)?;
    let sup = h0.spectral_norm() + c.drive.amplitude.abs() * h1.spectral_norm();
    let (s, t) = (c.s, c.s + 1.0 / sup);
    let reference = propagator(&p, s, t, DYNAMICS_TOL)?;
    for k in 1..=6 {
        let approx = dyson_phillips(&p, s, t, k)?;
        let err = (&approx.unitary - &reference.unitary).spectral_norm();
        rows.push(row(&format!("{}-k{k}", c.id), "dyson-phillips", err, dyson_envelope(sup, s, t, k)));
    }
    let magnus = propagator(&TimeProtocol::constant(&h0), c.s, c.t, DYNAMICS_TOL)?;
    let exact = exact_propagator(&h0, c.s, c.t)?;
    rows.push(row(&c.id, "constant-protocol", (&magnus.unitary - &exact.unitary).spectral_norm(), 1e-9));
    Ok(rows)
}

fn family(cfg: &RunConfig, lambda: f64, seed: u64) -> Result<ModelFamily> {
    let m = &cfg.model;
    let ip = Interaction::hopping_density(RadialTable::zero(), RadialTable::new(vec![(1.0, 0.5 * m.density)])?)?;
    ModelFamily::new(m.big_l, m.d, lambda, m.beta, seed, ip)
}

fn field(cfg: &RunConfig, eta: f64) -> Result<FieldProtocol> {
    let f = &cfg.field;
    let mut dir = vec![0.0; cfg.model.d];
    dir[0] = 1.0;
    FieldProtocol::new(dir, f.amplitude, f.frequency, f.duration, eta, cfg.model.l)
}

fn grid(cfg: &RunConfig) -> Vec<f64> {
    (0..cfg.model.grid_points).map(|i| i as f64 * cfg.model.grid_step).collect()
}

fn lambda_id(lambda: f64) -> String {
    format!("lambda{lambda}")
}

/// max over entries of |C(t) − |Λ_l|⁻¹∫₀ᵗ i[τ_{−s}(A_q), A_k] ds| with the integral by quadrature.
fn quadrature_defect(wb: &Workbench, t: f64) -> Result<f64> {
    let d = wb.d();
    let mut worst: f64 = 0.0;
    for k in 0..d {
        let ak = wb.current_sum(k)?;
        for q in 0..d {
            let aq = wb.current_sum(q)?;
            let mut acc = FockOperator::zero(wb.sites())?;
            for (s, w) in composite_rule(0.0, t, (8.0 * t).ceil().max(4.0) as usize * 4, 16) {
                let ev = FockOperator::from_matrix(wb.sites(), wb.gibbs().spectral().evolve(aq.matrix(), -s))?;
                acc = &acc + &fock::commutator(&ev, &ak).scale(c64::new(0.0, w));
            }
            let obs = wb.coefficient_observable(t, k, q)?;
            worst = worst.max(obs.max_abs_diff(&acc.scale_real(1.0 / wb.volume())));
        }
    }
    Ok(worst)
}

#[derive(Serialize)]
struct SeriesRow {
    lambda: f64,
    t: f64,
    k: usize,
    q: usize,
    xi: f64,
    stderr: f64,
}

fn conductivity(cfg: &RunConfig, seed: u64) -> Result<Outcome> {
    let tol = &cfg.tolerances;
    let times = grid(cfg);
    let mut rows = Vec::new();
    let mut series = csv::Writer::from_writer(Vec::new());
    for &lambda in &cfg.model.lambda {
        let fam = family(cfg, lambda, seed)?;
        let id = lambda_id(lambda);
        let n = cfg.model.realizations;
        let broken = (0..n as u64)
            .into_par_iter()
            .map(|i| fam.realization(i).and_then(|m| m.check_invariants()).is_err() as usize)
            .sum::<usize>();
        rows.push(equality(&id, "number-conservation", broken as f64, 0.0));
        let xi = response::xi_p(&fam, cfg.model.l, &times, n)?;
        let dd = cfg.model.d * cfg.model.d;
        for (ti, &t) in times.iter().enumerate() {
            for i in 0..dd {
                series
                    .serialize(SeriesRow { lambda, t, k: i / cfg.model.d, q: i % cfg.model.d, xi: xi.mean[ti][i], stderr: xi.stderr[ti][i] })
                    .map_err(|e| Error::Numerical(e.to_string()))?;
            }
        }
        let at_zero = times.iter().position(|t| *t == 0.0).map(|i| xi.mean[i].iter().fold(0.0f64, |m, v| m.max(v.abs())));
        if let Some(z) = at_zero {
            rows.push(equality(&id, "xi-zero", z, 0.0));
        }
        rows.push(row(&id, "xi-imaginary", xi.max_imag, response::IMAG_TOL));
        let model = fam.realization(0)?;
        let wb = Workbench::new(&model, cfg.model.l)?;
        let t_last = *times.last().expect("nonempty grid");
        let single = response::xi_p(&fam, cfg.model.l, &[t_last], 1)?;
        let direct = wb.coefficient_state(t_last);
        let gap = (0..dd).map(|i| (single.mean[0][i] - direct[i].re).abs()).fold(0.0, f64::max);
        rows.push(equality(&id, "xi-single-realization", gap, 0.0));
        rows.push(row(&id, "coefficient-quadrature", quadrature_defect(&wb, cfg.field.time)?, tol.quadrature));
        let t = cfg.field.time;
        let eta = cfg.field.eta;
        let j = wb.linear_response_current(&field(cfg, 1.0)?, t)?;
        let up = wb.current_increment(&field(cfg, eta)?, t)?;
        let down = wb.current_increment(&field(cfg, -eta)?, t)?;
        for k in 0..cfg.model.d {
            let slope = (up[k] - down[k]) / (2.0 * eta);
            let mut r = row(&format!("{id}-k{k}"), "linear-response", (slope - j[k]).abs(), tol.linear_response * j[k].abs());
            r.params = vec![("j_p".into(), j[k]), ("slope".into(), slope)];
            rows.push(r);
        }
    }
    let bytes = series.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(Outcome { rows, artifacts: vec![("conductivity_series.csv".into(), bytes)] })
}

#[derive(Serialize)]
struct MeasureDump {
    lambda: f64,
    realizations: usize,
    merged: usize,
    provenance: Vec<response::Provenance>,
    moments: Vec<Vec<Vec<f64>>>,
    atoms: Vec<response::Atom>,
}

fn ac(cfg: &RunConfig, seed: u64) -> Result<Outcome> {
    let tol = &cfg.tolerances;
    let times = grid(cfg);
    let d = cfg.model.d;
    let mut rows = Vec::new();
    let mut dumps = Vec::new();
    for &lambda in &cfg.model.lambda {
        let fam = family(cfg, lambda, seed)?;
        let id = lambda_id(lambda);
        let n = cfg.model.realizations;
        let xi = response::xi_p(&fam, cfg.model.l, &times, n)?;
        let (mu, prov) = response::ac_measure(&fam, cfg.model.l, n)?;
        let mut residual: f64 = 0.0;
        for (ti, &t) in times.iter().enumerate() {
            let rec = mu.reconstruct(t);
            for k in 0..d {
                for q in 0..d {
                    let sym = 0.5 * (xi.mean[ti][k * d + q] + xi.mean[ti][q * d + k]);
                    residual = residual.max((rec[k][q] - sym).abs());
                }
            }
        }
        rows.push(row(&id, "ac-reconstruction", residual, tol.reconstruction));
        rows.push(row(&id, "ac-psd", mu.psd_defect(), tol.psd));
        rows.push(row(&id, "ac-symmetry", mu.symmetry_defect(), tol.symmetry));
        let moments = response::moment_report(&mu, 8);
        rows.push(row(&id, "ac-odd-moments", moments.odd_defect, tol.odd_moment));
        rows.push(row(&id, "ac-even-moments-psd", moments.even_psd_defect, tol.psd));
        rows.push(equality(&id, "ac-moments-finite", (!moments.finite) as u8 as f64, 0.0));
        dumps.push(MeasureDump { lambda, realizations: n, merged: mu.merged, provenance: prov, moments: moments.moments, atoms: mu.atoms });
    }
    let json = serde_json::to_vec_pretty(&serde_json::json!({ "measures": dumps })).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(Outcome { rows, artifacts: vec![("ac-measure_atoms.json".into(), json)] })
}

fn increments(cfg: &RunConfig, seed: u64) -> Result<Vec<BoundReport>> {
    let tol = &cfg.tolerances;
    let mut rows = Vec::new();
    for &lambda in &cfg.model.lambda {
        let fam = family(cfg, lambda, seed)?;
        let id = lambda_id(lambda);
        let model = fam.realization(0)?;
        let wb = Workbench::new(&model, cfg.model.l)?;
        let u = hamiltonian_on(&model.full_interaction(), &Potential::zero(), wb.sites())?;
        let probe = field(cfg, 1.0)?;
        let t = cfg.field.time;
        let w = wb.perturbation(&probe, 0.5 * cfg.field.duration)?;
        rows.push(row(&id, "perturbation-self-adjoint", w.hermiticity_defect(), 1e-13));
        let d = cfg.model.d;
        let k1 = (0..d)
            .flat_map(|q| {
                let e = Site::unit(d, q);
                [e.clone(), Site::origin(d).sub(&e)]
            })
            .map(|z| response::peierls_weight(&probe, &z, 0.5 * cfg.field.duration).map(|c| c.norm()))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let vol = box_sites(cfg.model.l, d).len() as f64;
        rows.push(row(&id, "perturbation-norm", w.spectral_norm(), k1 * (2 * d + 1) as f64 * vol));
        let same = wb.increment(&field(cfg, cfg.field.eta)?, &u, 0.5 * t, 0.5 * t)?;
        rows.push(equality(&id, "increment-equal-times", same.max_abs(), 0.0));
        let rep = wb.taylor_report(&probe, &u, 0.0, t, &cfg.field.taylor_etas)?;
        rows.push(equality(&id, "increment-zero-coupling", rep.zero_increment, 0.0));
        rows.push(row(&id, "increment-derivative", rep.derivative_defect, tol.derivative));
        for (m, s) in rep.slopes.iter().enumerate() {
            let mut r = row(&format!("{id}-m{m}"), "increment-taylor", m as f64 + tol.slope_margin, *s);
            r.params = rep.etas.iter().zip(&rep.remainders[m]).map(|(e, v)| (format!("r({e})"), *v)).collect();
            rows.push(r);
        }
    }
    Ok(rows)
}
