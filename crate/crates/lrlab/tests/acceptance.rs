//! Acceptance criteria 1–9, one PASS/FAIL line each.

use std::collections::BTreeMap;
use std::time::Instant;

use lrlab::report::{csv_bytes, parse_csv, summary_json};
use lrlab::{execute, Completed, RunConfig, Suite};
use lrlab_core::bounds::{chain, BoundReport};
use lrlab_core::fock::{annihilation, creation, FockOperator};

const SEED: u64 = 1;

struct Line {
    pass: bool,
    detail: String,
}

fn run(suite: Suite, threads: usize) -> Completed {
    execute(suite, &RunConfig::defaults(SEED), None, threads, false).unwrap_or_else(|e| panic!("{}: {e}", suite.name()))
}

fn describe(done: &Completed, budget: f64) -> Line {
    let s = &done.summary;
    let failing: BTreeMap<&str, usize> = done.outcome.rows.iter().filter(|r| !r.pass).fold(BTreeMap::new(), |mut m, r| {
        *m.entry(r.theorem.as_str()).or_insert(0) += 1;
        m
    });
    Line {
        pass: s.all_pass() && s.wall_time < budget,
        detail: format!(
            "{}/{} rows pass, worst margin {:.3e}, {:.1}s (budget {budget}s){}",
            s.n_pass,
            s.n_cases,
            s.worst_margin.unwrap_or(0.0),
            s.wall_time,
            if failing.is_empty() { String::new() } else { format!(", failing {failing:?}") }
        ),
    }
}

fn car() -> Line {
    let start = Instant::now();
    let (mut anti, mut norm): (f64, f64) = (0.0, 0.0);
    for n in 1..=8 {
        let ctx = chain(0, n - 1);
        let a: Vec<FockOperator> = ctx.iter().map(|x| annihilation(x, &ctx).unwrap()).collect();
        let c: Vec<FockOperator> = ctx.iter().map(|x| creation(x, &ctx).unwrap()).collect();
        let id = FockOperator::identity(&ctx).unwrap();
        for i in 0..ctx.len() {
            norm = norm.max((a[i].spectral_norm() - 1.0).abs());
            for j in 0..ctx.len() {
                let aa = &(&a[i] * &a[j]) + &(&a[j] * &a[i]);
                anti = anti.max(aa.max_abs());
                let ac = &(&a[i] * &c[j]) + &(&c[j] * &a[i]);
                let target = if i == j { id.clone() } else { FockOperator::zero(&ctx).unwrap() };
                anti = anti.max(ac.max_abs_diff(&target));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Line {
        pass: anti <= 1e-13 && norm <= 1e-10 && secs < 10.0,
        detail: format!("anticommutator defect {anti:.1e}, |‖a_x‖ − 1| {norm:.1e}, {secs:.1}s"),
    }
}

fn convergence(done: &Completed) -> Line {
    let mut line = describe(done, 120.0);
    let sweep: Vec<f64> = done.outcome.rows.iter().filter(|r| r.case_id.starts_with("sweep-")).map(|r| r.lhs).collect();
    let monotone = sweep.len() >= 2 && sweep.windows(2).all(|w| w[1] < w[0]);
    let l1_cases = done.outcome.rows.iter().filter(|r| r.theorem == "convergence" && !r.case_id.starts_with("sweep-")).count();
    line.pass &= monotone && l1_cases == 20;
    line.detail += &format!(", sweep lhs {sweep:.4?}");
    line
}

fn mask(done: &Completed) -> String {
    let mut s = done.summary.clone();
    s.wall_time = 0.0;
    summary_json(&s)
}

fn reals(rows: &[BoundReport]) -> Vec<f64> {
    rows.iter().flat_map(|r| [r.lhs, r.rhs, r.margin].into_iter().chain(r.params.iter().map(|p| p.1))).collect()
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0)
}

fn determinism(first: &BTreeMap<&'static str, Completed>) -> Line {
    let mut bad = Vec::new();
    let mut checked = 0;
    for suite in Suite::ALL {
        let a = &first[suite.name()];
        let b = run(suite, 1);
        let (ca, cb) = (csv_bytes(&a.outcome.rows).unwrap(), csv_bytes(&b.outcome.rows).unwrap());
        let artifacts_same = a.outcome.artifacts == b.outcome.artifacts;
        if ca != cb || mask(a) != mask(&b) || !artifacts_same {
            bad.push(format!("{} single-threaded", suite.name()));
        }
        if parse_csv(&ca).map(|r| r.len()).ok() != Some(a.outcome.rows.len()) {
            bad.push(format!("{} csv parse-back", suite.name()));
        }
        let c = run(suite, 4);
        let (ra, rc) = (reals(&a.outcome.rows), reals(&c.outcome.rows));
        if ra.len() != rc.len() || ra.iter().zip(&rc).any(|(x, y)| !close(*x, *y)) {
            bad.push(format!("{} multi-threaded", suite.name()));
        }
        checked += 1;
    }
    Line { pass: bad.is_empty(), detail: format!("{checked} suites rerun with 1 and 4 threads, mismatches {bad:?}") }
}

fn main() {
    let mut first: BTreeMap<&'static str, Completed> = BTreeMap::new();
    let mut lines: Vec<(usize, &str, Line)> = Vec::new();
    let mut record = |n: usize, name: &'static str, line: Line| {
        println!("criterion {n} [{name}]: {} ({})", if line.pass { "PASS" } else { "FAIL" }, line.detail);
        lines.push((n, name, line));
    };

    record(1, "car", car());
    for suite in Suite::ALL {
        first.insert(suite.name(), run(suite, 1));
    }
    record(2, "lieb-robinson", describe(&first["verify-lr"], 180.0));
    record(3, "multi-commutator", describe(&first["verify-multicomm"], 300.0));
    record(4, "convergence", convergence(&first["convergence"]));
    record(5, "telescoping", describe(&first["telescoping"], 300.0));
    record(6, "trees", describe(&first["tree-suite"], 30.0));
    record(7, "non-autonomous", describe(&first["nonauto"], 300.0));
    let response: Vec<&Completed> = ["conductivity", "ac-measure", "increments"].iter().map(|s| &first[s]).collect();
    let rows: Vec<BoundReport> = response.iter().flat_map(|c| c.outcome.rows.clone()).collect();
    let wall: f64 = response.iter().map(|c| c.summary.wall_time).sum();
    let merged = Completed {
        summary: lrlab::Summary::new("response", &rows, wall),
        outcome: lrlab::Outcome { rows, artifacts: Vec::new() },
    };
    record(8, "response", describe(&merged, 300.0));
    record(9, "determinism", determinism(&first));

    if lines.iter().any(|(_, _, l)| !l.pass) {
        std::process::exit(1);
    }
}
