use std::time::Instant;

use lrlab_core::bounds::*;

fn summarize(name: &str, rows: &[BoundReport], start: Instant) {
    let worst = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let fails = rows.iter().filter(|r| !r.pass).count();
    println!("{name}: {} rows, {fails} fail, worst margin {worst:.3e}, {:.1}s", rows.len(), start.elapsed().as_secs_f64());
    for r in rows.iter().filter(|r| !r.pass) {
        println!("  {r:?}");
    }
}

fn all_pass(rows: &[BoundReport]) {
    for r in rows {
        assert!(r.pass, "{r:?}");
        assert!(r.lhs.is_finite() && r.lhs >= 0.0, "{r:?}");
    }
}

#[test]
fn lieb_robinson_small_batch() {
    let rows: Vec<_> = lr_cases(21, 6).unwrap().iter().map(|c| verify_lr(c).unwrap()).collect();
    assert_eq!(rows.len(), 6);
    all_pass(&rows);
}

#[test]
fn multicommutator_small_batch() {
    for k in [2, 3] {
        let rows: Vec<_> = multicomm_cases(30 + k as u64, k, 3).unwrap().iter().flat_map(|c| verify_multicomm(c).unwrap()).collect();
        assert!(!rows.is_empty());
        all_pass(&rows);
    }
}

#[test]
fn tree_decay_small_batch() {
    let rows: Vec<_> = tree_decay_cases(41, 2, 2).unwrap().iter().flat_map(|c| tree_decay_check(c).unwrap()).collect();
    all_pass(&rows);
}

#[test]
fn convergence_small_batch() {
    let rows: Vec<_> = convergence_cases(51, 2, &[2, 3]).unwrap().iter().map(|c| convergence_rate_check(c).unwrap()).collect();
    all_pass(&rows);
}

#[test]
fn telescoping_single_case() {
    let rows: Vec<_> = telescoping_cases(61, 1).unwrap().iter().flat_map(|c| telescoping_bound_check(c).unwrap()).collect();
    assert!(!rows.is_empty());
    for r in &rows {
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn nonautonomous_single_case() {
    let rows: Vec<_> = nonauto_cases(71, 1).unwrap().iter().map(|c| nonautonomous_variants(c).unwrap()).collect();
    all_pass(&rows);
}

#[test]
fn case_generators_are_seed_deterministic() {
    let a: Vec<_> = lr_cases(5, 3).unwrap().iter().map(|c| verify_lr(c).unwrap().lhs).collect();
    let b: Vec<_> = lr_cases(5, 3).unwrap().iter().map(|c| verify_lr(c).unwrap().lhs).collect();
    assert_eq!(a, b);
}

#[test]
#[ignore]
fn timing_full_batches() {
    let s = Instant::now();
    let rows: Vec<_> = lr_cases(1, 100).unwrap().iter().map(|c| verify_lr(c).unwrap()).collect();
    summarize("lr", &rows, s);
    for k in [2, 3] {
        let s = Instant::now();
        let rows: Vec<_> = multicomm_cases(2 + k as u64, k, 30).unwrap().iter().flat_map(|c| verify_multicomm(c).unwrap()).collect();
        summarize(&format!("mc{k}"), &rows, s);
    }
    let s = Instant::now();
    let rows: Vec<_> = convergence_cases(5, 20, &[2, 3]).unwrap().iter().map(|c| convergence_rate_check(c).unwrap()).collect();
    summarize("conv", &rows, s);
    let sweep: Vec<_> = convergence_sweep(5).unwrap().iter().map(|c| convergence_rate_check(c).unwrap()).collect();
    println!("sweep {:?}", sweep.iter().map(|r| (r.lhs, r.rhs)).collect::<Vec<_>>());
    let s = Instant::now();
    let rows: Vec<_> = telescoping_cases(6, 3).unwrap().iter().flat_map(|c| telescoping_bound_check(c).unwrap()).collect();
    summarize("tel", &rows, s);
    let s = Instant::now();
    let rows: Vec<_> = tree_decay_cases(7, 2, 10).unwrap().iter().flat_map(|c| tree_decay_check(c).unwrap()).collect();
    summarize("td", &rows, s);
    let s = Instant::now();
    let rows: Vec<_> = nonauto_cases(8, 10).unwrap().iter().map(|c| nonautonomous_variants(c).unwrap()).collect();
    summarize("na", &rows, s);
}
