//! CSV rows, JSON summaries and the console table.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use lrlab_core::bounds::BoundReport;
use serde::{Deserialize, Serialize};

pub const CSV_HEADER: [&str; 6] = ["case_id", "theorem", "lhs", "rhs", "margin", "pass"];

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Summary {
    pub suite: String,
    pub n_cases: usize,
    pub n_pass: usize,
    pub worst_margin: Option<f64>,
    pub wall_time: f64,
}

impl Summary {
    pub fn new(suite: &str, rows: &[BoundReport], wall_time: f64) -> Self {
        Summary {
            suite: suite.to_string(),
            n_cases: rows.len(),
            n_pass: rows.iter().filter(|r| r.pass).count(),
            worst_margin: rows.iter().map(|r| r.margin).reduce(f64::min),
            wall_time,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.n_pass == self.n_cases
    }
}

/// 17 significant digits.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv_bytes(rows: &[BoundReport]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.case_id.clone(),
            r.theorem.clone(),
            format_real(r.lhs),
            format_real(r.rhs),
            format_real(r.margin),
            r.pass.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

/// Rows parsed back from CSV bytes.
pub fn parse_csv(bytes: &[u8]) -> Result<Vec<(String, String, f64, f64, f64, bool)>, csv::Error> {
    let mut r = csv::Reader::from_reader(bytes);
    r.deserialize().collect()
}

pub fn summary_json(s: &Summary) -> String {
    serde_json::to_string_pretty(s).expect("summary serializes")
}

/// Writes `<out>/<suite>.csv`, `<out>/<suite>.json` and any extra artifacts.
pub fn emit(dir: &Path, suite: &str, rows: &[BoundReport], summary: &Summary, extra: &[(String, Vec<u8>)]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let csv = csv_bytes(rows).map_err(std::io::Error::other)?;
    std::fs::write(dir.join(format!("{suite}.csv")), csv)?;
    std::fs::write(dir.join(format!("{suite}.json")), summary_json(summary) + "\n")?;
    for (name, bytes) in extra {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

/// Per-theorem counts and worst margins.
pub fn print_table(out: &mut impl Write, summary: &Summary, rows: &[BoundReport]) -> std::io::Result<()> {
    let mut by: BTreeMap<&str, (usize, usize, f64)> = BTreeMap::new();
    for r in rows {
        let e = by.entry(r.theorem.as_str()).or_insert((0, 0, f64::INFINITY));
        e.0 += 1;
        e.1 += r.pass as usize;
        e.2 = e.2.min(r.margin);
    }
    writeln!(out, "{:<28} {:>6} {:>6} {:>14}", "theorem", "rows", "pass", "worst margin")?;
    for (t, (n, p, m)) in &by {
        writeln!(out, "{t:<28} {n:>6} {p:>6} {m:>14.4e}")?;
    }
    writeln!(
        out,
        "{}: {}/{} pass in {:.2}s",
        summary.suite, summary.n_pass, summary.n_cases, summary.wall_time
    )
}
