//! Experiment driver: configuration, suite dispatch and report emission.

pub mod config;
pub mod report;
pub mod suites;

use std::path::{Path, PathBuf};
use std::time::Instant;

use lrlab_core::Error;

pub use config::{ConfigError, RunConfig};
pub use report::Summary;
pub use suites::{run_suite, Outcome, Suite};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_GUARD: i32 = 3;

pub const THREADS_ENV: &str = "LRLAB_THREADS";

#[derive(Clone, Debug)]
pub struct Options {
    pub suite: Suite,
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub override_guards: bool,
}

#[derive(Clone, Debug)]
pub struct Completed {
    pub summary: Summary,
    pub outcome: Outcome,
}

#[derive(Debug)]
pub enum RunError {
    Schema(String),
    Guard(String),
    Failed(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Schema(_) => EXIT_SCHEMA,
            RunError::Guard(_) => EXIT_GUARD,
            RunError::Failed(_) => EXIT_VIOLATION,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Schema(m) => write!(f, "schema error: {m}"),
            RunError::Guard(m) => write!(f, "resource guard: {m}"),
            RunError::Failed(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Schema(m) => RunError::Schema(m),
            ConfigError::Guard(m) => RunError::Guard(m),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::ResourceGuard(m) => RunError::Guard(m),
            Error::InvalidParameter(_) | Error::Geometry(_) | Error::SiteNotInContext(_) => RunError::Schema(e.to_string()),
            Error::Hypothesis(_) | Error::Numerical(_) => RunError::Failed(e.to_string()),
        }
    }
}

/// `--threads`, then LRLAB_THREADS, then the available parallelism.
pub fn resolve_threads(flag: Option<usize>) -> Result<usize, RunError> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| RunError::Schema(format!("{THREADS_ENV}={v} is not a thread count")))?,
            Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        },
    };
    if n == 0 {
        return Err(RunError::Schema("thread count must be positive".into()));
    }
    Ok(n)
}

/// Runs a suite on a dedicated pool of `threads` workers.
pub fn execute(suite: Suite, cfg: &RunConfig, seed_flag: Option<u64>, threads: usize, override_guards: bool) -> Result<Completed, RunError> {
    cfg.validate()?;
    if !override_guards {
        cfg.check_guards()?;
    }
    let seed = match (seed_flag.or(cfg.seed), suite.randomized()) {
        (Some(s), _) => s,
        (None, false) => 0,
        (None, true) => return Err(RunError::Schema(format!("{} needs a seed", suite.name()))),
    };
    faer::set_global_parallelism(faer::Par::Seq);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| RunError::Failed(e.to_string()))?;
    let start = Instant::now();
    let outcome = pool.install(|| run_suite(suite, cfg, seed))?;
    let summary = Summary::new(suite.name(), &outcome.rows, start.elapsed().as_secs_f64());
    Ok(Completed { summary, outcome })
}

pub fn output_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    flag.map(Path::to_path_buf).or_else(|| cfg.output.dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("lrlab-out"))
}

/// Full command: load, run, emit, print. Returns the process exit code.
pub fn run(opts: &Options) -> i32 {
    let attempt = || -> Result<(Completed, PathBuf), RunError> {
        let cfg = RunConfig::load(&opts.config)?;
        let threads = resolve_threads(opts.threads)?;
        let done = execute(opts.suite, &cfg, opts.seed, threads, opts.override_guards)?;
        let dir = output_dir(opts.out.as_deref(), &cfg);
        report::emit(&dir, opts.suite.name(), &done.outcome.rows, &done.summary, &done.outcome.artifacts)
            .map_err(|e| RunError::Schema(format!("cannot write artifacts to {}: {e}", dir.display())))?;
        Ok((done, dir))
    };
    match attempt() {
        Ok((done, dir)) => {
            let mut out = std::io::stdout().lock();
            let _ = report::print_table(&mut out, &done.summary, &done.outcome.rows);
            println!("artifacts in {}", dir.display());
            if done.summary.all_pass() {
                EXIT_OK
            } else {
                EXIT_VIOLATION
            }
        }
        Err(e) => {
            eprintln!("lrlab: {e}");
            e.exit_code()
        }
    }
}
