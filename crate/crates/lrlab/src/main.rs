use std::path::PathBuf;

use clap::Parser;
use lrlab::{Options, Suite};

/// Certification suites for lattice fermion propagation bounds and linear response.
#[derive(Parser, Debug)]
#[command(name = "lrlab", version)]
struct Cli {
    #[arg(value_enum)]
    suite: Suite,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to LRLAB_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    /// Artifact directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow Fock dimensions above 2^12 and tree orders above 9.
    #[arg(long)]
    override_guards: bool,
}

fn main() {
    let cli = Cli::parse();
    let opts = Options {
        suite: cli.suite,
        config: cli.config,
        seed: cli.seed,
        threads: cli.threads,
        out: cli.out,
        override_guards: cli.override_guards,
    };
    std::process::exit(lrlab::run(&opts));
}
