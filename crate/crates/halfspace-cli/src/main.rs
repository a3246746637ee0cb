use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use halfspace_cli::config::{RunConfig, Task};
use halfspace_cli::runner;

/// Deterministic front end for the halfspace numerical library.
#[derive(Parser)]
#[command(name = "halfspace", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Path to the JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts (default: config `output_path`, else `.`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker-thread count for parallel module internals.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed override for every sampling routine.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Subcommand)]
enum Cmd {
    /// Test whether the configured coefficient tensor is distinguished.
    CheckTensor,
    /// Run the kernel-identity residual suite.
    Verify,
    /// Sample the half-space Dirichlet solution on configured points.
    Solve,
    /// Nontangential-maximal norm report for the configured datum.
    MaximalReport,
    /// Sample the Poisson kernel over the configured grid as CSV.
    ExportKernel,
}

impl Cmd {
    fn task(self) -> Task {
        match self {
            Cmd::CheckTensor => Task::CheckTensor,
            Cmd::Verify => Task::Verify,
            Cmd::Solve => Task::Solve,
            Cmd::MaximalReport => Task::MaximalReport,
            Cmd::ExportKernel => Task::ExportKernel,
        }
    }
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be positive");
            return 2;
        }
        // First initialization wins; later calls (same process in tests) are
        // harmless no-ops.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    let Some(config_path) = cli.config else {
        eprintln!("error: --config <path> is required");
        return 2;
    };
    let text = match std::fs::read_to_string(&config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_path.display());
            return 2;
        }
    };
    let mut cfg: RunConfig = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let base_dir = config_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.output_path.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    match runner::run(&cfg, cli.cmd.task(), &out_dir, &base_dir) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            outcome.exit_code
        }
        Err(failure) => {
            eprintln!("error: {failure}");
            failure.exit_code
        }
    }
}
