use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use decoq_cli::commands::{self, EXIT_ERROR};
use decoq_cli::{Overrides, Session};

/// Decide whether a measured output is decoupled from a system-bath
/// interaction.
#[derive(Parser)]
#[command(name = "decoq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Close the observable under the dynamics and test it against H_SB.
    /// Exit 0 when decoupled, 1 when not.
    Analyze(Common),
    /// List the observables protected from the interaction. Exit 0 when the
    /// scenario observable is among them.
    Dfs(Common),
    /// Propagate with and without the interaction and compare the outputs.
    /// Exit 3 when simulation and algebra disagree.
    Simulate(Common),
    /// Run all three and write a combined report; exits as `analyze`.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Zero tolerance for residuals.
    #[arg(long)]
    tol: Option<f64>,
    /// Cap on the distribution dimension.
    #[arg(long)]
    max_dim: Option<usize>,
    /// Propagation step.
    #[arg(long)]
    dt: Option<f64>,
    /// Output directory for traces and reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomly sampled states.
    #[arg(long)]
    seed: Option<u64>,
}

fn configure_threads() {
    let Ok(value) = std::env::var("DECOQ_THREADS") else {
        return;
    };
    match value.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
            {
                log::warn!("DECOQ_THREADS ignored: {e}");
            }
        }
        _ => log::warn!("DECOQ_THREADS={value:?} is not a positive integer; ignored"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    let cli = Cli::parse();
    let (run, common): (fn(&Session) -> anyhow::Result<commands::Outcome>, Common) =
        match cli.command {
            Command::Analyze(c) => (commands::analyze, c),
            Command::Dfs(c) => (commands::dfs, c),
            Command::Simulate(c) => (commands::simulate, c),
            Command::Report(c) => (commands::report, c),
        };
    let overrides = Overrides {
        tol: common.tol,
        max_dim: common.max_dim,
        dt: common.dt,
        out: common.out,
        seed: common.seed,
    };
    let result = Session::open(&common.scenario, &overrides).and_then(|s| run(&s));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.text);
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
