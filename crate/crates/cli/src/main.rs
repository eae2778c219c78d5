use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use gwve_cli::{run, ExperimentConfig, ExperimentKind, Report};

/// Experiments on critical Galton–Watson trees in varying environments.
#[derive(Parser)]
#[command(name = "gwve", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicas: Option<u64>,
        /// Worker threads (results do not depend on it).
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the config's instance against the enumeration oracle.
    VerifyOracle {
        config: PathBuf,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_report(report: &Report) {
    for r in &report.rows {
        let status = match (r.pass, r.soft) {
            (true, _) => "PASS",
            (false, true) => "FLAG",
            (false, false) => "FAIL",
        };
        let at = r.at.map(|v| format!(" @ {v}")).unwrap_or_default();
        let tol = r.tolerance.map(|v| format!(" (tol {v})")).unwrap_or_else(|| " (info)".into());
        println!(
            "{status} {}{at}: {:.6} ± {:.6} vs {:.6}{tol}",
            r.quantity, r.empirical, r.std_error, r.target
        );
    }
    println!("{}: {}", report.experiment, if report.pass { "PASS" } else { "FAIL" });
}

fn execute(cli: Cli) -> Result<bool> {
    let config = match cli.command {
        Command::Run { config, seed, replicas, workers, out } => {
            let mut c = ExperimentConfig::load(&config)?;
            c.seed = seed.unwrap_or(c.seed);
            c.replicas = replicas.unwrap_or(c.replicas);
            c.workers = workers.unwrap_or(c.workers);
            c.out_dir = out.unwrap_or(c.out_dir);
            c
        }
        Command::VerifyOracle { config, replicas, out } => {
            let mut c = ExperimentConfig::load(&config)?;
            c.experiment = ExperimentKind::OracleVerify;
            c.replicas = replicas.unwrap_or(c.replicas);
            c.out_dir = out.unwrap_or(c.out_dir);
            c
        }
    };
    let report = run(&config)?;
    print_report(&report);
    Ok(report.pass)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
