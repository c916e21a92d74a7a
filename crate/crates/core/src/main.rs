//! Command-line driver for the reproduction experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tcl_elim::experiments::{run, ExperimentConfig, OutputFormat};

#[derive(Debug, Parser)]
#[command(
    name = "tcl-elim",
    version,
    about = "Exact TCL adiabatic elimination experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config; defaults reproduce the reference setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for series files and report.json.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Series file format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Norm decay of P(t) - P^(eps) and J(t) on the three-level system.
    PropVerify,
    /// Rabi truncation study: fit table, state-level fit, convergence.
    RabiTruncation,
    /// Choi positivity of the second-order Rabi generator.
    Choi,
    /// Laplace-transform vs TCL generator scaling.
    LaplaceCompare,
    /// Invariance, gauge and trajectory identities of the exact reduction.
    Equivalence,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::PropVerify => "prop-verify",
            Command::RabiTruncation => "rabi-truncation",
            Command::Choi => "choi",
            Command::LaplaceCompare => "laplace-compare",
            Command::Equivalence => "equivalence",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn execute(cli: &Cli) -> tcl_elim::Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| tcl_elim::Error::Config(e.to_string()))?;
    }
    let name = cli.command.name();
    let cfg = match &cli.config {
        Some(path) => {
            let cfg = ExperimentConfig::from_path(path)?;
            if cfg.experiment != name {
                return Err(tcl_elim::Error::Config(format!(
                    "config is for '{}', subcommand is '{name}'",
                    cfg.experiment
                )));
            }
            cfg
        }
        None => ExperimentConfig::new(name),
    };
    let report = run(&cfg)?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(name));
    let format = match cli.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    report.write(&out, format)?;
    for (check, c) in &report.checks {
        println!(
            "{} {check}: measured {:.6e}, required {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.measured,
            c.criterion
        );
    }
    println!("report written to {}", out.join("report.json").display());
    Ok(report.all_pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
