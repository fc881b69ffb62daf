use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use onset_cli::acceptance::AcceptOptions;
use onset_cli::config::{load_config, ExperimentKind, OutputFormat, Overrides};
use onset_cli::error::{CliError, CliResult};
use onset_cli::{default_workers, execute, execute_accept};

#[derive(Debug, Parser)]
#[command(
    name = "onset",
    version,
    about = "Loss-onset experiments on finite-buffer links and paths"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML or JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Run directory; defaults to out/<kind>-seed<seed>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate single-link loss windows and compare with the analytic law.
    LinkSim,
    /// Tabulate the inverted single-link loss density and survival.
    AnalyticPdf,
    /// Sample path losses over random loads and imbalances.
    PathSim,
    /// Classify a grid of window lengths and spread widths into regimes.
    RegimeMap,
    /// Drive an AIMD sender with per-cycle losses.
    Aimd,
    /// Edge betweenness, loads and path usage of a network.
    Topology,
    /// Cartesian grid of runs of a base experiment.
    Sweep,
    /// Run the acceptance suite.
    Accept {
        /// Reduced sample sizes for a fast smoke run.
        #[arg(long)]
        quick: bool,
    },
}

fn kind_of(command: &Command) -> Option<ExperimentKind> {
    Some(match command {
        Command::LinkSim => ExperimentKind::LinkSim,
        Command::AnalyticPdf => ExperimentKind::AnalyticPdf,
        Command::PathSim => ExperimentKind::PathSim,
        Command::RegimeMap => ExperimentKind::RegimeMap,
        Command::Aimd => ExperimentKind::Aimd,
        Command::Topology => ExperimentKind::Topology,
        Command::Sweep => ExperimentKind::Sweep,
        Command::Accept { .. } => return None,
    })
}

fn run(cli: Cli) -> CliResult<()> {
    let common = cli.common;
    let format = common.format.map(OutputFormat::from);
    match kind_of(&cli.command) {
        Some(kind) => {
            let overrides = Overrides {
                kind: Some(kind),
                seed: common.seed,
                workers: common.workers,
                out: common.out,
                format,
            };
            let config = load_config(common.config.as_deref(), std::env::vars(), &overrides)?;
            let (dir, manifest) = execute(&config)?;
            println!(
                "{} run written to {} ({} files, {:.2} s)",
                manifest.kind,
                dir.display(),
                manifest.outputs.len() + 1,
                manifest.duration_seconds
            );
            Ok(())
        }
        None => {
            let quick = matches!(cli.command, Command::Accept { quick: true });
            let opts = AcceptOptions {
                seed: common.seed.unwrap_or(1),
                quick,
            };
            let workers = common.workers.unwrap_or_else(default_workers);
            if workers == 0 {
                return Err(CliError::config("workers must be positive"));
            }
            let dir = common
                .out
                .unwrap_or_else(|| PathBuf::from("out").join(format!("accept-seed{}", opts.seed)));
            let outcomes = execute_accept(&opts, workers, &dir, format.unwrap_or_default())?;
            for o in &outcomes {
                println!("{}", o.line());
            }
            let failed: Vec<String> = outcomes
                .iter()
                .filter(|o| !o.passed)
                .map(|o| format!("C{}", o.id))
                .collect();
            println!("results written to {}", dir.display());
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Acceptance(format!(
                    "{} of {} criteria failed: {}",
                    failed.len(),
                    outcomes.len(),
                    failed.join(", ")
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
