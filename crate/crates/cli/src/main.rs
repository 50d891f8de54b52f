use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::LevelFilter;
use qme_cli::{bundled, config, logger, run_command, validate_command, CliError};

/// Open quantum system scenarios: run, validate, list.
#[derive(Parser)]
#[command(name = "qme", version)]
struct Cli {
    /// Log progress and solver warnings at info level.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or bundled scenario name) and write its outputs.
    Run {
        config: String,
        /// Evaluate the scenario's self-checks; exit 4 if any fails.
        #[arg(long)]
        check: bool,
        /// Seed for trajectory solvers, overriding `solver.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a scenario without running it.
    Validate { config: String },
    /// List the bundled scenarios.
    List,
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    logger::init(if cli.verbose { LevelFilter::Info } else { LevelFilter::Warn });
    match cli.command {
        Command::Run { config, check, seed, out } => match run_command(&config, check, seed, &out) {
            Ok(report) => {
                for c in &report.checks {
                    println!("check {} passed: {}", c.name, c.detail);
                }
                println!(
                    "wrote {} output(s) to {} in {:.2} s",
                    report.manifest.outputs.len(),
                    report.out_dir.display(),
                    report.manifest.wall_time_s
                );
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Validate { config } => match validate_command(&config) {
            Ok(s) => {
                println!("{}: ok ({} solver, dimension {})", s.config.name, s.method().name(), s.dim);
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::List => {
            for (name, text) in bundled::SCENARIOS {
                let description = config::parse(text).map(|c| c.description).unwrap_or_default();
                println!("{name:<22} {description}");
            }
            ExitCode::SUCCESS
        }
    }
}
