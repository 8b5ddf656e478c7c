use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use linbgk::experiment::{self, ExperimentConfig, RunError, Suite, DEFAULT_CONFIG_TOML};
use linbgk::Error;

#[derive(Parser)]
#[command(
    name = "linbgk",
    version,
    about = "Linearized BGK solver with sensitivity hierarchies and verification suites",
    after_help = "Exit status: 0 all checks pass, 1 a check failed, 2 configuration or I/O error, 3 numerical abort.\n\
                  Run `linbgk print-config` for the documented configuration with every default."
)]
struct Cli {
    /// Worker threads for parallel runs (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured suites and write CSVs and report.txt
    Run {
        config: PathBuf,
        /// Overrides `output.directory`
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Parse and validate a configuration without running it
    Validate { config: PathBuf },
    /// List the verification suites
    ListSuites,
    /// Print the configuration grammar with every default
    PrintConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match cli.command {
        Command::ListSuites => {
            for s in Suite::ALL {
                println!("{:<13} {}", s.name(), s.description());
            }
            ExitCode::SUCCESS
        }
        Command::PrintConfig => {
            print!("{DEFAULT_CONFIG_TOML}");
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match experiment::parse_config(&config) {
            Ok(_) => {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Run { config, output_dir } => {
            let cfg = match experiment::parse_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let dir = output_dir.unwrap_or_else(|| cfg.output.directory.clone());
            run(&cfg, &dir)
        }
    }
}

fn run(cfg: &ExperimentConfig, dir: &Path) -> ExitCode {
    match experiment::run_experiment(cfg) {
        Ok(outcome) => {
            if let Err(e) = outcome.write_to(dir) {
                eprintln!("error: cannot write {}: {e}", dir.display());
                return ExitCode::from(2);
            }
            print!("{}", outcome.report.to_text(cfg));
            if outcome.report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let RunError::Solver(Error::NonFinite { time, order, last_valid }) = &e {
                match dump_abort(dir, *time, *order, last_valid) {
                    Ok(path) => eprintln!("last valid field written to {}", path.display()),
                    Err(err) => eprintln!("error: cannot write abort dump: {err}"),
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dump_abort(dir: &Path, time: f64, order: usize, field: &linbgk::field::DistributionField) -> Result<PathBuf, Error> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("abort_field.csv");
    std::fs::write(&path, experiment::field_csv(field)?)?;
    std::fs::write(
        dir.join("abort.txt"),
        format!("non-finite value in order {order} after t = {time}; abort_field.csv holds the last finite state\n"),
    )?;
    Ok(path)
}
