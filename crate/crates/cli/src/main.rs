use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use heatlab::experiment::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "heatlab", version, about = "Heat equations with singular potentials: batch experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Worker threads (default: machine parallelism).
        #[arg(long, value_name = "K")]
        threads: Option<usize>,
        /// Directory for artifacts.
        #[arg(long, value_name = "DIR", default_value = ".")]
        output: PathBuf,
    },
    /// Print the experiment catalog.
    List,
}

fn fail(code: i32, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("heatlab: {msg}");
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for e in experiment::catalog() {
                println!("{:<11} [{}] {}", e.experiment.name(), e.label, e.summary);
                println!("{:<11} requires: {}", "", e.required.join(", "));
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, threads, output } => {
            if let Some(k) = threads {
                if k == 0 {
                    return fail(2, "--threads must be at least 1");
                }
                if let Err(e) = heatlab::par::configure_threads(k) {
                    return fail(2, format!("cannot configure {k} threads: {e}"));
                }
            }
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(experiment::exit_code(&e), e),
            };
            match experiment::run(&cfg, &output) {
                Ok(artifacts) => {
                    for f in artifacts.files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(experiment::exit_code(&e), e),
            }
        }
    }
}
