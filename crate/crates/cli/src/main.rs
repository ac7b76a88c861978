use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sdeproj_cli::config::parse_seeds;
use sdeproj_cli::error::{EXIT_CONFIG, EXIT_OK};
use sdeproj_cli::{run, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "sdeproj", version, about = "Run SDE projection and filtering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file and write CSV output.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config and SDEPROJ_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds overriding the config, e.g. 1,2,3 or 0..20.
        #[arg(long)]
        seeds: Option<String>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print configuration diagnostics; exits 0 iff a run would start.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Validate { config } => match ExperimentConfig::load(&config) {
            Ok(cfg) => {
                let diagnostics = cfg.validate();
                for d in &diagnostics {
                    println!("{d}");
                }
                if diagnostics.is_empty() {
                    println!("{}: ok", config.display());
                    EXIT_OK
                } else {
                    EXIT_CONFIG
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Command::Run { config, out, seeds, jobs } => {
            let seeds = match seeds.as_deref().map(parse_seeds).transpose() {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: --seeds: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let opts = RunOptions { out_dir: out, seeds, jobs };
            match ExperimentConfig::load(&config).and_then(|cfg| run(&cfg, &opts)) {
                Ok(summary) => {
                    for f in &summary.files {
                        println!("wrote {}", f.display());
                    }
                    println!("{} rows", summary.rows);
                    if let Some(e) = summary.max_relative_error {
                        println!("max relative error {e:.3e}");
                    }
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
    };
    ExitCode::from(code)
}
