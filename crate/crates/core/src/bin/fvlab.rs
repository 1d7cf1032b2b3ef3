use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fvlab::config::{load_config, resolve_seed, ExperimentConfig, ExperimentKind, SEED_ENV};
use fvlab::experiment::{error_exit_code, output_dir, run_experiment, Outcome};
use fvlab::FvError;

#[derive(Parser)]
#[command(name = "fvlab", version, about = "Fleming-Viot particle system experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed (overrides FVLAB_SEED and the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check the declared regularity constants of the configured model.
    CheckHypotheses {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare the configured system with the spectral quasi-stationary law.
    Qsd {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn execute(config: PathBuf, kind: Option<ExperimentKind>, out: Option<PathBuf>, seed: Option<u64>) -> Result<Outcome, FvError> {
    let mut cfg: ExperimentConfig = load_config(&config)?;
    if let Some(kind) = kind {
        cfg.experiment = kind;
    }
    let env = std::env::var(SEED_ENV).ok();
    let seed = resolve_seed(seed, env.as_deref(), cfg.seed)?;
    let dir = output_dir(&cfg, out);
    run_experiment(&cfg, seed, &dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seed } => execute(config, None, out, seed),
        Command::CheckHypotheses { config, out, seed } => execute(config, Some(ExperimentKind::Hypothesis), out, seed),
        Command::Qsd { config, out, seed } => execute(config, Some(ExperimentKind::Qsd), out, seed),
    };
    match result {
        Ok(outcome) => {
            for v in &outcome.verdicts {
                let value = v.value.map_or("-".to_string(), |x| format!("{x:.6}"));
                let threshold = v.threshold.map_or("-".to_string(), |x| format!("{x:.6}"));
                println!("{} {} value={} threshold={}", if v.passed { "PASS" } else { "FAIL" }, v.name, value, threshold);
            }
            if outcome.guard_tripped {
                eprintln!("error: explosion guard tripped");
            }
            for v in outcome.failures() {
                eprintln!("failed: {}", v.name);
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_exit_code(&e) as u8)
        }
    }
}
