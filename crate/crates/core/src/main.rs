use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use homodyne_sim::cli::{exit_code, run_command, CommandKind, ExperimentConfig};

#[derive(Parser)]
#[command(name = "homodyne-sim", version, about = "Seeded homodyne detection experiments")]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed to run; repeat for several.
    #[arg(long = "seed", global = true)]
    seeds: Vec<u64>,

    /// Output directory (default: config `out_dir`, else `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Phase grid size J.
    #[arg(long = "grid-j", global = true)]
    grid_j: Option<usize>,

    /// Fock truncation tail tolerance.
    #[arg(long = "cutoff-tol", global = true)]
    cutoff_tol: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Build the beam-splitter POVM and write completeness diagnostics.
    Povm,
    /// Posterior width versus number of detections.
    Localize,
    /// Empirical measure against the model distribution at the posterior mode.
    Fig2,
    /// Run a tomography scenario and reconstruct the Wigner function.
    Tomo,
    /// Classify a CW or PW signal laser by tomography.
    Discriminate,
}

impl From<Command> for CommandKind {
    fn from(c: Command) -> Self {
        match c {
            Command::Povm => CommandKind::Povm,
            Command::Localize => CommandKind::Localize,
            Command::Fig2 => CommandKind::Fig2,
            Command::Tomo => CommandKind::Tomo,
            Command::Discriminate => CommandKind::Discriminate,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let cmd = CommandKind::from(args.command);

    let mut cfg = match &args.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(exit_code(&e) as u8);
            }
        },
        None => ExperimentConfig::default(),
    };
    if !args.seeds.is_empty() {
        cfg.seeds = args.seeds.clone();
    }
    if let Some(j) = args.grid_j {
        cfg.grid_j = j;
    }
    if let Some(t) = args.cutoff_tol {
        cfg.cutoff_tolerance = t;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    match run_command(cmd, &cfg, &out) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
