use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lattice::analysis::AnalysisKind;
use lattice::config::RunConfig;
use lattice::run::{self, AnalyzeParams};
use lattice::trainer::Checkpoint;
use lattice::{Error, Result};

#[derive(Parser)]
#[command(name = "lattice", version, about = "Latent time-correlated exploration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write a run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory (defaults to the config's output_dir or runs/<strategy>-seed<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint and print metrics JSON.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Disable all exploration noise.
        #[arg(long)]
        deterministic: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the metrics to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an analysis on a checkpoint and write report files.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        /// dual-sim, covariance, pca, allocation or energy.
        #[arg(long)]
        analysis: String,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long)]
        deterministic: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cumulative explained-variance threshold for pca.
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
        /// Simulation steps per condition for dual-sim.
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize several run directories per strategy.
    Compare {
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let mut cfg = RunConfig::load(&config).map_err(|e| match e {
                Error::Io(io) => Error::Config(format!("cannot read {}: {io}", config.display())),
                other => other,
            })?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out.unwrap_or_else(|| run::default_run_dir(&cfg));
            let m = run::train_run(cfg, &dir)?;
            println!(
                "{}: {} updates, {} env steps; solved {} (deterministic), energy {}",
                dir.display(),
                m.updates,
                m.env_steps,
                m.deterministic.solved_fraction,
                m.stochastic.energy
            );
        }
        Command::Evaluate {
            checkpoint,
            episodes,
            deterministic,
            seed,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let report = run::evaluate_checkpoint(&ck, episodes, deterministic, seed)?;
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(p) = out {
                std::fs::write(p, &text)?;
            }
            println!("{text}");
        }
        Command::Analyze {
            checkpoint,
            analysis,
            episodes,
            deterministic,
            seed,
            threshold,
            steps,
            out,
        } => {
            let kind: AnalysisKind = analysis.parse()?;
            let ck = Checkpoint::load(&checkpoint)?;
            let params = AnalyzeParams {
                episodes,
                deterministic,
                seed,
                threshold,
                dual_sim_steps: steps,
            };
            let dir = out.unwrap_or_else(|| run::default_report_dir(&checkpoint));
            for p in run::analyze_checkpoint(&ck, kind, &params, &dir)? {
                println!("{}", p.display());
            }
        }
        Command::Compare { runs, out } => {
            let summary = run::compare_runs(&runs)?;
            let text = serde_json::to_string_pretty(&summary)?;
            if let Some(p) = out {
                std::fs::write(p, &text)?;
            }
            println!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
