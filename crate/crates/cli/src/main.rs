use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use austeer_cli::commands::{self, analyze::AnalyzeKind};
use austeer_cli::config::{Overrides, RunConfig};
use austeer_cli::error::Result;

/// Atomic-unit activation steering laboratory.
#[derive(Parser)]
#[command(name = "austeer", version, about)]
struct Cli {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for generation and randomized strategies.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of AUs to steer.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Global steering strength factor.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Strategy mode (austeer, random, fixed_vector, fixed_strength,
    /// suppression, block_mean_diff).
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Output directory; all artifacts and manifest.json land here.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap on concurrent forward passes.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Scores file (overrides the config's `scores`).
    #[arg(long, global = true)]
    scores: Option<PathBuf>,
    /// Plan file (overrides the config's `plan`).
    #[arg(long, global = true)]
    plan: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic planted-AU task as files.
    Gen,
    /// Compute momentum stats and discriminative scores.
    Localize,
    /// Build a steering plan from scores (or model and pairs).
    Plan,
    /// Exact-match evaluation of an optional plan.
    Eval,
    /// Grid-sweep k and alpha with frozen scores.
    Sweep,
    /// Mechanism analyses.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Evaluate all steering modes side by side.
    Compare,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// KL divergence to the strongest-steered distribution per strength.
    Kl,
    /// KL divergence between two steered AUs per strength.
    Pairwise,
    /// Top-k next tokens under a plan.
    Topk,
    /// First-order Taylor check of momentum causality.
    Taylor,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            // No config file: default run over a default synthetic task.
            let mut cfg = RunConfig::default();
            cfg.synthetic = Some(austeer_cli::config::SyntheticWire::default());
            cfg
        }
    };
    cfg.apply_overrides(&Overrides {
        seed: cli.seed,
        k: cli.k,
        alpha: cli.alpha,
        mode: cli.mode.clone(),
        out: cli.out.clone(),
        jobs: cli.jobs,
        scores: cli.scores.clone(),
        plan: cli.plan.clone(),
    });
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Gen => commands::gen::run(&cfg),
        Command::Localize => commands::localize::run(&cfg),
        Command::Plan => commands::plan::run(&cfg),
        Command::Eval => commands::eval::run(&cfg),
        Command::Sweep => commands::sweep::run(&cfg),
        Command::Analyze { what } => {
            let kind = match what {
                AnalyzeCommand::Kl => AnalyzeKind::Kl,
                AnalyzeCommand::Pairwise => AnalyzeKind::Pairwise,
                AnalyzeCommand::Topk => AnalyzeKind::Topk,
                AnalyzeCommand::Taylor => AnalyzeKind::Taylor,
            };
            commands::analyze::run(&cfg, kind)
        }
        Command::Compare => commands::compare::run(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("austeer: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
