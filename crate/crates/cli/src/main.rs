use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vpaudit_cli::config::ExperimentConfig;
use vpaudit_cli::stages::{self, StageCtx};

/// Privacy auditing for visual prompts: train prompts against frozen
/// classifiers and measure what they leak.
#[derive(Parser)]
#[command(name = "vpaudit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for parallel jobs (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train the configured surrogate models into the registry.
    Pretrain,
    /// Train a single prompt on a sampled subset.
    PromptTrain,
    /// Generate shadow and target prompt sets for property inference.
    PiaGen,
    /// Train and evaluate the property-inference attack.
    PiaAttack,
    /// Run the membership-inference pipeline (all configured families).
    MiaAttack,
    /// Sweep the Gaussian-noise defense.
    Defend,
    /// Aggregate persisted results into a summary and figures.
    Report,
}

impl Command {
    fn stage_name(&self) -> &'static str {
        match self {
            Command::Pretrain => "pretrain",
            Command::PromptTrain => "prompt-train",
            Command::PiaGen => "pia-gen",
            Command::PiaAttack => "pia-attack",
            Command::MiaAttack => "mia-attack",
            Command::Defend => "defend",
            Command::Report => "report",
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let config_path = cli
        .config
        .clone()
        .ok_or_else(|| anyhow::anyhow!("--config PATH is required"))?;
    let mut config = ExperimentConfig::load(&config_path)?;
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| anyhow::anyhow!("failed to configure {jobs} worker threads: {e}"))?;
    }
    let ctx = StageCtx::new(&config, cli.seed)?;

    match cli.command {
        Command::Pretrain => {
            let ids = stages::pretrain::run(&ctx)?;
            println!("registered models: {}", ids.join(", "));
        }
        Command::PromptTrain => {
            let path = stages::prompt_train::run(&ctx)?;
            println!("prompt written to {}", path.display());
        }
        Command::PiaGen => {
            let (shadow, target) = stages::pia::run_gen(&ctx)?;
            println!("generated {shadow} shadow and {target} target prompts");
        }
        Command::PiaAttack => {
            let rows = stages::pia::run_attack(&ctx)?;
            for row in &rows {
                println!(
                    "{} / {}: accuracy {:.4}",
                    row.task, row.property, row.accuracy
                );
            }
        }
        Command::MiaAttack => {
            let rows = stages::mia::run_attack(&ctx)?;
            for row in &rows {
                let name = if row.metric.is_empty() {
                    row.attack_family.clone()
                } else {
                    format!("{}({})", row.attack_family, row.metric)
                };
                println!(
                    "{name} [shadow {} on {}]: accuracy {:.4} (overfit gap {:+.4})",
                    row.shadow_model, row.shadow_dataset, row.accuracy, row.overfit_gap
                );
            }
        }
        Command::Defend => {
            let rows = stages::defend::run(&ctx)?;
            for row in &rows {
                println!(
                    "{} sigma {:.2} adaptive={} {}: utility {:.4}, attack {:.4}",
                    row.context, row.sigma, row.adaptive, row.family, row.utility, row.accuracy
                );
            }
        }
        Command::Report => {
            if let Some(report) = stages::report::run(&ctx)? {
                println!(
                    "report written to {} ({} cells)",
                    ctx.paths.report().join("summary.json").display(),
                    report.cells.len()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = cli.command.stage_name();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error in stage '{stage}': {err:#}");
            ExitCode::FAILURE
        }
    }
}
