//! Library surface of the experiment runner (used by the binary and tests).

pub mod config;
pub mod paths;
pub mod plots;
pub mod stages;

use vpaudit_core::error::Result;
use vpaudit_core::report::Report;

use config::ExperimentConfig;
use stages::StageCtx;

/// Run every stage the config describes, in pipeline order, and return the
/// final report. Rerunning with the same config and seeds reproduces every
/// artifact byte for byte.
pub fn run_experiment(
    config: &ExperimentConfig,
    seed_override: Option<u64>,
) -> Result<Option<Report>> {
    let ctx = StageCtx::new(config, seed_override)?;
    if !config.pretrain.is_empty() {
        stages::pretrain::run(&ctx)?;
    }
    // fail fast: every referenced model must now exist in the registry
    ctx.model(&config.models.target)?;
    ctx.model(config.models.shadow_id())?;
    if config.prompt_train.is_some() {
        stages::prompt_train::run(&ctx)?;
    }
    if config.pia.is_some() {
        stages::pia::run_gen(&ctx)?;
        stages::pia::run_attack(&ctx)?;
    }
    if config.mia.is_some() {
        stages::mia::run_attack(&ctx)?;
    }
    if config.defense.is_some() {
        stages::defend::run(&ctx)?;
    }
    stages::report::run(&ctx)
}
