//! `pretrain`: build the configured surrogate models and fill the registry.

use vpaudit_core::error::Result;
use vpaudit_core::model_zoo::{pretrain_base, save_model, ArchConfig, PretrainConfig};
use vpaudit_core::rng::derive_seed;

use crate::stages::{missing_section, tags, StageCtx};

pub fn run(ctx: &StageCtx<'_>) -> Result<Vec<String>> {
    if ctx.config.pretrain.is_empty() {
        return Err(missing_section("pretrain", "pretrain"));
    }
    let mut ids = Vec::new();
    for (i, cfg) in ctx.config.pretrain.iter().enumerate() {
        let base = ctx.dataset(&cfg.base_dataset)?;
        let model = pretrain_base(
            &cfg.model_id,
            &base,
            &PretrainConfig {
                arch: ArchConfig::preset(&cfg.arch)?,
                input_dims: cfg.base_dataset.dims(),
                num_classes: cfg.num_classes,
                epochs: cfg.epochs,
                lr: cfg.lr,
                batch: cfg.batch,
            },
            derive_seed(ctx.stage_seed(tags::PRETRAIN), &[i as u64]),
        )?;
        save_model(&ctx.paths.registry(), &model)?;
        ids.push(model.model_id().to_string());
    }
    Ok(ids)
}
