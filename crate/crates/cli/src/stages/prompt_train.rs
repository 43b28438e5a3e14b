//! `prompt-train`: train a single prompt on a sampled subset and persist it.

use vpaudit_core::error::Result;
use vpaudit_core::sampler::{cell_counts, sample_subset, save_manifest, SubsetManifest};
use vpaudit_core::vpl::{save_prompt, train_prompt};

use crate::stages::{missing_section, tags, StageCtx};

pub fn run(ctx: &StageCtx<'_>) -> Result<std::path::PathBuf> {
    let job = ctx
        .config
        .prompt_train
        .as_ref()
        .ok_or_else(|| missing_section("prompt-train", "prompt_train"))?;
    let model = ctx.model(&ctx.config.models.target)?;
    let dataset = ctx.main_dataset()?;
    let pool: Vec<usize> = (0..dataset.len()).collect();
    let seed = ctx.stage_seed(tags::PROMPT_TRAIN);

    let plan = cell_counts(&[], &[], job.subset_size)?;
    let indices = sample_subset(&dataset, &pool, &plan, seed)?;
    let manifest = SubsetManifest {
        plan,
        seed,
        indices: indices.clone(),
    };

    let prompt = train_prompt(
        &model,
        dataset.subset(&indices),
        ctx.prompt_spec()?,
        &ctx.label_map(&model)?,
        &ctx.config.prompt.hyper(),
        seed,
        vec![],
    )?;

    let out_path = ctx.paths.root.join(&job.output);
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    save_prompt(&out_path, &prompt)?;
    save_manifest(&out_path.with_extension("subset.json"), &manifest)?;
    Ok(out_path)
}
