//! `pia-gen` and `pia-attack`: property-inference pipeline.

use vpaudit_core::error::{Error, Result};
use vpaudit_core::pia::{
    evaluate_pia, generate_prompt_set, load_prompt_set, save_prompt_set, train_pia_model,
    PromptSetRole,
};
use vpaudit_core::report::{write_pia_csv, PiaResultRow};
use vpaudit_core::rng::derive_seed;
use vpaudit_core::sampler::{save_manifest, CondValue, PropertySpec};

use crate::config::PiaCfg;
use crate::stages::{missing_section, tags, StageCtx};

fn pia_cfg<'a>(ctx: &'a StageCtx<'_>, stage: &str) -> Result<&'a PiaCfg> {
    ctx.config
        .pia
        .as_ref()
        .ok_or_else(|| missing_section(stage, "pia"))
}

fn properties(cfg: &PiaCfg) -> Result<Vec<(PropertySpec, Vec<CondValue>)>> {
    cfg.properties.iter().map(|p| p.to_spec_values()).collect()
}

/// Generate and persist the shadow and target prompt sets.
pub fn run_gen(ctx: &StageCtx<'_>) -> Result<(usize, usize)> {
    let cfg = pia_cfg(ctx, "pia-gen")?;
    // fail fast on registry lookups before any training
    let target_model = ctx.model(&ctx.config.models.target)?;
    let shadow_model = ctx.model(ctx.config.models.shadow_id())?;
    let dataset = ctx.main_dataset()?;
    let [target_pool, shadow_pool, _validation] = ctx.pools(dataset.len())?;
    let props = properties(cfg)?;
    let spec = ctx.prompt_spec()?;
    let hyper = ctx.config.prompt.hyper();

    let shadow = generate_prompt_set(
        &dataset,
        &shadow_pool,
        &shadow_model,
        &props,
        cfg.shadow_runs,
        spec,
        &ctx.label_map(&shadow_model)?,
        &hyper,
        PromptSetRole::Shadow,
        ctx.stage_seed(tags::PIA_SHADOW),
    )?;
    let target = generate_prompt_set(
        &dataset,
        &target_pool,
        &target_model,
        &props,
        cfg.target_runs,
        spec,
        &ctx.label_map(&target_model)?,
        &hyper,
        PromptSetRole::Target,
        ctx.stage_seed(tags::PIA_TARGET),
    )?;

    let dir = ctx.paths.prompts();
    save_prompt_set(&dir, "pia-shadow", &shadow.set)?;
    save_prompt_set(&dir, "pia-target", &target.set)?;
    let subset_dir = ctx.paths.datasets().join("subsets");
    std::fs::create_dir_all(&subset_dir)?;
    for (i, manifest) in shadow.subsets.iter().enumerate() {
        save_manifest(&subset_dir.join(format!("pia-shadow-{i:04}.json")), manifest)?;
    }
    for (i, manifest) in target.subsets.iter().enumerate() {
        save_manifest(&subset_dir.join(format!("pia-target-{i:04}.json")), manifest)?;
    }
    Ok((shadow.set.len(), target.set.len()))
}

/// Train attack models on the generated shadow set and evaluate per property.
pub fn run_attack(ctx: &StageCtx<'_>) -> Result<Vec<PiaResultRow>> {
    let cfg = pia_cfg(ctx, "pia-attack")?;
    let dir = ctx.paths.prompts();
    let shadow = load_prompt_set::<f32>(&dir, "pia-shadow").map_err(|e| {
        Error::Input(format!("[pia-attack] {e}; run pia-gen first"))
    })?;
    let target = load_prompt_set::<f32>(&dir, "pia-target")?;
    let canvas = cfg.canvas_dims();
    let attack_seed = ctx.stage_seed(tags::PIA_ATTACK);

    let mut rows = Vec::new();
    for (pi, prop) in cfg.properties.iter().enumerate() {
        let (spec, values) = prop.to_spec_values()?;
        let model = train_pia_model(
            &shadow,
            &spec.name,
            canvas,
            &cfg.attack,
            derive_seed(attack_seed, &[pi as u64]),
        )?;
        let accuracy = evaluate_pia(&model, &target)?;
        rows.push(PiaResultRow {
            task: ctx.config.task_id.clone(),
            property: spec.name.clone(),
            condition_values: values
                .iter()
                .map(CondValue::label)
                .collect::<Vec<_>>()
                .join("|"),
            num_shadow: shadow.len(),
            num_target: target.len(),
            accuracy,
            seed: ctx.seed,
        });
    }

    // relaxed-assumption harness: mismatched shadow configurations attack
    // the same targets
    if let Some(relaxed) = &cfg.relaxed {
        let props = properties(cfg)?;
        let spec = ctx.prompt_spec()?;
        let hyper = ctx.config.prompt.hyper();
        let mut combos: Vec<(String, String)> = Vec::new();
        let base_ds = ctx.config.dataset.name.clone();
        let base_model = ctx.config.models.shadow_id().to_string();
        for ds in &relaxed.datasets {
            if *ds != base_ds {
                combos.push((ds.clone(), base_model.clone()));
            }
        }
        for m in &relaxed.models {
            if *m != base_model {
                combos.push((base_ds.clone(), m.clone()));
            }
        }
        for (ci, (ds_name, model_id)) in combos.iter().enumerate() {
            let shadow_model = ctx.model(model_id)?;
            let ds_spec = ctx.config.dataset_spec(ds_name)?;
            let alt_dataset = ctx.dataset(ds_spec)?;
            let [_, alt_shadow_pool, _] = ctx.pools(alt_dataset.len())?;
            let alt_shadow = generate_prompt_set(
                &alt_dataset,
                &alt_shadow_pool,
                &shadow_model,
                &props,
                cfg.shadow_runs,
                spec,
                &ctx.label_map(&shadow_model)?,
                &hyper,
                PromptSetRole::Shadow,
                derive_seed(ctx.stage_seed(tags::PIA_SHADOW), &[0x72_6c_78, ci as u64]),
            )?;
            for (pi, prop) in cfg.properties.iter().enumerate() {
                let (pspec, values) = prop.to_spec_values()?;
                let model = train_pia_model(
                    &alt_shadow.set,
                    &pspec.name,
                    canvas,
                    &cfg.attack,
                    derive_seed(attack_seed, &[0x72_6c_78, ci as u64, pi as u64]),
                )?;
                let accuracy = evaluate_pia(&model, &target)?;
                rows.push(PiaResultRow {
                    task: format!(
                        "{}/relaxed[shadow={ds_name},{model_id}]",
                        ctx.config.task_id
                    ),
                    property: pspec.name.clone(),
                    condition_values: values
                        .iter()
                        .map(CondValue::label)
                        .collect::<Vec<_>>()
                        .join("|"),
                    num_shadow: alt_shadow.set.len(),
                    num_target: target.len(),
                    accuracy,
                    seed: ctx.seed,
                });
            }
        }
    }

    write_pia_csv(&ctx.paths.results().join("pia.csv"), &rows)?;
    Ok(rows)
}
