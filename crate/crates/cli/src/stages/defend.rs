//! `defend`: Gaussian-noise sweep with naive and adaptive adversaries.

use vpaudit_core::defense::{add_noise, eval_defense, DefenseConfig, DefensePoint, TradeoffRow};
use vpaudit_core::error::Result;
use vpaudit_core::mia::{make_splits, MetricKind};
use vpaudit_core::pia::{
    evaluate_pia, generate_prompt_set, train_pia_model, PromptSetRole, ShadowPromptSet,
};
use vpaudit_core::report::write_defense_csv;
use vpaudit_core::rng::derive_seed;
use vpaudit_core::vpl::{evaluate_prompt, train_prompt, LabelMap};

use crate::config::{DefenseCfg, MiaCfg, PiaCfg};
use crate::stages::mia::{attack_prompt_pair, parse_metrics, ScenarioInputs};
use crate::stages::{missing_section, tags, StageCtx};

pub fn run(ctx: &StageCtx<'_>) -> Result<Vec<TradeoffRow>> {
    let cfg = ctx
        .config
        .defense
        .as_ref()
        .ok_or_else(|| missing_section("defend", "defense"))?;
    let rows = match cfg.context.as_str() {
        "mia" => mia_defense(ctx, cfg)?,
        "pia" => pia_defense(ctx, cfg)?,
        other => {
            return Err(vpaudit_core::error::Error::Config(format!(
                "[defend] unknown context '{other}'"
            )))
        }
    };
    write_defense_csv(&ctx.paths.results().join("defense.csv"), &rows)?;
    Ok(rows)
}

/// Membership context: one prompt pair, sweep sigma over the released
/// target prompt; the adaptive adversary noises their shadow prompt with
/// the same sigma before calibrating.
fn mia_defense(ctx: &StageCtx<'_>, cfg: &DefenseCfg) -> Result<Vec<TradeoffRow>> {
    let mia: &MiaCfg = ctx
        .config
        .mia
        .as_ref()
        .ok_or_else(|| missing_section("defend", "mia"))?;
    let target_model = ctx.model(&ctx.config.models.target)?;
    let shadow_model = ctx.model(ctx.config.models.shadow_id())?;
    let dataset = ctx.main_dataset()?;
    let pool: Vec<usize> = (0..dataset.len()).collect();
    let seed = ctx.stage_seed(tags::DEFENSE);
    let splits = make_splits(&pool, mia.split_sizes, seed)?;
    // utility is measured on everything the splits left untouched (falling
    // back to the target test split for tightly-sized pools)
    let used: std::collections::HashSet<usize> = splits
        .target_train
        .iter()
        .chain(&splits.target_test)
        .chain(&splits.shadow_train)
        .chain(&splits.shadow_test)
        .copied()
        .collect();
    let mut utility_pool: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|i| !used.contains(i))
        .collect();
    if utility_pool.is_empty() {
        utility_pool = splits.target_test.clone();
    }
    let metrics = parse_metrics(&mia.metrics)?;
    let t_map = LabelMap::new(ctx.config.dataset.classes, target_model.num_classes())?;
    let s_map = LabelMap::new(ctx.config.dataset.classes, shadow_model.num_classes())?;

    let hyper = ctx.config.prompt.hyper();
    let spec = ctx.prompt_spec()?;
    let target_prompt = train_prompt(
        &target_model,
        dataset.subset(&splits.target_train),
        spec,
        &t_map,
        &hyper,
        derive_seed(seed, &[0x74_67]),
        vec![],
    )?;
    let shadow_prompt = train_prompt(
        &shadow_model,
        dataset.subset(&splits.shadow_train),
        spec,
        &s_map,
        &hyper,
        derive_seed(seed, &[0x73_68]),
        vec![],
    )?;

    let inputs = ScenarioInputs {
        target_model: &target_model,
        target_dataset: &dataset,
        target_train: &splits.target_train,
        target_test: &splits.target_test,
        shadow_model: &shadow_model,
        shadow_dataset: &dataset,
        shadow_train: &splits.shadow_train,
        shadow_test: &splits.shadow_test,
    };

    let sigma_index = |sigma: f64| -> u64 {
        cfg.sigmas
            .iter()
            .position(|&s| s == sigma)
            .expect("sigma from the configured grid") as u64
    };
    let eval_point = |sigma: f64, adaptive: bool| -> Result<DefensePoint> {
        // the released prompt is noised once per sigma; both adversaries
        // see the same release
        let released = add_noise(
            &target_prompt,
            &DefenseConfig {
                sigma,
                seed: derive_seed(seed, &[0x72_65_6c, sigma_index(sigma)]),
            },
        )?;
        let utility =
            evaluate_prompt(&target_model, &released, &t_map, dataset.subset(&utility_pool))?;
        let shadow_artifact = if adaptive {
            add_noise(
                &shadow_prompt,
                &DefenseConfig {
                    sigma,
                    seed: derive_seed(seed, &[0x61_64, sigma_index(sigma)]),
                },
            )?
        } else {
            shadow_prompt.clone()
        };
        // attack seeds depend only on sigma, so the sigma=0 rows of both
        // adversaries reproduce the undefended numbers bit-exactly
        let outcomes = attack_prompt_pair(
            &inputs,
            &released,
            &shadow_artifact,
            &t_map,
            &s_map,
            &mia.families,
            &metrics,
            &mia.attack,
            derive_seed(seed, &[0x61_74_6b, sigma_index(sigma)]),
        )?;
        Ok(DefensePoint {
            utility,
            attacks: outcomes
                .into_iter()
                .map(|o| {
                    let family = if o.metric.is_empty() {
                        o.family
                    } else {
                        format!("metric-{}", o.metric)
                    };
                    (family, o.accuracy)
                })
                .collect(),
        })
    };

    let mut rows = eval_defense("mia", ctx.seed, &cfg.sigmas, false, eval_point)?;
    if cfg.adaptive {
        rows.extend(eval_defense("mia", ctx.seed, &cfg.sigmas, true, eval_point)?);
    }
    Ok(rows)
}

/// Property context: noise every released target prompt; utility is the
/// average validation accuracy of the noised targets.
fn pia_defense(ctx: &StageCtx<'_>, cfg: &DefenseCfg) -> Result<Vec<TradeoffRow>> {
    let pia: &PiaCfg = ctx
        .config
        .pia
        .as_ref()
        .ok_or_else(|| missing_section("defend", "pia"))?;
    let target_model = ctx.model(&ctx.config.models.target)?;
    let shadow_model = ctx.model(ctx.config.models.shadow_id())?;
    let dataset = ctx.main_dataset()?;
    let [target_pool, shadow_pool, validation_pool] = ctx.pools(dataset.len())?;
    let seed = ctx.stage_seed(tags::DEFENSE);
    let props: Vec<_> = pia
        .properties
        .iter()
        .map(|p| p.to_spec_values())
        .collect::<Result<_>>()?;
    let spec = ctx.prompt_spec()?;
    let hyper = ctx.config.prompt.hyper();
    let t_map = ctx.label_map(&target_model)?;
    let s_map = ctx.label_map(&shadow_model)?;

    let shadow = generate_prompt_set(
        &dataset,
        &shadow_pool,
        &shadow_model,
        &props,
        pia.shadow_runs,
        spec,
        &s_map,
        &hyper,
        PromptSetRole::Shadow,
        derive_seed(seed, &[0x73_68]),
    )?
    .set;
    let target = generate_prompt_set(
        &dataset,
        &target_pool,
        &target_model,
        &props,
        pia.target_runs,
        spec,
        &t_map,
        &hyper,
        PromptSetRole::Target,
        derive_seed(seed, &[0x74_67]),
    )?
    .set;

    let sigma_index = |sigma: f64| -> u64 {
        cfg.sigmas
            .iter()
            .position(|&s| s == sigma)
            .expect("sigma from the configured grid") as u64
    };
    let noise_set = |set: &ShadowPromptSet<f32>, sigma: f64, tag: u64| -> Result<ShadowPromptSet<f32>> {
        let mut noised = set.clone();
        for (i, prompt) in noised.prompts.iter_mut().enumerate() {
            *prompt = add_noise(
                prompt,
                &DefenseConfig {
                    sigma,
                    seed: derive_seed(seed, &[tag, sigma_index(sigma), i as u64]),
                },
            )?;
        }
        Ok(noised)
    };

    let eval_point = |sigma: f64, adaptive: bool| -> Result<DefensePoint> {
        let released = noise_set(&target, sigma, 0x72_65_6c)?;
        let mut utility_sum = 0.0;
        for prompt in &released.prompts {
            utility_sum +=
                evaluate_prompt(&target_model, prompt, &t_map, dataset.subset(&validation_pool))?;
        }
        let utility = utility_sum / released.len() as f64;
        let shadow_artifacts = if adaptive {
            noise_set(&shadow, sigma, 0x61_64)?
        } else {
            shadow.clone()
        };
        let mut attacks = Vec::new();
        for (pi, (pspec, _)) in props.iter().enumerate() {
            let model = train_pia_model(
                &shadow_artifacts,
                &pspec.name,
                pia.canvas_dims(),
                &pia.attack,
                derive_seed(seed, &[0x61_74_6b, sigma_index(sigma), pi as u64]),
            )?;
            let accuracy = evaluate_pia(&model, &released)?;
            attacks.push((format!("pia-{}", pspec.name), accuracy));
        }
        Ok(DefensePoint { utility, attacks })
    };

    let mut rows = eval_defense("pia", ctx.seed, &cfg.sigmas, false, eval_point)?;
    if cfg.adaptive {
        rows.extend(eval_defense("pia", ctx.seed, &cfg.sigmas, true, eval_point)?);
    }
    let _ = MetricKind::ALL;
    Ok(rows)
}
