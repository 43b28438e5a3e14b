//! `mia-attack`: four-way split, prompt pair, three attack families,
//! relaxed-assumption matrices, and the overfitting study.

use vpaudit_core::data::Dataset;
use vpaudit_core::error::{Error, Result};
use vpaudit_core::mia::{
    build_feature_set, evaluate_mia, fit_thresholds, make_splits, overfitting_level, pearson,
    train_gradient_attack, train_nn_attack, AttackHyper, FeatureSet, MembershipAttack,
    MetricKind, ThresholdMode,
};
use vpaudit_core::model_zoo::FrozenClassifier;
use vpaudit_core::report::{write_matrix_csv, write_mia_csv, Matrix, MiaResultRow};
use vpaudit_core::rng::derive_seed;
use vpaudit_core::vpl::{save_prompt, train_prompt, LabelMap, Prompt, TrainHyper};

use crate::config::MiaCfg;
use crate::stages::{missing_section, tags, StageCtx};

/// One attack outcome within a scenario.
#[derive(Debug, Clone)]
pub struct MiaOutcome {
    pub family: String,
    pub metric: String,
    pub accuracy: f64,
}

pub struct ScenarioResult {
    pub outcomes: Vec<MiaOutcome>,
    pub overfit_gap: f64,
    pub target_prompt: Prompt<f32>,
    pub shadow_prompt: Prompt<f32>,
}

fn mia_cfg<'a>(ctx: &'a StageCtx<'_>, stage: &str) -> Result<&'a MiaCfg> {
    ctx.config
        .mia
        .as_ref()
        .ok_or_else(|| missing_section(stage, "mia"))
}

pub struct ScenarioInputs<'a> {
    pub target_model: &'a FrozenClassifier<f32>,
    pub target_dataset: &'a Dataset<f32>,
    pub target_train: &'a [usize],
    pub target_test: &'a [usize],
    pub shadow_model: &'a FrozenClassifier<f32>,
    pub shadow_dataset: &'a Dataset<f32>,
    pub shadow_train: &'a [usize],
    pub shadow_test: &'a [usize],
}

fn wants(families: &[String], name: &str) -> bool {
    families.iter().any(|f| f == name)
}

/// Train the prompt pair and run every configured attack family.
pub fn run_scenario(
    ctx: &StageCtx<'_>,
    inputs: &ScenarioInputs<'_>,
    hyper: &TrainHyper,
    families: &[String],
    metrics: &[MetricKind],
    attack: &AttackHyper,
    seed: u64,
) -> Result<ScenarioResult> {
    let spec = ctx.prompt_spec()?;
    let t_map = LabelMap::new(ctx.config.dataset.classes, inputs.target_model.num_classes())?;
    let s_map = LabelMap::new(
        inputs.shadow_dataset.classes,
        inputs.shadow_model.num_classes(),
    )?;
    let target_prompt = train_prompt(
        inputs.target_model,
        inputs.target_dataset.subset(inputs.target_train),
        spec,
        &t_map,
        hyper,
        derive_seed(seed, &[0x74_67]),
        vec![],
    )?;
    let shadow_prompt = train_prompt(
        inputs.shadow_model,
        inputs.shadow_dataset.subset(inputs.shadow_train),
        spec,
        &s_map,
        hyper,
        derive_seed(seed, &[0x73_68]),
        vec![],
    )?;
    let result = attack_prompt_pair(
        inputs,
        &target_prompt,
        &shadow_prompt,
        &t_map,
        &s_map,
        families,
        metrics,
        attack,
        seed,
    )?;
    let overfit_gap = overfitting_level(
        inputs.target_model,
        &target_prompt,
        &t_map,
        inputs.target_dataset.subset(inputs.target_train),
        inputs.target_dataset.subset(inputs.target_test),
    )?;
    Ok(ScenarioResult {
        outcomes: result,
        overfit_gap,
        target_prompt,
        shadow_prompt,
    })
}

/// Build features for an existing prompt pair and evaluate the attacks.
/// Shadow artifacts calibrate; target records are what the adversary is
/// scored on.
#[allow(clippy::too_many_arguments)]
pub fn attack_prompt_pair(
    inputs: &ScenarioInputs<'_>,
    target_prompt: &Prompt<f32>,
    shadow_prompt: &Prompt<f32>,
    t_map: &LabelMap,
    s_map: &LabelMap,
    families: &[String],
    metrics: &[MetricKind],
    attack: &AttackHyper,
    seed: u64,
) -> Result<Vec<MiaOutcome>> {
    let with_grad = wants(families, "gradient-based");
    let shadow_feats = build_feature_set(
        inputs.shadow_model,
        shadow_prompt,
        inputs.shadow_dataset.subset(inputs.shadow_train),
        inputs.shadow_dataset.subset(inputs.shadow_test),
        s_map,
        with_grad,
    )?;
    let target_feats = build_feature_set(
        inputs.target_model,
        target_prompt,
        inputs.target_dataset.subset(inputs.target_train),
        inputs.target_dataset.subset(inputs.target_test),
        t_map,
        with_grad,
    )?;
    evaluate_families(
        &shadow_feats,
        &target_feats,
        families,
        metrics,
        attack,
        seed,
    )
}

/// Run the configured families against prebuilt feature sets.
pub fn evaluate_families(
    shadow_feats: &FeatureSet<f32>,
    target_feats: &FeatureSet<f32>,
    families: &[String],
    metrics: &[MetricKind],
    attack: &AttackHyper,
    seed: u64,
) -> Result<Vec<MiaOutcome>> {
    let mut outcomes = Vec::new();
    if wants(families, "metric-based") {
        for &metric in metrics {
            let scores = shadow_feats.shadow_scores(metric)?;
            let table = fit_thresholds(&scores, metric, ThresholdMode::ClassWise)?;
            let records = target_feats.metric_records(metric)?;
            let accuracy = evaluate_mia(&MembershipAttack::Metric(table), &records)?;
            outcomes.push(MiaOutcome {
                family: "metric-based".into(),
                metric: metric.name().into(),
                accuracy,
            });
        }
    }
    if wants(families, "nn-based") {
        let nn = train_nn_attack(
            &shadow_feats.nn_records(),
            attack,
            derive_seed(seed, &[0x6e_6e]),
        )?;
        let accuracy = evaluate_mia(&MembershipAttack::Nn(nn), &target_feats.nn_records())?;
        outcomes.push(MiaOutcome {
            family: "nn-based".into(),
            metric: String::new(),
            accuracy,
        });
    }
    if wants(families, "gradient-based") {
        let ga = train_gradient_attack(
            &shadow_feats.gradient_records()?,
            attack,
            derive_seed(seed, &[0x67_64]),
        )?;
        let accuracy = evaluate_mia(
            &MembershipAttack::Gradient(ga),
            &target_feats.gradient_records()?,
        )?;
        outcomes.push(MiaOutcome {
            family: "gradient-based".into(),
            metric: String::new(),
            accuracy,
        });
    }
    Ok(outcomes)
}

pub fn run_attack(ctx: &StageCtx<'_>) -> Result<Vec<MiaResultRow>> {
    let cfg = mia_cfg(ctx, "mia-attack")?;
    let target_model = ctx.model(&ctx.config.models.target)?;
    let shadow_model = ctx.model(ctx.config.models.shadow_id())?;
    let dataset = ctx.main_dataset()?;
    let pool: Vec<usize> = (0..dataset.len()).collect();
    let seed = ctx.stage_seed(tags::MIA);
    let splits = make_splits(&pool, cfg.split_sizes, seed)?;
    let metrics = parse_metrics(&cfg.metrics)?;

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
    let scenario = run_scenario(
        ctx,
        &inputs,
        &ctx.config.prompt.hyper(),
        &cfg.families,
        &metrics,
        &cfg.attack,
        seed,
    )?;
    save_prompt(
        &ctx.paths.prompts().join("mia-target.vpp"),
        &scenario.target_prompt,
    )?;
    save_prompt(
        &ctx.paths.prompts().join("mia-shadow.vpp"),
        &scenario.shadow_prompt,
    )?;
    persist_features(ctx, &inputs, &scenario, &cfg.families)?;

    let mut rows: Vec<MiaResultRow> = scenario
        .outcomes
        .iter()
        .map(|o| MiaResultRow {
            attack_family: o.family.clone(),
            metric: o.metric.clone(),
            target_model: target_model.model_id().to_string(),
            shadow_model: shadow_model.model_id().to_string(),
            target_dataset: dataset.descriptor.clone(),
            shadow_dataset: dataset.descriptor.clone(),
            accuracy: o.accuracy,
            overfit_gap: scenario.overfit_gap,
            seed: ctx.seed,
        })
        .collect();

    if let Some(relaxed) = &cfg.relaxed {
        rows.extend(run_relaxed(ctx, cfg, relaxed, &metrics, seed)?);
    }
    if let Some(study) = &cfg.study {
        run_study(ctx, cfg, study, seed)?;
    }

    write_mia_csv(&ctx.paths.results().join("mia.csv"), &rows)?;
    Ok(rows)
}

fn persist_features(
    ctx: &StageCtx<'_>,
    inputs: &ScenarioInputs<'_>,
    scenario: &ScenarioResult,
    families: &[String],
) -> Result<()> {
    let with_grad = wants(families, "gradient-based");
    let t_map = LabelMap::new(ctx.config.dataset.classes, inputs.target_model.num_classes())?;
    let target_feats = build_feature_set(
        inputs.target_model,
        &scenario.target_prompt,
        inputs.target_dataset.subset(inputs.target_train),
        inputs.target_dataset.subset(inputs.target_test),
        &t_map,
        with_grad,
    )?;
    let dir = ctx.paths.features();
    vpaudit_core::mia::write_records(
        &dir.join("mia-target-top5.jsonl"),
        &target_feats.nn_records(),
    )?;
    vpaudit_core::mia::write_records(
        &dir.join("mia-target-ment.jsonl"),
        &target_feats.metric_records(MetricKind::Ment)?,
    )?;
    if with_grad {
        vpaudit_core::mia::write_records(
            &dir.join("mia-target-gradient.jsonl"),
            &target_feats.gradient_records()?,
        )?;
    }
    Ok(())
}

pub fn parse_metrics(names: &[String]) -> Result<Vec<MetricKind>> {
    names.iter().map(|m| MetricKind::parse(m)).collect()
}

/// Relaxed-assumption grids: dataset axis and/or model axis, one matrix per
/// attack family with matched configurations on the diagonal.
fn run_relaxed(
    ctx: &StageCtx<'_>,
    cfg: &MiaCfg,
    relaxed: &crate::config::RelaxedCfg,
    metrics: &[MetricKind],
    seed: u64,
) -> Result<Vec<MiaResultRow>> {
    let mut rows = Vec::new();
    if relaxed.datasets.len() >= 2 {
        rows.extend(relaxed_dataset_matrix(ctx, cfg, &relaxed.datasets, metrics, seed)?);
    }
    if relaxed.models.len() >= 2 {
        rows.extend(relaxed_model_matrix(ctx, cfg, &relaxed.models, metrics, seed)?);
    }
    Ok(rows)
}

struct PreparedSide {
    dataset: Dataset<f32>,
    splits: vpaudit_core::mia::MiaSplits,
}

fn prepare_dataset(ctx: &StageCtx<'_>, name: &str, cfg: &MiaCfg, seed: u64) -> Result<PreparedSide> {
    let spec = ctx.config.dataset_spec(name)?;
    let dataset = ctx.dataset(spec)?;
    let pool: Vec<usize> = (0..dataset.len()).collect();
    let splits = make_splits(&pool, cfg.split_sizes, derive_seed(seed, &[0x64_73]))?;
    Ok(PreparedSide { dataset, splits })
}

fn summarize_family_matrices(
    ctx: &StageCtx<'_>,
    axis: &str,
    labels: &[String],
    cells: &[Vec<Vec<f64>>],
    families: &[String],
) -> Result<()> {
    for (fi, family) in families.iter().enumerate() {
        let matrix = Matrix::new(labels.to_vec(), labels.to_vec(), cells[fi].clone());
        write_matrix_csv(
            &ctx.paths
                .results()
                .join(format!("mia_relaxed_{axis}_{family}.csv")),
            &matrix,
        )?;
    }
    Ok(())
}

fn relaxed_dataset_matrix(
    ctx: &StageCtx<'_>,
    cfg: &MiaCfg,
    names: &[String],
    metrics: &[MetricKind],
    seed: u64,
) -> Result<Vec<MiaResultRow>> {
    let target_model = ctx.model(&ctx.config.models.target)?;
    let shadow_model = ctx.model(ctx.config.models.shadow_id())?;
    let sides: Vec<PreparedSide> = names
        .iter()
        .enumerate()
        .map(|(i, name)| prepare_dataset(ctx, name, cfg, derive_seed(seed, &[i as u64])))
        .collect::<Result<_>>()?;

    let family_names = family_row_names(&cfg.families, metrics);
    let mut cells = vec![vec![vec![0.0; names.len()]; names.len()]; family_names.len()];
    let mut rows = Vec::new();
    for (ti, t_side) in sides.iter().enumerate() {
        for (si, s_side) in sides.iter().enumerate() {
            let inputs = ScenarioInputs {
                target_model: &target_model,
                target_dataset: &t_side.dataset,
                target_train: &t_side.splits.target_train,
                target_test: &t_side.splits.target_test,
                shadow_model: &shadow_model,
                shadow_dataset: &s_side.dataset,
                shadow_train: &s_side.splits.shadow_train,
                shadow_test: &s_side.splits.shadow_test,
            };
            let scenario = run_scenario(
                ctx,
                &inputs,
                &ctx.config.prompt.hyper(),
                &cfg.families,
                metrics,
                &cfg.attack,
                derive_seed(seed, &[0x6d_78, ti as u64, si as u64]),
            )?;
            for (fi, outcome) in scenario.outcomes.iter().enumerate() {
                cells[fi][si][ti] = outcome.accuracy;
            }
            rows.extend(scenario.outcomes.iter().map(|o| MiaResultRow {
                attack_family: o.family.clone(),
                metric: o.metric.clone(),
                target_model: target_model.model_id().to_string(),
                shadow_model: shadow_model.model_id().to_string(),
                target_dataset: names[ti].clone(),
                shadow_dataset: names[si].clone(),
                accuracy: o.accuracy,
                overfit_gap: scenario.overfit_gap,
                seed: ctx.seed,
            }));
        }
    }
    summarize_family_matrices(ctx, "dataset", names, &cells, &family_names)?;
    Ok(rows)
}

fn relaxed_model_matrix(
    ctx: &StageCtx<'_>,
    cfg: &MiaCfg,
    model_ids: &[String],
    metrics: &[MetricKind],
    seed: u64,
) -> Result<Vec<MiaResultRow>> {
    let dataset = ctx.main_dataset()?;
    let pool: Vec<usize> = (0..dataset.len()).collect();
    let splits = make_splits(&pool, cfg.split_sizes, derive_seed(seed, &[0x6d_64]))?;
    let models: Vec<FrozenClassifier<f32>> = model_ids
        .iter()
        .map(|id| ctx.model(id))
        .collect::<Result<_>>()?;

    let family_names = family_row_names(&cfg.families, metrics);
    let mut cells = vec![vec![vec![0.0; models.len()]; models.len()]; family_names.len()];
    let mut rows = Vec::new();
    for (ti, t_model) in models.iter().enumerate() {
        for (si, s_model) in models.iter().enumerate() {
            let inputs = ScenarioInputs {
                target_model: t_model,
                target_dataset: &dataset,
                target_train: &splits.target_train,
                target_test: &splits.target_test,
                shadow_model: s_model,
                shadow_dataset: &dataset,
                shadow_train: &splits.shadow_train,
                shadow_test: &splits.shadow_test,
            };
            let scenario = run_scenario(
                ctx,
                &inputs,
                &ctx.config.prompt.hyper(),
                &cfg.families,
                metrics,
                &cfg.attack,
                derive_seed(seed, &[0x6d_6d, ti as u64, si as u64]),
            )?;
            for (fi, outcome) in scenario.outcomes.iter().enumerate() {
                cells[fi][si][ti] = outcome.accuracy;
            }
            rows.extend(scenario.outcomes.iter().map(|o| MiaResultRow {
                attack_family: o.family.clone(),
                metric: o.metric.clone(),
                target_model: t_model.model_id().to_string(),
                shadow_model: s_model.model_id().to_string(),
                target_dataset: dataset.descriptor.clone(),
                shadow_dataset: dataset.descriptor.clone(),
                accuracy: o.accuracy,
                overfit_gap: scenario.overfit_gap,
                seed: ctx.seed,
            }));
        }
    }
    summarize_family_matrices(ctx, "model", model_ids, &cells, &family_names)?;
    Ok(rows)
}

fn family_row_names(families: &[String], metrics: &[MetricKind]) -> Vec<String> {
    let mut out = Vec::new();
    if wants(families, "metric-based") {
        out.extend(metrics.iter().map(|m| format!("metric-{}", m.name())));
    }
    if wants(families, "nn-based") {
        out.push("nn-based".into());
    }
    if wants(families, "gradient-based") {
        out.push("gradient-based".into());
    }
    out
}

/// One row of the overfitting study.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct StudyRow {
    pub epochs: usize,
    pub size: usize,
    pub seed_index: usize,
    pub overfit_gap: f64,
    pub accuracy: f64,
}

/// (epochs, size) grid, several seeds per cell: train the prompt pair,
/// attack with the study metric, record (gap, accuracy).
fn run_study(
    ctx: &StageCtx<'_>,
    cfg: &MiaCfg,
    study: &crate::config::StudyCfg,
    seed: u64,
) -> Result<Vec<StudyRow>> {
    use rayon::prelude::*;
    let metric = MetricKind::parse(&study.metric)?;
    let target_model = ctx.model(&ctx.config.models.target)?;
    let shadow_model = ctx.model(ctx.config.models.shadow_id())?;
    let dataset = ctx.main_dataset()?;
    let pool: Vec<usize> = (0..dataset.len()).collect();
    let study_seed = derive_seed(ctx.stage_seed(tags::MIA_STUDY), &[seed]);

    let mut jobs = Vec::new();
    for &epochs in &study.epochs_grid {
        for &size in &study.sizes_grid {
            for rep in 0..study.seeds {
                jobs.push((epochs, size, rep));
            }
        }
    }

    let rows: Vec<StudyRow> = jobs
        .par_iter()
        .map(|&(epochs, size, rep)| {
            let cell_seed = derive_seed(
                study_seed,
                &[epochs as u64, size as u64, rep as u64],
            );
            let splits = make_splits(&pool, [size; 4], cell_seed)?;
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
            let scenario = run_scenario(
                ctx,
                &inputs,
                &ctx.config.prompt.with_epochs(epochs),
                &["metric-based".to_string()],
                &[metric],
                &cfg.attack,
                cell_seed,
            )?;
            Ok(StudyRow {
                epochs,
                size,
                seed_index: rep,
                overfit_gap: scenario.overfit_gap,
                accuracy: scenario.outcomes[0].accuracy,
            })
        })
        .collect::<Result<_>>()?;

    let mut writer = csv::Writer::from_path(ctx.paths.results().join("mia_study.csv"))?;
    writer.write_record(["epochs", "size", "seed_index", "overfit_gap", "accuracy"])?;
    for r in &rows {
        writer.write_record([
            r.epochs.to_string(),
            r.size.to_string(),
            r.seed_index.to_string(),
            format!("{:.4}", r.overfit_gap),
            format!("{:.4}", r.accuracy),
        ])?;
    }
    writer.flush()?;

    // correlation is part of the study result; the report stage re-reads it
    let gaps: Vec<f64> = rows.iter().map(|r| r.overfit_gap).collect();
    let accs: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
    if let Ok(r) = pearson(&gaps, &accs) {
        let mut report = vpaudit_core::report::Report::new(&format!(
            "{}-study",
            ctx.config.task_id
        ));
        report.set_summary("pearson_gap_vs_accuracy", r);
        report.save(&ctx.paths.results().join("mia_study_summary.json"))?;
    }
    Ok(rows)
}

pub fn read_study_rows(path: &std::path::Path) -> Result<Vec<StudyRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Format(format!("bad study value '{s}'")))
        };
        rows.push(StudyRow {
            epochs: parse_f(&record[0])? as usize,
            size: parse_f(&record[1])? as usize,
            seed_index: parse_f(&record[2])? as usize,
            overfit_gap: parse_f(&record[3])?,
            accuracy: parse_f(&record[4])?,
        });
    }
    Ok(rows)
}
