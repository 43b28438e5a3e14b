//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured numbers (run with `--nocapture` to see them).
//!
//! Heavier criteria drive the real pipeline through the library stages with
//! the configs shipped under `configs/`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use vpaudit_cli::config::ExperimentConfig;
use vpaudit_cli::stages::{self, StageCtx};
use vpaudit_core::data::{generate, SynthSpec};
use vpaudit_core::mia::{
    build_feature_set, fit_thresholds, make_splits, metric_score, pearson, AttackRecord,
    MembershipAttack, MetricKind, ShadowScore, ThresholdMode,
};
use vpaudit_core::rng::rng_for;
use vpaudit_core::sampler::{cell_counts, sample_subset, CondValue, PropertyKind, PropertySpec};
use vpaudit_core::tensor::Dims;
use vpaudit_core::vpl::PromptSpec;

use rand::Rng;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .canonicalize()
        .expect("configs directory")
}

fn load_config(name: &str, out: &Path) -> ExperimentConfig {
    let mut config = ExperimentConfig::load(&configs_dir().join(name)).expect("config parses");
    config.out_dir = out.to_path_buf();
    config
}

fn pass(criterion: &str, details: &str) {
    eprintln!("ACCEPTANCE {criterion} PASS: {details}");
}

#[test]
fn criterion_01_parameter_accounting() {
    let spec = PromptSpec::new(30, Dims::new(3, 224, 224)).unwrap();
    assert_eq!(spec.param_count().unwrap(), 69_840);

    let mut rng = rng_for(1, &[0x01]);
    for _ in 0..20 {
        let c = rng.random_range(1..4usize);
        let h = rng.random_range(8..64usize);
        let w = rng.random_range(8..64usize);
        let max_p = (h.min(w) - 1) / 2;
        if max_p == 0 {
            continue;
        }
        let p = rng.random_range(1..=max_p);
        let spec = PromptSpec::new(p, Dims::new(c, h, w)).unwrap();
        // independent count: enumerate the border cells
        let mut border_cells = 0usize;
        for y in 0..h {
            for x in 0..w {
                if y < p || y >= h - p || x < p || x >= w - p {
                    border_cells += 1;
                }
            }
        }
        assert_eq!(
            spec.param_count().unwrap(),
            c * border_cells,
            "formula mismatch for p={p} dims=({c},{h},{w})"
        );
    }
    pass("criterion 01 (parameter accounting)", "69840 exact; 20 random specs match enumeration");
}

#[test]
fn criterion_02_sampling_exactness() {
    let props = vec![
        PropertySpec {
            name: "youth".into(),
            kind: PropertyKind::BinaryAttributeProportion { attribute: "young".into() },
        },
        PropertySpec {
            name: "male".into(),
            kind: PropertyKind::BinaryAttributeProportion { attribute: "male".into() },
        },
    ];
    let plan = cell_counts(
        &props,
        &[CondValue::Proportion(0.7), CondValue::Proportion(0.7)],
        2000,
    )
    .unwrap();
    let counts: Vec<usize> = plan.cells.iter().map(|c| c.count).collect();
    assert_eq!(counts, vec![980, 420, 420, 180]);

    // largest-remainder brute-force oracle over 100 randomized plans
    fn l1_optimal(targets: &[f64], n: usize) -> f64 {
        fn rec(targets: &[f64], left: usize, acc: f64, best: &mut f64) {
            if targets.len() == 1 {
                *best = best.min(acc + (left as f64 - targets[0]).abs());
                return;
            }
            for take in 0..=left {
                let d = acc + (take as f64 - targets[0]).abs();
                if d < *best {
                    rec(&targets[1..], left - take, d, best);
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(targets, n, 0.0, &mut best);
        best
    }
    let mut rng = rng_for(2, &[0x02]);
    for round in 0..100 {
        let p1 = rng.random_range(0.05..0.95);
        let p2 = rng.random_range(0.05..0.95);
        let n = rng.random_range(1..30usize);
        let plan = cell_counts(
            &props,
            &[CondValue::Proportion(p1), CondValue::Proportion(p2)],
            n,
        )
        .unwrap();
        let counts: Vec<usize> = plan.cells.iter().map(|c| c.count).collect();
        assert_eq!(counts.iter().sum::<usize>(), n);
        let targets = [
            n as f64 * p1 * p2,
            n as f64 * p1 * (1.0 - p2),
            n as f64 * (1.0 - p1) * p2,
            n as f64 * (1.0 - p1) * (1.0 - p2),
        ];
        let ours: f64 = counts
            .iter()
            .zip(&targets)
            .map(|(&c, &t)| (c as f64 - t).abs())
            .sum();
        assert!(
            (ours - l1_optimal(&targets, n)).abs() < 1e-9,
            "round {round}: rounding not L1-optimal"
        );
    }

    // sampled subsets: duplicate-free with exact per-cell counts
    let ds = generate::<f32>(&SynthSpec {
        name: "pool".into(),
        classes: 2,
        channels: 1,
        height: 4,
        width: 4,
        samples: 10_000,
        attributes: vec!["young".into(), "male".into()],
        signal: 0.3,
        signature: 0.0,
        noise: 0.0,
        seed: 4,
        pattern_seed: None,
        pattern_jitter: 0.0,
    })
    .unwrap();
    let pool: Vec<usize> = (0..ds.len()).collect();
    let plan = cell_counts(
        &props,
        &[CondValue::Proportion(0.7), CondValue::Proportion(0.7)],
        2000,
    )
    .unwrap();
    let subset = sample_subset(&ds, &pool, &plan, 99).unwrap();
    let mut uniq = subset.clone();
    uniq.sort_unstable();
    uniq.dedup();
    assert_eq!(uniq.len(), 2000);
    let mut realized = [0usize; 4];
    for &s in &subset {
        let cell = (usize::from(ds.attr_values[s][0] == 0) << 1)
            | usize::from(ds.attr_values[s][1] == 0);
        realized[cell] += 1;
    }
    assert_eq!(realized, [980, 420, 420, 180]);
    pass("criterion 02 (sampling exactness)", "980/420/420/180 exact; 100 plans L1-optimal; draws exact");
}

#[test]
fn criterion_03_frozen_model_invariance() {
    let out = tempfile::tempdir().unwrap();
    let config = load_config("tiny.toml", out.path());
    let ctx = StageCtx::new(&config, None).unwrap();
    stages::pretrain::run(&ctx).unwrap();
    let model = ctx.model("tiny-model").unwrap();
    let digest_before = model.param_digest().to_string();
    assert_eq!(model.recompute_digest(), digest_before);

    // a full prompt-training run against the model
    stages::prompt_train::run(&ctx).unwrap();
    assert_eq!(model.recompute_digest(), digest_before);
    // and the registry copy still matches bit for bit
    let reloaded = ctx.model("tiny-model").unwrap();
    assert_eq!(reloaded.param_digest(), digest_before);
    pass("criterion 03 (frozen-model invariance)", "digest identical before/after prompt training");
}

#[test]
fn criterion_04_metric_and_threshold_oracle() {
    // closed forms within 1e-9
    let one_hot = [1.0f64, 0.0, 0.0, 0.0];
    assert!(metric_score(MetricKind::Ent, &one_hot, 0).unwrap().abs() < 1e-9);
    assert!(metric_score(MetricKind::Ment, &one_hot, 0).unwrap().abs() < 1e-9);
    for n in [2usize, 4, 10] {
        let uniform = vec![1.0 / n as f64; n];
        let ent = metric_score(MetricKind::Ent, &uniform, 0).unwrap();
        assert!((ent - (n as f64).ln()).abs() < 1e-9);
    }
    let ln2 = std::f64::consts::LN_2;
    assert!((metric_score(MetricKind::Ment, &[0.5, 0.5], 0).unwrap() - ln2).abs() < 1e-9);
    assert!((metric_score(MetricKind::Conf, &[0.5f64, 0.5], 0).unwrap() - 0.5).abs() < 1e-9);

    // 200 randomized shadow-score sets: fitted thresholds tie the
    // exhaustive sweep, overall and per fitted class
    let sweep = |scores: &[ShadowScore<f64>], geq: bool| -> f64 {
        let mut candidates: Vec<f64> = scores.iter().map(|s| s.score).collect();
        candidates.push(f64::NEG_INFINITY);
        candidates.push(f64::INFINITY);
        let mut best = 0usize;
        for &tau in &candidates {
            let hits = scores
                .iter()
                .filter(|s| (if geq { s.score >= tau } else { s.score <= tau }) == s.member)
                .count();
            best = best.max(hits);
        }
        best as f64 / scores.len() as f64
    };
    let mut rng = rng_for(4, &[0x04]);
    for round in 0..200 {
        let n = rng.random_range(4..=1000usize);
        let classes = rng.random_range(1..5usize);
        let scores: Vec<ShadowScore<f64>> = (0..n)
            .map(|_| ShadowScore {
                score: (rng.random_range(0..40) as f64) * 0.05,
                class: rng.random_range(0..classes),
                member: rng.random::<bool>(),
            })
            .collect();
        if !(scores.iter().any(|s| s.member) && scores.iter().any(|s| !s.member)) {
            continue;
        }
        for metric in [MetricKind::Conf, MetricKind::Ent, MetricKind::Ment] {
            let geq = metric == MetricKind::Conf;
            let overall = fit_thresholds(&scores, metric, ThresholdMode::Overall).unwrap();
            assert_eq!(
                overall.accuracy(&scores),
                sweep(&scores, geq),
                "round {round}: overall fit below sweep for {metric}"
            );
            let class_wise = fit_thresholds(&scores, metric, ThresholdMode::ClassWise).unwrap();
            for class in class_wise.fitted_classes() {
                let group: Vec<ShadowScore<f64>> =
                    scores.iter().filter(|s| s.class == class).copied().collect();
                assert_eq!(
                    class_wise.accuracy(&group),
                    sweep(&group, geq),
                    "round {round}: class {class} fit below sweep for {metric}"
                );
            }
        }
    }
    pass("criterion 04 (metric/threshold oracle)", "closed forms within 1e-9; 200 sets tie the exhaustive sweep");
}

#[test]
fn criterion_05_gradient_correctness() {
    // f64 end to end; step 1e-3, relative error < 1e-2
    use vpaudit_core::model_zoo::{input_gradient, pretrain_base, ArchConfig, PretrainConfig};
    use vpaudit_core::vpl::{apply_prompt, LabelMap, Prompt, Provenance, Schedule};
    let dims = Dims::new(3, 16, 16);
    let base = generate::<f64>(&SynthSpec {
        name: "base".into(),
        classes: 8,
        channels: 3,
        height: 16,
        width: 16,
        samples: 128,
        attributes: vec![],
        signal: 0.3,
        signature: 0.0,
        noise: 0.05,
        seed: 15,
        pattern_seed: None,
        pattern_jitter: 0.0,
    })
    .unwrap();
    let model = pretrain_base(
        "grad",
        &base,
        &PretrainConfig {
            arch: ArchConfig::preset("cnn-e").unwrap(),
            input_dims: dims,
            num_classes: 8,
            epochs: 4,
            lr: 2e-3,
            batch: 32,
        },
        16,
    )
    .unwrap();
    let task = generate::<f64>(&SynthSpec {
        name: "task".into(),
        classes: 4,
        channels: 3,
        height: 16,
        width: 16,
        samples: 5,
        attributes: vec![],
        signal: 0.3,
        signature: 0.2,
        noise: 0.1,
        seed: 17,
        pattern_seed: None,
        pattern_jitter: 0.0,
    })
    .unwrap();
    let spec = PromptSpec::new(3, dims).unwrap();
    let map = LabelMap::new(4, 8).unwrap();
    let provenance = Provenance {
        model_id: "grad".into(),
        dataset: "task".into(),
        train_size: 0,
        conditions: vec![],
        epochs: 0,
        seed: 0,
        lr: 0.0,
        schedule: Schedule::Cosine,
    };
    let border = spec.border_indices();
    let step = 1e-3;
    let mut rng = rng_for(5, &[0x05]);
    let mut worst: f64 = 0.0;
    for prompt_idx in 0..5usize {
        let mut grid = vpaudit_core::Tensor64::zeros(dims);
        for &idx in &border {
            grid.data_mut()[idx] = rng.random_range(-0.5..0.5);
        }
        let prompt = Prompt::from_grid(spec, grid, provenance.clone()).unwrap();
        let image = &task.images[prompt_idx];
        let label = task.labels[prompt_idx];
        let grad = input_gradient(&model, image, &prompt, &map, label).unwrap();
        for _ in 0..10 {
            let idx = border[rng.random_range(0..border.len())];
            let loss_at = |delta: f64| {
                let mut g = prompt.values().clone();
                g.data_mut()[idx] += delta;
                let p = Prompt::from_grid(spec, g, provenance.clone()).unwrap();
                let prompted = apply_prompt(image, &p).unwrap();
                let logits = model.forward_one(&prompted).unwrap();
                vpaudit_core::nn::cross_entropy_mapped(&logits, 4, label).0
            };
            let fd = (loss_at(step) - loss_at(-step)) / (2.0 * step);
            let rel = (grad.data()[idx] - fd).abs() / fd.abs().max(1e-8);
            worst = worst.max(rel);
            assert!(rel < 1e-2, "prompt {prompt_idx} idx {idx}: rel err {rel}");
        }
    }
    pass(
        "criterion 05 (gradient correctness)",
        &format!("50 finite-difference checks; worst relative error {worst:.2e}"),
    );
}

#[test]
fn criterion_06_scaled_pia_size_inference() {
    let out = tempfile::tempdir().unwrap();
    let config = load_config("pia-size.toml", out.path());
    let ctx = StageCtx::new(&config, None).unwrap();
    stages::pretrain::run(&ctx).unwrap();
    let (shadow_count, target_count) = stages::pia::run_gen(&ctx).unwrap();
    assert_eq!(shadow_count, 100);
    assert_eq!(target_count, 40);
    let rows = stages::pia::run_attack(&ctx).unwrap();
    let row = &rows[0];
    assert_eq!(row.property, "size");
    assert!(
        row.accuracy >= 0.90,
        "size-inference accuracy {} below 0.90",
        row.accuracy
    );
    // frozen-model invariance across the whole run (criterion 3 rider)
    let model = ctx.model("base32").unwrap();
    assert_eq!(model.recompute_digest(), model.param_digest());
    pass(
        "criterion 06 (scaled PIA size inference)",
        &format!("accuracy {:.4} over 40 target prompts (>= 0.90)", row.accuracy),
    );
}

fn mia_rows_for(config_name: &str) -> Vec<vpaudit_core::report::MiaResultRow> {
    let out = tempfile::tempdir().unwrap();
    let config = load_config(config_name, out.path());
    let ctx = StageCtx::new(&config, None).unwrap();
    stages::pretrain::run(&ctx).unwrap();
    stages::mia::run_attack(&ctx).unwrap();
    // read back from the persisted CSV so the artifact chain is exercised
    let mut reader =
        csv::Reader::from_path(ctx.paths.results().join("mia.csv")).expect("mia.csv written");
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.unwrap();
        rows.push(vpaudit_core::report::MiaResultRow {
            attack_family: record[0].to_string(),
            metric: record[1].to_string(),
            target_model: record[2].to_string(),
            shadow_model: record[3].to_string(),
            target_dataset: record[4].to_string(),
            shadow_dataset: record[5].to_string(),
            accuracy: record[6].parse().unwrap(),
            overfit_gap: record[7].parse().unwrap(),
            seed: record[8].parse().unwrap(),
        });
    }
    rows
}

fn accuracy_of(rows: &[vpaudit_core::report::MiaResultRow], family: &str, metric: &str) -> f64 {
    rows.iter()
        .find(|r| r.attack_family == family && r.metric == metric)
        .unwrap_or_else(|| panic!("no row for {family}/{metric}"))
        .accuracy
}

#[test]
fn criterion_07_scaled_mia_overfit_and_control() {
    let overfit = mia_rows_for("mia-overfit.toml");
    let ment = accuracy_of(&overfit, "metric-based", "ment");
    let nn = accuracy_of(&overfit, "nn-based", "");
    let gradient = accuracy_of(&overfit, "gradient-based", "");
    assert!(ment >= 0.70, "overfit metric-ment accuracy {ment} below 0.70");
    assert!(nn > 0.55, "overfit NN-based accuracy {nn} not above 0.55");
    assert!(gradient > 0.55, "overfit gradient-based accuracy {gradient} not above 0.55");

    let control = mia_rows_for("mia-control.toml");
    let control_ment = accuracy_of(&control, "metric-based", "ment");
    assert!(
        control_ment <= 0.60,
        "low-overfit control metric-ment accuracy {control_ment} above 0.60"
    );
    pass(
        "criterion 07 (scaled MIA)",
        &format!(
            "overfit: ment {ment:.4}, nn {nn:.4}, gradient {gradient:.4}; control ment {control_ment:.4}"
        ),
    );
}

#[test]
fn criterion_08_overfitting_correlation() {
    let out = tempfile::tempdir().unwrap();
    let config = load_config("mia-study.toml", out.path());
    let ctx = StageCtx::new(&config, None).unwrap();
    stages::pretrain::run(&ctx).unwrap();
    stages::mia::run_attack(&ctx).unwrap();
    let rows =
        stages::mia::read_study_rows(&ctx.paths.results().join("mia_study.csv")).unwrap();
    assert!(rows.len() >= 30, "study produced only {} rows", rows.len());
    let gaps: Vec<f64> = rows.iter().map(|r| r.overfit_gap).collect();
    let accs: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
    let r = pearson(&gaps, &accs).unwrap();
    assert!(r >= 0.5, "Pearson(gap, ment accuracy) = {r} below 0.5");

    // monotone-risk trends on per-cell means, within +-0.05
    let mut cells: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for row in &rows {
        cells.entry((row.epochs, row.size)).or_default().push(row.accuracy);
    }
    let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let epochs_grid = [50usize, 100, 200, 400];
    let sizes_grid = [64usize, 128, 256];
    for &size in &sizes_grid {
        for pair in epochs_grid.windows(2) {
            let lo = mean(&cells[&(pair[0], size)]);
            let hi = mean(&cells[&(pair[1], size)]);
            assert!(
                hi >= lo - 0.05,
                "accuracy not non-decreasing in epochs at size {size}: {lo} -> {hi}"
            );
        }
    }
    for &epochs in &epochs_grid {
        for pair in sizes_grid.windows(2) {
            let small = mean(&cells[&(epochs, pair[0])]);
            let large = mean(&cells[&(epochs, pair[1])]);
            assert!(
                large <= small + 0.05,
                "accuracy not non-increasing in size at {epochs} epochs: {small} -> {large}"
            );
        }
    }
    // more epochs also means more overfitting (gap trend)
    let mut gap_cells: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for row in &rows {
        gap_cells.entry((row.epochs, row.size)).or_default().push(row.overfit_gap);
    }
    for &size in &sizes_grid {
        for pair in epochs_grid.windows(2) {
            let lo = mean(&gap_cells[&(pair[0], size)]);
            let hi = mean(&gap_cells[&(pair[1], size)]);
            assert!(
                hi >= lo - 0.05,
                "overfit gap not non-decreasing in epochs at size {size}: {lo} -> {hi}"
            );
        }
    }

    // the report stage renders the study figures from the persisted CSV
    let report = stages::report::run(&ctx).unwrap().expect("study report");
    assert!(report.summary.contains_key("study_pearson_gap_vs_accuracy"));
    for figure in ["overfit_vs_attack.svg", "epoch_effect.svg", "size_effect.svg"] {
        assert!(ctx.paths.plots().join(figure).exists(), "missing {figure}");
    }
    pass(
        "criterion 08 (overfitting correlation)",
        &format!("Pearson r = {r:.3} over {} runs (>= 0.5); trends monotone within 0.05", rows.len()),
    );
}

#[test]
fn criterion_09_defense_identity_and_tradeoff() {
    let out = tempfile::tempdir().unwrap();
    let config = load_config("defense-mia.toml", out.path());
    let ctx = StageCtx::new(&config, None).unwrap();
    stages::pretrain::run(&ctx).unwrap();
    let rows = stages::defend::run(&ctx).unwrap();
    let sigmas = config.defense.as_ref().unwrap().sigmas.clone();

    // identity at sigma = 0: both adversaries reproduce the undefended
    // numbers bit-exactly
    let zero_naive: Vec<_> = rows
        .iter()
        .filter(|r| r.sigma == 0.0 && !r.adaptive)
        .collect();
    let zero_adaptive: Vec<_> = rows
        .iter()
        .filter(|r| r.sigma == 0.0 && r.adaptive)
        .collect();
    assert_eq!(zero_naive.len(), zero_adaptive.len());
    for (a, b) in zero_naive.iter().zip(&zero_adaptive) {
        assert_eq!(a.family, b.family);
        assert!(a.utility == b.utility && a.accuracy == b.accuracy,
            "sigma=0 rows differ between adversaries: {a:?} vs {b:?}");
    }

    // monotone means within +-0.03 per step
    let mean_at = |sigma: f64, f: &dyn Fn(&vpaudit_core::defense::TradeoffRow) -> f64| -> f64 {
        let vals: Vec<f64> = rows.iter().filter(|r| r.sigma == sigma).map(|r| f(r)).collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    for pair in sigmas.windows(2) {
        let u0 = mean_at(pair[0], &|r| r.utility);
        let u1 = mean_at(pair[1], &|r| r.utility);
        assert!(u1 <= u0 + 0.03, "utility rose from {u0} to {u1} at sigma {}", pair[1]);
        let a0 = mean_at(pair[0], &|r| r.accuracy);
        let a1 = mean_at(pair[1], &|r| r.accuracy);
        assert!(a1 <= a0 + 0.03, "attack accuracy rose from {a0} to {a1} at sigma {}", pair[1]);
    }

    // trade-off existence: some sigma with every accuracy <= 0.55 and
    // utility >= 0.8x undefended
    let undefended_utility = zero_naive[0].utility;
    let undefended_best = zero_naive
        .iter()
        .map(|r| r.accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut found = None;
    for &sigma in &sigmas {
        if sigma == 0.0 {
            continue;
        }
        let at: Vec<_> = rows.iter().filter(|r| r.sigma == sigma).collect();
        let all_low = at.iter().all(|r| r.accuracy <= 0.55);
        let utility_ok = at.iter().all(|r| r.utility >= 0.8 * undefended_utility);
        if all_low && utility_ok {
            found = Some((sigma, at[0].utility));
            break;
        }
    }
    let (sigma, utility) = found.expect("no sigma satisfies the utility-defense trade-off");
    pass(
        "criterion 09 (defense trade-off)",
        &format!(
            "identity exact; monotone within 0.03; sigma {sigma} gives all attacks <= 0.55 \
             (undefended best {undefended_best:.3}) with utility {utility:.3} >= 0.8 x {undefended_utility:.3}"
        ),
    );
}

#[test]
fn criterion_10_metric_corr_robustness() {
    use vpaudit_core::model_zoo::{pretrain_base, ArchConfig, PretrainConfig};
    use vpaudit_core::vpl::{train_prompt, LabelMap, Schedule, TrainHyper};
    let dims = Dims::new(3, 16, 16);
    let make_model = |arch: &str, seed: u64| {
        let base = generate::<f32>(&SynthSpec {
            name: format!("base-{seed}"),
            classes: 8,
            channels: 3,
            height: 16,
            width: 16,
            samples: 256,
            attributes: vec![],
            signal: 0.25,
            signature: 0.0,
            noise: 0.1,
            seed: 500 + seed,
            pattern_seed: None,
            pattern_jitter: 0.0,
        })
        .unwrap();
        pretrain_base(
            &format!("{arch}-{seed}"),
            &base,
            &PretrainConfig {
                arch: ArchConfig::preset(arch).unwrap(),
                input_dims: dims,
                num_classes: 8,
                epochs: 6,
                lr: 2e-3,
                batch: 32,
            },
            seed,
        )
        .unwrap()
    };
    let target_model = make_model("cnn-e", 1);
    let task = generate::<f32>(&SynthSpec {
        name: "task".into(),
        classes: 4,
        channels: 3,
        height: 16,
        width: 16,
        samples: 256,
        attributes: vec![],
        signal: 0.2,
        signature: 0.35,
        noise: 0.1,
        seed: 808,
        pattern_seed: None,
        pattern_jitter: 0.0,
    })
    .unwrap();
    let pool: Vec<usize> = (0..task.len()).collect();
    let splits = make_splits(&pool, [48; 4], 6).unwrap();
    let map = LabelMap::new(4, 8).unwrap();
    let hyper = TrainHyper {
        epochs: 60,
        lr: 3.0,
        schedule: Schedule::Constant,
        batch: 8,
    };
    let target_prompt = train_prompt(
        &target_model,
        task.subset(&splits.target_train),
        PromptSpec::new(4, dims).unwrap(),
        &map,
        &hyper,
        31,
        vec![],
    )
    .unwrap();
    let target_feats = build_feature_set(
        &target_model,
        &target_prompt,
        task.subset(&splits.target_train),
        task.subset(&splits.target_test),
        &map,
        false,
    )
    .unwrap();
    let records: Vec<AttackRecord<f32>> = target_feats.metric_records(MetricKind::Corr).unwrap();

    // three shadow configurations: matched, swapped dataset, swapped model
    let mut decision_sets: Vec<Vec<bool>> = Vec::new();
    for (shadow_model, shadow_seed) in [(&target_model, 909u64), (&target_model, 910), (&make_model("cnn-a", 2), 911)]
    {
        let shadow_task = generate::<f32>(&SynthSpec {
            name: format!("shadow-{shadow_seed}"),
            classes: 4,
            channels: 3,
            height: 16,
            width: 16,
            samples: 256,
            attributes: vec![],
            signal: 0.2,
            signature: 0.35,
            noise: 0.1,
            seed: shadow_seed,
            pattern_seed: None,
            pattern_jitter: 0.0,
        })
        .unwrap();
        let shadow_pool: Vec<usize> = (0..shadow_task.len()).collect();
        let shadow_splits = make_splits(&shadow_pool, [48; 4], 7).unwrap();
        let shadow_prompt = train_prompt(
            shadow_model,
            shadow_task.subset(&shadow_splits.shadow_train),
            PromptSpec::new(4, dims).unwrap(),
            &map,
            &hyper,
            37,
            vec![],
        )
        .unwrap();
        let shadow_feats = build_feature_set(
            shadow_model,
            &shadow_prompt,
            shadow_task.subset(&shadow_splits.shadow_train),
            shadow_task.subset(&shadow_splits.shadow_test),
            &map,
            false,
        )
        .unwrap();
        let table = fit_thresholds(
            &shadow_feats.shadow_scores(MetricKind::Corr).unwrap(),
            MetricKind::Corr,
            ThresholdMode::ClassWise,
        )
        .unwrap();
        let attack = MembershipAttack::Metric(table);
        decision_sets.push(records.iter().map(|r| attack.decide(r).unwrap()).collect());
    }
    assert_eq!(decision_sets[0], decision_sets[1], "shadow dataset changed corr decisions");
    assert_eq!(decision_sets[0], decision_sets[2], "shadow model changed corr decisions");
    pass(
        "criterion 10 (metric-corr robustness)",
        &format!("{} target decisions identical across shadow swaps", records.len()),
    );
}

#[test]
fn criterion_11_determinism() {
    let bin = env!("CARGO_BIN_EXE_vpaudit");
    let config_path = configs_dir().join("tiny.toml");
    let out_a = tempfile::tempdir().unwrap();
    let out_b = tempfile::tempdir().unwrap();

    for out in [out_a.path(), out_b.path()] {
        for sub in ["pretrain", "prompt-train", "pia-gen", "pia-attack", "defend", "report"] {
            let status = std::process::Command::new(bin)
                .args([
                    sub,
                    "--config",
                    config_path.to_str().unwrap(),
                    "--out",
                    out.to_str().unwrap(),
                ])
                .output()
                .expect("binary runs");
            assert!(
                status.status.success(),
                "{sub} failed: {}",
                String::from_utf8_lossy(&status.stderr)
            );
        }
    }

    // every persisted artifact must be byte-identical between the runs
    fn walk(dir: &Path, base: &Path, files: &mut Vec<PathBuf>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, base, files);
            } else {
                files.push(path.strip_prefix(base).unwrap().to_path_buf());
            }
        }
    }
    let mut files_a = Vec::new();
    walk(out_a.path(), out_a.path(), &mut files_a);
    files_a.sort();
    let mut files_b = Vec::new();
    walk(out_b.path(), out_b.path(), &mut files_b);
    files_b.sort();
    assert_eq!(files_a, files_b, "run directories list different files");
    assert!(files_a.len() > 10, "suspiciously few artifacts: {files_a:?}");
    for rel in &files_a {
        let a = std::fs::read(out_a.path().join(rel)).unwrap();
        let b = std::fs::read(out_b.path().join(rel)).unwrap();
        assert_eq!(a, b, "artifact {} differs between identical runs", rel.display());
    }
    pass(
        "criterion 11 (determinism)",
        &format!("{} artifacts byte-identical across two full runs", files_a.len()),
    );
}
