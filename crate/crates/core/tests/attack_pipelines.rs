//! Cross-module behavior of the two attack engines at miniature scale.

use std::collections::HashSet;

use vpaudit_core::data::{generate, split_fractions, SynthSpec};
use vpaudit_core::mia::{
    build_feature_set, evaluate_mia, fit_thresholds, make_splits, AttackRecord, FeaturePayload,
    MembershipAttack, MetricKind, ThresholdMode,
};
use vpaudit_core::model_zoo::{
    input_gradient, pretrain_base, ArchConfig, FrozenClassifier, PretrainConfig,
};
use vpaudit_core::pia::{
    evaluate_pia, generate_prompt_set, load_prompt_set, save_prompt_set, train_pia_model,
    PiaAttackHyper, PromptSetRole,
};
use vpaudit_core::sampler::{CondValue, PropertyKind, PropertySpec};
use vpaudit_core::vpl::{LabelMap, PromptSpec, Schedule, TrainHyper};
use vpaudit_core::{Dataset32, Dims};

fn synth(name: &str, classes: usize, samples: usize, signature: f64, seed: u64) -> SynthSpec {
    SynthSpec {
        name: name.into(),
        classes,
        channels: 3,
        height: 16,
        width: 16,
        samples,
        attributes: vec![],
        signal: 0.25,
        signature,
        noise: 0.1,
        seed,
        pattern_seed: None,
        pattern_jitter: 0.0,
    }
}

fn small_model(arch: &str, seed: u64) -> FrozenClassifier<f32> {
    let base = generate::<f32>(&synth("base", 8, 256, 0.0, 1000 + seed)).unwrap();
    pretrain_base(
        &format!("{arch}-{seed}"),
        &base,
        &PretrainConfig {
            arch: ArchConfig::preset(arch).unwrap(),
            input_dims: Dims::new(3, 16, 16),
            num_classes: 8,
            epochs: 6,
            lr: 2e-3,
            batch: 32,
        },
        seed,
    )
    .unwrap()
}

fn quick_hyper(epochs: usize) -> TrainHyper {
    TrainHyper {
        epochs,
        lr: 5.0,
        schedule: Schedule::Cosine,
        batch: 16,
    }
}

#[test]
fn pia_sets_are_disjoint_balanced_and_solvable() {
    let model = small_model("cnn-e", 3);
    let digest_before = model.param_digest().to_string();
    let ds: Dataset32 = generate(&synth("task", 4, 700, 0.1, 7)).unwrap();
    let pools = split_fractions(ds.len(), &[0.475, 0.475, 0.05], 5).unwrap();
    let map = LabelMap::new(4, 8).unwrap();
    let spec = PromptSpec::new(3, ds.dims).unwrap();
    let props = vec![(
        PropertySpec {
            name: "size".into(),
            kind: PropertyKind::DatasetSize,
        },
        vec![CondValue::Size(32), CondValue::Size(128)],
    )];

    let shadow = generate_prompt_set(
        &ds,
        &pools[1],
        &model,
        &props,
        8,
        spec,
        &map,
        &quick_hyper(12),
        PromptSetRole::Shadow,
        100,
    )
    .unwrap();
    let target = generate_prompt_set(
        &ds,
        &pools[0],
        &model,
        &props,
        3,
        spec,
        &map,
        &quick_hyper(12),
        PromptSetRole::Target,
        200,
    )
    .unwrap();

    // prompt training never moved the frozen parameters
    assert_eq!(model.recompute_digest(), digest_before);

    // disjoint provenance: no target-prompt training index in any shadow subset
    let shadow_indices: HashSet<usize> = shadow.all_indices().into_iter().collect();
    for manifest in &target.subsets {
        assert!(manifest.indices.iter().all(|i| !shadow_indices.contains(i)));
    }

    // balance within +-1 per label
    let labels = shadow.set.labels_for("size").unwrap();
    let count32 = labels.iter().filter(|l| *l == "32").count();
    let count128 = labels.iter().filter(|l| *l == "128").count();
    assert!(count32.abs_diff(count128) <= 1);
    assert_eq!(shadow.set.len(), 16);
    assert_eq!(target.set.len(), 6);

    // set persistence round-trips
    let dir = tempfile::tempdir().unwrap();
    save_prompt_set(dir.path(), "shadow", &shadow.set).unwrap();
    let loaded = load_prompt_set::<f32>(dir.path(), "shadow").unwrap();
    assert_eq!(loaded.len(), shadow.set.len());
    assert_eq!(loaded.prompts[3].values(), shadow.set.prompts[3].values());
    assert_eq!(loaded.phis, shadow.set.phis);

    // the size property is learnable even at this miniature scale
    let attack = train_pia_model(
        &shadow.set,
        "size",
        Dims::new(3, 16, 16),
        &PiaAttackHyper {
            epochs: 60,
            lr: 1e-3,
            batch: 8,
        },
        11,
    )
    .unwrap();
    let acc = evaluate_pia(&attack, &target.set).unwrap();
    assert!(acc > 0.5, "size inference at chance: {acc}");
}

#[test]
fn multi_valued_size_property_beats_chance() {
    let model = small_model("cnn-e", 4);
    let ds: Dataset32 = generate(&synth("task", 4, 900, 0.1, 8)).unwrap();
    let pools = split_fractions(ds.len(), &[0.475, 0.475, 0.05], 6).unwrap();
    let map = LabelMap::new(4, 8).unwrap();
    let spec = PromptSpec::new(3, ds.dims).unwrap();
    let sizes = [16usize, 64, 256];
    let props = vec![(
        PropertySpec {
            name: "size".into(),
            kind: PropertyKind::DatasetSize,
        },
        sizes.iter().map(|&n| CondValue::Size(n)).collect(),
    )];

    let shadow = generate_prompt_set(
        &ds, &pools[1], &model, &props, 10, spec, &map, &quick_hyper(10),
        PromptSetRole::Shadow, 300,
    )
    .unwrap();
    let target = generate_prompt_set(
        &ds, &pools[0], &model, &props, 4, spec, &map, &quick_hyper(10),
        PromptSetRole::Target, 400,
    )
    .unwrap();
    let attack = train_pia_model(
        &shadow.set,
        "size",
        Dims::new(3, 16, 16),
        &PiaAttackHyper {
            epochs: 60,
            lr: 1e-3,
            batch: 8,
        },
        12,
    )
    .unwrap();
    assert_eq!(attack.labels.len(), 3);
    let acc = evaluate_pia(&attack, &target.set).unwrap();
    // chance is 1/3 on the balanced 12-prompt target set
    assert!(
        acc > 2.0 / 3.0,
        "multi-class size inference too weak: {acc}"
    );
}

fn mia_fixture() -> (
    FrozenClassifier<f32>,
    Dataset32,
    vpaudit_core::mia::MiaSplits,
    LabelMap,
    vpaudit_core::vpl::Prompt<f32>,
) {
    let model = small_model("cnn-e", 5);
    let ds: Dataset32 = generate(&synth("task", 4, 200, 0.35, 9)).unwrap();
    let pool: Vec<usize> = (0..ds.len()).collect();
    let splits = make_splits(&pool, [32; 4], 3).unwrap();
    let map = LabelMap::new(4, 8).unwrap();
    let spec = PromptSpec::new(4, ds.dims).unwrap();
    let prompt = vpaudit_core::vpl::train_prompt(
        &model,
        ds.subset(&splits.target_train),
        spec,
        &map,
        &quick_hyper(40),
        17,
        vec![],
    )
    .unwrap();
    (model, ds, splits, map, prompt)
}

#[test]
fn feature_bundles_are_internally_consistent() {
    let (model, ds, splits, map, prompt) = mia_fixture();
    let feats = build_feature_set(
        &model,
        &prompt,
        ds.subset(&splits.target_train),
        ds.subset(&splits.target_test),
        &map,
        true,
    )
    .unwrap();
    let records = feats.gradient_records().unwrap();
    assert_eq!(records.len(), 64);
    assert_eq!(records.iter().filter(|r| r.member).count(), 32);

    for (i, record) in records.iter().enumerate() {
        let (view, label, member) = if i < 32 {
            (ds.subset(&splits.target_train), ds.labels[splits.target_train[i]], true)
        } else {
            let j = i - 32;
            (ds.subset(&splits.target_test), ds.labels[splits.target_test[j]], false)
        };
        let image = view.image(i % 32);
        assert_eq!(record.member, member);
        assert_eq!(record.true_class, label);
        let FeaturePayload::GradientBundle {
            gradient,
            top5,
            loss,
            correct,
        } = &record.payload
        else {
            panic!("expected gradient bundle")
        };
        // top5 sorted descending, in [0,1], summing to at most 1 + eps
        assert!(top5.windows(2).all(|w| w[0] >= w[1]));
        assert!(top5.iter().all(|&p| (0.0..=1.0).contains(&p)));
        assert!(top5.iter().sum::<f32>() <= 1.0 + 1e-5);

        // loss equals -ln(posterior[true]) of an independent forward pass
        let prompted = vpaudit_core::vpl::apply_prompt(image, &prompt).unwrap();
        let logits = model.forward_one(&prompted).unwrap();
        let posterior = vpaudit_core::tensor::softmax(&logits[..4]);
        let expected_loss = -(posterior[label].max(1e-12)).ln();
        assert!((loss - expected_loss).abs() < 1e-6);

        // indicator consistent with argmax vs true label
        let predicted = vpaudit_core::tensor::argmax(&posterior);
        assert_eq!(*correct == 1, predicted == label);

        // gradient equals the input-gradient operation bit for bit
        let reference = input_gradient(&model, image, &prompt, &map, label).unwrap();
        assert_eq!(gradient.as_slice(), reference.data());
    }
}

#[test]
fn overfitting_level_arithmetic() {
    let (model, ds, splits, map, prompt) = mia_fixture();
    // identical train/test sets -> exactly zero
    let zero = vpaudit_core::mia::overfitting_level(
        &model,
        &prompt,
        &map,
        ds.subset(&splits.target_train),
        ds.subset(&splits.target_train),
    )
    .unwrap();
    assert_eq!(zero, 0.0);
    // gap equals the difference of the two accuracies
    let train_acc =
        vpaudit_core::vpl::evaluate_prompt(&model, &prompt, &map, ds.subset(&splits.target_train))
            .unwrap();
    let test_acc =
        vpaudit_core::vpl::evaluate_prompt(&model, &prompt, &map, ds.subset(&splits.target_test))
            .unwrap();
    let gap = vpaudit_core::mia::overfitting_level(
        &model,
        &prompt,
        &map,
        ds.subset(&splits.target_train),
        ds.subset(&splits.target_test),
    )
    .unwrap();
    assert!((gap - (train_acc - test_acc)).abs() < 1e-12);
    assert!((-1.0..=1.0).contains(&gap));
}

#[test]
fn metric_corr_is_shadow_independent() {
    let (model, ds, splits, map, prompt) = mia_fixture();
    let target_feats = build_feature_set(
        &model,
        &prompt,
        ds.subset(&splits.target_train),
        ds.subset(&splits.target_test),
        &map,
        false,
    )
    .unwrap();
    let records = target_feats.metric_records(MetricKind::Corr).unwrap();

    // two wildly different shadow configurations
    let shadow_a = build_feature_set(
        &model,
        &prompt,
        ds.subset(&splits.shadow_train),
        ds.subset(&splits.shadow_test),
        &map,
        false,
    )
    .unwrap();
    let other_model = small_model("cnn-a", 31);
    let other_ds: Dataset32 = generate(&synth("other", 4, 200, 0.0, 77)).unwrap();
    let other_pool: Vec<usize> = (0..other_ds.len()).collect();
    let other_splits = make_splits(&other_pool, [32; 4], 5).unwrap();
    let other_prompt = vpaudit_core::vpl::train_prompt(
        &other_model,
        other_ds.subset(&other_splits.shadow_train),
        PromptSpec::new(4, other_ds.dims).unwrap(),
        &map,
        &quick_hyper(5),
        19,
        vec![],
    )
    .unwrap();
    let shadow_b = build_feature_set(
        &other_model,
        &other_prompt,
        other_ds.subset(&other_splits.shadow_train),
        other_ds.subset(&other_splits.shadow_test),
        &map,
        false,
    )
    .unwrap();

    let decide_all = |shadow: &vpaudit_core::mia::FeatureSet<f32>| -> Vec<bool> {
        let table = fit_thresholds(
            &shadow.shadow_scores(MetricKind::Corr).unwrap(),
            MetricKind::Corr,
            ThresholdMode::ClassWise,
        )
        .unwrap();
        let attack = MembershipAttack::Metric(table);
        records.iter().map(|r| attack.decide(r).unwrap()).collect()
    };
    let decisions_a = decide_all(&shadow_a);
    let decisions_b = decide_all(&shadow_b);
    assert_eq!(decisions_a, decisions_b, "metric-corr depended on the shadow");
}

#[test]
fn class_missing_from_shadow_falls_back_to_overall() {
    let (model, ds, splits, map, prompt) = mia_fixture();
    let shadow_feats = build_feature_set(
        &model,
        &prompt,
        ds.subset(&splits.shadow_train),
        ds.subset(&splits.shadow_test),
        &map,
        false,
    )
    .unwrap();
    // drop every class-0 shadow score to simulate a cross-distribution shadow
    let scores: Vec<_> = shadow_feats
        .shadow_scores(MetricKind::Ment)
        .unwrap()
        .into_iter()
        .filter(|s| s.class != 0)
        .collect();
    let table = fit_thresholds(&scores, MetricKind::Ment, ThresholdMode::ClassWise).unwrap();
    assert!(!table.fitted_classes().contains(&0));
    let tau_for_missing = table.threshold_for(0).expect("overall fallback");
    // evaluating class-0 records still works (and uses the overall threshold)
    let target_feats = build_feature_set(
        &model,
        &prompt,
        ds.subset(&splits.target_train),
        ds.subset(&splits.target_test),
        &map,
        false,
    )
    .unwrap();
    let records: Vec<AttackRecord<f32>> = target_feats
        .metric_records(MetricKind::Ment)
        .unwrap()
        .into_iter()
        .filter(|r| r.true_class == 0)
        .collect();
    assert!(!records.is_empty());
    let attack = MembershipAttack::Metric(table);
    let acc = evaluate_mia(&attack, &records).unwrap();
    assert!((0.0..=1.0).contains(&acc));
    // and the decision at the fallback threshold matches a direct comparison
    if let FeaturePayload::MetricScore { score, .. } = &records[0].payload {
        assert_eq!(
            attack.decide(&records[0]).unwrap(),
            *score <= tau_for_missing
        );
    }
}
