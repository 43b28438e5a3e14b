//! Finite-difference oracle for analytic prompt gradients.
//!
//! Runs in f64: the oracle itself must not be limited by float noise.

use rand::Rng;
use vpaudit_core::data::{generate, SynthSpec};
use vpaudit_core::model_zoo::{input_gradient, pretrain_base, ArchConfig, PretrainConfig};
use vpaudit_core::rng::rng_for;
use vpaudit_core::vpl::{apply_prompt, LabelMap, Prompt, PromptSpec, Provenance, Schedule};
use vpaudit_core::{Dims, Tensor64};

fn provenance() -> Provenance {
    Provenance {
        model_id: "oracle".into(),
        dataset: "task".into(),
        train_size: 0,
        conditions: vec![],
        epochs: 0,
        seed: 0,
        lr: 0.0,
        schedule: Schedule::Cosine,
    }
}

fn setup() -> (
    vpaudit_core::Classifier64,
    vpaudit_core::Dataset64,
    PromptSpec,
    LabelMap,
) {
    let dims = Dims::new(3, 16, 16);
    let base = generate::<f64>(&SynthSpec {
        name: "base".into(),
        classes: 8,
        channels: 3,
        height: 16,
        width: 16,
        samples: 96,
        attributes: vec![],
        signal: 0.35,
        signature: 0.0,
        noise: 0.05,
        seed: 41,
        pattern_seed: None,
        pattern_jitter: 0.0,
    })
    .unwrap();
    let model = pretrain_base(
        "oracle",
        &base,
        &PretrainConfig {
            arch: ArchConfig::preset("cnn-e").unwrap(),
            input_dims: dims,
            num_classes: 8,
            epochs: 2,
            lr: 1e-3,
            batch: 32,
        },
        7,
    )
    .unwrap();
    let task = generate::<f64>(&SynthSpec {
        name: "task".into(),
        classes: 4,
        channels: 3,
        height: 16,
        width: 16,
        samples: 8,
        attributes: vec![],
        signal: 0.3,
        signature: 0.2,
        noise: 0.1,
        seed: 42,
        pattern_seed: None,
        pattern_jitter: 0.0,
    })
    .unwrap();
    let spec = PromptSpec::new(3, dims).unwrap();
    let map = LabelMap::new(4, 8).unwrap();
    (model, task, spec, map)
}

fn random_prompt(spec: PromptSpec, seed: u64) -> Prompt<f64> {
    let mut rng = rng_for(seed, &[0xf00]);
    let mut grid = Tensor64::zeros(spec.dims);
    for &idx in &spec.border_indices() {
        grid.data_mut()[idx] = rng.random_range(-0.5..0.5);
    }
    Prompt::from_grid(spec, grid, provenance()).unwrap()
}

fn loss_at(
    model: &vpaudit_core::Classifier64,
    image: &Tensor64,
    prompt: &Prompt<f64>,
    n: usize,
    label: usize,
) -> f64 {
    let prompted = apply_prompt(image, prompt).unwrap();
    let logits = model.forward_one(&prompted).unwrap();
    vpaudit_core::nn::cross_entropy_mapped(&logits, n, label).0
}

#[test]
fn central_differences_match_at_random_border_coordinates() {
    let (model, task, spec, map) = setup();
    let border = spec.border_indices();
    let step = 1e-3;
    let mut rng = rng_for(99, &[0xfd]);

    for prompt_idx in 0..5u64 {
        let prompt = random_prompt(spec, prompt_idx);
        let image = &task.images[prompt_idx as usize % task.len()];
        let label = task.labels[prompt_idx as usize % task.len()];
        let grad = input_gradient(&model, image, &prompt, &map, label).unwrap();

        for _ in 0..10 {
            let idx = border[rng.random_range(0..border.len())];
            let perturbed = |delta: f64| {
                let mut grid = prompt.values().clone();
                grid.data_mut()[idx] += delta;
                Prompt::from_grid(spec, grid, provenance()).unwrap()
            };
            let fd = (loss_at(&model, image, &perturbed(step), 4, label)
                - loss_at(&model, image, &perturbed(-step), 4, label))
                / (2.0 * step);
            let analytic = grad.data()[idx];
            let rel = (analytic - fd).abs() / fd.abs().max(1e-8);
            assert!(
                rel < 1e-2,
                "prompt {prompt_idx} idx {idx}: analytic {analytic} vs fd {fd} (rel {rel})"
            );
        }
    }
}

#[test]
fn gradient_is_zero_off_border() {
    let (model, task, spec, map) = setup();
    let prompt = random_prompt(spec, 3);
    let grad = input_gradient(&model, &task.images[0], &prompt, &map, task.labels[0]).unwrap();
    for y in 0..16 {
        for x in 0..16 {
            if spec.is_interior(y, x) {
                for c in 0..3 {
                    assert_eq!(grad.at(c, y, x), 0.0);
                }
            }
        }
    }
}

#[test]
fn gradient_scales_linearly_with_duplicated_samples() {
    let (model, task, spec, map) = setup();
    let prompt = random_prompt(spec, 5);
    let single = input_gradient(&model, &task.images[1], &prompt, &map, task.labels[1]).unwrap();
    // summing the per-sample gradients of two copies doubles the single one
    let doubled = single.add(&single).unwrap();
    for (a, b) in doubled.data().iter().zip(single.data()) {
        assert!((a - 2.0 * b).abs() <= 1e-6 * b.abs().max(1.0));
    }
}

#[test]
fn out_of_range_label_is_rejected() {
    let (model, task, spec, map) = setup();
    let prompt = random_prompt(spec, 6);
    assert!(input_gradient(&model, &task.images[0], &prompt, &map, 4).is_err());
}
