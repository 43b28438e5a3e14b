//! Property inference: shadow/target prompt sets over the cross product of
//! condition values (mixed setting), prompt-canvas encoding, and the
//! canvas-classifier attack model.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::optim::Adam;
use crate::nn::{cross_entropy_mapped, digest_param_arrays, Gradients, LayerSpec, Network};
use crate::rng::{derive_seed, rng_for};
use crate::sampler::{cell_counts, sample_subset, CondValue, PropertySpec, SubsetManifest};
use crate::scalar::Scalar;
use crate::tensor::{argmax, Dims, Tensor3};
use crate::vpl::{train_prompt, ConditionBinding, LabelMap, Prompt, PromptSpec, TrainHyper};

/// Whether a prompt set plays the adversary's (shadow) or provider's
/// (target) role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptSetRole {
    Shadow,
    Target,
}

impl PromptSetRole {
    fn tag(self) -> u64 {
        match self {
            PromptSetRole::Shadow => 0x53_48,
            PromptSetRole::Target => 0x54_47,
        }
    }
}

/// One sampling function of the mixed setting: a full condition vector
/// plus the subset size it implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingFunction {
    pub phi: Vec<CondValue>,
    pub subset_size: usize,
}

/// Enumerate the cross product of all condition values.
///
/// With k properties of v values each this yields v^k functions, so
/// non-target conditions vary realistically across the set. Size-kind
/// properties set the subset size; otherwise `default_size` applies.
pub fn sampling_functions(
    properties: &[(PropertySpec, Vec<CondValue>)],
    default_size: usize,
) -> Result<Vec<SamplingFunction>> {
    for (spec, values) in properties {
        if values.is_empty() {
            return Err(Error::Input(format!(
                "property '{}' has no condition values",
                spec.name
            )));
        }
    }
    let mut functions = vec![SamplingFunction {
        phi: Vec::new(),
        subset_size: default_size,
    }];
    for (spec, values) in properties {
        let mut next = Vec::with_capacity(functions.len() * values.len());
        for f in &functions {
            for value in values {
                let mut phi = f.phi.clone();
                phi.push(*value);
                let subset_size = match value {
                    CondValue::Size(n) => *n,
                    CondValue::Proportion(_) => f.subset_size,
                };
                let _ = spec;
                next.push(SamplingFunction { phi, subset_size });
            }
        }
        functions = next;
    }
    Ok(functions)
}

/// A set of prompts with their generating condition vectors.
#[derive(Debug, Clone)]
pub struct ShadowPromptSet<T> {
    pub role: PromptSetRole,
    pub property_specs: Vec<PropertySpec>,
    pub prompts: Vec<Prompt<T>>,
    pub phis: Vec<Vec<CondValue>>,
}

impl<T: Scalar> ShadowPromptSet<T> {
    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    fn property_index(&self, property: &str) -> Result<usize> {
        self.property_specs
            .iter()
            .position(|p| p.name == property)
            .ok_or_else(|| Error::Input(format!("prompt set tracks no property '{property}'")))
    }

    /// Per-prompt condition labels for one property.
    pub fn labels_for(&self, property: &str) -> Result<Vec<String>> {
        let idx = self.property_index(property)?;
        Ok(self.phis.iter().map(|phi| phi[idx].label()).collect())
    }
}

/// Train one prompt per (sampling function, run) pair.
///
/// Prompts are independent jobs (parallelized, merged by index); each job's
/// subset draw and training stream derive from `seed`, the function index,
/// and the run index, so the set is reproducible regardless of scheduling.
#[allow(clippy::too_many_arguments)]
pub fn generate_prompt_set<T: Scalar>(
    dataset: &Dataset<T>,
    pool: &[usize],
    model: &crate::model_zoo::FrozenClassifier<T>,
    properties: &[(PropertySpec, Vec<CondValue>)],
    runs_per_function: usize,
    prompt_spec: PromptSpec,
    label_map: &LabelMap,
    hyper: &TrainHyper,
    role: PromptSetRole,
    seed: u64,
) -> Result<GeneratedPromptSet<T>> {
    let default_size = pool.len().min(256).max(1);
    let functions = sampling_functions(properties, default_size)?;
    let specs: Vec<PropertySpec> = properties.iter().map(|(s, _)| s.clone()).collect();

    let jobs: Vec<(usize, usize)> = (0..functions.len())
        .flat_map(|fi| (0..runs_per_function).map(move |run| (fi, run)))
        .collect();

    let results: Vec<(Prompt<T>, Vec<CondValue>, SubsetManifest)> = jobs
        .par_iter()
        .map(|&(fi, run)| {
            let function = &functions[fi];
            let plan = cell_counts(&specs, &function.phi, function.subset_size)?;
            let sample_seed = derive_seed(seed, &[role.tag(), fi as u64, run as u64, 0]);
            let indices = sample_subset(dataset, pool, &plan, sample_seed)?;
            let conditions: Vec<ConditionBinding> = specs
                .iter()
                .zip(&function.phi)
                .map(|(spec, value)| ConditionBinding {
                    property: spec.name.clone(),
                    value: value.label(),
                })
                .collect();
            let train_seed = derive_seed(seed, &[role.tag(), fi as u64, run as u64, 1]);
            let prompt = train_prompt(
                model,
                dataset.subset(&indices),
                prompt_spec,
                label_map,
                hyper,
                train_seed,
                conditions,
            )?;
            let manifest = SubsetManifest {
                plan,
                seed: sample_seed,
                indices,
            };
            Ok((prompt, function.phi.clone(), manifest))
        })
        .collect::<Result<_>>()?;

    let mut prompts = Vec::with_capacity(results.len());
    let mut phis = Vec::with_capacity(results.len());
    let mut subsets = Vec::with_capacity(results.len());
    for (prompt, phi, manifest) in results {
        prompts.push(prompt);
        phis.push(phi);
        subsets.push(manifest);
    }
    Ok(GeneratedPromptSet {
        set: ShadowPromptSet {
            role,
            property_specs: specs,
            prompts,
            phis,
        },
        subsets,
    })
}

/// A generated prompt set together with the subset draws that produced it.
#[derive(Debug, Clone)]
pub struct GeneratedPromptSet<T> {
    pub set: ShadowPromptSet<T>,
    pub subsets: Vec<SubsetManifest>,
}

impl<T: Scalar> GeneratedPromptSet<T> {
    /// Indices used to train any prompt of the set (disjointness checks).
    pub fn all_indices(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .subsets
            .iter()
            .flat_map(|m| m.indices.iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Manifest entry for one persisted prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSetEntry {
    pub file: String,
    pub phi: Vec<CondValue>,
}

/// Persisted description of a prompt set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSetManifest {
    pub role: PromptSetRole,
    pub property_specs: Vec<PropertySpec>,
    pub entries: Vec<PromptSetEntry>,
}

/// Write prompt files (`<prefix>-NNNN.vpp`) plus a `<prefix>-set.json`
/// manifest into `dir`.
pub fn save_prompt_set<T: Scalar>(
    dir: &Path,
    prefix: &str,
    set: &ShadowPromptSet<T>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(set.len());
    for (i, (prompt, phi)) in set.prompts.iter().zip(&set.phis).enumerate() {
        let file = format!("{prefix}-{i:04}.vpp");
        crate::vpl::save_prompt(&dir.join(&file), prompt)?;
        entries.push(PromptSetEntry {
            file,
            phi: phi.clone(),
        });
    }
    let manifest = PromptSetManifest {
        role: set.role,
        property_specs: set.property_specs.clone(),
        entries,
    };
    fs::write(
        dir.join(format!("{prefix}-set.json")),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Load a prompt set previously written by [`save_prompt_set`].
pub fn load_prompt_set<T: Scalar>(dir: &Path, prefix: &str) -> Result<ShadowPromptSet<T>> {
    let manifest_path = dir.join(format!("{prefix}-set.json"));
    if !manifest_path.exists() {
        return Err(Error::Input(format!(
            "no prompt-set manifest at {}",
            manifest_path.display()
        )));
    }
    let manifest: PromptSetManifest = serde_json::from_slice(&fs::read(&manifest_path)?)?;
    let mut prompts = Vec::with_capacity(manifest.entries.len());
    let mut phis = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        prompts.push(crate::vpl::load_prompt(&dir.join(&entry.file))?);
        phis.push(entry.phi.clone());
    }
    Ok(ShadowPromptSet {
        role: manifest.role,
        property_specs: manifest.property_specs,
        prompts,
        phis,
    })
}

/// Pad a prompt grid into the attack model's input canvas.
///
/// The grid is copied at the origin-aligned corner (never rescaled); every
/// other canvas cell is zero.
pub fn encode_canvas<T: Scalar>(prompt: &Prompt<T>, canvas_dims: Dims) -> Result<Tensor3<T>> {
    let src = prompt.spec().dims;
    if src.c > canvas_dims.c || src.h > canvas_dims.h || src.w > canvas_dims.w {
        return Err(Error::Encoding(format!(
            "prompt grid {src} does not fit canvas {canvas_dims}"
        )));
    }
    let mut canvas = Tensor3::zeros(canvas_dims);
    for c in 0..src.c {
        for y in 0..src.h {
            for x in 0..src.w {
                *canvas.at_mut(c, y, x) = prompt.values().at(c, y, x);
            }
        }
    }
    Ok(canvas)
}

/// Attack-model hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PiaAttackHyper {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
}

impl Default for PiaAttackHyper {
    fn default() -> Self {
        // 100 epochs over the shadow set; the literature default rate of
        // 1e-5 assumes a pre-trained backbone, so from-scratch desk runs
        // configure it upward.
        Self {
            epochs: 100,
            lr: 1e-3,
            batch: 16,
        }
    }
}

/// Canvas classifier: conv feature extractor plus a linear head over the
/// property's condition values.
#[derive(Debug, Clone)]
pub struct PiaAttackModel<T> {
    net: Network<T>,
    canvas_dims: Dims,
    pub property: String,
    /// Sorted distinct condition labels; network class i predicts labels[i].
    pub labels: Vec<String>,
}

fn attack_net_specs(canvas: Dims, num_labels: usize) -> Result<Vec<LayerSpec>> {
    if canvas.h % 4 != 0 || canvas.w % 4 != 0 {
        return Err(Error::Encoding(format!(
            "attack canvas {canvas} must have height and width divisible by 4"
        )));
    }
    Ok(vec![
        LayerSpec::Conv { out_c: 6, kernel: 3 },
        LayerSpec::Tanh,
        LayerSpec::AvgPool(2),
        LayerSpec::Conv { out_c: 12, kernel: 3 },
        LayerSpec::Tanh,
        LayerSpec::AvgPool(2),
        LayerSpec::Dense {
            out_dim: num_labels,
        },
    ])
}

impl<T: Scalar> PiaAttackModel<T> {
    pub fn params_digest(&self) -> String {
        digest_param_arrays(&self.net.param_arrays())
    }

    pub fn canvas_dims(&self) -> Dims {
        self.canvas_dims
    }
}

/// Train the property-inference attack model on a shadow prompt set.
pub fn train_pia_model<T: Scalar>(
    shadow_set: &ShadowPromptSet<T>,
    property: &str,
    canvas_dims: Dims,
    hyper: &PiaAttackHyper,
    seed: u64,
) -> Result<PiaAttackModel<T>> {
    let label_strings = shadow_set.labels_for(property)?;
    let mut labels: Vec<String> = label_strings.clone();
    labels.sort();
    labels.dedup();
    if labels.len() < 2 {
        return Err(Error::Training {
            epoch: 0,
            message: format!(
                "shadow set carries a single condition value for '{property}'"
            ),
        });
    }
    let classes: Vec<usize> = label_strings
        .iter()
        .map(|l| labels.iter().position(|x| x == l).unwrap())
        .collect();

    let canvases: Vec<Tensor3<T>> = shadow_set
        .prompts
        .iter()
        .map(|p| encode_canvas(p, canvas_dims))
        .collect::<Result<_>>()?;

    let mut net = Network::<T>::build(
        canvas_dims,
        &attack_net_specs(canvas_dims, labels.len())?,
        derive_seed(seed, &[0x70_69_61]),
    )?;
    let mut adam = Adam::new_for(&net, hyper.lr);
    let mut grads = Gradients::zeros_like(&net);
    let mut order: Vec<usize> = (0..canvases.len()).collect();
    let mut rng = rng_for(seed, &[0x70_69_61_74]);
    let k = labels.len();

    for epoch in 0..hyper.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch.max(1)) {
            grads.reset();
            let mut batch_loss = T::zero();
            for &idx in batch {
                let trace = net.forward_trace(canvases[idx].data())?;
                let (loss, dlogits) = cross_entropy_mapped(net.output(&trace), k, classes[idx]);
                batch_loss += loss;
                net.backward(&trace, dlogits, Some(&mut grads));
            }
            if !batch_loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: "non-finite attack-model loss".into(),
                });
            }
            grads.scale(T::from_f64_lossy(1.0 / batch.len() as f64));
            adam.step_network(&mut net, &grads);
        }
    }

    Ok(PiaAttackModel {
        net,
        canvas_dims,
        property: property.to_string(),
        labels,
    })
}

/// Predicted condition value for one target prompt.
pub fn infer_property<T: Scalar>(
    model: &PiaAttackModel<T>,
    prompt: &Prompt<T>,
) -> Result<String> {
    let canvas = encode_canvas(prompt, model.canvas_dims)?;
    let logits = model.net.forward(canvas.data())?;
    Ok(model.labels[argmax(&logits)].clone())
}

/// Attack accuracy over a target prompt set.
pub fn evaluate_pia<T: Scalar>(
    model: &PiaAttackModel<T>,
    target_set: &ShadowPromptSet<T>,
) -> Result<f64> {
    if target_set.is_empty() {
        return Err(Error::Input("target prompt set is empty".into()));
    }
    let truth = target_set.labels_for(&model.property)?;
    let mut correct = 0usize;
    for (prompt, expected) in target_set.prompts.iter().zip(&truth) {
        if infer_property(model, prompt)? == *expected {
            correct += 1;
        }
    }
    Ok(correct as f64 / target_set.len() as f64)
}
