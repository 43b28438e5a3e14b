//! Frozen image classifiers: desk-scale convolutional surrogates with a
//! registry, deterministic pre-training, forward evaluation, and
//! input-gradient access.
//!
//! A classifier's parameters are fixed at construction; everything
//! downstream (prompt training, attacks) only ever reads them. Frozen-ness
//! is testable through `param_digest`, an order-stable SHA-256 over the
//! serialized parameter arrays.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::optim::Adam;
use crate::nn::{cross_entropy_mapped, Gradients, LayerSpec, Network};
use crate::rng::rng_for;
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor3};
use crate::vpl::{LabelMap, Prompt};

const BLOB_MAGIC: &[u8; 4] = b"VPMB";
const BLOB_VERSION: u32 = 1;

/// One convolution block: conv + tanh + average pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvBlock {
    pub channels: usize,
    pub kernel: usize,
    /// Pool window (1 = no pooling).
    pub pool: usize,
}

/// Activation used between blocks; both are smooth, so analytic input
/// gradients stay finite-difference checkable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
    Silu,
}

/// Surrogate architecture: conv blocks followed by a dense head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub name: String,
    pub blocks: Vec<ConvBlock>,
    #[serde(default)]
    pub activation: Activation,
}

impl ArchConfig {
    /// Named presets; distinct shapes so cross-architecture studies have
    /// something to vary.
    pub fn preset(name: &str) -> Result<Self> {
        let (blocks, activation) = match name {
            "cnn-a" => (
                vec![
                    ConvBlock { channels: 6, kernel: 3, pool: 2 },
                    ConvBlock { channels: 12, kernel: 3, pool: 2 },
                ],
                Activation::Tanh,
            ),
            "cnn-b" => (
                vec![
                    ConvBlock { channels: 8, kernel: 3, pool: 2 },
                    ConvBlock { channels: 12, kernel: 3, pool: 2 },
                    ConvBlock { channels: 12, kernel: 3, pool: 1 },
                ],
                Activation::Tanh,
            ),
            "cnn-c" => (
                vec![
                    ConvBlock { channels: 6, kernel: 5, pool: 2 },
                    ConvBlock { channels: 10, kernel: 5, pool: 2 },
                ],
                Activation::Tanh,
            ),
            "cnn-d" => (
                vec![
                    ConvBlock { channels: 8, kernel: 3, pool: 2 },
                    ConvBlock { channels: 16, kernel: 3, pool: 1 },
                ],
                Activation::Tanh,
            ),
            "cnn-e" => (
                vec![
                    ConvBlock { channels: 8, kernel: 3, pool: 2 },
                    ConvBlock { channels: 16, kernel: 3, pool: 1 },
                ],
                Activation::Silu,
            ),
            other => {
                return Err(Error::Config(format!(
                    "unknown architecture preset '{other}' (expected cnn-a through cnn-e)"
                )))
            }
        };
        Ok(Self {
            name: name.to_string(),
            blocks,
            activation,
        })
    }

    fn layer_specs(&self, num_classes: usize) -> Vec<LayerSpec> {
        let act = match self.activation {
            Activation::Tanh => LayerSpec::Tanh,
            Activation::Silu => LayerSpec::Silu,
        };
        let mut specs = Vec::new();
        for block in &self.blocks {
            specs.push(LayerSpec::Conv {
                out_c: block.channels,
                kernel: block.kernel,
            });
            specs.push(act);
            if block.pool > 1 {
                specs.push(LayerSpec::AvgPool(block.pool));
            }
        }
        specs.push(LayerSpec::Dense {
            out_dim: num_classes,
        });
        specs
    }
}

/// Hyperparameters for deterministic base-model pre-training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub arch: ArchConfig,
    pub input_dims: Dims,
    pub num_classes: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
}

/// An image classifier whose parameters are immutable after construction.
#[derive(Debug, Clone)]
pub struct FrozenClassifier<T> {
    model_id: String,
    arch: ArchConfig,
    seed: u64,
    net: Network<T>,
    param_digest: String,
}

impl<T: Scalar> FrozenClassifier<T> {
    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn arch_name(&self) -> &str {
        &self.arch.name
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dims(&self) -> Dims {
        self.net.input_dims()
    }

    /// Pre-trained class count K.
    pub fn num_classes(&self) -> usize {
        self.net.out_dim()
    }

    pub fn param_digest(&self) -> &str {
        &self.param_digest
    }

    /// Recompute the digest from the live parameters.
    pub fn recompute_digest(&self) -> String {
        digest_blob(&param_blob(&self.net))
    }

    pub(crate) fn network(&self) -> &Network<T> {
        &self.net
    }

    /// Logits for a batch; an empty batch yields an empty result.
    pub fn forward_batch(&self, images: &[Tensor3<T>]) -> Result<Vec<Vec<T>>> {
        images.iter().map(|img| self.forward_one(img)).collect()
    }

    /// Logits for one image (length K).
    pub fn forward_one(&self, image: &Tensor3<T>) -> Result<Vec<T>> {
        if image.dims() != self.input_dims() {
            return Err(Error::Input(format!(
                "image dims {} do not match model input dims {}",
                image.dims(),
                self.input_dims()
            )));
        }
        self.net.forward(image.data())
    }
}

/// Everything produced by one prompted forward/backward pass.
pub struct PromptedPass<T> {
    /// Softmax over the mapped (first n) logits.
    pub mapped_posterior: Vec<T>,
    /// Cross-entropy of the true label under the mapped posterior.
    pub loss: T,
    /// d(loss)/d(prompt values): full grid, zero off the border support.
    pub gradient: Tensor3<T>,
}

/// Forward + backward through the frozen model at `image + prompt`.
pub fn prompted_backward<T: Scalar>(
    model: &FrozenClassifier<T>,
    image: &Tensor3<T>,
    prompt: &Prompt<T>,
    label_map: &LabelMap,
    true_label: usize,
) -> Result<PromptedPass<T>> {
    let n = label_map.downstream_classes();
    if true_label >= n {
        return Err(Error::Input(format!(
            "true label {true_label} outside downstream range [0, {n})"
        )));
    }
    label_map.check_against(model.num_classes())?;
    let prompted = crate::vpl::apply_prompt(image, prompt)?;
    let trace = model.net.forward_trace(prompted.data())?;
    let logits = model.net.output(&trace);
    let mapped_posterior = crate::tensor::softmax(&logits[..n]);
    let (loss, dlogits) = cross_entropy_mapped(logits, n, true_label);
    let din = model.net.backward(&trace, dlogits, None);
    let mut gradient = Tensor3::from_vec(prompt.spec().dims, din)?;
    prompt.spec().zero_interior(&mut gradient);
    Ok(PromptedPass {
        mapped_posterior,
        loss,
        gradient,
    })
}

/// Gradient of the prompted cross-entropy loss w.r.t. the prompt grid.
///
/// The result is shaped like the prompt's value grid and is exactly zero
/// off the border support.
pub fn input_gradient<T: Scalar>(
    model: &FrozenClassifier<T>,
    image: &Tensor3<T>,
    prompt: &Prompt<T>,
    label_map: &LabelMap,
    true_label: usize,
) -> Result<Tensor3<T>> {
    Ok(prompted_backward(model, image, prompt, label_map, true_label)?.gradient)
}

/// Deterministically pre-train a surrogate classifier.
///
/// The returned model is frozen; its registry entry records the digest so
/// later runs can prove the parameters never moved.
pub fn pretrain_base<T: Scalar>(
    model_id: &str,
    dataset: &Dataset<T>,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<FrozenClassifier<T>> {
    if dataset.dims != cfg.input_dims {
        return Err(Error::Config(format!(
            "dataset dims {} do not match configured input dims {}",
            dataset.dims, cfg.input_dims
        )));
    }
    if dataset.classes > cfg.num_classes {
        return Err(Error::Config(format!(
            "dataset has {} classes but the model head only has {}",
            dataset.classes, cfg.num_classes
        )));
    }
    if dataset.is_empty() {
        return Err(Error::Input("pre-training dataset is empty".into()));
    }
    if cfg.batch == 0 {
        return Err(Error::Config("pre-training batch size must be positive".into()));
    }

    let mut net = Network::build(cfg.input_dims, &cfg.arch.layer_specs(cfg.num_classes), seed)?;
    let mut optim = Adam::new_for(&net, cfg.lr);
    let mut grads = Gradients::zeros_like(&net);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = rng_for(seed, &[0x70_72_65]);
    let k = cfg.num_classes;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch) {
            grads.reset();
            let mut batch_loss = T::zero();
            for &idx in batch {
                let trace = net.forward_trace(dataset.images[idx].data())?;
                let (loss, dlogits) =
                    cross_entropy_mapped(net.output(&trace), k, dataset.labels[idx]);
                batch_loss += loss;
                net.backward(&trace, dlogits, Some(&mut grads));
            }
            if !batch_loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: "non-finite pre-training loss".into(),
                });
            }
            grads.scale(T::from_f64_lossy(1.0 / batch.len() as f64));
            optim.step_network(&mut net, &grads);
        }
    }

    let param_digest = digest_blob(&param_blob(&net));
    Ok(FrozenClassifier {
        model_id: model_id.to_string(),
        arch: cfg.arch.clone(),
        seed,
        net,
        param_digest,
    })
}

/// Registry metadata record, one JSON file per model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model_id: String,
    pub arch: ArchConfig,
    pub input_dims: Dims,
    pub num_classes: usize,
    pub seed: u64,
    pub param_digest: String,
}

/// Serialize parameters: shape table followed by row-major LE f32 data.
fn param_blob<T: Scalar>(net: &Network<T>) -> Vec<u8> {
    let shapes = net.param_shapes();
    let arrays = net.param_arrays();
    let mut blob = Vec::new();
    blob.extend_from_slice(BLOB_MAGIC);
    blob.extend_from_slice(&BLOB_VERSION.to_le_bytes());
    blob.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
    for shape in &shapes {
        blob.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            blob.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for arr in arrays {
        for &v in arr {
            blob.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
    }
    blob
}

fn digest_blob(blob: &[u8]) -> String {
    hex::encode(Sha256::digest(blob))
}

/// Write metadata + parameter blob into the registry directory.
pub fn save_model<T: Scalar>(dir: &Path, model: &FrozenClassifier<T>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let record = ModelRecord {
        model_id: model.model_id.clone(),
        arch: model.arch.clone(),
        input_dims: model.input_dims(),
        num_classes: model.num_classes(),
        seed: model.seed,
        param_digest: model.param_digest.clone(),
    };
    let json = serde_json::to_vec_pretty(&record)?;
    fs::write(dir.join(format!("{}.json", model.model_id)), json)?;
    fs::write(
        dir.join(format!("{}.params", model.model_id)),
        param_blob(&model.net),
    )?;
    Ok(())
}

/// Load a model from the registry, verifying blob shape and digest.
pub fn load_model<T: Scalar>(dir: &Path, model_id: &str) -> Result<FrozenClassifier<T>> {
    let meta_path = dir.join(format!("{model_id}.json"));
    if !meta_path.exists() {
        return Err(Error::Registry(format!(
            "no registry entry '{model_id}' in {}",
            dir.display()
        )));
    }
    let record: ModelRecord = serde_json::from_slice(&fs::read(&meta_path)?)?;
    let blob = fs::read(dir.join(format!("{model_id}.params")))?;
    if digest_blob(&blob) != record.param_digest {
        return Err(Error::Registry(format!(
            "parameter blob for '{model_id}' does not match its recorded digest"
        )));
    }

    let mut net = Network::<T>::build(
        record.input_dims,
        &record.arch.layer_specs(record.num_classes),
        record.seed,
    )?;
    read_blob_into(&blob, &mut net)?;
    let param_digest = digest_blob(&param_blob(&net));
    if param_digest != record.param_digest {
        return Err(Error::Registry(format!(
            "reconstructed parameters for '{model_id}' do not reproduce the recorded digest"
        )));
    }
    Ok(FrozenClassifier {
        model_id: record.model_id,
        arch: record.arch,
        seed: record.seed,
        net,
        param_digest,
    })
}

/// List model ids present in a registry directory, sorted.
pub fn list_models(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    if !dir.exists() {
        return Ok(ids);
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

fn read_blob_into<T: Scalar>(blob: &[u8], net: &mut Network<T>) -> Result<()> {
    let bad = |msg: &str| Error::Format(format!("parameter blob: {msg}"));
    if blob.len() < 12 || &blob[..4] != BLOB_MAGIC {
        return Err(bad("missing magic"));
    }
    let read_u32 = |off: usize| -> u32 {
        u32::from_le_bytes([blob[off], blob[off + 1], blob[off + 2], blob[off + 3]])
    };
    if read_u32(4) != BLOB_VERSION {
        return Err(bad("unsupported version"));
    }
    let num_arrays = read_u32(8) as usize;
    let expected_shapes = net.param_shapes();
    if num_arrays != expected_shapes.len() {
        return Err(bad("array count does not match architecture"));
    }
    let mut off = 12usize;
    for expected in &expected_shapes {
        if off + 4 > blob.len() {
            return Err(bad("truncated shape table"));
        }
        let ndim = read_u32(off) as usize;
        off += 4;
        if ndim != expected.len() || off + 4 * ndim > blob.len() {
            return Err(bad("shape table does not match architecture"));
        }
        for &d in expected {
            if read_u32(off) as usize != d {
                return Err(bad("array shape does not match architecture"));
            }
            off += 4;
        }
    }
    for arr in net.param_arrays_mut() {
        let need = arr.len() * 4;
        if off + need > blob.len() {
            return Err(bad("truncated parameter data"));
        }
        for v in arr.iter_mut() {
            *v = T::from_f32_exact(f32::from_le_bytes([
                blob[off],
                blob[off + 1],
                blob[off + 2],
                blob[off + 3],
            ]));
            off += 4;
        }
    }
    if off != blob.len() {
        return Err(bad("trailing bytes after parameter data"));
    }
    Ok(())
}
