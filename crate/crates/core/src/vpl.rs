//! Visual prompt learning: padding-template prompts, prompted-image
//! construction, hard-coded output mapping, and gradient-based prompt
//! training against a frozen classifier.
//!
//! A prompt is a full image-shaped grid whose learnable cells form the
//! width-`p` border; interior cells are identically zero, before, during,
//! and after training.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::SubsetView;
use crate::error::{Error, Result};
use crate::model_zoo::FrozenClassifier;
use crate::nn::optim::cosine_lr;
use crate::rng::rng_for;
use crate::scalar::Scalar;
use crate::tensor::{argmax, Dims, Tensor3};

const PROMPT_MAGIC: &[u8; 4] = b"VPPF";
const PROMPT_VERSION: u32 = 1;

/// Padding-template geometry: border width `p` inside image dims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSpec {
    pub prompt_size: usize,
    pub dims: Dims,
}

impl PromptSpec {
    pub fn new(prompt_size: usize, dims: Dims) -> Result<Self> {
        let spec = Self { prompt_size, dims };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.prompt_size;
        let min_side = self.dims.h.min(self.dims.w);
        if p == 0 {
            return Err(Error::Spec("prompt size must be positive".into()));
        }
        if 2 * p >= min_side {
            return Err(Error::Spec(format!(
                "prompt size {p} too large for dims {} (needs 2p < min(H, W))",
                self.dims
            )));
        }
        Ok(())
    }

    /// Learnable parameter count: `2 * C * p * (H + W - 2p)`.
    pub fn param_count(&self) -> Result<usize> {
        self.validate()?;
        let Dims { c, h, w } = self.dims;
        Ok(2 * c * self.prompt_size * (h + w - 2 * self.prompt_size))
    }

    /// Whether (h, w) lies strictly inside the border.
    #[inline]
    pub fn is_interior(&self, h: usize, w: usize) -> bool {
        let p = self.prompt_size;
        h >= p && h < self.dims.h - p && w >= p && w < self.dims.w - p
    }

    /// Linear indices of border cells, row-major over (c, h, w).
    pub fn border_indices(&self) -> Vec<usize> {
        let Dims { c, h, w } = self.dims;
        let mut out = Vec::with_capacity(self.param_count().unwrap_or(0));
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    if !self.is_interior(y, x) {
                        out.push((ci * h + y) * w + x);
                    }
                }
            }
        }
        out
    }

    /// Zero every interior cell of `grid` in place.
    pub fn zero_interior<T: Scalar>(&self, grid: &mut Tensor3<T>) {
        let Dims { c, h, w } = self.dims;
        debug_assert_eq!(grid.dims(), self.dims);
        let p = self.prompt_size;
        let data = grid.data_mut();
        for ci in 0..c {
            for y in p..h - p {
                let row = (ci * h + y) * w;
                for v in &mut data[row + p..row + w - p] {
                    *v = T::zero();
                }
            }
        }
    }

    /// Check the off-border-zero invariant.
    pub fn interior_is_zero<T: Scalar>(&self, grid: &Tensor3<T>) -> bool {
        let Dims { c, h, w } = self.dims;
        let p = self.prompt_size;
        let data = grid.data();
        for ci in 0..c {
            for y in p..h - p {
                let row = (ci * h + y) * w;
                if data[row + p..row + w - p].iter().any(|&v| v != T::zero()) {
                    return false;
                }
            }
        }
        true
    }
}

/// Hard-coded output mapping: downstream class i -> pre-trained class i.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    n: usize,
}

impl LabelMap {
    pub fn new(n: usize, pretrained_classes: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("label map needs at least one class".into()));
        }
        if n > pretrained_classes {
            return Err(Error::Mapping {
                downstream: n,
                pretrained: pretrained_classes,
            });
        }
        Ok(Self { n })
    }

    pub fn downstream_classes(&self) -> usize {
        self.n
    }

    pub(crate) fn check_against(&self, pretrained_classes: usize) -> Result<()> {
        if self.n > pretrained_classes {
            return Err(Error::Mapping {
                downstream: self.n,
                pretrained: pretrained_classes,
            });
        }
        Ok(())
    }

    /// Select the first n logits; the rest never reach downstream losses.
    pub fn map_logits<T: Scalar>(&self, logits: &[T]) -> Result<Vec<T>> {
        if logits.len() < self.n {
            return Err(Error::Mapping {
                downstream: self.n,
                pretrained: logits.len(),
            });
        }
        Ok(logits[..self.n].to_vec())
    }
}

/// One recorded condition (property name, condition value) of a prompt's
/// training subset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionBinding {
    pub property: String,
    pub value: String,
}

/// How a prompt came to be: everything needed to reproduce its training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_id: String,
    pub dataset: String,
    pub train_size: usize,
    pub conditions: Vec<ConditionBinding>,
    pub epochs: usize,
    pub seed: u64,
    pub lr: f64,
    pub schedule: Schedule,
}

/// Learning-rate schedule for prompt training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Cosine,
    Constant,
}

impl Schedule {
    fn lr_at(self, lr0: f64, epoch: usize, total: usize) -> f64 {
        match self {
            Schedule::Cosine => cosine_lr(lr0, epoch, total),
            Schedule::Constant => lr0,
        }
    }
}

/// Prompt training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainHyper {
    pub epochs: usize,
    pub lr: f64,
    pub schedule: Schedule,
    pub batch: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        // lr 40 with the cosine schedule is the documented literature
        // default; desk-scale configs override it.
        Self {
            epochs: 50,
            lr: 40.0,
            schedule: Schedule::Cosine,
            batch: 64,
        }
    }
}

/// A trained visual prompt: full value grid plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt<T> {
    spec: PromptSpec,
    values: Tensor3<T>,
    provenance: Provenance,
}

impl<T: Scalar> Prompt<T> {
    /// Wrap an existing grid; enforces the off-border-zero invariant.
    pub fn from_grid(spec: PromptSpec, values: Tensor3<T>, provenance: Provenance) -> Result<Self> {
        spec.validate()?;
        if values.dims() != spec.dims {
            return Err(Error::Input(format!(
                "prompt grid dims {} do not match spec dims {}",
                values.dims(),
                spec.dims
            )));
        }
        if !spec.interior_is_zero(&values) {
            return Err(Error::Spec(
                "prompt grid carries nonzero values off the border support".into(),
            ));
        }
        Ok(Self {
            spec,
            values,
            provenance,
        })
    }

    pub fn zeros(spec: PromptSpec, provenance: Provenance) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            values: Tensor3::zeros(spec.dims),
            provenance,
        })
    }

    pub fn spec(&self) -> &PromptSpec {
        &self.spec
    }

    pub fn values(&self) -> &Tensor3<T> {
        &self.values
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub(crate) fn values_mut(&mut self) -> &mut Tensor3<T> {
        &mut self.values
    }
}

/// Prompted image: `pixels + values`, elementwise.
pub fn apply_prompt<T: Scalar>(image: &Tensor3<T>, prompt: &Prompt<T>) -> Result<Tensor3<T>> {
    image.add(&prompt.values)
}

/// Train a padding prompt against a frozen classifier.
///
/// Plain SGD over the border cells with the configured schedule; the batch
/// gradient is the mean of per-sample prompt gradients. Only the prompt
/// moves: the classifier is read-only throughout.
pub fn train_prompt<T: Scalar>(
    model: &FrozenClassifier<T>,
    train: SubsetView<'_, T>,
    spec: PromptSpec,
    label_map: &LabelMap,
    hyper: &TrainHyper,
    seed: u64,
    conditions: Vec<ConditionBinding>,
) -> Result<Prompt<T>> {
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::Input("prompt training set is empty".into()));
    }
    if hyper.batch == 0 {
        return Err(Error::Config("prompt batch size must be positive".into()));
    }
    if spec.dims != model.input_dims() {
        return Err(Error::Input(format!(
            "prompt dims {} do not match model input dims {}",
            spec.dims,
            model.input_dims()
        )));
    }
    label_map.check_against(model.num_classes())?;

    let provenance = Provenance {
        model_id: model.model_id().to_string(),
        dataset: train.dataset.descriptor.clone(),
        train_size: train.len(),
        conditions,
        epochs: hyper.epochs,
        seed,
        lr: hyper.lr,
        schedule: hyper.schedule,
    };
    let mut prompt = Prompt::zeros(spec, provenance)?;
    let border = spec.border_indices();
    let n = label_map.downstream_classes();

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = rng_for(seed, &[0x70_72_6f_6d_70_74]);
    let mut grad_acc = vec![T::zero(); spec.dims.len()];

    for epoch in 0..hyper.epochs {
        let lr = T::from_f64_lossy(hyper.schedule.lr_at(hyper.lr, epoch, hyper.epochs));
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch) {
            for g in &mut grad_acc {
                *g = T::zero();
            }
            let mut batch_loss = T::zero();
            for &pos in batch {
                let prompted = apply_prompt(train.image(pos), &prompt)?;
                let trace = model.network().forward_trace(prompted.data())?;
                let (loss, dlogits) = crate::nn::cross_entropy_mapped(
                    model.network().output(&trace),
                    n,
                    train.label(pos),
                );
                batch_loss += loss;
                let din = model.network().backward(&trace, dlogits, None);
                for (acc, d) in grad_acc.iter_mut().zip(&din) {
                    *acc = *acc + *d;
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: "non-finite prompt loss".into(),
                });
            }
            let scale = lr * T::from_f64_lossy(1.0 / batch.len() as f64);
            let values = prompt.values_mut().data_mut();
            for &idx in &border {
                values[idx] = values[idx] - scale * grad_acc[idx];
            }
        }
    }
    debug_assert!(spec.interior_is_zero(prompt.values()));
    Ok(prompt)
}

/// Downstream accuracy of `argmax(map(forward(x + prompt)))` over `eval`.
pub fn evaluate_prompt<T: Scalar>(
    model: &FrozenClassifier<T>,
    prompt: &Prompt<T>,
    label_map: &LabelMap,
    eval: SubsetView<'_, T>,
) -> Result<f64> {
    if eval.is_empty() {
        return Err(Error::Input("prompt evaluation set is empty".into()));
    }
    label_map.check_against(model.num_classes())?;
    let mut correct = 0usize;
    for i in 0..eval.len() {
        let prompted = apply_prompt(eval.image(i), prompt)?;
        let logits = model.forward_one(&prompted)?;
        let mapped = label_map.map_logits(&logits)?;
        if argmax(&mapped) == eval.label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / eval.len() as f64)
}

#[derive(Debug, Serialize, Deserialize)]
struct PromptHeader {
    format_version: u32,
    spec: PromptSpec,
    provenance: Provenance,
}

/// Write a prompt file: JSON header + row-major LE f32 grid.
pub fn save_prompt<T: Scalar>(path: &Path, prompt: &Prompt<T>) -> Result<()> {
    let header = PromptHeader {
        format_version: PROMPT_VERSION,
        spec: prompt.spec,
        provenance: prompt.provenance.clone(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(16 + header_json.len() + prompt.values.dims().len() * 4);
    bytes.extend_from_slice(PROMPT_MAGIC);
    bytes.extend_from_slice(&PROMPT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    bytes.extend_from_slice(&prompt.values.to_le_bytes());
    fs::write(path, bytes)?;
    Ok(())
}

/// Read a prompt file, verifying the off-border-zero invariant.
pub fn load_prompt<T: Scalar>(path: &Path) -> Result<Prompt<T>> {
    let bytes = fs::read(path)?;
    let bad = |msg: &str| Error::Format(format!("prompt file {}: {msg}", path.display()));
    if bytes.len() < 12 || &bytes[..4] != PROMPT_MAGIC {
        return Err(bad("missing magic"));
    }
    let version = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
    if version != PROMPT_VERSION {
        return Err(bad("unsupported version"));
    }
    let header_len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    if bytes.len() < 12 + header_len {
        return Err(bad("truncated header"));
    }
    let header: PromptHeader = serde_json::from_slice(&bytes[12..12 + header_len])?;
    let grid_bytes = &bytes[12 + header_len..];
    let values = Tensor3::<T>::from_le_bytes(header.spec.dims, grid_bytes)?;
    Prompt::from_grid(header.spec, values, header.provenance)
}
