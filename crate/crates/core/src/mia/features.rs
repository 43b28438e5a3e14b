//! Attack features: one record per (sample, prompt) query.
//!
//! Every record derives from the same prompted forward pass, so metric
//! scores, top-5 posteriors, losses, and gradients are mutually consistent;
//! the gradient component is numerically identical to `input_gradient`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::SubsetView;
use crate::error::{Error, Result};
use crate::mia::metrics::metric_score;
use crate::mia::thresholds::ShadowScore;
use crate::mia::MetricKind;
use crate::model_zoo::{prompted_backward, FrozenClassifier};
use crate::scalar::Scalar;
use crate::tensor::argmax;
use crate::vpl::{apply_prompt, LabelMap, Prompt};

/// Feature payload of one attack record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum FeaturePayload<T> {
    /// Top-5 mapped posteriors, sorted descending, zero-padded when n < 5.
    Top5Posterior { top5: Vec<T> },
    /// Scalar membership score under one metric.
    MetricScore { metric: MetricKind, score: T },
    /// White-box bundle: flattened prompt gradient, top-5 posteriors,
    /// loss, and prediction-correctness indicator.
    GradientBundle {
        gradient: Vec<T>,
        top5: Vec<T>,
        loss: T,
        correct: u8,
    },
}

/// One feature/label pair for a membership attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord<T> {
    #[serde(flatten)]
    pub payload: FeaturePayload<T>,
    pub true_class: usize,
    pub member: bool,
}

/// Per-sample statistics from one prompted query.
#[derive(Debug, Clone)]
struct SampleStats<T> {
    posterior: Vec<T>,
    top5: Vec<T>,
    loss: T,
    correct: bool,
    gradient: Option<Vec<T>>,
}

/// All statistics needed to derive any attack family's records.
#[derive(Debug, Clone)]
pub struct FeatureSet<T> {
    stats: Vec<SampleStats<T>>,
    true_classes: Vec<usize>,
    members: Vec<bool>,
}

fn top5_of<T: Scalar>(posterior: &[T]) -> Vec<T> {
    let mut sorted = posterior.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite posteriors"));
    sorted.resize(5, T::zero());
    sorted.truncate(5);
    sorted
}

fn check_disjoint(member: &[usize], non_member: &[usize]) -> Result<()> {
    let mut seen: Vec<usize> = member.to_vec();
    seen.sort_unstable();
    for idx in non_member {
        if seen.binary_search(idx).is_ok() {
            return Err(Error::Input(format!(
                "member and non-member splits overlap at index {idx}"
            )));
        }
    }
    Ok(())
}

/// Query the model once per sample and collect every downstream statistic.
///
/// Member samples come first, in split order. `with_gradient` additionally
/// runs the backward pass per sample.
pub fn build_feature_set<T: Scalar>(
    model: &FrozenClassifier<T>,
    prompt: &Prompt<T>,
    member: SubsetView<'_, T>,
    non_member: SubsetView<'_, T>,
    label_map: &LabelMap,
    with_gradient: bool,
) -> Result<FeatureSet<T>> {
    check_disjoint(member.indices, non_member.indices)?;
    let mut stats = Vec::with_capacity(member.len() + non_member.len());
    let mut true_classes = Vec::with_capacity(stats.capacity());
    let mut members = Vec::with_capacity(stats.capacity());
    let n = label_map.downstream_classes();

    for (view, is_member) in [(member, true), (non_member, false)] {
        for i in 0..view.len() {
            let label = view.label(i);
            let stat = if with_gradient {
                let pass = prompted_backward(model, view.image(i), prompt, label_map, label)?;
                SampleStats {
                    top5: top5_of(&pass.mapped_posterior),
                    correct: argmax(&pass.mapped_posterior) == label,
                    loss: pass.loss,
                    gradient: Some(pass.gradient.data().to_vec()),
                    posterior: pass.mapped_posterior,
                }
            } else {
                if label >= n {
                    return Err(Error::Input(format!(
                        "true label {label} outside downstream range [0, {n})"
                    )));
                }
                let prompted = apply_prompt(view.image(i), prompt)?;
                let logits = model.forward_one(&prompted)?;
                let (loss, _) = crate::nn::cross_entropy_mapped(&logits, n, label);
                let posterior = crate::tensor::softmax(&logits[..n]);
                SampleStats {
                    top5: top5_of(&posterior),
                    correct: argmax(&posterior) == label,
                    loss,
                    gradient: None,
                    posterior,
                }
            };
            stats.push(stat);
            true_classes.push(label);
            members.push(is_member);
        }
    }
    Ok(FeatureSet {
        stats,
        true_classes,
        members,
    })
}

impl<T: Scalar> FeatureSet<T> {
    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    /// Top-5 posterior records for the NN-based attack.
    pub fn nn_records(&self) -> Vec<AttackRecord<T>> {
        self.stats
            .iter()
            .zip(self.true_classes.iter().zip(&self.members))
            .map(|(s, (&class, &member))| AttackRecord {
                payload: FeaturePayload::Top5Posterior {
                    top5: s.top5.clone(),
                },
                true_class: class,
                member,
            })
            .collect()
    }

    /// Scalar-score records for one metric.
    pub fn metric_records(&self, metric: MetricKind) -> Result<Vec<AttackRecord<T>>> {
        self.stats
            .iter()
            .zip(self.true_classes.iter().zip(&self.members))
            .map(|(s, (&class, &member))| {
                Ok(AttackRecord {
                    payload: FeaturePayload::MetricScore {
                        metric,
                        score: metric_score(metric, &s.posterior, class)?,
                    },
                    true_class: class,
                    member,
                })
            })
            .collect()
    }

    /// Shadow scores (for threshold fitting) under one metric.
    pub fn shadow_scores(&self, metric: MetricKind) -> Result<Vec<ShadowScore<T>>> {
        self.stats
            .iter()
            .zip(self.true_classes.iter().zip(&self.members))
            .map(|(s, (&class, &member))| {
                Ok(ShadowScore {
                    score: metric_score(metric, &s.posterior, class)?,
                    class,
                    member,
                })
            })
            .collect()
    }

    /// White-box gradient bundles; requires the set to have been built with
    /// gradients.
    pub fn gradient_records(&self) -> Result<Vec<AttackRecord<T>>> {
        self.stats
            .iter()
            .zip(self.true_classes.iter().zip(&self.members))
            .map(|(s, (&class, &member))| {
                let gradient = s.gradient.clone().ok_or_else(|| {
                    Error::Input("feature set was built without gradients".into())
                })?;
                Ok(AttackRecord {
                    payload: FeaturePayload::GradientBundle {
                        gradient,
                        top5: s.top5.clone(),
                        loss: s.loss,
                        correct: u8::from(s.correct),
                    },
                    true_class: class,
                    member,
                })
            })
            .collect()
    }
}

/// Build NN-attack records (top-5 posteriors labeled by membership).
pub fn nn_attack_build<T: Scalar>(
    model: &FrozenClassifier<T>,
    prompt: &Prompt<T>,
    member: SubsetView<'_, T>,
    non_member: SubsetView<'_, T>,
    label_map: &LabelMap,
) -> Result<Vec<AttackRecord<T>>> {
    Ok(build_feature_set(model, prompt, member, non_member, label_map, false)?.nn_records())
}

/// Build gradient-attack records (white-box bundles labeled by membership).
pub fn gradient_attack_build<T: Scalar>(
    model: &FrozenClassifier<T>,
    prompt: &Prompt<T>,
    member: SubsetView<'_, T>,
    non_member: SubsetView<'_, T>,
    label_map: &LabelMap,
) -> Result<Vec<AttackRecord<T>>> {
    build_feature_set(model, prompt, member, non_member, label_map, true)?.gradient_records()
}

/// Write records as line-delimited JSON.
pub fn write_records<T: Scalar + Serialize>(
    path: &Path,
    records: &[AttackRecord<T>],
) -> Result<()> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut file, record)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

/// Read line-delimited attack records.
pub fn read_records<T: Scalar + DeserializeOwned>(path: &Path) -> Result<Vec<AttackRecord<T>>> {
    let file = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
