//! Trainable membership classifiers and the shared evaluation entry point.
//!
//! Both neural attacks follow the same protocol: grid search over the
//! configured learning rates, 100 epochs per candidate, model selection on
//! a held-out 10% of the attack training records, ties to the smaller rate.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mia::features::{AttackRecord, FeaturePayload};
use crate::mia::thresholds::ThresholdTable;
use crate::nn::optim::Adam;
use crate::nn::{cross_entropy_mapped, digest_param_arrays, Dense, Gradients, LayerSpec, Network};
use crate::rng::{derive_seed, rng_for};
use crate::scalar::Scalar;
use crate::tensor::{argmax, Dims};

/// Hyperparameters shared by the NN-based and gradient-based attacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackHyper {
    /// Learning-rate grid.
    pub lrs: Vec<f64>,
    pub epochs: usize,
    pub batch: usize,
    /// Held-out fraction of the training records used for model selection.
    pub holdout: f64,
    /// Hidden width of the final 2-layer MLP.
    pub hidden: usize,
    /// Gradient sub-encoder width (gradient-based attack only).
    pub grad_width: usize,
    /// Top-5 sub-encoder width (gradient-based attack only).
    pub top5_width: usize,
    /// Loss/indicator sub-encoder width (gradient-based attack only).
    pub scalar_width: usize,
}

impl Default for AttackHyper {
    fn default() -> Self {
        Self {
            lrs: vec![1e-2, 1e-3, 1e-4, 1e-5],
            epochs: 100,
            batch: 32,
            holdout: 0.1,
            hidden: 32,
            grad_width: 16,
            top5_width: 8,
            scalar_width: 4,
        }
    }
}

/// NN-based attack: 2-layer MLP over the top-5 posterior vector.
#[derive(Debug, Clone)]
pub struct NnAttack<T> {
    net: Network<T>,
    pub chosen_lr: f64,
    pub holdout_accuracy: f64,
}

impl<T: Scalar> NnAttack<T> {
    fn logits(&self, record: &AttackRecord<T>) -> Result<Vec<T>> {
        match &record.payload {
            FeaturePayload::Top5Posterior { top5 } => self.net.forward(top5),
            other => Err(Error::Input(format!(
                "NN attack expects top-5 posterior features, got {}",
                payload_name(other)
            ))),
        }
    }

    pub fn decide(&self, record: &AttackRecord<T>) -> Result<bool> {
        Ok(argmax(&self.logits(record)?) == 1)
    }

    pub fn params_digest(&self) -> String {
        digest_param_arrays(&self.net.param_arrays())
    }
}

/// Gradient-based attack: four sub-encoders (gradient, top-5, loss,
/// correctness indicator) concatenated into a 2-layer MLP head.
#[derive(Debug, Clone)]
pub struct GradientAttack<T> {
    enc_gradient: Dense<T>,
    enc_top5: Dense<T>,
    enc_loss: Dense<T>,
    enc_correct: Dense<T>,
    head_hidden: Dense<T>,
    head_out: Dense<T>,
    /// Zero out a sub-encoder's contribution at inference (ablation knob).
    pub ablate_gradient: bool,
    pub chosen_lr: f64,
    pub holdout_accuracy: f64,
}

struct BundleView<'a, T> {
    gradient: &'a [T],
    top5: &'a [T],
    loss: T,
    correct: T,
}

fn bundle_view<T: Scalar>(record: &AttackRecord<T>) -> Result<BundleView<'_, T>> {
    match &record.payload {
        FeaturePayload::GradientBundle {
            gradient,
            top5,
            loss,
            correct,
        } => Ok(BundleView {
            gradient,
            top5,
            loss: *loss,
            correct: T::from_f64_lossy(f64::from(*correct)),
        }),
        other => Err(Error::Input(format!(
            "gradient attack expects gradient bundles, got {}",
            payload_name(other)
        ))),
    }
}

fn payload_name<T>(payload: &FeaturePayload<T>) -> &'static str {
    match payload {
        FeaturePayload::Top5Posterior { .. } => "top5-posterior",
        FeaturePayload::MetricScore { .. } => "metric-score",
        FeaturePayload::GradientBundle { .. } => "gradient-bundle",
    }
}

fn tanh_vec<T: Scalar>(v: &[T]) -> Vec<T> {
    v.iter().map(|&x| x.tanh()).collect()
}

struct GradientTrace<T> {
    h_grad: Vec<T>,
    h_top5: Vec<T>,
    h_loss: Vec<T>,
    h_correct: Vec<T>,
    concat: Vec<T>,
    h_hidden: Vec<T>,
    logits: Vec<T>,
}

impl<T: Scalar> GradientAttack<T> {
    fn init(grad_dim: usize, hyper: &AttackHyper, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[0x67_72_61_64]);
        let enc_gradient = Dense::glorot(grad_dim, hyper.grad_width, &mut rng);
        let enc_top5 = Dense::glorot(5, hyper.top5_width, &mut rng);
        let enc_loss = Dense::glorot(1, hyper.scalar_width, &mut rng);
        let enc_correct = Dense::glorot(1, hyper.scalar_width, &mut rng);
        let concat = hyper.grad_width + hyper.top5_width + 2 * hyper.scalar_width;
        let head_hidden = Dense::glorot(concat, hyper.hidden, &mut rng);
        let head_out = Dense::glorot(hyper.hidden, 2, &mut rng);
        Self {
            enc_gradient,
            enc_top5,
            enc_loss,
            enc_correct,
            head_hidden,
            head_out,
            ablate_gradient: false,
            chosen_lr: 0.0,
            holdout_accuracy: 0.0,
        }
    }

    fn forward_trace(&self, view: &BundleView<'_, T>) -> GradientTrace<T> {
        let mut h_grad = tanh_vec(&self.enc_gradient.forward(view.gradient));
        if self.ablate_gradient {
            for v in &mut h_grad {
                *v = T::zero();
            }
        }
        let h_top5 = tanh_vec(&self.enc_top5.forward(view.top5));
        let h_loss = tanh_vec(&self.enc_loss.forward(&[view.loss]));
        let h_correct = tanh_vec(&self.enc_correct.forward(&[view.correct]));
        let mut concat =
            Vec::with_capacity(h_grad.len() + h_top5.len() + h_loss.len() + h_correct.len());
        concat.extend_from_slice(&h_grad);
        concat.extend_from_slice(&h_top5);
        concat.extend_from_slice(&h_loss);
        concat.extend_from_slice(&h_correct);
        let h_hidden = tanh_vec(&self.head_hidden.forward(&concat));
        let logits = self.head_out.forward(&h_hidden);
        GradientTrace {
            h_grad,
            h_top5,
            h_loss,
            h_correct,
            concat,
            h_hidden,
            logits,
        }
    }

    /// Backward pass accumulating into `grads` (12 arrays, weight/bias per
    /// layer in declaration order).
    fn backward(
        &self,
        view: &BundleView<'_, T>,
        trace: &GradientTrace<T>,
        dlogits: &[T],
        grads: &mut [Vec<T>],
    ) {
        let (g_rest, g_out) = grads.split_at_mut(10);
        let (g_rest, g_hidden) = g_rest.split_at_mut(8);
        let d_hidden_out = self
            .head_out
            .backward(&trace.h_hidden, dlogits, Some(split_pair(g_out)));
        let d_hidden: Vec<T> = d_hidden_out
            .iter()
            .zip(&trace.h_hidden)
            .map(|(&d, &y)| d * (T::one() - y * y))
            .collect();
        let d_concat = self
            .head_hidden
            .backward(&trace.concat, &d_hidden, Some(split_pair(g_hidden)));

        let w_g = trace.h_grad.len();
        let w_t = trace.h_top5.len();
        let w_l = trace.h_loss.len();
        let tanh_back = |d: &[T], y: &[T]| -> Vec<T> {
            d.iter()
                .zip(y)
                .map(|(&d, &y)| d * (T::one() - y * y))
                .collect()
        };
        let (g_grad, g_rest) = g_rest.split_at_mut(2);
        let (g_top5, g_rest) = g_rest.split_at_mut(2);
        let (g_loss, g_corr) = g_rest.split_at_mut(2);
        if !self.ablate_gradient {
            let d = tanh_back(&d_concat[..w_g], &trace.h_grad);
            self.enc_gradient
                .backward(view.gradient, &d, Some(split_pair(g_grad)));
        }
        let d = tanh_back(&d_concat[w_g..w_g + w_t], &trace.h_top5);
        self.enc_top5
            .backward(view.top5, &d, Some(split_pair(g_top5)));
        let d = tanh_back(&d_concat[w_g + w_t..w_g + w_t + w_l], &trace.h_loss);
        self.enc_loss
            .backward(&[view.loss], &d, Some(split_pair(g_loss)));
        let d = tanh_back(&d_concat[w_g + w_t + w_l..], &trace.h_correct);
        self.enc_correct
            .backward(&[view.correct], &d, Some(split_pair(g_corr)));
    }

    fn param_lens(&self) -> Vec<usize> {
        self.param_arrays().iter().map(|a| a.len()).collect()
    }

    fn param_arrays(&self) -> Vec<&[T]> {
        vec![
            &self.enc_gradient.weight,
            &self.enc_gradient.bias,
            &self.enc_top5.weight,
            &self.enc_top5.bias,
            &self.enc_loss.weight,
            &self.enc_loss.bias,
            &self.enc_correct.weight,
            &self.enc_correct.bias,
            &self.head_hidden.weight,
            &self.head_hidden.bias,
            &self.head_out.weight,
            &self.head_out.bias,
        ]
    }

    fn param_arrays_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            &mut self.enc_gradient.weight,
            &mut self.enc_gradient.bias,
            &mut self.enc_top5.weight,
            &mut self.enc_top5.bias,
            &mut self.enc_loss.weight,
            &mut self.enc_loss.bias,
            &mut self.enc_correct.weight,
            &mut self.enc_correct.bias,
            &mut self.head_hidden.weight,
            &mut self.head_hidden.bias,
            &mut self.head_out.weight,
            &mut self.head_out.bias,
        ]
    }

    pub fn decide(&self, record: &AttackRecord<T>) -> Result<bool> {
        let view = bundle_view(record)?;
        Ok(argmax(&self.forward_trace(&view).logits) == 1)
    }

    pub fn params_digest(&self) -> String {
        digest_param_arrays(&self.param_arrays())
    }
}

fn split_pair<T>(pair: &mut [Vec<T>]) -> (&mut Vec<T>, &mut Vec<T>) {
    let (a, b) = pair.split_at_mut(1);
    (&mut a[0], &mut b[0])
}

fn label_of<T>(record: &AttackRecord<T>) -> usize {
    usize::from(record.member)
}

fn check_trainable<T>(records: &[AttackRecord<T>]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Training {
            epoch: 0,
            message: "no attack training records".into(),
        });
    }
    let first = records[0].member;
    if records.iter().all(|r| r.member == first) {
        return Err(Error::Training {
            epoch: 0,
            message: "attack training records carry a single label".into(),
        });
    }
    Ok(())
}

/// Deterministic train/holdout split of record positions.
fn holdout_split(total: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng_for(seed, &[0x68_6f_6c_64]));
    let held = ((total as f64 * fraction).round() as usize).clamp(1, total.saturating_sub(1));
    let holdout = order[..held].to_vec();
    let train = order[held..].to_vec();
    (train, holdout)
}

/// Grid-search skeleton shared by both neural attacks: train a candidate per
/// learning rate (ascending), pick the best held-out accuracy, prefer the
/// smaller rate on ties.
fn grid_search<M>(
    lrs: &[f64],
    mut train_at: impl FnMut(f64) -> Result<(M, f64)>,
) -> Result<(M, f64, f64)> {
    let mut lrs = lrs.to_vec();
    lrs.sort_by(|a, b| a.partial_cmp(b).expect("finite learning rates"));
    if lrs.is_empty() {
        return Err(Error::Config("empty learning-rate grid".into()));
    }
    let mut best: Option<(M, f64, f64)> = None;
    for lr in lrs {
        let (model, acc) = train_at(lr)?;
        let better = match &best {
            None => true,
            Some((_, _, best_acc)) => acc > *best_acc,
        };
        if better {
            best = Some((model, lr, acc));
        }
    }
    Ok(best.expect("at least one candidate"))
}

fn holdout_accuracy<T: Scalar>(
    records: &[AttackRecord<T>],
    positions: &[usize],
    mut decide: impl FnMut(&AttackRecord<T>) -> Result<bool>,
) -> Result<f64> {
    let mut correct = 0usize;
    for &pos in positions {
        if decide(&records[pos])? == records[pos].member {
            correct += 1;
        }
    }
    Ok(correct as f64 / positions.len() as f64)
}

/// Train the NN-based attack (2-layer MLP over top-5 posteriors).
pub fn train_nn_attack<T: Scalar>(
    records: &[AttackRecord<T>],
    hyper: &AttackHyper,
    seed: u64,
) -> Result<NnAttack<T>> {
    check_trainable(records)?;
    let inputs: Vec<&[T]> = records
        .iter()
        .map(|r| match &r.payload {
            FeaturePayload::Top5Posterior { top5 } => Ok(top5.as_slice()),
            other => Err(Error::Input(format!(
                "NN attack expects top-5 posterior features, got {}",
                payload_name(other)
            ))),
        })
        .collect::<Result<_>>()?;
    let (train_pos, hold_pos) = holdout_split(records.len(), hyper.holdout, seed);

    let (net, chosen_lr, holdout_acc) = grid_search(&hyper.lrs, |lr| {
        let mut net = Network::<T>::build(
            Dims::new(5, 1, 1),
            &[
                LayerSpec::Dense {
                    out_dim: hyper.hidden,
                },
                LayerSpec::Tanh,
                LayerSpec::Dense { out_dim: 2 },
            ],
            derive_seed(seed, &[0x6d_6c_70]),
        )?;
        let mut adam = Adam::new_for(&net, lr);
        let mut grads = Gradients::zeros_like(&net);
        let mut order = train_pos.clone();
        let mut rng = rng_for(seed, &[0x6e_6e_61, lr.to_bits()]);
        for epoch in 0..hyper.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(hyper.batch.max(1)) {
                grads.reset();
                let mut batch_loss = T::zero();
                for &pos in batch {
                    let trace = net.forward_trace(inputs[pos])?;
                    let (loss, dlogits) =
                        cross_entropy_mapped(net.output(&trace), 2, label_of(&records[pos]));
                    batch_loss += loss;
                    net.backward(&trace, dlogits, Some(&mut grads));
                }
                if !batch_loss.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        message: "non-finite NN attack loss".into(),
                    });
                }
                grads.scale(T::from_f64_lossy(1.0 / batch.len() as f64));
                adam.step_network(&mut net, &grads);
            }
        }
        let acc = holdout_accuracy(records, &hold_pos, |r| match &r.payload {
            FeaturePayload::Top5Posterior { top5 } => Ok(argmax(&net.forward(top5)?) == 1),
            _ => unreachable!("inputs validated above"),
        })?;
        Ok((net, acc))
    })?;

    Ok(NnAttack {
        net,
        chosen_lr,
        holdout_accuracy: holdout_acc,
    })
}

/// Train the gradient-based attack (four sub-encoders + MLP head).
pub fn train_gradient_attack<T: Scalar>(
    records: &[AttackRecord<T>],
    hyper: &AttackHyper,
    seed: u64,
) -> Result<GradientAttack<T>> {
    check_trainable(records)?;
    let views: Vec<BundleView<'_, T>> = records.iter().map(bundle_view).collect::<Result<_>>()?;
    let grad_dim = views[0].gradient.len();
    if views.iter().any(|v| v.gradient.len() != grad_dim) {
        return Err(Error::Input(
            "gradient bundles have inconsistent gradient lengths".into(),
        ));
    }
    let (train_pos, hold_pos) = holdout_split(records.len(), hyper.holdout, seed);

    let (model, chosen_lr, holdout_acc) = grid_search(&hyper.lrs, |lr| {
        let mut model = GradientAttack::init(grad_dim, hyper, derive_seed(seed, &[0x67_6e]));
        let mut adam = Adam::new(&model.param_lens(), lr);
        let mut grads: Vec<Vec<T>> = model
            .param_lens()
            .iter()
            .map(|&n| vec![T::zero(); n])
            .collect();
        let mut order = train_pos.clone();
        let mut rng = rng_for(seed, &[0x67_61, lr.to_bits()]);
        for epoch in 0..hyper.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(hyper.batch.max(1)) {
                for g in &mut grads {
                    for v in g.iter_mut() {
                        *v = T::zero();
                    }
                }
                let mut batch_loss = T::zero();
                for &pos in batch {
                    let trace = model.forward_trace(&views[pos]);
                    let (loss, dlogits) =
                        cross_entropy_mapped(&trace.logits, 2, label_of(&records[pos]));
                    batch_loss += loss;
                    model.backward(&views[pos], &trace, &dlogits, &mut grads);
                }
                if !batch_loss.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        message: "non-finite gradient attack loss".into(),
                    });
                }
                let scale = T::from_f64_lossy(1.0 / batch.len() as f64);
                for g in &mut grads {
                    for v in g.iter_mut() {
                        *v = *v * scale;
                    }
                }
                let mut params = model.param_arrays_mut();
                adam.step(&mut params, &grads);
            }
        }
        let acc = holdout_accuracy(records, &hold_pos, |r| model.decide(r))?;
        Ok((model, acc))
    })?;

    let mut model = model;
    model.chosen_lr = chosen_lr;
    model.holdout_accuracy = holdout_acc;
    Ok(model)
}

/// Any trained membership attack.
pub enum MembershipAttack<T> {
    Nn(NnAttack<T>),
    Metric(ThresholdTable<T>),
    Gradient(GradientAttack<T>),
}

impl<T: Scalar> MembershipAttack<T> {
    pub fn decide(&self, record: &AttackRecord<T>) -> Result<bool> {
        match self {
            MembershipAttack::Nn(attack) => attack.decide(record),
            MembershipAttack::Gradient(attack) => attack.decide(record),
            MembershipAttack::Metric(table) => match &record.payload {
                FeaturePayload::MetricScore { metric, score } => {
                    if *metric != table.metric {
                        return Err(Error::Input(format!(
                            "record scored with metric-{metric} but table fits metric-{}",
                            table.metric
                        )));
                    }
                    Ok(table.decide(*score, record.true_class))
                }
                other => Err(Error::Input(format!(
                    "metric attack expects metric scores, got {}",
                    payload_name(other)
                ))),
            },
        }
    }
}

/// Fraction of correct membership decisions over target records.
pub fn evaluate_mia<T: Scalar>(
    attack: &MembershipAttack<T>,
    records: &[AttackRecord<T>],
) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Input("no target records to evaluate".into()));
    }
    let mut correct = 0usize;
    for record in records {
        if attack.decide(record)? == record.member {
            correct += 1;
        }
    }
    Ok(correct as f64 / records.len() as f64)
}
