//! Minimal dense/convolutional network with exact backpropagation.
//!
//! Forward and backward passes iterate in a fixed order, so results are
//! bitwise deterministic for a given parameter state and input. Backward
//! can return the input gradient alone (prompt training) or also
//! accumulate parameter gradients (pre-training, attack models).

pub mod optim;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::scalar::Scalar;
use crate::tensor::Dims;

/// 2-D convolution, stride 1, zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub pad: usize,
    /// `[out_c][in_c][kernel][kernel]`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Fully connected layer over the flattened input.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[out_dim][in_dim]`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    Tanh,
    /// x * sigmoid(x); smooth and unbounded above.
    Silu,
    /// Average pooling with square window and equal stride.
    AvgPool(usize),
    Dense(Dense<T>),
}

/// Feed-forward network: the layer list plus cached shape bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    input_dims: Dims,
    layers: Vec<Layer<T>>,
    /// Shape at each layer boundary; `shapes[i]` feeds `layers[i]`.
    shapes: Vec<Dims>,
    out_dim: usize,
}

/// Per-array parameter gradients, aligned with [`Network::param_arrays`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub arrays: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Self {
            arrays: net
                .param_arrays()
                .iter()
                .map(|a| vec![T::zero(); a.len()])
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: T) {
        for arr in &mut self.arrays {
            for g in arr {
                *g = *g * factor;
            }
        }
    }

    pub fn reset(&mut self) {
        for arr in &mut self.arrays {
            for g in arr {
                *g = T::zero();
            }
        }
    }
}

/// Activations captured during a traced forward pass.
pub struct Trace<T> {
    /// `values[i]` is the input of `layers[i]`; the last entry is the output.
    values: Vec<Vec<T>>,
}

fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn init_uniform<T: Scalar>(rng: &mut ChaCha8Rng, len: usize, limit: f64) -> Vec<T> {
    (0..len)
        .map(|_| T::from_f64_lossy(rng.random_range(-limit..limit)))
        .collect()
}

impl<T: Scalar> Network<T> {
    /// Assemble and validate a network; parametric layers are Glorot-initialized
    /// from a stream derived from `seed`.
    pub fn build(input_dims: Dims, layer_specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut rng = rng_for(seed, &[0x6e65_74]);
        let mut shapes = vec![input_dims];
        let mut layers = Vec::with_capacity(layer_specs.len());
        for spec in layer_specs {
            let cur = *shapes.last().unwrap();
            let layer = match *spec {
                LayerSpec::Conv { out_c, kernel } => {
                    if kernel % 2 == 0 || kernel == 0 {
                        return Err(Error::Config(format!(
                            "conv kernel must be odd and positive, got {kernel}"
                        )));
                    }
                    if kernel > cur.h || kernel > cur.w {
                        return Err(Error::Config(format!(
                            "conv kernel {kernel} exceeds activation {cur}"
                        )));
                    }
                    let pad = kernel / 2;
                    let fan_in = cur.c * kernel * kernel;
                    let fan_out = out_c * kernel * kernel;
                    let limit = glorot_limit(fan_in, fan_out);
                    let weight = init_uniform(&mut rng, out_c * cur.c * kernel * kernel, limit);
                    let bias = vec![T::zero(); out_c];
                    shapes.push(Dims::new(out_c, cur.h, cur.w));
                    Layer::Conv(Conv2d {
                        in_c: cur.c,
                        out_c,
                        kernel,
                        pad,
                        weight,
                        bias,
                    })
                }
                LayerSpec::Tanh => {
                    shapes.push(cur);
                    Layer::Tanh
                }
                LayerSpec::Silu => {
                    shapes.push(cur);
                    Layer::Silu
                }
                LayerSpec::AvgPool(k) => {
                    if k == 0 || cur.h % k != 0 || cur.w % k != 0 {
                        return Err(Error::Config(format!(
                            "pool window {k} must evenly divide activation {cur}"
                        )));
                    }
                    shapes.push(Dims::new(cur.c, cur.h / k, cur.w / k));
                    Layer::AvgPool(k)
                }
                LayerSpec::Dense { out_dim } => {
                    let in_dim = cur.len();
                    let limit = glorot_limit(in_dim, out_dim);
                    let weight = init_uniform(&mut rng, out_dim * in_dim, limit);
                    let bias = vec![T::zero(); out_dim];
                    shapes.push(Dims::new(out_dim, 1, 1));
                    Layer::Dense(Dense {
                        in_dim,
                        out_dim,
                        weight,
                        bias,
                    })
                }
            };
            layers.push(layer);
        }
        let out_dim = shapes.last().unwrap().len();
        Ok(Self {
            input_dims,
            layers,
            shapes,
            out_dim,
        })
    }

    pub fn input_dims(&self) -> Dims {
        self.input_dims
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Parameter arrays in declaration order (weights then bias per layer).
    pub fn param_arrays(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(c.weight.as_slice());
                    out.push(c.bias.as_slice());
                }
                Layer::Dense(d) => {
                    out.push(d.weight.as_slice());
                    out.push(d.bias.as_slice());
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_arrays_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(c.weight.as_mut_slice());
                    out.push(c.bias.as_mut_slice());
                }
                Layer::Dense(d) => {
                    out.push(d.weight.as_mut_slice());
                    out.push(d.bias.as_mut_slice());
                }
                _ => {}
            }
        }
        out
    }

    /// Shape table of parameter arrays: `(array dims, len)` in declaration order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(vec![c.out_c, c.in_c, c.kernel, c.kernel]);
                    out.push(vec![c.out_c]);
                }
                Layer::Dense(d) => {
                    out.push(vec![d.out_dim, d.in_dim]);
                    out.push(vec![d.out_dim]);
                }
                _ => {}
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.param_arrays().iter().map(|a| a.len()).sum()
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer.forward(&cur, self.shapes[i]);
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, input: &[T]) -> Result<Trace<T>> {
        self.check_input(input)?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.forward(values.last().unwrap(), self.shapes[i]);
            values.push(next);
        }
        Ok(Trace { values })
    }

    /// Gradient of the traced pass: returns d(loss)/d(input) and, when
    /// `grads` is given, accumulates parameter gradients into it.
    pub fn backward(
        &self,
        trace: &Trace<T>,
        dout: Vec<T>,
        mut grads: Option<&mut Gradients<T>>,
    ) -> Vec<T> {
        let mut upstream = dout;
        // Parameter-array cursor positioned past the last array.
        let mut arr_idx = self.param_shapes().len();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.values[i];
            let output = &trace.values[i + 1];
            let in_shape = self.shapes[i];
            upstream = match layer {
                Layer::Conv(c) => {
                    arr_idx -= 2;
                    let layer_grads = grads.as_deref_mut().map(|g| {
                        let (before, after) = g.arrays.split_at_mut(arr_idx + 1);
                        (&mut before[arr_idx], &mut after[0])
                    });
                    c.backward(input, in_shape, &upstream, layer_grads)
                }
                Layer::Dense(d) => {
                    arr_idx -= 2;
                    let layer_grads = grads.as_deref_mut().map(|g| {
                        let (before, after) = g.arrays.split_at_mut(arr_idx + 1);
                        (&mut before[arr_idx], &mut after[0])
                    });
                    d.backward(input, &upstream, layer_grads)
                }
                Layer::Tanh => output
                    .iter()
                    .zip(&upstream)
                    .map(|(&y, &dy)| dy * (T::one() - y * y))
                    .collect(),
                Layer::Silu => input
                    .iter()
                    .zip(&upstream)
                    .map(|(&x, &dy)| {
                        let s = sigmoid(x);
                        dy * s * (T::one() + x * (T::one() - s))
                    })
                    .collect(),
                Layer::AvgPool(k) => avg_pool_backward(&upstream, in_shape, *k),
            };
        }
        upstream
    }

    pub fn output<'a>(&self, trace: &'a Trace<T>) -> &'a [T] {
        trace.values.last().unwrap()
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.input_dims.len() {
            return Err(Error::Input(format!(
                "input length {} does not match network input dims {}",
                input.len(),
                self.input_dims
            )));
        }
        Ok(())
    }
}

/// Declarative layer description used to build networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    Conv { out_c: usize, kernel: usize },
    Tanh,
    Silu,
    AvgPool(usize),
    Dense { out_dim: usize },
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Scalar> Layer<T> {
    fn forward(&self, input: &[T], in_shape: Dims) -> Vec<T> {
        match self {
            Layer::Conv(c) => c.forward(input, in_shape),
            Layer::Tanh => input.iter().map(|&x| x.tanh()).collect(),
            Layer::Silu => input.iter().map(|&x| x * sigmoid(x)).collect(),
            Layer::AvgPool(k) => avg_pool_forward(input, in_shape, *k),
            Layer::Dense(d) => d.forward(input),
        }
    }
}

impl<T: Scalar> Conv2d<T> {
    fn forward(&self, input: &[T], shape: Dims) -> Vec<T> {
        let (h, w) = (shape.h, shape.w);
        let k = self.kernel;
        let pad = self.pad;
        let mut out = vec![T::zero(); self.out_c * h * w];
        for o in 0..self.out_c {
            let out_plane = &mut out[o * h * w..(o + 1) * h * w];
            let b = self.bias[o];
            for v in out_plane.iter_mut() {
                *v = b;
            }
            for c in 0..self.in_c {
                let in_plane = &input[c * h * w..(c + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = self.weight[((o * self.in_c + c) * k + ky) * k + kx];
                        if wv == T::zero() {
                            continue;
                        }
                        // valid output rows: 0 <= y + ky - pad < h
                        let y0 = pad.saturating_sub(ky);
                        let y1 = (h + pad - ky).min(h);
                        let x0 = pad.saturating_sub(kx);
                        let x1 = (w + pad - kx).min(w);
                        for y in y0..y1 {
                            let iy = y + ky - pad;
                            let out_row = &mut out_plane[y * w + x0..y * w + x1];
                            let in_row = &in_plane[iy * w + x0 + kx - pad..iy * w + x1 + kx - pad];
                            for (ov, &iv) in out_row.iter_mut().zip(in_row) {
                                *ov = *ov + wv * iv;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn backward(
        &self,
        input: &[T],
        shape: Dims,
        dout: &[T],
        grads: Option<(&mut Vec<T>, &mut Vec<T>)>,
    ) -> Vec<T> {
        let (h, w) = (shape.h, shape.w);
        let k = self.kernel;
        let pad = self.pad;
        let mut dinput = vec![T::zero(); shape.len()];
        let (mut dweight, mut dbias) = match grads {
            Some((dw, db)) => (Some(dw), Some(db)),
            None => (None, None),
        };
        for o in 0..self.out_c {
            let dout_plane = &dout[o * h * w..(o + 1) * h * w];
            if let Some(db) = dbias.as_deref_mut() {
                let s: T = dout_plane.iter().copied().sum();
                db[o] = db[o] + s;
            }
            for c in 0..self.in_c {
                let in_plane = &input[c * h * w..(c + 1) * h * w];
                let din_plane_base = c * h * w;
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((o * self.in_c + c) * k + ky) * k + kx;
                        let wv = self.weight[widx];
                        let y0 = pad.saturating_sub(ky);
                        let y1 = (h + pad - ky).min(h);
                        let x0 = pad.saturating_sub(kx);
                        let x1 = (w + pad - kx).min(w);
                        let mut wacc = T::zero();
                        for y in y0..y1 {
                            let iy = y + ky - pad;
                            let dout_row = &dout_plane[y * w + x0..y * w + x1];
                            let in_base = iy * w + x0 + kx - pad;
                            let in_row = &in_plane[in_base..in_base + (x1 - x0)];
                            let din_row =
                                &mut dinput[din_plane_base + in_base..din_plane_base + in_base + (x1 - x0)];
                            if dweight.is_some() {
                                for (&dv, &iv) in dout_row.iter().zip(in_row) {
                                    wacc = wacc + dv * iv;
                                }
                            }
                            for (dv, di) in dout_row.iter().zip(din_row.iter_mut()) {
                                *di = *di + wv * *dv;
                            }
                        }
                        if let Some(dw) = dweight.as_deref_mut() {
                            dw[widx] = dw[widx] + wacc;
                        }
                    }
                }
            }
        }
        dinput
    }
}

impl<T: Scalar> Dense<T> {
    /// Glorot-initialized layer drawing from the caller's stream.
    pub(crate) fn glorot(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = glorot_limit(in_dim, out_dim);
        Self {
            in_dim,
            out_dim,
            weight: init_uniform(rng, out_dim * in_dim, limit),
            bias: vec![T::zero(); out_dim],
        }
    }

    pub(crate) fn forward(&self, input: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (&wv, &iv) in row.iter().zip(input) {
                acc = acc + wv * iv;
            }
            out.push(acc);
        }
        out
    }

    pub(crate) fn backward(
        &self,
        input: &[T],
        dout: &[T],
        grads: Option<(&mut Vec<T>, &mut Vec<T>)>,
    ) -> Vec<T> {
        let mut dinput = vec![T::zero(); self.in_dim];
        if let Some((dw, db)) = grads {
            for o in 0..self.out_dim {
                let dv = dout[o];
                db[o] = db[o] + dv;
                let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
                let dw_row = &mut dw[o * self.in_dim..(o + 1) * self.in_dim];
                for i in 0..self.in_dim {
                    dw_row[i] = dw_row[i] + dv * input[i];
                    dinput[i] = dinput[i] + dv * row[i];
                }
            }
        } else {
            for o in 0..self.out_dim {
                let dv = dout[o];
                let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
                for (di, &wv) in dinput.iter_mut().zip(row) {
                    *di = *di + dv * wv;
                }
            }
        }
        dinput
    }
}

fn avg_pool_forward<T: Scalar>(input: &[T], shape: Dims, k: usize) -> Vec<T> {
    let (c_n, h, w) = (shape.c, shape.h, shape.w);
    let (oh, ow) = (h / k, w / k);
    let norm = T::from_f64_lossy(1.0 / (k * k) as f64);
    let mut out = vec![T::zero(); c_n * oh * ow];
    for c in 0..c_n {
        let plane = &input[c * h * w..(c + 1) * h * w];
        let out_plane = &mut out[c * oh * ow..(c + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = T::zero();
                for dy in 0..k {
                    let row = &plane[(oy * k + dy) * w + ox * k..(oy * k + dy) * w + ox * k + k];
                    for &v in row {
                        acc = acc + v;
                    }
                }
                out_plane[oy * ow + ox] = acc * norm;
            }
        }
    }
    out
}

fn avg_pool_backward<T: Scalar>(dout: &[T], in_shape: Dims, k: usize) -> Vec<T> {
    let (c_n, h, w) = (in_shape.c, in_shape.h, in_shape.w);
    let (oh, ow) = (h / k, w / k);
    let norm = T::from_f64_lossy(1.0 / (k * k) as f64);
    let mut dinput = vec![T::zero(); in_shape.len()];
    for c in 0..c_n {
        let dplane = &dout[c * oh * ow..(c + 1) * oh * ow];
        let din_plane = &mut dinput[c * h * w..(c + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let g = dplane[oy * ow + ox] * norm;
                for dy in 0..k {
                    let row = &mut din_plane
                        [(oy * k + dy) * w + ox * k..(oy * k + dy) * w + ox * k + k];
                    for v in row {
                        *v = *v + g;
                    }
                }
            }
        }
    }
    dinput
}

/// Order-stable digest of parameter arrays (LE f32 serialization).
pub fn digest_param_arrays<T: Scalar>(arrays: &[&[T]]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for arr in arrays {
        hasher.update((arr.len() as u64).to_le_bytes());
        for &v in *arr {
            hasher.update(v.to_f32_lossy().to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

/// Cross-entropy over the first `n` logits (hard-coded mapping).
///
/// Returns the loss and d(loss)/d(logits) over the full logit vector;
/// entries at indices `>= n` receive zero gradient.
pub fn cross_entropy_mapped<T: Scalar>(logits: &[T], n: usize, label: usize) -> (T, Vec<T>) {
    debug_assert!(label < n && n <= logits.len());
    let probs = crate::tensor::softmax(&logits[..n]);
    let eps = T::from_f64_lossy(1e-12);
    let p = if probs[label] > eps { probs[label] } else { eps };
    let loss = -p.ln();
    let mut dlogits = vec![T::zero(); logits.len()];
    for i in 0..n {
        dlogits[i] = probs[i];
    }
    dlogits[label] = dlogits[label] - T::one();
    (loss, dlogits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_net(seed: u64) -> Network<f64> {
        Network::build(
            Dims::new(2, 8, 8),
            &[
                LayerSpec::Conv { out_c: 3, kernel: 3 },
                LayerSpec::Tanh,
                LayerSpec::AvgPool(2),
                LayerSpec::Conv { out_c: 4, kernel: 3 },
                LayerSpec::Tanh,
                LayerSpec::AvgPool(2),
                LayerSpec::Dense { out_dim: 5 },
            ],
            seed,
        )
        .unwrap()
    }

    fn toy_input(len: usize) -> Vec<f64> {
        (0..len).map(|i| ((i * 37 % 101) as f64) / 101.0 - 0.3).collect()
    }

    fn loss_of(net: &Network<f64>, input: &[f64]) -> f64 {
        let logits = net.forward(input).unwrap();
        let (loss, _) = cross_entropy_mapped(&logits, 5, 2);
        loss
    }

    #[test]
    fn input_gradient_matches_central_differences() {
        let net = toy_net(11);
        let mut input = toy_input(2 * 8 * 8);
        let trace = net.forward_trace(&input).unwrap();
        let (_, dlogits) = cross_entropy_mapped(net.output(&trace), 5, 2);
        let din = net.backward(&trace, dlogits, None);

        let step = 1e-5;
        for &idx in &[0usize, 3, 17, 64, 88, 127] {
            let orig = input[idx];
            input[idx] = orig + step;
            let lp = loss_of(&net, &input);
            input[idx] = orig - step;
            let lm = loss_of(&net, &input);
            input[idx] = orig;
            let fd = (lp - lm) / (2.0 * step);
            let rel = (din[idx] - fd).abs() / fd.abs().max(1e-8);
            assert!(rel < 1e-5, "idx {idx}: analytic {} vs fd {fd}", din[idx]);
        }
    }

    #[test]
    fn weight_gradient_matches_central_differences() {
        let net = toy_net(5);
        let input = toy_input(2 * 8 * 8);
        let trace = net.forward_trace(&input).unwrap();
        let (_, dlogits) = cross_entropy_mapped(net.output(&trace), 5, 2);
        let mut grads = Gradients::zeros_like(&net);
        net.backward(&trace, dlogits, Some(&mut grads));

        let step = 1e-6;
        // probe a weight in every parameter array
        for arr in 0..grads.arrays.len() {
            let idx = grads.arrays[arr].len() / 2;
            let mut plus = net.clone();
            plus.param_arrays_mut()[arr][idx] += step;
            let mut minus = net.clone();
            minus.param_arrays_mut()[arr][idx] -= step;
            let fd = (loss_of(&plus, &input) - loss_of(&minus, &input)) / (2.0 * step);
            let analytic = grads.arrays[arr][idx];
            let rel = (analytic - fd).abs() / fd.abs().max(1e-7);
            assert!(rel < 1e-4, "array {arr} idx {idx}: {analytic} vs {fd}");
        }
    }

    #[test]
    fn silu_gradients_match_central_differences() {
        let net = Network::<f64>::build(
            Dims::new(2, 8, 8),
            &[
                LayerSpec::Conv { out_c: 3, kernel: 3 },
                LayerSpec::Silu,
                LayerSpec::AvgPool(2),
                LayerSpec::Dense { out_dim: 4 },
            ],
            21,
        )
        .unwrap();
        let mut input = toy_input(2 * 8 * 8);
        let trace = net.forward_trace(&input).unwrap();
        let (_, dlogits) = cross_entropy_mapped(net.output(&trace), 4, 1);
        let din = net.backward(&trace, dlogits, None);
        let step = 1e-5;
        for &idx in &[2usize, 9, 41, 77, 120] {
            let orig = input[idx];
            input[idx] = orig + step;
            let logits = net.forward(&input).unwrap();
            let lp = cross_entropy_mapped(&logits, 4, 1).0;
            input[idx] = orig - step;
            let logits = net.forward(&input).unwrap();
            let lm = cross_entropy_mapped(&logits, 4, 1).0;
            input[idx] = orig;
            let fd = (lp - lm) / (2.0 * step);
            let rel = (din[idx] - fd).abs() / fd.abs().max(1e-8);
            assert!(rel < 1e-5, "idx {idx}: analytic {} vs fd {fd}", din[idx]);
        }
    }

    #[test]
    fn build_is_seed_deterministic() {
        let a = toy_net(9);
        let b = toy_net(9);
        let c = toy_net(10);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn pool_requires_divisible_extent() {
        let err = Network::<f64>::build(
            Dims::new(1, 9, 9),
            &[LayerSpec::AvgPool(2)],
            0,
        );
        assert!(err.is_err());
    }

    #[test]
    fn mapped_loss_ignores_tail_logits() {
        let logits = vec![0.3f64, -0.1, 0.8, 0.2, 9.0, -9.0];
        let (loss, dl) = cross_entropy_mapped(&logits, 4, 1);
        let mut bumped = logits.clone();
        bumped[4] = -3.0;
        bumped[5] = 100.0;
        let (loss2, dl2) = cross_entropy_mapped(&bumped, 4, 1);
        assert_eq!(loss, loss2);
        assert_eq!(dl[..4], dl2[..4]);
        assert_eq!(dl[4], 0.0);
        assert_eq!(dl[5], 0.0);
    }
}
