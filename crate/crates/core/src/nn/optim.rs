//! Optimizers for parameter arrays.

use crate::nn::{Gradients, Network};
use crate::scalar::Scalar;

/// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
///
/// Operates on any list of parameter arrays, so it serves both
/// [`Network`]-backed models and hand-wired ones.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: T,
    beta1: f64,
    beta2: f64,
    eps: T,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(array_lens: &[usize], lr: f64) -> Self {
        Self {
            lr: T::from_f64_lossy(lr),
            beta1: 0.9,
            beta2: 0.999,
            eps: T::from_f64_lossy(1e-8),
            step: 0,
            m: array_lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: array_lens.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn new_for(net: &Network<T>, lr: f64) -> Self {
        let lens: Vec<usize> = net.param_arrays().iter().map(|a| a.len()).collect();
        Self::new(&lens, lr)
    }

    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[Vec<T>]) {
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        let b1 = T::from_f64_lossy(self.beta1);
        let b2 = T::from_f64_lossy(self.beta2);
        let one = T::one();
        let bc1 = T::from_f64_lossy(1.0 - self.beta1.powi(self.step as i32));
        let bc2 = T::from_f64_lossy(1.0 - self.beta2.powi(self.step as i32));
        for ((arr, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..arr.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                arr[i] = arr[i] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }

    pub fn step_network(&mut self, net: &mut Network<T>, grads: &Gradients<T>) {
        let mut params = net.param_arrays_mut();
        self.step(&mut params, &grads.arrays);
    }
}

/// Cosine annealing from `lr0` down to zero over `total` units.
pub fn cosine_lr(lr0: f64, unit: usize, total: usize) -> f64 {
    if total == 0 {
        return lr0;
    }
    let t = (unit as f64) / (total as f64);
    0.5 * lr0 * (1.0 + (std::f64::consts::PI * t).cos())
}
