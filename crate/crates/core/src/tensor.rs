//! Dense C×H×W grids for images, prompts, and gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Channel/height/width extents of an image-shaped grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.c, self.h, self.w)
    }
}

/// Row-major C×H×W tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Scalar> Tensor3<T> {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![T::zero(); dims.len()],
        }
    }

    pub fn from_vec(dims: Dims, data: Vec<T>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::Input(format!(
                "tensor data length {} does not match dims {dims}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn at(&self, c: usize, h: usize, w: usize) -> T {
        self.data[(c * self.dims.h + h) * self.dims.w + w]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, h: usize, w: usize) -> &mut T {
        &mut self.data[(c * self.dims.h + h) * self.dims.w + w]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Elementwise sum; dims must match.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::Input(format!(
                "tensor dims mismatch: {} vs {}",
                self.dims, other.dims
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Self {
            dims: self.dims,
            data,
        })
    }

    pub fn scale(&mut self, factor: T) {
        for v in &mut self.data {
            *v = *v * factor;
        }
    }

    pub fn iter_nonzero(&self) -> impl Iterator<Item = (usize, usize, usize, T)> + '_ {
        let Dims { h, w, .. } = self.dims;
        self.data.iter().enumerate().filter_map(move |(i, &v)| {
            if v != T::zero() {
                let c = i / (h * w);
                let rest = i % (h * w);
                Some((c, rest / w, rest % w, v))
            } else {
                None
            }
        })
    }

    /// Serialize as row-major little-endian f32.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 4);
        for &v in &self.data {
            out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
        out
    }

    /// Deserialize from row-major little-endian f32.
    pub fn from_le_bytes(dims: Dims, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != dims.len() * 4 {
            return Err(Error::Format(format!(
                "grid payload is {} bytes, expected {} for dims {dims}",
                bytes.len(),
                dims.len() * 4
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| T::from_f32_exact(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
            .collect();
        Ok(Self { dims, data })
    }
}

/// Softmax of a logit slice; numerically stabilized by max subtraction.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest entry; first occurrence wins on ties.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_rejects_dims_mismatch() {
        let a = Tensor3::<f32>::zeros(Dims::new(1, 2, 2));
        let b = Tensor3::<f32>::zeros(Dims::new(1, 2, 3));
        assert!(a.add(&b).is_err());
    }

    #[test]
    fn le_bytes_roundtrip_is_exact_for_f32() {
        let dims = Dims::new(2, 3, 4);
        let data: Vec<f32> = (0..dims.len()).map(|i| (i as f32) * 0.37 - 2.0).collect();
        let t = Tensor3::from_vec(dims, data).unwrap();
        let back = Tensor3::<f32>::from_le_bytes(dims, &t.to_le_bytes()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn softmax_normalizes() {
        let p = softmax(&[1.0f64, 2.0, 3.0]);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(argmax(&p), 2);
    }
}
