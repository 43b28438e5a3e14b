//! Privacy auditing for visual prompt learning.
//!
//! The crate trains additive pixel-border prompts against frozen image
//! classifiers and measures what the released prompts leak about their
//! training data: macro-level properties (property inference), individual
//! membership (three attack families), and how a Gaussian-noise defense
//! trades prompt utility against attack accuracy.
//!
//! All numeric kernels are generic over the scalar type ([`Scalar`]);
//! concrete `f32`/`f64` aliases live at the crate root. Persisted artifacts
//! always store 32-bit floats.

pub mod data;
pub mod defense;
pub mod error;
pub mod mia;
pub mod model_zoo;
pub mod nn;
pub mod pia;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod tensor;
pub mod vpl;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{Dims, Tensor3};

/// f32 pipeline types (the on-disk precision).
pub type Tensor32 = tensor::Tensor3<f32>;
pub type Classifier32 = model_zoo::FrozenClassifier<f32>;
pub type Prompt32 = vpl::Prompt<f32>;
pub type Dataset32 = data::Dataset<f32>;

/// f64 variants, used where extra precision matters (e.g. derivative checks).
pub type Tensor64 = tensor::Tensor3<f64>;
pub type Classifier64 = model_zoo::FrozenClassifier<f64>;
pub type Prompt64 = vpl::Prompt<f64>;
pub type Dataset64 = data::Dataset<f64>;
