//! Scalar abstraction: all numeric kernels are generic over `f32`/`f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar used by tensors, networks, and attacks.
///
/// Persisted artifacts always store 32-bit floats; [`Scalar::to_f32_lossy`]
/// and [`Scalar::from_f32_exact`] are the bridge between the in-memory
/// scalar type and the on-disk representation.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    fn from_f32_exact(v: f32) -> Self {
        Self::from_f32(v).expect("f32 converts to scalar")
    }

    fn to_f32_lossy(self) -> f32 {
        self.to_f32().expect("scalar converts to f32")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
