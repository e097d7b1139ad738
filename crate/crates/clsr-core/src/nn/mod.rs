//! Dense tensor math and reverse-mode differentiation for the fixed
//! convolutional layer stack, plus the AdamW optimizer and checkpoint I/O.
//!
//! Everything is generic over [`Scalar`] so the same code runs in `f32` for
//! production and in `f64` for finite-difference gradient checks.

pub mod adamw;
pub mod checkpoint;
mod encoder;
pub mod gradcheck;
mod layers;
mod linalg;
mod tensor;

pub use adamw::AdamW;
pub use encoder::{batch_from_situations, ArchConfig, Cache, Encoder};
pub use layers::{
    apply_mask, dropout_mask, global_average_pool, global_average_pool_backward, relu,
    relu_backward, BatchNorm, BnCache, Conv1d, Dense, InputNorm,
};
pub use tensor::Tensor;

/// Floating-point element type of the network.
pub trait Scalar: num_traits::Float + Send + Sync + std::fmt::Debug + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn from_f32(v: f32) -> Self;
    fn as_f32(self) -> f32;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
    fn from_f32(v: f32) -> Self {
        v
    }
    fn as_f32(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn from_f32(v: f32) -> Self {
        f64::from(v)
    }
    fn as_f32(self) -> f32 {
        self as f32
    }
}
