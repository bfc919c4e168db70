//! Minimal differentiable-model substrate.
//!
//! Everything the training loops need and nothing more: dense, strided
//! convolution, transposed convolution, instance normalization, the usual
//! activations, dropout, reverse-mode gradients and Adam with component
//! clipping. Layers are generic over [`Real`] so the same code runs in `f32`
//! for model math and in `f64` for finite-difference gradient checks.
//!
//! A model value is exclusively owned while training; finished networks are
//! immutable and safe to share across threads for sampling and evaluation.

mod adam;
mod arch;
pub mod gradcheck;
mod layers;
mod net;

#[cfg(test)]
mod tests;

pub use adam::{adam_step, AdamConfig, AdamState, Model};
pub use arch::{ArchDescriptor, InputKind, LayerSpec};
pub use layers::Layer;
pub use net::{build_network, GradTensor, Gradients, Network, Tape};

use ndarray::{Array2, Array4};
use thiserror::Error;

/// Float abstraction over `f32`/`f64`. Model math defaults to single
/// precision; gradient checks instantiate the same layers at `f64`.
pub trait Real:
    num_traits::Float
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::ops::AddAssign
    + std::ops::MulAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("layer {layer}: expected {expected}, got {got}")]
    ShapeMismatch {
        layer: String,
        expected: String,
        got: String,
    },
    #[error("architecture invalid at layer {index} ({layer}): {reason}")]
    InvalidArch {
        index: usize,
        layer: String,
        reason: String,
    },
    #[error("gradient/parameter key mismatch at layer {layer}: {reason}")]
    KeyMismatch { layer: usize, reason: String },
    #[error("conditioning value required by the architecture but not provided")]
    MissingCond,
    #[error("conditioning value provided but the architecture takes none")]
    SuperfluousCond,
    #[error("non-finite value detected in {0}")]
    NonFinite(String),
    #[error("dropout in training mode requires an RNG")]
    MissingDropoutRng,
}

/// A batch flowing through a network: either a matrix `(batch, features)` or
/// an image batch `(batch, channels, h, w)`.
#[derive(Debug, Clone)]
pub enum Value<F> {
    Mat(Array2<F>),
    Grid(Array4<F>),
}

impl<F: Real> Value<F> {
    pub fn batch(&self) -> usize {
        match self {
            Value::Mat(a) => a.nrows(),
            Value::Grid(a) => a.shape()[0],
        }
    }

    pub fn shape_string(&self) -> String {
        match self {
            Value::Mat(a) => format!("{:?}", a.shape()),
            Value::Grid(a) => format!("{:?}", a.shape()),
        }
    }

    pub fn into_mat(self) -> Result<Array2<F>, NnError> {
        match self {
            Value::Mat(a) => Ok(a),
            Value::Grid(a) => Err(NnError::ShapeMismatch {
                layer: "output".into(),
                expected: "matrix".into(),
                got: format!("grid {:?}", a.shape()),
            }),
        }
    }

    pub fn into_grid(self) -> Result<Array4<F>, NnError> {
        match self {
            Value::Grid(a) => Ok(a),
            Value::Mat(a) => Err(NnError::ShapeMismatch {
                layer: "output".into(),
                expected: "grid".into(),
                got: format!("matrix {:?}", a.shape()),
            }),
        }
    }

    pub fn map_elems(&self, f: impl Fn(F) -> F) -> Value<F> {
        match self {
            Value::Mat(a) => Value::Mat(a.mapv(&f)),
            Value::Grid(a) => Value::Grid(a.mapv(&f)),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Value::Mat(a) => a.iter().all(|v| v.is_finite()),
            Value::Grid(a) => a.iter().all(|v| v.is_finite()),
        }
    }
}
