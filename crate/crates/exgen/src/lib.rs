#![deny(unsafe_code)]

//! Generation of realistic *and* extreme grid-valued samples (e.g. rainfall
//! maps) at any user-specified extremeness probability τ.
//!
//! The pieces, bottom up:
//!
//! - [`evt`] — Generalized Pareto distribution math: CDF/quantile, maximum
//!   likelihood fitting, peaks-over-threshold selection, and the probability
//!   adjustment τ′ = τ/cᵏ used after distribution shifting.
//! - [`dataset`] — grid samples with a cached extremeness value, the
//!   normalization/resizing and train/test machinery, a binary file format,
//!   and a synthetic heavy-tailed rainfall oracle for desk-scale work.
//! - [`nn`] — a minimal differentiable-model substrate: dense, convolution,
//!   transposed convolution, instance norm, the usual activations, reverse
//!   mode gradients and Adam. Gradient correctness against central finite
//!   differences is a first-class contract.
//! - [`gan`] — adversarial training loops, unconditional and
//!   extremeness-conditioned, with label smoothing/flipping, discriminator
//!   input noise and the extremeness loss.
//! - [`pipeline`] — distribution shifting, EVT-based conditional generation,
//!   the rejection-sampling baseline and the sampling-time benchmark.
//! - [`metrics`] — autoencoder-bottleneck FID, latent-optimization
//!   reconstruction loss, MAPE and the fair-comparison selection protocol.

pub mod dataset;
pub mod evt;
pub mod gan;
pub mod metrics;
pub mod nn;
pub mod pipeline;
mod util;
