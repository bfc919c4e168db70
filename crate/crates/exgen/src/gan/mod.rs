//! Adversarial training: unconditional runs for the shifting iterations and
//! the extremeness-conditioned run for the final stage, with the usual
//! stabilization tricks (noisy labels, label flipping, discriminator input
//! noise, gradient clipping) and the extremeness loss.
//!
//! Training owns its model exclusively and is single-threaded over the update
//! sequence; a finished [`GanModel`] is immutable and shareable.

mod arch;
mod checkpoint;
mod losses;
mod train;

#[cfg(test)]
mod tests;

pub use arch::{discriminator_arch, generator_arch, ArchKind, NetConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use losses::{bce_loss, draw_targets, ext_loss, gan_losses};
pub use train::{d_noise_at, train_conditional, train_unconditional, OptimConfig, TrainConfig};

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::dataset::{DataError, Dataset, ExtremenessMeasure, GridSample, Origin};
use crate::evt::{EvtError, GpdParams};
use crate::nn::{Model, NnError, Value};
use crate::util::{map_chunks, worker_threads};

#[derive(Debug, Error)]
pub enum GanError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Evt(#[from] EvtError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("conditioning value must be positive, got {0}")]
    NonPositiveConditioning(f64),
    #[error("conditional model requires a conditioning value")]
    MissingConditioning,
    #[error("unconditional model takes no conditioning value")]
    SuperfluousConditioning,
    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A trained generator/discriminator pair.
#[derive(Debug, Clone)]
pub struct GanModel {
    pub generator: Model<f32>,
    pub discriminator: Model<f32>,
    pub conditional: bool,
    /// Conditioning distribution (fitted on the training extremeness);
    /// present exactly when `conditional` is set.
    pub cond_gpd: Option<GpdParams>,
    /// ê — the conditioning normalizer: conditioning values enter the
    /// networks as e/ê. Largest absolute training extremeness.
    pub ext_scale: f64,
    pub latent_dim: usize,
    pub grid: (usize, usize),
}

const SAMPLE_CHUNK: usize = 64;

impl GanModel {
    /// Draw `count` samples, conditioned on `e` when the model is
    /// conditional. Deterministic given `seed`; chunked so the result is
    /// independent of worker parallelism.
    pub fn sample<M: ExtremenessMeasure<f32>>(
        &self,
        count: usize,
        e: Option<f64>,
        seed: u64,
        measure: &M,
    ) -> Result<Dataset, GanError> {
        match (self.conditional, e) {
            (true, Some(e)) => self.sample_with(&vec![e; count], seed, measure),
            (false, None) => self.sample_with(&vec![f64::NAN; count], seed, measure),
            (true, None) => Err(GanError::MissingConditioning),
            (false, Some(_)) => Err(GanError::SuperfluousConditioning),
        }
    }

    /// Conditional batch draw with one conditioning value per sample.
    pub fn sample_each<M: ExtremenessMeasure<f32>>(
        &self,
        es: &[f64],
        seed: u64,
        measure: &M,
    ) -> Result<Dataset, GanError> {
        if !self.conditional {
            return Err(GanError::SuperfluousConditioning);
        }
        self.sample_with(es, seed, measure)
    }

    fn sample_with<M: ExtremenessMeasure<f32>>(
        &self,
        es: &[f64],
        seed: u64,
        measure: &M,
    ) -> Result<Dataset, GanError> {
        let count = es.len();
        let n_chunks = count.div_ceil(SAMPLE_CHUNK);
        let results = map_chunks(n_chunks, worker_threads(), |ci| {
            let lo = ci * SAMPLE_CHUNK;
            let hi = (lo + SAMPLE_CHUNK).min(count);
            self.decode_chunk(&es[lo..hi], seed, ci as u64)
        });
        let mut samples = Vec::with_capacity(count);
        let mut id = 0u64;
        for r in results {
            for pixels in r? {
                samples.push(GridSample::new(pixels, Origin::Generated, id, measure));
                id += 1;
            }
        }
        Ok(Dataset {
            samples,
            sorted_desc: false,
            height: self.grid.0,
            width: self.grid.1,
            raw_scale: (-1.0, 1.0),
        })
    }

    fn decode_chunk(
        &self,
        es: &[f64],
        seed: u64,
        chunk: u64,
    ) -> Result<Vec<ndarray::Array2<f32>>, GanError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk + 1);
        let b = es.len();
        let z = self.draw_latents(b, &mut rng);
        let input = if self.conditional {
            let scale = self.cond_scale();
            let mut m = Array2::<f32>::zeros((b, self.latent_dim + 1));
            m.slice_mut(ndarray::s![.., ..self.latent_dim]).assign(&z);
            for (i, &e) in es.iter().enumerate() {
                m[(i, self.latent_dim)] = (e / scale) as f32;
            }
            m
        } else {
            z
        };
        let out = self.generator.net.infer(Value::Mat(input), None)?;
        let grids = out.into_grid()?;
        Ok(split_grid_batch(&grids))
    }

    pub(crate) fn draw_latents(&self, b: usize, rng: &mut ChaCha8Rng) -> Array2<f32> {
        let mut z = Array2::<f32>::zeros((b, self.latent_dim));
        for v in z.iter_mut() {
            *v = rng.sample::<f32, _>(StandardNormal);
        }
        z
    }

    pub(crate) fn cond_scale(&self) -> f64 {
        if self.ext_scale.abs() > 0.0 {
            self.ext_scale
        } else {
            1.0
        }
    }

    /// Bundle with a measure so the generation traits can cache extremeness.
    pub fn sampler<'a, M: ExtremenessMeasure<f32>>(
        &'a self,
        measure: &'a M,
    ) -> ModelSampler<'a, M> {
        ModelSampler {
            model: self,
            measure,
        }
    }
}

pub(crate) fn split_grid_batch(grids: &ndarray::Array4<f32>) -> Vec<Array2<f32>> {
    let (b, _, h, w) = {
        let s = grids.shape();
        (s[0], s[1], s[2], s[3])
    };
    (0..b)
        .map(|i| {
            grids
                .index_axis(ndarray::Axis(0), i)
                .index_axis(ndarray::Axis(0), 0)
                .to_owned()
                .into_shape_clone((h, w))
                .expect("grid shape")
        })
        .collect()
}

/// Unconditional generation interface; lets tests substitute deterministic
/// stubs for a trained model.
pub trait Sampler {
    fn grid_shape(&self) -> (usize, usize);
    fn sample(&self, count: usize, seed: u64) -> Result<Dataset, GanError>;
}

/// Conditional generation interface with one conditioning value per sample.
pub trait CondSampler {
    fn grid_shape(&self) -> (usize, usize);
    fn sample_each(&self, es: &[f64], seed: u64) -> Result<Dataset, GanError>;

    fn sample_at(&self, count: usize, e: f64, seed: u64) -> Result<Dataset, GanError> {
        self.sample_each(&vec![e; count], seed)
    }
}

/// [`GanModel`] plus the measure used to cache extremeness on its outputs.
pub struct ModelSampler<'a, M> {
    pub model: &'a GanModel,
    pub measure: &'a M,
}

impl<'a, M: ExtremenessMeasure<f32>> Sampler for ModelSampler<'a, M> {
    fn grid_shape(&self) -> (usize, usize) {
        self.model.grid
    }

    fn sample(&self, count: usize, seed: u64) -> Result<Dataset, GanError> {
        self.model.sample(count, None, seed, self.measure)
    }
}

impl<'a, M: ExtremenessMeasure<f32>> CondSampler for ModelSampler<'a, M> {
    fn grid_shape(&self) -> (usize, usize) {
        self.model.grid
    }

    fn sample_each(&self, es: &[f64], seed: u64) -> Result<Dataset, GanError> {
        self.model.sample_each(es, seed, self.measure)
    }

    fn sample_at(&self, count: usize, e: f64, seed: u64) -> Result<Dataset, GanError> {
        self.model.sample(count, Some(e), seed, self.measure)
    }
}
