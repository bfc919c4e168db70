//! The epoch/batch training loops.
//!
//! Update schedule: one discriminator step then one generator step per batch.
//! Tricks, all active by default: labels drawn from [0.7, 1.2] (real) and
//! [0, 0.3] (fake), flipped with probability 0.05; Gaussian noise on every
//! discriminator input starting at 1e-5 and decaying linearly to exactly 0
//! at the final step; per-component gradient clipping to [-20, 20] inside
//! Adam. The generator objective is the non-saturating BCE plus
//! `ext_weight · L_ext` when conditioning.
//!
//! Divergence (any non-finite parameter after an update) aborts with the
//! epoch/batch index rather than reseeding, so runs are reproducible.

use ndarray::{Array1, Array2, Array4, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ExtremenessMeasure};
use crate::evt::GpdParams;
use crate::nn::{build_network, AdamConfig, Model, Value};

use super::arch::{discriminator_arch, generator_arch, NetConfig};
use super::losses::{bce_loss, draw_targets, ext_loss};
use super::{GanError, GanModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub clip: f64,
    /// Lowered learning rates used when warm-starting from a previous
    /// shift iteration.
    pub warm_lr_g: f64,
    pub warm_lr_d: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr_g: 2e-4,
            lr_d: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            clip: 20.0,
            warm_lr_g: 2e-5,
            warm_lr_d: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub label_real: (f64, f64),
    pub label_fake: (f64, f64),
    pub flip_prob: f64,
    pub d_noise_start: f64,
    pub ext_weight: f64,
    pub seed: u64,
    pub optim: OptimConfig,
    pub net: NetConfig,
}

impl TrainConfig {
    pub fn desk_default(grid: usize, seed: u64) -> Self {
        Self {
            epochs: 100,
            batch: 256,
            label_real: (0.7, 1.2),
            label_fake: (0.0, 0.3),
            flip_prob: 0.05,
            d_noise_start: 1e-5,
            ext_weight: 1.0,
            seed,
            optim: OptimConfig::default(),
            net: NetConfig::desk_default(grid),
        }
    }

    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: String| Err(GanError::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch == 0 {
            return bad("batch must be positive".into());
        }
        for (name, (lo, hi)) in [("real", self.label_real), ("fake", self.label_fake)] {
            if !(0.0..=1.2).contains(&lo) || !(0.0..=1.2).contains(&hi) || lo > hi {
                return bad(format!("{name} label range [{lo}, {hi}] outside [0, 1.2]"));
            }
        }
        if !(0.0..1.0).contains(&self.flip_prob) {
            return bad(format!("flip probability {} outside [0, 1)", self.flip_prob));
        }
        if self.d_noise_start < 0.0 || self.ext_weight < 0.0 {
            return bad("noise level and ext weight must be nonnegative".into());
        }
        let o = &self.optim;
        for (name, v) in [
            ("lr_g", o.lr_g),
            ("lr_d", o.lr_d),
            ("warm_lr_g", o.warm_lr_g),
            ("warm_lr_d", o.warm_lr_d),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} = {v} must be finite and nonnegative"));
            }
        }
        if o.clip <= 0.0 {
            return bad("gradient clip must be positive".into());
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.optim.beta1,
            beta2: self.optim.beta2,
            eps: 1e-8,
            clip: self.optim.clip,
        }
    }
}

/// Discriminator input-noise standard deviation at `step` of `total`:
/// linear decay from `start` to exactly zero at the final step.
pub fn d_noise_at(step: usize, total: usize, start: f64) -> f64 {
    if total <= 1 {
        return 0.0;
    }
    start * (1.0 - step as f64 / (total - 1) as f64)
}

/// Train an unconditional GAN on the dataset. With `warm_from`, parameters
/// start from the given model and the lowered warm-start learning rates
/// apply.
pub fn train_unconditional<M: ExtremenessMeasure<f32>>(
    dataset: &Dataset,
    cfg: &TrainConfig,
    warm_from: Option<&GanModel>,
    measure: &M,
) -> Result<GanModel, GanError> {
    train_gan(dataset, None, cfg, warm_from, measure)
}

/// Train an extremeness-conditioned GAN. Conditioning values are drawn from
/// `cond_gpd` per batch (offset added back); the discriminator pairs real
/// samples with their measured extremeness and fakes with their conditioning
/// value; the generator loss adds `ext_weight · L_ext`.
pub fn train_conditional<M: ExtremenessMeasure<f32>>(
    dataset: &Dataset,
    cond_gpd: &GpdParams,
    cfg: &TrainConfig,
    warm_from: Option<&GanModel>,
    measure: &M,
) -> Result<GanModel, GanError> {
    train_gan(dataset, Some(*cond_gpd), cfg, warm_from, measure)
}

// RNG stream ids per purpose, all derived from the one training seed.
const STREAM_SHUFFLE: u64 = 1;
const STREAM_LABELS: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_LATENT: u64 = 4;
const STREAM_COND: u64 = 5;
const SEED_SPLIT_G: u64 = 0x67656e; // "gen"
const SEED_SPLIT_D: u64 = 0x646973; // "dis"

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn train_gan<M: ExtremenessMeasure<f32>>(
    dataset: &Dataset,
    cond_gpd: Option<GpdParams>,
    cfg: &TrainConfig,
    warm_from: Option<&GanModel>,
    measure: &M,
) -> Result<GanModel, GanError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(GanError::EmptyDataset);
    }
    let conditional = cond_gpd.is_some();
    let g_arch = generator_arch(&cfg.net, conditional)?;
    let d_arch = discriminator_arch(&cfg.net, conditional)?;

    let (mut gen, mut disc, lr_g, lr_d) = match warm_from {
        Some(prev) => {
            if prev.generator.net.arch != g_arch || prev.discriminator.net.arch != d_arch {
                return Err(GanError::ArchMismatch(
                    "warm start requires the same architecture".into(),
                ));
            }
            let mut g = prev.generator.clone();
            let mut d = prev.discriminator.clone();
            g.reset_optimizer();
            d.reset_optimizer();
            (g, d, cfg.optim.warm_lr_g, cfg.optim.warm_lr_d)
        }
        None => {
            let g = Model::new(build_network::<f32>(
                &g_arch,
                cfg.seed.wrapping_add(SEED_SPLIT_G),
            )?);
            let d = Model::new(build_network::<f32>(
                &d_arch,
                cfg.seed.wrapping_add(SEED_SPLIT_D),
            )?);
            (g, d, cfg.optim.lr_g, cfg.optim.lr_d)
        }
    };

    let adam = cfg.adam();
    let n = dataset.len();
    let dz = cfg.net.latent_dim;
    let ext_scale = dataset
        .samples
        .iter()
        .map(|s| s.extremeness.abs())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let batches_per_epoch = n.div_ceil(cfg.batch);
    let total_steps = cfg.epochs * batches_per_epoch;

    let mut rng_shuffle = stream(cfg.seed, STREAM_SHUFFLE);
    let mut rng_labels = stream(cfg.seed, STREAM_LABELS);
    let mut rng_noise = stream(cfg.seed, STREAM_NOISE);
    let mut rng_latent = stream(cfg.seed, STREAM_LATENT);
    let mut rng_cond = stream(cfg.seed, STREAM_COND);

    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng_shuffle);
        for (batch_idx, chunk) in order.chunks(cfg.batch).enumerate() {
            let b = chunk.len();
            let noise_std = d_noise_at(step, total_steps, cfg.d_noise_start);

            // Real batch and its conditioning (measured extremeness).
            let mut real = Array4::<f32>::zeros((b, 1, dataset.height, dataset.width));
            let mut real_cond = Array1::<f32>::zeros(b);
            for (i, &idx) in chunk.iter().enumerate() {
                let s = &dataset.samples[idx];
                real
                    .index_axis_mut(Axis(0), i)
                    .index_axis_mut(Axis(0), 0)
                    .assign(&s.pixels);
                real_cond[i] = (s.extremeness / ext_scale) as f32;
            }

            // ---- Discriminator step.
            let es_fake = draw_cond(&cond_gpd, b, &mut rng_cond);
            let z = draw_latents(b, dz, &mut rng_latent);
            let g_in = compose_input(&z, es_fake.as_deref(), ext_scale);
            let fake = gen.net.infer(Value::Mat(g_in), None)?.into_grid()?;

            let real_noisy = add_noise(&real, noise_std, &mut rng_noise);
            let fake_noisy = add_noise(&fake, noise_std, &mut rng_noise);
            let (t_real, t_fake) = draw_targets(cfg, b, &mut rng_labels);

            let fake_cond_arr = es_fake
                .as_ref()
                .map(|es| scaled_cond(es, ext_scale));
            let (d_real_out, tape_r) =
                disc.net
                    .forward(Value::Grid(real_noisy), conditional.then_some(&real_cond), true, None)?;
            let (_, grad_real) = bce_loss(&d_real_out.into_mat()?, &t_real);
            let (mut d_grads, _) = disc.net.backward(&tape_r, Value::Mat(grad_real))?;

            let (d_fake_out, tape_f) =
                disc.net
                    .forward(Value::Grid(fake_noisy), fake_cond_arr.as_ref(), true, None)?;
            let (_, grad_fake) = bce_loss(&d_fake_out.into_mat()?, &t_fake);
            let (d_grads_f, _) = disc.net.backward(&tape_f, Value::Mat(grad_fake))?;
            d_grads.add(&d_grads_f)?;
            disc.step(&d_grads, lr_d, &adam)?;

            // ---- Generator step.
            let es_g = draw_cond(&cond_gpd, b, &mut rng_cond);
            let z2 = draw_latents(b, dz, &mut rng_latent);
            let g_in2 = compose_input(&z2, es_g.as_deref(), ext_scale);
            let (fake2, tape_g) = gen.net.forward(Value::Mat(g_in2), None, true, None)?;
            let fake2 = fake2.into_grid()?;
            let fake2_noisy = add_noise(&fake2, noise_std, &mut rng_noise);
            let g_cond_arr = es_g.as_ref().map(|es| scaled_cond(es, ext_scale));
            let (d_out_g, tape_dg) =
                disc.net
                    .forward(Value::Grid(fake2_noisy), g_cond_arr.as_ref(), true, None)?;
            let ones = vec![1.0; b];
            let (_, grad_dout) = bce_loss(&d_out_g.into_mat()?, &ones);
            // Parameter gradients from this pass belong to D's play in the
            // minimax game, not to G's update; only the input gradient is
            // kept.
            let (_, grad_wrt_fake) = disc.net.backward(&tape_dg, Value::Mat(grad_dout))?;
            let mut grad_fake_total = grad_wrt_fake.into_grid()?;

            if let Some(es) = &es_g {
                let (_, ext_grad) = ext_loss(es, &fake2, measure)?;
                let w = cfg.ext_weight as f32;
                grad_fake_total.zip_mut_with(&ext_grad, |g, e| *g += w * *e);
            }

            let (g_grads, _) = gen.net.backward(&tape_g, Value::Grid(grad_fake_total))?;
            gen.step(&g_grads, lr_g, &adam)?;

            if let Err(e) = gen.net.assert_finite().and(disc.net.assert_finite()) {
                return Err(GanError::Diverged {
                    epoch,
                    batch: batch_idx,
                    detail: e.to_string(),
                });
            }
            step += 1;
        }
    }

    Ok(GanModel {
        generator: gen,
        discriminator: disc,
        conditional,
        cond_gpd,
        ext_scale,
        latent_dim: dz,
        grid: (dataset.height, dataset.width),
    })
}

fn draw_cond(
    cond_gpd: &Option<GpdParams>,
    b: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<f64>> {
    cond_gpd.as_ref().map(|g| g.sample(b, rng))
}

fn draw_latents(b: usize, dz: usize, rng: &mut ChaCha8Rng) -> Array2<f32> {
    let mut z = Array2::<f32>::zeros((b, dz));
    for v in z.iter_mut() {
        *v = rng.sample::<f32, _>(StandardNormal);
    }
    z
}

fn compose_input(z: &Array2<f32>, es: Option<&[f64]>, ext_scale: f64) -> Array2<f32> {
    match es {
        None => z.clone(),
        Some(es) => {
            let (b, dz) = z.dim();
            let mut m = Array2::<f32>::zeros((b, dz + 1));
            m.slice_mut(ndarray::s![.., ..dz]).assign(z);
            for (i, &e) in es.iter().enumerate() {
                m[(i, dz)] = (e / ext_scale) as f32;
            }
            m
        }
    }
}

fn scaled_cond(es: &[f64], ext_scale: f64) -> Array1<f32> {
    Array1::from_iter(es.iter().map(|&e| (e / ext_scale) as f32))
}

fn add_noise(x: &Array4<f32>, std: f64, rng: &mut ChaCha8Rng) -> Array4<f32> {
    if std == 0.0 {
        return x.clone();
    }
    let s = std as f32;
    let mut out = x.clone();
    for v in out.iter_mut() {
        *v += s * rng.sample::<f32, _>(StandardNormal);
    }
    out
}
