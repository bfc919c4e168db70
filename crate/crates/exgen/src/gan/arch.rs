//! Default network architectures.
//!
//! The convolutional stack mirrors the usual DCGAN shape: the generator
//! upsamples 4×4 → grid size through ConvT(4×4, stride 2) blocks with
//! instance norm and LeakyReLU(0.2), ending in a plain ConvT + Tanh; the
//! discriminator mirrors it downward, squeezes to a 64-d feature vector,
//! concatenates the conditioning scalar when present, and finishes with
//! Linear + Sigmoid. Channel counts start at `base_ch` on the 4×4 stage and
//! halve per upsampling step; `base_ch` defaults to 2·grid so desk-scale
//! grids stay CPU-trainable (the 64×64/512-channel configuration from the
//! reference setting is one `base_ch` override away).
//!
//! The MLP fallback is z → 256 → 1024 → H·W with a mirrored discriminator,
//! no normalization; it exists for environments where convolution is too
//! slow.

use serde::{Deserialize, Serialize};

use crate::nn::{ArchDescriptor, InputKind, LayerSpec};

use super::GanError;

pub const LEAKY_ALPHA: f64 = 0.2;
pub const DISC_FEAT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    #[default]
    Conv,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub kind: ArchKind,
    pub grid: (usize, usize),
    pub latent_dim: usize,
    /// Channels at the 4×4 stage of the conv stack.
    pub base_ch: usize,
    /// Learnable scale/shift on the instance norms.
    pub affine_norm: bool,
}

impl NetConfig {
    pub fn desk_default(grid: usize) -> Self {
        Self {
            kind: ArchKind::Conv,
            grid: (grid, grid),
            latent_dim: 20,
            base_ch: 2 * grid,
            affine_norm: true,
        }
    }

    fn conv_feasible(&self) -> Result<usize, GanError> {
        let (h, w) = self.grid;
        if h != w {
            return Err(GanError::ArchMismatch(format!(
                "conv stack needs a square grid, got {h}x{w}"
            )));
        }
        if h < 8 || !h.is_power_of_two() {
            return Err(GanError::ArchMismatch(format!(
                "conv stack needs a power-of-two grid of at least 8, got {h}"
            )));
        }
        Ok(h)
    }

    /// Channels at spatial size `s`: halve per upsampling step from
    /// `base_ch` at 4×4, floored at 4.
    fn ch(&self, s: usize) -> usize {
        (self.base_ch * 4 / s).max(4)
    }
}

pub fn generator_arch(cfg: &NetConfig, conditional: bool) -> Result<ArchDescriptor, GanError> {
    let in_dim = cfg.latent_dim + usize::from(conditional);
    let layers = match cfg.kind {
        ArchKind::Conv => {
            let size = cfg.conv_feasible()?;
            let mut layers = vec![
                LayerSpec::ToGrid {
                    ch: in_dim,
                    h: 1,
                    w: 1,
                },
                LayerSpec::ConvT {
                    in_ch: in_dim,
                    out_ch: cfg.ch(4),
                    kernel: 4,
                    stride: 1,
                    pad: 0,
                },
                LayerSpec::InstanceNorm {
                    ch: cfg.ch(4),
                    affine: cfg.affine_norm,
                },
                LayerSpec::LeakyRelu { alpha: LEAKY_ALPHA },
            ];
            let mut s = 4;
            while s * 2 < size {
                layers.push(LayerSpec::ConvT {
                    in_ch: cfg.ch(s),
                    out_ch: cfg.ch(s * 2),
                    kernel: 4,
                    stride: 2,
                    pad: 1,
                });
                layers.push(LayerSpec::InstanceNorm {
                    ch: cfg.ch(s * 2),
                    affine: cfg.affine_norm,
                });
                layers.push(LayerSpec::LeakyRelu { alpha: LEAKY_ALPHA });
                s *= 2;
            }
            layers.push(LayerSpec::ConvT {
                in_ch: cfg.ch(s),
                out_ch: 1,
                kernel: 4,
                stride: 2,
                pad: 1,
            });
            layers.push(LayerSpec::Tanh);
            layers
        }
        ArchKind::Mlp => {
            let (h, w) = cfg.grid;
            vec![
                LayerSpec::Dense {
                    in_dim,
                    out_dim: 256,
                },
                LayerSpec::LeakyRelu { alpha: LEAKY_ALPHA },
                LayerSpec::Dense {
                    in_dim: 256,
                    out_dim: 1024,
                },
                LayerSpec::LeakyRelu { alpha: LEAKY_ALPHA },
                LayerSpec::Dense {
                    in_dim: 1024,
                    out_dim: h * w,
                },
                LayerSpec::Tanh,
                LayerSpec::ToGrid { ch: 1, h, w },
            ]
        }
    };
    Ok(ArchDescriptor::new(InputKind::Flat { dim: in_dim }, layers))
}

pub fn discriminator_arch(cfg: &NetConfig, conditional: bool) -> Result<ArchDescriptor, GanError> {
    let (h, w) = cfg.grid;
    let layers = match cfg.kind {
        ArchKind::Conv => {
            let size = cfg.conv_feasible()?;
            let mut layers = Vec::new();
            let mut s = size;
            let mut in_ch = 1;
            while s > 4 {
                let out_ch = cfg.ch(s / 2);
                layers.push(LayerSpec::Conv {
                    in_ch,
                    out_ch,
                    kernel: 4,
                    stride: 2,
                    pad: 1,
                });
                layers.push(LayerSpec::InstanceNorm {
                    ch: out_ch,
                    affine: cfg.affine_norm,
                });
                layers.push(LayerSpec::LeakyRelu { alpha: LEAKY_ALPHA });
                in_ch = out_ch;
                s /= 2;
            }
            layers.push(LayerSpec::Conv {
                in_ch,
                out_ch: DISC_FEAT,
                kernel: 4,
                stride: 1,
                pad: 0,
            });
            layers.push(LayerSpec::Flatten);
            if conditional {
                layers.push(LayerSpec::ConcatCond);
            }
            layers.push(LayerSpec::Dense {
                in_dim: DISC_FEAT + usize::from(conditional),
                out_dim: 1,
            });
            layers.push(LayerSpec::Sigmoid);
            layers
        }
        ArchKind::Mlp => {
            let mut layers = vec![LayerSpec::Flatten];
            if conditional {
                layers.push(LayerSpec::ConcatCond);
            }
            layers.extend([
                LayerSpec::Dense {
                    in_dim: h * w + usize::from(conditional),
                    out_dim: 1024,
                },
                LayerSpec::LeakyRelu { alpha: LEAKY_ALPHA },
                LayerSpec::Dense {
                    in_dim: 1024,
                    out_dim: 256,
                },
                LayerSpec::LeakyRelu { alpha: LEAKY_ALPHA },
                LayerSpec::Dense {
                    in_dim: 256,
                    out_dim: 1,
                },
                LayerSpec::Sigmoid,
            ]);
            layers
        }
    };
    Ok(ArchDescriptor::new(InputKind::Grid { ch: 1, h, w }, layers))
}
