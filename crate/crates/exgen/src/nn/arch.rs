//! Architecture descriptors: an ordered list of layer specs plus the input
//! kind, checked for mutual shape consistency before any weights exist.

use serde::{Deserialize, Serialize};

use super::NnError;

/// What the network consumes. Batch size is implicit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    /// A flat vector per sample (latent codes, flattened grids).
    Flat { dim: usize },
    /// An image batch.
    Grid { ch: usize, h: usize, w: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LayerSpec {
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    ConvT {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    InstanceNorm {
        ch: usize,
        affine: bool,
    },
    LeakyRelu {
        alpha: f64,
    },
    Relu,
    Tanh,
    Sigmoid,
    Dropout {
        p: f64,
    },
    /// `(B, C, H, W)` -> `(B, C·H·W)`.
    Flatten,
    /// `(B, C·H·W)` -> `(B, C, H, W)`.
    ToGrid {
        ch: usize,
        h: usize,
        w: usize,
    },
    /// Append the per-sample conditioning scalar as one extra column.
    ConcatCond,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::ConvT { .. } => "conv_t",
            LayerSpec::InstanceNorm { .. } => "instance_norm",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Relu => "relu",
            LayerSpec::Tanh => "tanh",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::ToGrid { .. } => "to_grid",
            LayerSpec::ConcatCond => "concat_cond",
        }
    }
}

/// Shape of one sample at some point in the stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymShape {
    Flat(usize),
    Grid(usize, usize, usize),
}

impl std::fmt::Display for SymShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SymShape::Flat(d) => write!(f, "flat({d})"),
            SymShape::Grid(c, h, w) => write!(f, "grid({c}x{h}x{w})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchDescriptor {
    pub input: InputKind,
    pub layers: Vec<LayerSpec>,
}

impl ArchDescriptor {
    pub fn new(input: InputKind, layers: Vec<LayerSpec>) -> Self {
        Self { input, layers }
    }

    pub fn takes_cond(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, LayerSpec::ConcatCond))
    }

    /// Walk the layer stack symbolically, returning the per-layer output
    /// shapes. Any inconsistency is reported with the offending layer.
    pub fn shape_flow(&self) -> Result<Vec<SymShape>, NnError> {
        let mut shape = match self.input {
            InputKind::Flat { dim } => SymShape::Flat(dim),
            InputKind::Grid { ch, h, w } => SymShape::Grid(ch, h, w),
        };
        let mut flow = Vec::with_capacity(self.layers.len());
        for (index, spec) in self.layers.iter().enumerate() {
            let err = |reason: String| NnError::InvalidArch {
                index,
                layer: spec.name().into(),
                reason,
            };
            shape = match (*spec, shape) {
                (LayerSpec::Dense { in_dim, out_dim }, SymShape::Flat(d)) => {
                    if d != in_dim {
                        return Err(err(format!("expects in_dim {in_dim}, input is {d}")));
                    }
                    if out_dim == 0 {
                        return Err(err("out_dim must be positive".into()));
                    }
                    SymShape::Flat(out_dim)
                }
                (
                    LayerSpec::Conv {
                        in_ch,
                        out_ch,
                        kernel,
                        stride,
                        pad,
                    },
                    SymShape::Grid(c, h, w),
                ) => {
                    if c != in_ch {
                        return Err(err(format!("expects {in_ch} channels, input has {c}")));
                    }
                    if stride == 0 || kernel == 0 {
                        return Err(err("kernel and stride must be positive".into()));
                    }
                    let oh = conv_out(h, kernel, stride, pad)
                        .ok_or_else(|| err(format!("cannot stride {h}px with k={kernel} s={stride} p={pad}")))?;
                    let ow = conv_out(w, kernel, stride, pad)
                        .ok_or_else(|| err(format!("cannot stride {w}px with k={kernel} s={stride} p={pad}")))?;
                    SymShape::Grid(out_ch, oh, ow)
                }
                (
                    LayerSpec::ConvT {
                        in_ch,
                        out_ch,
                        kernel,
                        stride,
                        pad,
                    },
                    SymShape::Grid(c, h, w),
                ) => {
                    if c != in_ch {
                        return Err(err(format!("expects {in_ch} channels, input has {c}")));
                    }
                    if stride == 0 || kernel == 0 {
                        return Err(err("kernel and stride must be positive".into()));
                    }
                    let oh = (h - 1) * stride + kernel;
                    let ow = (w - 1) * stride + kernel;
                    if oh <= 2 * pad || ow <= 2 * pad {
                        return Err(err("padding eats the whole output".into()));
                    }
                    SymShape::Grid(out_ch, oh - 2 * pad, ow - 2 * pad)
                }
                (LayerSpec::InstanceNorm { ch, .. }, SymShape::Grid(c, h, w)) => {
                    if c != ch {
                        return Err(err(format!("expects {ch} channels, input has {c}")));
                    }
                    SymShape::Grid(c, h, w)
                }
                (
                    LayerSpec::LeakyRelu { .. }
                    | LayerSpec::Relu
                    | LayerSpec::Tanh
                    | LayerSpec::Sigmoid,
                    s,
                ) => s,
                (LayerSpec::Dropout { p }, s) => {
                    if !(0.0..1.0).contains(&p) {
                        return Err(err(format!("dropout rate {p} outside [0, 1)")));
                    }
                    s
                }
                (LayerSpec::Flatten, SymShape::Grid(c, h, w)) => SymShape::Flat(c * h * w),
                (LayerSpec::ToGrid { ch, h, w }, SymShape::Flat(d)) => {
                    if d != ch * h * w {
                        return Err(err(format!("cannot reshape flat({d}) into {ch}x{h}x{w}")));
                    }
                    SymShape::Grid(ch, h, w)
                }
                (LayerSpec::ConcatCond, SymShape::Flat(d)) => SymShape::Flat(d + 1),
                (spec, s) => {
                    return Err(err(format!("{} cannot consume {s}", spec.name())));
                }
            };
            flow.push(shape);
        }
        Ok(flow)
    }

    pub fn output_shape(&self) -> Result<SymShape, NnError> {
        let flow = self.shape_flow()?;
        Ok(*flow.last().unwrap_or(&match self.input {
            InputKind::Flat { dim } => SymShape::Flat(dim),
            InputKind::Grid { ch, h, w } => SymShape::Grid(ch, h, w),
        }))
    }
}

pub(crate) fn conv_out(size: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    let padded = size + 2 * p;
    if padded < k || (padded - k) % s != 0 {
        return None;
    }
    Some((padded - k) / s + 1)
}
