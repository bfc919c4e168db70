//! Network assembly: seeded initialization from an [`ArchDescriptor`], taped
//! forward passes and the reverse sweep.

use ndarray::{Array1, Array2, Array4};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::arch::{ArchDescriptor, LayerSpec};
use super::layers::{Cache, Conv2d, ConvT2d, Dense, InstanceNorm, Layer};
use super::{NnError, Real, Value};

pub use super::layers::Array1Flat as GradTensor;

/// All parameter gradients from one backward pass, aligned with the network's
/// layer and tensor order.
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    pub per_layer: Vec<Vec<GradTensor<F>>>,
}

impl<F: Real> Gradients<F> {
    pub fn zeros_like(net: &Network<F>) -> Self {
        let per_layer = net
            .layers
            .iter()
            .map(|l| {
                l.param_slices()
                    .into_iter()
                    .map(|(name, s, shape)| GradTensor {
                        name,
                        data: vec![F::zero(); s.len()],
                        shape,
                    })
                    .collect()
            })
            .collect();
        Self { per_layer }
    }

    /// Elementwise sum, for accumulating the real+fake discriminator passes.
    pub fn add(&mut self, other: &Gradients<F>) -> Result<(), NnError> {
        if self.per_layer.len() != other.per_layer.len() {
            return Err(NnError::KeyMismatch {
                layer: 0,
                reason: "layer count differs".into(),
            });
        }
        for (li, (a, b)) in self
            .per_layer
            .iter_mut()
            .zip(other.per_layer.iter())
            .enumerate()
        {
            if a.len() != b.len() {
                return Err(NnError::KeyMismatch {
                    layer: li,
                    reason: "tensor count differs".into(),
                });
            }
            for (ta, tb) in a.iter_mut().zip(b.iter()) {
                if ta.data.len() != tb.data.len() {
                    return Err(NnError::KeyMismatch {
                        layer: li,
                        reason: format!("tensor {} length differs", ta.name),
                    });
                }
                for (x, y) in ta.data.iter_mut().zip(tb.data.iter()) {
                    *x += *y;
                }
            }
        }
        Ok(())
    }
}

/// Cached per-layer forward state for one taped pass.
pub struct Tape<F> {
    pub(crate) caches: Vec<Cache<F>>,
}

#[derive(Debug, Clone)]
pub struct Network<F> {
    pub arch: ArchDescriptor,
    pub layers: Vec<Layer<F>>,
}

/// Build a network with seeded initialization.
///
/// Convolution weights are drawn from N(0, 0.02²) and biases start at zero;
/// dense layers use the usual uniform fan-in rule; instance-norm affine
/// parameters start at identity. Identical descriptor and seed give
/// bit-identical parameters.
pub fn build_network<F: Real>(arch: &ArchDescriptor, seed: u64) -> Result<Network<F>, NnError> {
    arch.shape_flow()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conv_init = Normal::new(0.0, 0.02).expect("valid normal");
    let mut layers = Vec::with_capacity(arch.layers.len());
    for spec in &arch.layers {
        let layer = match *spec {
            LayerSpec::Dense { in_dim, out_dim } => {
                let bound = 1.0 / (in_dim as f64).sqrt();
                let w = Array2::from_shape_fn((in_dim, out_dim), |_| {
                    F::from_f64(rng.random_range(-bound..bound))
                });
                let b = Array1::zeros(out_dim);
                Layer::Dense(Dense { w, b })
            }
            LayerSpec::Conv {
                in_ch,
                out_ch,
                kernel,
                stride,
                pad,
            } => {
                let w = Array4::from_shape_fn((out_ch, in_ch, kernel, kernel), |_| {
                    F::from_f64(conv_init.sample(&mut rng))
                });
                Layer::Conv(Conv2d {
                    w,
                    b: Array1::zeros(out_ch),
                    stride,
                    pad,
                })
            }
            LayerSpec::ConvT {
                in_ch,
                out_ch,
                kernel,
                stride,
                pad,
            } => {
                let w = Array4::from_shape_fn((in_ch, out_ch, kernel, kernel), |_| {
                    F::from_f64(conv_init.sample(&mut rng))
                });
                Layer::ConvT(ConvT2d {
                    w,
                    b: Array1::zeros(out_ch),
                    stride,
                    pad,
                })
            }
            LayerSpec::InstanceNorm { ch, affine } => Layer::InstanceNorm(InstanceNorm {
                gamma: affine.then(|| Array1::from_elem(ch, F::one())),
                beta: affine.then(|| Array1::zeros(ch)),
                eps: 1e-5,
            }),
            LayerSpec::LeakyRelu { alpha } => Layer::LeakyRelu { alpha },
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Tanh => Layer::Tanh,
            LayerSpec::Sigmoid => Layer::Sigmoid,
            LayerSpec::Dropout { p } => Layer::Dropout { p },
            LayerSpec::Flatten => {
                // Shape flow already validated; recover dims from the walk.
                let (ch, h, w) = flatten_dims(arch, layers.len())?;
                Layer::Flatten { ch, h, w }
            }
            LayerSpec::ToGrid { ch, h, w } => Layer::ToGrid { ch, h, w },
            LayerSpec::ConcatCond => Layer::ConcatCond,
        };
        layers.push(layer);
    }
    Ok(Network {
        arch: arch.clone(),
        layers,
    })
}

fn flatten_dims(arch: &ArchDescriptor, index: usize) -> Result<(usize, usize, usize), NnError> {
    use super::arch::SymShape;
    let flow = arch.shape_flow()?;
    let before = if index == 0 {
        match arch.input {
            super::arch::InputKind::Grid { ch, h, w } => SymShape::Grid(ch, h, w),
            super::arch::InputKind::Flat { dim } => SymShape::Flat(dim),
        }
    } else {
        flow[index - 1]
    };
    match before {
        SymShape::Grid(c, h, w) => Ok((c, h, w)),
        SymShape::Flat(_) => Err(NnError::InvalidArch {
            index,
            layer: "flatten".into(),
            reason: "input is already flat".into(),
        }),
    }
}

impl<F: Real> Network<F> {
    /// Taped forward pass. `train` enables dropout (which then needs an RNG);
    /// `cond` feeds any `ConcatCond` layer and is rejected if the
    /// architecture has none.
    pub fn forward(
        &self,
        input: Value<F>,
        cond: Option<&Array1<F>>,
        train: bool,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Value<F>, Tape<F>), NnError> {
        self.check_cond(cond)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input;
        for layer in &self.layers {
            let (y, cache) = layer.forward(x, cond, train, dropout_rng.as_deref_mut(), true)?;
            caches.push(cache);
            x = y;
        }
        Ok((x, Tape { caches }))
    }

    /// Evaluation-mode forward pass without a tape (dropout off).
    pub fn infer(&self, input: Value<F>, cond: Option<&Array1<F>>) -> Result<Value<F>, NnError> {
        self.check_cond(cond)?;
        let mut x = input;
        for layer in &self.layers {
            let (y, _) = layer.forward(x, cond, false, None, false)?;
            x = y;
        }
        Ok(x)
    }

    fn check_cond(&self, cond: Option<&Array1<F>>) -> Result<(), NnError> {
        match (self.arch.takes_cond(), cond.is_some()) {
            (true, false) => Err(NnError::MissingCond),
            (false, true) => Err(NnError::SuperfluousCond),
            _ => Ok(()),
        }
    }

    /// Reverse sweep from the gradient of a scalar loss with respect to the
    /// network output. Returns parameter gradients and the input gradient.
    pub fn backward(
        &self,
        tape: &Tape<F>,
        grad_out: Value<F>,
    ) -> Result<(Gradients<F>, Value<F>), NnError> {
        let mut per_layer = vec![Vec::new(); self.layers.len()];
        let mut grad = grad_out;
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let (gin, pgrads) = layer.backward(&tape.caches[idx], grad)?;
            per_layer[idx] = pgrads;
            grad = gin;
        }
        Ok((Gradients { per_layer }, grad))
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.param_slices().iter().map(|(_, s, _)| s.len()).sum::<usize>())
            .sum()
    }

    /// Named flattened parameter tensors, e.g. `("layer02.weight", …)`.
    pub fn named_params(&self) -> Vec<(String, Vec<usize>, &[F])> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, slice, shape) in layer.param_slices() {
                out.push((format!("layer{i:02}.{name}"), shape, slice));
            }
        }
        out
    }

    /// Overwrite parameters from a name-keyed list (checkpoint loading /
    /// warm starts). Order and lengths must match exactly.
    pub fn load_named_params(&mut self, params: &[(String, Vec<F>)]) -> Result<(), NnError> {
        let mut iter = params.iter();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (name, slice) in layer.param_slices_mut() {
                let (got_name, data) = iter.next().ok_or_else(|| NnError::KeyMismatch {
                    layer: i,
                    reason: "fewer tensors than parameters".into(),
                })?;
                let want = format!("layer{i:02}.{name}");
                if *got_name != want {
                    return Err(NnError::KeyMismatch {
                        layer: i,
                        reason: format!("expected {want}, got {got_name}"),
                    });
                }
                if data.len() != slice.len() {
                    return Err(NnError::KeyMismatch {
                        layer: i,
                        reason: format!("tensor {want} length {} != {}", data.len(), slice.len()),
                    });
                }
                slice.copy_from_slice(data);
            }
        }
        if iter.next().is_some() {
            return Err(NnError::KeyMismatch {
                layer: self.layers.len(),
                reason: "more tensors than parameters".into(),
            });
        }
        Ok(())
    }

    /// The no-NaN/no-Inf training invariant.
    pub fn assert_finite(&self) -> Result<(), NnError> {
        for (name, _, slice) in self.named_params() {
            if !slice.iter().all(|v| v.is_finite()) {
                return Err(NnError::NonFinite(name));
            }
        }
        Ok(())
    }
}
