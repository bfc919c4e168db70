//! Layer implementations: forward passes, cached state and backward passes.
//!
//! Convolutions go through im2col/col2im so the heavy lifting is a GEMM.
//! `col2im` is the exact adjoint of `im2col` (both walk indices through the
//! same routine), which is what makes the transposed convolution gradients
//! line up with finite differences.

use ndarray::{Array1, Array2, Array4, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::arch::conv_out;
use super::{NnError, Real, Value};

#[derive(Debug, Clone)]
pub struct Dense<F> {
    pub w: Array2<F>, // (in, out)
    pub b: Array1<F>, // (out)
}

#[derive(Debug, Clone)]
pub struct Conv2d<F> {
    pub w: Array4<F>, // (out_ch, in_ch, k, k)
    pub b: Array1<F>, // (out_ch)
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug, Clone)]
pub struct ConvT2d<F> {
    pub w: Array4<F>, // (in_ch, out_ch, k, k)
    pub b: Array1<F>, // (out_ch)
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug, Clone)]
pub struct InstanceNorm<F> {
    pub gamma: Option<Array1<F>>, // (ch), present iff affine
    pub beta: Option<Array1<F>>,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub enum Layer<F> {
    Dense(Dense<F>),
    Conv(Conv2d<F>),
    ConvT(ConvT2d<F>),
    InstanceNorm(InstanceNorm<F>),
    LeakyRelu { alpha: f64 },
    Relu,
    Tanh,
    Sigmoid,
    Dropout { p: f64 },
    Flatten { ch: usize, h: usize, w: usize },
    ToGrid { ch: usize, h: usize, w: usize },
    ConcatCond,
}

/// Per-layer state captured during a taped forward pass.
#[derive(Debug, Clone)]
pub enum Cache<F> {
    None,
    Dense { x: Array2<F> },
    Conv { cols: Array2<F>, in_hw: (usize, usize) },
    ConvT { x2: Array2<F>, in_hw: (usize, usize) },
    InstanceNorm { xhat: Array4<F>, inv_std: Array2<F> },
    LeakyRelu { x: Value<F> },
    Relu { x: Value<F> },
    Tanh { y: Value<F> },
    Sigmoid { y: Value<F> },
    Dropout { mask: Value<F> },
}

/// Gradients for one layer's parameters, in the layer's parameter order.
pub type ParamGrads<F> = Vec<Array1Flat<F>>;

/// A flattened tensor gradient: raw data plus the shape it reassembles to.
#[derive(Debug, Clone)]
pub struct Array1Flat<F> {
    pub name: &'static str,
    pub data: Vec<F>,
    pub shape: Vec<usize>,
}

impl<F: Real> Layer<F> {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv(_) => "conv",
            Layer::ConvT(_) => "conv_t",
            Layer::InstanceNorm(_) => "instance_norm",
            Layer::LeakyRelu { .. } => "leaky_relu",
            Layer::Relu => "relu",
            Layer::Tanh => "tanh",
            Layer::Sigmoid => "sigmoid",
            Layer::Dropout { .. } => "dropout",
            Layer::Flatten { .. } => "flatten",
            Layer::ToGrid { .. } => "to_grid",
            Layer::ConcatCond => "concat_cond",
        }
    }

    /// Named views of the parameter tensors, flattened. Order is stable and
    /// shared with [`Layer::param_slices_mut`] and the gradient layout.
    pub fn param_slices(&self) -> Vec<(&'static str, &[F], Vec<usize>)> {
        match self {
            Layer::Dense(l) => vec![
                ("weight", l.w.as_slice().unwrap(), l.w.shape().to_vec()),
                ("bias", l.b.as_slice().unwrap(), l.b.shape().to_vec()),
            ],
            Layer::Conv(l) => vec![
                ("weight", l.w.as_slice().unwrap(), l.w.shape().to_vec()),
                ("bias", l.b.as_slice().unwrap(), l.b.shape().to_vec()),
            ],
            Layer::ConvT(l) => vec![
                ("weight", l.w.as_slice().unwrap(), l.w.shape().to_vec()),
                ("bias", l.b.as_slice().unwrap(), l.b.shape().to_vec()),
            ],
            Layer::InstanceNorm(l) => match (&l.gamma, &l.beta) {
                (Some(g), Some(b)) => vec![
                    ("gamma", g.as_slice().unwrap(), g.shape().to_vec()),
                    ("beta", b.as_slice().unwrap(), b.shape().to_vec()),
                ],
                _ => vec![],
            },
            _ => vec![],
        }
    }

    pub fn param_slices_mut(&mut self) -> Vec<(&'static str, &mut [F])> {
        match self {
            Layer::Dense(l) => vec![
                ("weight", l.w.as_slice_mut().unwrap()),
                ("bias", l.b.as_slice_mut().unwrap()),
            ],
            Layer::Conv(l) => vec![
                ("weight", l.w.as_slice_mut().unwrap()),
                ("bias", l.b.as_slice_mut().unwrap()),
            ],
            Layer::ConvT(l) => vec![
                ("weight", l.w.as_slice_mut().unwrap()),
                ("bias", l.b.as_slice_mut().unwrap()),
            ],
            Layer::InstanceNorm(l) => match (&mut l.gamma, &mut l.beta) {
                (Some(g), Some(b)) => vec![
                    ("gamma", g.as_slice_mut().unwrap()),
                    ("beta", b.as_slice_mut().unwrap()),
                ],
                _ => vec![],
            },
            _ => vec![],
        }
    }

    pub fn forward(
        &self,
        x: Value<F>,
        cond: Option<&Array1<F>>,
        train: bool,
        dropout_rng: Option<&mut ChaCha8Rng>,
        want_cache: bool,
    ) -> Result<(Value<F>, Cache<F>), NnError> {
        let mismatch = |expected: &str, got: &Value<F>| NnError::ShapeMismatch {
            layer: self.name().into(),
            expected: expected.into(),
            got: got.shape_string(),
        };
        match self {
            Layer::Dense(l) => {
                let x = match x {
                    Value::Mat(m) => m,
                    other => return Err(mismatch("matrix", &other)),
                };
                if x.ncols() != l.w.nrows() {
                    return Err(NnError::ShapeMismatch {
                        layer: "dense".into(),
                        expected: format!("{} input features", l.w.nrows()),
                        got: format!("{}", x.ncols()),
                    });
                }
                let mut y = x.dot(&l.w);
                for mut row in y.rows_mut() {
                    row += &l.b;
                }
                let cache = if want_cache {
                    Cache::Dense { x }
                } else {
                    Cache::None
                };
                Ok((Value::Mat(y), cache))
            }
            Layer::Conv(l) => {
                let x = match x {
                    Value::Grid(g) => g,
                    other => return Err(mismatch("grid", &other)),
                };
                let (b, c, h, w) = dims4(&x);
                let k = l.w.shape()[2];
                if c != l.w.shape()[1] {
                    return Err(NnError::ShapeMismatch {
                        layer: "conv".into(),
                        expected: format!("{} channels", l.w.shape()[1]),
                        got: format!("{c}"),
                    });
                }
                let oh = conv_out(h, k, l.stride, l.pad).ok_or_else(|| NnError::ShapeMismatch {
                    layer: "conv".into(),
                    expected: "stride-compatible input".into(),
                    got: format!("{h}x{w}"),
                })?;
                let ow = conv_out(w, k, l.stride, l.pad).unwrap();
                let out_ch = l.w.shape()[0];
                let cols = im2col(&x, k, l.stride, l.pad, oh, ow);
                let wm = l
                    .w
                    .to_shape((out_ch, c * k * k))
                    .expect("conv weight reshape")
                    .to_owned();
                let y2 = cols.dot(&wm.t()); // (B·oh·ow, out_ch)
                let y = rows_to_grid(y2, b, oh, ow, out_ch, Some(&l.b));
                let cache = if want_cache {
                    Cache::Conv { cols, in_hw: (h, w) }
                } else {
                    Cache::None
                };
                Ok((Value::Grid(y), cache))
            }
            Layer::ConvT(l) => {
                let x = match x {
                    Value::Grid(g) => g,
                    other => return Err(mismatch("grid", &other)),
                };
                let (b, c, h, w) = dims4(&x);
                let k = l.w.shape()[2];
                if c != l.w.shape()[0] {
                    return Err(NnError::ShapeMismatch {
                        layer: "conv_t".into(),
                        expected: format!("{} channels", l.w.shape()[0]),
                        got: format!("{c}"),
                    });
                }
                let out_ch = l.w.shape()[1];
                let oh = (h - 1) * l.stride + k - 2 * l.pad;
                let ow = (w - 1) * l.stride + k - 2 * l.pad;
                let x2 = grid_to_rows(&x); // (B·h·w, in_ch)
                let wm = l
                    .w
                    .to_shape((c, out_ch * k * k))
                    .expect("conv_t weight reshape")
                    .to_owned();
                let cols = x2.dot(&wm); // (B·h·w, out_ch·k·k)
                let mut y = col2im(&cols, b, out_ch, oh, ow, k, l.stride, l.pad, h, w);
                for ch in 0..out_ch {
                    let bias = l.b[ch];
                    y.index_axis_mut(Axis(1), ch).mapv_inplace(|v| v + bias);
                }
                let cache = if want_cache {
                    Cache::ConvT { x2, in_hw: (h, w) }
                } else {
                    Cache::None
                };
                Ok((Value::Grid(y), cache))
            }
            Layer::InstanceNorm(l) => {
                let x = match x {
                    Value::Grid(g) => g,
                    other => return Err(mismatch("grid", &other)),
                };
                let (b, c, h, w) = dims4(&x);
                let m = (h * w) as f64;
                let mut xhat = x;
                let mut inv_std = Array2::<F>::zeros((b, c));
                for bi in 0..b {
                    for ci in 0..c {
                        let mut plane = xhat.index_axis_mut(Axis(0), bi);
                        let mut plane = plane.index_axis_mut(Axis(0), ci);
                        let mean = plane.iter().map(|v| v.as_f64()).sum::<f64>() / m;
                        let var = plane
                            .iter()
                            .map(|v| {
                                let d = v.as_f64() - mean;
                                d * d
                            })
                            .sum::<f64>()
                            / m;
                        let istd = 1.0 / (var + l.eps).sqrt();
                        inv_std[(bi, ci)] = F::from_f64(istd);
                        let mean = F::from_f64(mean);
                        let istd = F::from_f64(istd);
                        plane.mapv_inplace(|v| (v - mean) * istd);
                    }
                }
                let mut y = xhat.clone();
                if let (Some(g), Some(beta)) = (&l.gamma, &l.beta) {
                    for ci in 0..c {
                        let gc = g[ci];
                        let bc = beta[ci];
                        y.index_axis_mut(Axis(1), ci).mapv_inplace(|v| v * gc + bc);
                    }
                }
                let cache = if want_cache {
                    Cache::InstanceNorm { xhat, inv_std }
                } else {
                    Cache::None
                };
                Ok((Value::Grid(y), cache))
            }
            Layer::LeakyRelu { alpha } => {
                let a = F::from_f64(*alpha);
                let y = x.map_elems(|v| if v > F::zero() { v } else { v * a });
                let cache = if want_cache {
                    Cache::LeakyRelu { x }
                } else {
                    Cache::None
                };
                Ok((y, cache))
            }
            Layer::Relu => {
                let y = x.map_elems(|v| if v > F::zero() { v } else { F::zero() });
                let cache = if want_cache {
                    Cache::Relu { x }
                } else {
                    Cache::None
                };
                Ok((y, cache))
            }
            Layer::Tanh => {
                let y = x.map_elems(|v| v.tanh());
                let cache = if want_cache {
                    Cache::Tanh { y: y.clone() }
                } else {
                    Cache::None
                };
                Ok((y, cache))
            }
            Layer::Sigmoid => {
                let one = F::one();
                let y = x.map_elems(|v| one / (one + (-v).exp()));
                let cache = if want_cache {
                    Cache::Sigmoid { y: y.clone() }
                } else {
                    Cache::None
                };
                Ok((y, cache))
            }
            Layer::Dropout { p } => {
                if !train {
                    return Ok((x, Cache::None));
                }
                let rng = dropout_rng.ok_or(NnError::MissingDropoutRng)?;
                let keep = 1.0 - p;
                let scale = F::from_f64(1.0 / keep);
                let zero = F::zero();
                let mut make_mask = |len: usize| -> Vec<F> {
                    (0..len)
                        .map(|_| {
                            if rng.random::<f64>() < *p {
                                zero
                            } else {
                                scale
                            }
                        })
                        .collect()
                };
                let (y, mask) = match x {
                    Value::Mat(m) => {
                        let mask =
                            Array2::from_shape_vec(m.raw_dim(), make_mask(m.len())).unwrap();
                        (Value::Mat(&m * &mask), Value::Mat(mask))
                    }
                    Value::Grid(g) => {
                        let mask =
                            Array4::from_shape_vec(g.raw_dim(), make_mask(g.len())).unwrap();
                        (Value::Grid(&g * &mask), Value::Grid(mask))
                    }
                };
                let cache = if want_cache {
                    Cache::Dropout { mask }
                } else {
                    Cache::None
                };
                Ok((y, cache))
            }
            Layer::Flatten { ch, h, w } => {
                let x = match x {
                    Value::Grid(g) => g,
                    other => return Err(mismatch("grid", &other)),
                };
                let (b, c, gh, gw) = dims4(&x);
                if (c, gh, gw) != (*ch, *h, *w) {
                    return Err(NnError::ShapeMismatch {
                        layer: "flatten".into(),
                        expected: format!("{ch}x{h}x{w}"),
                        got: format!("{c}x{gh}x{gw}"),
                    });
                }
                let y = x
                    .to_shape((b, c * gh * gw))
                    .expect("flatten reshape")
                    .to_owned();
                Ok((Value::Mat(y), Cache::None))
            }
            Layer::ToGrid { ch, h, w } => {
                let x = match x {
                    Value::Mat(m) => m,
                    other => return Err(mismatch("matrix", &other)),
                };
                let b = x.nrows();
                if x.ncols() != ch * h * w {
                    return Err(NnError::ShapeMismatch {
                        layer: "to_grid".into(),
                        expected: format!("{} features", ch * h * w),
                        got: format!("{}", x.ncols()),
                    });
                }
                let y = x
                    .to_shape((b, *ch, *h, *w))
                    .expect("to_grid reshape")
                    .to_owned();
                Ok((Value::Grid(y), Cache::None))
            }
            Layer::ConcatCond => {
                let x = match x {
                    Value::Mat(m) => m,
                    other => return Err(mismatch("matrix", &other)),
                };
                let cond = cond.ok_or(NnError::MissingCond)?;
                if cond.len() != x.nrows() {
                    return Err(NnError::ShapeMismatch {
                        layer: "concat_cond".into(),
                        expected: format!("{} conditioning values", x.nrows()),
                        got: format!("{}", cond.len()),
                    });
                }
                let (b, d) = (x.nrows(), x.ncols());
                let mut y = Array2::<F>::zeros((b, d + 1));
                y.slice_mut(ndarray::s![.., ..d]).assign(&x);
                y.slice_mut(ndarray::s![.., d]).assign(cond);
                Ok((Value::Mat(y), Cache::None))
            }
        }
    }

    /// Reverse-mode step: consumes the upstream gradient and the cache the
    /// forward pass produced, returns the input gradient plus parameter
    /// gradients (empty for parameterless layers).
    pub fn backward(
        &self,
        cache: &Cache<F>,
        grad: Value<F>,
    ) -> Result<(Value<F>, ParamGrads<F>), NnError> {
        let bad_cache = || NnError::ShapeMismatch {
            layer: self.name().into(),
            expected: "matching forward cache".into(),
            got: "different cache kind (layer list changed between passes?)".into(),
        };
        match (self, cache) {
            (Layer::Dense(l), Cache::Dense { x }) => {
                let dy = grad.into_mat()?;
                let dw = x.t().dot(&dy);
                let db = dy.sum_axis(Axis(0));
                let dx = dy.dot(&l.w.t());
                Ok((
                    Value::Mat(dx),
                    vec![flat("weight", dw.into_dyn()), flat("bias", db.into_dyn())],
                ))
            }
            (Layer::Conv(l), Cache::Conv { cols, in_hw }) => {
                let dy = grad.into_grid()?;
                let (b, out_ch, oh, ow) = dims4(&dy);
                let k = l.w.shape()[2];
                let in_ch = l.w.shape()[1];
                let dy2 = grid_to_rows(&dy); // (B·oh·ow, out_ch)
                let dwm = dy2.t().dot(cols); // (out_ch, in_ch·k·k)
                let dw = dwm
                    .to_shape((out_ch, in_ch, k, k))
                    .expect("conv grad reshape")
                    .to_owned();
                let db = dy2.sum_axis(Axis(0));
                let wm = l
                    .w
                    .to_shape((out_ch, in_ch * k * k))
                    .expect("conv weight reshape")
                    .to_owned();
                let dcols = dy2.dot(&wm); // (B·oh·ow, in_ch·k·k)
                let (h, w) = *in_hw;
                let dx = col2im(&dcols, b, in_ch, h, w, k, l.stride, l.pad, oh, ow);
                Ok((
                    Value::Grid(dx),
                    vec![flat("weight", dw.into_dyn()), flat("bias", db.into_dyn())],
                ))
            }
            (Layer::ConvT(l), Cache::ConvT { x2, in_hw }) => {
                let dy = grad.into_grid()?;
                let (b, out_ch, _oh, _ow) = dims4(&dy);
                let k = l.w.shape()[2];
                let in_ch = l.w.shape()[0];
                let (h, w) = *in_hw;
                // Forward was cols = x2·Wm then col2im; the adjoint of
                // col2im is im2col with the same geometry.
                let dcols = im2col(&dy, k, l.stride, l.pad, h, w); // (B·h·w, out_ch·k·k)
                let wm = l
                    .w
                    .to_shape((in_ch, out_ch * k * k))
                    .expect("conv_t weight reshape")
                    .to_owned();
                let dx2 = dcols.dot(&wm.t()); // (B·h·w, in_ch)
                let dwm = x2.t().dot(&dcols); // (in_ch, out_ch·k·k)
                let dw = dwm
                    .to_shape((in_ch, out_ch, k, k))
                    .expect("conv_t grad reshape")
                    .to_owned();
                let mut db = Array1::<F>::zeros(out_ch);
                for ch in 0..out_ch {
                    db[ch] = dy
                        .index_axis(Axis(1), ch)
                        .iter()
                        .fold(F::zero(), |acc, &v| acc + v);
                }
                let dx = rows_to_grid(dx2, b, h, w, in_ch, None);
                Ok((
                    Value::Grid(dx),
                    vec![flat("weight", dw.into_dyn()), flat("bias", db.into_dyn())],
                ))
            }
            (Layer::InstanceNorm(l), Cache::InstanceNorm { xhat, inv_std }) => {
                let dy = grad.into_grid()?;
                let (b, c, h, w) = dims4(&dy);
                let m = F::from_f64((h * w) as f64);
                let mut dx = Array4::<F>::zeros(dy.raw_dim());
                let mut dgamma = Array1::<F>::zeros(c);
                let mut dbeta = Array1::<F>::zeros(c);
                for bi in 0..b {
                    for ci in 0..c {
                        let dy_p = dy.index_axis(Axis(0), bi);
                        let dy_p = dy_p.index_axis(Axis(0), ci);
                        let xh_p = xhat.index_axis(Axis(0), bi);
                        let xh_p = xh_p.index_axis(Axis(0), ci);
                        let gc = l.gamma.as_ref().map_or(F::one(), |g| g[ci]);
                        // Accumulate the two reductions the backward needs.
                        let mut sum_dxh = F::zero();
                        let mut sum_dxh_xh = F::zero();
                        for (dyv, xhv) in dy_p.iter().zip(xh_p.iter()) {
                            let dxh = *dyv * gc;
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * *xhv;
                            if l.gamma.is_some() {
                                dgamma[ci] += *dyv * *xhv;
                                dbeta[ci] += *dyv;
                            }
                        }
                        let istd = inv_std[(bi, ci)];
                        let mut dx_p = dx.index_axis_mut(Axis(0), bi);
                        let mut dx_p = dx_p.index_axis_mut(Axis(0), ci);
                        for ((dxv, dyv), xhv) in
                            dx_p.iter_mut().zip(dy_p.iter()).zip(xh_p.iter())
                        {
                            let dxh = *dyv * gc;
                            *dxv = istd * (dxh - sum_dxh / m - *xhv * sum_dxh_xh / m);
                        }
                    }
                }
                let grads = if l.gamma.is_some() {
                    vec![
                        flat("gamma", dgamma.into_dyn()),
                        flat("beta", dbeta.into_dyn()),
                    ]
                } else {
                    vec![]
                };
                Ok((Value::Grid(dx), grads))
            }
            (Layer::LeakyRelu { alpha }, Cache::LeakyRelu { x }) => {
                let a = F::from_f64(*alpha);
                let dx = zip_values(&grad, x, |g, xv| if xv > F::zero() { g } else { g * a })?;
                Ok((dx, vec![]))
            }
            (Layer::Relu, Cache::Relu { x }) => {
                let dx = zip_values(&grad, x, |g, xv| if xv > F::zero() { g } else { F::zero() })?;
                Ok((dx, vec![]))
            }
            (Layer::Tanh, Cache::Tanh { y }) => {
                let one = F::one();
                let dx = zip_values(&grad, y, |g, yv| g * (one - yv * yv))?;
                Ok((dx, vec![]))
            }
            (Layer::Sigmoid, Cache::Sigmoid { y }) => {
                let one = F::one();
                let dx = zip_values(&grad, y, |g, yv| g * yv * (one - yv))?;
                Ok((dx, vec![]))
            }
            (Layer::Dropout { .. }, Cache::Dropout { mask }) => {
                let dx = zip_values(&grad, mask, |g, mk| g * mk)?;
                Ok((dx, vec![]))
            }
            (Layer::Dropout { .. }, Cache::None) => Ok((grad, vec![])), // eval mode
            (Layer::Flatten { ch, h, w }, Cache::None) => {
                let g = grad.into_mat()?;
                let b = g.nrows();
                let dx = g
                    .to_shape((b, *ch, *h, *w))
                    .expect("flatten grad reshape")
                    .to_owned();
                Ok((Value::Grid(dx), vec![]))
            }
            (Layer::ToGrid { ch, h, w }, Cache::None) => {
                let g = grad.into_grid()?;
                let b = g.shape()[0];
                let dx = g
                    .to_shape((b, ch * h * w))
                    .expect("to_grid grad reshape")
                    .to_owned();
                Ok((Value::Mat(dx), vec![]))
            }
            (Layer::ConcatCond, Cache::None) => {
                let g = grad.into_mat()?;
                let d = g.ncols() - 1;
                let dx = g.slice(ndarray::s![.., ..d]).to_owned();
                Ok((Value::Mat(dx), vec![]))
            }
            _ => Err(bad_cache()),
        }
    }
}

fn flat<F: Real>(name: &'static str, a: ndarray::ArrayD<F>) -> Array1Flat<F> {
    let shape = a.shape().to_vec();
    let (data, _) = a.into_raw_vec_and_offset();
    Array1Flat { name, data, shape }
}

fn dims4<F>(a: &Array4<F>) -> (usize, usize, usize, usize) {
    let s = a.shape();
    (s[0], s[1], s[2], s[3])
}

fn zip_values<F: Real>(
    grad: &Value<F>,
    other: &Value<F>,
    f: impl Fn(F, F) -> F,
) -> Result<Value<F>, NnError> {
    match (grad, other) {
        (Value::Mat(g), Value::Mat(o)) => {
            let mut out = g.clone();
            out.zip_mut_with(o, |gv, ov| *gv = f(*gv, *ov));
            Ok(Value::Mat(out))
        }
        (Value::Grid(g), Value::Grid(o)) => {
            let mut out = g.clone();
            out.zip_mut_with(o, |gv, ov| *gv = f(*gv, *ov));
            Ok(Value::Grid(out))
        }
        _ => Err(NnError::ShapeMismatch {
            layer: "elementwise".into(),
            expected: "matching value kinds".into(),
            got: "mixed matrix/grid".into(),
        }),
    }
}

/// Gather sliding windows: `(B, C, H, W)` -> `(B·oh·ow, C·k·k)`.
/// Out-of-bounds taps read zero.
pub(crate) fn im2col<F: Real>(
    x: &Array4<F>,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array2<F> {
    let (b, c, h, w) = dims4(x);
    let mut cols = Array2::<F>::zeros((b * oh * ow, c * k * k));
    let xs = x.as_slice().expect("standard layout");
    let cs = cols.as_slice_mut().expect("standard layout");
    let row_len = c * k * k;
    for bi in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((bi * oh) + oy) * ow + ox;
                let base = row * row_len;
                for ci in 0..c {
                    let x_base = ((bi * c) + ci) * h * w;
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let x_row = x_base + iy as usize * w;
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            cs[base + (ci * k + ky) * k + kx] = xs[x_row + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add windows back: exact adjoint of [`im2col`] with the same
/// geometry. `(B·oh·ow, C·k·k)` -> `(B, C, H, W)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn col2im<F: Real>(
    cols: &Array2<F>,
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array4<F> {
    let mut x = Array4::<F>::zeros((b, c, h, w));
    let xs = x.as_slice_mut().expect("standard layout");
    let cs = cols.as_slice().expect("standard layout");
    let row_len = c * k * k;
    for bi in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((bi * oh) + oy) * ow + ox;
                let base = row * row_len;
                for ci in 0..c {
                    let x_base = ((bi * c) + ci) * h * w;
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let x_row = x_base + iy as usize * w;
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            xs[x_row + ix as usize] += cs[base + (ci * k + ky) * k + kx];
                        }
                    }
                }
            }
        }
    }
    x
}

/// `(B, C, H, W)` -> `(B·H·W, C)` rows in (b, y, x) order.
pub(crate) fn grid_to_rows<F: Real>(x: &Array4<F>) -> Array2<F> {
    let (b, c, h, w) = dims4(x);
    let mut out = Array2::<F>::zeros((b * h * w, c));
    let xs = x.as_slice().expect("standard layout");
    let os = out.as_slice_mut().expect("standard layout");
    for bi in 0..b {
        for ci in 0..c {
            let x_base = ((bi * c) + ci) * h * w;
            for p in 0..h * w {
                os[(bi * h * w + p) * c + ci] = xs[x_base + p];
            }
        }
    }
    out
}

/// `(B·H·W, C)` rows in (b, y, x) order -> `(B, C, H, W)`, optionally adding
/// a per-channel bias.
pub(crate) fn rows_to_grid<F: Real>(
    rows: Array2<F>,
    b: usize,
    h: usize,
    w: usize,
    c: usize,
    bias: Option<&Array1<F>>,
) -> Array4<F> {
    let mut out = Array4::<F>::zeros((b, c, h, w));
    let rs = rows.as_slice().expect("standard layout");
    let os = out.as_slice_mut().expect("standard layout");
    for bi in 0..b {
        for ci in 0..c {
            let add = bias.map_or(F::zero(), |bv| bv[ci]);
            let o_base = ((bi * c) + ci) * h * w;
            for p in 0..h * w {
                os[o_base + p] = rs[(bi * h * w + p) * c + ci] + add;
            }
        }
    }
    out
}
