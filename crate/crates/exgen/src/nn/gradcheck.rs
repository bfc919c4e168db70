//! Central finite-difference oracles for gradient verification.
//!
//! These touch only the forward pass — deliberately independent of the
//! backward implementation they are used to check. Run them on `f64`
//! networks; the difference quotient at `h = 1e-4` drowns in rounding noise
//! at single precision.

use ndarray::Array2;

use super::net::Network;
use super::{Real, Value};

/// Central differences of `eval` with respect to every parameter of `net`.
///
/// `eval` must be a deterministic function of the network (fix any dropout
/// seed inside it). Returns per-layer, per-tensor flattened gradients in the
/// network's parameter order.
pub fn numeric_param_grads<F: Real>(
    net: &mut Network<F>,
    h: f64,
    mut eval: impl FnMut(&Network<F>) -> f64,
) -> Vec<Vec<Vec<f64>>> {
    let hf = F::from_f64(h);
    let layout: Vec<usize> = net
        .layers
        .iter()
        .map(|l| l.param_slices().len())
        .collect();
    let mut out = Vec::with_capacity(layout.len());
    for (li, n_tensors) in layout.iter().enumerate() {
        let mut layer_grads = Vec::with_capacity(*n_tensors);
        for ti in 0..*n_tensors {
            let len = net.layers[li].param_slices()[ti].1.len();
            let mut g = vec![0.0; len];
            for i in 0..len {
                let orig = {
                    let mut slices = net.layers[li].param_slices_mut();
                    let v = slices[ti].1[i];
                    slices[ti].1[i] = v + hf;
                    v
                };
                let up = eval(net);
                {
                    let mut slices = net.layers[li].param_slices_mut();
                    slices[ti].1[i] = orig - hf;
                }
                let down = eval(net);
                {
                    let mut slices = net.layers[li].param_slices_mut();
                    slices[ti].1[i] = orig;
                }
                g[i] = (up - down) / (2.0 * h);
            }
            layer_grads.push(g);
        }
        out.push(layer_grads);
    }
    out
}

/// Central differences of `eval` with respect to a matrix input.
pub fn numeric_input_grads<F: Real>(
    input: &Array2<F>,
    h: f64,
    mut eval: impl FnMut(&Array2<F>) -> f64,
) -> Array2<f64> {
    let hf = F::from_f64(h);
    let mut grads = Array2::<f64>::zeros(input.raw_dim());
    let mut work = input.clone();
    for idx in 0..input.len() {
        let (r, c) = (idx / input.ncols(), idx % input.ncols());
        let orig = work[(r, c)];
        work[(r, c)] = orig + hf;
        let up = eval(&work);
        work[(r, c)] = orig - hf;
        let down = eval(&work);
        work[(r, c)] = orig;
        grads[(r, c)] = (up - down) / (2.0 * h);
    }
    grads
}

/// Largest relative error between an analytic gradient and its numeric
/// counterpart, with an absolute floor so near-zero entries do not blow up
/// the ratio.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Convenience: a scalar loss on a network output for checks — the double
/// precision sum of `w ∘ y` over all output elements, with fixed pseudo
/// random weights so every output entry participates.
pub fn weighted_sum_loss<F: Real>(y: &Value<F>) -> f64 {
    let fold = |acc: f64, (i, v): (usize, &F)| {
        // Deterministic weights in (0.5, 1.5), no RNG involved.
        let w = 1.0 + 0.5 * ((i as f64 * 0.7368).sin());
        acc + w * v.as_f64()
    };
    match y {
        Value::Mat(a) => a.iter().enumerate().fold(0.0, |acc, p| fold(acc, p)),
        Value::Grid(a) => a.iter().enumerate().fold(0.0, |acc, p| fold(acc, p)),
    }
}

/// The matching analytic upstream gradient for [`weighted_sum_loss`].
pub fn weighted_sum_grad<F: Real>(y: &Value<F>) -> Value<F> {
    let w_at = |i: usize| F::from_f64(1.0 + 0.5 * ((i as f64 * 0.7368).sin()));
    match y {
        Value::Mat(a) => {
            let mut g = a.clone();
            for (i, v) in g.iter_mut().enumerate() {
                *v = w_at(i);
            }
            Value::Mat(g)
        }
        Value::Grid(a) => {
            let mut g = a.clone();
            for (i, v) in g.iter_mut().enumerate() {
                *v = w_at(i);
            }
            Value::Grid(g)
        }
    }
}
