//! Adam with bias correction and per-component gradient clipping.

use serde::{Deserialize, Serialize};

use super::net::{Gradients, Network};
use super::{NnError, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Each gradient component is clamped into `[-clip, clip]` before the
    /// moment updates.
    pub clip: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            clip: 20.0,
        }
    }
}

/// First/second moments aligned with a network's parameter layout, plus the
/// step counter.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    m: Vec<Vec<Vec<F>>>,
    v: Vec<Vec<Vec<F>>>,
    pub step: u64,
}

impl<F: Real> AdamState<F> {
    pub fn zeros_like(net: &Network<F>) -> Self {
        let shape: Vec<Vec<Vec<F>>> = net
            .layers
            .iter()
            .map(|l| {
                l.param_slices()
                    .into_iter()
                    .map(|(_, s, _)| vec![F::zero(); s.len()])
                    .collect()
            })
            .collect();
        Self {
            m: shape.clone(),
            v: shape,
            step: 0,
        }
    }
}

/// One Adam update over every parameter tensor. Gradient keys must match the
/// network's parameter layout exactly.
pub fn adam_step<F: Real>(
    net: &mut Network<F>,
    state: &mut AdamState<F>,
    grads: &Gradients<F>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<(), NnError> {
    if grads.per_layer.len() != net.layers.len() {
        return Err(NnError::KeyMismatch {
            layer: 0,
            reason: format!(
                "gradient has {} layers, network has {}",
                grads.per_layer.len(),
                net.layers.len()
            ),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let b1 = F::from_f64(cfg.beta1);
    let b2 = F::from_f64(cfg.beta2);
    let one_m_b1 = F::from_f64(1.0 - cfg.beta1);
    let one_m_b2 = F::from_f64(1.0 - cfg.beta2);
    let clip = F::from_f64(cfg.clip);
    let eps = F::from_f64(cfg.eps);
    let inv_bc1 = F::from_f64(1.0 / bc1);
    let inv_bc2 = F::from_f64(1.0 / bc2);
    let lr_f = F::from_f64(lr);

    for (li, layer) in net.layers.iter_mut().enumerate() {
        let lgrads = &grads.per_layer[li];
        let mut slices = layer.param_slices_mut();
        if slices.len() != lgrads.len() {
            return Err(NnError::KeyMismatch {
                layer: li,
                reason: format!(
                    "gradient has {} tensors, layer has {}",
                    lgrads.len(),
                    slices.len()
                ),
            });
        }
        for (ti, (name, slice)) in slices.iter_mut().enumerate() {
            let g = &lgrads[ti];
            if g.name != *name || g.data.len() != slice.len() {
                return Err(NnError::KeyMismatch {
                    layer: li,
                    reason: format!("tensor {} does not match gradient {}", name, g.name),
                });
            }
            let m = &mut state.m[li][ti];
            let v = &mut state.v[li][ti];
            for i in 0..slice.len() {
                let gi = g.data[i].max(-clip).min(clip);
                m[i] = b1 * m[i] + one_m_b1 * gi;
                v[i] = b2 * v[i] + one_m_b2 * gi * gi;
                let m_hat = m[i] * inv_bc1;
                let v_hat = v[i] * inv_bc2;
                slice[i] = slice[i] - lr_f * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
    Ok(())
}

/// A network bundled with its optimizer state.
#[derive(Debug, Clone)]
pub struct Model<F: Real = f32> {
    pub net: Network<F>,
    pub opt: AdamState<F>,
}

impl<F: Real> Model<F> {
    pub fn new(net: Network<F>) -> Self {
        let opt = AdamState::zeros_like(&net);
        Self { net, opt }
    }

    /// Fresh optimizer state, same weights (used when warm-starting).
    pub fn reset_optimizer(&mut self) {
        self.opt = AdamState::zeros_like(&self.net);
    }

    pub fn step(
        &mut self,
        grads: &Gradients<F>,
        lr: f64,
        cfg: &AdamConfig,
    ) -> Result<(), NnError> {
        adam_step(&mut self.net, &mut self.opt, grads, lr, cfg)
    }
}
