//! Loss functions: binary cross entropy with soft/flipped targets and the
//! relative extremeness loss.

use ndarray::{Array2, Array4, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::ExtremenessMeasure;
use crate::nn::Real;

use super::{GanError, TrainConfig};

/// Probabilities are clamped away from {0, 1} so the log terms and the
/// through-sigmoid gradient stay finite at saturation.
const P_EPS: f64 = 1e-7;

/// Mean binary cross entropy of probabilities against (possibly soft)
/// targets, with the gradient with respect to the probabilities.
///
/// Loss is accumulated in double precision regardless of `F`.
pub fn bce_loss<F: Real>(probs: &Array2<F>, targets: &[f64]) -> (f64, Array2<F>) {
    assert_eq!(
        probs.nrows(),
        targets.len(),
        "one target per batch element"
    );
    let b = targets.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::<F>::zeros(probs.raw_dim());
    for (i, &t) in targets.iter().enumerate() {
        let y = probs[(i, 0)].as_f64().clamp(P_EPS, 1.0 - P_EPS);
        loss -= t * y.ln() + (1.0 - t) * (1.0 - y).ln();
        grad[(i, 0)] = F::from_f64((-t / y + (1.0 - t) / (1.0 - y)) / b);
    }
    (loss / b, grad)
}

/// The minimax pair: discriminator loss on (real, fake) outputs under the
/// given targets, and the non-saturating generator loss `-log D(G(z))`.
pub fn gan_losses<F: Real>(
    d_real: &Array2<F>,
    d_fake: &Array2<F>,
    t_real: &[f64],
    t_fake: &[f64],
) -> (f64, f64) {
    let (loss_real, _) = bce_loss(d_real, t_real);
    let (loss_fake, _) = bce_loss(d_fake, t_fake);
    let ones = vec![1.0; d_fake.nrows()];
    let (loss_g, _) = bce_loss(d_fake, &ones);
    (loss_real + loss_fake, loss_g)
}

/// Mean relative extremeness error over a generated batch:
/// `mean_b |e_b - E(G_b)| / e_b`, with the per-pixel gradient.
///
/// Every conditioning value must be strictly positive.
pub fn ext_loss<F: Real, M: ExtremenessMeasure<F>>(
    e_batch: &[f64],
    generated: &Array4<F>,
    measure: &M,
) -> Result<(f64, Array4<F>), GanError> {
    let b = generated.shape()[0];
    assert_eq!(b, e_batch.len(), "one conditioning value per sample");
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    let mut grad = Array4::<F>::zeros(generated.raw_dim());
    for (i, &e) in e_batch.iter().enumerate() {
        if !(e.is_finite() && e > 0.0) {
            return Err(GanError::NonPositiveConditioning(e));
        }
        let plane = generated.index_axis(Axis(0), i);
        let plane = plane.index_axis(Axis(0), 0);
        let val = measure.value(&plane);
        loss += (e - val).abs() / e * inv_b;
        let sign = sign_of(val - e);
        if sign != 0.0 {
            let coeff = F::from_f64(sign / (e * b as f64));
            let mgrad = measure.grad(&plane);
            let mut gplane = grad.index_axis_mut(Axis(0), i);
            let mut gplane = gplane.index_axis_mut(Axis(0), 0);
            gplane.zip_mut_with(&mgrad, |g, m| *g = coeff * *m);
        }
    }
    Ok((loss, grad))
}

fn sign_of(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Per-sample training targets under label smoothing and flipping.
///
/// Each batch slot draws a real-range value, a fake-range value and two flip
/// coins (fixed RNG consumption order). A flipped slot takes its value from
/// the opposite range. With `flip_prob = 0` and degenerate ranges
/// `(1, 1)`/`(0, 0)` this reduces exactly to the plain minimax targets.
pub fn draw_targets(
    cfg: &TrainConfig,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>) {
    let mut t_real = Vec::with_capacity(n);
    let mut t_fake = Vec::with_capacity(n);
    for _ in 0..n {
        let u_real: f64 = rng.random();
        let u_fake: f64 = rng.random();
        let flip_real = rng.random::<f64>() < cfg.flip_prob;
        let flip_fake = rng.random::<f64>() < cfg.flip_prob;
        let real_range = if flip_real {
            cfg.label_fake
        } else {
            cfg.label_real
        };
        let fake_range = if flip_fake {
            cfg.label_real
        } else {
            cfg.label_fake
        };
        t_real.push(real_range.0 + u_real * (real_range.1 - real_range.0));
        t_fake.push(fake_range.0 + u_fake * (fake_range.1 - fake_range.0));
    }
    (t_real, t_fake)
}
