//! Generalized Pareto distribution math and peaks-over-threshold helpers.
//!
//! The GPD models excesses `x ≥ 0` over a high threshold `u`:
//!
//! ```text
//! G(x) = 1 - (1 + ξ·x/σ)^(-1/ξ)   for ξ ≠ 0
//! G(x) = 1 - exp(-x/σ)            for ξ = 0
//! ```
//!
//! `ξ = 0` is represented exactly (the exponential branch runs only when
//! `xi == 0.0`), and the `ξ ≠ 0` branch is evaluated through `ln_1p`/`exp_m1`
//! so it stays continuous as ξ → 0. All math here is `f64` regardless of the
//! model precision elsewhere: quantile inversion at small tail probabilities
//! is ill-conditioned in single precision.
//!
//! Everything in this module is a pure function of its inputs; values are
//! immutable after construction.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default minimum number of excesses required by [`fit_gpd`].
pub const MIN_FIT_SAMPLES: usize = 30;

/// Shape-parameter box searched by the fitter. Fits outside fall back to a
/// constrained boundary search.
pub const XI_FIT_RANGE: (f64, f64) = (-0.5, 2.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvtError {
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("shape must be finite, got {0}")]
    InvalidShape(f64),
    #[error("probability {value} outside {expected}")]
    InvalidProbability { value: f64, expected: &'static str },
    #[error("x = {x} outside GPD support [0, {end})")]
    OutsideSupport { x: f64, end: f64 },
    #[error("empty input")]
    EmptyInput,
    #[error("excess #{index} = {value} outside the support of the parameters")]
    SupportViolation { index: usize, value: f64 },
    #[error("need at least {min} excesses to fit a GPD, got {got}")]
    TooFewSamples { got: usize, min: usize },
    #[error("degenerate input: all {n} excesses equal {value}; no spread to fit")]
    DegenerateInput { n: usize, value: f64 },
    #[error("shift parameter c = {0} must lie in (0, 1)")]
    InvalidShift(f64),
    #[error(
        "requested tau = {tau} is not inside the shifted tail: tau / c^k = {tau_prime} > 1 \
         (c = {c}, k = {k})"
    )]
    InvalidRequest {
        tau: f64,
        c: f64,
        k: u32,
        tau_prime: f64,
    },
}

/// A GPD without a threshold anchor: scale σ > 0 and shape ξ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gpd {
    sigma: f64,
    xi: f64,
}

impl Gpd {
    pub fn new(sigma: f64, xi: f64) -> Result<Self, EvtError> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(EvtError::InvalidScale(sigma));
        }
        if !xi.is_finite() {
            return Err(EvtError::InvalidShape(xi));
        }
        Ok(Self { sigma, xi })
    }

    /// The exponential special case (ξ = 0, exactly).
    pub fn exponential(sigma: f64) -> Result<Self, EvtError> {
        Self::new(sigma, 0.0)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// Right endpoint of the support: `-σ/ξ` for ξ < 0, `+∞` otherwise.
    pub fn support_end(&self) -> f64 {
        if self.xi < 0.0 {
            -self.sigma / self.xi
        } else {
            f64::INFINITY
        }
    }

    fn check_support(&self, x: f64) -> Result<(), EvtError> {
        if !x.is_finite() || x < 0.0 || x >= self.support_end() {
            return Err(EvtError::OutsideSupport {
                x,
                end: self.support_end(),
            });
        }
        Ok(())
    }

    /// CDF, monotone nondecreasing in `x`, with values in `[0, 1)`.
    pub fn cdf(&self, x: f64) -> Result<f64, EvtError> {
        self.check_support(x)?;
        let z = x / self.sigma;
        if self.xi == 0.0 {
            Ok(1.0 - (-z).exp())
        } else {
            // (1 + ξ z)^(-1/ξ) = exp(-ln_1p(ξ z)/ξ), stable for small ξ.
            Ok(1.0 - (-(self.xi * z).ln_1p() / self.xi).exp())
        }
    }

    /// Inverse CDF for `p ∈ [0, 1)`; strictly increasing in `p`.
    pub fn quantile(&self, p: f64) -> Result<f64, EvtError> {
        if !(p.is_finite() && (0.0..1.0).contains(&p)) {
            return Err(EvtError::InvalidProbability {
                value: p,
                expected: "[0, 1)",
            });
        }
        let ln_sf = (-p).ln_1p(); // ln(1 - p) ≤ 0
        if self.xi == 0.0 {
            Ok(-self.sigma * ln_sf)
        } else {
            // σ/ξ · ((1-p)^(-ξ) - 1) = σ/ξ · exp_m1(-ξ ln(1-p))
            Ok(self.sigma / self.xi * (-self.xi * ln_sf).exp_m1())
        }
    }

    /// Log density at one point inside the support.
    fn log_pdf(&self, x: f64) -> f64 {
        let z = x / self.sigma;
        if self.xi == 0.0 {
            -self.sigma.ln() - z
        } else {
            -self.sigma.ln() - (1.0 + 1.0 / self.xi) * (self.xi * z).ln_1p()
        }
    }

    /// Sum of log-density terms over the excesses.
    ///
    /// Empty input and support violations are reported as distinct errors.
    pub fn log_likelihood(&self, excesses: &[f64]) -> Result<f64, EvtError> {
        if excesses.is_empty() {
            return Err(EvtError::EmptyInput);
        }
        let end = self.support_end();
        let mut ll = 0.0;
        for (index, &x) in excesses.iter().enumerate() {
            if !x.is_finite() || x < 0.0 || x >= end {
                return Err(EvtError::SupportViolation { index, value: x });
            }
            ll += self.log_pdf(x);
        }
        Ok(ll)
    }

    /// Draw `n` values via inverse-CDF sampling; deterministic given the RNG
    /// state, one uniform consumed per draw.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                self.quantile(u).expect("u in [0,1)")
            })
            .collect()
    }
}

/// A fitted GPD anchored at the threshold `u` the excesses were measured
/// above. Serializes flat as `{"sigma":…, "xi":…, "offset_u":…}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub sigma: f64,
    pub xi: f64,
    pub offset_u: f64,
}

impl GpdParams {
    pub fn new(tail: Gpd, offset_u: f64) -> Self {
        Self {
            sigma: tail.sigma(),
            xi: tail.xi(),
            offset_u,
        }
    }

    pub fn tail(&self) -> Gpd {
        Gpd {
            sigma: self.sigma,
            xi: self.xi,
        }
    }

    /// Draw `n` values in original units (offset added back).
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        self.tail()
            .sample(n, rng)
            .into_iter()
            .map(|x| self.offset_u + x)
            .collect()
    }
}

/// A validated sampling request after `k` shifts by factor `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRequest {
    pub tau: f64,
    pub tau_prime: f64,
    pub c: f64,
    pub k: u32,
}

impl TailRequest {
    pub fn new(tau: f64, c: f64, k: u32) -> Result<Self, EvtError> {
        let tau_prime = adjust_probability(tau, c, k)?;
        Ok(Self {
            tau,
            tau_prime,
            c,
            k,
        })
    }
}

/// τ′ = τ / cᵏ, the extremeness probability re-expressed inside the
/// k-times-shifted distribution. Errors when the result exceeds 1, i.e. the
/// requested level is not inside the shifted tail.
pub fn adjust_probability(tau: f64, c: f64, k: u32) -> Result<f64, EvtError> {
    if !(tau.is_finite() && tau > 0.0 && tau < 1.0) {
        return Err(EvtError::InvalidProbability {
            value: tau,
            expected: "(0, 1)",
        });
    }
    if !(c.is_finite() && c > 0.0 && c < 1.0) {
        return Err(EvtError::InvalidShift(c));
    }
    let tau_prime = tau / c.powi(k as i32);
    if tau_prime > 1.0 {
        return Err(EvtError::InvalidRequest {
            tau,
            c,
            k,
            tau_prime,
        });
    }
    Ok(tau_prime)
}

/// Extremeness level e′ = u + G⁻¹(1 − τ′) for τ′ ∈ (0, 1]; strictly
/// decreasing in τ′.
pub fn extremeness_level(params: &GpdParams, tau_prime: f64) -> Result<f64, EvtError> {
    if !(tau_prime.is_finite() && tau_prime > 0.0 && tau_prime <= 1.0) {
        return Err(EvtError::InvalidProbability {
            value: tau_prime,
            expected: "(0, 1]",
        });
    }
    Ok(params.offset_u + params.tail().quantile(1.0 - tau_prime)?)
}

/// Empirical quantile with linear interpolation between order statistics
/// (the type-7 convention): position `(n-1)·q` in the sorted sample.
pub fn quantile_type7(values: &[f64], q: f64) -> Result<f64, EvtError> {
    if values.is_empty() {
        return Err(EvtError::EmptyInput);
    }
    if !(q.is_finite() && (0.0..=1.0).contains(&q)) {
        return Err(EvtError::InvalidProbability {
            value: q,
            expected: "[0, 1]",
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Pick the threshold `u` as the empirical `q`-quantile (type-7) and return
/// it with the excesses `{v - u : v > u}` in their original order.
pub fn select_threshold(values: &[f64], q: f64) -> Result<(f64, Vec<f64>), EvtError> {
    let u = quantile_type7(values, q)?;
    let excesses = values
        .iter()
        .filter(|&&v| v > u)
        .map(|&v| v - u)
        .collect();
    Ok((u, excesses))
}

/// Maximum-likelihood GPD fit with the default sample floor.
pub fn fit_gpd(excesses: &[f64]) -> Result<Gpd, EvtError> {
    fit_gpd_with_floor(excesses, MIN_FIT_SAMPLES)
}

/// Maximum-likelihood GPD fit.
///
/// Profile likelihood over the 1-D reparameterization η = ξ/σ: given η, the
/// likelihood is maximized in closed form by ξ(η) = mean(ln(1 + η·xᵢ)) and
/// σ(η) = ξ(η)/η, so a deterministic coarse grid plus golden-section
/// refinement over η finds the MLE without derivatives. When the optimum
/// lands outside ξ ∈ [-0.5, 2] the fit falls back to a boundary search over
/// σ at the clamped ξ.
///
/// The returned parameters dominate, in log-likelihood, every feasible point
/// of the coarse validation grid σ ∈ mean·2^{-2..2}, ξ ∈ {-0.5, -0.45, …, 2}
/// (asserted in the tests), and their support contains every input.
pub fn fit_gpd_with_floor(excesses: &[f64], min_samples: usize) -> Result<Gpd, EvtError> {
    if excesses.len() < min_samples {
        return Err(EvtError::TooFewSamples {
            got: excesses.len(),
            min: min_samples,
        });
    }
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    for (index, &x) in excesses.iter().enumerate() {
        if !x.is_finite() || x < 0.0 {
            return Err(EvtError::SupportViolation { index, value: x });
        }
        x_min = x_min.min(x);
        x_max = x_max.max(x);
    }
    if x_max == x_min {
        return Err(EvtError::DegenerateInput {
            n: excesses.len(),
            value: x_max,
        });
    }
    let n = excesses.len() as f64;
    let mean = excesses.iter().sum::<f64>() / n;

    // Profile log-likelihood along η; -inf outside the feasible range.
    let profile = |eta: f64| -> f64 {
        if eta == 0.0 {
            return -n * (mean.ln() + 1.0);
        }
        if eta <= -1.0 / x_max {
            return f64::NEG_INFINITY;
        }
        let xi = excesses.iter().map(|&x| (eta * x).ln_1p()).sum::<f64>() / n;
        if xi == 0.0 {
            return -n * (mean.ln() + 1.0);
        }
        let sigma = xi / eta;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return f64::NEG_INFINITY;
        }
        -n * (sigma.ln() + xi + 1.0)
    };

    // Coarse deterministic grid: η = 0, a log-spaced positive branch scaled
    // by the sample mean, and a negative branch approaching -1/x_max.
    let mut etas = vec![0.0];
    let pos_points = 140;
    for i in 0..pos_points {
        let t = -6.0 + 10.0 * i as f64 / (pos_points - 1) as f64; // 1e-6 .. 1e4
        etas.push(10f64.powf(t) / mean);
    }
    let neg_points = 140;
    for i in 1..=neg_points {
        let t = i as f64 / (neg_points + 1) as f64; // (0, 1)
        etas.push(-t / x_max);
    }
    etas.sort_by(f64::total_cmp);

    let mut best_idx = 0;
    let mut best_ll = f64::NEG_INFINITY;
    for (i, &eta) in etas.iter().enumerate() {
        let ll = profile(eta);
        if ll > best_ll {
            best_ll = ll;
            best_idx = i;
        }
    }
    let lo = etas[best_idx.saturating_sub(1)];
    let hi = etas[(best_idx + 1).min(etas.len() - 1)];
    let eta_star = golden_max(lo, hi, 120, profile);
    let eta_star = if profile(eta_star) >= best_ll {
        eta_star
    } else {
        etas[best_idx]
    };

    let (sigma, xi) = if eta_star == 0.0 {
        (mean, 0.0)
    } else {
        let xi = excesses.iter().map(|&x| (eta_star * x).ln_1p()).sum::<f64>() / n;
        if xi.abs() < 1e-9 {
            (mean, 0.0)
        } else {
            (xi / eta_star, xi)
        }
    };

    let (xi_lo, xi_hi) = XI_FIT_RANGE;
    if xi < xi_lo || xi > xi_hi {
        return fit_boundary(excesses, xi.clamp(xi_lo, xi_hi), x_max, mean);
    }
    Gpd::new(sigma, xi)
}

/// Fixed-ξ fallback: golden-section over ln σ with the support constraint
/// σ > -ξ·x_max kept strict.
fn fit_boundary(excesses: &[f64], xi: f64, x_max: f64, mean: f64) -> Result<Gpd, EvtError> {
    let n = excesses.len() as f64;
    let sigma_floor = if xi < 0.0 { -xi * x_max } else { 0.0 };
    let lo = (sigma_floor * (1.0 + 1e-9)).max(mean * 1e-6);
    let hi = mean * 1e6;
    let ll = |ln_sigma: f64| -> f64 {
        let sigma = ln_sigma.exp();
        if sigma <= sigma_floor {
            return f64::NEG_INFINITY;
        }
        if xi == 0.0 {
            return -n * sigma.ln() - excesses.iter().sum::<f64>() / sigma;
        }
        let mut acc = -n * sigma.ln();
        for &x in excesses {
            let t = xi * x / sigma;
            if t <= -1.0 {
                return f64::NEG_INFINITY;
            }
            acc -= (1.0 + 1.0 / xi) * t.ln_1p();
        }
        acc
    };
    // Coarse scan first, then refine around the best point.
    let points = 200;
    let (mut best_s, mut best_v) = (lo.ln(), f64::NEG_INFINITY);
    for i in 0..points {
        let s = lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (points - 1) as f64;
        let v = ll(s);
        if v > best_v {
            best_v = v;
            best_s = s;
        }
    }
    let span = (hi.ln() - lo.ln()) / (points - 1) as f64;
    let s_star = golden_max(best_s - span, best_s + span, 100, ll);
    let s_star = if ll(s_star) >= best_v { s_star } else { best_s };
    Gpd::new(s_star.exp(), xi)
}

/// Golden-section maximization of a unimodal-ish function on `[a, b]`.
fn golden_max(a: f64, b: f64, iters: usize, f: impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut c = b - (b - a) * INV_PHI;
    let mut d = a + (b - a) * INV_PHI;
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * INV_PHI;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * INV_PHI;
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gpd(sigma: f64, xi: f64) -> Gpd {
        Gpd::new(sigma, xi).unwrap()
    }

    #[test]
    fn cdf_closed_forms() {
        assert_eq!(gpd(1.0, 0.5).cdf(0.0).unwrap(), 0.0);
        let x = 2.0 * f64::ln(2.0);
        assert!((gpd(2.0, 0.0).cdf(x).unwrap() - 0.5).abs() < 1e-14);
        assert!((gpd(1.0, 1.0).cdf(1.0).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn cdf_domain_errors() {
        assert!(matches!(
            gpd(1.0, 0.5).cdf(-0.1),
            Err(EvtError::OutsideSupport { .. })
        ));
        // Support end for sigma=1, xi=-0.5 is at x = 2.
        let g = gpd(1.0, -0.5);
        assert!(g.cdf(1.999).is_ok());
        assert!(matches!(g.cdf(2.0), Err(EvtError::OutsideSupport { .. })));
        assert!(g.cdf(2.5).is_err());
    }

    #[test]
    fn quantile_closed_forms() {
        for g in [gpd(1.0, 0.3), gpd(2.0, -0.2), gpd(0.5, 0.0)] {
            assert_eq!(g.quantile(0.0).unwrap(), 0.0);
        }
        assert!((gpd(1.0, 0.0).quantile(0.5).unwrap() - f64::ln(2.0)).abs() < 1e-14);
        assert!(gpd(1.0, 0.0).quantile(1.0).is_err());
        assert!(gpd(1.0, 0.0).quantile(-0.1).is_err());
    }

    #[test]
    fn quantile_matches_bisection_oracle() {
        // Independent route: bisect the CDF for p = 0.99, sigma = 2, xi = 0.3.
        let g = gpd(2.0, 0.3);
        let (mut lo, mut hi) = (0.0, 1e9);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g.cdf(mid).unwrap() < 0.99 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        let q = g.quantile(0.99).unwrap();
        assert!(
            ((q - oracle) / oracle).abs() < 1e-10,
            "quantile {q} vs bisection {oracle}"
        );
    }

    #[test]
    fn cdf_quantile_roundtrip() {
        let mut ps: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        ps.push(0.99);
        ps.push(0.999);
        for xi in [-0.4, 0.0, 0.3, 1.0] {
            for sigma in [0.5, 1.0, 2.0] {
                let g = gpd(sigma, xi);
                for &p in &ps {
                    let x = g.quantile(p).unwrap();
                    let back = g.cdf(x).unwrap();
                    assert!(
                        (back - p).abs() < 1e-10,
                        "roundtrip p={p} xi={xi} sigma={sigma}: got {back}"
                    );
                }
            }
        }
    }

    #[test]
    fn xi_to_zero_continuity() {
        let sigma = 1.7;
        let tiny = gpd(sigma, 1e-8);
        let zero = gpd(sigma, 0.0);
        for i in 0..=100 {
            let x = 10.0 * sigma * i as f64 / 100.0;
            let d = (tiny.cdf(x).unwrap() - zero.cdf(x).unwrap()).abs();
            assert!(d < 1e-6, "xi→0 gap {d} at x = {x}");
        }
    }

    #[test]
    fn log_likelihood_closed_forms() {
        let g = gpd(1.0, 0.0);
        assert_eq!(g.log_likelihood(&[0.0]).unwrap(), 0.0);
        assert!((g.log_likelihood(&[1.0, 2.0]).unwrap() + 3.0).abs() < 1e-14);
    }

    #[test]
    fn log_likelihood_error_kinds_are_distinct() {
        let g = gpd(1.0, -0.5); // support [0, 2)
        assert!(matches!(g.log_likelihood(&[]), Err(EvtError::EmptyInput)));
        assert!(matches!(
            g.log_likelihood(&[1.0, 3.0]),
            Err(EvtError::SupportViolation { index: 1, .. })
        ));
        assert!(matches!(
            g.log_likelihood(&[-1.0]),
            Err(EvtError::SupportViolation { index: 0, .. })
        ));
    }

    #[test]
    fn log_likelihood_peaks_near_true_params() {
        // Monte-Carlo oracle: the truth should beat ±20% sigma perturbations
        // in at least 95% of seeded trials.
        let truth = gpd(1.3, 0.2);
        let mut wins = 0;
        let trials = 100;
        for trial in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(5000 + trial);
            let xs = truth.sample(2_000, &mut rng);
            let ll_true = truth.log_likelihood(&xs).unwrap();
            let up = gpd(1.3 * 1.2, 0.2).log_likelihood(&xs).unwrap();
            let down = gpd(1.3 * 0.8, 0.2).log_likelihood(&xs).unwrap();
            if ll_true >= up && ll_true >= down {
                wins += 1;
            }
        }
        assert!(wins >= 95, "true params won only {wins}/{trials} trials");
    }

    #[test]
    fn fit_recovers_self_sampled_parameters() {
        let truth = gpd(1.0, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs = truth.sample(100_000, &mut rng);
        let fit = fit_gpd(&xs).unwrap();
        assert!(
            (fit.sigma() - 1.0).abs() < 0.05,
            "sigma_hat = {}",
            fit.sigma()
        );
        assert!((fit.xi() - 0.25).abs() < 0.05, "xi_hat = {}", fit.xi());
    }

    #[test]
    fn fit_recovers_exponential_as_xi_zero() {
        // Exponential(mean 2) is GPD with sigma = 2, xi = 0.
        let truth = gpd(2.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs = truth.sample(100_000, &mut rng);
        let fit = fit_gpd(&xs).unwrap();
        assert!(
            (fit.sigma() - 2.0).abs() / 2.0 < 0.05,
            "sigma_hat = {}",
            fit.sigma()
        );
        assert!(fit.xi().abs() < 0.05, "xi_hat = {}", fit.xi());
    }

    #[test]
    fn fit_rejects_small_and_degenerate_input() {
        let ten: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(
            fit_gpd(&ten),
            Err(EvtError::TooFewSamples { got: 10, min: 30 })
        ));
        let flat = vec![5.0; 50];
        assert!(matches!(
            fit_gpd(&flat),
            Err(EvtError::DegenerateInput { .. })
        ));
    }

    #[test]
    fn fit_dominates_validation_grid() {
        // The documented coarse validation grid: sigma in mean·2^{-2..2}
        // (quarter-octave steps), xi in -0.5..=2.0 step 0.05.
        let truth = gpd(0.8, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let xs = truth.sample(5_000, &mut rng);
        let fit = fit_gpd(&xs).unwrap();
        let ll_fit = fit.log_likelihood(&xs).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        for i in -8..=8 {
            let sigma = mean * 2f64.powf(i as f64 / 4.0);
            for j in 0..=50 {
                let xi = -0.5 + 0.05 * j as f64;
                let g = gpd(sigma, xi);
                if let Ok(ll) = g.log_likelihood(&xs) {
                    assert!(
                        ll_fit >= ll - 1e-9,
                        "grid point sigma={sigma} xi={xi} beats fit: {ll} > {ll_fit}"
                    );
                }
            }
        }
    }

    #[test]
    fn fit_support_contains_inputs() {
        let truth = gpd(1.0, -0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let xs = truth.sample(2_000, &mut rng);
        let fit = fit_gpd(&xs).unwrap();
        let end = fit.support_end();
        assert!(xs.iter().all(|&x| x < end));
    }

    #[test]
    fn fit_error_shrinks_as_n_grows() {
        // Consistency: the error should roughly halve as n quadruples.
        let truth = gpd(1.0, 0.25);
        let mut err = |n: usize| -> f64 {
            let mut acc = 0.0;
            for seed in 0..5u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
                let xs = truth.sample(n, &mut rng);
                let fit = fit_gpd(&xs).unwrap();
                acc += (fit.xi() - 0.25).abs() + (fit.sigma() - 1.0).abs();
            }
            acc / 5.0
        };
        let e1 = err(4_000);
        let e2 = err(16_000);
        let e3 = err(64_000);
        assert!(e3 < e1 * 0.7, "no convergence: {e1} -> {e2} -> {e3}");
        assert!(e2 < e1, "no convergence: {e1} -> {e2}");
    }

    #[test]
    fn threshold_selection_examples() {
        let values: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let (u, exc) = select_threshold(&values, 0.95).unwrap();
        // Brute-force type-7 position: 99·0.95 = 94.05 between 95 and 96.
        assert!((u - 95.05).abs() < 1e-12);
        assert_eq!(exc.len(), 5);
        assert!((exc[0] - (96.0 - 95.05)).abs() < 1e-12);

        let (u, exc) = select_threshold(&[5.0, 5.0, 5.0], 0.4).unwrap();
        assert_eq!(u, 5.0);
        assert!(exc.is_empty());

        let (u, exc) = select_threshold(&[1.0, 2.0], 0.0).unwrap();
        assert_eq!(u, 1.0);
        assert_eq!(exc, vec![1.0]);

        assert!(matches!(
            select_threshold(&[], 0.95),
            Err(EvtError::EmptyInput)
        ));
    }

    #[test]
    fn threshold_preserves_input_order() {
        let values = [9.0, 1.0, 8.0, 2.0, 7.0];
        let (u, exc) = select_threshold(&values, 0.5).unwrap();
        assert_eq!(u, 7.0);
        assert_eq!(exc, vec![2.0, 1.0]); // 9 then 8, original order
    }

    #[test]
    fn adjust_probability_examples() {
        let tp = adjust_probability(0.01, 0.75, 10).unwrap();
        assert!((tp - 0.01 / 0.75f64.powi(10)).abs() < 1e-15);
        assert_eq!(adjust_probability(0.05, 0.5, 0).unwrap(), 0.05);
        assert!(matches!(
            adjust_probability(0.5, 0.5, 3),
            Err(EvtError::InvalidRequest { .. })
        ));
        assert!(adjust_probability(0.0, 0.5, 1).is_err());
        assert!(adjust_probability(0.1, 1.0, 1).is_err());
    }

    #[test]
    fn extremeness_level_closed_forms() {
        let p = GpdParams::new(gpd(1.0, 0.0), 0.0);
        assert_eq!(extremeness_level(&p, 1.0).unwrap(), 0.0);
        let p = GpdParams::new(gpd(1.0, 0.0), 10.0);
        let e = extremeness_level(&p, 0.01).unwrap();
        assert!((e - (10.0 + f64::ln(100.0))).abs() < 1e-12);
        assert!(extremeness_level(&p, 0.0).is_err());
        assert!(extremeness_level(&p, 1.1).is_err());
    }

    #[test]
    fn extremeness_level_exceedance_frequency() {
        // Fit params from a sample, then check the empirical exceedance
        // frequency of e' at tau' = 0.05 in a fresh 1e6-point sample.
        let truth = gpd(1.0, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs = truth.sample(100_000, &mut rng);
        let fit = GpdParams::new(fit_gpd(&xs).unwrap(), 0.0);
        let e_prime = extremeness_level(&fit, 0.05).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let fresh = truth.sample(1_000_000, &mut rng);
        let freq = fresh.iter().filter(|&&x| x > e_prime).count() as f64 / 1e6;
        assert!((freq - 0.05).abs() < 0.003, "exceedance frequency {freq}");
    }

    #[test]
    fn extremeness_level_monotone_in_tau() {
        let p = GpdParams::new(gpd(2.0, 0.3), 5.0);
        let taus = [0.001, 0.01, 0.05, 0.2, 0.8, 1.0];
        let es: Vec<f64> = taus
            .iter()
            .map(|&t| extremeness_level(&p, t).unwrap())
            .collect();
        for w in es.windows(2) {
            assert!(w[0] > w[1], "e' not decreasing in tau': {es:?}");
        }
    }

    #[test]
    fn quantile_type7_matches_sorted_brute_force() {
        let values = [3.0, 1.0, 4.0, 1.5, 9.0, 2.6];
        // Sorted: 1, 1.5, 2.6, 3, 4, 9. q=0.5 -> pos 2.5 -> 2.8.
        assert!((quantile_type7(&values, 0.5).unwrap() - 2.8).abs() < 1e-12);
        assert_eq!(quantile_type7(&values, 0.0).unwrap(), 1.0);
        assert_eq!(quantile_type7(&values, 1.0).unwrap(), 9.0);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn quantile_strictly_increasing(
                sigma in 0.1f64..5.0,
                xi in -0.45f64..1.5,
                p1 in 0.0f64..0.97,
                dp in 0.001f64..0.02,
            ) {
                let g = Gpd::new(sigma, xi).unwrap();
                let q1 = g.quantile(p1).unwrap();
                let q2 = g.quantile(p1 + dp).unwrap();
                prop_assert!(q2 > q1);
            }

            #[test]
            fn cdf_roundtrip_anywhere(
                sigma in 0.1f64..5.0,
                xi in -0.45f64..1.5,
                p in 0.0f64..0.999,
            ) {
                let g = Gpd::new(sigma, xi).unwrap();
                let x = g.quantile(p).unwrap();
                let back = g.cdf(x).unwrap();
                prop_assert!((back - p).abs() < 1e-10);
            }
        }
    }
}
