//! Grid-sample data model: the extremeness measure, normalization and
//! resizing, train/test splitting, file persistence and a synthetic
//! heavy-tailed rainfall oracle for desk-scale experiments.
//!
//! Datasets are immutable snapshots: every operation returns a new value, so
//! they are safe to read concurrently.

mod io;
mod synth;

pub use io::{load_dataset, save_dataset};
pub use synth::{synth_rainfall, synth_raw_grids};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evt::{quantile_type7, EvtError};
use crate::nn::Real;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("empty input")]
    EmptyInput,
    #[error("bad dimensions: {0}")]
    BadDimensions(String),
    #[error("raw intensities must be finite and nonnegative, found {value} at sample {sample}")]
    InvalidRaw { sample: usize, value: f64 },
    #[error("degenerate intensity scale: min == max == {0}")]
    DegenerateScale(f64),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated file: need {expected} bytes after the header, found {got}")]
    Truncated { expected: usize, got: usize },
    #[error("header shape is inconsistent with the blob: expected {expected} bytes, found {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("cached extremeness for sample id {id} is {cached}, recomputed {recomputed}")]
    CacheMismatch {
        id: u64,
        cached: f64,
        recomputed: f64,
    },
    #[error(transparent)]
    Evt(#[from] EvtError),
}

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Real,
    Generated,
}

/// A user-pluggable extremeness measure: a differentiable scalar summary of
/// a grid, reported with its per-pixel gradient.
pub trait ExtremenessMeasure<F: Real>: Send + Sync {
    /// The scalar E(x), accumulated in double precision.
    fn value(&self, grid: &ArrayView2<F>) -> f64;
    /// dE/dpixel, same shape as the grid.
    fn grad(&self, grid: &ArrayView2<F>) -> Array2<F>;
}

/// The built-in measures. `PixelSum` is the plain total of all grid values;
/// `RainTotal` is the total above the `-1` "dry" level, i.e. `Σ(x + 1)`.
///
/// The two are affine equivalents (same gradient, same orderings, same GPD
/// shape), but `RainTotal` is strictly positive on any grid that is not
/// uniformly dry, which is what the relative extremeness loss and MAPE need
/// on `[-1, 1]`-normalized data. The pipeline defaults to `RainTotal`;
/// `PixelSum` is the bare measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    PixelSum,
    #[default]
    RainTotal,
}

impl<F: Real> ExtremenessMeasure<F> for MeasureKind {
    fn value(&self, grid: &ArrayView2<F>) -> f64 {
        let sum: f64 = grid.iter().map(|v| v.as_f64()).sum();
        match self {
            MeasureKind::PixelSum => sum,
            MeasureKind::RainTotal => sum + grid.len() as f64,
        }
    }

    fn grad(&self, grid: &ArrayView2<F>) -> Array2<F> {
        Array2::from_elem(grid.raw_dim(), F::one())
    }
}

/// One spatial grid with its cached extremeness value.
#[derive(Debug, Clone)]
pub struct GridSample {
    pub pixels: Array2<f32>,
    pub extremeness: f64,
    pub origin: Origin,
    pub id: u64,
}

impl GridSample {
    pub fn new<M: ExtremenessMeasure<f32>>(
        pixels: Array2<f32>,
        origin: Origin,
        id: u64,
        measure: &M,
    ) -> Self {
        let extremeness = measure.value(&pixels.view());
        Self {
            pixels,
            extremeness,
            origin,
            id,
        }
    }
}

/// An ordered collection of samples sharing one grid shape and one
/// pre-normalization intensity scale.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<GridSample>,
    /// Set when `samples` are in nonincreasing extremeness order (ties by
    /// ascending id).
    pub sorted_desc: bool,
    pub height: usize,
    pub width: usize,
    /// (min, max) of the pre-normalization intensities; `[-1, 1]` maps back
    /// through this.
    pub raw_scale: (f64, f64),
}

impl Dataset {
    pub fn from_parts(
        samples: Vec<GridSample>,
        height: usize,
        width: usize,
        raw_scale: (f64, f64),
    ) -> Self {
        Self {
            samples,
            sorted_desc: false,
            height,
            width,
            raw_scale,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn extremeness_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.extremeness).collect()
    }

    pub fn max_extremeness(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.extremeness)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_extremeness(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.extremeness)
            .fold(f64::INFINITY, f64::min)
    }

    /// Nonincreasing extremeness order, ties broken by ascending id so the
    /// "top k" selection is deterministic.
    pub fn sorted_by_extremeness(&self) -> Dataset {
        let mut samples = self.samples.clone();
        samples.sort_by(|a, b| {
            b.extremeness
                .total_cmp(&a.extremeness)
                .then(a.id.cmp(&b.id))
        });
        Dataset {
            samples,
            sorted_desc: true,
            height: self.height,
            width: self.width,
            raw_scale: self.raw_scale,
        }
    }

    /// Check the cache-coherence invariant: recomputing E must reproduce the
    /// cached value exactly.
    pub fn verify_cache<M: ExtremenessMeasure<f32>>(&self, measure: &M) -> Result<(), DataError> {
        for s in &self.samples {
            let recomputed = measure.value(&s.pixels.view());
            if recomputed != s.extremeness {
                return Err(DataError::CacheMismatch {
                    id: s.id,
                    cached: s.extremeness,
                    recomputed,
                });
            }
        }
        Ok(())
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Area-average resampling of a raw intensity grid to `h × w`. Reduces to an
/// exact block mean when the source dimensions are divisible by the target.
pub fn resize_area(raw: &ArrayView2<f64>, h: usize, w: usize) -> Result<Array2<f64>, DataError> {
    let (h0, w0) = raw.dim();
    if h0 == 0 || w0 == 0 || h == 0 || w == 0 {
        return Err(DataError::BadDimensions(format!(
            "resize {h0}x{w0} -> {h}x{w}"
        )));
    }
    let sy = h0 as f64 / h as f64;
    let sx = w0 as f64 / w as f64;
    let mut out = Array2::<f64>::zeros((h, w));
    for i in 0..h {
        let y0 = i as f64 * sy;
        let y1 = (i + 1) as f64 * sy;
        let r0 = y0.floor() as usize;
        let r1 = (y1.ceil() as usize).min(h0);
        for j in 0..w {
            let x0 = j as f64 * sx;
            let x1 = (j + 1) as f64 * sx;
            let c0 = x0.floor() as usize;
            let c1 = (x1.ceil() as usize).min(w0);
            let mut acc = 0.0;
            for r in r0..r1 {
                let wy = (y1.min((r + 1) as f64) - y0.max(r as f64)).max(0.0);
                if wy == 0.0 {
                    continue;
                }
                for c in c0..c1 {
                    let wx = (x1.min((c + 1) as f64) - x0.max(c as f64)).max(0.0);
                    acc += wy * wx * raw[(r, c)];
                }
            }
            out[(i, j)] = acc / (sy * sx);
        }
    }
    Ok(out)
}

/// Resize one raw grid and map the given dataset-global `[raw_min, raw_max]`
/// onto `[-1, 1]`.
pub fn normalize_resize(
    raw: &ArrayView2<f64>,
    target: (usize, usize),
    raw_min: f64,
    raw_max: f64,
) -> Result<Array2<f32>, DataError> {
    if raw_max <= raw_min {
        return Err(DataError::DegenerateScale(raw_min));
    }
    let resized = resize_area(raw, target.0, target.1)?;
    let scale = 2.0 / (raw_max - raw_min);
    Ok(resized.mapv(|v| ((v - raw_min) * scale - 1.0) as f32))
}

/// Resize every raw grid to `target`, then normalize with the dataset-global
/// intensity range (recorded as `raw_scale`).
pub fn build_normalized<M: ExtremenessMeasure<f32>>(
    raws: &[Array2<f64>],
    target: (usize, usize),
    measure: &M,
) -> Result<Dataset, DataError> {
    build_normalized_with_ids(raws, target, measure, 0)
}

fn build_normalized_with_ids<M: ExtremenessMeasure<f32>>(
    raws: &[Array2<f64>],
    target: (usize, usize),
    measure: &M,
    first_id: u64,
) -> Result<Dataset, DataError> {
    if raws.is_empty() {
        return Err(DataError::EmptyInput);
    }
    let mut resized = Vec::with_capacity(raws.len());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (sample, raw) in raws.iter().enumerate() {
        for &v in raw.iter() {
            if !v.is_finite() || v < 0.0 {
                return Err(DataError::InvalidRaw { sample, value: v });
            }
        }
        let r = resize_area(&raw.view(), target.0, target.1)?;
        for &v in r.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        resized.push(r);
    }
    if hi <= lo {
        return Err(DataError::DegenerateScale(lo));
    }
    let scale = 2.0 / (hi - lo);
    let samples = resized
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let pixels = r.mapv(|v| ((v - lo) * scale - 1.0) as f32);
            GridSample::new(pixels, Origin::Real, first_id + i as u64, measure)
        })
        .collect();
    Ok(Dataset {
        samples,
        sorted_desc: false,
        height: target.0,
        width: target.1,
        raw_scale: (lo, hi),
    })
}

/// Outcome flags for [`split_train_test`] and [`filter_extremes`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub threshold: f64,
    pub kept: usize,
    pub dropped: usize,
    /// The filtered test set came out empty — a warning, not an error.
    pub empty_test: bool,
}

/// Build train/test datasets from raw grids sharing one global intensity
/// scale, then keep only test samples whose extremeness strictly exceeds the
/// train `q`-quantile (type-7, the same convention as the EVT threshold).
pub fn split_train_test<M: ExtremenessMeasure<f32>>(
    train_raws: &[Array2<f64>],
    test_raws: &[Array2<f64>],
    target: (usize, usize),
    q: f64,
    measure: &M,
) -> Result<(Dataset, Dataset, SplitOutcome), DataError> {
    if train_raws.is_empty() || test_raws.is_empty() {
        return Err(DataError::EmptyInput);
    }
    // One shared scale keeps the two extremeness axes comparable.
    let mut all: Vec<Array2<f64>> = Vec::with_capacity(train_raws.len() + test_raws.len());
    all.extend_from_slice(train_raws);
    all.extend_from_slice(test_raws);
    let combined = build_normalized(&all, target, measure)?;
    let raw_scale = combined.raw_scale;
    let mut samples = combined.samples;
    let test_samples = samples.split_off(train_raws.len());
    let train = Dataset {
        samples,
        sorted_desc: false,
        height: target.0,
        width: target.1,
        raw_scale,
    };
    let test_all = Dataset {
        samples: test_samples,
        sorted_desc: false,
        height: target.0,
        width: target.1,
        raw_scale,
    };
    let threshold = train_threshold(&train, q)?;
    let (test, outcome) = filter_extremes(&test_all, threshold);
    Ok((train, test, outcome))
}

/// The train-side extremeness quantile used as the test filter threshold.
pub fn train_threshold(train: &Dataset, q: f64) -> Result<f64, DataError> {
    Ok(quantile_type7(&train.extremeness_values(), q)?)
}

/// Keep the test samples strictly above `threshold`. An empty result is
/// reported through the outcome, never silently.
pub fn filter_extremes(test: &Dataset, threshold: f64) -> (Dataset, SplitOutcome) {
    let samples: Vec<GridSample> = test
        .samples
        .iter()
        .filter(|s| s.extremeness > threshold)
        .cloned()
        .collect();
    let outcome = SplitOutcome {
        threshold,
        kept: samples.len(),
        dropped: test.samples.len() - samples.len(),
        empty_test: samples.is_empty(),
    };
    (
        Dataset {
            samples,
            sorted_desc: test.sorted_desc,
            height: test.height,
            width: test.width,
            raw_scale: test.raw_scale,
        },
        outcome,
    )
}
