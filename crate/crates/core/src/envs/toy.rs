//! A one-dimensional branching regression task.
//!
//! Conditions `x` are uniform on `[-1, 1]`. For `x <= 0` the target is a
//! single flat branch `y = 0`; for `x > 0` the distribution splits into an
//! upper branch `y = x` and a lower branch `y = -x`, mixed by a per-region
//! weight. Observations stack `x` over the observation horizon and the scalar
//! target is tiled over the prediction horizon, so the task plugs into the
//! same sequence interfaces as the pushing environment.

use crate::error::{Error, Result};
use crate::imle::Horizons;
use crate::rng::{StreamKind, StreamRng};
use crate::tensor::DenseArray;

/// Upper-branch mode index.
pub const MODE_UPPER: usize = 0;
/// Lower-branch mode index.
pub const MODE_LOWER: usize = 1;

/// Specification for a generated branching dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyBranchSpec {
    pub n_demos: usize,
    /// Gaussian noise added to the branch value.
    pub noise_std: f64,
    /// Probability of the upper branch for `x > 0`; the lower branch gets the
    /// complement.
    pub upper_weight: f64,
    pub seed: u64,
}

impl Default for ToyBranchSpec {
    fn default() -> Self {
        Self { n_demos: 20, noise_std: 0.01, upper_weight: 0.5, seed: 0 }
    }
}

impl ToyBranchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_demos < 2 {
            return Err(Error::InvalidConfig("toy dataset needs at least 2 demos".into()));
        }
        if !(0.0..=1.0).contains(&self.upper_weight) {
            return Err(Error::InvalidConfig("upper_weight must lie in [0, 1]".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::InvalidConfig("noise_std must be >= 0".into()));
        }
        Ok(())
    }
}

/// The two branch values at condition `x`. They coincide for `x <= 0`.
pub fn branch_values(x: f64) -> (f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0)
    } else {
        (x, -x)
    }
}

/// One raw toy demo: the condition, the noisy target, and the branch it was
/// drawn from.
#[derive(Debug, Clone)]
pub struct ToyDemo {
    pub x: f64,
    pub y: f64,
    pub mode: usize,
}

impl ToyDemo {
    /// Stacked observation window: `x` repeated `obs` times.
    pub fn observation(&self, horizons: &Horizons) -> Vec<f64> {
        vec![self.x; horizons.obs]
    }

    /// Target sequence: `y` tiled to `[pred, 1]`.
    pub fn actions(&self, horizons: &Horizons) -> DenseArray {
        DenseArray::from_parts_unchecked(vec![horizons.pred, 1], vec![self.y; horizons.pred])
    }
}

/// Draws a dataset from the spec. Pure in the spec: the same spec always
/// produces the same demos.
pub fn gen_toy_branch_dataset(spec: &ToyBranchSpec) -> Result<Vec<ToyDemo>> {
    spec.validate()?;
    let mut rng = StreamRng::new(spec.seed, StreamKind::Dataset, 0);
    let mut demos = Vec::with_capacity(spec.n_demos);
    for _ in 0..spec.n_demos {
        let x = rng.uniform(-1.0, 1.0);
        let (upper, lower) = branch_values(x);
        let (mode, base) = if x <= 0.0 {
            (MODE_UPPER, upper)
        } else if rng.uniform(0.0, 1.0) < spec.upper_weight {
            (MODE_UPPER, upper)
        } else {
            (MODE_LOWER, lower)
        };
        let y = base + rng.normal() * spec.noise_std;
        demos.push(ToyDemo { x, y, mode });
    }
    Ok(demos)
}

/// The task's success notion for a prediction at condition `x`: within
/// `3 * noise_std` of the nearest branch.
pub fn on_branch(x: f64, y: f64, noise_std: f64) -> bool {
    let (upper, lower) = branch_values(x);
    let d = (y - upper).abs().min((y - lower).abs());
    d < 3.0 * noise_std
}

/// Assigns a generated action sequence at condition `x` to a branch, or to
/// no branch at all.
///
/// The sequence is summarized by its mean value and matched to the nearest
/// branch if it lies within a membership band: `3 * noise_std` widened to a
/// quarter of the branch separation once the branches split. Samples between
/// the branches (mode-averaged outputs) match neither and return `None` —
/// counting them as members of the closest branch would make a collapsed
/// model look like it covers both.
pub fn classify_sample(sample: &DenseArray, x: f64, noise_std: f64) -> Option<usize> {
    let mean: f64 = sample.data().iter().sum::<f64>() / sample.len() as f64;
    let (upper, lower) = branch_values(x);
    let band = (3.0 * noise_std).max(0.25 * (upper - lower).abs());
    let d_up = (mean - upper).abs();
    let d_lo = (mean - lower).abs();
    if d_up.min(d_lo) > band {
        None
    } else if d_up <= d_lo {
        Some(MODE_UPPER)
    } else {
        Some(MODE_LOWER)
    }
}

/// The exact branch values at `x`, tiled to `[pred, 1]` sequences, as the
/// reference set for distribution-distance checks.
pub fn branch_tiles(x: f64, pred: usize) -> Vec<DenseArray> {
    let (upper, lower) = branch_values(x);
    vec![
        DenseArray::from_parts_unchecked(vec![pred, 1], vec![upper; pred]),
        DenseArray::from_parts_unchecked(vec![pred, 1], vec![lower; pred]),
    ]
}
