//! Gaussian benchmarks.
//!
//! The two-class benchmark draws class 0 from `N(+μ·e₁, σ²I)` and class 1 from
//! `N(−μ·e₁, σ²I)`, then unit-normalizes every row. Defaults are 1000 points
//! per class in 3000 dimensions with `μ = 1`, `σ² = 0.25`.

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{Dataset, DatasetError, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBenchmark {
    pub n_per_class: usize,
    pub dim: usize,
    pub mean_offset: f64,
    pub variance: f64,
}

impl Default for GaussianBenchmark {
    fn default() -> Self {
        Self {
            n_per_class: 1000,
            dim: 3000,
            mean_offset: 1.0,
            variance: 0.25,
        }
    }
}

/// A generated dataset together with the first coordinate of every row before
/// normalization (the signed distance-like quantity to the boundary `x₁ = 0`).
#[derive(Debug, Clone)]
pub struct GaussianSample {
    pub dataset: Dataset,
    pub first_coordinate: Vec<f64>,
}

impl GaussianBenchmark {
    /// Reduced-size preset: 200 per class, same geometry.
    pub fn reduced() -> Self {
        Self { n_per_class: 200, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 {
            return Err(DatasetError::InvalidParameter("n_per_class must be >= 1".into()));
        }
        if self.dim == 0 {
            return Err(DatasetError::InvalidParameter("dim must be >= 1".into()));
        }
        if !(self.variance > 0.0) || !self.variance.is_finite() {
            return Err(DatasetError::InvalidParameter(format!(
                "variance must be > 0, got {}",
                self.variance
            )));
        }
        if !self.mean_offset.is_finite() {
            return Err(DatasetError::InvalidParameter("mean_offset must be finite".into()));
        }
        Ok(())
    }

    /// Rows are drawn class 0 first, then class 1, each row coordinate by
    /// coordinate from one ChaCha8 stream seeded with `seed`.
    pub fn sample(&self, seed: u64) -> Result<GaussianSample> {
        self.validate()?;
        let n = 2 * self.n_per_class;
        let sd = self.variance.sqrt();
        let mut rng = rng_from_seed(seed);
        let mut raw = Array2::<f64>::zeros((n, self.dim));
        for (i, mut row) in raw.rows_mut().into_iter().enumerate() {
            for x in row.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = sd * z;
            }
            row[0] += if i < self.n_per_class { self.mean_offset } else { -self.mean_offset };
        }
        let first_coordinate = raw.column(0).to_vec();
        let labels = (0..n).map(|i| u32::from(i >= self.n_per_class)).collect();
        Ok(GaussianSample {
            dataset: Dataset::new(raw, labels)?,
            first_coordinate,
        })
    }
}

pub fn synth_gaussian(n_per_class: usize, d: usize, mean_offset: f64, variance: f64, seed: u64) -> Result<Dataset> {
    GaussianBenchmark { n_per_class, dim: d, mean_offset, variance }
        .sample(seed)
        .map(|s| s.dataset)
}

/// `k`-class variant: class `c` is centred at `mean_offset · e_c`.
/// Requires `k ≤ d`.
pub fn synth_gaussian_multiclass(
    classes: usize,
    n_per_class: usize,
    d: usize,
    mean_offset: f64,
    variance: f64,
    seed: u64,
) -> Result<Dataset> {
    let bench = GaussianBenchmark { n_per_class, dim: d, mean_offset, variance };
    bench.validate()?;
    if classes < 2 || classes > d {
        return Err(DatasetError::InvalidParameter(format!(
            "need 2 <= classes <= dim, got {classes} classes in {d} dims"
        )));
    }
    let sd = variance.sqrt();
    let n = classes * n_per_class;
    let mut rng = rng_from_seed(seed);
    let mut raw = Array2::<f64>::zeros((n, d));
    for (i, mut row) in raw.rows_mut().into_iter().enumerate() {
        for x in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = sd * z;
        }
        row[i / n_per_class] += mean_offset;
    }
    let labels = (0..n).map(|i| (i / n_per_class) as u32).collect();
    Dataset::new(raw, labels)
}
