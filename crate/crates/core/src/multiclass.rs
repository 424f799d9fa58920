//! One-vs-rest conversion and stochastic subsampled scoring.
//!
//! For class `c` with `p` members, a run keeps every member (sign `+1`) and
//! samples `min(r·p, pool)` negatives uniformly without replacement from all
//! other classes pooled (sign `−1`). Scores of the positives are averaged over
//! runs. Runs draw independently, so a negative may appear in several runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cgm1;
use crate::dataset::{Dataset, DatasetError};
use crate::kernel::{BinaryView, KernelError};
use crate::linalg::{InvertOptions, DEFAULT_PIVOT_TOL};
use crate::rng::{derive_run_seed, rng_from_seed};
use crate::scoring::{self, ScoreRecord, ScoringError};

#[derive(Debug, Error)]
pub enum MulticlassError {
    #[error("class {0} not present in dataset")]
    UnknownClass(u32),
    #[error("class {0} has no negatives available")]
    NoNegatives(u32),
    #[error("scoring needs at least 2 classes, found {0}")]
    TooFewClasses(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("class {class}, run {run}: {source}")]
    Run {
        class: u32,
        run: u32,
        #[source]
        source: ScoringError,
    },
    #[error(transparent)]
    View(#[from] KernelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T> = std::result::Result<T, MulticlassError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticConfig {
    /// Negatives per positive.
    pub neg_ratio: usize,
    pub runs: usize,
    pub seed: u64,
    pub ridge: Option<f64>,
    #[serde(default = "default_pivot_tol")]
    pub pivot_tol: f64,
}

fn default_pivot_tol() -> f64 {
    DEFAULT_PIVOT_TOL
}

impl StochasticConfig {
    pub fn new(neg_ratio: usize, runs: usize, seed: u64) -> Self {
        Self { neg_ratio, runs, seed, ridge: None, pivot_tol: DEFAULT_PIVOT_TOL }
    }

    pub fn validate(&self) -> Result<()> {
        if self.neg_ratio < 1 {
            return Err(MulticlassError::InvalidConfig("neg_ratio must be >= 1".into()));
        }
        if self.runs < 1 {
            return Err(MulticlassError::InvalidConfig("runs must be >= 1".into()));
        }
        if u32::try_from(self.runs).is_err() {
            return Err(MulticlassError::InvalidConfig("runs must fit in u32".into()));
        }
        if let Some(r) = self.ridge {
            if !(r.is_finite() && r >= 0.0) {
                return Err(MulticlassError::InvalidConfig(format!("ridge {r} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    fn invert_options(&self) -> InvertOptions {
        InvertOptions { ridge: self.ridge, pivot_tol: self.pivot_tol }
    }
}

/// Runs needed so that, ignoring overlap, the sampled negatives cover at least
/// half of the pool: `max(1, ⌈pool / (2·r·p)⌉)`.
pub fn recommended_runs(positives: usize, pool: usize, neg_ratio: usize) -> usize {
    let per_run = (neg_ratio * positives).max(1);
    pool.div_ceil(2 * per_run).max(1)
}

/// Mean scores of one instance over the runs that included it as a positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub index: usize,
    pub label: u32,
    pub cg: f64,
    pub cg_prime: f64,
    pub partial_sq: f64,
    pub partial_cross: f64,
    pub partial_diag: f64,
    pub cg_approx: f64,
    pub v_norm: f64,
    pub margin: f64,
    pub acc_proxy: f64,
    pub runs_used: usize,
}

/// Per-instance averaged scores covering the whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    /// Sorted by `index`; exactly one entry per dataset row.
    pub entries: Vec<InstanceScore>,
    pub config: StochasticConfig,
    /// SHA-256 (hex) of the dataset's CGM1 bytes.
    pub fingerprint: String,
}

impl ScoreTable {
    pub fn cg(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.cg).collect()
    }

    pub fn column(&self, f: impl Fn(&InstanceScore) -> f64) -> Vec<f64> {
        self.entries.iter().map(f).collect()
    }

    pub fn labels(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.label).collect()
    }
}

pub fn dataset_fingerprint(dataset: &Dataset) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = cgm1::dataset_to_bytes(dataset)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Positives of `class_c` plus sampled negatives, in ascending row order.
pub fn binary_view_for_class(
    dataset: &Dataset,
    class_c: u32,
    neg_ratio: usize,
    seed: u64,
    run_index: u32,
) -> Result<BinaryView> {
    let (positives, pool): (Vec<usize>, Vec<usize>) =
        (0..dataset.n()).partition(|&i| dataset.labels()[i] == class_c);
    if positives.is_empty() {
        return Err(MulticlassError::UnknownClass(class_c));
    }
    if pool.is_empty() {
        return Err(MulticlassError::NoNegatives(class_c));
    }
    let want = neg_ratio.saturating_mul(positives.len());
    let negatives: Vec<usize> = if want >= pool.len() {
        pool
    } else {
        let mut rng = rng_from_seed(derive_run_seed(seed, class_c, run_index));
        let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), want)
            .into_iter()
            .map(|k| pool[k])
            .collect();
        picked.sort_unstable();
        picked
    };

    let mut members: Vec<(usize, f64)> = positives
        .into_iter()
        .map(|i| (i, 1.0))
        .chain(negatives.into_iter().map(|i| (i, -1.0)))
        .collect();
    members.sort_unstable_by_key(|&(i, _)| i);
    let (indices, signs) = members.into_iter().unzip();
    Ok(BinaryView::new(indices, signs)?)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    cg: Compensated,
    cg_prime: Compensated,
    partial_sq: Compensated,
    partial_cross: Compensated,
    partial_diag: Compensated,
    cg_approx: Compensated,
    v_norm: Compensated,
    margin: Compensated,
    acc_proxy: Compensated,
    runs: usize,
}

impl Accumulator {
    fn add(&mut self, r: &ScoreRecord) {
        self.cg.add(r.cg);
        self.cg_prime.add(r.cg_prime);
        self.partial_sq.add(r.partial_sq);
        self.partial_cross.add(r.partial_cross);
        self.partial_diag.add(r.partial_diag);
        self.cg_approx.add(r.cg_approx);
        self.v_norm.add(r.v_norm);
        self.margin.add(r.margin);
        self.acc_proxy.add(r.acc_proxy);
        self.runs += 1;
    }

    fn mean(&self, index: usize, label: u32) -> InstanceScore {
        let k = self.runs as f64;
        InstanceScore {
            index,
            label,
            cg: self.cg.total() / k,
            cg_prime: self.cg_prime.total() / k,
            partial_sq: self.partial_sq.total() / k,
            partial_cross: self.partial_cross.total() / k,
            partial_diag: self.partial_diag.total() / k,
            cg_approx: self.cg_approx.total() / k,
            v_norm: self.v_norm.total() / k,
            margin: self.margin.total() / k,
            acc_proxy: self.acc_proxy.total() / k,
            runs_used: self.runs,
        }
    }
}

/// Mean scores of every member of `class_c`, sorted by row index.
///
/// Runs may execute in parallel; averaging walks them in ascending run order.
/// A singular run aborts the class.
pub fn score_class(dataset: &Dataset, class_c: u32, config: &StochasticConfig) -> Result<Vec<InstanceScore>> {
    config.validate()?;
    let opts = config.invert_options();
    let per_run: Vec<Vec<ScoreRecord>> = (0..config.runs as u32)
        .into_par_iter()
        .map(|run| {
            let view = binary_view_for_class(dataset, class_c, config.neg_ratio, config.seed, run)?;
            let records = scoring::score_view(dataset, &view, opts)
                .map_err(|source| MulticlassError::Run { class: class_c, run, source })?;
            Ok(records.into_iter().filter(|r| r.sign > 0.0).collect())
        })
        .collect::<Result<_>>()?;

    let positives: Vec<usize> = (0..dataset.n()).filter(|&i| dataset.labels()[i] == class_c).collect();
    let mut acc = vec![Accumulator::default(); positives.len()];
    for records in &per_run {
        // both lists are sorted by row index and hold the same rows
        for (slot, r) in acc.iter_mut().zip(records) {
            slot.add(r);
        }
    }
    Ok(positives
        .iter()
        .zip(&acc)
        .map(|(&i, a)| a.mean(i, class_c))
        .collect())
}

/// Scores every class and assembles the full table.
pub fn score_all(dataset: &Dataset, config: &StochasticConfig) -> Result<ScoreTable> {
    config.validate()?;
    let classes = dataset.classes();
    if classes.len() < 2 {
        return Err(MulticlassError::TooFewClasses(classes.len()));
    }
    let per_class: Vec<Vec<InstanceScore>> = classes
        .par_iter()
        .map(|&c| score_class(dataset, c, config))
        .collect::<Result<_>>()?;
    let mut entries: Vec<InstanceScore> = per_class.into_iter().flatten().collect();
    entries.sort_by_key(|e| e.index);
    Ok(ScoreTable {
        entries,
        config: *config,
        fingerprint: dataset_fingerprint(dataset)?,
    })
}
