//! Statistics over score tables: rank correlation, noise detection curves,
//! stratified pruning orders, per-class summaries and two diagnostics of the
//! inverse Gram matrix.

use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::ArrayView2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::NoiseMask;
use crate::kernel::GramMatrix;
use crate::linalg::InverseGram;
use crate::rng::{derive_stream_seed, rng_from_seed};

const SPECTRUM_STREAM: u64 = 0x5350_4543;
const SPECTRUM_RETRIES: usize = 10;
/// Smallest `|u_kk| / max |u_kk|` accepted from the LU factor of a sampled X.
const SINGULAR_RCOND: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("zero variance")]
    ZeroVariance,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("noise mask has no flipped instances")]
    EmptyMask,
    #[error("invalid fraction grid: {0}")]
    BadGrid(String),
    #[error("trials must be >= 1")]
    NoTrials,
    #[error("matrix must be square with size >= 2, got {rows}x{cols}")]
    BadMatrix { rows: usize, cols: usize },
    #[error("sampled X singular after {0} attempts")]
    SingularSample(usize),
    #[error("bins must be >= 1")]
    NoBins,
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(AnalysisError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.len() < 2 {
        return Err(AnalysisError::TooShort { needed: 2, got: a.len() });
    }
    check_finite(a)?;
    check_finite(b)
}

fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(AnalysisError::NonFinite(i)),
        None => Ok(()),
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let r = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = r;
        }
        start = end;
    }
    ranks
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    pearson(&average_ranks(a), &average_ranks(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub spearman: f64,
    pub pearson: f64,
    pub n: usize,
}

pub fn correlate(a: &[f64], b: &[f64]) -> Result<CorrelationResult> {
    Ok(CorrelationResult {
        spearman: spearman(a, b)?,
        pearson: pearson(a, b)?,
        n: a.len(),
    })
}

/// Indices sorted by score, highest first, ties by ascending index.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionCurve {
    pub fractions: Vec<f64>,
    pub recall: Vec<f64>,
    /// Area under recall-vs-fraction (trapezoids from the origin), divided by
    /// the area of the best achievable curve on the same grid.
    pub auc: f64,
}

impl DetectionCurve {
    pub fn recall_at(&self, fraction: f64) -> Option<f64> {
        self.fractions
            .iter()
            .position(|&f| (f - fraction).abs() < 1e-12)
            .map(|k| self.recall[k])
    }
}

/// `i/100` for `i = 1..=100`.
pub fn default_grid() -> Vec<f64> {
    (1..=100).map(|i| i as f64 / 100.0).collect()
}

/// Number of instances examined at fraction `f`: `⌈f·n⌉`, guarded against
/// round-off pushing an exact product up by one.
pub fn examined_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(AnalysisError::BadGrid("empty".into()));
    }
    for (k, &f) in grid.iter().enumerate() {
        if !(f > 0.0 && f <= 1.0) {
            return Err(AnalysisError::BadGrid(format!("fraction {f} outside (0, 1]")));
        }
        if k > 0 && f <= grid[k - 1] {
            return Err(AnalysisError::BadGrid("fractions must be strictly increasing".into()));
        }
    }
    Ok(())
}

fn trapezoid_from_origin(fractions: &[f64], values: &[f64]) -> f64 {
    let (mut area, mut px, mut py) = (0.0, 0.0, 0.0);
    for (&x, &y) in fractions.iter().zip(values) {
        area += (x - px) * (y + py) / 2.0;
        (px, py) = (x, y);
    }
    area
}

fn recall_curve(order: &[usize], flipped: &[bool], grid: &[f64]) -> Vec<f64> {
    let n = order.len();
    let total = flipped.iter().filter(|&&b| b).count() as f64;
    let mut hits_prefix = Vec::with_capacity(n + 1);
    hits_prefix.push(0usize);
    for &i in order {
        let last = *hits_prefix.last().unwrap();
        hits_prefix.push(last + usize::from(flipped[i]));
    }
    grid.iter()
        .map(|&f| hits_prefix[examined_count(f, n)] as f64 / total)
        .collect()
}

/// Recall of flipped labels when examining the top `⌈f·n⌉` instances by score.
pub fn detection_curve(scores: &[f64], mask: &NoiseMask, grid: &[f64]) -> Result<DetectionCurve> {
    if scores.len() != mask.len() {
        return Err(AnalysisError::LengthMismatch { left: scores.len(), right: mask.len() });
    }
    check_finite(scores)?;
    validate_grid(grid)?;
    let flips = mask.flip_count();
    if flips == 0 {
        return Err(AnalysisError::EmptyMask);
    }
    let recall = recall_curve(&rank_descending(scores), &mask.flipped, grid);
    let best: Vec<f64> = grid
        .iter()
        .map(|&f| (examined_count(f, scores.len()) as f64 / flips as f64).min(1.0))
        .collect();
    let best_area = trapezoid_from_origin(grid, &best);
    let auc = if best_area > 0.0 {
        (trapezoid_from_origin(grid, &recall) / best_area).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(DetectionCurve { fractions: grid.to_vec(), recall, auc })
}

/// Counts by sign of `partial_cross` (strictly positive vs not) and noise status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SignSplit {
    pub pos_noisy: usize,
    pub neg_noisy: usize,
    pub pos_clean: usize,
    pub neg_clean: usize,
}

impl SignSplit {
    pub fn noisy_positive_rate(&self) -> f64 {
        self.pos_noisy as f64 / (self.pos_noisy + self.neg_noisy) as f64
    }

    pub fn clean_negative_rate(&self) -> f64 {
        self.neg_clean as f64 / (self.pos_clean + self.neg_clean) as f64
    }
}

pub fn partial_sign_split(partial_cross: &[f64], mask: &NoiseMask) -> Result<SignSplit> {
    if partial_cross.len() != mask.len() {
        return Err(AnalysisError::LengthMismatch { left: partial_cross.len(), right: mask.len() });
    }
    let mut s = SignSplit::default();
    for (&p, &noisy) in partial_cross.iter().zip(&mask.flipped) {
        match (p > 0.0, noisy) {
            (true, true) => s.pos_noisy += 1,
            (false, true) => s.neg_noisy += 1,
            (true, false) => s.pos_clean += 1,
            (false, false) => s.neg_clean += 1,
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    LowFirst,
    HighFirst,
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "low-first" => Ok(Self::LowFirst),
            "high-first" => Ok(Self::HighFirst),
            other => Err(format!("unknown direction '{other}' (expected low-first or high-first)")),
        }
    }
}

/// Removal order that keeps every prefix stratified by class.
///
/// Each class is sorted by score (ties by ascending index). Classes are then
/// interleaved greedily: step `k` takes from the class whose removed count
/// lags its proportional share `k·s_c/n` the most, ties to the lower class id.
pub fn prune_order(scores: &[f64], labels: &[u32], direction: Direction) -> Result<Vec<usize>> {
    if scores.len() != labels.len() {
        return Err(AnalysisError::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    check_finite(scores)?;
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let queues: Vec<Vec<usize>> = classes
        .iter()
        .map(|&c| {
            let mut q: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            q.sort_by(|&i, &j| {
                let by_score = match direction {
                    Direction::LowFirst => scores[i].total_cmp(&scores[j]),
                    Direction::HighFirst => scores[j].total_cmp(&scores[i]),
                };
                by_score.then(i.cmp(&j))
            });
            q
        })
        .collect();

    let n = labels.len() as i128;
    let sizes: Vec<i128> = queues.iter().map(|q| q.len() as i128).collect();
    let mut taken = vec![0usize; queues.len()];
    let mut order = Vec::with_capacity(labels.len());
    for step in 1..=n {
        // deficit scaled by n: step·s_c − removed_c·n
        let pick = (0..queues.len())
            .filter(|&c| taken[c] < queues[c].len())
            .max_by(|&a, &b| {
                let da = step * sizes[a] - taken[a] as i128 * n;
                let db = step * sizes[b] - taken[b] as i128 * n;
                da.cmp(&db).then(b.cmp(&a))
            })
            .expect("some class has instances left");
        order.push(queues[pick][taken[pick]]);
        taken[pick] += 1;
    }
    Ok(order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: u32,
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    /// Global score range shared by every histogram.
    pub min: f64,
    pub max: f64,
    pub bins: usize,
    pub classes: Vec<ClassSummary>,
}

fn bin_of(x: f64, min: f64, max: f64, bins: usize) -> usize {
    if max <= min {
        return 0;
    }
    (((x - min) / (max - min) * bins as f64) as usize).min(bins - 1)
}

pub fn class_stats(scores: &[f64], labels: &[u32], bins: usize) -> Result<ClassStats> {
    if scores.len() != labels.len() {
        return Err(AnalysisError::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    if scores.is_empty() {
        return Err(AnalysisError::TooShort { needed: 1, got: 0 });
    }
    if bins == 0 {
        return Err(AnalysisError::NoBins);
    }
    check_finite(scores)?;
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let summaries = classes
        .into_iter()
        .map(|c| {
            let xs: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == c).map(|(&x, _)| x).collect();
            let m = mean(&xs);
            let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
            let mut histogram = vec![0usize; bins];
            for &x in &xs {
                histogram[bin_of(x, min, max, bins)] += 1;
            }
            ClassSummary { class: c, count: xs.len(), mean: m, std: var.sqrt(), histogram }
        })
        .collect();
    Ok(ClassStats { min, max, bins, classes: summaries })
}

/// How close a matrix is to a multiple of the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityDiagnostic {
    pub mean_diag: f64,
    pub offdiag_rms: f64,
    pub ratio: f64,
}

pub fn identity_diagnostic(a: ArrayView2<'_, f64>) -> Result<IdentityDiagnostic> {
    let (rows, cols) = a.dim();
    if rows != cols || rows < 2 {
        return Err(AnalysisError::BadMatrix { rows, cols });
    }
    let mut diag = 0.0;
    let mut off_sq = 0.0;
    for ((i, j), &v) in a.indexed_iter() {
        if i == j {
            diag += v;
        } else {
            off_sq += v * v;
        }
    }
    let mean_diag = diag / rows as f64;
    let offdiag_rms = (off_sq / (rows * (rows - 1)) as f64).sqrt();
    Ok(IdentityDiagnostic { mean_diag, offdiag_rms, ratio: offdiag_rms / mean_diag })
}

pub fn inverse_identity_diagnostic(inv: &InverseGram) -> Result<IdentityDiagnostic> {
    identity_diagnostic(inv.entries().view())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCheck {
    /// Ascending eigenvalues of H.
    pub eig_h: Vec<f64>,
    /// Ascending eigenvalues of `Xᵀ Σ̂ X` for a fresh X.
    pub eig_model: Vec<f64>,
    pub rel_gap: f64,
    pub trials: usize,
}

fn to_dmatrix(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn sorted_eigenvalues(a: DMatrix<f64>) -> Vec<f64> {
    let sym = (&a + a.transpose()) * 0.5;
    let mut eig: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Samples `X` with i.i.d. `N(0, 1/N)` entries until its LU factor is well
/// conditioned enough to invert, returning `(X, X⁻¹)`.
fn sample_invertible<R: rand::Rng>(m: usize, rng: &mut R) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let scale = 1.0 / (m as f64).sqrt();
    for _ in 0..SPECTRUM_RETRIES {
        let x = DMatrix::from_fn(m, m, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        });
        let lu = x.clone().lu();
        let u = lu.u();
        let diag = u.diagonal();
        let big = diag.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let small = diag.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
        if big == 0.0 || small / big < SINGULAR_RCOND {
            continue;
        }
        if let Some(inv) = lu.try_inverse() {
            if inv.iter().all(|v| v.is_finite()) {
                return Ok((x, inv));
            }
        }
    }
    Err(AnalysisError::SingularSample(SPECTRUM_RETRIES))
}

/// Estimates `Σ̂ = mean (Xᵀ)⁻¹ H X⁻¹` over `trials` draws, then compares the
/// spectrum of `Xᵀ Σ̂ X` (fresh X) against that of H. Diagnostic only.
pub fn sigma_spectrum_check(h: &GramMatrix, trials: usize, seed: u64) -> Result<SpectrumCheck> {
    if trials == 0 {
        return Err(AnalysisError::NoTrials);
    }
    let m = h.size();
    if m < 2 {
        return Err(AnalysisError::BadMatrix { rows: m, cols: m });
    }
    let hm = to_dmatrix(h.view());
    let mut rng = rng_from_seed(derive_stream_seed(seed, SPECTRUM_STREAM));
    let mut sigma = DMatrix::<f64>::zeros(m, m);
    for _ in 0..trials {
        let (_, xinv) = sample_invertible(m, &mut rng)?;
        sigma += xinv.transpose() * &hm * &xinv;
    }
    sigma /= trials as f64;
    let (x, _) = sample_invertible(m, &mut rng)?;
    let model = x.transpose() * sigma * x;

    let eig_h = sorted_eigenvalues(hm);
    let eig_model = sorted_eigenvalues(model);
    let num: f64 = eig_h.iter().zip(&eig_model).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let den: f64 = eig_h.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok(SpectrumCheck { rel_gap: num / den, eig_h, eig_model, trials })
}
