//! Per-instance complexity-gap scores.
//!
//! With `(hᵢ, dᵢ)` read from the full inverse and `t = y₋ᵢᵀhᵢ`,
//!
//! ```text
//! CG(i) = t²/dᵢ + 2yᵢt + yᵢ²dᵢ = (t/√dᵢ + yᵢ√dᵢ)²
//! ```
//!
//! The squared form is what gets evaluated; the three addends are kept as the
//! partial scores. `CG′` uses `H` itself in place of its inverse, and the
//! similarity margin `yᵢ(y₋ᵢᵀgᵢ)` drives the small-kernel approximation
//! `8m² − 8m + 2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::kernel::{self, dot, validate_signs, BinaryView, GramMatrix, KernelError};
use crate::linalg::{invert_spd, InverseGram, InvertOptions, LinalgError};

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("corrupt inverse: diagonal entry {value:e} at index {index} is not positive")]
    NonPositiveDiagonal { index: usize, value: f64 },
    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("label vector has length {0}, matrix has size {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, ScoringError>;

/// Quantities read from the inverse for one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgTerms {
    pub cg: f64,
    /// `dᵢ⁻¹ (y₋ᵢᵀhᵢ)²`
    pub partial_sq: f64,
    /// `2yᵢ (y₋ᵢᵀhᵢ)`; its sign separates mislabeled from clean instances.
    pub partial_cross: f64,
    /// `yᵢ² dᵢ`
    pub partial_diag: f64,
    /// `(H⁻¹y)ᵢ = hᵢᵀy₋ᵢ + yᵢdᵢ`, the accumulated-error proxy.
    pub acc_proxy: f64,
    /// `(2/m) · cg` with `m` the size of the inverted matrix.
    pub v_norm: f64,
}

/// Everything computed for one instance of a binary view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    /// Source row id (position in the view when scoring a bare matrix).
    pub index: usize,
    pub sign: f64,
    pub cg: f64,
    pub partial_sq: f64,
    pub partial_cross: f64,
    pub partial_diag: f64,
    pub cg_prime: f64,
    pub margin: f64,
    pub cg_approx: f64,
    pub acc_proxy: f64,
    pub v_norm: f64,
}

fn check(size: usize, y: &[f64], i: usize) -> Result<()> {
    if y.len() != size {
        return Err(ScoringError::LengthMismatch(y.len(), size));
    }
    if i >= size {
        return Err(ScoringError::IndexOutOfRange { index: i, size });
    }
    Ok(())
}

/// `Σ_{j≠i} row[j]·y[j]`.
fn off_diagonal_dot(row: &[f64], y: &[f64], i: usize) -> f64 {
    dot(&row[..i], &y[..i]) + dot(&row[i + 1..], &y[i + 1..])
}

/// CG score and partials of instance `i`.
pub fn cg_score(inv: &InverseGram, y: &[f64], i: usize) -> Result<CgTerms> {
    check(inv.size(), y, i)?;
    validate_signs(y)?;
    cg_terms_unchecked(inv, y, i)
}

fn cg_terms_unchecked(inv: &InverseGram, y: &[f64], i: usize) -> Result<CgTerms> {
    let row = inv.row(i);
    let d = row[i];
    if !(d > 0.0) {
        return Err(ScoringError::NonPositiveDiagonal { index: i, value: d });
    }
    let yi = y[i];
    let t = off_diagonal_dot(row, y, i);
    let sd = d.sqrt();
    let root = t / sd + yi * sd;
    let cg = root * root;
    Ok(CgTerms {
        cg,
        partial_sq: t * t / d,
        partial_cross: 2.0 * yi * t,
        partial_diag: yi * yi * d,
        acc_proxy: t + yi * d,
        v_norm: 2.0 / inv.size() as f64 * cg,
    })
}

/// `CG′(i) = 2yᵢ(gᵢᵀy₋ᵢ) + yᵢ²cᵢ`, straight from `H`.
pub fn cg_prime(h: &GramMatrix, y: &[f64], i: usize) -> Result<f64> {
    check(h.size(), y, i)?;
    let row = h.row(i);
    Ok(2.0 * y[i] * off_diagonal_dot(row, y, i) + y[i] * y[i] * row[i])
}

/// `yᵢ(y₋ᵢᵀgᵢ)`: same-class kernel mass minus other-class kernel mass.
pub fn similarity_margin(h: &GramMatrix, y: &[f64], i: usize) -> Result<f64> {
    check(h.size(), y, i)?;
    Ok(y[i] * off_diagonal_dot(h.row(i), y, i))
}

/// `8m² − 8m + 2`, the CG score under `H⁻¹ ≈ 2I`.
pub fn cg_approx(margin: f64) -> f64 {
    8.0 * margin * margin - 8.0 * margin + 2.0
}

/// Scores every instance from one shared inverse. Records are indexed by
/// position in `H`.
pub fn cg_all(h: &GramMatrix, y: &[f64]) -> Result<Vec<ScoreRecord>> {
    cg_all_with(h, y, InvertOptions::default())
}

pub fn cg_all_with(h: &GramMatrix, y: &[f64], opts: InvertOptions) -> Result<Vec<ScoreRecord>> {
    if y.len() != h.size() {
        return Err(ScoringError::LengthMismatch(y.len(), h.size()));
    }
    validate_signs(y)?;
    let inv = invert_spd(h, opts)?;
    records_from_inverse(h, &inv, y)
}

/// One record per index, extracted in parallel; order is by index.
pub fn records_from_inverse(h: &GramMatrix, inv: &InverseGram, y: &[f64]) -> Result<Vec<ScoreRecord>> {
    (0..h.size())
        .into_par_iter()
        .map(|i| {
            let terms = cg_terms_unchecked(inv, y, i)?;
            let margin = y[i] * off_diagonal_dot(h.row(i), y, i);
            Ok(ScoreRecord {
                index: i,
                sign: y[i],
                cg: terms.cg,
                partial_sq: terms.partial_sq,
                partial_cross: terms.partial_cross,
                partial_diag: terms.partial_diag,
                cg_prime: 2.0 * margin + y[i] * y[i] * h.get(i, i),
                margin,
                cg_approx: cg_approx(margin),
                acc_proxy: terms.acc_proxy,
                v_norm: terms.v_norm,
            })
        })
        .collect()
}

/// Gram → inverse → records for a view; `index` is the source row id.
pub fn score_view(dataset: &Dataset, view: &BinaryView, opts: InvertOptions) -> Result<Vec<ScoreRecord>> {
    let h = kernel::gram(dataset, view)?;
    let mut records = cg_all_with(&h, view.signs(), opts)?;
    for r in &mut records {
        r.index = view.indices()[r.index];
    }
    Ok(records)
}
