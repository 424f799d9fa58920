//! The ReLU arc-cosine kernel and its Gram matrix.
//!
//! For unit-norm inputs with cosine similarity `ρ = ⟨xᵢ, xⱼ⟩`,
//!
//! ```text
//! H∞ᵢⱼ = ρ (π − arccos ρ) / (2π)
//! ```
//!
//! which is the expectation of `ρ · 1{wᵀxᵢ ≥ 0, wᵀxⱼ ≥ 0}` over a standard
//! Gaussian `w`. The diagonal is exactly 1/2 and all entries lie in `[−1/2, 1/2]`.

use std::collections::HashSet;
use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::Dataset;

/// Cosines within this distance outside `[−1, 1]` are treated as round-off and
/// clamped; anything further out is an error.
pub const COSINE_CLAMP_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("cosine similarity {0} outside [-1, 1] beyond tolerance (non-normalized input?)")]
    CosineOutOfRange(f64),
    #[error("index {index} out of range for dataset of {n} rows")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("view needs at least 2 instances, found {0}")]
    TooSmall(usize),
    #[error("duplicate index {0} in view")]
    DuplicateIndex(usize),
    #[error("signs must be exactly +1 or -1 (found {0})")]
    BadSign(f64),
    #[error("view needs both signs present")]
    OneSided,
    #[error("length mismatch: {0} indices vs {1} signs")]
    LengthMismatch(usize, usize),
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),
    #[error("matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
}

pub type Result<T> = std::result::Result<T, KernelError>;

/// `ρ(π − arccos ρ)/(2π)`.
pub fn relu_kernel(rho: f64) -> Result<f64> {
    if !rho.is_finite() || rho.abs() > 1.0 + COSINE_CLAMP_TOL {
        return Err(KernelError::CosineOutOfRange(rho));
    }
    let rho = rho.clamp(-1.0, 1.0);
    Ok(rho * (PI - rho.acos()) / (2.0 * PI))
}

/// A signed (±1) relabelling of a subset of dataset rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryView {
    indices: Vec<usize>,
    signs: Vec<f64>,
}

impl BinaryView {
    pub fn new(indices: Vec<usize>, signs: Vec<f64>) -> Result<Self> {
        if indices.len() != signs.len() {
            return Err(KernelError::LengthMismatch(indices.len(), signs.len()));
        }
        if indices.len() < 2 {
            return Err(KernelError::TooSmall(indices.len()));
        }
        let mut seen = HashSet::with_capacity(indices.len());
        for &i in &indices {
            if !seen.insert(i) {
                return Err(KernelError::DuplicateIndex(i));
            }
        }
        validate_signs(&signs)?;
        if !(signs.contains(&1.0) && signs.contains(&-1.0)) {
            return Err(KernelError::OneSided);
        }
        Ok(Self { indices, signs })
    }

    /// All rows of `dataset`: `+1` for `positive`, `−1` for every other class.
    pub fn one_vs_rest(dataset: &Dataset, positive: u32) -> Result<Self> {
        let signs = dataset
            .labels()
            .iter()
            .map(|&l| if l == positive { 1.0 } else { -1.0 })
            .collect();
        Self::new((0..dataset.n()).collect(), signs)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }
}

pub(crate) fn validate_signs(signs: &[f64]) -> Result<()> {
    match signs.iter().find(|&&s| s != 1.0 && s != -1.0) {
        Some(&s) => Err(KernelError::BadSign(s)),
        None => Ok(()),
    }
}

/// Dense symmetric `m × m` matrix of kernel values.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: Array2<f64>,
}

impl GramMatrix {
    /// Wraps an arbitrary square, exactly symmetric matrix.
    pub fn from_matrix(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(KernelError::NotSquare(r, c));
        }
        for i in 0..r {
            for j in (i + 1)..r {
                if entries[[i, j]] != entries[[j, i]] {
                    return Err(KernelError::NotSymmetric(i, j));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[[i, j]]
    }

    /// Row `i` as a contiguous slice.
    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.size();
        &self.entries.as_slice().expect("standard layout")[i * m..(i + 1) * m]
    }

    /// Gram matrix of the same data with row/column `i` deleted.
    pub fn minor(&self, i: usize) -> Array2<f64> {
        let m = self.size();
        let keep: Vec<usize> = (0..m).filter(|&k| k != i).collect();
        Array2::from_shape_fn((m - 1, m - 1), |(a, b)| self.entries[[keep[a], keep[b]]])
    }
}

/// `H∞` over the rows selected by `view`, in view order.
pub fn gram(dataset: &Dataset, view: &BinaryView) -> Result<GramMatrix> {
    gram_of_rows(dataset.features(), view.indices())
}

/// `H∞` over the given unit-norm rows of `features`.
///
/// Each unordered pair is evaluated once (`i ≤ j`) and mirrored. Rows are
/// processed in parallel; every entry depends only on its own pair, so the
/// result does not depend on the schedule.
pub fn gram_of_rows(features: ArrayView2<'_, f64>, indices: &[usize]) -> Result<GramMatrix> {
    let n = features.nrows();
    let m = indices.len();
    if m < 2 {
        return Err(KernelError::TooSmall(m));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
        return Err(KernelError::IndexOutOfRange { index: bad, n });
    }
    let feats = features.as_standard_layout();
    let rows: Vec<&[f64]> = indices
        .iter()
        .map(|&i| {
            let d = feats.ncols();
            &feats.as_slice().expect("standard layout")[i * d..(i + 1) * d]
        })
        .collect();

    let upper: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (i..m)
                .map(|j| {
                    if i == j {
                        relu_kernel(1.0)
                    } else {
                        relu_kernel(dot(rows[i], rows[j]))
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mut entries = Array2::<f64>::zeros((m, m));
    for (i, tail) in upper.iter().enumerate() {
        for (off, &v) in tail.iter().enumerate() {
            let j = i + off;
            entries[[i, j]] = v;
            entries[[j, i]] = v;
        }
    }
    Ok(GramMatrix { entries })
}

/// Dot product with a fixed 4-lane accumulation order.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn closed_form_values() {
        assert_eq!(relu_kernel(1.0).unwrap(), 0.5);
        assert_eq!(relu_kernel(0.0).unwrap(), 0.0);
        assert_eq!(relu_kernel(-1.0).unwrap(), 0.0);
        assert!((relu_kernel(0.5).unwrap() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn clamps_round_off_rejects_excursions() {
        assert_eq!(relu_kernel(1.0 + 5e-10).unwrap(), 0.5);
        assert_eq!(relu_kernel(-1.0 - 5e-10).unwrap(), 0.0);
        assert!(relu_kernel(1.0 + 1e-6).is_err());
        assert!(relu_kernel(f64::NAN).is_err());
    }

    #[test]
    fn orthogonal_and_identical_pairs() {
        let ds = Dataset::new(array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]], vec![0, 1, 1]).unwrap();
        let h = gram_of_rows(ds.features(), &[0, 1]).unwrap();
        assert_eq!(h.entries(), &array![[0.5, 0.0], [0.0, 0.5]]);
        let h = gram_of_rows(ds.features(), &[0, 2]).unwrap();
        assert_eq!(h.entries(), &array![[0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn equiangular_triple() {
        // Three unit vectors with pairwise inner product 1/2.
        let s = 0.5f64.sqrt();
        let ds = Dataset::new(array![[s, s, 0.0], [s, 0.0, s], [0.0, s, s]], vec![0, 1, 0]).unwrap();
        let view = BinaryView::new(vec![0, 1, 2], vec![1.0, -1.0, 1.0]).unwrap();
        let h = gram(&ds, &view).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.5 } else { 1.0 / 6.0 };
                assert!((h.get(i, j) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gram_errors() {
        let ds = Dataset::new(array![[1.0, 0.0], [0.0, 1.0]], vec![0, 1]).unwrap();
        assert_eq!(
            gram_of_rows(ds.features(), &[0, 2]).unwrap_err(),
            KernelError::IndexOutOfRange { index: 2, n: 2 }
        );
        assert_eq!(gram_of_rows(ds.features(), &[0]).unwrap_err(), KernelError::TooSmall(1));
    }

    #[test]
    fn view_validation() {
        assert!(BinaryView::new(vec![0, 1], vec![1.0, -1.0]).is_ok());
        assert_eq!(BinaryView::new(vec![0, 0], vec![1.0, -1.0]).unwrap_err(), KernelError::DuplicateIndex(0));
        assert_eq!(BinaryView::new(vec![0, 1], vec![1.0, 1.0]).unwrap_err(), KernelError::OneSided);
        assert_eq!(BinaryView::new(vec![0, 1], vec![1.0, 0.5]).unwrap_err(), KernelError::BadSign(0.5));
    }

    #[test]
    fn from_matrix_checks_shape() {
        assert!(GramMatrix::from_matrix(array![[1.0, 2.0], [2.0, 1.0]]).is_ok());
        assert!(matches!(GramMatrix::from_matrix(array![[1.0, 2.0], [2.1, 1.0]]), Err(KernelError::NotSymmetric(0, 1))));
        assert!(matches!(GramMatrix::from_matrix(Array2::zeros((2, 3))), Err(KernelError::NotSquare(2, 3))));
    }

    #[test]
    fn minor_drops_row_and_column() {
        let h = GramMatrix::from_matrix(array![[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, 6.0]]).unwrap();
        assert_eq!(h.minor(1), array![[1.0, 3.0], [3.0, 6.0]]);
    }
}
