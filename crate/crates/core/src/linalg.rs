//! SPD inversion and leave-one-out blocks of the inverse.
//!
//! Write the inverse with instance `i` permuted to the last position as
//!
//! ```text
//! H⁻¹ = [ A′  hᵢ ]
//!       [ hᵢᵀ dᵢ ]
//! ```
//!
//! Then the inverse of `H` with row/column `i` deleted is `A′ − hᵢhᵢᵀ/dᵢ`, so
//! one full inverse yields every leave-one-out inverse (and every CG score)
//! without refactorizing.

use ndarray::Array2;
use rayon::prelude::*;
use thiserror::Error;

use crate::kernel::{dot, validate_signs, GramMatrix, KernelError};

/// Default smallest acceptable Cholesky pivot.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite: pivot {pivot:e} at index {index} (tolerance {tol:e})")]
    NotPositiveDefinite { index: usize, pivot: f64, tol: f64 },
    #[error("matrix is singular (elimination pivot {pivot:e} at step {index})")]
    Singular { index: usize, pivot: f64 },
    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("invalid ridge {0}: must be finite and >= 0")]
    InvalidRidge(f64),
    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvertOptions {
    /// Inversion targets `H + ridge·I` when set.
    pub ridge: Option<f64>,
    pub pivot_tol: f64,
}

impl Default for InvertOptions {
    fn default() -> Self {
        Self { ridge: None, pivot_tol: DEFAULT_PIVOT_TOL }
    }
}

impl InvertOptions {
    pub fn with_ridge(ridge: Option<f64>) -> Self {
        Self { ridge, ..Self::default() }
    }
}

/// `(H + ridge·I)⁻¹`, exactly symmetric, with the smallest Cholesky pivot seen.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseGram {
    entries: Array2<f64>,
    min_pivot: f64,
}

impl InverseGram {
    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[[i, j]]
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.entries[[i, i]]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.size();
        &self.entries.as_slice().expect("standard layout")[i * m..(i + 1) * m]
    }

    /// `H⁻¹ y`.
    pub fn mul_vec(&self, y: &[f64]) -> Vec<f64> {
        (0..self.size()).map(|i| dot(self.row(i), y)).collect()
    }
}

/// Inverse through Cholesky: `H = LLᵀ`, `W = L⁻¹`, `H⁻¹ = WᵀW`.
///
/// The pivot of step `j` is the Schur-complement diagonal before the square
/// root; a pivot `≤ pivot_tol` aborts with its index.
pub fn invert_spd(h: &GramMatrix, opts: InvertOptions) -> Result<InverseGram> {
    let ridge = match opts.ridge {
        Some(r) if !(r.is_finite() && r >= 0.0) => return Err(LinalgError::InvalidRidge(r)),
        Some(r) => r,
        None => 0.0,
    };
    let m = h.size();
    let mut a: Vec<f64> = h.entries().iter().copied().collect();
    if ridge > 0.0 {
        for i in 0..m {
            a[i * m + i] += ridge;
        }
    }
    let min_pivot = cholesky_in_place(&mut a, m, opts.pivot_tol)?;
    let w = lower_triangular_inverse(&a, m);
    let entries = gram_of_lower(&w, m);
    Ok(InverseGram { entries, min_pivot })
}

/// Row-major Cholesky–Banachiewicz. On success the lower triangle of `a`
/// holds `L` (the strict upper triangle is zeroed). Returns the minimum pivot.
fn cholesky_in_place(a: &mut [f64], m: usize, pivot_tol: f64) -> Result<f64> {
    let mut min_pivot = f64::INFINITY;
    for i in 0..m {
        for j in 0..=i {
            let (head, tail) = a.split_at_mut(i * m);
            let row_i = &tail[..m];
            let s = if j == i {
                row_i[i] - dot(&row_i[..i], &row_i[..i])
            } else {
                let row_j = &head[j * m..j * m + m];
                row_i[j] - dot(&row_i[..j], &row_j[..j])
            };
            if j == i {
                if !(s > pivot_tol) {
                    return Err(LinalgError::NotPositiveDefinite { index: i, pivot: s, tol: pivot_tol });
                }
                min_pivot = min_pivot.min(s);
                tail[i] = s.sqrt();
            } else {
                tail[j] = s / head[j * m + j];
            }
        }
        for x in &mut a[i * m + i + 1..(i + 1) * m] {
            *x = 0.0;
        }
    }
    Ok(min_pivot)
}

/// `L⁻¹` for lower-triangular row-major `L`, built row by row:
/// `W[i, ..i] = −(Σ_{j<i} L[i,j] W[j, ..]) / L[i,i]`.
fn lower_triangular_inverse(l: &[f64], m: usize) -> Vec<f64> {
    let mut w = vec![0.0; m * m];
    for i in 0..m {
        let (done, rest) = w.split_at_mut(i * m);
        let row = &mut rest[..m];
        for j in 0..i {
            let lij = l[i * m + j];
            if lij != 0.0 {
                let wj = &done[j * m..j * m + j + 1];
                for (r, x) in row[..=j].iter_mut().zip(wj) {
                    *r -= lij * x;
                }
            }
        }
        let inv_diag = 1.0 / l[i * m + i];
        for r in row[..i].iter_mut() {
            *r *= inv_diag;
        }
        row[i] = inv_diag;
    }
    w
}

/// `WᵀW` for lower-triangular `W`; upper triangle computed per row in
/// parallel, then mirrored.
fn gram_of_lower(w: &[f64], m: usize) -> Array2<f64> {
    let mut out = vec![0.0; m * m];
    out.par_chunks_mut(m).enumerate().for_each(|(a, row)| {
        // out[a][b] = Σ_{k ≥ max(a,b)} W[k][a] W[k][b], for b ≥ a
        for k in a..m {
            let wka = w[k * m + a];
            if wka == 0.0 {
                continue;
            }
            let wk = &w[k * m + a..k * m + k + 1];
            for (o, x) in row[a..=k].iter_mut().zip(wk) {
                *o += wka * x;
            }
        }
    });
    for a in 0..m {
        for b in 0..a {
            out[a * m + b] = out[b * m + a];
        }
    }
    Array2::from_shape_vec((m, m), out).expect("square buffer")
}

/// `(hᵢ, dᵢ)`: column `i` of the inverse without its diagonal entry (in
/// ascending order of the remaining indices) and the diagonal entry itself.
pub fn loo_column(inv: &InverseGram, i: usize) -> Result<(Vec<f64>, f64)> {
    let m = inv.size();
    if i >= m {
        return Err(LinalgError::IndexOutOfRange { index: i, size: m });
    }
    let row = inv.row(i);
    let h = row.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &x)| x).collect();
    Ok((h, row[i]))
}

/// Inverse of `H` with row/column `i` removed, via `A′ − hᵢhᵢᵀ/dᵢ`.
pub fn loo_inverse(h: &GramMatrix, inv: &InverseGram, i: usize) -> Result<Array2<f64>> {
    if h.size() != inv.size() {
        return Err(LinalgError::SizeMismatch(h.size(), inv.size()));
    }
    let m = inv.size();
    let (hi, di) = loo_column(inv, i)?;
    let keep: Vec<usize> = (0..m).filter(|&k| k != i).collect();
    Ok(Array2::from_shape_fn((m - 1, m - 1), |(a, b)| {
        inv.get(keep[a], keep[b]) - hi[a] * hi[b] / di
    }))
}

/// Definitional CG score `yᵀH⁻¹y − y₋ᵢᵀ(H₋ᵢ)⁻¹y₋ᵢ` from two independent
/// LU solves (partial pivoting), sharing nothing with the Cholesky path.
pub fn direct_cg_oracle(h: &GramMatrix, y: &[f64], i: usize) -> Result<f64> {
    let m = h.size();
    if y.len() != m {
        return Err(LinalgError::SizeMismatch(m, y.len()));
    }
    if i >= m {
        return Err(LinalgError::IndexOutOfRange { index: i, size: m });
    }
    validate_signs(y)?;
    let full = quadratic_form_inverse(h.entries().clone(), y)?;
    let y_minus: Vec<f64> = y.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &v)| v).collect();
    let reduced = quadratic_form_inverse(h.minor(i), &y_minus)?;
    Ok(full - reduced)
}

/// `yᵀA⁻¹y` via Gaussian elimination with partial pivoting.
pub fn quadratic_form_inverse(a: Array2<f64>, y: &[f64]) -> Result<f64> {
    let z = lu_solve(a, y)?;
    Ok(y.iter().zip(&z).map(|(a, b)| a * b).sum())
}

/// Solves `A z = b` by Gaussian elimination with partial pivoting.
pub fn lu_solve(a: Array2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let m = a.nrows();
    if a.ncols() != m {
        return Err(LinalgError::SizeMismatch(m, a.ncols()));
    }
    if b.len() != m {
        return Err(LinalgError::SizeMismatch(m, b.len()));
    }
    let scale = a.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    let tiny = scale * m as f64 * f64::EPSILON;
    // row-major copy so each row is a contiguous slice
    let mut a: Vec<f64> = a.iter().copied().collect();
    let mut z = b.to_vec();
    for col in 0..m {
        let (piv, pval) = (col..m)
            .map(|r| (r, a[r * m + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pval > tiny) {
            return Err(LinalgError::Singular { index: col, pivot: pval });
        }
        if piv != col {
            let (upper, lower) = a.split_at_mut(piv * m);
            upper[col * m..(col + 1) * m].swap_with_slice(&mut lower[..m]);
            z.swap(piv, col);
        }
        let (head, tail) = a.split_at_mut((col + 1) * m);
        let pivot_row = &head[col * m + col..(col + 1) * m];
        let p = pivot_row[0];
        for (k, row) in tail.chunks_exact_mut(m).enumerate() {
            let f = row[col] / p;
            if f == 0.0 {
                continue;
            }
            for (x, &u) in row[col..].iter_mut().zip(pivot_row) {
                *x -= f * u;
            }
            z[col + 1 + k] -= f * z[col];
        }
    }
    for r in (0..m).rev() {
        let row = &a[r * m..(r + 1) * m];
        let s = z[r] - row[r + 1..].iter().zip(&z[r + 1..]).map(|(u, v)| u * v).sum::<f64>();
        z[r] = s / row[r];
    }
    Ok(z)
}
