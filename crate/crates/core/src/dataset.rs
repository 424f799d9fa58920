//! Labelled datasets with unit-norm rows.
//!
//! The ReLU Gram kernel assumes `‖x‖₂ = 1`, so rows are normalized when a
//! [`Dataset`] is built and it never holds anything else.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::rng::{derive_stream_seed, rng_from_seed};

/// Rows whose L2 norm is at or below this are rejected by [`normalize_rows`].
pub const MIN_ROW_NORM: f64 = 1e-12;

/// Maximum tolerated `| ‖x‖₂ − 1 |` for a stored row.
pub const UNIT_NORM_TOL: f64 = 1e-9;

const NOISE_STREAM: u64 = 0x004e_4f49_5345; // "NOISE"

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing `label` column")]
    MissingLabel,
    #[error("duplicate `label` column")]
    DuplicateLabel,
    #[error("no feature columns")]
    NoFeatures,
    #[error("row {row}: expected {expected} fields, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {column}: cannot parse {value:?} as a finite real")]
    BadFeature { row: usize, column: String, value: String },
    #[error("row {row}: cannot parse label {value:?} as a non-negative integer")]
    BadLabel { row: usize, value: String },
    #[error("row {row} has zero (or near-zero) norm {norm:e}")]
    ZeroNorm { row: usize, norm: f64 },
    #[error("row {row} contains a non-finite value")]
    NonFinite { row: usize },
    #[error("dataset needs at least 2 rows, found {0}")]
    TooFewRows(usize),
    #[error("label count {labels} does not match row count {rows}")]
    LabelCount { rows: usize, labels: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("label noise needs at least 2 classes")]
    SingleClass,
    #[error("format error: {0}")]
    Format(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("dimension overflow: n={n}, d={d}")]
    DimensionOverflow { n: u64, d: u64 },
}

pub type Result<T> = std::result::Result<T, DatasetError>;

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// `n × d` unit-norm features plus one class id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<u32>,
}

impl Dataset {
    /// Builds a dataset, L2-normalizing every row.
    pub fn new(features: Array2<f64>, labels: Vec<u32>) -> Result<Self> {
        let (n, d) = features.dim();
        if labels.len() != n {
            return Err(DatasetError::LabelCount { rows: n, labels: labels.len() });
        }
        if n < 2 {
            return Err(DatasetError::TooFewRows(n));
        }
        if d == 0 {
            return Err(DatasetError::NoFeatures);
        }
        let features = normalize_rows(features.view())?;
        Ok(Self { features, labels })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Distinct class ids in ascending order.
    pub fn classes(&self) -> Vec<u32> {
        self.labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Same features with a new label vector.
    pub fn with_labels(&self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(DatasetError::LabelCount { rows: self.n(), labels: labels.len() });
        }
        Ok(Self { features: self.features.clone(), labels })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        self.write_csv(BufWriter::new(file)).map_err(|e| io_err(path, e))
    }

    /// Writes `f0,…,f{d−1},label`, floats with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.d()).map(|j| format!("f{j}")).collect();
        writeln!(w, "{},label", header.join(","))?;
        for (row, label) in self.features.rows().into_iter().zip(&self.labels) {
            for x in row {
                write!(w, "{},", fmt_f64(*x))?;
            }
            writeln!(w, "{label}")?;
        }
        w.flush()
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| io_err(path, e))?;
        Self::read_csv(file)
    }

    /// Parses a header row naming feature columns and exactly one `label`
    /// column (at any position); feature column order is preserved.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        let label_cols: Vec<usize> = header
            .iter()
            .enumerate()
            .filter(|(_, h)| *h == "label")
            .map(|(i, _)| i)
            .collect();
        let label_col = match label_cols.as_slice() {
            [] => return Err(DatasetError::MissingLabel),
            [c] => *c,
            _ => return Err(DatasetError::DuplicateLabel),
        };
        let width = header.len();
        let d = width - 1;
        if d == 0 {
            return Err(DatasetError::NoFeatures);
        }

        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != width {
                return Err(DatasetError::Ragged { row, expected: width, found: record.len() });
            }
            for (col, cell) in record.iter().enumerate() {
                if col == label_col {
                    let label = cell.parse::<u32>().map_err(|_| DatasetError::BadLabel {
                        row,
                        value: cell.to_string(),
                    })?;
                    labels.push(label);
                } else {
                    let x = cell.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
                        DatasetError::BadFeature {
                            row,
                            column: header[col].to_string(),
                            value: cell.to_string(),
                        }
                    })?;
                    values.push(x);
                }
            }
        }
        let n = labels.len();
        if n < 2 {
            return Err(DatasetError::TooFewRows(n));
        }
        let features = Array2::from_shape_vec((n, d), values)
            .map_err(|e| DatasetError::Format(e.to_string()))?;
        Self::new(features, labels)
    }
}

/// Formats a float with 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Divides each row by its L2 norm.
pub fn normalize_rows(matrix: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut out = matrix.to_owned();
    for (row, mut r) in out.rows_mut().into_iter().enumerate() {
        if r.iter().any(|x| !x.is_finite()) {
            return Err(DatasetError::NonFinite { row });
        }
        let norm = r.dot(&r).sqrt();
        if !(norm > MIN_ROW_NORM) {
            return Err(DatasetError::ZeroNorm { row, norm });
        }
        r.mapv_inplace(|x| x / norm);
    }
    Ok(out)
}

/// Ground truth of an artificial label corruption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseMask {
    pub flipped: Vec<bool>,
    pub original_labels: Vec<u32>,
}

impl NoiseMask {
    pub fn clean(labels: &[u32]) -> Self {
        Self {
            flipped: vec![false; labels.len()],
            original_labels: labels.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.flipped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flipped.is_empty()
    }

    pub fn flip_count(&self) -> usize {
        self.flipped.iter().filter(|&&f| f).count()
    }

    pub fn flipped_indices(&self) -> Vec<usize> {
        self.flipped
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Number of instances corrupted for a given fraction: `round(fraction · n)`.
pub fn noise_count(fraction: f64, n: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(DatasetError::InvalidParameter(format!(
            "noise fraction {fraction} outside [0, 1]"
        )));
    }
    Ok(((fraction * n as f64).round() as usize).min(n))
}

/// Flips exactly `round(fraction · n)` labels, chosen uniformly without
/// replacement, each to a uniformly drawn *different* class.
///
/// Chosen rows are processed in ascending index order so the replacement draws
/// are reproducible for a given seed.
pub fn inject_label_noise(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, NoiseMask)> {
    let n = dataset.n();
    let count = noise_count(fraction, n)?;
    let mut mask = NoiseMask::clean(dataset.labels());
    if count == 0 {
        return Ok((dataset.clone(), mask));
    }
    let classes = dataset.classes();
    if classes.len() < 2 {
        return Err(DatasetError::SingleClass);
    }

    let mut rng = rng_from_seed(derive_stream_seed(seed, NOISE_STREAM));
    let mut chosen = index::sample(&mut rng, n, count).into_vec();
    chosen.sort_unstable();

    let mut labels = dataset.labels().to_vec();
    for i in chosen {
        let current = labels[i];
        let others: Vec<u32> = classes.iter().copied().filter(|&c| c != current).collect();
        labels[i] = others[rng.random_range(0..others.len())];
        mask.flipped[i] = true;
    }
    Ok((dataset.with_labels(labels)?, mask))
}
