//! On-disk artifacts: the score CSV, its JSON sidecar, run manifests, noise
//! mask CSVs and the analysis report.
//!
//! Floats are printed with `{:.16e}` (17 significant digits), which round-trips
//! every `f64` exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{ClassStats, CorrelationResult, DetectionCurve, IdentityDiagnostic, SignSplit, SpectrumCheck};
use crate::dataset::{fmt_f64, NoiseMask};
use crate::multiclass::ScoreTable;

pub const SCORE_HEADER: [&str; 9] = [
    "index",
    "label",
    "cg",
    "cg_prime",
    "partial_sq",
    "partial_cross",
    "partial_diag",
    "cg_approx",
    "v_norm",
];

pub const MASK_HEADER: [&str; 4] = ["index", "flipped", "original_label", "label"];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, ReportError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, message: impl Into<String>) -> ReportError {
    ReportError::Format { path: path.to_path_buf(), message: message.into() }
}

/// `path` with `suffix` appended to its file name (`out.csv` → `out.csv.json`).
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// One line of the score CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub index: usize,
    pub label: u32,
    pub cg: f64,
    pub cg_prime: f64,
    pub partial_sq: f64,
    pub partial_cross: f64,
    pub partial_diag: f64,
    pub cg_approx: f64,
    pub v_norm: f64,
}

impl ScoreRow {
    /// Value of a named numeric column.
    pub fn column(&self, name: &str) -> Option<f64> {
        Some(match name {
            "cg" => self.cg,
            "cg_prime" => self.cg_prime,
            "partial_sq" => self.partial_sq,
            "partial_cross" => self.partial_cross,
            "partial_diag" => self.partial_diag,
            "cg_approx" => self.cg_approx,
            "v_norm" => self.v_norm,
            _ => return None,
        })
    }
}

pub fn score_rows(table: &ScoreTable) -> Vec<ScoreRow> {
    table
        .entries
        .iter()
        .map(|e| ScoreRow {
            index: e.index,
            label: e.label,
            cg: e.cg,
            cg_prime: e.cg_prime,
            partial_sq: e.partial_sq,
            partial_cross: e.partial_cross,
            partial_diag: e.partial_diag,
            cg_approx: e.cg_approx,
            v_norm: e.v_norm,
        })
        .collect()
}

pub fn write_score_csv<W: Write>(rows: &[ScoreRow], w: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{}", SCORE_HEADER.join(","))?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.index,
            r.label,
            fmt_f64(r.cg),
            fmt_f64(r.cg_prime),
            fmt_f64(r.partial_sq),
            fmt_f64(r.partial_cross),
            fmt_f64(r.partial_diag),
            fmt_f64(r.cg_approx),
            fmt_f64(r.v_norm)
        )?;
    }
    w.flush()
}

pub fn save_score_csv(rows: &[ScoreRow], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(io_err(path))?;
    write_score_csv(rows, f).map_err(io_err(path))
}

/// Reads a score CSV. Rows must be indexed `0..n` in order.
pub fn load_score_csv(path: &Path) -> Result<Vec<ScoreRow>> {
    let f = File::open(path).map_err(io_err(path))?;
    read_score_csv(f, path)
}

pub fn read_score_csv<R: Read>(reader: R, path: &Path) -> Result<Vec<ScoreRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if header.iter().collect::<Vec<_>>() != SCORE_HEADER {
        return Err(format_err(path, format!("expected header {}", SCORE_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<ScoreRow>() {
        let row = rec.map_err(csv_err(path))?;
        if row.index != rows.len() {
            return Err(format_err(path, format!("row {} has index {}", rows.len(), row.index)));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(format_err(path, "no score rows"));
    }
    Ok(rows)
}

/// Reads one numeric column by name from any headered CSV. A file with a
/// single column is accepted whatever that column is called.
pub fn load_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f);
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    let pos = match header.iter().position(|h| h == column) {
        Some(p) => p,
        None if header.len() == 1 => 0,
        None => return Err(format_err(path, format!("no column named '{column}'"))),
    };
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let cell = rec.get(pos).ok_or_else(|| format_err(path, format!("row {line} is short")))?;
        let v: f64 = cell
            .parse()
            .map_err(|_| format_err(path, format!("row {line}: '{cell}' is not a number")))?;
        if !v.is_finite() {
            return Err(format_err(path, format!("row {line}: non-finite value")));
        }
        out.push(v);
    }
    Ok(out)
}

/// Settings needed to reproduce a score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSidecar {
    pub seed: u64,
    pub neg_ratio: usize,
    pub runs: usize,
    pub ridge: Option<f64>,
    pub fingerprint: String,
}

impl ScoreSidecar {
    pub fn from_table(table: &ScoreTable) -> Self {
        Self {
            seed: table.config.seed,
            neg_ratio: table.config.neg_ratio,
            runs: table.config.runs,
            ridge: table.config.ridge,
            fingerprint: table.fingerprint.clone(),
        }
    }
}

/// Everything needed to rerun a command, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub flags: BTreeMap<String, serde_json::Value>,
    pub seed: Option<u64>,
    /// SHA-256 (hex) of every input file, keyed by flag name.
    pub input_fingerprints: BTreeMap<String, String>,
    pub tool_version: String,
    pub duration_seconds: f64,
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| ReportError::Json { path: path.to_path_buf(), source })?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(f).map_err(|source| ReportError::Json { path: path.to_path_buf(), source })
}

pub fn file_sha256(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write_mask_csv<W: Write>(mask: &NoiseMask, labels: &[u32], w: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{}", MASK_HEADER.join(","))?;
    for (i, ((&f, &orig), &lab)) in mask.flipped.iter().zip(&mask.original_labels).zip(labels).enumerate() {
        writeln!(w, "{i},{},{orig},{lab}", u8::from(f))?;
    }
    w.flush()
}

pub fn save_mask_csv(mask: &NoiseMask, labels: &[u32], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(io_err(path))?;
    write_mask_csv(mask, labels, f).map_err(io_err(path))
}

#[derive(Debug, Deserialize)]
struct MaskRow {
    index: usize,
    flipped: u8,
    original_label: u32,
    #[allow(dead_code)]
    label: u32,
}

pub fn load_mask_csv(path: &Path) -> Result<NoiseMask> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f);
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if header.iter().collect::<Vec<_>>() != MASK_HEADER {
        return Err(format_err(path, format!("expected header {}", MASK_HEADER.join(","))));
    }
    let mut mask = NoiseMask { flipped: Vec::new(), original_labels: Vec::new() };
    for rec in rdr.deserialize::<MaskRow>() {
        let row = rec.map_err(csv_err(path))?;
        if row.index != mask.flipped.len() {
            return Err(format_err(path, format!("row {} has index {}", mask.flipped.len(), row.index)));
        }
        if row.flipped > 1 {
            return Err(format_err(path, format!("row {}: flipped must be 0 or 1", row.index)));
        }
        mask.flipped.push(row.flipped == 1);
        mask.original_labels.push(row.original_label);
    }
    Ok(mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCorrelation {
    pub a: String,
    pub b: String,
    #[serde(flatten)]
    pub result: CorrelationResult,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub sign_split: Option<SignSplit>,
    pub identity: Option<IdentityDiagnostic>,
    pub spectrum: Option<SpectrumCheck>,
}

/// JSON report shared by the analysis commands. Every key is always present;
/// sections a command does not compute are `null` or empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub correlations: Vec<NamedCorrelation>,
    pub detection: Option<DetectionCurve>,
    pub class_stats: Option<ClassStats>,
    pub diagnostics: Diagnostics,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(index: usize, cg: f64) -> ScoreRow {
        ScoreRow {
            index,
            label: (index % 3) as u32,
            cg,
            cg_prime: -cg / 3.0,
            partial_sq: cg * 0.1,
            partial_cross: cg * 0.7,
            partial_diag: cg * 0.2,
            cg_approx: 2.0,
            v_norm: cg / 7.0,
        }
    }

    #[test]
    fn score_csv_layout() {
        let mut buf = Vec::new();
        write_score_csv(&[row(0, 2.0)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "index,label,cg,cg_prime,partial_sq,partial_cross,partial_diag,cg_approx,v_norm");
        assert!(lines.next().unwrap().starts_with("0,0,2.0000000000000000e0,"));
    }

    #[test]
    fn score_csv_rejects_gaps_and_bad_header() {
        let p = Path::new("mem");
        let gap = "index,label,cg,cg_prime,partial_sq,partial_cross,partial_diag,cg_approx,v_norm\n1,0,1,1,1,1,1,1,1\n";
        assert!(matches!(read_score_csv(gap.as_bytes(), p), Err(ReportError::Format { .. })));
        assert!(matches!(read_score_csv("a,b\n1,2\n".as_bytes(), p), Err(ReportError::Format { .. })));
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.csv");
        let mask = NoiseMask { flipped: vec![false, true, false], original_labels: vec![0, 1, 1] };
        save_mask_csv(&mask, &[0, 0, 1], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "index,flipped,original_label,label\n0,0,0,0\n1,1,1,0\n2,0,1,1\n");
        assert_eq!(load_mask_csv(&path).unwrap(), mask);
    }

    #[test]
    fn report_keys_are_stable() {
        let v = serde_json::to_value(AnalysisReport::default()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["class_stats", "correlations", "detection", "diagnostics"]);
    }

    #[test]
    fn single_column_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ext.csv");
        std::fs::write(&path, "c_score\n0.5\n0.25\n").unwrap();
        assert_eq!(load_column(&path, "cg").unwrap(), vec![0.5, 0.25]);
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(load_column(&path, "cg").is_err());
        assert_eq!(load_column(&path, "b").unwrap(), vec![2.0]);
    }

    #[test]
    fn suffix_appends() {
        assert_eq!(with_suffix(Path::new("out/s.csv"), ".json"), PathBuf::from("out/s.csv.json"));
    }

    proptest! {
        #[test]
        fn score_csv_round_trips_bits(cgs in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 1..40)) {
            let rows: Vec<ScoreRow> = cgs.iter().enumerate().map(|(i, &c)| row(i, c)).collect();
            let mut buf = Vec::new();
            write_score_csv(&rows, &mut buf).unwrap();
            let back = read_score_csv(buf.as_slice(), Path::new("mem")).unwrap();
            for (a, b) in rows.iter().zip(&back) {
                prop_assert_eq!(a.cg.to_bits(), b.cg.to_bits());
                prop_assert_eq!(a.v_norm.to_bits(), b.v_norm.to_bits());
            }
        }
    }
}
