//! File formats.
//!
//! - matrices: headerless CSV, one row per line, comma separated;
//! - labels: single-column headerless CSV of integers;
//! - kernel sidecar: JSON `{family, params, normalized, fallback_used}` next to the matrix.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Dataset, KernelMatrix, KernelSpec};
use crate::Matrix;

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads a dense numeric matrix. Ragged rows and non-numeric cells are reported with
/// their line number.
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for record in reader(path)?.records() {
        let record = record?;
        let line = record.position().map_or(rows.len() + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let row = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>()
                    .map_err(|_| parse_error(path, line, format!("`{cell}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_error(path, line, format!("expected {w} columns, found {}", row.len())));
            }
            _ => {}
        }
        rows.push(row);
    }
    let ncols = width.ok_or_else(|| parse_error(path, 1, "file contains no rows"))?;
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Matrix::from_row_slice(rows.len(), ncols, &flat))
}

/// Writes values in shortest round-trip form so a reload reproduces them bit for bit.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = String::with_capacity(m.nrows() * m.ncols() * 12);
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Reads a single column of nonnegative integer ids.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for record in reader(path)?.records() {
        let record = record?;
        let line = record.position().map_or(labels.len() + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 1 {
            return Err(parse_error(path, line, format!("expected 1 column, found {}", record.len())));
        }
        let cell = &record[0];
        // tolerate integral floats such as `3.0`
        let value = cell
            .parse::<usize>()
            .ok()
            .or_else(|| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| *v >= 0.0 && v.fract() == 0.0)
                    .map(|v| v as usize)
            })
            .ok_or_else(|| parse_error(path, line, format!("`{cell}` is not a nonnegative integer label")))?;
        labels.push(value);
    }
    Ok(labels)
}

/// Maps label values to `0..k` preserving order. The flag is set when relabeling changed
/// anything.
pub fn relabel_dense(labels: &[usize]) -> (Vec<usize>, bool) {
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let dense: Vec<usize> = labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("present"))
        .collect();
    let changed = dense != labels;
    (dense, changed)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::new();
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// Loads features and optional labels; label ids with gaps are compacted with a warning.
pub fn load_dataset(path: &Path, labels_path: Option<&Path>) -> Result<Dataset> {
    let features = read_matrix_csv(path)?;
    let labels = match labels_path {
        None => None,
        Some(lp) => {
            let raw = read_labels(lp)?;
            if raw.len() != features.nrows() {
                return Err(Error::shape(
                    format!("{} labels (one per sample in {})", features.nrows(), path.display()),
                    format!("{} labels in {}", raw.len(), lp.display()),
                ));
            }
            let (dense, changed) = relabel_dense(&raw);
            if changed {
                log::warn!("{}: label ids are not contiguous from 0; relabeled densely", lp.display());
            }
            Some(dense)
        }
    };
    if let Some((idx, _)) = features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        let n = features.nrows();
        return Err(parse_error(path, idx % n + 1, "non-finite value"));
    }
    Dataset::new(features, labels)
}

/// JSON sidecar describing a kernel matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSidecar {
    pub family: String,
    pub params: serde_json::Value,
    pub normalized: bool,
    pub fallback_used: bool,
    pub scale: f64,
}

impl KernelSidecar {
    pub fn from_kernel(k: &KernelMatrix) -> Self {
        let params = match k.spec() {
            KernelSpec::Gaussian { t } => serde_json::json!({ "t": t }),
            KernelSpec::Linear => serde_json::json!({}),
            KernelSpec::Polynomial { a, b } => serde_json::json!({ "a": a, "b": b }),
        };
        Self {
            family: k.spec().family().to_string(),
            params,
            normalized: k.is_normalized(),
            fallback_used: k.fallback_used(),
            scale: k.scale(),
        }
    }
}

/// Path of the sidecar for a matrix file: same stem, `.json` extension.
pub fn sidecar_path(matrix_path: &Path) -> PathBuf {
    matrix_path.with_extension("json")
}

pub fn write_kernel(path: &Path, k: &KernelMatrix) -> Result<()> {
    write_matrix_csv(path, k.values())?;
    write_json(&sidecar_path(path), &KernelSidecar::from_kernel(k))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn tmp_file(dir: &tempfile::TempDir, name: &str, content: &str) -> PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, content).unwrap();
        p
    }

    #[test]
    fn loads_small_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let x = tmp_file(&dir, "x.csv", "1,2\n3,4\n5,6\n7,8\n");
        let y = tmp_file(&dir, "y.csv", "0\n1\n0\n1\n");
        let d = load_dataset(&x, Some(&y)).unwrap();
        assert_eq!((d.n_samples(), d.n_features()), (4, 2));
        assert_eq!(d.labels().unwrap(), &[0, 1, 0, 1]);
        assert_eq!(d.classes(), Some(2));
    }

    #[test]
    fn ragged_rows_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let x = tmp_file(&dir, "x.csv", "1,2\n3,4\n5\n");
        match read_matrix_csv(&x) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_non_finite_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let x = tmp_file(&dir, "x.csv", "1,2\n3,abc\n");
        assert!(matches!(read_matrix_csv(&x), Err(Error::Parse { line: 2, .. })));
        let x = tmp_file(&dir, "nan.csv", "1,2\nNaN,4\n");
        assert!(matches!(load_dataset(&x, None), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn label_gaps_are_compacted() {
        let dir = tempfile::tempdir().unwrap();
        let x = tmp_file(&dir, "x.csv", "1\n2\n3\n4\n");
        let y = tmp_file(&dir, "y.csv", "0\n2\n2\n0\n");
        let d = load_dataset(&x, Some(&y)).unwrap();
        assert_eq!(d.labels().unwrap(), &[0, 1, 1, 0]);
    }

    #[test]
    fn label_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let x = tmp_file(&dir, "x.csv", "1\n2\n3\n");
        let y = tmp_file(&dir, "y.csv", "0\n1\n");
        assert!(matches!(load_dataset(&x, Some(&y)), Err(Error::Shape { .. })));
    }

    #[test]
    fn matrix_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let m = dmatrix![0.1, -1e-300, 3.0; 1.0 / 3.0, 0.0, 2.5e17];
        let p = dir.path().join("sub/m.csv");
        write_matrix_csv(&p, &m).unwrap();
        assert_eq!(read_matrix_csv(&p).unwrap(), m);
    }

    #[test]
    fn sidecar_contents() {
        let dir = tempfile::tempdir().unwrap();
        let k = KernelMatrix::from_values(Matrix::identity(2, 2), KernelSpec::Polynomial { a: 1, b: 2 }, false).unwrap();
        let p = dir.path().join("k.csv");
        write_kernel(&p, &k).unwrap();
        let side: KernelSidecar = read_json(&sidecar_path(&p)).unwrap();
        assert_eq!(side.family, "polynomial");
        assert_eq!(side.params, serde_json::json!({"a": 1, "b": 2}));
        assert!(!side.normalized);
    }
}
