//! CSV and JSON helpers shared by datasets, fits, partitions and experiment
//! reports. Numbers are written with Rust's shortest round-trip formatting so
//! that identical values always produce identical bytes.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{MmclError, Result};
use crate::linalg::Mat;

/// Writes a matrix as headerless CSV, one sample per line.
pub fn write_mat_csv(path: &Path, m: &Mat) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headerless numeric CSV into a matrix.
pub fn read_mat_csv(path: &Path) -> Result<Mat> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| MmclError::InvalidInput(format!("{}: {e}", path.display())))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Mat::from_rows(&rows)
}

/// Writes a value as pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes a list of unsigned integers, one per line, under a single header.
pub fn write_usize_column(path: &Path, header: &str, values: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([header])?;
    for v in values {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Lowercase hexadecimal SHA-256 digest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Content hash in the style of a git blob: the digest of
/// `"blob <len>\0" ++ bytes`.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = Mat::from_fn(3, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0) * 1e-7);
        write_mat_csv(&path, &m).unwrap();
        assert_eq!(read_mat_csv(&path).unwrap(), m);
    }

    #[test]
    fn digests_are_hex() {
        assert_eq!(sha256_hex(b"").len(), 64);
        assert_ne!(blob_hash(b"a"), sha256_hex(b"a"));
    }
}
