//! File plumbing: the `x1..xp,y` CSV data contract and atomic writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use causal_combine::error::{Error, Result};
use causal_combine::evaluation::format_float;
use causal_combine::linmodel::{Dataset, Regime};
use nalgebra::{DMatrix, DVector};

fn parse_error(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

/// Reads a dataset CSV with header `x1..xp,y`.
pub fn read_dataset_csv(path: &Path, regime: Regime) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| parse_error(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| parse_error(format!("{}: {e}", path.display())))?
        .clone();
    if headers.len() < 2 || headers.iter().next_back() != Some("y") {
        return Err(parse_error(format!(
            "{}: header must be x1..xp,y",
            path.display()
        )));
    }
    let p = headers.len() - 1;
    for (j, name) in headers.iter().take(p).enumerate() {
        if name != format!("x{}", j + 1) {
            return Err(parse_error(format!(
                "{}: column {} named {name:?}, expected x{}",
                path.display(),
                j + 1,
                j + 1
            )));
        }
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_error(format!("{}: {e}", path.display())))?;
        if record.len() != p + 1 {
            return Err(parse_error(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                i + 2,
                record.len(),
                p + 1
            )));
        }
        let values: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.trim().parse::<f64>()).collect();
        rows.push(values.map_err(|e| {
            parse_error(format!("{}: row {}: {e}", path.display(), i + 2))
        })?);
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let y = DVector::from_fn(rows.len(), |i, _| rows[i][p]);
    Dataset::new(x, y, regime)
}

/// Serializes a dataset to the `x1..xp,y` contract with full round-trip
/// precision.
pub fn dataset_to_csv(data: &Dataset) -> String {
    let p = data.dim();
    let mut out = String::new();
    for j in 0..p {
        out.push_str(&format!("x{},", j + 1));
    }
    out.push_str("y\n");
    for i in 0..data.rows() {
        for j in 0..p {
            out.push_str(&format_float(data.x[(i, j)]));
            out.push(',');
        }
        out.push_str(&format_float(data.y[i]));
        out.push('\n');
    }
    out
}

/// Writes via a temp file in the same directory plus rename, so failures
/// never leave a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
