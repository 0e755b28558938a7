//! Matrix and model serialization: plain CSV, a small binary format for
//! large inputs, and the model JSON document.
//!
//! All writers go through [`write_atomic`] (write to a sibling temp file,
//! then rename), so partially written outputs never appear under the final
//! name. Numeric JSON/CSV output uses the shortest round-trip decimal form,
//! which keeps re-runs byte-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::svd::{RSvdModel, SvdTriple};

const BIN_MAGIC: &[u8; 4] = b"RSVD";

/// Write `bytes` to `path` atomically (temp file + rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Read a matrix from CSV: one row per line, comma-separated, `.` decimal
/// separator, no header.
pub fn read_matrix_csv(path: &Path) -> Result<DataMatrix> {
    let text = fs::read_to_string(path)?;
    parse_matrix_csv(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn parse_matrix_csv(text: &str) -> std::result::Result<DataMatrix, String> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, String> = line
            .split(',')
            .map(|cell| {
                cell.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("line {}: bad number {:?}", lineno + 1, cell.trim()))
            })
            .collect();
        rows.push(row?);
    }
    if rows.is_empty() {
        return Err("no data rows".into());
    }
    DataMatrix::from_rows(&rows).map_err(|e| e.to_string())
}

/// Write a matrix as CSV (see [`read_matrix_csv`] for the layout).
pub fn write_matrix_csv(path: &Path, m: &DataMatrix) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.n_rows() {
        let mut first = true;
        for v in m.row(i) {
            if !first {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
            first = false;
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Read the binary matrix format: magic `RSVD`, little-endian `u32` row and
/// column counts, then row-major `f64` values.
pub fn read_matrix_bin(path: &Path) -> Result<DataMatrix> {
    let bytes = fs::read(path)?;
    let fail = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    if bytes.len() < 12 || &bytes[0..4] != BIN_MAGIC {
        return Err(fail("missing RSVD header"));
    }
    let n_rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let n_cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = n_rows
        .checked_mul(n_cols)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| fail("dimensions overflow"))?;
    if bytes.len() != 12 + expected {
        return Err(fail(&format!(
            "expected {} value bytes for {n_rows}x{n_cols}, found {}",
            expected,
            bytes.len() - 12
        )));
    }
    let values: Vec<f64> = bytes[12..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DataMatrix::from_vec(n_rows, n_cols, values)
}

/// Write the binary matrix format (see [`read_matrix_bin`]).
pub fn write_matrix_bin(path: &Path, m: &DataMatrix) -> Result<()> {
    let mut bytes = Vec::with_capacity(12 + m.values().len() * 8);
    bytes.extend_from_slice(BIN_MAGIC);
    bytes.extend_from_slice(&(m.n_rows() as u32).to_le_bytes());
    bytes.extend_from_slice(&(m.n_cols() as u32).to_le_bytes());
    for v in m.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

/// Serialized decomposition document. Component `k` occupies `lambda[k]`,
/// `u[k]` (length n) and `v[k]` (length p).
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelJson {
    pub lambda: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub sigma2: f64,
    pub alpha: f64,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
}

impl From<&RSvdModel> for ModelJson {
    fn from(model: &RSvdModel) -> Self {
        ModelJson {
            lambda: model.lambdas(),
            u: model.triples.iter().map(|t| t.u.clone()).collect(),
            v: model.triples.iter().map(|t| t.v.clone()).collect(),
            sigma2: model.sigma2,
            alpha: model.alpha,
            converged: model.converged.clone(),
            iterations: model.iterations.clone(),
        }
    }
}

impl ModelJson {
    pub fn into_model(self) -> Result<RSvdModel> {
        let r = self.lambda.len();
        if self.u.len() != r || self.v.len() != r || self.converged.len() != r || self.iterations.len() != r {
            return Err(Error::Format("model document has inconsistent component counts".into()));
        }
        let triples = self
            .lambda
            .into_iter()
            .zip(self.u)
            .zip(self.v)
            .map(|((lambda, u), v)| SvdTriple { lambda, u, v })
            .collect();
        Ok(RSvdModel {
            triples,
            sigma2: self.sigma2,
            alpha: self.alpha,
            converged: self.converged,
            iterations: self.iterations,
            truncated: false,
        })
    }
}

/// Write a model as JSON (atomic).
pub fn write_model_json(path: &Path, model: &RSvdModel) -> Result<()> {
    let doc = ModelJson::from(model);
    let mut text = serde_json::to_string(&doc)
        .map_err(|e| Error::Format(format!("model serialization failed: {e}")))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Read a model JSON document.
pub fn read_model_json(path: &Path) -> Result<RSvdModel> {
    let text = fs::read_to_string(path)?;
    let doc: ModelJson = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    doc.into_model()
}
