//! Headerless numeric CSV used by every matrix artifact the tool reads or
//! writes. Floats are printed with 17 significant digits so a write/read
//! cycle reproduces the exact bits; parse failures carry 1-based line and
//! column positions.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Lossless float formatting: 17 significant digits round-trip any f64.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serializes a matrix row-wise with comma separators and LF line ends.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_f64(m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(m))?;
    Ok(())
}

/// Parses a headerless numeric CSV. Empty input yields a 0x0 matrix; ragged
/// rows and non-finite values are reported with their position.
pub fn parse_matrix_csv(text: &str, label: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (line_idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.strip_suffix('\r').unwrap_or(raw_line);
        if line.trim().is_empty() && line_idx + 1 == text.lines().count() {
            break;
        }
        let mut row = Vec::new();
        let mut col_start = 0usize;
        for field in line.split(',') {
            let trimmed = field.trim();
            let value: f64 = trimmed.parse().map_err(|_| Error::Parse {
                path: label.to_string(),
                line: line_idx + 1,
                col: col_start + 1,
                msg: format!("expected a number, found {trimmed:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    path: label.to_string(),
                    line: line_idx + 1,
                    col: col_start + 1,
                    msg: format!("non-finite value {trimmed:?}"),
                });
            }
            row.push(value);
            col_start += field.len() + 1;
        }
        if let Some(w) = width {
            if row.len() != w {
                return Err(Error::Parse {
                    path: label.to_string(),
                    line: line_idx + 1,
                    col: 1,
                    msg: format!("row has {} fields, expected {w}", row.len()),
                });
            }
        } else {
            width = Some(row.len());
        }
        rows.push(row);
    }
    let ncols = width.unwrap_or(0);
    let nrows = rows.len();
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    parse_matrix_csv(&text, &path.display().to_string())
}
