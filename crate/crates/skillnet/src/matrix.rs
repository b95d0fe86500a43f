//! Dense matrix containers shared across the pipeline, with the CSV and JSON
//! envelope formats used by the CLI.

use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("negative entry {value} at ({row},{col})")]
    Negative { row: usize, col: usize, value: f64 },
    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {diff}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which side of a projection a matrix describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Skills,
    Modules,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::Skills => write!(f, "skills"),
            Axis::Modules => write!(f, "modules"),
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "skills" => Ok(Axis::Skills),
            "modules" => Ok(Axis::Modules),
            other => Err(format!("unknown axis '{other}' (expected skills|modules)")),
        }
    }
}

/// Dense nonnegative matrix with ordered row/column labels.
///
/// Serialized as the envelope `{"rows": [...], "cols": [...], "values": [[...]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl BipartiteMatrix {
    pub fn new(
        rows: Vec<String>,
        cols: Vec<String>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self, MatrixError> {
        if values.len() != rows.len() {
            return Err(MatrixError::Shape(format!(
                "{} value rows for {} row labels",
                values.len(),
                rows.len()
            )));
        }
        for (i, r) in values.iter().enumerate() {
            if r.len() != cols.len() {
                return Err(MatrixError::Shape(format!(
                    "row {} has {} entries, expected {}",
                    i,
                    r.len(),
                    cols.len()
                )));
            }
            for (j, &v) in r.iter().enumerate() {
                if v < 0.0 {
                    return Err(MatrixError::Negative { row: i, col: j, value: v });
                }
            }
        }
        Ok(Self { rows, cols, values })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    /// Rescale every nonzero column to unit sum. Zero columns stay zero.
    pub fn normalize_columns(&self) -> Self {
        let mut out = self.clone();
        for j in 0..self.n_cols() {
            let s: f64 = self.values.iter().map(|r| r[j]).sum();
            if s > 0.0 {
                for r in out.values.iter_mut() {
                    r[j] /= s;
                }
            }
        }
        out
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<(), MatrixError> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read_json<R: std::io::Read>(r: R) -> Result<Self, MatrixError> {
        let m: Self = serde_json::from_reader(r)?;
        Self::new(m.rows, m.cols, m.values)
    }

    /// CSV with a header row of column labels and a leading label column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), MatrixError> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec![String::new()];
        header.extend(self.cols.iter().cloned());
        wtr.write_record(&header)?;
        for (label, row) in self.rows.iter().zip(&self.values) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|v| format!("{v}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

impl From<csv::Error> for MatrixError {
    fn from(e: csv::Error) -> Self {
        MatrixError::Shape(format!("csv: {e}"))
    }
}

/// Symmetric positive-semi-definite one-mode projection matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionMatrix {
    pub axis: Axis,
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl ProjectionMatrix {
    pub fn new(
        axis: Axis,
        labels: Vec<String>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self, MatrixError> {
        let n = labels.len();
        if values.len() != n || values.iter().any(|r| r.len() != n) {
            return Err(MatrixError::Shape(format!("expected {n}x{n} values")));
        }
        check_symmetric(&values, 1e-10)?;
        Ok(Self { axis, labels, values })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Off-diagonal density: nonzero off-diagonal entries over n(n-1).
    pub fn offdiag_density(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let nz = self
            .values
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().filter(move |(j, _)| *j != i))
            .filter(|(_, &v)| v != 0.0)
            .count();
        nz as f64 / (n * (n - 1)) as f64
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<(), MatrixError> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read_json<R: std::io::Read>(r: R) -> Result<Self, MatrixError> {
        let m: Self = serde_json::from_reader(r)?;
        Self::new(m.axis, m.labels, m.values)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), MatrixError> {
        let b = BipartiteMatrix {
            rows: self.labels.clone(),
            cols: self.labels.clone(),
            values: self.values.clone(),
        };
        b.write_csv(w)
    }
}

/// Fails with the worst offending pair if `a` deviates from symmetry by more
/// than `tol` (absolute).
pub fn check_symmetric(a: &[Vec<f64>], tol: f64) -> Result<(), MatrixError> {
    let n = a.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = (a[i][j] - a[j][i]).abs();
            if diff > tol {
                return Err(MatrixError::NotSymmetric { row: i, col: j, diff });
            }
        }
    }
    Ok(())
}
