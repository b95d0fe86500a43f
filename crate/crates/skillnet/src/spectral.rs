//! Symmetric eigendecomposition (cyclic Jacobi), PSD verification, and
//! eigenvalue-gap statistics.

use crate::matrix::{check_symmetric, Axis, MatrixError, ProjectionMatrix};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("requested top {top} gaps but spectrum has {len} eigenvalues")]
    TopOutOfRange { top: usize, len: usize },
}

/// Full spectrum of a symmetric matrix, eigenvalues descending, eigenvectors
/// stored as columns (eigenvectors[i] pairs with eigenvalues[i]).
#[derive(Debug, Clone)]
pub struct EigenSpectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub source_axis: Axis,
}

/// Cyclic Jacobi rotations on a symmetric matrix. Convergence when every
/// off-diagonal magnitude drops below 1e-12 * ||A||_F.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let norm = frobenius(&m);
    let tol = 1e-12 * norm.max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p][q];
                if apq.abs() <= tol {
                    continue;
                }
                rotated = true;
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Rotate rows/cols p and q of m.
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| m[i][i]).collect();
    let mut eigenvectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&col| (0..n).map(|r| v[r][col]).collect())
        .collect();
    // Sign convention: largest-magnitude entry of each eigenvector positive.
    for vec in eigenvectors.iter_mut() {
        let mut best = 0usize;
        for (i, &x) in vec.iter().enumerate() {
            if x.abs() > vec[best].abs() {
                best = i;
            }
        }
        if vec.get(best).copied().unwrap_or(0.0) < 0.0 {
            for x in vec.iter_mut() {
                *x = -*x;
            }
        }
    }
    (eigenvalues, eigenvectors)
}

fn frobenius(a: &[Vec<f64>]) -> f64 {
    a.iter()
        .flat_map(|r| r.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

pub fn eig_symmetric(p: &ProjectionMatrix) -> Result<EigenSpectrum, SpectralError> {
    check_symmetric(&p.values, 1e-10)?;
    let (eigenvalues, eigenvectors) = jacobi_eigen(&p.values);
    Ok(EigenSpectrum { eigenvalues, eigenvectors, source_axis: p.axis })
}

/// Consecutive eigenvalue gaps plus the 1-based index of the largest gap
/// relative to lambda_max.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralGaps {
    pub gaps: Vec<f64>,
    pub relative_gaps: Vec<f64>,
    /// 1-based: gap i sits between eigenvalue i and i+1.
    pub largest_relative_gap_index: usize,
}

pub fn spectral_gaps(spec: &EigenSpectrum, top: usize) -> Result<SpectralGaps, SpectralError> {
    if top >= spec.eigenvalues.len() {
        return Err(SpectralError::TopOutOfRange { top, len: spec.eigenvalues.len() });
    }
    let lmax = spec.eigenvalues.first().copied().unwrap_or(0.0);
    let scale = if lmax > 0.0 { lmax } else { 1.0 };
    let gaps: Vec<f64> = (0..top)
        .map(|i| spec.eigenvalues[i] - spec.eigenvalues[i + 1])
        .collect();
    let relative_gaps: Vec<f64> = gaps.iter().map(|g| g / scale).collect();
    let mut best = 0usize;
    for (i, &g) in relative_gaps.iter().enumerate() {
        if g > relative_gaps[best] {
            best = i;
        }
    }
    Ok(SpectralGaps {
        gaps,
        relative_gaps,
        largest_relative_gap_index: best + 1,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PsdReport {
    pub psd: bool,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// True iff lambda_min >= -tol * lambda_max.
pub fn assert_psd(p: &ProjectionMatrix, tol: f64) -> Result<PsdReport, SpectralError> {
    let spec = eig_symmetric(p)?;
    let lambda_max = spec.eigenvalues.first().copied().unwrap_or(0.0);
    let lambda_min = spec.eigenvalues.last().copied().unwrap_or(0.0);
    Ok(PsdReport {
        psd: lambda_min >= -tol * lambda_max.max(0.0),
        lambda_min,
        lambda_max,
    })
}
