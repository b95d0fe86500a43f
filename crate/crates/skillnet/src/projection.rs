//! Skills-module composition and one-mode projections, with an optional
//! spectral sparsifier that preserves the leading eigenvalue.

use crate::matrix::{check_symmetric, Axis, BipartiteMatrix, MatrixError, ProjectionMatrix};
use crate::spectral::jacobi_eigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("dataset axis mismatch: sd columns and dm rows must share labels ({0})")]
    AxisMismatch(String),
    #[error("input is not symmetric")]
    NotSymmetric,
    #[error("bad target density {0}: must be in (0,1]")]
    BadDensity(f64),
    #[error("bad tolerance {0}: must be positive")]
    BadTolerance(f64),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// B^SM = B^SD . B^DM: composes skill-dataset counts with dataset-module
/// importance over the shared dataset axis.
pub fn project_sm(
    sd: &BipartiteMatrix,
    dm: &BipartiteMatrix,
) -> Result<BipartiteMatrix, ProjectionError> {
    if sd.cols != dm.rows {
        return Err(ProjectionError::AxisMismatch(format!(
            "{} sd columns vs {} dm rows",
            sd.n_cols(),
            dm.n_rows()
        )));
    }
    let n = sd.n_rows();
    let m = sd.n_cols();
    let k = dm.n_cols();
    let mut values = vec![vec![0.0; k]; n];
    for i in 0..n {
        for j in 0..m {
            let s = sd.values[i][j];
            if s == 0.0 {
                continue;
            }
            for (kk, out) in values[i].iter_mut().enumerate() {
                *out += s * dm.values[j][kk];
            }
        }
    }
    Ok(BipartiteMatrix { rows: sd.rows.clone(), cols: dm.cols.clone(), values })
}

/// One-mode projection: P^S = B (B^T) over the skills axis, or
/// P^M = (B^T) B over the modules axis. Symmetric PSD by construction.
pub fn project_onemode(sm: &BipartiteMatrix, axis: Axis) -> ProjectionMatrix {
    let (labels, dim, dot): (Vec<String>, usize, Box<dyn Fn(usize, usize) -> f64 + '_>) = match axis
    {
        Axis::Skills => (
            sm.rows.clone(),
            sm.n_rows(),
            Box::new(|a, b| (0..sm.n_cols()).map(|k| sm.values[a][k] * sm.values[b][k]).sum()),
        ),
        Axis::Modules => (
            sm.cols.clone(),
            sm.n_cols(),
            Box::new(|a, b| (0..sm.n_rows()).map(|i| sm.values[i][a] * sm.values[i][b]).sum()),
        ),
    };
    let mut values = vec![vec![0.0; dim]; dim];
    for a in 0..dim {
        for b in a..dim {
            let v = dot(a, b);
            values[a][b] = v;
            values[b][a] = v;
        }
    }
    ProjectionMatrix { axis, labels, values }
}

/// Outcome of spectral sparsification. When no candidate meets the eigenvalue
/// tolerance, `met_tolerance` is false and `matrix` holds the densest
/// candidate tried.
#[derive(Debug, Clone)]
pub struct SparsifyOutcome {
    pub matrix: ProjectionMatrix,
    pub met_tolerance: bool,
    pub attempts: usize,
    pub lambda_rel_err: f64,
}

const SPARSIFY_ATTEMPTS: usize = 20;

/// Edge sampling proportional to weight with inverse-probability reweighting,
/// retried over seed-derived attempts until lambda_max is preserved within
/// `tol`. The diagonal is never altered.
pub fn sparsify_spectral(
    p: &ProjectionMatrix,
    target_density: f64,
    tol: f64,
    seed: u64,
) -> Result<SparsifyOutcome, ProjectionError> {
    if !(target_density > 0.0 && target_density <= 1.0) {
        return Err(ProjectionError::BadDensity(target_density));
    }
    if tol <= 0.0 {
        return Err(ProjectionError::BadTolerance(tol));
    }
    check_symmetric(&p.values, 1e-10).map_err(|_| ProjectionError::NotSymmetric)?;
    if target_density >= 1.0 {
        return Ok(SparsifyOutcome {
            matrix: p.clone(),
            met_tolerance: true,
            attempts: 0,
            lambda_rel_err: 0.0,
        });
    }
    let n = p.len();
    let (dense_eigs, _) = jacobi_eigen(&p.values);
    let lambda_dense = dense_eigs.first().copied().unwrap_or(0.0);

    // Upper-triangle nonzero edges.
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if p.values[i][j] != 0.0 {
                edges.push((i, j, p.values[i][j]));
            }
        }
    }
    let max_pairs = (n * (n - 1) / 2) as f64;
    let target_edges = (target_density * max_pairs).floor();
    if edges.is_empty() || (edges.len() as f64) <= target_edges {
        return Ok(SparsifyOutcome {
            matrix: p.clone(),
            met_tolerance: true,
            attempts: 0,
            lambda_rel_err: 0.0,
        });
    }

    let mut best: Option<SparsifyOutcome> = None;
    for attempt in 0..SPARSIFY_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (attempt as u64).wrapping_mul(0x9E3779B97F4A7C15));
        // Keep-probability p_e = min(1, c*w_e), with c solved so the expected
        // kept count sits just under the target.
        let expected = (target_edges * 0.97).max(1.0);
        let c = solve_scale(&edges, expected);
        let mut values = vec![vec![0.0; n]; n];
        for (i, row) in values.iter_mut().enumerate() {
            row[i] = p.values[i][i];
        }
        let mut kept: Vec<(usize, usize, f64)> = Vec::new();
        for &(i, j, w) in &edges {
            let pe = (c * w).min(1.0);
            if rng.gen::<f64>() < pe {
                kept.push((i, j, w / pe));
            }
        }
        if kept.len() as f64 > target_edges {
            // Drop the lowest reweighted edges to respect the density cap.
            kept.sort_by(|a, b| {
                b.2.partial_cmp(&a.2).unwrap().then_with(|| (a.0, a.1).cmp(&(b.0, b.1)))
            });
            kept.truncate(target_edges as usize);
        }
        for &(i, j, w) in &kept {
            values[i][j] = w;
            values[j][i] = w;
        }
        let (eigs, _) = jacobi_eigen(&values);
        let lambda_sparse = eigs.first().copied().unwrap_or(0.0);
        let rel_err = if lambda_dense != 0.0 {
            ((lambda_sparse - lambda_dense) / lambda_dense).abs()
        } else {
            0.0
        };
        let candidate = SparsifyOutcome {
            matrix: ProjectionMatrix { axis: p.axis, labels: p.labels.clone(), values },
            met_tolerance: rel_err <= tol,
            attempts: attempt + 1,
            lambda_rel_err: rel_err,
        };
        if candidate.met_tolerance {
            return Ok(candidate);
        }
        let better = match &best {
            None => true,
            Some(b) => candidate.lambda_rel_err < b.lambda_rel_err,
        };
        if better {
            best = Some(candidate);
        }
    }
    let mut out = best.expect("at least one attempt ran");
    out.attempts = SPARSIFY_ATTEMPTS;
    Ok(out)
}

/// Binary search for c such that sum(min(1, c*w)) hits `expected`.
fn solve_scale(edges: &[(usize, usize, f64)], expected: f64) -> f64 {
    let total: f64 = edges.iter().map(|e| e.2).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = (expected / total).max(1.0 / edges.iter().map(|e| e.2).fold(f64::MAX, f64::min));
    let count = |c: f64| edges.iter().map(|e| (c * e.2).min(1.0)).sum::<f64>();
    while count(hi) < expected && hi < 1e12 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count(mid) < expected {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}
