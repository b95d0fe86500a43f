//! Statistical machinery: Pearson chi-squared skill-distribution test, PCA,
//! k-means with Davies-Bouldin model selection, and Hotelling's two-sample
//! T-squared test.

use crate::spectral::jacobi_eigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("degenerate contingency table: need >=2 rows and >=2 cols after dropping zeros")]
    Degenerate,
    #[error("too few samples: each group needs at least 2 points")]
    TooFewSamples,
    #[error("dimension {dim} too high for {n} total samples")]
    DimTooHigh { dim: usize, n: usize },
    #[error("components {components} exceed dimension {dim}")]
    TooManyComponents { components: usize, dim: usize },
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("inconsistent point dimensions")]
    RaggedPoints,
    #[error("degenerate data: only {distinct} distinct points for k range {lo}..={hi}")]
    DegenerateData { distinct: usize, lo: usize, hi: usize },
    #[error("bad k range {lo}..={hi} for {n} points (need 2 <= k <= n-1)")]
    BadKRange { lo: usize, hi: usize, n: usize },
}

/// Communities x skills count table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub df1: f64,
    pub df2: Option<f64>,
    pub p_value: f64,
    /// Set when any expected cell count falls below 5 (chi-squared only).
    pub low_expected_warning: bool,
}

/// Pearson chi-squared test of homogeneity on a communities x skills table.
/// All-zero rows and columns are dropped first; expected counts come from the
/// marginals and the p-value from the upper-tail chi-squared CDF.
pub fn chi_squared_skill_test(table: &ContingencyTable) -> Result<TestResult, StatsError> {
    let rows: Vec<&Vec<u64>> = table.counts.iter().filter(|r| r.iter().any(|&x| x > 0)).collect();
    if rows.len() < 2 {
        return Err(StatsError::Degenerate);
    }
    let ncols = rows[0].len();
    let keep_cols: Vec<usize> =
        (0..ncols).filter(|&j| rows.iter().any(|r| r[j] > 0)).collect();
    if keep_cols.len() < 2 {
        return Err(StatsError::Degenerate);
    }
    let counts: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| keep_cols.iter().map(|&j| r[j] as f64).collect())
        .collect();
    let r = counts.len();
    let c = keep_cols.len();
    let row_sums: Vec<f64> = counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..c).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
    let total: f64 = row_sums.iter().sum();
    let mut statistic = 0.0;
    let mut low_expected = false;
    for i in 0..r {
        for j in 0..c {
            let expected = row_sums[i] * col_sums[j] / total;
            if expected < 5.0 {
                low_expected = true;
            }
            let diff = counts[i][j] - expected;
            statistic += diff * diff / expected;
        }
    }
    let dof = ((r - 1) * (c - 1)) as f64;
    let p_value =
        if statistic > 0.0 { gamma_ur(dof / 2.0, statistic / 2.0).clamp(0.0, 1.0) } else { 1.0 };
    Ok(TestResult { statistic, df1: dof, df2: None, p_value, low_expected_warning: low_expected })
}

#[derive(Debug, Clone)]
pub struct PcaResult {
    /// Points projected onto the leading components.
    pub projected: Vec<Vec<f64>>,
    /// Variance captured by each kept component.
    pub explained_variance: Vec<f64>,
    /// Component vectors (rows), deterministic sign convention.
    pub components: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

/// PCA via eigendecomposition of the sample covariance (mean-centered,
/// 1/(n-1) normalization).
pub fn pca(points: &[Vec<f64>], components: usize) -> Result<PcaResult, StatsError> {
    let n = points.len();
    if n < 2 {
        return Err(StatsError::TooFewPoints(n));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(StatsError::RaggedPoints);
    }
    if components > dim {
        return Err(StatsError::TooManyComponents { components, dim });
    }
    let mean: Vec<f64> =
        (0..dim).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; dim]; dim];
    for p in points {
        for i in 0..dim {
            let di = p[i] - mean[i];
            for j in i..dim {
                cov[i][j] += di * (p[j] - mean[j]);
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    let (eigenvalues, eigenvectors) = jacobi_eigen(&cov);
    let kept: Vec<Vec<f64>> = eigenvectors.into_iter().take(components).collect();
    let explained_variance = eigenvalues.into_iter().take(components).map(|l| l.max(0.0)).collect();
    let projected = points
        .iter()
        .map(|p| {
            kept.iter()
                .map(|comp| (0..dim).map(|j| comp[j] * (p[j] - mean[j])).sum())
                .collect()
        })
        .collect();
    Ok(PcaResult { projected, explained_variance, components: kept, mean })
}

#[derive(Debug, Clone)]
pub struct KmeansSelection {
    pub best_k: usize,
    pub assignment: Vec<usize>,
    /// (k, Davies-Bouldin score) for every k evaluated.
    pub db_scores: Vec<(usize, f64)>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding. Returns (assignment, centroids,
/// inertia).
fn kmeans_once(
    points: &[Vec<f64>],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<Vec<f64>>, f64) {
    let n = points.len();
    let dim = points[0].len();
    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.gen_range(0..n)
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centroids.last().unwrap()));
        }
    }
    let mut assignment = vec![0usize; n];
    for _iter in 0..300 {
        // assign
        for (i, p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, cent) in centroids.iter().enumerate() {
                let d = sq_dist(p, cent);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assignment[i] = best;
        }
        // update
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignment[i]] += 1;
            for j in 0..dim {
                sums[assignment[i]][j] += p[j];
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed an empty cluster at the point farthest from its centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centroids[assignment[a]])
                            .partial_cmp(&sq_dist(&points[b], &centroids[assignment[b]]))
                            .unwrap()
                    })
                    .unwrap();
                shift += sq_dist(&centroids[c], &points[far]).sqrt();
                centroids[c] = points[far].clone();
                continue;
            }
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift += sq_dist(&centroids[c], &new).sqrt();
            centroids[c] = new;
        }
        if shift < 1e-9 {
            break;
        }
    }
    // final assignment + inertia
    let mut inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (c, cent) in centroids.iter().enumerate() {
            let d = sq_dist(p, cent);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        assignment[i] = best;
        inertia += best_d;
    }
    (assignment, centroids, inertia)
}

/// Davies-Bouldin index: mean over clusters of the worst (S_i + S_j) / M_ij.
pub fn davies_bouldin(points: &[Vec<f64>], assignment: &[usize], k: usize) -> f64 {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignment) {
        counts[c] += 1;
        for j in 0..dim {
            sums[c][j] += p[j];
        }
    }
    let centroids: Vec<Vec<f64>> = (0..k)
        .map(|c| sums[c].iter().map(|s| s / counts[c].max(1) as f64).collect())
        .collect();
    let mut scatter = vec![0.0; k];
    for (p, &c) in points.iter().zip(assignment) {
        scatter[c] += sq_dist(p, &centroids[c]).sqrt();
    }
    for c in 0..k {
        scatter[c] /= counts[c].max(1) as f64;
    }
    let mut db = 0.0;
    for i in 0..k {
        let mut worst: f64 = 0.0;
        for j in 0..k {
            if i == j {
                continue;
            }
            let m = sq_dist(&centroids[i], &centroids[j]).sqrt();
            let r = if m > 0.0 { (scatter[i] + scatter[j]) / m } else { f64::INFINITY };
            worst = worst.max(r);
        }
        db += worst;
    }
    db / k as f64
}

/// K-means over an inclusive k range with Davies-Bouldin model selection.
/// Per k the lowest-inertia restart wins; best_k minimizes the DB score.
/// Values of k not below the number of distinct points are excluded.
pub fn kmeans_davies_bouldin(
    points: &[Vec<f64>],
    k_range: (usize, usize),
    restarts: usize,
    seed: u64,
) -> Result<KmeansSelection, StatsError> {
    let n = points.len();
    let (lo, hi) = k_range;
    if lo < 2 || hi < lo || hi > n.saturating_sub(1) {
        return Err(StatsError::BadKRange { lo, hi, n });
    }
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !distinct.iter().any(|q| *q == p) {
            distinct.push(p);
        }
    }
    let ks: Vec<usize> = (lo..=hi).filter(|&k| k < distinct.len()).collect();
    if ks.is_empty() {
        return Err(StatsError::DegenerateData { distinct: distinct.len(), lo, hi });
    }
    let mut db_scores = Vec::new();
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for &k in &ks {
        let mut best_run: Option<(f64, Vec<usize>)> = None;
        for r in 0..restarts.max(1) {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed ^ ((k as u64) << 32) ^ (r as u64).wrapping_mul(0x9E3779B97F4A7C15),
            );
            let (assignment, _, inertia) = kmeans_once(points, k, &mut rng);
            let better = best_run.as_ref().map_or(true, |(bi, _)| inertia < *bi);
            if better {
                best_run = Some((inertia, assignment));
            }
        }
        let (_, assignment) = best_run.unwrap();
        let db = davies_bouldin(points, &assignment, k);
        db_scores.push((k, db));
        let better = best.as_ref().map_or(true, |(bdb, _, _)| db < *bdb);
        if better {
            best = Some((db, k, assignment));
        }
    }
    let (_, best_k, assignment) = best.unwrap();
    Ok(KmeansSelection { best_k, assignment, db_scores })
}

/// Solve S x = b via Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in (col + 1)..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

/// Hotelling's two-sample T-squared with F-based p-value. The pooled
/// covariance is ridge-regularized by 1e-8 * trace / p.
pub fn hotelling_t2(sample_a: &[Vec<f64>], sample_b: &[Vec<f64>]) -> Result<TestResult, StatsError> {
    let (na, nb) = (sample_a.len(), sample_b.len());
    if na < 2 || nb < 2 {
        return Err(StatsError::TooFewSamples);
    }
    let dim = sample_a[0].len();
    if sample_a.iter().chain(sample_b).any(|p| p.len() != dim) {
        return Err(StatsError::RaggedPoints);
    }
    let n = na + nb;
    if n <= dim + 2 {
        return Err(StatsError::DimTooHigh { dim, n });
    }
    let mean = |s: &[Vec<f64>]| -> Vec<f64> {
        (0..dim).map(|j| s.iter().map(|p| p[j]).sum::<f64>() / s.len() as f64).collect()
    };
    let ma = mean(sample_a);
    let mb = mean(sample_b);
    let mut pooled = vec![vec![0.0; dim]; dim];
    for (s, m) in [(sample_a, &ma), (sample_b, &mb)] {
        for p in s {
            for i in 0..dim {
                let di = p[i] - m[i];
                for j in 0..dim {
                    pooled[i][j] += di * (p[j] - m[j]);
                }
            }
        }
    }
    let denom = (n - 2) as f64;
    let mut trace = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            pooled[i][j] /= denom;
        }
        trace += pooled[i][i];
    }
    let ridge = if trace > 0.0 { 1e-8 * trace / dim as f64 } else { 1e-12 };
    for (i, row) in pooled.iter_mut().enumerate() {
        row[i] += ridge;
    }
    let delta: Vec<f64> = ma.iter().zip(&mb).map(|(x, y)| x - y).collect();
    let t2 = if delta.iter().all(|&d| d == 0.0) {
        0.0
    } else {
        let x = solve(pooled, delta.clone()).ok_or(StatsError::DimTooHigh { dim, n })?;
        let quad: f64 = delta.iter().zip(&x).map(|(d, xi)| d * xi).sum();
        (na as f64 * nb as f64 / n as f64) * quad.max(0.0)
    };
    let df1 = dim as f64;
    let df2 = (n - dim - 1) as f64;
    let f_stat = t2 * df2 / (df1 * (n as f64 - 2.0));
    let p_value = if t2 == 0.0 {
        1.0
    } else {
        let dist = FisherSnedecor::new(df1, df2).expect("valid dof");
        (1.0 - dist.cdf(f_stat)).clamp(0.0, 1.0)
    };
    Ok(TestResult {
        statistic: t2,
        df1,
        df2: Some(df2),
        p_value,
        low_expected_warning: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gaussian_clusters;

    #[test]
    fn chi2_identical_rows_give_p_one() {
        let t = ContingencyTable { counts: vec![vec![10, 20, 30], vec![10, 20, 30]] };
        let r = chi_squared_skill_test(&t).unwrap();
        assert!(r.statistic.abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi2_disjoint_profiles_highly_significant() {
        // community A uses skills 1-5 only, B uses 6-10 only, 50 counts each
        let mut a = vec![0u64; 10];
        let mut b = vec![0u64; 10];
        for i in 0..5 {
            a[i] = 10;
            b[i + 5] = 10;
        }
        let r = chi_squared_skill_test(&ContingencyTable { counts: vec![a, b] }).unwrap();
        assert!((r.statistic - 100.0).abs() < 1e-9, "statistic {}", r.statistic);
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn chi2_degenerate_and_permutation_invariance() {
        let t = ContingencyTable { counts: vec![vec![1, 2, 3]] };
        assert!(matches!(chi_squared_skill_test(&t), Err(StatsError::Degenerate)));
        let t1 = ContingencyTable { counts: vec![vec![5, 1, 9], vec![2, 8, 4]] };
        let t2 = ContingencyTable { counts: vec![vec![4, 8, 2], vec![9, 1, 5]] };
        let (r1, r2) = (
            chi_squared_skill_test(&t1).unwrap(),
            chi_squared_skill_test(&t2).unwrap(),
        );
        assert!((r1.statistic - r2.statistic).abs() < 1e-10);
    }

    #[test]
    fn pca_rank_one_data() {
        let points: Vec<Vec<f64>> =
            (0..20).map(|i| vec![i as f64, 2.0 * i as f64, -0.5 * i as f64]).collect();
        let r = pca(&points, 2).unwrap();
        let total: f64 = r.explained_variance.iter().sum();
        assert!(r.explained_variance[0] / total >= 1.0 - 1e-10);
    }

    #[test]
    fn pca_reconstruction_of_exact_rank_data() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // rank-2 data in 4D
        let b1: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b2: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let points: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let (a, c) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                (0..4).map(|j| a * b1[j] + c * b2[j]).collect()
            })
            .collect();
        let r = pca(&points, 2).unwrap();
        for (p, proj) in points.iter().zip(&r.projected) {
            for j in 0..4 {
                let recon: f64 = r.mean[j]
                    + (0..2).map(|c| proj[c] * r.components[c][j]).sum::<f64>();
                assert!((recon - p[j]).abs() <= 1e-8, "recon {recon} vs {}", p[j]);
            }
        }
    }

    #[test]
    fn pca_isotropic_cloud_balanced_variance() {
        let (points, _) = gaussian_clusters(1, 1000, 2, 0.0, 33).unwrap();
        let r = pca(&points, 2).unwrap();
        let (v0, v1) = (r.explained_variance[0], r.explained_variance[1]);
        assert!(v1 / v0 > 0.85, "variances {v0} vs {v1}");
    }

    #[test]
    fn pca_invariant_under_reordering() {
        let (mut points, _) = gaussian_clusters(2, 20, 3, 5.0, 4).unwrap();
        let r1 = pca(&points, 2).unwrap();
        points.reverse();
        let r2 = pca(&points, 2).unwrap();
        for (a, b) in r1.components.iter().zip(&r2.components) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn kmeans_recovers_three_blobs() {
        let (points, labels) = gaussian_clusters(3, 40, 2, 20.0, 7).unwrap();
        let sel = kmeans_davies_bouldin(&points, (2, 6), 10, 11).unwrap();
        assert_eq!(sel.best_k, 3);
        let u = crate::community::Partition::from_labels(&sel.assignment);
        let v = crate::community::Partition::from_labels(&labels);
        assert_eq!(crate::alignment::adjusted_rand(&u, &v).unwrap(), 1.0);
    }

    #[test]
    fn kmeans_rejects_degenerate_data() {
        let points = vec![vec![1.0, 1.0]; 10];
        assert!(matches!(
            kmeans_davies_bouldin(&points, (2, 5), 3, 1),
            Err(StatsError::DegenerateData { .. })
        ));
    }

    #[test]
    fn kmeans_bad_range_rejected() {
        let (points, _) = gaussian_clusters(2, 5, 2, 10.0, 1).unwrap();
        assert!(matches!(
            kmeans_davies_bouldin(&points, (1, 3), 3, 1),
            Err(StatsError::BadKRange { .. })
        ));
    }

    #[test]
    fn hotelling_identical_samples() {
        let (a, _) = gaussian_clusters(1, 20, 2, 0.0, 3).unwrap();
        let r = hotelling_t2(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn hotelling_separated_samples() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<Vec<f64>> =
            (0..50).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let b: Vec<Vec<f64>> =
            (0..50).map(|_| vec![5.0 + rng.gen::<f64>(), 5.0 + rng.gen::<f64>()]).collect();
        let r = hotelling_t2(&a, &b).unwrap();
        assert!(r.p_value < 1e-6, "p = {}", r.p_value);
    }

    #[test]
    fn hotelling_too_few_samples() {
        let a = vec![vec![0.0, 0.0]];
        let b = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        assert!(matches!(hotelling_t2(&a, &b), Err(StatsError::TooFewSamples)));
    }

    #[test]
    fn hotelling_null_calibration() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let trials = 500;
        let mut rejections = 0;
        for _ in 0..trials {
            let a: Vec<Vec<f64>> = (0..15)
                .map(|_| vec![rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5])
                .collect();
            let b: Vec<Vec<f64>> = (0..15)
                .map(|_| vec![rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5])
                .collect();
            if hotelling_t2(&a, &b).unwrap().p_value < 0.05 {
                rejections += 1;
            }
        }
        let frac = rejections as f64 / trials as f64;
        assert!((0.01..=0.10).contains(&frac), "rejection rate {frac}");
    }

    #[test]
    fn hotelling_affine_invariance() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, _) = gaussian_clusters(1, 25, 2, 0.0, 5).unwrap();
        let (b, _) = gaussian_clusters(1, 25, 2, 0.0, 6).unwrap();
        let r1 = hotelling_t2(&a, &b).unwrap();
        // random nonsingular affine map applied to both samples
        let m = [[1.7, 0.4], [rng.gen_range(-0.5..0.5), 2.2]];
        let t = [3.0, -1.0];
        let map = |s: &[Vec<f64>]| -> Vec<Vec<f64>> {
            s.iter()
                .map(|p| {
                    (0..2)
                        .map(|i| m[i][0] * p[0] + m[i][1] * p[1] + t[i])
                        .collect()
                })
                .collect()
        };
        let r2 = hotelling_t2(&map(&a), &map(&b)).unwrap();
        let rel = (r1.statistic - r2.statistic).abs() / r1.statistic.max(1e-12);
        assert!(rel <= 1e-6, "T2 {} vs {}", r1.statistic, r2.statistic);
    }
}
