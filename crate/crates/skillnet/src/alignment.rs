//! Partition-comparison metrics: Rand index, adjusted Rand, NMI, adjusted NMI
//! (exact expected mutual information), and pair-based Jaccard similarity.

use crate::community::Partition;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("partitions have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("partitions must be non-empty")]
    Empty,
}

/// Pair-wise agreement counts between two partitions of the same elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    /// Pairs together in both partitions.
    pub a: u64,
    /// Pairs apart in both.
    pub b: u64,
    /// Pairs together in U only.
    pub c: u64,
    /// Pairs together in V only.
    pub d: u64,
    pub total: u64,
}

fn contingency(u: &Partition, v: &Partition) -> Result<Vec<Vec<u64>>, AlignmentError> {
    if u.len() != v.len() {
        return Err(AlignmentError::LengthMismatch(u.len(), v.len()));
    }
    if u.is_empty() {
        return Err(AlignmentError::Empty);
    }
    let mut table = vec![vec![0u64; v.community_count()]; u.community_count()];
    for (&cu, &cv) in u.assignment.iter().zip(&v.assignment) {
        table[cu][cv] += 1;
    }
    Ok(table)
}

fn choose2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

pub fn pair_counts(u: &Partition, v: &Partition) -> Result<PairCounts, AlignmentError> {
    let table = contingency(u, v)?;
    let n = u.len() as u64;
    let total = choose2(n);
    let a: u64 = table.iter().flatten().map(|&x| choose2(x)).sum();
    let u_pairs: u64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let v_pairs: u64 = (0..table[0].len())
        .map(|j| choose2(table.iter().map(|r| r[j]).sum()))
        .sum();
    let c = u_pairs - a;
    let d = v_pairs - a;
    let b = total - a - c - d;
    Ok(PairCounts { a, b, c, d, total })
}

pub fn rand_index(u: &Partition, v: &Partition) -> Result<f64, AlignmentError> {
    let pc = pair_counts(u, v)?;
    if pc.total == 0 {
        return Ok(1.0);
    }
    Ok((pc.a + pc.b) as f64 / pc.total as f64)
}

/// Chance-corrected Rand index. Partitions that are both trivial (denominator
/// zero, hence necessarily identical) score 1.
pub fn adjusted_rand(u: &Partition, v: &Partition) -> Result<f64, AlignmentError> {
    let pc = pair_counts(u, v)?;
    let (a, c, d, total) = (pc.a as f64, pc.c as f64, pc.d as f64, pc.total as f64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let u_pairs = a + c;
    let v_pairs = a + d;
    let expected = u_pairs * v_pairs / total;
    let maximum = 0.5 * (u_pairs + v_pairs);
    if maximum == expected {
        return Ok(1.0);
    }
    Ok((a - expected) / (maximum - expected))
}

fn entropy_from_sizes(sizes: &[u64], n: f64) -> f64 {
    sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn mi_from_table(table: &[Vec<u64>], n: f64) -> f64 {
    let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..table[0].len())
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij == 0 {
                continue;
            }
            let nij = nij as f64;
            mi += nij / n * ((nij * n) / (row_sums[i] as f64 * col_sums[j] as f64)).ln();
        }
    }
    mi
}

/// Mutual information in nats.
pub fn mutual_information(u: &Partition, v: &Partition) -> Result<f64, AlignmentError> {
    let table = contingency(u, v)?;
    Ok(mi_from_table(&table, u.len() as f64))
}

/// NMI = 2 MI / (H(U) + H(V)); both-trivial (zero-entropy, identical)
/// partitions score 1.
pub fn nmi(u: &Partition, v: &Partition) -> Result<f64, AlignmentError> {
    let table = contingency(u, v)?;
    let n = u.len() as f64;
    let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..table[0].len())
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let hu = entropy_from_sizes(&row_sums, n);
    let hv = entropy_from_sizes(&col_sums, n);
    if hu + hv == 0.0 {
        return Ok(1.0);
    }
    Ok((2.0 * mi_from_table(&table, n) / (hu + hv)).clamp(0.0, 1.0))
}

/// Exact expected mutual information under random labelings with fixed
/// marginals (hypergeometric model), in nats.
pub fn expected_mutual_information(row_sums: &[u64], col_sums: &[u64], n: u64) -> f64 {
    let nf = n as f64;
    // ln n! table
    let mut lnfact = vec![0.0f64; (n + 1) as usize];
    for i in 1..=n as usize {
        lnfact[i] = lnfact[i - 1] + (i as f64).ln();
    }
    let mut emi = 0.0;
    for &ai in row_sums {
        if ai == 0 {
            continue;
        }
        for &bj in col_sums {
            if bj == 0 {
                continue;
            }
            let lo = 1.max((ai + bj).saturating_sub(n));
            let hi = ai.min(bj);
            for nij in lo..=hi {
                let nij_f = nij as f64;
                let term1 = nij_f / nf * ((nf * nij_f) / (ai as f64 * bj as f64)).ln();
                let ln_prob = lnfact[ai as usize] + lnfact[bj as usize]
                    + lnfact[(n - ai) as usize]
                    + lnfact[(n - bj) as usize]
                    - lnfact[n as usize]
                    - lnfact[nij as usize]
                    - lnfact[(ai - nij) as usize]
                    - lnfact[(bj - nij) as usize]
                    - lnfact[(n + nij - ai - bj) as usize];
                emi += term1 * ln_prob.exp();
            }
        }
    }
    emi
}

/// Adjusted NMI = (MI - E[MI]) / (max(H(U), H(V)) - E[MI]); 1 iff the
/// partitions are identical up to relabeling.
pub fn adjusted_nmi(u: &Partition, v: &Partition) -> Result<f64, AlignmentError> {
    let table = contingency(u, v)?;
    let n = u.len() as u64;
    let nf = n as f64;
    let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..table[0].len())
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    // Identical up to relabeling: every row and column of the contingency
    // table has exactly one nonzero entry.
    let identical = table.iter().all(|r| r.iter().filter(|&&x| x > 0).count() == 1)
        && (0..table[0].len())
            .all(|j| table.iter().filter(|r| r[j] > 0).count() == 1);
    if identical {
        return Ok(1.0);
    }
    let mi = mi_from_table(&table, nf);
    let emi = expected_mutual_information(&row_sums, &col_sums, n);
    let h_max = entropy_from_sizes(&row_sums, nf).max(entropy_from_sizes(&col_sums, nf));
    let denom = h_max - emi;
    if denom.abs() < 1e-15 {
        return Ok(0.0);
    }
    Ok((mi - emi) / denom)
}

/// Pair-based Jaccard: a / (a + c + d); 1 when no co-assigned pairs exist on
/// either side (which forces both partitions to be all singletons).
pub fn jaccard_similarity(u: &Partition, v: &Partition) -> Result<f64, AlignmentError> {
    let pc = pair_counts(u, v)?;
    let denom = pc.a + pc.c + pc.d;
    if denom == 0 {
        return Ok(1.0);
    }
    Ok(pc.a as f64 / denom as f64)
}
