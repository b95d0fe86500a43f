//! Node-role diagnostics within a partition: participation coefficient and
//! within-module degree z-score (weighted Guimera-Amaral form).

use crate::community::{CommunityError, Partition, WeightedGraph};

/// Which degree enters the z-score: the node's within-community weighted
/// degree (standard form, default) or its total weighted degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeMode {
    WithinCommunity,
    Total,
}

/// P_i = 1 - sum_s (k_is / k_i)^2 over weighted degrees. Isolated nodes get 0.
pub fn participation_coefficient(
    g: &WeightedGraph,
    p: &Partition,
) -> Result<Vec<f64>, CommunityError> {
    check_cover(g, p)?;
    let c = p.community_count();
    let mut out = Vec::with_capacity(g.len());
    for i in 0..g.len() {
        let k_i = g.weighted_degree(i);
        if k_i == 0.0 {
            out.push(0.0);
            continue;
        }
        let mut k_is = vec![0.0; c];
        for j in 0..g.len() {
            k_is[p.assignment[j]] += g.adjacency[i][j];
        }
        let s: f64 = k_is.iter().map(|k| (k / k_i).powi(2)).sum();
        out.push(1.0 - s);
    }
    Ok(out)
}

pub fn within_module_zscore(
    g: &WeightedGraph,
    p: &Partition,
) -> Result<Vec<f64>, CommunityError> {
    within_module_zscore_with(g, p, DegreeMode::WithinCommunity)
}

/// Z_i = (k_i - mu_C) / sigma_C with population sigma over the node's
/// community; sigma = 0 maps to Z = 0.
pub fn within_module_zscore_with(
    g: &WeightedGraph,
    p: &Partition,
    mode: DegreeMode,
) -> Result<Vec<f64>, CommunityError> {
    check_cover(g, p)?;
    let n = g.len();
    let degrees: Vec<f64> = (0..n)
        .map(|i| match mode {
            DegreeMode::Total => g.weighted_degree(i),
            DegreeMode::WithinCommunity => (0..n)
                .filter(|&j| p.assignment[j] == p.assignment[i])
                .map(|j| g.adjacency[i][j])
                .sum(),
        })
        .collect();
    let c = p.community_count();
    let mut sum = vec![0.0; c];
    let mut sum2 = vec![0.0; c];
    let mut count = vec![0usize; c];
    for i in 0..n {
        let ci = p.assignment[i];
        sum[ci] += degrees[i];
        sum2[ci] += degrees[i] * degrees[i];
        count[ci] += 1;
    }
    let out = (0..n)
        .map(|i| {
            let ci = p.assignment[i];
            let m = count[ci] as f64;
            let mu = sum[ci] / m;
            let var = (sum2[ci] / m - mu * mu).max(0.0);
            let sigma = var.sqrt();
            if sigma > 0.0 {
                (degrees[i] - mu) / sigma
            } else {
                0.0
            }
        })
        .collect();
    Ok(out)
}

fn check_cover(g: &WeightedGraph, p: &Partition) -> Result<(), CommunityError> {
    if p.len() != g.len() {
        return Err(CommunityError::PartitionMismatch { got: p.len(), want: g.len() });
    }
    Ok(())
}
