//! Weighted Louvain modularity optimization, repeated-seeded consensus via a
//! co-assignment matrix, and hierarchical consolidation into a final
//! partition.

use crate::matrix::ProjectionMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

/// Seed-derivation increment: 64-bit golden-ratio constant. Any fixed odd
/// constant works; this one is pinned for reproducibility.
pub const SEED_STRIDE: u64 = 0x9E3779B97F4A7C15;

#[derive(Debug, Error)]
pub enum CommunityError {
    #[error("graph must be non-empty")]
    EmptyGraph,
    #[error("runs must be >= 1")]
    BadArgument,
    #[error("adjacency must be square and symmetric with zero diagonal: {0}")]
    BadAdjacency(String),
    #[error("partition covers {got} nodes, graph has {want}")]
    PartitionMismatch { got: usize, want: usize },
    #[error("distance matrix must be symmetric, nonnegative, zero-diagonal")]
    BadDistance,
}

/// Undirected weighted graph with zero diagonal (no self-loops).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    pub labels: Vec<String>,
    pub adjacency: Vec<Vec<f64>>,
}

impl WeightedGraph {
    pub fn new(labels: Vec<String>, adjacency: Vec<Vec<f64>>) -> Result<Self, CommunityError> {
        let n = labels.len();
        if adjacency.len() != n || adjacency.iter().any(|r| r.len() != n) {
            return Err(CommunityError::BadAdjacency(format!("expected {n}x{n}")));
        }
        for i in 0..n {
            if adjacency[i][i] != 0.0 {
                return Err(CommunityError::BadAdjacency(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                if adjacency[i][j] < 0.0 {
                    return Err(CommunityError::BadAdjacency(format!("negative weight at ({i},{j})")));
                }
                if (adjacency[i][j] - adjacency[j][i]).abs() > 1e-10 {
                    return Err(CommunityError::BadAdjacency(format!("asymmetry at ({i},{j})")));
                }
            }
        }
        Ok(Self { labels, adjacency })
    }

    /// Graph view of a projection matrix: diagonal (self-weight) dropped,
    /// tiny negative numerical noise clamped to zero.
    pub fn from_projection(p: &ProjectionMatrix) -> Result<Self, CommunityError> {
        let n = p.len();
        let mut adjacency = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let v = 0.5 * (p.values[i][j] + p.values[j][i]);
                if v < -1e-10 {
                    return Err(CommunityError::BadAdjacency(format!(
                        "negative weight {v} at ({i},{j})"
                    )));
                }
                adjacency[i][j] = v.max(0.0);
            }
        }
        Self::new(p.labels.clone(), adjacency)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn weighted_degree(&self, i: usize) -> f64 {
        self.adjacency[i].iter().sum()
    }

    /// Sum over ordered pairs: equals twice the total edge weight.
    pub fn total_weight2(&self) -> f64 {
        self.adjacency.iter().flatten().sum()
    }
}

/// Node -> community assignment with contiguous 0-based community ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub assignment: Vec<usize>,
}

impl Partition {
    /// Relabels communities to contiguous ids in first-occurrence order.
    pub fn from_labels(raw: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let mut next = 0usize;
        let assignment = raw
            .iter()
            .map(|&c| {
                *map.entry(c).or_insert_with(|| {
                    let id = next;
                    next += 1;
                    id
                })
            })
            .collect();
        Self { assignment }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn community_count(&self) -> usize {
        self.assignment.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.community_count()];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

/// Weighted modularity Q = sum_c [ S_in/2m - gamma (S_tot/2m)^2 ].
pub fn modularity(g: &WeightedGraph, p: &Partition, resolution: f64) -> Result<f64, CommunityError> {
    if p.len() != g.len() {
        return Err(CommunityError::PartitionMismatch { got: p.len(), want: g.len() });
    }
    let m2 = g.total_weight2();
    if m2 == 0.0 {
        return Ok(0.0);
    }
    let c = p.community_count();
    let mut s_in = vec![0.0; c];
    let mut s_tot = vec![0.0; c];
    for i in 0..g.len() {
        let ci = p.assignment[i];
        s_tot[ci] += g.weighted_degree(i);
        for j in 0..g.len() {
            if p.assignment[j] == ci {
                s_in[ci] += g.adjacency[i][j];
            }
        }
    }
    let q = (0..c)
        .map(|k| s_in[k] / m2 - resolution * (s_tot[k] / m2).powi(2))
        .sum();
    Ok(q)
}

/// Weighted Louvain at a given resolution. Node visit order is shuffled by
/// `seed`; the result is deterministic given (graph, resolution, seed).
pub fn louvain(g: &WeightedGraph, resolution: f64, seed: u64) -> Result<Partition, CommunityError> {
    if g.is_empty() {
        return Err(CommunityError::EmptyGraph);
    }
    let n = g.len();
    let m2 = g.total_weight2();
    if m2 == 0.0 {
        // All-zero weights: every node its own community (defined result).
        return Ok(Partition { assignment: (0..n).collect() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Current condensed graph: adjacency list + self-loop weights.
    let mut adj: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && g.adjacency[i][j] > 0.0)
                .map(|j| (j, g.adjacency[i][j]))
                .collect()
        })
        .collect();
    let mut self_loops: Vec<f64> = vec![0.0; n];
    // Mapping original node -> current condensed node.
    let mut node_of: Vec<usize> = (0..n).collect();

    loop {
        let nc = adj.len();
        let degree: Vec<f64> = (0..nc)
            .map(|i| adj[i].iter().map(|&(_, w)| w).sum::<f64>() + self_loops[i])
            .collect();
        let mut community: Vec<usize> = (0..nc).collect();
        let mut tot: Vec<f64> = degree.clone();
        let mut order: Vec<usize> = (0..nc).collect();
        order.shuffle(&mut rng);

        let mut moved_any = false;
        let mut prev_q = pass_modularity(&adj, &self_loops, &community, &degree, m2, resolution);
        loop {
            let mut moved = false;
            for &node in &order {
                let current = community[node];
                tot[current] -= degree[node];
                // Weight from node to each neighbor community.
                let mut links: std::collections::HashMap<usize, f64> =
                    std::collections::HashMap::new();
                for &(nb, w) in &adj[node] {
                    *links.entry(community[nb]).or_insert(0.0) += w;
                }
                let stay_gain = gain(links.get(&current).copied().unwrap_or(0.0), tot[current], degree[node], m2, resolution);
                let mut best_c = current;
                let mut best_gain = stay_gain;
                let mut cands: Vec<(usize, f64)> = links.into_iter().collect();
                cands.sort_by_key(|&(c, _)| c);
                for (c, k_in) in cands {
                    if c == current {
                        continue;
                    }
                    let gn = gain(k_in, tot[c], degree[node], m2, resolution);
                    if gn > best_gain + 1e-12 {
                        best_gain = gn;
                        best_c = c;
                    }
                }
                tot[best_c] += degree[node];
                if best_c != current {
                    community[node] = best_c;
                    moved = true;
                    moved_any = true;
                }
            }
            if !moved {
                break;
            }
            // Modularity never decreases between passes.
            let q = pass_modularity(&adj, &self_loops, &community, &degree, m2, resolution);
            debug_assert!(q >= prev_q - 1e-9, "modularity dropped {prev_q} -> {q}");
            prev_q = q;
        }
        if !moved_any {
            break;
        }

        // Aggregate communities into a condensed graph.
        let mut remap = std::collections::HashMap::new();
        let mut next = 0usize;
        let compact: Vec<usize> = community
            .iter()
            .map(|&c| {
                *remap.entry(c).or_insert_with(|| {
                    let id = next;
                    next += 1;
                    id
                })
            })
            .collect();
        let cn = next;
        let mut new_weights: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); cn];
        let mut new_self = vec![0.0; cn];
        for i in 0..nc {
            let ci = compact[i];
            new_self[ci] += self_loops[i];
            for &(j, w) in &adj[i] {
                let cj = compact[j];
                if ci == cj {
                    // Each undirected edge appears twice in the list.
                    new_self[ci] += w;
                } else {
                    *new_weights[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        adj = new_weights
            .into_iter()
            .map(|m| m.into_iter().collect())
            .collect();
        self_loops = new_self;
        for t in node_of.iter_mut() {
            *t = compact[*t];
        }
        if cn == nc {
            break;
        }
    }
    Ok(Partition::from_labels(&node_of))
}

/// Modularity change of placing a detached node with degree `k_i` into a
/// community, up to the constant factor 2/m2: k_in - gamma * tot_c * k_i / m2.
fn gain(k_in: f64, tot_c: f64, k_i: f64, m2: f64, resolution: f64) -> f64 {
    k_in - resolution * tot_c * k_i / m2
}

fn pass_modularity(
    adj: &[Vec<(usize, f64)>],
    self_loops: &[f64],
    community: &[usize],
    degree: &[f64],
    m2: f64,
    resolution: f64,
) -> f64 {
    let c = community.iter().copied().max().unwrap_or(0) + 1;
    let mut s_in = vec![0.0; c];
    let mut s_tot = vec![0.0; c];
    for i in 0..adj.len() {
        let ci = community[i];
        s_tot[ci] += degree[i];
        s_in[ci] += self_loops[i];
        for &(j, w) in &adj[i] {
            if community[j] == ci {
                s_in[ci] += w;
            }
        }
    }
    (0..c)
        .map(|k| s_in[k] / m2 - resolution * (s_tot[k] / m2).powi(2))
        .sum()
}

/// One agglomerative merge: clusters `a` and `b` (scipy-style ids: leaves are
/// 0..n, merge step s creates cluster n+s) joined at `height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Partition obtained by applying the first `k` merges.
    pub fn cut_after(&self, k: usize) -> Partition {
        let n = self.n_leaves;
        let mut parent: Vec<usize> = (0..n + k).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (s, m) in self.merges.iter().take(k).enumerate() {
            let ra = find(&mut parent, m.a);
            let rb = find(&mut parent, m.b);
            parent[ra] = n + s;
            parent[rb] = n + s;
        }
        let labels: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
        Partition::from_labels(&labels)
    }

    /// Cut at the largest merge-height gap relative to the final merge
    /// height; ties broken toward fewer clusters. A flat dendrogram (all
    /// heights zero) collapses to one cluster.
    pub fn cut_by_gap(&self) -> Partition {
        let m = self.merges.len();
        if m == 0 {
            return Partition { assignment: vec![0; self.n_leaves] };
        }
        let h_max = self.merges.last().unwrap().height;
        if h_max <= 0.0 {
            return self.cut_after(m);
        }
        let mut best_i = 0usize;
        let mut best_gap = f64::NEG_INFINITY;
        let mut prev = 0.0f64;
        for (i, merge) in self.merges.iter().enumerate() {
            let gap = (merge.height - prev) / h_max;
            if gap >= best_gap {
                best_gap = gap;
                best_i = i; // ties -> later cut -> fewer clusters
            }
            prev = merge.height;
        }
        // Apply every merge below the largest jump.
        self.cut_after(best_i)
    }

    /// Nested JSON tree with heights.
    pub fn to_json_tree(&self) -> serde_json::Value {
        use serde_json::json;
        let n = self.n_leaves;
        let mut nodes: Vec<serde_json::Value> =
            (0..n).map(|i| json!({ "leaf": i })).collect();
        for m in &self.merges {
            let a = nodes[m.a].clone();
            let b = nodes[m.b].clone();
            nodes.push(json!({ "height": m.height, "size": m.size, "children": [a, b] }));
        }
        nodes.pop().unwrap_or(serde_json::Value::Null)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    Ward,
    Average,
}

/// Agglomerative clustering of a distance matrix. Ward uses the
/// Lance-Williams recurrence on squared distances with sqrt heights.
pub fn ward_cluster(dist: &[Vec<f64>]) -> Result<Dendrogram, CommunityError> {
    linkage_cluster(dist, Linkage::Ward)
}

pub fn linkage_cluster(dist: &[Vec<f64>], linkage: Linkage) -> Result<Dendrogram, CommunityError> {
    let n = dist.len();
    for i in 0..n {
        if dist[i].len() != n || dist[i][i] != 0.0 {
            return Err(CommunityError::BadDistance);
        }
        for j in 0..n {
            if dist[i][j] < 0.0 || (dist[i][j] - dist[j][i]).abs() > 1e-10 {
                return Err(CommunityError::BadDistance);
            }
        }
    }
    // Work on squared distances for Ward, raw for average linkage.
    let mut d: Vec<Vec<f64>> = match linkage {
        Linkage::Ward => dist
            .iter()
            .map(|r| r.iter().map(|&x| x * x).collect())
            .collect(),
        Linkage::Average => dist.to_vec(),
    };
    let mut active: Vec<usize> = (0..n).collect(); // positions into d
    let mut cluster_id: Vec<usize> = (0..n).collect();
    let mut sizes: Vec<f64> = vec![1.0; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        // argmin over active pairs, lexicographic tie-break
        let mut best = (0usize, 1usize);
        let mut best_d = f64::INFINITY;
        for ai in 0..active.len() {
            for aj in (ai + 1)..active.len() {
                let v = d[active[ai]][active[aj]];
                if v < best_d {
                    best_d = v;
                    best = (ai, aj);
                }
            }
        }
        let (ai, aj) = best;
        let (pi, pj) = (active[ai], active[aj]);
        let (ni, nj) = (sizes[pi], sizes[pj]);
        let height = match linkage {
            Linkage::Ward => best_d.max(0.0).sqrt(),
            Linkage::Average => best_d,
        };
        merges.push(Merge {
            a: cluster_id[pi],
            b: cluster_id[pj],
            height,
            size: (ni + nj) as usize,
        });
        // Lance-Williams update into slot pi.
        for &pk in active.iter() {
            if pk == pi || pk == pj {
                continue;
            }
            let nk = sizes[pk];
            let updated = match linkage {
                Linkage::Ward => {
                    ((ni + nk) * d[pi][pk] + (nj + nk) * d[pj][pk] - nk * d[pi][pj])
                        / (ni + nj + nk)
                }
                Linkage::Average => (ni * d[pi][pk] + nj * d[pj][pk]) / (ni + nj),
            };
            d[pi][pk] = updated;
            d[pk][pi] = updated;
        }
        sizes[pi] = ni + nj;
        cluster_id[pi] = n + step;
        active.remove(aj);
    }
    Ok(Dendrogram { n_leaves: n, merges })
}

/// Co-assignment matrix, dendrogram, and consolidated final partition.
#[derive(Debug, Clone)]
pub struct ConsensusResult {
    pub coassignment: Vec<Vec<f64>>,
    pub dendrogram: Dendrogram,
    pub final_partition: Partition,
    pub runs: usize,
}

pub struct ConsensusConfig {
    pub runs: usize,
    pub resolutions: Vec<f64>,
    pub master_seed: u64,
    pub linkage: Linkage,
    pub threads: usize,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            runs: 100,
            resolutions: vec![0.5, 1.0, 1.5, 2.0],
            master_seed: 0,
            linkage: Linkage::Ward,
            threads: 1,
        }
    }
}

/// Repeated seeded Louvain runs accumulated into a co-assignment matrix,
/// consolidated by hierarchical clustering of 1 - coassignment.
///
/// Run r uses seed `master_seed ^ (r * SEED_STRIDE)` and resolution
/// `resolutions[r % len]`; parallel execution accumulates integer counts, so
/// the output is identical for any thread count.
pub fn consensus_partition(
    g: &WeightedGraph,
    config: &ConsensusConfig,
) -> Result<ConsensusResult, CommunityError> {
    if config.runs == 0 {
        return Err(CommunityError::BadArgument);
    }
    if g.is_empty() {
        return Err(CommunityError::EmptyGraph);
    }
    let n = g.len();
    let resolutions = if config.resolutions.is_empty() {
        vec![1.0]
    } else {
        config.resolutions.clone()
    };
    let threads = config.threads.max(1).min(config.runs);

    let count_chunk = |runs: std::ops::Range<usize>| -> Result<Vec<Vec<u64>>, CommunityError> {
        let mut counts = vec![vec![0u64; n]; n];
        for r in runs {
            let seed = config.master_seed ^ (r as u64).wrapping_mul(SEED_STRIDE);
            let resolution = resolutions[r % resolutions.len()];
            let p = louvain(g, resolution, seed)?;
            for i in 0..n {
                for j in 0..n {
                    if p.assignment[i] == p.assignment[j] {
                        counts[i][j] += 1;
                    }
                }
            }
        }
        Ok(counts)
    };

    let counts: Vec<Vec<u64>> = if threads == 1 {
        count_chunk(0..config.runs)?
    } else {
        let chunk = config.runs.div_ceil(threads);
        let partials: Vec<Result<Vec<Vec<u64>>, CommunityError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let lo = t * chunk;
                    let hi = ((t + 1) * chunk).min(config.runs);
                    let f = &count_chunk;
                    scope.spawn(move || f(lo..hi))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        let mut total = vec![vec![0u64; n]; n];
        for p in partials {
            let p = p?;
            for i in 0..n {
                for j in 0..n {
                    total[i][j] += p[i][j];
                }
            }
        }
        total
    };

    let runs_f = config.runs as f64;
    let coassignment: Vec<Vec<f64>> = counts
        .iter()
        .map(|r| r.iter().map(|&c| c as f64 / runs_f).collect())
        .collect();
    let dist: Vec<Vec<f64>> = coassignment
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.iter()
                .enumerate()
                .map(|(j, &c)| if i == j { 0.0 } else { (1.0 - c).max(0.0) })
                .collect()
        })
        .collect();
    let dendrogram = linkage_cluster(&dist, config.linkage)?;
    let final_partition = dendrogram.cut_by_gap();
    Ok(ConsensusResult { coassignment, dendrogram, final_partition, runs: config.runs })
}
