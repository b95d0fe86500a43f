//! Synthetic generators with planted structure: block-model graphs, planted
//! bipartite skill/dataset/module systems, and Gaussian blob clouds. These
//! back tests and let the whole CLI pipeline run without external data.

use crate::community::{Partition, WeightedGraph};
use crate::ingest::{AnnotationEntry, AnnotationSet, ModuleCounts, ModuleId, PruningRecord, CATEGORIES};
use crate::matrix::BipartiteMatrix;
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::Normal;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("empty specification: need at least one block")]
    EmptyBlocks,
    #[error("negative weight or noise in planted spec")]
    NegativeWeight,
    #[error("communities ({communities}) must not exceed min(skills={skills}, modules={modules})")]
    TooManyCommunities { communities: usize, skills: usize, modules: usize },
    #[error("bad cluster shape: k={k}, n_per={n_per}, dim={dim} (all must be >= 1)")]
    BadClusterShape { k: usize, n_per: usize, dim: usize },
}

/// Planted-partition graph specification.
#[derive(Debug, Clone)]
pub struct PlantedSpec {
    pub block_sizes: Vec<usize>,
    pub within_weight: f64,
    pub between_weight: f64,
    pub noise: f64,
    pub seed: u64,
}

// alphabetical within a layer so label order matches (layer, kind) sorting
const MODULE_KINDS: [&str; 7] =
    ["attn-k", "attn-o", "attn-q", "attn-v", "mlp-down", "mlp-gate", "mlp-up"];

/// Module label for the k-th synthetic module: seven kinds cycled per layer.
pub fn module_label(index: usize) -> ModuleId {
    ModuleId {
        layer: (index / MODULE_KINDS.len()) as u32,
        kind: MODULE_KINDS[index % MODULE_KINDS.len()].to_string(),
    }
}

/// Block-structured weighted graph: within-block edges get `within_weight`,
/// cross-block `between_weight`, each plus Gaussian noise truncated at zero.
pub fn planted_partition_graph(spec: &PlantedSpec) -> Result<(WeightedGraph, Partition), SynthError> {
    if spec.block_sizes.is_empty() || spec.block_sizes.iter().any(|&s| s == 0) {
        return Err(SynthError::EmptyBlocks);
    }
    if spec.within_weight < 0.0 || spec.between_weight < 0.0 || spec.noise < 0.0 {
        return Err(SynthError::NegativeWeight);
    }
    let labels: Vec<usize> = spec
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat(b).take(s))
        .collect();
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut adjacency = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let base =
                if labels[i] == labels[j] { spec.within_weight } else { spec.between_weight };
            let w = (base + spec.noise * rng.sample(normal)).max(0.0);
            adjacency[i][j] = w;
            adjacency[j][i] = w;
        }
    }
    let node_labels = (0..n).map(|i| format!("node-{i:03}")).collect();
    let graph = WeightedGraph::new(node_labels, adjacency)
        .expect("construction satisfies graph invariants");
    Ok((graph, Partition::from_labels(&labels)))
}

/// Planted bipartite system returned by [`planted_bipartite`].
#[derive(Debug, Clone)]
pub struct PlantedBipartite {
    pub sd: BipartiteMatrix,
    pub dm: BipartiteMatrix,
    pub module_partition: Partition,
    /// Community driving each skill.
    pub skill_communities: Vec<usize>,
    /// Category index (into [`CATEGORIES`]) per skill, drawn independently
    /// of the planted communities.
    pub category_labels: Vec<usize>,
}

/// Plant `communities` disjoint skill subsets that drive disjoint module
/// groups through the dataset layer: skills load on the datasets of their
/// community, and those datasets leave the community's modules essential.
pub fn planted_bipartite(
    skills: usize,
    datasets: usize,
    modules: usize,
    communities: usize,
    seed: u64,
) -> Result<PlantedBipartite, SynthError> {
    if communities == 0 || communities > skills.min(modules) || datasets < communities {
        return Err(SynthError::TooManyCommunities { communities, skills, modules });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let skill_communities: Vec<usize> = (0..skills).map(|s| s * communities / skills).collect();
    let dataset_communities: Vec<usize> = (0..datasets).map(|d| d % communities).collect();
    let module_communities: Vec<usize> = (0..modules).map(|m| m * communities / modules).collect();

    let sd_values: Vec<Vec<f64>> = (0..skills)
        .map(|s| {
            (0..datasets)
                .map(|d| {
                    if skill_communities[s] == dataset_communities[d] {
                        rng.gen_range(15.0..25.0_f64).round()
                    } else {
                        rng.gen_range(0.0..1.5_f64).round()
                    }
                })
                .collect()
        })
        .collect();
    let dm_values: Vec<Vec<f64>> = (0..datasets)
        .map(|d| {
            (0..modules)
                .map(|m| {
                    if dataset_communities[d] == module_communities[m] {
                        rng.gen_range(0.6..0.9)
                    } else {
                        rng.gen_range(0.0..0.08)
                    }
                })
                .collect()
        })
        .collect();

    let skill_labels: Vec<String> = (0..skills).map(|s| format!("skill-{s:03}")).collect();
    let dataset_labels: Vec<String> = (0..datasets).map(|d| format!("dataset-{d:03}")).collect();
    let module_labels: Vec<String> = (0..modules).map(|m| module_label(m).to_string()).collect();

    let sd = BipartiteMatrix::new(skill_labels.clone(), dataset_labels.clone(), sd_values)
        .expect("planted counts are nonnegative");
    let dm = BipartiteMatrix::new(dataset_labels, module_labels, dm_values)
        .expect("planted strengths are nonnegative");
    let category_labels: Vec<usize> =
        (0..skills).map(|_| rng.gen_range(0..CATEGORIES.len())).collect();
    Ok(PlantedBipartite {
        sd,
        dm,
        module_partition: Partition::from_labels(&module_communities),
        skill_communities,
        category_labels,
    })
}

/// `k` isotropic unit-variance Gaussian blobs of `n_per` points each, with
/// centroids spaced `separation` apart along the first axis.
pub fn gaussian_clusters(
    k: usize,
    n_per: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<usize>), SynthError> {
    if k == 0 || n_per == 0 || dim == 0 {
        return Err(SynthError::BadClusterShape { k, n_per, dim });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut points = Vec::with_capacity(k * n_per);
    let mut labels = Vec::with_capacity(k * n_per);
    for c in 0..k {
        let offset = c as f64 * separation;
        for _ in 0..n_per {
            let mut p: Vec<f64> = (0..dim).map(|_| rng.sample(normal)).collect();
            p[0] += offset;
            points.push(p);
            labels.push(c);
        }
    }
    Ok((points, labels))
}

/// Annotation entries matching a planted B^SD count matrix exactly: dataset
/// `d` gets one question per count unit, each tagged with the skills whose
/// planted count covers that question index.
pub fn annotations_from_sd(sd: &BipartiteMatrix) -> AnnotationSet {
    let mut entries = Vec::new();
    for (d, dataset) in sd.cols.iter().enumerate() {
        let max_count = sd
            .values
            .iter()
            .map(|row| row[d].round() as usize)
            .max()
            .unwrap_or(0);
        for q in 0..max_count {
            let skills: std::collections::BTreeSet<usize> = sd
                .values
                .iter()
                .enumerate()
                .filter(|(_, row)| (row[d].round() as usize) > q)
                .map(|(s, _)| s)
                .collect();
            if skills.is_empty() {
                continue;
            }
            entries.push(AnnotationEntry {
                dataset_id: dataset.clone(),
                question_id: format!("q{q:04}"),
                required_skills: skills,
            });
        }
    }
    AnnotationSet { entries, r_max: usize::MAX }
}

/// Pruning records matching a planted B^DM matrix: every record shares one
/// strategy/sparsity, per-module essential fractions reproduce the planted
/// strengths at `total` weights per module with Δacc = 0.
pub fn pruning_records_from_dm(dm: &BipartiteMatrix, total: u64) -> Vec<PruningRecord> {
    dm.rows
        .iter()
        .enumerate()
        .map(|(d, dataset)| {
            let per_module: BTreeMap<ModuleId, ModuleCounts> = dm
                .cols
                .iter()
                .enumerate()
                .map(|(m, label)| {
                    let id = ModuleId::parse(label).expect("synthetic labels are valid");
                    let essential = (dm.values[d][m] * total as f64).round() as u64;
                    (id, ModuleCounts { total, essential: essential.min(total) })
                })
                .collect();
            PruningRecord {
                dataset_id: dataset.clone(),
                strategy: crate::ingest::PruneStrategy::Block,
                sparsity_ratio: 0.25,
                acc_base: 0.8,
                acc_pruned: 0.8,
                per_module,
            }
        })
        .collect()
}

/// Category name per skill for an independently drawn label vector.
pub fn category_names(labels: &[usize]) -> Vec<String> {
    labels.iter().map(|&c| CATEGORIES[c].to_string()).collect()
}

/// Shuffle convenience used by CLI synth subcommands: independent category
/// labels for `n` skills.
pub fn independent_categories(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i % CATEGORIES.len()).collect();
    labels.shuffle(&mut rng);
    labels
}
