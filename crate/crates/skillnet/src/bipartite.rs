//! Construction of the two measured bipartite matrices: skills x datasets
//! (skill requirement counts) and datasets x modules (essential-weight
//! importance).

use crate::ingest::{AnnotationSet, PruningRecord, SkillCatalog};
use crate::matrix::BipartiteMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BipartiteError {
    #[error("records carry mixed strategies: {0} vs {1}")]
    StrategyMismatch(String, String),
    #[error("records carry mixed sparsity ratios: {0} vs {1}")]
    SparsityMismatch(f64, f64),
    #[error("module sets differ between records for '{first}' and '{second}'")]
    ModuleMismatch { first: String, second: String },
    #[error("duplicate dataset '{0}' in records")]
    DuplicateDataset(String),
    #[error("no records given")]
    EmptyInput,
    #[error("axis label mismatch: {0}")]
    AxisMismatch(String),
}

/// Skills x datasets count matrix: entry (i, j) is the number of annotated
/// questions in dataset j that require skill i.
pub fn build_sd(annotations: &AnnotationSet, catalog: &SkillCatalog) -> BipartiteMatrix {
    let datasets = annotations.dataset_ids();
    let col_index: std::collections::HashMap<&str, usize> =
        datasets.iter().enumerate().map(|(j, d)| (d.as_str(), j)).collect();
    let mut values = vec![vec![0.0; datasets.len()]; catalog.len()];
    for e in &annotations.entries {
        let j = col_index[e.dataset_id.as_str()];
        for &i in &e.required_skills {
            values[i][j] += 1.0;
        }
    }
    BipartiteMatrix { rows: catalog.names(), cols: datasets, values }
}

/// Datasets x modules importance matrix: entry (j, k) is
/// (1 - |delta acc|) * essential_fraction. Rows ordered by dataset id,
/// columns by (layer, kind).
pub fn build_dm(records: &[PruningRecord]) -> Result<BipartiteMatrix, BipartiteError> {
    let first = records.first().ok_or(BipartiteError::EmptyInput)?;
    for r in &records[1..] {
        if r.strategy != first.strategy {
            return Err(BipartiteError::StrategyMismatch(
                first.strategy.to_string(),
                r.strategy.to_string(),
            ));
        }
        if r.sparsity_ratio != first.sparsity_ratio {
            return Err(BipartiteError::SparsityMismatch(first.sparsity_ratio, r.sparsity_ratio));
        }
        let same = r.per_module.len() == first.per_module.len()
            && r.per_module.keys().zip(first.per_module.keys()).all(|(a, b)| a == b);
        if !same {
            return Err(BipartiteError::ModuleMismatch {
                first: first.dataset_id.clone(),
                second: r.dataset_id.clone(),
            });
        }
    }
    let mut order: Vec<&PruningRecord> = records.iter().collect();
    order.sort_by(|a, b| a.dataset_id.cmp(&b.dataset_id));
    for w in order.windows(2) {
        if w[0].dataset_id == w[1].dataset_id {
            return Err(BipartiteError::DuplicateDataset(w[0].dataset_id.clone()));
        }
    }
    let modules: Vec<String> = first.per_module.keys().map(|m| m.to_string()).collect();
    let values: Vec<Vec<f64>> = order
        .iter()
        .map(|r| {
            let keep = 1.0 - r.delta_acc().abs();
            r.per_module
                .values()
                .map(|c| keep * (c.essential as f64 / c.total as f64))
                .collect()
        })
        .collect();
    let rows = order.iter().map(|r| r.dataset_id.clone()).collect();
    Ok(BipartiteMatrix { rows, cols: modules, values })
}

/// Column normalization (each column distributes unit mass); re-exported here
/// for symmetry with the matrix method.
pub fn normalize_columns(mat: &BipartiteMatrix) -> BipartiteMatrix {
    mat.normalize_columns()
}
