//! Desk-scale pruning stand-in: a two-layer dense tanh network with
//! hand-rolled differentiation, per-weight Taylor/Fisher importance,
//! sparsity-ratio pruning under block or channel strategies, and emission of
//! pruning records consumed by ingest.

use crate::ingest::{ModuleCounts, ModuleId, PruneStrategy, PruningRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::Normal;
use std::collections::BTreeMap;
use thiserror::Error;

/// Hidden width of every toy model.
pub const HIDDEN: usize = 32;
/// W1 rows per module (layer 0); W2 rows form one module each (layer 1).
const ROWS_PER_MODULE: usize = 2;

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input: task has no samples")]
    EmptyInput,
    #[error("sparsity ratio {0} outside [0, 1]")]
    BadRatio(f64),
    #[error("task needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
}

/// Weight coordinate: (layer matrix index, row, column).
pub type Coord = (usize, usize, usize);

/// Per-weight values in the same shape as the model's weight matrices.
pub type WeightMap = Vec<Vec<Vec<f64>>>;

/// input -> tanh(hidden) -> softmax(classes), bias-free.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    /// layers[0]: HIDDEN x input_dim; layers[1]: classes x HIDDEN.
    pub layers: Vec<Vec<Vec<f64>>>,
}

/// Classification task with the skill profile used to synthesize it.
#[derive(Debug, Clone)]
pub struct ToyTask {
    pub dataset_id: String,
    pub samples: Vec<(Vec<f64>, usize)>,
    pub skill_profile: Vec<f64>,
}

impl ToyModel {
    pub fn input_dim(&self) -> usize {
        self.layers[0][0].len()
    }

    pub fn classes(&self) -> usize {
        self.layers[1].len()
    }

    pub fn total_weights(&self) -> usize {
        self.layers.iter().map(|m| m.len() * m[0].len()).sum()
    }

    /// Seeded uniform initialization scaled by 1/sqrt(fan_in).
    pub fn init(input_dim: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |rows: usize, cols: usize| -> Vec<Vec<f64>> {
            let r = 1.0 / (cols as f64).sqrt();
            (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(-r..r)).collect()).collect()
        };
        ToyModel { layers: vec![layer(HIDDEN, input_dim), layer(classes, HIDDEN)] }
    }

    /// Partition of all weight coordinates into modules: layer 0 groups
    /// `ROWS_PER_MODULE` adjacent W1 rows, layer 1 has one module per W2 row.
    pub fn module_map(&self) -> BTreeMap<ModuleId, Vec<Coord>> {
        let mut map: BTreeMap<ModuleId, Vec<Coord>> = BTreeMap::new();
        for (l, m) in self.layers.iter().enumerate() {
            let group = if l == 0 { ROWS_PER_MODULE } else { 1 };
            for (r, row) in m.iter().enumerate() {
                let id = ModuleId::new(l as u32, format!("rows-{:02}", r / group));
                let coords = map.entry(id).or_default();
                for c in 0..row.len() {
                    coords.push((l, r, c));
                }
            }
        }
        map
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ToyError> {
        if x.len() != self.input_dim() {
            return Err(ToyError::Shape(format!(
                "input dim {} != model dim {}",
                x.len(),
                self.input_dim()
            )));
        }
        let hidden: Vec<f64> = self.layers[0]
            .iter()
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>().tanh())
            .collect();
        let logits: Vec<f64> = self.layers[1]
            .iter()
            .map(|row| row.iter().zip(&hidden).map(|(w, h)| w * h).sum())
            .collect();
        Ok((hidden, logits))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, ToyError> {
        let (_, logits) = self.forward(x)?;
        Ok(argmax(&logits))
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn zeros_like(model: &ToyModel) -> WeightMap {
    model.layers.iter().map(|m| vec![vec![0.0; m[0].len()]; m.len()]).collect()
}

/// Cross-entropy of one sample plus its gradient accumulated into `grad`
/// with weight `scale`.
fn backprop_sample(
    model: &ToyModel,
    x: &[f64],
    y: usize,
    grad: &mut WeightMap,
    scale: f64,
) -> Result<f64, ToyError> {
    let (hidden, logits) = model.forward(x)?;
    if y >= logits.len() {
        return Err(ToyError::Shape(format!("label {y} >= classes {}", logits.len())));
    }
    let probs = softmax(&logits);
    let loss = -probs[y].max(1e-300).ln();
    // dL/dz = p - onehot(y)
    let mut dz = probs;
    dz[y] -= 1.0;
    // W2 gradient and hidden backprop
    let mut dh = vec![0.0; hidden.len()];
    for (k, dzk) in dz.iter().enumerate() {
        for (j, h) in hidden.iter().enumerate() {
            grad[1][k][j] += scale * dzk * h;
            dh[j] += dzk * model.layers[1][k][j];
        }
    }
    // tanh' = 1 - h^2, then W1 gradient
    for (j, h) in hidden.iter().enumerate() {
        let da = dh[j] * (1.0 - h * h);
        for (i, xi) in x.iter().enumerate() {
            grad[0][j][i] += scale * da * xi;
        }
    }
    Ok(loss)
}

/// Mean cross-entropy and its gradient over a task.
pub fn loss_and_grad(model: &ToyModel, task: &ToyTask) -> Result<(f64, WeightMap), ToyError> {
    if task.samples.is_empty() {
        return Err(ToyError::EmptyInput);
    }
    let mut grad = zeros_like(model);
    let scale = 1.0 / task.samples.len() as f64;
    let mut loss = 0.0;
    for (x, y) in &task.samples {
        loss += scale * backprop_sample(model, x, *y, &mut grad, scale)?;
    }
    Ok((loss, grad))
}

/// Full-batch gradient descent over the pooled samples of all tasks.
/// Deterministic per seed; `epochs = 0` returns the seeded initialization.
pub fn train_toy_model(tasks: &[ToyTask], seed: u64, epochs: usize) -> Result<ToyModel, ToyError> {
    if tasks.is_empty() || tasks.iter().all(|t| t.samples.is_empty()) {
        return Err(ToyError::EmptyInput);
    }
    let dim = tasks[0].samples.first().map(|(x, _)| x.len()).unwrap_or(0);
    let mut classes = 0;
    for t in tasks {
        for (x, y) in &t.samples {
            if x.len() != dim {
                return Err(ToyError::Shape(format!("input dims {} vs {dim}", x.len())));
            }
            classes = classes.max(y + 1);
        }
    }
    if classes < 2 {
        return Err(ToyError::TooFewClasses(classes));
    }
    let pooled = ToyTask {
        dataset_id: String::new(),
        samples: tasks.iter().flat_map(|t| t.samples.iter().cloned()).collect(),
        skill_profile: Vec::new(),
    };
    let mut model = ToyModel::init(dim, classes, seed);
    let lr = 0.5;
    for _ in 0..epochs {
        let (_, grad) = loss_and_grad(&model, &pooled)?;
        for (m, g) in model.layers.iter_mut().zip(&grad) {
            for (row, grow) in m.iter_mut().zip(g) {
                for (w, gw) in row.iter_mut().zip(grow) {
                    *w -= lr * gw;
                }
            }
        }
    }
    Ok(model)
}

/// Importance from precomputed first-order and per-sample terms, each already
/// multiplied by the weight: |first - 1/2 * sum_x per_sample_x^2|.
pub fn importance_from_terms(first: f64, per_sample: &[f64]) -> f64 {
    let fisher: f64 = 0.5 * per_sample.iter().map(|g| g * g).sum::<f64>();
    (first - fisher).abs()
}

/// Per-weight importance I = |(dL/dw) w - 1/2 sum_x ((dL_x/dw) w)^2| with the
/// mean-loss gradient for the first-order term and per-sample gradients for
/// the Fisher term, accumulated in sample order.
pub fn weight_importance(model: &ToyModel, task: &ToyTask) -> Result<WeightMap, ToyError> {
    if task.samples.is_empty() {
        return Err(ToyError::EmptyInput);
    }
    let (_, mean_grad) = loss_and_grad(model, task)?;
    let mut importance: WeightMap = model
        .layers
        .iter()
        .zip(&mean_grad)
        .map(|(m, g)| {
            m.iter()
                .zip(g)
                .map(|(row, grow)| row.iter().zip(grow).map(|(w, gw)| gw * w).collect())
                .collect()
        })
        .collect();
    // subtract the Fisher term sample by sample, then take |.|
    let mut fisher = zeros_like(model);
    for (x, y) in &task.samples {
        let mut g = zeros_like(model);
        backprop_sample(model, x, *y, &mut g, 1.0)?;
        for l in 0..2 {
            for r in 0..g[l].len() {
                for c in 0..g[l][r].len() {
                    let gw = g[l][r][c] * model.layers[l][r][c];
                    fisher[l][r][c] += 0.5 * gw * gw;
                }
            }
        }
    }
    for l in 0..2 {
        for r in 0..importance[l].len() {
            for c in 0..importance[l][r].len() {
                importance[l][r][c] = (importance[l][r][c] - fisher[l][r][c]).abs();
            }
        }
    }
    Ok(importance)
}

/// One prunable group of weights under a strategy.
fn groups(model: &ToyModel, strategy: PruneStrategy) -> Vec<Vec<Coord>> {
    match strategy {
        // every row of every layer matrix is a block
        PruneStrategy::Block => {
            let mut out = Vec::new();
            for (l, m) in model.layers.iter().enumerate() {
                for (r, row) in m.iter().enumerate() {
                    out.push((0..row.len()).map(|c| (l, r, c)).collect());
                }
            }
            out
        }
        // a channel is hidden unit h: W1 row h plus W2 column h
        PruneStrategy::Channel => (0..HIDDEN)
            .map(|h| {
                let mut g: Vec<Coord> =
                    (0..model.input_dim()).map(|c| (0, h, c)).collect();
                g.extend((0..model.classes()).map(|r| (1, r, h)));
                g
            })
            .collect(),
    }
}

/// Zero out the lowest-importance groups until the target weight fraction is
/// removed. Ties break by ascending group index. Returns the pruned model and
/// per-module essential counts.
pub fn prune_by_sparsity(
    model: &ToyModel,
    importance: &WeightMap,
    tau_ratio: f64,
    strategy: PruneStrategy,
) -> Result<(ToyModel, BTreeMap<ModuleId, ModuleCounts>), ToyError> {
    if !(0.0..=1.0).contains(&tau_ratio) || tau_ratio.is_nan() {
        return Err(ToyError::BadRatio(tau_ratio));
    }
    let groups = groups(model, strategy);
    let mut ranked: Vec<(f64, usize)> = groups
        .iter()
        .enumerate()
        .map(|(i, g)| (g.iter().map(|&(l, r, c)| importance[l][r][c]).sum::<f64>(), i))
        .collect();
    ranked.sort_by(|a, b| a.partial_cmp(b).expect("importance values are finite"));

    let target = (tau_ratio * model.total_weights() as f64).round() as usize;
    let mut pruned = model.clone();
    let mut removed_mask = zeros_like(model); // 1.0 where removed
    let mut removed = 0usize;
    for &(_, gi) in &ranked {
        if removed >= target {
            break;
        }
        for &(l, r, c) in &groups[gi] {
            if removed_mask[l][r][c] == 0.0 {
                removed_mask[l][r][c] = 1.0;
                pruned.layers[l][r][c] = 0.0;
                removed += 1;
            }
        }
    }
    let essential = model
        .module_map()
        .into_iter()
        .map(|(id, coords)| {
            let kept =
                coords.iter().filter(|&&(l, r, c)| removed_mask[l][r][c] == 0.0).count() as u64;
            (id, ModuleCounts { total: coords.len() as u64, essential: kept })
        })
        .collect();
    Ok((pruned, essential))
}

/// Correct-classification fraction on the task's samples.
pub fn evaluate_accuracy(model: &ToyModel, task: &ToyTask) -> Result<f64, ToyError> {
    if task.samples.is_empty() {
        return Err(ToyError::EmptyInput);
    }
    let mut correct = 0usize;
    for (x, y) in &task.samples {
        if model.predict(x)? == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / task.samples.len() as f64)
}

/// One pruning record per task: importance and pruning are task-specific,
/// the base model is shared.
pub fn emit_pruning_records(
    model: &ToyModel,
    tasks: &[ToyTask],
    sparsity: f64,
    strategy: PruneStrategy,
) -> Result<Vec<PruningRecord>, ToyError> {
    let mut records = Vec::with_capacity(tasks.len());
    for task in tasks {
        let importance = weight_importance(model, task)?;
        let (pruned, essential) = prune_by_sparsity(model, &importance, sparsity, strategy)?;
        records.push(PruningRecord {
            dataset_id: task.dataset_id.clone(),
            strategy,
            sparsity_ratio: sparsity,
            acc_base: evaluate_accuracy(model, task)?,
            acc_pruned: evaluate_accuracy(&pruned, task)?,
            per_module: essential,
        });
    }
    Ok(records)
}

/// Flatten a model into a WSNP-serializable snapshot, one tensor per module
/// in coordinate order.
pub fn model_snapshot(
    model: &ToyModel,
    model_tag: &str,
    step_tag: &str,
) -> crate::finetune::WeightSnapshot {
    let tensors = model
        .module_map()
        .into_iter()
        .map(|(id, coords)| {
            let data = coords.iter().map(|&(l, r, c)| model.layers[l][r][c] as f32).collect();
            (id, data)
        })
        .collect();
    crate::finetune::WeightSnapshot {
        tensors,
        model_tag: model_tag.to_string(),
        step_tag: step_tag.to_string(),
    }
}

/// Synthesize a classification task driven by a skill profile: class means
/// live on the profile's active coordinates, inactive coordinates carry only
/// small noise.
pub fn synth_task(
    dataset_id: &str,
    skill_profile: &[f64],
    classes: usize,
    samples_per_class: usize,
    seed: u64,
) -> Result<ToyTask, ToyError> {
    if classes < 2 {
        return Err(ToyError::TooFewClasses(classes));
    }
    if skill_profile.is_empty() || samples_per_class == 0 {
        return Err(ToyError::EmptyInput);
    }
    let dim = skill_profile.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    // class means, scaled by the profile so inactive skills stay near zero
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            (0..dim)
                .map(|j| skill_profile[j] * 2.0 * if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect()
        })
        .collect();
    let mut samples = Vec::with_capacity(classes * samples_per_class);
    for y in 0..classes {
        for _ in 0..samples_per_class {
            let x: Vec<f64> =
                (0..dim).map(|j| means[y][j] + 0.2 * rng.sample(normal)).collect();
            samples.push((x, y));
        }
    }
    Ok(ToyTask {
        dataset_id: dataset_id.to_string(),
        samples,
        skill_profile: skill_profile.to_vec(),
    })
}
