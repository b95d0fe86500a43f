//! Parsing and validation of all external inputs: skill catalogs, per-question
//! annotations, pruning records, plus a deterministic mock annotation provider.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

/// The four cognitive-function categories a skill may belong to.
pub const CATEGORIES: [&str; 4] = [
    "Cognitive Process (Memory)",
    "Executive Function",
    "Language Communication",
    "Social Cognition",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("duplicate skill name: {0}")]
    DuplicateSkill(String),
    #[error("unknown category '{category}' for skill '{skill}'")]
    BadCategory { skill: String, category: String },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("unknown skill name '{name}' at line {line}")]
    UnknownSkill { line: usize, name: String },
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("duplicate (dataset, question) pair ({dataset}, {question}) at line {line}")]
    DuplicateQuestion { line: usize, dataset: String, question: String },
    #[error("bad counts at line {line}: essential {essential} > total {total} (module {module})")]
    BadCounts { line: usize, module: String, essential: u64, total: u64 },
    #[error("accuracy {value} outside [0,1] at line {line}")]
    BadAccuracy { line: usize, value: f64 },
    #[error("bad sparsity {value} at line {line}")]
    BadSparsity { line: usize, value: f64 },
    #[error("bad module id '{0}': expected <layer>:<kind>")]
    BadModuleId(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Ordered catalog of skills; index i of skill s_i is fixed for the lifetime
/// of an analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillCatalog {
    pub skills: Vec<Skill>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skill {
    pub name: String,
    pub category: String,
}

impl SkillCatalog {
    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.skills.iter().position(|s| s.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.skills.iter().map(|s| s.name.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationEntry {
    pub dataset_id: String,
    pub question_id: String,
    pub required_skills: BTreeSet<usize>,
}

/// Per-question binary skill requirements, capped at `r_max` questions per
/// dataset (first r_max in file order retained).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationSet {
    pub entries: Vec<AnnotationEntry>,
    pub r_max: usize,
}

impl AnnotationSet {
    /// Dataset ids in first-appearance order.
    pub fn dataset_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for e in &self.entries {
            if seen.insert(e.dataset_id.clone()) {
                out.push(e.dataset_id.clone());
            }
        }
        out
    }
}

/// Identity of a weight module: (layer, kind), e.g. layer 7 attn-q.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModuleId {
    pub layer: u32,
    pub kind: String,
}

impl ModuleId {
    pub fn new(layer: u32, kind: impl Into<String>) -> Self {
        Self { layer, kind: kind.into() }
    }

    pub fn parse(s: &str) -> Result<Self, IngestError> {
        let (layer, kind) = s.split_once(':').ok_or_else(|| IngestError::BadModuleId(s.into()))?;
        let layer = layer.parse::<u32>().map_err(|_| IngestError::BadModuleId(s.into()))?;
        if kind.is_empty() {
            return Err(IngestError::BadModuleId(s.into()));
        }
        Ok(Self { layer, kind: kind.to_string() })
    }
}

impl std::fmt::Display for ModuleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.layer, self.kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneStrategy {
    Block,
    Channel,
}

impl std::fmt::Display for PruneStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PruneStrategy::Block => write!(f, "block"),
            PruneStrategy::Channel => write!(f, "channel"),
        }
    }
}

impl std::str::FromStr for PruneStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "block" => Ok(PruneStrategy::Block),
            "channel" => Ok(PruneStrategy::Channel),
            other => Err(format!("unknown strategy '{other}' (expected block|channel)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModuleCounts {
    pub total: u64,
    pub essential: u64,
}

/// One pruning outcome: a (dataset, strategy, sparsity) triple with base and
/// pruned accuracies plus per-module weight counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PruningRecord {
    pub dataset_id: String,
    pub strategy: PruneStrategy,
    pub sparsity_ratio: f64,
    pub acc_base: f64,
    pub acc_pruned: f64,
    pub per_module: BTreeMap<ModuleId, ModuleCounts>,
}

impl PruningRecord {
    pub fn delta_acc(&self) -> f64 {
        self.acc_pruned - self.acc_base
    }
}

#[derive(Deserialize)]
struct SkillFileEntry {
    name: String,
    category: String,
}

pub fn load_skill_catalog(path: &Path) -> Result<SkillCatalog, IngestError> {
    let text = std::fs::read_to_string(path)?;
    parse_skill_catalog(&text)
}

pub fn parse_skill_catalog(text: &str) -> Result<SkillCatalog, IngestError> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| IngestError::ParseError { line: 1, msg: e.to_string() })?;
    let obj = value
        .as_object()
        .ok_or_else(|| IngestError::ParseError { line: 1, msg: "expected a JSON object".into() })?;
    for key in obj.keys() {
        if key != "skills" {
            log::warn!("skills file: ignoring unknown top-level key '{key}'");
        }
    }
    let raw = obj
        .get("skills")
        .ok_or_else(|| IngestError::ParseError { line: 1, msg: "missing 'skills' key".into() })?;
    let entries: Vec<SkillFileEntry> = serde_json::from_value(raw.clone())
        .map_err(|e| IngestError::ParseError { line: 1, msg: e.to_string() })?;
    if entries.is_empty() {
        return Err(IngestError::EmptyInput("skill catalog has no skills".into()));
    }
    let mut seen = HashSet::new();
    let mut skills = Vec::with_capacity(entries.len());
    for e in entries {
        if e.name.trim().is_empty() {
            return Err(IngestError::EmptyInput("empty skill name".into()));
        }
        if !CATEGORIES.contains(&e.category.as_str()) {
            return Err(IngestError::BadCategory { skill: e.name, category: e.category });
        }
        if !seen.insert(e.name.clone()) {
            return Err(IngestError::DuplicateSkill(e.name));
        }
        skills.push(Skill { name: e.name, category: e.category });
    }
    Ok(SkillCatalog { skills })
}

#[derive(Serialize, Deserialize)]
struct AnnotationLine {
    dataset: String,
    question: String,
    skills: Vec<String>,
    #[serde(flatten)]
    extra: serde_json::Map<String, serde_json::Value>,
}

pub fn load_annotations(
    path: &Path,
    catalog: &SkillCatalog,
    r_max: usize,
) -> Result<AnnotationSet, IngestError> {
    let file = std::fs::File::open(path)?;
    load_annotations_from(BufReader::new(file), catalog, r_max)
}

pub fn load_annotations_from<R: BufRead>(
    reader: R,
    catalog: &SkillCatalog,
    r_max: usize,
) -> Result<AnnotationSet, IngestError> {
    let mut name_to_idx: HashMap<&str, usize> = HashMap::new();
    for (i, s) in catalog.skills.iter().enumerate() {
        name_to_idx.insert(s.name.as_str(), i);
    }
    let mut per_dataset: HashMap<String, usize> = HashMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut entries = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: AnnotationLine = serde_json::from_str(&line)
            .map_err(|e| IngestError::ParseError { line: lineno, msg: e.to_string() })?;
        for key in row.extra.keys() {
            log::warn!("annotations line {lineno}: ignoring unknown key '{key}'");
        }
        if !seen.insert((row.dataset.clone(), row.question.clone())) {
            return Err(IngestError::DuplicateQuestion {
                line: lineno,
                dataset: row.dataset,
                question: row.question,
            });
        }
        let mut required_skills = BTreeSet::new();
        for name in &row.skills {
            let idx = *name_to_idx
                .get(name.as_str())
                .ok_or_else(|| IngestError::UnknownSkill { line: lineno, name: name.clone() })?;
            required_skills.insert(idx);
        }
        let count = per_dataset.entry(row.dataset.clone()).or_insert(0);
        if *count >= r_max {
            continue; // first r_max in file order retained
        }
        *count += 1;
        entries.push(AnnotationEntry {
            dataset_id: row.dataset,
            question_id: row.question,
            required_skills,
        });
    }
    Ok(AnnotationSet { entries, r_max })
}

/// Serialize back to the annotations.jsonl format (round-trip inverse of
/// `load_annotations` for sets already within the r_max cap).
pub fn write_annotations<W: Write>(
    mut w: W,
    set: &AnnotationSet,
    catalog: &SkillCatalog,
) -> Result<(), IngestError> {
    for e in &set.entries {
        let line = AnnotationLine {
            dataset: e.dataset_id.clone(),
            question: e.question_id.clone(),
            skills: e
                .required_skills
                .iter()
                .map(|&i| catalog.skills[i].name.clone())
                .collect(),
            extra: serde_json::Map::new(),
        };
        serde_json::to_writer(&mut w, &line)
            .map_err(|e| IngestError::ParseError { line: 0, msg: e.to_string() })?;
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PruningLine {
    dataset: String,
    strategy: String,
    sparsity: f64,
    acc_base: f64,
    acc_pruned: f64,
    modules: BTreeMap<String, PruningModuleLine>,
    #[serde(flatten)]
    extra: serde_json::Map<String, serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct PruningModuleLine {
    total: u64,
    essential: u64,
}

pub fn load_pruning_records(path: &Path) -> Result<Vec<PruningRecord>, IngestError> {
    let file = std::fs::File::open(path)?;
    load_pruning_records_from(BufReader::new(file))
}

pub fn load_pruning_records_from<R: BufRead>(reader: R) -> Result<Vec<PruningRecord>, IngestError> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: PruningLine = serde_json::from_str(&line)
            .map_err(|e| IngestError::ParseError { line: lineno, msg: e.to_string() })?;
        for key in row.extra.keys() {
            log::warn!("pruning line {lineno}: ignoring unknown key '{key}'");
        }
        let strategy: PruneStrategy = row
            .strategy
            .parse()
            .map_err(|msg| IngestError::ParseError { line: lineno, msg })?;
        for &v in &[row.acc_base, row.acc_pruned] {
            if !(0.0..=1.0).contains(&v) {
                return Err(IngestError::BadAccuracy { line: lineno, value: v });
            }
        }
        if !(0.0..=1.0).contains(&row.sparsity) {
            return Err(IngestError::BadSparsity { line: lineno, value: row.sparsity });
        }
        let mut per_module = BTreeMap::new();
        for (key, counts) in row.modules {
            let id = ModuleId::parse(&key)?;
            if counts.total == 0 {
                return Err(IngestError::BadCounts {
                    line: lineno,
                    module: key,
                    essential: counts.essential,
                    total: counts.total,
                });
            }
            if counts.essential > counts.total {
                return Err(IngestError::BadCounts {
                    line: lineno,
                    module: key,
                    essential: counts.essential,
                    total: counts.total,
                });
            }
            per_module.insert(id, ModuleCounts { total: counts.total, essential: counts.essential });
        }
        out.push(PruningRecord {
            dataset_id: row.dataset,
            strategy,
            sparsity_ratio: row.sparsity,
            acc_base: row.acc_base,
            acc_pruned: row.acc_pruned,
            per_module,
        });
    }
    Ok(out)
}

pub fn write_pruning_records<W: Write>(
    mut w: W,
    records: &[PruningRecord],
) -> Result<(), IngestError> {
    for r in records {
        let line = PruningLine {
            dataset: r.dataset_id.clone(),
            strategy: r.strategy.to_string(),
            sparsity: r.sparsity_ratio,
            acc_base: r.acc_base,
            acc_pruned: r.acc_pruned,
            modules: r
                .per_module
                .iter()
                .map(|(id, c)| {
                    (id.to_string(), PruningModuleLine { total: c.total, essential: c.essential })
                })
                .collect(),
            extra: serde_json::Map::new(),
        };
        serde_json::to_writer(&mut w, &line)
            .map_err(|e| IngestError::ParseError { line: 0, msg: e.to_string() })?;
        writeln!(w)?;
    }
    Ok(())
}

fn fnv1a64(text: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic stand-in for the live annotation workflow: maps
/// (question text, seed) to between 1 and 5 skill indices.
pub fn mock_annotation_provider(
    question_text: &str,
    catalog: &SkillCatalog,
    seed: u64,
) -> BTreeSet<usize> {
    let n = catalog.len();
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(question_text) ^ seed);
    let k = rng.gen_range(1..=5usize.min(n.max(1)));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx.into_iter().take(k).collect()
}
