use clap::{Args, Parser, Subcommand};
use skillnet::community::{consensus_partition, ConsensusConfig, Partition, WeightedGraph};
use skillnet::finetune::{community_skill_distribution, kl_match_datasets, weight_l2_diff, WeightSnapshot};
use skillnet::ingest::{self, PruneStrategy};
use skillnet::matrix::{Axis, BipartiteMatrix, ProjectionMatrix};
use skillnet::projection::{project_onemode, project_sm, sparsify_spectral};
use skillnet::roles::{participation_coefficient, within_module_zscore};
use skillnet::spectral::{eig_symmetric, spectral_gaps};
use skillnet::stats::{chi_squared_skill_test, hotelling_t2, kmeans_davies_bouldin, pca, ContingencyTable};
use skillnet::synth;
use skillnet::toyprune;
use serde::Deserialize;
use serde_json::json;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Skill-network analysis pipeline: bipartite construction, one-mode
/// projection, consensus communities, roles, alignment metrics, and the toy
/// pruning stand-in.
#[derive(Parser)]
#[command(name = "skillnet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the skills x datasets count matrix from annotations
    BuildSd(BuildSdArgs),
    /// Build the datasets x modules matrix from pruning records
    BuildDm(BuildDmArgs),
    /// Compose B^SM and project to one mode (optionally sparsified)
    Project(ProjectArgs),
    /// Consensus Louvain community detection on a projection matrix
    Communities(CommunitiesArgs),
    /// Eigenvalue spectrum and spectral gaps of a projection matrix
    Spectral(SpectralArgs),
    /// Participation coefficient and within-module z-score per node
    Roles(RolesArgs),
    /// Compare a partition against reference labels
    Align(AlignArgs),
    /// Chi-squared test of community x skill homogeneity
    Chi2(Chi2Args),
    /// PCA + k-means over per-dataset module-sparsity vectors
    Cluster(ClusterArgs),
    /// KL-divergence dataset-to-community matching
    Match(MatchArgs),
    /// Per-module L2 difference between two weight snapshots
    WeightDiff(WeightDiffArgs),
    /// Train the toy model and emit pruning records
    Toyprune(ToypruneArgs),
    /// Generate synthetic inputs with planted structure
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Args)]
struct BuildSdArgs {
    /// Skill catalog JSON file
    #[arg(long)]
    skills: PathBuf,
    /// Annotations JSONL file
    #[arg(long)]
    annotations: PathBuf,
    /// Questions retained per dataset (first in file order)
    #[arg(long, default_value_t = 100)]
    rmax: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct BuildDmArgs {
    /// Pruning records JSONL file
    #[arg(long)]
    pruning: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    sd: PathBuf,
    #[arg(long)]
    dm: PathBuf,
    /// Projection axis: skills (P^S) or modules (P^M)
    #[arg(long)]
    axis: Axis,
    /// Target off-diagonal density for spectral sparsification
    #[arg(long)]
    sparsify: Option<f64>,
    /// Relative tolerance on the preserved largest eigenvalue
    #[arg(long, default_value_t = 0.05)]
    tol: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Also write the composed B^SM matrix (input to chi2/match)
    #[arg(long)]
    sm_out: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct CommunitiesArgs {
    /// Projection matrix JSON file
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Comma-separated resolution cycle
    #[arg(long, default_value = "0.5,1,1.5,2")]
    resolutions: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads (results identical for any count)
    #[arg(long)]
    threads: Option<usize>,
    /// Partition CSV output
    #[arg(short, long)]
    output: PathBuf,
    /// Optional co-assignment matrix JSON output
    #[arg(long)]
    coassign: Option<PathBuf>,
}

#[derive(Args)]
struct SpectralArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// Number of leading gaps to report
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct RolesArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// Partition CSV (node,label)
    #[arg(long)]
    partition: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    partition: PathBuf,
    /// Reference labels CSV (node,label)
    #[arg(long)]
    labels: PathBuf,
    /// Comma-separated metric list: ri,ars,nmi,anmi,jaccard
    #[arg(long, default_value = "ars,anmi,jaccard")]
    metrics: String,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct Chi2Args {
    /// B^SM matrix JSON file
    #[arg(long)]
    sm: PathBuf,
    /// Module partition CSV
    #[arg(long)]
    partition: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    pruning: PathBuf,
    /// Principal components to keep
    #[arg(long, default_value_t = 2)]
    pca: usize,
    #[arg(long, default_value_t = 2)]
    kmin: usize,
    #[arg(long, default_value_t = 10)]
    kmax: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    sd: PathBuf,
    #[arg(long)]
    sm: PathBuf,
    /// Module partition CSV
    #[arg(long)]
    partition: PathBuf,
    /// Datasets reported per community
    #[arg(long, default_value_t = 2)]
    top: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct WeightDiffArgs {
    #[arg(long)]
    before: PathBuf,
    #[arg(long)]
    after: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ToypruneArgs {
    /// Task specification JSON file
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    sparsity: f64,
    #[arg(long, default_value = "block")]
    strategy: PruneStrategy,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Optional WSNP snapshot of the trained (unpruned) model
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// pruning.jsonl output
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Planted bipartite system: sd/dm matrices plus truth files
    PlantedBipartite(PlantedBipartiteArgs),
    /// Planted-partition weighted graph
    PlantedGraph(PlantedGraphArgs),
    /// Gaussian blob point cloud
    Clusters(ClustersArgs),
}

#[derive(Args)]
struct PlantedBipartiteArgs {
    #[arg(long, default_value_t = 53)]
    skills: usize,
    #[arg(long, default_value_t = 174)]
    datasets: usize,
    #[arg(long, default_value_t = 224)]
    modules: usize,
    #[arg(long, default_value_t = 4)]
    communities: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct PlantedGraphArgs {
    /// Comma-separated block sizes
    #[arg(long, default_value = "10,10,10,10")]
    blocks: String,
    #[arg(long, default_value_t = 1.0)]
    within: f64,
    #[arg(long, default_value_t = 0.05)]
    between: f64,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ClustersArgs {
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 50)]
    n_per: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

const EXIT_VALIDATION: u8 = 3;
const EXIT_TOLERANCE: u8 = 4;

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

type CliResult = Result<ExitCode, Box<dyn std::error::Error>>;

/// Seed override from the environment, applied uniformly to every
/// subcommand that takes --seed.
fn effective_seed(flag: u64) -> Result<u64, Box<dyn std::error::Error>> {
    match std::env::var("SKILLNET_SEED") {
        Ok(v) => Ok(v.parse::<u64>().map_err(|_| format!("bad SKILLNET_SEED '{v}'"))?),
        Err(_) => Ok(flag),
    }
}

/// Sidecar provenance record next to every output file.
fn write_meta(output: &Path, command: &str, config: serde_json::Value) -> std::io::Result<()> {
    let mut path = output.as_os_str().to_owned();
    path.push(".meta.json");
    let meta = json!({
        "tool": "skillnet",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
    });
    let mut f = BufWriter::new(File::create(PathBuf::from(path))?);
    serde_json::to_writer_pretty(&mut f, &meta)?;
    writeln!(f)?;
    Ok(())
}

fn open(path: &Path) -> std::io::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

fn create(path: &Path) -> std::io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_partition_csv(path: &Path, nodes: &[String], p: &Partition) -> std::io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "node,label")?;
    for (node, &label) in nodes.iter().zip(&p.assignment) {
        writeln!(w, "{node},{label}")?;
    }
    Ok(())
}

fn read_partition_csv(path: &Path) -> Result<(Vec<String>, Vec<usize>), Box<dyn std::error::Error>> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let mut nodes = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() < 2 {
            return Err(format!("{}: expected node,label rows", path.display()).into());
        }
        nodes.push(record[0].to_string());
        labels.push(record[1].parse::<usize>()?);
    }
    if nodes.is_empty() {
        return Err(format!("{}: no rows", path.display()).into());
    }
    Ok((nodes, labels))
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, Box<dyn std::error::Error>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad value '{t}': {e}").into()))
        .collect()
}

/// Partition read from CSV, aligned to the node order of `expected`.
fn partition_for(
    path: &Path,
    expected: &[String],
) -> Result<Partition, Box<dyn std::error::Error>> {
    let (nodes, labels) = read_partition_csv(path)?;
    if nodes.len() != expected.len() {
        return Err(format!(
            "partition covers {} nodes, matrix has {}",
            nodes.len(),
            expected.len()
        )
        .into());
    }
    let lookup: std::collections::HashMap<&str, usize> =
        nodes.iter().map(|n| n.as_str()).zip(labels.iter().copied()).collect();
    let raw: Vec<usize> = expected
        .iter()
        .map(|n| {
            lookup
                .get(n.as_str())
                .copied()
                .ok_or_else(|| format!("node '{n}' missing from partition"))
        })
        .collect::<Result<_, _>>()?;
    Ok(Partition::from_labels(&raw))
}

fn run(command: Command) -> CliResult {
    match command {
        Command::BuildSd(a) => {
            let catalog = ingest::load_skill_catalog(&a.skills)?;
            let annotations = ingest::load_annotations(&a.annotations, &catalog, a.rmax)?;
            let sd = skillnet::bipartite::build_sd(&annotations, &catalog);
            sd.write_json(create(&a.output)?)?;
            write_meta(
                &a.output,
                "build-sd",
                json!({"skills": a.skills, "annotations": a.annotations, "rmax": a.rmax}),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::BuildDm(a) => {
            let records = ingest::load_pruning_records(&a.pruning)?;
            let dm = skillnet::bipartite::build_dm(&records)?;
            dm.write_json(create(&a.output)?)?;
            write_meta(&a.output, "build-dm", json!({"pruning": a.pruning}))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Project(a) => {
            let seed = effective_seed(a.seed)?;
            let sd = BipartiteMatrix::read_json(open(&a.sd)?)?;
            let dm = BipartiteMatrix::read_json(open(&a.dm)?)?;
            let sm = project_sm(&sd, &dm)?;
            if let Some(sm_path) = &a.sm_out {
                sm.write_json(create(sm_path)?)?;
                write_meta(sm_path, "project", json!({"sd": a.sd, "dm": a.dm}))?;
            }
            let p = project_onemode(&sm, a.axis);
            let (p, met) = match a.sparsify {
                Some(density) => {
                    let outcome = sparsify_spectral(&p, density, a.tol, seed)?;
                    (outcome.matrix, outcome.met_tolerance)
                }
                None => (p, true),
            };
            p.write_json(create(&a.output)?)?;
            write_meta(
                &a.output,
                "project",
                json!({
                    "sd": a.sd, "dm": a.dm, "axis": a.axis, "sparsify": a.sparsify,
                    "tol": a.tol, "seed": seed,
                }),
            )?;
            if met {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("warning: sparsifier missed the eigenvalue tolerance");
                Ok(ExitCode::from(EXIT_TOLERANCE))
            }
        }
        Command::Communities(a) => {
            let seed = effective_seed(a.seed)?;
            let p = ProjectionMatrix::read_json(open(&a.matrix)?)?;
            let g = WeightedGraph::from_projection(&p)?;
            let config = ConsensusConfig {
                runs: a.runs,
                resolutions: parse_f64_list(&a.resolutions)?,
                master_seed: seed,
                threads: a.threads.unwrap_or_else(|| {
                    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
                }),
                ..ConsensusConfig::default()
            };
            let result = consensus_partition(&g, &config)?;
            write_partition_csv(&a.output, &g.labels, &result.final_partition)?;
            write_meta(
                &a.output,
                "communities",
                json!({
                    "matrix": a.matrix, "runs": a.runs, "resolutions": a.resolutions,
                    "seed": seed,
                }),
            )?;
            if let Some(co) = &a.coassign {
                let m = ProjectionMatrix::new(p.axis, g.labels.clone(), result.coassignment)?;
                m.write_json(create(co)?)?;
                write_meta(co, "communities", json!({"matrix": a.matrix, "seed": seed}))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Spectral(a) => {
            let p = ProjectionMatrix::read_json(open(&a.matrix)?)?;
            let spectrum = eig_symmetric(&p)?;
            let gaps = spectral_gaps(&spectrum, a.top.min(spectrum.eigenvalues.len()))?;
            let mut w = create(&a.output)?;
            writeln!(w, "index,eigenvalue,gap,relative_gap")?;
            for (i, ev) in spectrum.eigenvalues.iter().enumerate() {
                if i >= 1 && i <= gaps.gaps.len() {
                    writeln!(w, "{i},{ev},{},{}", gaps.gaps[i - 1], gaps.relative_gaps[i - 1])?;
                } else {
                    writeln!(w, "{i},{ev},,")?;
                }
            }
            drop(w);
            write_meta(&a.output, "spectral", json!({"matrix": a.matrix, "top": a.top}))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Roles(a) => {
            let p = ProjectionMatrix::read_json(open(&a.matrix)?)?;
            let g = WeightedGraph::from_projection(&p)?;
            let partition = partition_for(&a.partition, &g.labels)?;
            let participation = participation_coefficient(&g, &partition)?;
            let zscores = within_module_zscore(&g, &partition)?;
            let mut w = create(&a.output)?;
            writeln!(w, "node,community,participation,zscore")?;
            for (i, node) in g.labels.iter().enumerate() {
                writeln!(
                    w,
                    "{node},{},{},{}",
                    partition.assignment[i], participation[i], zscores[i]
                )?;
            }
            drop(w);
            write_meta(
                &a.output,
                "roles",
                json!({"matrix": a.matrix, "partition": a.partition}),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Align(a) => {
            let (nodes, labels) = read_partition_csv(&a.partition)?;
            let u = Partition::from_labels(&labels);
            let v = partition_for(&a.labels, &nodes)?;
            let mut w = create(&a.output)?;
            writeln!(w, "metric,value")?;
            for metric in a.metrics.split(',').map(str::trim) {
                let value = match metric {
                    "ri" => skillnet::alignment::rand_index(&u, &v)?,
                    "ars" => skillnet::alignment::adjusted_rand(&u, &v)?,
                    "nmi" => skillnet::alignment::nmi(&u, &v)?,
                    "anmi" => skillnet::alignment::adjusted_nmi(&u, &v)?,
                    "jaccard" => skillnet::alignment::jaccard_similarity(&u, &v)?,
                    other => return Err(format!("unknown metric '{other}'").into()),
                };
                writeln!(w, "{metric},{value}")?;
            }
            drop(w);
            write_meta(
                &a.output,
                "align",
                json!({"partition": a.partition, "labels": a.labels, "metrics": a.metrics}),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Chi2(a) => {
            let sm = BipartiteMatrix::read_json(open(&a.sm)?)?;
            let partition = partition_for(&a.partition, &sm.cols)?;
            let c = partition.community_count();
            // contingency: per community, rounded total skill mass
            let counts: Vec<Vec<u64>> = (0..c)
                .map(|comm| {
                    sm.values
                        .iter()
                        .map(|row| {
                            row.iter()
                                .zip(&partition.assignment)
                                .filter(|(_, &l)| l == comm)
                                .map(|(v, _)| v)
                                .sum::<f64>()
                                .round() as u64
                        })
                        .collect()
                })
                .collect();
            let result = chi_squared_skill_test(&ContingencyTable { counts })?;
            let mut w = create(&a.output)?;
            writeln!(w, "statistic,dof,p_value,low_expected_warning")?;
            writeln!(
                w,
                "{},{},{},{}",
                result.statistic, result.df1, result.p_value, result.low_expected_warning
            )?;
            drop(w);
            write_meta(&a.output, "chi2", json!({"sm": a.sm, "partition": a.partition}))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Cluster(a) => {
            let seed = effective_seed(a.seed)?;
            let records = ingest::load_pruning_records(&a.pruning)?;
            if records.len() < 3 {
                return Err("need at least 3 pruning records to cluster".into());
            }
            // per-dataset module-sparsity vectors over the shared module set
            let module_ids: Vec<_> = records[0].per_module.keys().cloned().collect();
            let points: Vec<Vec<f64>> = records
                .iter()
                .map(|r| {
                    module_ids
                        .iter()
                        .map(|id| {
                            let c = &r.per_module[id];
                            1.0 - c.essential as f64 / c.total as f64
                        })
                        .collect()
                })
                .collect();
            let reduced = pca(&points, a.pca.min(module_ids.len()))?;
            let kmax = a.kmax.min(records.len() - 1);
            let selection =
                kmeans_davies_bouldin(&reduced.projected, (a.kmin, kmax), a.restarts, seed)?;
            let mut w = create(&a.output)?;
            let pcs: Vec<String> = (0..reduced.projected[0].len())
                .map(|i| format!("pc{}", i + 1))
                .collect();
            writeln!(w, "dataset,{},cluster", pcs.join(","))?;
            for (i, (r, point)) in records.iter().zip(&reduced.projected).enumerate() {
                let coords: Vec<String> = point.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{},{},{}", r.dataset_id, coords.join(","), selection.assignment[i])?;
            }
            drop(w);
            // pairwise Hotelling between selected clusters
            let clusters = Partition::from_labels(&selection.assignment);
            let mut hotelling = Vec::new();
            let members = clusters.members();
            for i in 0..members.len() {
                for j in (i + 1)..members.len() {
                    let sample = |m: &Vec<usize>| -> Vec<Vec<f64>> {
                        m.iter().map(|&idx| reduced.projected[idx].clone()).collect()
                    };
                    let test = hotelling_t2(&sample(&members[i]), &sample(&members[j]))?;
                    hotelling.push(json!({
                        "clusters": [i, j], "t2": test.statistic, "p_value": test.p_value,
                    }));
                }
            }
            write_meta(
                &a.output,
                "cluster",
                json!({
                    "pruning": a.pruning, "pca": a.pca, "kmin": a.kmin, "kmax": a.kmax,
                    "seed": seed, "best_k": selection.best_k,
                    "davies_bouldin": selection.db_scores, "hotelling": hotelling,
                }),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Match(a) => {
            let sd = BipartiteMatrix::read_json(open(&a.sd)?)?;
            let sm = BipartiteMatrix::read_json(open(&a.sm)?)?;
            let partition = partition_for(&a.partition, &sm.cols)?;
            let profiles = community_skill_distribution(&sm, &partition)?;
            let matches = kl_match_datasets(&sd, &profiles, a.top);
            let mut w = create(&a.output)?;
            writeln!(w, "community,rank,dataset,kl")?;
            for (community, ranked) in &matches {
                for (rank, (dataset, kl)) in ranked.iter().enumerate() {
                    writeln!(w, "{community},{},{dataset},{kl}", rank + 1)?;
                }
            }
            drop(w);
            write_meta(
                &a.output,
                "match",
                json!({"sd": a.sd, "sm": a.sm, "partition": a.partition, "top": a.top}),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::WeightDiff(a) => {
            let before = WeightSnapshot::read_file(&a.before)?;
            let after = WeightSnapshot::read_file(&a.after)?;
            let (diffs, mean) = weight_l2_diff(&before, &after)?;
            let mut w = create(&a.output)?;
            writeln!(w, "module,l2_diff")?;
            for (id, d) in &diffs {
                writeln!(w, "{id},{d}")?;
            }
            writeln!(w, "(mean),{mean}")?;
            drop(w);
            write_meta(
                &a.output,
                "weight-diff",
                json!({"before": a.before, "after": a.after, "mean": mean}),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Toyprune(a) => {
            let seed = effective_seed(a.seed)?;
            let specs: Vec<TaskSpec> = serde_json::from_reader(open(&a.tasks)?)?;
            if specs.is_empty() {
                return Err("tasks file is empty".into());
            }
            let tasks: Result<Vec<_>, _> = specs
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    toyprune::synth_task(
                        &s.dataset_id,
                        &s.skill_profile,
                        s.classes,
                        s.samples_per_class,
                        seed ^ (i as u64 + 1),
                    )
                })
                .collect();
            let tasks = tasks?;
            let model = toyprune::train_toy_model(&tasks, seed, a.epochs)?;
            let records =
                toyprune::emit_pruning_records(&model, &tasks, a.sparsity, a.strategy)?;
            ingest::write_pruning_records(create(&a.output)?, &records)?;
            if let Some(snap) = &a.snapshot {
                toyprune::model_snapshot(&model, "toy", "trained").write_file(snap)?;
            }
            write_meta(
                &a.output,
                "toyprune",
                json!({
                    "tasks": a.tasks, "sparsity": a.sparsity,
                    "strategy": a.strategy.to_string(), "seed": seed, "epochs": a.epochs,
                }),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth(cmd) => run_synth(cmd),
    }
}

#[derive(Deserialize)]
struct TaskSpec {
    dataset_id: String,
    skill_profile: Vec<f64>,
    #[serde(default = "default_classes")]
    classes: usize,
    #[serde(default = "default_samples")]
    samples_per_class: usize,
}

fn default_classes() -> usize {
    2
}

fn default_samples() -> usize {
    30
}

fn run_synth(cmd: SynthCommand) -> CliResult {
    match cmd {
        SynthCommand::PlantedBipartite(a) => {
            let seed = effective_seed(a.seed)?;
            std::fs::create_dir_all(&a.output)?;
            let planted =
                synth::planted_bipartite(a.skills, a.datasets, a.modules, a.communities, seed)?;
            planted.sd.write_json(create(&a.output.join("sd.json"))?)?;
            planted.dm.write_json(create(&a.output.join("dm.json"))?)?;
            // skill catalog with independently drawn categories
            let categories = synth::category_names(&planted.category_labels);
            let catalog = json!({
                "skills": planted
                    .sd
                    .rows
                    .iter()
                    .zip(&categories)
                    .map(|(name, category)| json!({"name": name, "category": category}))
                    .collect::<Vec<_>>(),
            });
            serde_json::to_writer_pretty(create(&a.output.join("skills.json"))?, &catalog)?;
            let catalog = ingest::parse_skill_catalog(&catalog.to_string())?;
            let annotations = synth::annotations_from_sd(&planted.sd);
            ingest::write_annotations(
                create(&a.output.join("annotations.jsonl"))?,
                &annotations,
                &catalog,
            )?;
            let records = synth::pruning_records_from_dm(&planted.dm, 4096);
            ingest::write_pruning_records(create(&a.output.join("pruning.jsonl"))?, &records)?;
            write_partition_csv(
                &a.output.join("module-truth.csv"),
                &planted.dm.cols,
                &planted.module_partition,
            )?;
            write_partition_csv(
                &a.output.join("skill-truth.csv"),
                &planted.sd.rows,
                &Partition::from_labels(&planted.skill_communities),
            )?;
            write_partition_csv(
                &a.output.join("skill-categories.csv"),
                &planted.sd.rows,
                &Partition::from_labels(&planted.category_labels),
            )?;
            write_meta(
                &a.output.join("sd.json"),
                "synth planted-bipartite",
                json!({
                    "skills": a.skills, "datasets": a.datasets, "modules": a.modules,
                    "communities": a.communities, "seed": seed,
                }),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        SynthCommand::PlantedGraph(a) => {
            let seed = effective_seed(a.seed)?;
            std::fs::create_dir_all(&a.output)?;
            let blocks: Vec<usize> = a
                .blocks
                .split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<Result<_, _>>()?;
            let spec = synth::PlantedSpec {
                block_sizes: blocks,
                within_weight: a.within,
                between_weight: a.between,
                noise: a.noise,
                seed,
            };
            let (g, truth) = synth::planted_partition_graph(&spec)?;
            let p = ProjectionMatrix::new(Axis::Modules, g.labels.clone(), g.adjacency.clone())?;
            p.write_json(create(&a.output.join("graph.json"))?)?;
            write_partition_csv(&a.output.join("truth.csv"), &g.labels, &truth)?;
            write_meta(
                &a.output.join("graph.json"),
                "synth planted-graph",
                json!({
                    "blocks": a.blocks, "within": a.within, "between": a.between,
                    "noise": a.noise, "seed": seed,
                }),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        SynthCommand::Clusters(a) => {
            let seed = effective_seed(a.seed)?;
            std::fs::create_dir_all(&a.output)?;
            let (points, labels) =
                synth::gaussian_clusters(a.k, a.n_per, a.dim, a.separation, seed)?;
            let mut w = create(&a.output.join("points.csv"))?;
            let header: Vec<String> = (0..a.dim).map(|i| format!("x{i}")).collect();
            writeln!(w, "{},label", header.join(","))?;
            for (p, l) in points.iter().zip(&labels) {
                let coords: Vec<String> = p.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{},{l}", coords.join(","))?;
            }
            drop(w);
            write_meta(
                &a.output.join("points.csv"),
                "synth clusters",
                json!({
                    "k": a.k, "n_per": a.n_per, "dim": a.dim,
                    "separation": a.separation, "seed": seed,
                }),
            )?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
