//! `joint-struct` command-line front end.
//!
//! Exit codes: 0 on success, 1 when inputs fail validation or a run fails,
//! 2 on usage errors.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use joint_struct::eval::{evaluate, DEFAULT_PCP_THRESHOLD};
use joint_struct::experiment::{ablate, gridsearch, oracle_check, predict, train_separated, InferenceMode};
use joint_struct::features::{assemble_joint, FeatureMask};
use joint_struct::inference::{InferenceResult, Objective, DEFAULT_MAX_ITER};
use joint_struct::instance::{load_dataset, save_dataset, Instance, JointLabel};
use joint_struct::model::ModelSpec;
use joint_struct::par::Execution;
use joint_struct::ssvm::{bind_ground_truth, train_with, TrainConfig};
use joint_struct::synth::{generate_with, SynthConfig};
use joint_struct::weights::WeightVector;

const SEED_ENV: &str = "JOINT_STRUCT_SEED";

#[derive(Parser)]
#[command(
    name = "joint-struct",
    version,
    about = "Joint human pose and garment attribute estimation"
)]
struct Cli {
    /// Worker threads for instance-parallel stages; 1 runs sequentially.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create or check model files.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Check dataset files.
    #[command(subcommand)]
    Data(DataCommand),
    /// Generate a planted synthetic dataset.
    Synth(SynthArgs),
    /// Train a weight vector.
    Train(TrainArgs),
    /// Run joint inference.
    Infer(InferArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Cross-validated search over α and β.
    Gridsearch(GridArgs),
    /// Joint model against its cross-masked and edge-masked variants.
    Ablate(AblateArgs),
    /// Compare the exact solvers with exhaustive search on small instances.
    OracleCheck(OracleArgs),
    /// Inspect joint feature vectors.
    #[command(subcommand)]
    Features(FeaturesCommand),
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Write the default six-part, five-attribute model.
    Default {
        #[arg(long, default_value_t = 16)]
        unary_dim: usize,
        #[arg(long, default_value_t = 8)]
        hist_dim: usize,
        /// Garment descriptor length per attribute region.
        #[arg(long, value_delimiter = ',', default_value = "8,8,8,8,8")]
        attr_dims: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a model file.
    Validate { path: PathBuf },
}

#[derive(Subcommand)]
enum DataCommand {
    /// Check a dataset against a model.
    Validate {
        path: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Subcommand)]
enum FeaturesCommand {
    /// Write the joint feature vector of each instance's label, split into
    /// named blocks. Labels come from `--pred` or else the ground truth.
    Dump {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SeedArg {
    /// Overridden by the JOINT_STRUCT_SEED environment variable.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    model: PathBuf,
    /// JSON generator settings; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// JSON training settings; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    score: ScoreArgs,
    /// Train pose and garment blocks as two separate models.
    #[arg(long)]
    mask_cross: bool,
    /// Drop the strong-edge term (α = 0).
    #[arg(long)]
    mask_edges: bool,
    #[arg(long)]
    out: PathBuf,
    /// Per-round training summary as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    score: ScoreArgs,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Pose without attribute evidence, then attributes given that pose.
    #[arg(long)]
    mask_cross: bool,
    /// Drop the strong-edge term (α = 0).
    #[arg(long)]
    mask_edges: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PCP_THRESHOLD)]
    pcp_threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    beta: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = DEFAULT_PCP_THRESHOLD)]
    pcp_threshold: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    score: ScoreArgs,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = DEFAULT_PCP_THRESHOLD)]
    pcp_threshold: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct OracleArgs {
    /// Number of random instances.
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[command(flatten)]
    score: ScoreArgs,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
}

/// One record of a results file. Pose entries are 0-based candidate indices;
/// attribute values are 1-based, as in dataset files.
#[derive(Debug, Serialize, Deserialize)]
struct ResultRecord {
    id: String,
    pose: Vec<usize>,
    attributes: Vec<usize>,
    score: f64,
    iterations: usize,
    trace: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ResultsFile {
    model_hash: String,
    results: Vec<ResultRecord>,
}

#[derive(Serialize)]
struct BlockDump {
    block: String,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct FeatureDump {
    id: String,
    pose: Vec<usize>,
    attributes: Vec<usize>,
    blocks: Vec<BlockDump>,
}

/// A failure attributable to the inputs rather than the invocation.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn resolve_seed(flag: &SeedArg) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| anyhow!(Usage(format!("{SEED_ENV}={v} is not an unsigned integer")))),
        Err(_) => Ok(flag.seed.unwrap_or(0)),
    }
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| anyhow!(Invalid(format!("{}: {e}", p.display()))))
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> Result<ModelSpec> {
    ModelSpec::load(path).map_err(|e| anyhow!(Invalid(e.to_string())))
}

fn load_data(path: &Path, spec: &ModelSpec) -> Result<Vec<Instance>> {
    load_dataset(path, spec).map_err(|e| anyhow!(Invalid(format!("{}: {e}", path.display()))))
}

fn load_weights(path: &Path, spec: &ModelSpec) -> Result<WeightVector> {
    WeightVector::load(path, spec).map_err(|e| anyhow!(Invalid(format!("{}: {e}", path.display()))))
}

fn invalid<E: std::fmt::Display>(e: E) -> anyhow::Error {
    anyhow!(Invalid(e.to_string()))
}

fn train_config(path: Option<&Path>, seed: u64) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = read_json(path)?;
    cfg.seed = seed;
    cfg.validate().map_err(invalid)?;
    Ok(cfg)
}

fn to_record(inst: &Instance, r: &InferenceResult) -> ResultRecord {
    ResultRecord {
        id: inst.id.clone(),
        pose: r.label.pose.clone(),
        attributes: r.label.attrs.iter().map(|c| c + 1).collect(),
        score: r.score,
        iterations: r.iterations,
        trace: r.trace.clone(),
    }
}

/// Labels from a results file, aligned with `instances` by id.
fn labels_for(results: &ResultsFile, instances: &[Instance], spec: &ModelSpec) -> Result<Vec<JointLabel>> {
    if results.model_hash != spec.hash_hex() {
        bail!(Invalid("results were produced with a different model".into()));
    }
    let by_id: BTreeMap<&str, &ResultRecord> = results.results.iter().map(|r| (r.id.as_str(), r)).collect();
    instances
        .iter()
        .map(|inst| {
            let r = by_id
                .get(inst.id.as_str())
                .ok_or_else(|| invalid(format!("no prediction for instance {}", inst.id)))?;
            if r.attributes.contains(&0) {
                return Err(invalid(format!("instance {}: attribute values are 1-based", inst.id)));
            }
            let label = JointLabel::new(r.pose.clone(), r.attributes.iter().map(|c| c - 1).collect());
            label.check(inst, spec).map_err(invalid)?;
            Ok(label)
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    if cli.workers == 0 {
        bail!(Usage("--workers must be at least 1".into()));
    }
    let exec = if cli.workers == 1 {
        Execution::Sequential
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
            .context("starting worker pool")?;
        Execution::Parallel
    };
    match cli.command {
        Command::Model(ModelCommand::Default {
            unary_dim,
            hist_dim,
            attr_dims,
            out,
        }) => {
            let dims: [usize; 5] = attr_dims
                .try_into()
                .map_err(|v: Vec<usize>| Usage(format!("--attr-dims needs 5 values, got {}", v.len())))?;
            let spec = ModelSpec::default_model(unary_dim, hist_dim, dims);
            spec.validate().map_err(|v| invalid(format!("{v:?}")))?;
            spec.save(&out).map_err(invalid)?;
            println!(
                "model {} (D = {}) written to {}",
                spec.hash_hex(),
                spec.dim(),
                out.display()
            );
        }
        Command::Model(ModelCommand::Validate { path }) => {
            let spec = load_model(&path)?;
            println!(
                "ok: {} parts, {} attributes, D = {}, hash {}",
                spec.part_count(),
                spec.attribute_count(),
                spec.dim(),
                spec.hash_hex()
            );
        }
        Command::Data(DataCommand::Validate { path, model }) => {
            let spec = load_model(&model)?;
            let data = load_data(&path, &spec)?;
            println!("ok: {} instances", data.len());
        }
        Command::Synth(a) => {
            let spec = load_model(&a.model)?;
            let mut cfg: SynthConfig = read_json(a.config.as_deref())?;
            cfg.seed = resolve_seed(&a.seed)?;
            cfg.validate().map_err(invalid)?;
            let d = generate_with(&cfg, &spec, exec);
            fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
            save_dataset(&a.out_dir.join("train.json"), &d.train, &spec).map_err(invalid)?;
            save_dataset(&a.out_dir.join("test.json"), &d.test, &spec).map_err(invalid)?;
            d.planted.save(&a.out_dir.join("planted.bin"), &spec).map_err(invalid)?;
            println!(
                "{} train / {} test instances written to {}",
                d.train.len(),
                d.test.len(),
                a.out_dir.display()
            );
        }
        Command::Train(a) => {
            let spec = load_model(&a.model)?;
            let data = load_data(&a.data, &spec)?;
            let cfg = train_config(a.config.as_deref(), resolve_seed(&a.seed)?)?;
            let alpha = if a.mask_edges { 0.0 } else { a.score.alpha };
            let w = if a.mask_cross {
                train_separated(&data, &spec, &cfg, alpha, a.score.beta, exec).map_err(invalid)?
            } else {
                let (w, report) = train_with(&data, &spec, &cfg, alpha, a.score.beta, exec).map_err(invalid)?;
                if let Some(p) = &a.report {
                    write_json(p, &report)?;
                }
                w
            };
            w.save(&a.out, &spec).map_err(invalid)?;
            println!("weights written to {}", a.out.display());
        }
        Command::Infer(a) => {
            let spec = load_model(&a.model)?;
            let w = load_weights(&a.weights, &spec)?;
            let data = load_data(&a.data, &spec)?;
            let alpha = if a.mask_edges { 0.0 } else { a.score.alpha };
            let obj = Objective::new(&spec, &w.0, alpha, a.score.beta).map_err(invalid)?;
            let mode = if a.mask_cross {
                InferenceMode::Separate
            } else {
                InferenceMode::Joint
            };
            let results = predict(&obj, &data, mode, a.max_iter, exec).map_err(invalid)?;
            let file = ResultsFile {
                model_hash: spec.hash_hex(),
                results: data.iter().zip(&results).map(|(i, r)| to_record(i, r)).collect(),
            };
            write_json(&a.out, &file)?;
            println!("{} results written to {}", file.results.len(), a.out.display());
        }
        Command::Eval(a) => {
            let spec = load_model(&a.model)?;
            let data = load_data(&a.data, &spec)?;
            let text = fs::read_to_string(&a.pred).with_context(|| format!("reading {}", a.pred.display()))?;
            let results: ResultsFile =
                serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", a.pred.display())))?;
            let labels = labels_for(&results, &data, &spec)?;
            let report = evaluate(&data, &labels, &spec, a.pcp_threshold, exec).map_err(invalid)?;
            write_json(&a.out, &report)?;
            let gap = report.gap_total.map_or("n/a".to_string(), |g| format!("{g:.4}"));
            println!(
                "PCP {:.4}  GAP {gap}  over {} instances",
                report.pcp_total, report.instances
            );
        }
        Command::Gridsearch(a) => {
            let spec = load_model(&a.model)?;
            let data = load_data(&a.data, &spec)?;
            let cfg = train_config(a.config.as_deref(), resolve_seed(&a.seed)?)?;
            let grid = gridsearch(
                &data,
                &spec,
                &cfg,
                &a.alpha,
                &a.beta,
                a.folds,
                a.max_iter,
                a.pcp_threshold,
                exec,
            )
            .map_err(invalid)?;
            write_json(&a.out, &grid)?;
            println!(
                "best α = {}, β = {} after {} training runs",
                grid.best_alpha, grid.best_beta, grid.training_runs
            );
        }
        Command::Ablate(a) => {
            let spec = load_model(&a.model)?;
            let train = load_data(&a.train, &spec)?;
            let test = load_data(&a.test, &spec)?;
            let cfg = train_config(a.config.as_deref(), resolve_seed(&a.seed)?)?;
            let report = ablate(
                &train,
                &test,
                &spec,
                &cfg,
                a.score.alpha,
                a.score.beta,
                a.max_iter,
                a.pcp_threshold,
                exec,
            )
            .map_err(invalid)?;
            write_json(&a.out, &report)?;
            println!(
                "{:<12} {:>10} {:>10} {:>10}",
                "item", "joint err", "separated", "reduction"
            );
            for row in &report.separated_reduction {
                let red = row.reduction.map_or("n/a".to_string(), |r| format!("{r:.3}"));
                println!(
                    "{:<12} {:>10.4} {:>10.4} {:>10}",
                    row.item, row.joint_error, row.variant_error, red
                );
            }
        }
        Command::OracleCheck(a) => {
            let seed = resolve_seed(&a.seed)?;
            let report = oracle_check(a.instances, seed, a.score.alpha, a.score.beta, a.tol, exec);
            for c in &report.checks {
                println!("{}: {}/{}", c.name, c.passed, c.tests);
            }
            if let Some(p) = &a.out {
                write_json(p, &report)?;
            }
            if report.passed() != report.tests() {
                bail!(Invalid(format!(
                    "{} of {} checks failed",
                    report.tests() - report.passed(),
                    report.tests()
                )));
            }
        }
        Command::Features(FeaturesCommand::Dump { model, data, pred, out }) => {
            let spec = load_model(&model)?;
            let data = load_data(&data, &spec)?;
            let labels = match pred {
                Some(p) => {
                    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    let results: ResultsFile =
                        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
                    labels_for(&results, &data, &spec)?
                }
                None => data
                    .iter()
                    .map(|inst| {
                        bind_ground_truth(inst, &spec, DEFAULT_PCP_THRESHOLD)
                            .map(|mut v| v.swap_remove(0))
                            .map_err(invalid)
                    })
                    .collect::<Result<_>>()?,
            };
            let mut dumps = Vec::with_capacity(data.len());
            for (inst, y) in data.iter().zip(&labels) {
                let j = assemble_joint(inst, &spec, y, &FeatureMask::all()).map_err(invalid)?;
                dumps.push(FeatureDump {
                    id: inst.id.clone(),
                    pose: y.pose.clone(),
                    attributes: y.attrs.iter().map(|c| c + 1).collect(),
                    blocks: spec
                        .layout
                        .blocks
                        .iter()
                        .map(|b| BlockDump {
                            block: b.id.to_string(),
                            values: j[b.range()].to_vec(),
                        })
                        .collect(),
                });
            }
            write_json(&out, &dumps)?;
            println!("{} feature vectors written to {}", dumps.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
