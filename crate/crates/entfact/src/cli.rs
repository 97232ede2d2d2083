//! The `entfact` command-line surface: thin deterministic wrappers over
//! the library pipelines.
//!
//! Every command writes its artifacts into `--out-dir` together with a
//! `manifest.json` recording the resolved configuration, inputs and
//! outputs. Training-related values (`r_nfe`, `gamma`, `tau`, `steps`,
//! `lr`, `seed`, `batch_size`) may also come from a `key=value` config
//! file passed with `--config`; explicit flags win over file values.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, missing
//! inputs), 2 runtime error.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::analysis::{
    count_occurrences, export_distribution, mean_occurrences, save_sigma_report, sigma,
    SigmaBucket, SigmaBuckets, SigmaRecord, TfidfIndex,
};
use crate::classifier::{
    classify_dataset, load_predictions_csv, loo_eval, save_predictions_csv, KnnModel, Task,
};
use crate::corpus::{
    convert_ment, extract_entities, load_dataset, load_ment_annotations, noise_split, save_dataset,
    Dataset, Document,
};
use crate::features::{
    build_feature_table, compute_entity_scores, FeatureSubset, FeatureTable, PosteriorMode,
    ScoreSource,
};
use crate::metrics::{
    partial_pearson, pearson, summary_score, ClassificationReport, KeyValueReport,
};
use crate::rltrain::{
    label_rewards, load_trajectories, mle_train, noise_experiment, offline_train, save_mle_log,
    save_noise_rows, save_train_log, save_trajectories, FactualityLabeler, MleConfig,
    NoiseExpConfig, OfflineConfig, RewardSpec, ToyPolicy, WeightSource,
};
use crate::scorer::{RemoteConfig, RemoteScorer, ScoreFile, ToyCmlm, ToyMlm, ENDPOINT_ENV};

/// Error split driving the process exit code.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid invocation: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn validation(m: impl Into<String>) -> CliError {
    CliError::Validation(m.into())
}

#[derive(Parser)]
#[command(
    name = "entfact",
    version,
    about = "Entity-level hallucination detection, factuality checking and factuality-reward training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutDir {
    /// Run directory for outputs and the manifest.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Clone)]
struct ScorerArgs {
    /// Additive smoothing for the toy models.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Copy weight of the toy conditional model.
    #[arg(long, default_value_t = 0.7)]
    lambda: f64,
    /// Posterior conditioning: cmlm (bidirectional) or clm (left-only).
    #[arg(long, default_value = "cmlm")]
    posterior: String,
}

impl ScorerArgs {
    fn posterior_mode(&self) -> Result<PosteriorMode, CliError> {
        match self.posterior.as_str() {
            "cmlm" => Ok(PosteriorMode::Cmlm),
            "clm" => Ok(PosteriorMode::Clm),
            other => Err(validation(format!("unknown posterior mode {other:?}"))),
        }
    }
}

/// Training knobs shared by the offline-RL commands; unset flags fall
/// back to `--config` file values, then to defaults.
#[derive(Args, Clone, Default)]
struct TrainArgs {
    /// key=value config file mirroring these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    r_nfe: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

/// Values resolved from flags over config-file entries over defaults.
struct ResolvedTrain {
    r_nfe: f64,
    gamma: f64,
    tau: f64,
    steps: usize,
    lr: f64,
    seed: u64,
    batch_size: usize,
}

impl TrainArgs {
    fn resolve(&self, default_steps: usize, default_lr: f64) -> Result<ResolvedTrain, CliError> {
        let file = match &self.config {
            None => HashMap::new(),
            Some(path) => parse_config_file(path)?,
        };
        fn pick<T: std::str::FromStr>(
            flag: Option<T>,
            file: &HashMap<String, String>,
            key: &str,
            default: T,
        ) -> Result<T, CliError> {
            if let Some(v) = flag {
                return Ok(v);
            }
            match file.get(key) {
                None => Ok(default),
                Some(raw) => raw
                    .parse()
                    .map_err(|_| validation(format!("config key {key} has bad value {raw:?}"))),
            }
        }
        Ok(ResolvedTrain {
            r_nfe: pick(self.r_nfe, &file, "r_nfe", 2.0)?,
            gamma: pick(self.gamma, &file, "gamma", 1.0)?,
            tau: pick(self.tau, &file, "tau", 0.01)?,
            steps: pick(self.steps, &file, "steps", default_steps)?,
            lr: pick(self.lr, &file, "lr", default_lr)?,
            seed: pick(self.seed, &file, "seed", 0)?,
            batch_size: pick(self.batch_size, &file, "batch_size", 32)?,
        })
    }
}

fn parse_config_file(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| validation(format!("cannot read config {}: {e}", path.display())))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| validation(format!("config line {}: expected key=value", i + 1)))?;
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

#[derive(Subcommand)]
enum Command {
    /// Tag entity mentions in every summary (kept when already present).
    Extract {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Compute per-entity scores and the feature table.
    Score {
        /// Dataset to score.
        #[arg(long)]
        dataset: PathBuf,
        /// toy | file | remote.
        #[arg(long, default_value = "toy")]
        scorer: String,
        /// Reference corpus for training the toy scorers.
        #[arg(long)]
        train_corpus: Option<PathBuf>,
        /// Precomputed score file (scorer = file).
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Scorer endpoint (scorer = remote); defaults to $ENTFACT_SCORER_ENDPOINT.
        #[arg(long)]
        endpoint: Option<String>,
        #[command(flatten)]
        scorer_args: ScorerArgs,
        #[command(flatten)]
        out: OutDir,
    },
    /// Fit a KNN model on a labeled feature table.
    TrainKnn {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// hallucination | factuality | three-class.
        #[arg(long, default_value = "factuality")]
        task: String,
        #[arg(long, default_value = "all")]
        feature_subset: String,
        #[command(flatten)]
        out: OutDir,
    },
    /// Predict both binary tasks for every row of a feature table.
    Classify {
        /// Rows to classify.
        #[arg(long)]
        features: PathBuf,
        /// Labeled table to fit on (defaults to --features).
        #[arg(long)]
        train_features: Option<PathBuf>,
        /// Pre-trained hallucination model (with --model-f).
        #[arg(long)]
        model_h: Option<PathBuf>,
        /// Pre-trained factuality model (with --model-h).
        #[arg(long)]
        model_f: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value = "all")]
        feature_subset: String,
        #[command(flatten)]
        out: OutDir,
    },
    /// Leave-one-out evaluation of the KNN on a labeled feature table.
    Eval {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value = "factuality")]
        task: String,
        #[arg(long, default_value = "all")]
        feature_subset: String,
        /// Evaluate all four feature-ablation subsets.
        #[arg(long)]
        grid: bool,
        #[command(flatten)]
        out: OutDir,
    },
    /// Convert span-level annotations into an entity-labeled dataset.
    ConvertMent {
        #[arg(long)]
        annotations: PathBuf,
        /// Dataset supplying the source documents by doc_id.
        #[arg(long)]
        docs: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Correlate summary-level factuality scores with human judgments.
    Correlate {
        /// Predictions CSV (factuality rows give the summary scores).
        #[arg(long)]
        predictions: PathBuf,
        /// CSV of summary_id, human_score, covariate columns.
        #[arg(long)]
        human: PathBuf,
        /// Covariate column names for the partial correlation.
        #[arg(long)]
        covariates: Option<String>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Label reference trajectories with factuality rewards.
    LabelRewards {
        /// Training dataset (documents + reference summaries).
        #[arg(long)]
        dataset: PathBuf,
        /// Labeled feature table for fitting the factuality KNN.
        #[arg(long)]
        knn_features: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// Reference corpus for the toy scorers (defaults to the clean
        /// split of --dataset).
        #[arg(long)]
        scorer_corpus: Option<PathBuf>,
        /// Frozen MLE policy supplying the non-penalty rewards.
        #[arg(long)]
        mle_policy: PathBuf,
        #[command(flatten)]
        scorer_args: ScorerArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        out: OutDir,
    },
    /// Teacher-forced MLE pre-training of the toy policy.
    MleTrain {
        #[arg(long)]
        dataset: PathBuf,
        /// Warm-start policy file (default: zero-initialized).
        #[arg(long)]
        init: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        out: OutDir,
    },
    /// Offline policy-gradient training on labeled trajectories.
    RlTrain {
        #[arg(long)]
        trajectories: PathBuf,
        /// Starting policy (normally the MLE policy).
        #[arg(long)]
        init: PathBuf,
        /// Held-out dataset for the ENFS log column (default: training
        /// sources).
        #[arg(long)]
        eval_dataset: Option<PathBuf>,
        /// Number of documents used for the ENFS log column.
        #[arg(long, default_value_t = 50)]
        eval_docs: usize,
        /// slow_copy | fast_policy importance weights.
        #[arg(long, default_value = "slow_copy")]
        weight_source: String,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        out: OutDir,
    },
    /// Clean/noisy mixing experiment across noise ratios.
    NoiseExp {
        /// Reference dataset; split into clean and noisy pools.
        #[arg(long)]
        train: PathBuf,
        /// Held-out clean pairs for generation and ROUGE.
        #[arg(long)]
        eval: PathBuf,
        /// Labeled feature table for the factuality KNN.
        #[arg(long)]
        knn_features: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// Comma-separated noise ratios.
        #[arg(long, default_value = "0,0.5,1.0")]
        ratios: String,
        /// Mixture size per ratio.
        #[arg(long)]
        size: usize,
        /// Greedy decoding instead of seeded sampling.
        #[arg(long)]
        greedy: bool,
        #[arg(long, default_value_t = 30)]
        gen_max_len: usize,
        #[command(flatten)]
        scorer_args: ScorerArgs,
        #[command(flatten)]
        train_args: TrainArgs,
        #[command(flatten)]
        out: OutDir,
    },
    /// Posterior log-ratio analysis between two reference corpora.
    AnalyzeSigma {
        /// Dataset whose entities are analyzed.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        corpus_a: PathBuf,
        #[arg(long)]
        corpus_b: PathBuf,
        /// Neighbors retrieved per corpus.
        #[arg(long, default_value_t = 10)]
        topk: usize,
        /// High-bucket threshold (sigma >= high).
        #[arg(long, default_value_t = 5.0)]
        high: f64,
        /// Low-bucket threshold (sigma <= low).
        #[arg(long, default_value_t = 0.0)]
        low: f64,
        #[command(flatten)]
        scorer_args: ScorerArgs,
        #[command(flatten)]
        out: OutDir,
    },
    /// Export the per-entity probability distribution for plotting.
    ExportDist {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
}

/// Run-directory bookkeeping: resolved config plus input/output lists,
/// flushed to `manifest.json`.
struct RunContext {
    out_dir: PathBuf,
    command: &'static str,
    config: serde_json::Map<String, Value>,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl RunContext {
    fn new(command: &'static str, out: &OutDir) -> Result<Self, CliError> {
        std::fs::create_dir_all(&out.out_dir)
            .map_err(|e| validation(format!("cannot create out dir: {e}")))?;
        Ok(Self {
            out_dir: out.out_dir.clone(),
            command,
            config: serde_json::Map::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    fn config(&mut self, key: &str, value: impl Into<Value>) {
        self.config.insert(key.to_string(), value.into());
    }

    fn input(&mut self, path: &Path) -> Result<(), CliError> {
        if !path.exists() {
            return Err(validation(format!(
                "input {} does not exist",
                path.display()
            )));
        }
        self.inputs.push(path.display().to_string());
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out_dir.join(name)
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.outputs.push("manifest.json".into());
        let manifest = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": Value::Object(self.config),
            "inputs": self.inputs,
            "outputs": self.outputs,
        });
        let path = self.out_dir.join("manifest.json");
        std::fs::write(
            &path,
            serde_json::to_string_pretty(&manifest).expect("manifest") + "\n",
        )
        .map_err(runtime)
    }
}

fn parse_task(s: &str) -> Result<Task, CliError> {
    match s {
        "hallucination" => Ok(Task::Hallucination),
        "factuality" => Ok(Task::Factuality),
        "three-class" => Ok(Task::ThreeClass),
        other => Err(validation(format!("unknown task {other:?}"))),
    }
}

fn parse_subset(s: &str) -> Result<FeatureSubset, CliError> {
    FeatureSubset::parse(s).ok_or_else(|| validation(format!("unknown feature subset {s:?}")))
}

fn toy_scorers(corpus: &Dataset, args: &ScorerArgs) -> Result<(ToyMlm, ToyCmlm), CliError> {
    let targets: Vec<Vec<String>> = corpus
        .records
        .iter()
        .map(|r| r.summary.tokens.clone())
        .collect();
    let pairs: Vec<(Vec<String>, Vec<String>)> = corpus
        .records
        .iter()
        .map(|r| (r.document.tokens.clone(), r.summary.tokens.clone()))
        .collect();
    let mlm = ToyMlm::train(&targets, args.alpha).map_err(runtime)?;
    let cmlm = ToyCmlm::train(&pairs, args.alpha, args.lambda).map_err(runtime)?;
    Ok((mlm, cmlm))
}

fn report_from_classification(
    prefix: &str,
    report: &ClassificationReport<crate::classifier::TaskLabel>,
    out: &mut KeyValueReport,
) {
    let p = |name: &str| {
        if prefix.is_empty() {
            name.to_string()
        } else {
            format!("{prefix}/{name}")
        }
    };
    out.push(p("accuracy"), report.accuracy);
    out.push(p("macro_f1"), report.macro_f1);
    for (label, counts) in &report.per_class {
        out.push(
            p(&format!("precision_{}", label.as_str())),
            counts.precision(),
        );
        out.push(p(&format!("recall_{}", label.as_str())), counts.recall());
        out.push(p(&format!("f1_{}", label.as_str())), counts.f1());
    }
}

/// Parses and runs the process arguments, returning the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e @ CliError::Validation(_)) => {
            eprintln!("{e}");
            1
        }
        Err(e @ CliError::Runtime(_)) => {
            eprintln!("{e}");
            2
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Extract { input, out } => cmd_extract(input, out),
        Command::Score {
            dataset,
            scorer,
            train_corpus,
            scores,
            endpoint,
            scorer_args,
            out,
        } => cmd_score(
            dataset,
            scorer,
            train_corpus,
            scores,
            endpoint,
            scorer_args,
            out,
        ),
        Command::TrainKnn {
            features,
            k,
            task,
            feature_subset,
            out,
        } => cmd_train_knn(features, k, task, feature_subset, out),
        Command::Classify {
            features,
            train_features,
            model_h,
            model_f,
            k,
            feature_subset,
            out,
        } => cmd_classify(
            features,
            train_features,
            model_h,
            model_f,
            k,
            feature_subset,
            out,
        ),
        Command::Eval {
            features,
            k,
            task,
            feature_subset,
            grid,
            out,
        } => cmd_eval(features, k, task, feature_subset, grid, out),
        Command::ConvertMent {
            annotations,
            docs,
            out,
        } => cmd_convert_ment(annotations, docs, out),
        Command::Correlate {
            predictions,
            human,
            covariates,
            out,
        } => cmd_correlate(predictions, human, covariates, out),
        Command::LabelRewards {
            dataset,
            knn_features,
            k,
            scorer_corpus,
            mle_policy,
            scorer_args,
            train,
            out,
        } => cmd_label_rewards(
            dataset,
            knn_features,
            k,
            scorer_corpus,
            mle_policy,
            scorer_args,
            train,
            out,
        ),
        Command::MleTrain {
            dataset,
            init,
            train,
            out,
        } => cmd_mle_train(dataset, init, train, out),
        Command::RlTrain {
            trajectories,
            init,
            eval_dataset,
            eval_docs,
            weight_source,
            train,
            out,
        } => cmd_rl_train(
            trajectories,
            init,
            eval_dataset,
            eval_docs,
            weight_source,
            train,
            out,
        ),
        Command::NoiseExp {
            train,
            eval,
            knn_features,
            k,
            ratios,
            size,
            greedy,
            gen_max_len,
            scorer_args,
            train_args,
            out,
        } => cmd_noise_exp(
            train,
            eval,
            knn_features,
            k,
            ratios,
            size,
            greedy,
            gen_max_len,
            scorer_args,
            train_args,
            out,
        ),
        Command::AnalyzeSigma {
            dataset,
            corpus_a,
            corpus_b,
            topk,
            high,
            low,
            scorer_args,
            out,
        } => cmd_analyze_sigma(
            dataset,
            corpus_a,
            corpus_b,
            topk,
            high,
            low,
            scorer_args,
            out,
        ),
        Command::ExportDist {
            features,
            predictions,
            out,
        } => cmd_export_dist(features, predictions, out),
    }
}

fn cmd_extract(input: PathBuf, out: OutDir) -> Result<(), CliError> {
    let mut ctx = RunContext::new("extract", &out)?;
    ctx.input(&input)?;
    let mut dataset = load_dataset(&input).map_err(runtime)?;
    let mut tagged = 0usize;
    for record in &mut dataset.records {
        // Gold annotations take precedence over the tagger.
        if record.summary.entities.is_empty() {
            record.summary.entities = extract_entities(&record.summary.tokens);
            tagged += 1;
        }
    }
    let path = ctx.path("dataset.jsonl");
    save_dataset(&dataset, &path).map_err(runtime)?;
    ctx.config("input", input.display().to_string());
    ctx.config("records", dataset.len());
    ctx.config("tagged_records", tagged);
    ctx.finish()
}

fn cmd_score(
    dataset_path: PathBuf,
    scorer: String,
    train_corpus: Option<PathBuf>,
    scores: Option<PathBuf>,
    endpoint: Option<String>,
    scorer_args: ScorerArgs,
    out: OutDir,
) -> Result<(), CliError> {
    let mut ctx = RunContext::new("score", &out)?;
    ctx.input(&dataset_path)?;
    let mode = scorer_args.posterior_mode()?;
    let dataset = load_dataset(&dataset_path).map_err(runtime)?;
    let score_file = match scorer.as_str() {
        "toy" => {
            let corpus_path = train_corpus
                .as_ref()
                .ok_or_else(|| validation("--scorer toy requires --train-corpus"))?;
            ctx.input(corpus_path)?;
            let corpus = load_dataset(corpus_path).map_err(runtime)?;
            let (mlm, cmlm) = toy_scorers(&corpus, &scorer_args)?;
            compute_entity_scores(&dataset, &mlm, &cmlm, true).map_err(runtime)?
        }
        "file" => {
            let scores_path = scores
                .as_ref()
                .ok_or_else(|| validation("--scorer file requires --scores"))?;
            ctx.input(scores_path)?;
            ScoreFile::load(scores_path).map_err(runtime)?
        }
        "remote" => {
            let endpoint = endpoint
                .or_else(|| std::env::var(ENDPOINT_ENV).ok())
                .ok_or_else(|| {
                    validation(format!(
                        "--scorer remote requires --endpoint or ${ENDPOINT_ENV}"
                    ))
                })?;
            ctx.config("endpoint", endpoint.clone());
            let remote = RemoteScorer::new(RemoteConfig::new(endpoint));
            compute_entity_scores(&dataset, &remote, &remote, mode == PosteriorMode::Clm)
                .map_err(runtime)?
        }
        other => return Err(validation(format!("unknown scorer {other:?}"))),
    };
    let table =
        build_feature_table(&dataset, &ScoreSource::File(&score_file), mode).map_err(runtime)?;
    let scores_out = ctx.path("scores.jsonl");
    score_file.save(&scores_out).map_err(runtime)?;
    let features_out = ctx.path("features.csv");
    table.save_csv(&features_out).map_err(runtime)?;
    ctx.config("scorer", scorer);
    ctx.config("posterior", scorer_args.posterior.clone());
    ctx.config("alpha", scorer_args.alpha);
    ctx.config("lambda", scorer_args.lambda);
    ctx.config("entities", table.len());
    ctx.finish()
}

fn cmd_train_knn(
    features: PathBuf,
    k: usize,
    task: String,
    feature_subset: String,
    out: OutDir,
) -> Result<(), CliError> {
    let mut ctx = RunContext::new("train-knn", &out)?;
    ctx.input(&features)?;
    let table = FeatureTable::load_csv(&features).map_err(runtime)?;
    let task_parsed = parse_task(&task)?;
    let subset = parse_subset(&feature_subset)?;
    let model = KnnModel::fit(&table, k, task_parsed, subset).map_err(runtime)?;
    let path = ctx.path("model.json");
    model.save(&path).map_err(runtime)?;
    ctx.config("k", k);
    ctx.config("task", task);
    ctx.config("feature_subset", feature_subset);
    ctx.config("rows", model.len());
    ctx.finish()
}

fn cmd_classify(
    features: PathBuf,
    train_features: Option<PathBuf>,
    model_h: Option<PathBuf>,
    model_f: Option<PathBuf>,
    k: usize,
    feature_subset: String,
    out: OutDir,
) -> Result<(), CliError> {
    let mut ctx = RunContext::new("classify", &out)?;
    ctx.input(&features)?;
    let table = FeatureTable::load_csv(&features).map_err(runtime)?;
    let subset = parse_subset(&feature_subset)?;
    let (h, f) = match (&model_h, &model_f) {
        (Some(h_path), Some(f_path)) => {
            ctx.input(h_path)?;
            ctx.input(f_path)?;
            (
                KnnModel::load(h_path).map_err(runtime)?,
                KnnModel::load(f_path).map_err(runtime)?,
            )
        }
        (None, None) => {
            let train_path = train_features.as_ref().unwrap_or(&features);
            ctx.input(train_path)?;
            let train_table = FeatureTable::load_csv(train_path).map_err(runtime)?;
            let h = KnnModel::fit(&train_table, k, Task::Hallucination, subset).map_err(runtime)?;
            let f = KnnModel::fit(&train_table, k, Task::Factuality, subset).map_err(runtime)?;
            h.save(ctx.path("model_h.json")).map_err(runtime)?;
            f.save(ctx.path("model_f.json")).map_err(runtime)?;
            (h, f)
        }
        _ => return Err(validation("--model-h and --model-f must be given together")),
    };
    let predictions = classify_dataset(&h, &f, &table).map_err(runtime)?;
    let path = ctx.path("predictions.csv");
    save_predictions_csv(&predictions, &path).map_err(runtime)?;
    ctx.config("k", k);
    ctx.config("feature_subset", feature_subset);
    ctx.config("rows", table.len());
    ctx.finish()
}

fn cmd_eval(
    features: PathBuf,
    k: usize,
    task: String,
    feature_subset: String,
    grid: bool,
    out: OutDir,
) -> Result<(), CliError> {
    let mut ctx = RunContext::new("eval", &out)?;
    ctx.input(&features)?;
    let table = FeatureTable::load_csv(&features).map_err(runtime)?;
    let task_parsed = parse_task(&task)?;
    let mut report = KeyValueReport::default();
    if grid {
        for subset in [
            FeatureSubset::ALL,
            FeatureSubset::WITHOUT_OVERLAP,
            FeatureSubset::WITHOUT_PRIOR,
            FeatureSubset::WITHOUT_POSTERIOR,
        ] {
            let r = loo_eval(&table, k, task_parsed, subset).map_err(runtime)?;
            report_from_classification(&subset.label(), &r, &mut report);
        }
    } else {
        let subset = parse_subset(&feature_subset)?;
        let r = loo_eval(&table, k, task_parsed, subset).map_err(runtime)?;
        report_from_classification("", &r, &mut report);
    }
    print!("{report}");
    let path = ctx.path("report.csv");
    report.save_csv(&path).map_err(runtime)?;
    ctx.config("k", k);
    ctx.config("task", task);
    ctx.config("grid", grid);
    ctx.config("feature_subset", feature_subset);
    ctx.finish()
}

fn cmd_convert_ment(annotations: PathBuf, docs: PathBuf, out: OutDir) -> Result<(), CliError> {
    let mut ctx = RunContext::new("convert-ment", &out)?;
    ctx.input(&annotations)?;
    ctx.input(&docs)?;
    let anns = load_ment_annotations(&annotations).map_err(runtime)?;
    let doc_set = load_dataset(&docs).map_err(runtime)?;
    let converted = convert_ment(&anns, &doc_set).map_err(runtime)?;
    let path = ctx.path("dataset.jsonl");
    save_dataset(&converted, &path).map_err(runtime)?;
    ctx.config("annotations", anns.len());
    ctx.config("records", converted.len());
    ctx.finish()
}

fn cmd_correlate(
    predictions: PathBuf,
    human: PathBuf,
    covariates: Option<String>,
    out: OutDir,
) -> Result<(), CliError> {
    let mut ctx = RunContext::new("correlate", &out)?;
    ctx.input(&predictions)?;
    ctx.input(&human)?;
    let preds = load_predictions_csv(&predictions).map_err(runtime)?;
    // Summary score: minimum factual-class confidence over the summary's
    // entities; summaries without predictions score 1.0.
    let mut by_doc: HashMap<&str, Vec<f64>> = HashMap::new();
    for p in preds.iter().filter(|p| p.task == Task::Factuality) {
        by_doc.entry(&p.doc_id).or_default().push(p.confidence);
    }

    let mut reader =
        csv::Reader::from_path(&human).map_err(|e| runtime(format!("human csv: {e}")))?;
    let headers = reader.headers().map_err(runtime)?.clone();
    let cov_names: Vec<String> = covariates
        .map(|c| c.split(',').map(|s| s.trim().to_string()).collect())
        .unwrap_or_default();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col =
        col("summary_id").ok_or_else(|| validation("human csv needs a summary_id column"))?;
    let score_col =
        col("human_score").ok_or_else(|| validation("human csv needs a human_score column"))?;
    let cov_cols: Vec<usize> = cov_names
        .iter()
        .map(|n| col(n).ok_or_else(|| validation(format!("covariate column {n:?} not found"))))
        .collect::<Result<_, _>>()?;

    let mut ours = Vec::new();
    let mut theirs = Vec::new();
    let mut cov_values: Vec<Vec<f64>> = vec![Vec::new(); cov_cols.len()];
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| runtime(format!("human csv line {}: {e}", idx + 2)))?;
        let id = record.get(id_col).unwrap_or_default();
        let human_score: f64 = record
            .get(score_col)
            .unwrap_or_default()
            .parse()
            .map_err(|_| runtime(format!("human csv line {}: bad human_score", idx + 2)))?;
        ours.push(by_doc.get(id).map_or(1.0, |c| summary_score(c)));
        theirs.push(human_score);
        for (slot, col) in cov_values.iter_mut().zip(&cov_cols) {
            let v: f64 = record
                .get(*col)
                .unwrap_or_default()
                .parse()
                .map_err(|_| runtime(format!("human csv line {}: bad covariate", idx + 2)))?;
            slot.push(v);
        }
    }

    let mut report = KeyValueReport::default();
    report.push("n", ours.len());
    report.push("pearson", pearson(&ours, &theirs).map_err(runtime)?);
    if !cov_values.is_empty() {
        report.push(
            "partial_pearson",
            partial_pearson(&ours, &theirs, &cov_values).map_err(runtime)?,
        );
        report.push("covariates", cov_names.join("+"));
    }
    print!("{report}");
    let path = ctx.path("report.csv");
    report.save_csv(&path).map_err(runtime)?;
    ctx.finish()
}

#[allow(clippy::too_many_arguments)]
fn cmd_label_rewards(
    dataset_path: PathBuf,
    knn_features: PathBuf,
    k: usize,
    scorer_corpus: Option<PathBuf>,
    mle_policy: PathBuf,
    scorer_args: ScorerArgs,
    train: TrainArgs,
    out: OutDir,
) -> Result<(), CliError> {
    let mut ctx = RunContext::new("label-rewards", &out)?;
    ctx.input(&dataset_path)?;
    ctx.input(&knn_features)?;
    ctx.input(&mle_policy)?;
    let resolved = train.resolve(0, 0.0)?;
    let mode = scorer_args.posterior_mode()?;
    let dataset = load_dataset(&dataset_path).map_err(runtime)?;
    let corpus = match &scorer_corpus {
        Some(path) => {
            ctx.input(path)?;
            load_dataset(path).map_err(runtime)?
        }
        // Noisy references would teach the scorers the very pairings the
        // classifier is meant to flag, so default to the clean split.
        None => noise_split(&dataset).0,
    };
    let (mlm, cmlm) = toy_scorers(&corpus, &scorer_args)?;
    let table = FeatureTable::load_csv(&knn_features).map_err(runtime)?;
    let knn = KnnModel::fit(&table, k, Task::Factuality, FeatureSubset::ALL).map_err(runtime)?;
    let labeler = FactualityLabeler::new(&knn, &mlm, &cmlm, mode).map_err(runtime)?;
    let policy = ToyPolicy::load(&mle_policy).map_err(runtime)?;
    let spec = RewardSpec {
        r_nfe: resolved.r_nfe,
        gamma: resolved.gamma,
    };
    let trajectories = label_rewards(&dataset, &labeler, &policy, &spec).map_err(runtime)?;
    let path = ctx.path("trajectories.jsonl");
    save_trajectories(&trajectories, &path).map_err(runtime)?;
    let penalized: usize = trajectories
        .iter()
        .map(|t| t.rewards.iter().filter(|r| **r < 0.0).count())
        .sum();
    ctx.config("r_nfe", resolved.r_nfe);
    ctx.config("gamma", resolved.gamma);
    ctx.config("k", k);
    ctx.config("posterior", scorer_args.posterior.clone());
    ctx.config("alpha", scorer_args.alpha);
    ctx.config("lambda", scorer_args.lambda);
    ctx.config("trajectories", trajectories.len());
    ctx.config("penalized_tokens", penalized);
    ctx.finish()
}

fn cmd_mle_train(
    dataset_path: PathBuf,
    init: Option<PathBuf>,
    train: TrainArgs,
    out: OutDir,
) -> Result<(), CliError> {
    let mut ctx = RunContext::new("mle-train", &out)?;
    ctx.input(&dataset_path)?;
    let resolved = train.resolve(800, 0.5)?;
    let dataset = load_dataset(&dataset_path).map_err(runtime)?;
    let initial = match &init {
        Some(path) => {
            ctx.input(path)?;
            ToyPolicy::load(path).map_err(runtime)?
        }
        None => ToyPolicy::from_dataset(&dataset).map_err(runtime)?,
    };
    let config = MleConfig {
        steps: resolved.steps,
        lr: resolved.lr,
        seed: resolved.seed,
        batch_size: resolved.batch_size,
    };
    let (policy, log) = mle_train(&initial, &dataset, &config).map_err(runtime)?;
    policy.save(ctx.path("policy.json")).map_err(runtime)?;
    save_mle_log(&log, ctx.path("mle_log.jsonl")).map_err(runtime)?;
    ctx.config("steps", resolved.steps);
    ctx.config("lr", resolved.lr);
    ctx.config("seed", resolved.seed);
    ctx.config("batch_size", resolved.batch_size);
    ctx.finish()
}

fn cmd_rl_train(
    trajectories_path: PathBuf,
    init: PathBuf,
    eval_dataset: Option<PathBuf>,
    eval_docs: usize,
    weight_source: String,
    train: TrainArgs,
    out: OutDir,
) -> Result<(), CliError> {
    let mut ctx = RunContext::new("rl-train", &out)?;
    ctx.input(&trajectories_path)?;
    ctx.input(&init)?;
    let resolved = train.resolve(600, 1.0)?;
    let weights = match weight_source.as_str() {
        "slow_copy" => WeightSource::SlowCopy,
        "fast_policy" => WeightSource::FastPolicy,
        other => return Err(validation(format!("unknown weight source {other:?}"))),
    };
    let trajectories = load_trajectories(&trajectories_path).map_err(runtime)?;
    let initial = ToyPolicy::load(&init).map_err(runtime)?;
    let docs: Vec<Document> = match &eval_dataset {
        Some(path) => {
            ctx.input(path)?;
            load_dataset(path)
                .map_err(runtime)?
                .records
                .iter()
                .take(eval_docs)
                .map(|r| r.document.clone())
                .collect()
        }
        None => trajectories
            .iter()
            .take(eval_docs)
            .map(|t| Document::new(t.doc_id.clone(), t.source_tokens.clone()))
            .collect::<Result<_, _>>()
            .map_err(runtime)?,
    };
    let config = OfflineConfig {
        steps: resolved.steps,
        lr: resolved.lr,
        seed: resolved.seed,
        batch_size: resolved.batch_size,
        tau: resolved.tau,
        weight_source: weights,
        eval_every: (resolved.steps / 6).max(1),
        eval_max_len: 30,
    };
    let (policy, log) = offline_train(&initial, &trajectories, &docs, &config).map_err(runtime)?;
    policy.save(ctx.path("policy.json")).map_err(runtime)?;
    save_train_log(&log, ctx.path("train_log.jsonl")).map_err(runtime)?;
    if let Some(entry) = log.last() {
        ctx.config("final_mean_return", entry.mean_return);
        if let Some(enfs) = entry.enfs_eval {
            ctx.config("final_enfs_eval", enfs);
        }
    }
    ctx.config("steps", resolved.steps);
    ctx.config("lr", resolved.lr);
    ctx.config("seed", resolved.seed);
    ctx.config("batch_size", resolved.batch_size);
    ctx.config("tau", resolved.tau);
    ctx.config("weight_source", weight_source);
    ctx.finish()
}

#[allow(clippy::too_many_arguments)]
fn cmd_noise_exp(
    train_path: PathBuf,
    eval_path: PathBuf,
    knn_features: PathBuf,
    k: usize,
    ratios: String,
    size: usize,
    greedy: bool,
    gen_max_len: usize,
    scorer_args: ScorerArgs,
    train_args: TrainArgs,
    out: OutDir,
) -> Result<(), CliError> {
    let mut ctx = RunContext::new("noise-exp", &out)?;
    ctx.input(&train_path)?;
    ctx.input(&eval_path)?;
    ctx.input(&knn_features)?;
    let resolved = train_args.resolve(1200, 0.5)?;
    let mode = scorer_args.posterior_mode()?;
    let ratio_values: Vec<f64> = ratios
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| validation(format!("bad ratio {s:?}")))
        })
        .collect::<Result<_, _>>()?;
    let dataset = load_dataset(&train_path).map_err(runtime)?;
    let eval = load_dataset(&eval_path).map_err(runtime)?;
    let (clean, noisy) = noise_split(&dataset);
    let (mlm, cmlm) = toy_scorers(&clean, &scorer_args)?;
    let table = FeatureTable::load_csv(&knn_features).map_err(runtime)?;
    let knn = KnnModel::fit(&table, k, Task::Factuality, FeatureSubset::ALL).map_err(runtime)?;
    let labeler = FactualityLabeler::new(&knn, &mlm, &cmlm, mode).map_err(runtime)?;
    let config = NoiseExpConfig {
        size,
        seed: resolved.seed,
        mle: MleConfig {
            steps: resolved.steps,
            lr: resolved.lr,
            seed: resolved.seed,
            batch_size: resolved.batch_size,
        },
        gen_max_len,
        sample_decode: !greedy,
    };
    let rows = noise_experiment(&clean, &noisy, &ratio_values, &labeler, &eval, &config)
        .map_err(runtime)?;
    for row in &rows {
        println!(
            "ratio {:.2}: knn_factual {:.2}% overlap_factual {:.2}% rouge1 {:.4}",
            row.ratio, row.knn_factual_pct, row.overlap_factual_pct, row.rouge1
        );
    }
    save_noise_rows(&rows, ctx.path("noise_experiment.csv")).map_err(runtime)?;
    ctx.config("ratios", ratios);
    ctx.config("size", size);
    ctx.config("clean_pool", clean.len());
    ctx.config("noisy_pool", noisy.len());
    ctx.config("greedy", greedy);
    ctx.config("steps", resolved.steps);
    ctx.config("lr", resolved.lr);
    ctx.config("seed", resolved.seed);
    ctx.config("batch_size", resolved.batch_size);
    ctx.finish()
}

#[allow(clippy::too_many_arguments)]
fn cmd_analyze_sigma(
    dataset_path: PathBuf,
    corpus_a: PathBuf,
    corpus_b: PathBuf,
    topk: usize,
    high: f64,
    low: f64,
    scorer_args: ScorerArgs,
    out: OutDir,
) -> Result<(), CliError> {
    let mut ctx = RunContext::new("analyze-sigma", &out)?;
    ctx.input(&dataset_path)?;
    ctx.input(&corpus_a)?;
    ctx.input(&corpus_b)?;
    let mut dataset = load_dataset(&dataset_path).map_err(runtime)?;
    for record in &mut dataset.records {
        if record.summary.entities.is_empty() {
            record.summary.entities = extract_entities(&record.summary.tokens);
        }
    }
    let a = load_dataset(&corpus_a).map_err(runtime)?;
    let b = load_dataset(&corpus_b).map_err(runtime)?;
    let (_, cmlm_a) = toy_scorers(&a, &scorer_args)?;
    let (_, cmlm_b) = toy_scorers(&b, &scorer_args)?;
    let docs_a: Vec<Document> = a.records.iter().map(|r| r.document.clone()).collect();
    let docs_b: Vec<Document> = b.records.iter().map(|r| r.document.clone()).collect();
    let index_a = TfidfIndex::build(&docs_a).map_err(runtime)?;
    let index_b = TfidfIndex::build(&docs_b).map_err(runtime)?;
    let buckets = SigmaBuckets { high, low };
    let mode = scorer_args.posterior_mode()?;

    let mut records = Vec::new();
    for record in &dataset.records {
        let retrieved_a = retrieve_docs(&index_a, &docs_a, &record.document, topk)?;
        let retrieved_b = retrieve_docs(&index_b, &docs_b, &record.document, topk)?;
        for (entity_index, mention) in record.summary.entities.iter().enumerate() {
            if mention.label == Some(crate::corpus::EntityClass::IntrinsicHallucination) {
                continue;
            }
            let post = |scorer: &ToyCmlm| {
                crate::features::posterior_prob(
                    scorer,
                    &record.document,
                    &record.summary,
                    mention,
                    mode,
                )
            };
            let pa = post(&cmlm_a).map_err(runtime)?;
            let pb = post(&cmlm_b).map_err(runtime)?;
            let s = sigma(pa, pb).map_err(runtime)?;
            records.push(SigmaRecord {
                doc_id: record.document.id.clone(),
                entity_index,
                surface: mention.surface.clone(),
                log_posterior_a: pa.ln(),
                log_posterior_b: pb.ln(),
                sigma: s,
                bucket: buckets.bucket(s),
                count_a: count_occurrences(&mention.surface, &retrieved_a),
                count_b: count_occurrences(&mention.surface, &retrieved_b),
            });
        }
    }
    save_sigma_report(&records, ctx.path("sigma.csv")).map_err(runtime)?;

    let mut report = KeyValueReport::default();
    report.push("entities", records.len());
    for (bucket, name) in [
        (SigmaBucket::High, "high"),
        (SigmaBucket::Mid, "mid"),
        (SigmaBucket::Low, "low"),
    ] {
        let n = records.iter().filter(|r| r.bucket == bucket).count();
        report.push(format!("count_{name}"), n);
        let (ma, mb) = mean_occurrences(&records, bucket);
        if let (Some(ma), Some(mb)) = (ma, mb) {
            report.push(format!("mean_occurrences_a_{name}"), ma);
            report.push(format!("mean_occurrences_b_{name}"), mb);
        }
    }
    print!("{report}");
    report.save_csv(ctx.path("report.csv")).map_err(runtime)?;
    ctx.config("topk", topk);
    ctx.config("high", high);
    ctx.config("low", low);
    ctx.config("alpha", scorer_args.alpha);
    ctx.config("lambda", scorer_args.lambda);
    ctx.finish()
}

/// Top-k documents for a query, resolved back to document references.
fn retrieve_docs<'a>(
    index: &TfidfIndex,
    docs: &'a [Document],
    query: &Document,
    k: usize,
) -> Result<Vec<&'a Document>, CliError> {
    let ranked = index
        .retrieve_topk(query, k.min(index.len()))
        .map_err(runtime)?;
    Ok(ranked
        .iter()
        .filter_map(|(id, _)| docs.iter().find(|d| &d.id == id))
        .collect())
}

fn cmd_export_dist(features: PathBuf, predictions: PathBuf, out: OutDir) -> Result<(), CliError> {
    let mut ctx = RunContext::new("export-dist", &out)?;
    ctx.input(&features)?;
    ctx.input(&predictions)?;
    let table = FeatureTable::load_csv(&features).map_err(runtime)?;
    let preds = load_predictions_csv(&predictions).map_err(runtime)?;
    export_distribution(&table, &preds, ctx.path("distribution.csv")).map_err(runtime)?;
    ctx.config("rows", table.len());
    ctx.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parsing_and_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\nr_nfe = 4.0\nsteps=100\nseed=9\n").unwrap();
        let args = TrainArgs {
            config: Some(path),
            r_nfe: Some(2.5), // flag beats file
            ..Default::default()
        };
        let resolved = args.resolve(600, 1.0).unwrap();
        assert_eq!(resolved.r_nfe, 2.5);
        assert_eq!(resolved.steps, 100);
        assert_eq!(resolved.seed, 9);
        assert_eq!(resolved.gamma, 1.0); // default
        assert_eq!(resolved.lr, 1.0); // command default
    }

    #[test]
    fn bad_config_values_are_validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "steps=abc\n").unwrap();
        let args = TrainArgs {
            config: Some(path),
            ..Default::default()
        };
        assert!(matches!(args.resolve(1, 1.0), Err(CliError::Validation(_))));
        let path2 = dir.path().join("broken.conf");
        std::fs::write(&path2, "no equals sign\n").unwrap();
        let args = TrainArgs {
            config: Some(path2),
            ..Default::default()
        };
        assert!(matches!(args.resolve(1, 1.0), Err(CliError::Validation(_))));
    }

    #[test]
    fn manifest_records_config_and_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir {
            out_dir: dir.path().join("run"),
        };
        let mut ctx = RunContext::new("extract", &out).unwrap();
        ctx.config("records", 3);
        let _ = ctx.path("dataset.jsonl");
        ctx.finish().unwrap();
        let manifest: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("run/manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest["command"], "extract");
        assert_eq!(manifest["config"]["records"], 3);
        assert!(manifest["outputs"]
            .as_array()
            .unwrap()
            .iter()
            .any(|v| v == "dataset.jsonl"));
    }

    #[test]
    fn task_and_subset_parsing() {
        assert!(parse_task("factuality").is_ok());
        assert!(matches!(parse_task("nope"), Err(CliError::Validation(_))));
        assert!(parse_subset("no-prior").is_ok());
        assert!(matches!(
            parse_subset("bogus"),
            Err(CliError::Validation(_))
        ));
    }
}
