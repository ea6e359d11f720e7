//! `lasr` command-line tool: ingest play logs, train cascades, evaluate and
//! predict.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lasr::{ConfigError, DataError, ModelFileError, TrainError};

use settings::KList;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelFileError> for CliError {
    fn from(e: ModelFileError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(c) => c.into(),
            e @ TrainError::NonFinite { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lasr", version, about = "Latent structured ranking: ingest, train, evaluate, predict")]
pub struct Cli {
    /// `key=value` file of parameter defaults; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for evaluation, inference and context caching.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Emit machine-readable JSON instead of `key=value` lines.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split a play log by day and write train/valid/test pairs and vocabularies.
    Ingest(IngestArgs),
    /// Train a cascade of stages on an ingested directory.
    Train(TrainArgs),
    /// Evaluate a model on a pairs file.
    Eval(EvalArgs),
    /// Print the top-k items for one or more queries.
    Predict(PredictArgs),
    /// Train on planted-structure synthetic data and compare iteration 0 with the last iteration.
    BenchSynthetic(BenchArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// `user<TAB>timestamp<TAB>item` lines, grouped by user in time order.
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Days whose index is 0 modulo this value go to the test split. Default 5.
    #[arg(long)]
    pub test_day_modulus: Option<i64>,
    /// Share of training pairs held out for validation. Default 0.1.
    #[arg(long, conflicts_with = "valid_count")]
    pub valid_fraction: Option<f64>,
    /// Absolute number of training pairs held out for validation.
    #[arg(long)]
    pub valid_count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Remove pairs whose two items are equal from train and validation.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub drop_self_pairs: Option<bool>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct HyperArgs {
    /// Number of structured stages T; the model has T + 1 stages. Default 1.
    #[arg(long)]
    pub stages: Option<usize>,
    /// Latent dimension n. Default 50.
    #[arg(long)]
    pub dim: Option<usize>,
    /// List length k. Default 20.
    #[arg(long)]
    pub k: Option<usize>,
    /// `warp` or `auc`. Default warp.
    #[arg(long)]
    pub loss: Option<lasr::LossKind>,
    /// Learning rate. Default 0.05.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Column norm bound. Default 1.
    #[arg(long = "C")]
    pub max_norm: Option<f64>,
    /// Hinge margin. Default 1.
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Updates between validation checks. Default 50000.
    #[arg(long)]
    pub eval_every: Option<u64>,
    /// Validation checks without improvement before a stage stops. Default 3.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Sampled pairs per stage at most. Default 10000000.
    #[arg(long)]
    pub max_updates: Option<u64>,
    /// Keep the item structure of context items fixed during updates.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub freeze_context: Option<bool>,
    /// Start each stage from the previous stage's U and V.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub warm_start: Option<bool>,
    /// Position weights: `sparse` (1/i up to k) or `dense` (1/i everywhere).
    #[arg(long)]
    pub weights: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `ingest`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// `id<TAB>v1 v2 ...` query feature vectors used instead of one-hot queries.
    #[arg(long)]
    pub query_features: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args, Clone, Default)]
pub struct InferArgs {
    /// `unstructured`, `greedy`, `beam` or `iterative`. Default iterative.
    #[arg(long)]
    pub strategy: Option<lasr::Strategy>,
    /// Beam width M. Default 1.
    #[arg(long)]
    pub beam_width: Option<usize>,
    /// Cascade iterations (iterative) or the stage used (greedy, beam).
    /// Default: the last stage.
    #[arg(long)]
    pub stages_to_run: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// `query<TAB>item` pairs file.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Comma-separated cutoffs. Default 5,10,30,50.
    #[arg(long)]
    pub ks: Option<KList>,
    #[arg(long)]
    pub query_features: Option<PathBuf>,
    #[command(flatten)]
    pub infer: InferArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, conflicts_with = "queries", required_unless_present = "queries")]
    pub query: Option<String>,
    /// File with one query token per line.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Items to list. Default: the model's k.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub query_features: Option<PathBuf>,
    #[command(flatten)]
    pub infer: InferArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Number of seeds. Default 10.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// First seed. Default 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Synthetic queries. Default 1000.
    #[arg(long)]
    pub queries: Option<usize>,
    /// Synthetic items. Default 500.
    #[arg(long)]
    pub items: Option<usize>,
    /// Planted clusters. Default 10.
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Also train with the AUC loss and report WARP against AUC. Default true.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub compare_auc: Option<bool>,
    #[arg(long)]
    pub stages: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<u64>,
    #[arg(long)]
    pub max_updates: Option<u64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut res = settings::Resolver::load(cli.config.as_deref())?;
    let workers = res.get_opt("workers", cli.workers)?;
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    }
    match cli.command {
        Command::Ingest(a) => commands::ingest(&a, &mut res, cli.json),
        Command::Train(a) => commands::train(&a, &mut res, cli.json),
        Command::Eval(a) => commands::eval(&a, &mut res, cli.json),
        Command::Predict(a) => commands::predict(&a, &mut res, cli.json),
        Command::BenchSynthetic(a) => commands::bench(&a, &mut res, cli.json),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
