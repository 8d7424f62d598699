use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use gsne::config::EvalConfig;
use gsne::dataprep::SyntheticCityConfig;
use gsne::eval::GbtParams;
use gsne::geo_graph::GraphConfig;
use gsne::trainer::TrainConfig;

fn dflt(text: &str, value: impl std::fmt::Display) -> String {
    format!("{text} [default: {value}]")
}

fn lower(v: impl std::fmt::Debug) -> String {
    format!("{v:?}").to_lowercase()
}

#[derive(Debug, Parser)]
#[command(name = "gsne", version, about = "Gaussian geo-spatial network embeddings for house price prediction")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file; flags given on the command line take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N", help = dflt("Seed for every random stage", TrainConfig::default().seed))]
    pub seed: Option<u64>,
    /// Run single-threaded (results are identical either way)
    #[arg(long, global = true)]
    pub sequential: bool,
    /// Only log warnings and errors
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic city with planted neighbourhood price effects
    GenSynth(GenSynthArgs),
    /// Ingest a data directory and build the multipartite graph
    BuildGraph(BuildGraphArgs),
    /// Train Gaussian encoders on a graph
    Train(TrainArgs),
    /// Write node embeddings from a training checkpoint
    Export(ExportArgs),
    /// Compare raw and embedding-augmented features on price regression
    Eval(EvalArgs),
    /// Train on one house-to-POI edge set at a time and score each
    Ablate(AblateArgs),
    /// Check analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, value_name = "N", help = dflt("Number of houses", SyntheticCityConfig::default().houses))]
    pub houses: Option<usize>,
    #[arg(long, value_name = "N", help = dflt("Number of regions", SyntheticCityConfig::default().regions))]
    pub regions: Option<usize>,
    #[arg(long, value_name = "N", help = dflt("Number of schools", SyntheticCityConfig::default().schools))]
    pub schools: Option<usize>,
    #[arg(long, value_name = "N", help = dflt("Number of train stations", SyntheticCityConfig::default().stations))]
    pub stations: Option<usize>,
    #[arg(long, value_name = "W", help = dflt("Log-price weight of region quality", SyntheticCityConfig::default().region_weight))]
    pub region_weight: Option<f64>,
    #[arg(long, value_name = "W", help = dflt("Log-price weight of school quality", SyntheticCityConfig::default().school_weight))]
    pub school_weight: Option<f64>,
    #[arg(long, value_name = "W", help = dflt("Log-price weight of station quality", SyntheticCityConfig::default().station_weight))]
    pub station_weight: Option<f64>,
    #[arg(long, value_name = "S", help = dflt("Standard deviation of log-price noise", SyntheticCityConfig::default().noise_std))]
    pub noise_std: Option<f64>,
    #[arg(long, value_name = "P", help = dflt("Fraction of optional house cells left empty", SyntheticCityConfig::default().missing_rate))]
    pub missing_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long, value_name = "R", help = dflt("House-school edge radius", GraphConfig::default().house_school_radius))]
    pub house_school_radius: Option<f64>,
    #[arg(long, value_name = "R", help = dflt("House-station edge radius", GraphConfig::default().house_station_radius))]
    pub house_station_radius: Option<f64>,
    #[arg(long, value_name = "R", help = dflt("School-station edge radius", GraphConfig::default().school_station_radius))]
    pub school_station_radius: Option<f64>,
    #[arg(long, value_name = "K", help = dflt("Nearest stations linked to each station", GraphConfig::default().k_nearest_stations))]
    pub k_nearest_stations: Option<usize>,
    #[arg(long, value_name = "D", help = dflt("Distance floor in edge weights", GraphConfig::default().delta_min))]
    pub delta_min: Option<f64>,
    #[arg(long, value_name = "MODE", help = dflt("planar or haversine", lower(GraphConfig::default().distance_mode)))]
    pub distance_mode: Option<String>,
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    /// Data directory holding schema.json and the CSV tables
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Graph artifact to write
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, value_name = "F", help = dflt("Share of houses in the training split", EvalConfig::default().train_fraction))]
    pub train_fraction: Option<f64>,
    /// Also write the preprocessing report (imputation and scaling) as JSON
    #[arg(long, value_name = "FILE")]
    pub preprocess_report: Option<PathBuf>,
    #[command(flatten)]
    pub graph: GraphArgs,
}

#[derive(Debug, Args)]
pub struct TrainingArgs {
    #[arg(long, value_name = "P", help = dflt("first, second or both", lower(TrainConfig::default().proximity)))]
    pub proximity: Option<String>,
    #[arg(long, value_name = "T", help = dflt("Training iterations", TrainConfig::default().iterations))]
    pub iters: Option<u64>,
    #[arg(long, value_name = "B", help = dflt("Positive edges per batch", TrainConfig::default().batch_size))]
    pub batch_size: Option<usize>,
    #[arg(long, value_name = "N", help = dflt("Negative samples per edge", TrainConfig::default().negatives))]
    pub negatives: Option<usize>,
    #[arg(long, value_name = "LR", help = dflt("Learning rate", TrainConfig::default().learning_rate))]
    pub learning_rate: Option<f64>,
    #[arg(long, value_name = "OPT", help = dflt("sgd or adam", lower(TrainConfig::default().optimizer)))]
    pub optimizer: Option<String>,
    #[arg(long, value_name = "POLICY", help = dflt("iterative, random or block100", lower(TrainConfig::default().alternation)))]
    pub alternation: Option<String>,
    #[arg(long, value_name = "L", help = dflt("Embedding dimension", TrainConfig::default().encoder.embed_dim))]
    pub embed_dim: Option<usize>,
    #[arg(long, value_name = "KINDS", help = dflt("Comma-separated edge sets to train on (e.g. house_school)", "all"))]
    pub edge_sets: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Graph artifact from build-graph
    #[arg(long, value_name = "FILE")]
    pub graph: PathBuf,
    /// Checkpoint directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long, value_name = "K", help = dflt("Save a checkpoint every K iterations (0 = only at the end)", TrainConfig::default().checkpoint_every))]
    pub checkpoint_every: Option<u64>,
    /// Continue from the checkpoint in --out instead of starting afresh
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Checkpoint directory written by train
    #[arg(long, value_name = "DIR")]
    pub ckpt: PathBuf,
    /// Embedding CSV to write
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Graph artifact to encode (defaults to the one recorded by train)
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_name = "LAMBDA", help = dflt("Ridge penalty", EvalConfig::default().models.ridge_lambda))]
    pub ridge_lambda: Option<f64>,
    #[arg(long, value_name = "LAMBDA", help = dflt("Kernel ridge penalty", EvalConfig::default().models.krr_lambda))]
    pub krr_lambda: Option<f64>,
    #[arg(long, value_name = "WIDTH", help = dflt("RBF bandwidth", "median pairwise distance"))]
    pub krr_bandwidth: Option<f64>,
    #[arg(long, value_name = "N", help = dflt("Boosted trees", GbtParams::default().trees))]
    pub gbt_trees: Option<usize>,
    #[arg(long, value_name = "D", help = dflt("Boosted tree depth", GbtParams::default().max_depth))]
    pub gbt_depth: Option<usize>,
    #[arg(long, value_name = "ETA", help = dflt("Boosting shrinkage", GbtParams::default().shrinkage))]
    pub gbt_shrinkage: Option<f64>,
    #[arg(long, value_name = "F", help = dflt("Row subsample per tree", GbtParams::default().subsample))]
    pub gbt_subsample: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Data directory the graph was built from
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Embedding CSV from export
    #[arg(long, value_name = "FILE")]
    pub emb: PathBuf,
    /// Report directory (report.txt, report.csv, report.json)
    #[arg(long, value_name = "DIR")]
    pub report: PathBuf,
    #[arg(long, value_name = "LIST", help = dflt("Comma-separated regressors", EvalConfig::default().regressors))]
    pub regressors: Option<String>,
    #[arg(long, value_name = "LIST", help = dflt("Comma-separated feature sets", "all available"))]
    pub feature_sets: Option<String>,
    #[arg(long, value_name = "P", help = dflt("Proximity orders held by the embedding file", lower(TrainConfig::default().proximity)))]
    pub emb_proximity: Option<String>,
    /// Append embedding variances to the mean columns
    #[arg(long)]
    pub include_variance: bool,
    #[arg(long, value_name = "F", help = dflt("Share of houses in the training split; must match build-graph", EvalConfig::default().train_fraction))]
    pub train_fraction: Option<f64>,
    #[arg(long, value_name = "R", help = dflt("Bootstrap replicates per interval (0 = skip)", 0))]
    pub bootstrap: Option<usize>,
    #[arg(long, value_name = "LEVEL", help = dflt("Bootstrap confidence level", EvalConfig::default().bootstrap_level))]
    pub bootstrap_level: Option<f64>,
    #[command(flatten)]
    pub models: ModelArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Data directory holding schema.json and the CSV tables
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Report directory
    #[arg(long, value_name = "DIR")]
    pub report: PathBuf,
    #[arg(long, value_name = "NAME", help = dflt("Regressor scoring each row", "gbt"))]
    pub regressor: Option<String>,
    #[arg(long, value_name = "F", help = dflt("Share of houses in the training split", EvalConfig::default().train_fraction))]
    pub train_fraction: Option<f64>,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub models: ModelArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Check both objectives on the built-in toy graph
    #[arg(long)]
    pub toy: bool,
}
