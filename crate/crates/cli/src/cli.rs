use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

/// Predictive and prescriptive decision-making from observational data.
///
/// Every option of a subcommand can also come from a JSON file passed with
/// `--config`, keyed by the option's name in snake_case; flags given on
/// the command line win over the file.
#[derive(Debug, Parser)]
#[command(name = "obsopt", version, about, propagate_version = true)]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Layout of tabular results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// JSON file with option values, or a metadata record from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset.
    Simulate(SimulateArgs),
    /// Fit a predictive reward curve (outcome on decision only).
    Predict(PredictArgs),
    /// Fit a prescriptive reward curve adjusting for covariates.
    Prescribe(PrescribeArgs),
    /// Test whether a candidate decision is distinguishable from optimal.
    Test(TestArgs),
    /// Evaluate or verify the pricing suboptimality bounds.
    Bounds(BoundsArgs),
    /// Run a repeated-sample study of decision strategies.
    Replicate(ReplicateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Predict(_) => "predict",
            Command::Prescribe(_) => "prescribe",
            Command::Test(_) => "test",
            Command::Bounds(_) => "bounds",
            Command::Replicate(_) => "replicate",
        }
    }
}

/// Options shared by the estimating subcommands.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct FitArgs {
    /// Dataset CSV with columns z, y and optional x1..xk.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// gaussian2, gaussian4 or epanechnikov.
    #[arg(long)]
    pub kernel: Option<String>,
    /// rate:<c> for c·(n ln n)^(-1/7), or fixed:<h>.
    #[arg(long)]
    pub bandwidth: Option<String>,
    /// margin:<cost> or unit.
    #[arg(long)]
    pub reward: Option<String>,
    /// lo,hi,points or {z1;z2;...}; defaults to 101 points over the observed decisions.
    #[arg(long)]
    pub space: Option<String>,
    /// Where to write the curve table (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateArgs {
    /// example3, or table:<file> for a discrete law.
    #[arg(long)]
    pub instance: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Noise standard deviation of the pricing instance.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Pricing-noise variance of the pricing instance.
    #[arg(long)]
    pub tau2: Option<f64>,
    /// Rescale table probabilities that do not sum to one.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
    /// nw (kernel regression), ols or logit.
    #[arg(long)]
    pub variant: Option<String>,
    /// Add a z² term to the parametric variants.
    #[arg(long)]
    pub quadratic: bool,
    /// Where to write the fitted-model JSON.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct PrescribeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
    /// nonparam (kernel partial mean) or gps (propensity-score pipeline).
    #[arg(long)]
    pub method: Option<String>,
    /// gps: ols or lognormal model of the decision given covariates.
    #[arg(long)]
    pub treatment: Option<String>,
    /// gps: linear or logit outcome model.
    #[arg(long)]
    pub outcome: Option<String>,
    /// gps: quad (q, q², zq) or log (ln q) score features.
    #[arg(long)]
    pub gps_feature: Option<String>,
    /// nonparam: skip covariate standardization.
    #[arg(long)]
    pub raw_covariates: bool,
    /// Where to write the fitted-model JSON (gps).
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct TestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
    /// Decision to test.
    #[arg(long)]
    pub candidate: Option<f64>,
    /// Test the decision of a strategy fit on the same data instead:
    /// predictive_nonparam, predictive_param, prescriptive_nonparam or prescriptive_gps.
    #[arg(long)]
    pub candidate_from: Option<String>,
    /// Bandwidth of the kernel regression used by --candidate-from predictive_nonparam.
    #[arg(long)]
    pub predictive_bandwidth: Option<String>,
    /// Bootstrap draws.
    #[arg(long = "B", alias = "draws")]
    #[serde(rename = "draws")]
    pub draws: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Snap the candidate to the nearest grid node.
    #[arg(long)]
    pub snap: bool,
    /// Where to write the per-draw bootstrap values.
    #[arg(long)]
    pub draws_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundsArgs {
    /// 2 (bounded confounding), 3 (jointly normal) or 4 (monotone confounding).
    #[arg(long)]
    pub theorem: Option<u8>,
    /// name:lo:hi:step, e.g. gamma:0:0.2:0.005.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Report negative bounds as 0.
    #[arg(long)]
    pub clamp: bool,
    /// Run the tightness and random-instance validity checks instead.
    #[arg(long)]
    pub verify: bool,
    /// Random instances per validity sweep.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplicateArgs {
    /// Comma-separated strategies (default: all six).
    #[arg(long)]
    pub strategies: Option<String>,
    /// Comma-separated sample sizes.
    #[arg(long)]
    pub ns: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub space: Option<String>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub tau2: Option<f64>,
    /// Run the optimality test on every decision.
    #[arg(long)]
    pub test: bool,
    /// Bootstrap draws for the test.
    #[arg(long = "B", alias = "draws")]
    #[serde(rename = "draws")]
    pub draws: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Aggregate report (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-replication records.
    #[arg(long)]
    pub runs_out: Option<PathBuf>,
}
