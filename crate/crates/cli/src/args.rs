use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "robustify",
    version,
    about = "Robust Bayesian models by localization and empirical Bayes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the simulation study for one data kind over a noise grid.
    Simulate(SimulateArgs),
    /// Fit a regression model to a dataset CSV (header x1..xd,y).
    Fit(FitArgs),
    /// Write per-row predictive summaries for a covariate CSV.
    Predict(PredictArgs),
    /// Score a predictions CSV against the responses of a dataset CSV.
    Evaluate(EvaluateArgs),
    /// Topic models on corpora in the LDA-C format.
    #[command(subcommand)]
    Lda(LdaCommand),
    /// Rerun a figure's default experiment and write one CSV per panel.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Standard,
    Robust,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Linear,
    Logistic,
    Poisson,
    Improvement,
    Lda,
}

/// Convergence controls shared by the fitting commands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct FitControl {
    /// Convergence tolerance passed to every fitter.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iteration cap passed to every fitter.
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    /// Append a constant covariate before fitting.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub intercept: Switch,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Data kind: linear, logistic or poisson.
    #[arg(long)]
    pub model: String,
    /// Comma-separated noise levels; defaults to the kind's figure grid.
    #[arg(long = "noise-grid", value_delimiter = ',')]
    pub noise_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[command(flatten)]
    pub control: FitControl,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    /// Dataset CSV.
    #[serde(skip)]
    pub data: PathBuf,
    /// robust_linear, ols, robust_logistic, logistic, robust_poisson, poisson or nb.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[command(flatten)]
    pub control: FitControl,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// Model JSON written by `fit`.
    pub model_file: PathBuf,
    /// Covariate CSV (header x1..xd, optionally followed by y).
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Predictions CSV written by `predict`.
    pub predictions: PathBuf,
    /// Dataset CSV holding the true responses.
    pub data: PathBuf,
    /// Metric report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum LdaCommand {
    /// Write a synthetic bursty corpus.
    Gen(LdaGenArgs),
    /// Fit standard or robust LDA.
    Fit(LdaFitArgs),
    /// Held-out per-word log likelihood.
    Eval(LdaEvalArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LdaGenArgs {
    #[arg(long, default_value_t = 100)]
    pub docs: usize,
    #[arg(long, default_value_t = 5)]
    pub topics: usize,
    #[arg(long, default_value_t = 200)]
    pub vocab: usize,
    /// Per-document topic concentration; lower is burstier, `inf` disables.
    #[arg(long, default_value_t = 20.0)]
    pub burstiness: f64,
    #[arg(long = "doc-length", default_value_t = 100)]
    pub doc_length: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LdaControl {
    #[arg(long, default_value_t = 5)]
    pub topics: usize,
    /// Symmetric topic-proportion Dirichlet; defaults to 1/K.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative corpus-bound change that ends EM.
    #[arg(long)]
    pub tol: Option<f64>,
    /// EM round cap.
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LdaFitArgs {
    /// Corpus in the LDA-C format.
    #[serde(skip)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Robust)]
    pub mode: ModeArg,
    #[command(flatten)]
    pub control: LdaControl,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LdaEvalArgs {
    /// Corpus in the LDA-C format.
    #[serde(skip)]
    pub corpus: PathBuf,
    /// Fitted topic model JSON; when given, the whole corpus is scored.
    #[serde(skip)]
    pub model_file: Option<PathBuf>,
    /// Mode to fit; both modes when omitted.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Fraction of each test document that is observed.
    #[arg(long = "split-ratio", default_value_t = 0.5)]
    pub split_ratio: f64,
    #[command(flatten)]
    pub control: LdaControl,
    /// Results CSV path; stdout when omitted.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub figure: Figure,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Repetitions; 50 for the regression figures and 5 for lda by default.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overrides the figure's noise grid (regression figures).
    #[arg(long = "noise-grid", value_delimiter = ',')]
    pub noise_grid: Option<Vec<f64>>,
    /// Topic counts for the lda figure.
    #[arg(long, value_delimiter = ',')]
    pub topics: Option<Vec<usize>>,
    /// Fraction of each test document that is observed (lda figure).
    #[arg(long = "split-ratio", default_value_t = 0.5)]
    pub split_ratio: f64,
    #[command(flatten)]
    pub control: FitControl,
}
