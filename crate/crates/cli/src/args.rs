use clap::{Args, Parser, Subcommand, ValueEnum};
use freedenoise_core::convolution::ConvolutionConfig;
use freedenoise_core::subordination::SolverConfig;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "freedenoise", version, about = "Free convolutions, overlaps and free denoisers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Recorded in manifests without the output directory, so a replay into a
/// different directory writes an identical manifest.
#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Command {
    /// Free convolution of two measures
    Convolve(ConvolveArgs),
    /// Free denoiser curve h = E[f(a) | observed]
    Denoise(DenoiseArgs),
    /// Overlap function table o(s, t)
    Overlap(OverlapArgs),
    /// Analytic transforms on a line or circle grid, optionally inverted
    Transform(TransformArgs),
    /// Seeded random-matrix experiment with loss table and binned oracle curve
    Simulate(SimulateArgs),
    /// Re-run a manifest and check that every output is byte-identical
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Convolve(_) => "convolve",
            Command::Denoise(_) => "denoise",
            Command::Overlap(_) => "overlap",
            Command::Transform(_) => "transform",
            Command::Simulate(_) => "simulate",
            Command::Replay(_) => "replay",
        }
    }

    pub fn out(&self) -> &PathBuf {
        match self {
            Command::Convolve(a) => &a.out,
            Command::Denoise(a) => &a.out,
            Command::Overlap(a) => &a.out,
            Command::Transform(a) => &a.out,
            Command::Simulate(a) => &a.out,
            Command::Replay(a) => &a.out,
        }
    }

    pub fn set_out(&mut self, out: PathBuf) {
        match self {
            Command::Convolve(a) => a.out = out,
            Command::Denoise(a) => a.out = out,
            Command::Overlap(a) => a.out = out,
            Command::Transform(a) => a.out = out,
            Command::Simulate(a) => a.out = out,
            Command::Replay(a) => a.out = out,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Op {
    Add,
    Mult,
    Circle,
}

#[derive(Args, Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridArgs {
    /// density nodes of the convolved measure
    #[arg(long, default_value_t = 2048)]
    pub nodes: usize,
    /// uniform scan points used to locate the support
    #[arg(long, default_value_t = 512)]
    pub scan: usize,
    /// boundary offset ε, relative to max(1, support radius)
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    /// largest accepted mass defect before renormalising
    #[arg(long, default_value_t = 0.02)]
    pub max_defect: f64,
}

impl GridArgs {
    pub fn config(&self) -> ConvolutionConfig {
        ConvolutionConfig {
            solver: SolverConfig { eps: self.eps, ..SolverConfig::default() },
            nodes: self.nodes,
            scan: self.scan,
            max_defect: self.max_defect,
        }
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvolveArgs {
    #[arg(long, value_enum)]
    pub op: Op,
    #[arg(long)]
    pub mu: PathBuf,
    #[arg(long)]
    pub nu: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenoiseKind {
    Additive,
    Mult,
    Circle,
    TweedieAdd,
    LedoitPeche,
    Cfree,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseArgs {
    #[arg(long, value_enum)]
    pub kind: DenoiseKind,
    /// signal law (additive, mult, circle)
    #[arg(long)]
    pub mu: Option<PathBuf>,
    /// noise law (additive, mult, circle)
    #[arg(long)]
    pub nu: Option<PathBuf>,
    /// observed law (tweedie-add, ledoit-peche)
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// id | indicator:a,b | poly:c0,c1,...
    #[arg(long, default_value = "id")]
    pub f: String,
    /// c-free case: arcsine | compression
    #[arg(long)]
    pub case: Option<String>,
    /// compression signal law
    #[arg(long)]
    pub signal: Option<PathBuf>,
    /// compression trace τ
    #[arg(long)]
    pub tau: Option<f64>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapArgs {
    #[arg(long, value_enum)]
    pub setting: Op,
    #[arg(long)]
    pub mu: PathBuf,
    #[arg(long)]
    pub nu: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformName {
    Cauchy,
    Moment,
    Boolean,
    Reciprocal,
    Hilbert,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformArgs {
    #[arg(long, value_enum, default_value = "cauchy")]
    pub kind: TransformName,
    #[arg(long)]
    pub measure: PathBuf,
    /// grid start (default: support start minus 10% of its width; 0 on the circle)
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<f64>,
    /// grid end (default: support end plus 10%; 2π on the circle)
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<f64>,
    #[arg(long, default_value_t = 801)]
    pub points: usize,
    /// distance from the real line (or from the unit circle)
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    /// also recover the measure from the boundary values of G
    #[arg(long)]
    pub invert: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    /// real symmetric Wigner noise
    Goe,
    /// complex Hermitian Wigner noise
    Gue,
    Wishart,
    Haar,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// full experiment config as JSON (overrides the model flags)
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelName>,
    /// signal law (measure JSON) or {"eigenvalues": [...]}
    #[arg(long)]
    pub signal: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    /// Wishart aspect p/N
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    /// analytic curve CSV (t,h[,h_imag],branch) to compare against instead of
    /// the computed free denoiser
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// directory for the replayed outputs
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}
