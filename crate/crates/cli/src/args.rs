use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qqe::embedding::EmbeddingInit;
use qqe::metrics::{Bandwidth, KernelSpec, KlPairing};
use qqe::reference::StandardFamily;
use qqe::{GradientForm, Mode};

#[derive(Debug, Parser)]
#[command(name = "qqe", version, about = "Quantile-quantile embedding: move a sample onto a reference distribution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transform a dataset towards a reference distribution.
    Transform(RunArgs),
    /// Initialise a low-dimensional embedding, then transform it.
    Embed(EmbedArgs),
    /// Compare two samples (KL, MMD², HSIC and optionally Recall@k).
    Metrics(MetricsArgs),
    /// Draw a sample from a named family and write it as CSV.
    Sample(SampleArgs),
}

/// Where the reference sample comes from. With `--supervised`, give either one
/// value shared by every class or one value per class in ascending label order.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ReferenceArgs {
    /// CSV file holding an empirical reference sample (resized to the data size).
    #[arg(long, value_name = "PATH")]
    pub reference: Vec<PathBuf>,
    /// Named family, `name[:p1,p2,...]`, e.g. `uniform:0.5,1.5`, `ring:0.8,1`, `gmm:0.5,-5,0,5,0`.
    /// Families: uniform-rect (uniform), gaussian, gmm, ring, filled-circle (circle),
    /// s-shape, helix, triangle, diamond, thick-square.
    #[arg(long = "ref-dist", value_name = "SPEC")]
    pub ref_dist: Vec<StandardFamily>,
    /// CDF table CSV: `value,probability` column pairs, one pair per dimension.
    /// Repeat the flag to concatenate dimensions from several files.
    #[arg(long = "ref-cdf", value_name = "PATH")]
    pub ref_cdf: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Exact,
    Shape,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Shape => Mode::Shape,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GradientArg {
    Full,
    OneSided,
}

impl From<GradientArg> for GradientForm {
    fn from(g: GradientArg) -> Self {
        match g {
            GradientArg::Full => GradientForm::Full,
            GradientArg::OneSided => GradientForm::OneSided,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Input CSV, one point per row; a final header column `label` holds classes.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    #[command(flatten)]
    pub reference: ReferenceArgs,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Transform every class towards its own reference.
    #[arg(long)]
    pub supervised: bool,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    #[arg(long = "snapshot-every")]
    pub snapshot_every: Option<usize>,
    /// Relative cost change below which the run stops.
    #[arg(long = "rel-tol")]
    pub rel_tol: Option<f64>,
    /// Re-run matching against the current points every N iterations.
    #[arg(long = "rematch-every", value_name = "N")]
    pub rematch_every: Option<usize>,
    #[arg(long, value_enum)]
    pub gradient: Option<GradientArg>,
    /// JSON file with configuration fields; command-line flags take precedence.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run directory for snapshots, manifest.json and metrics.json.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Also write before/after metrics to metrics.json.
    #[arg(long)]
    pub metrics: bool,
    /// Neighbour counts for Recall@k in the metrics report (labelled data only).
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    pub ks: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// `pca:P` or `external:PATH` (headerless CSV, one row per data point).
    #[arg(long, value_name = "SPEC")]
    pub init: EmbeddingInit,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PairingArg {
    /// Each density at its own sample, paired by row.
    Index,
    /// Both densities at the points of the first sample.
    Shared,
}

impl From<PairingArg> for KlPairing {
    fn from(p: PairingArg) -> Self {
        match p {
            PairingArg::Index => KlPairing::IndexPaired,
            PairingArg::Shared => KlPairing::SharedPoints,
        }
    }
}

pub fn parse_kernel(s: &str) -> Result<KernelSpec, String> {
    match s.split_once(':') {
        None if s == "rbf" => Ok(KernelSpec::Rbf(Bandwidth::MedianHeuristic)),
        None if s == "linear" => Ok(KernelSpec::Linear),
        Some(("rbf", h)) => {
            let h: f64 = h.parse().map_err(|_| format!("bad bandwidth `{h}`"))?;
            let k = KernelSpec::Rbf(Bandwidth::Fixed(h));
            k.validate().map_err(|e| e.to_string())?;
            Ok(k)
        }
        _ => Err(format!("expected rbf, rbf:H or linear, got `{s}`")),
    }
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long, value_name = "PATH")]
    pub a: PathBuf,
    /// Second sample; resampled to the size of `--a` when the sizes differ.
    #[arg(long, value_name = "PATH")]
    pub b: PathBuf,
    /// `rbf` (median-heuristic bandwidth), `rbf:H` or `linear`.
    #[arg(long, default_value = "rbf", value_parser = parse_kernel)]
    pub kernel: KernelSpec,
    /// Report Recall@k of `--a`, with labels from its label column or from PATH.
    #[arg(long, value_name = "PATH", num_args = 0..=1)]
    pub labels: Option<Option<PathBuf>>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    pub ks: Vec<usize>,
    #[arg(long, value_enum, default_value = "index")]
    pub pairing: PairingArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long = "ref-dist", value_name = "SPEC")]
    pub ref_dist: StandardFamily,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}
