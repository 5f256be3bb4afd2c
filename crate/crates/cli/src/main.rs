//! `metra`: mesh quality, Riemannian measures, r-adaptation and
//! approximation-error pipelines over JSON mesh and metric files.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] metra_core::Error),
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Output(String),
    #[error("invalid mesh: elements {0:?} have non-positive Jacobians")]
    InvalidElements(Vec<usize>),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use metra_core::Error as E;
        match self {
            CliError::Core(E::InvalidMesh { .. }) | CliError::InvalidElements(_) => 3,
            CliError::Core(E::Solver(_) | E::Location(_)) => 4,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "metra", version, about = "Metric-aware analysis and optimization of curved high-order meshes")]
struct Cli {
    /// Worker threads for element loops (default: all cores). Results do not
    /// depend on this value.
    #[arg(long, env = "METRA_THREADS", global = true)]
    threads: Option<usize>,
    /// Record wallclock time in manifests and traces.
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Structured simplicial mesh of a box.
    GenMesh(GenMeshArgs),
    /// Metric field file from a preset, optionally sampled on a background mesh.
    GenMetric(GenMetricArgs),
    /// Element-wise distortion and quality statistics.
    Quality(QualityArgs),
    /// Riemannian lengths, areas and volumes with density histograms.
    Measure(MeasureArgs),
    /// Node relocation minimizing the integrated squared distortion.
    Optimize(OptimizeArgs),
    /// Interpolation and best-approximation errors of a test function.
    Error(ErrorArgs),
    /// Jacobian sign check on a dense sampling of every element.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct GenMeshArgs {
    /// `LO,HI` for every axis, or one `LO,HI` pair per axis.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-0.5,0.5")]
    domain: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    degree: usize,
    /// Cells per axis.
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    Constant,
    BoundaryLayer,
}

#[derive(Debug, Args)]
struct GenMetricArgs {
    #[arg(long, value_enum)]
    preset: Preset,
    /// Constant preset: one size per axis, or a single size for the last axis
    /// (the others get 1).
    #[arg(long, value_delimiter = ',')]
    h: Vec<f64>,
    /// Dimension of a constant field given by a single `--h`.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long)]
    h_m: Option<f64>,
    #[arg(long)]
    h_min: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Straight layer along y = 0 instead of the cosine curve.
    #[arg(long)]
    no_deformation: bool,
    /// Layer along 10 y + cos(2 pi x) = 0.
    #[arg(long)]
    flip: bool,
    /// Sample the preset at the nodes of this mesh and write a discrete field.
    #[arg(long)]
    background: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ObjectiveArg {
    SizeShape,
    Shape,
}

impl From<ObjectiveArg> for metra_core::distortion::Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::SizeShape => Self::SizeShape,
            ObjectiveArg::Shape => Self::ShapeOnly,
        }
    }
}

#[derive(Debug, Args)]
struct QualityArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    metric: PathBuf,
    #[arg(long, value_enum, default_value = "size-shape")]
    objective: ObjectiveArg,
    /// JSON report (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-element CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    export_vtk: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MeasureArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    metric: PathBuf,
    #[arg(long, default_value_t = metra_core::measure::DEFAULT_BINS)]
    bins: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Histogram CSV (one row per entity dimension and bin).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    metric: PathBuf,
    /// Optimizer settings as JSON; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Optimized mesh.
    #[arg(long)]
    out: PathBuf,
    /// Before/after JSON report (stdout when omitted).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-iteration CSV trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    export_vtk: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FunctionArg {
    Arctan2d,
    Arctan3d,
}

#[derive(Debug, Args)]
struct ErrorArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long, value_enum)]
    function: FunctionArg,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-element CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    metric: PathBuf,
    /// Sample points per edge: an integer or `<k>p` for k times the degree.
    #[arg(long, default_value = "3p")]
    degree_sampling: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure {n} threads: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads(cli.threads)?;
    let timing = cli.timing;
    match cli.command {
        Command::GenMesh(a) => commands::gen_mesh(a),
        Command::GenMetric(a) => commands::gen_metric(a),
        Command::Quality(a) => commands::quality(a, timing),
        Command::Measure(a) => commands::measure(a, timing),
        Command::Optimize(a) => commands::optimize(a, timing),
        Command::Error(a) => commands::error(a, timing),
        Command::Validate(a) => commands::validate(a, timing),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("metra: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
