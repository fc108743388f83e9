mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use abfl_core::eval::Protocol;
use abfl_core::fit::LossKind;
use abfl_core::loss::GammaMode;

pub const SCHEMA_VERSION: u32 = 1;

/// Oriented-box geometry, von Mises angle losses and rotated-detection tools.
///
/// Angles on the command line are in degrees.
#[derive(Debug, Parser)]
#[command(name = "abfl", version)]
pub struct Cli {
    /// File of `key=value` lines supplying defaults for the subcommand's flags
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for per-image and per-cell work
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample loss and gradient over Δ ∈ [−π, π] as CSV
    LossCurve(LossCurveArgs),
    /// Run gradient descent on one angle and print the trajectory
    Simulate(SimulateArgs),
    /// Run many start/target pairs and compare loss kinds
    BoundaryReport(BoundaryArgs),
    /// Score DOTA-format detections against label files
    Eval(EvalArgs),
    /// Write a patch-grid manifest for an image
    Tile(TileArgs),
    /// Map patch detections back to full images and de-duplicate them
    Merge(MergeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GammaArg {
    Exact,
    Table,
}

impl From<GammaArg> for GammaMode {
    fn from(g: GammaArg) -> Self {
        match g {
            GammaArg::Exact => GammaMode::Exact,
            GammaArg::Table => GammaMode::Table,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LossArg {
    #[value(name = "abfl")]
    Abfl,
    #[value(name = "abfl_ast")]
    AbflAst,
    #[value(name = "smooth_l1_raw")]
    SmoothL1Raw,
    #[value(name = "strategy2")]
    Strategy2,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Abfl => LossKind::Abfl,
            LossArg::AbflAst => LossKind::AbflAst,
            LossArg::SmoothL1Raw => LossKind::SmoothL1Raw,
            LossArg::Strategy2 => LossKind::Strategy2,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Voc07,
    Coco101,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Voc07 => Protocol::Voc07,
            ProtocolArg::Coco101 => Protocol::Coco101,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct LossCurveArgs {
    /// Concentration values, comma separated
    #[arg(long, value_delimiter = ',', default_value = "10")]
    kappa: Vec<f64>,
    #[arg(long, value_enum, default_value_t = GammaArg::Exact)]
    gamma_mode: GammaArg,
    /// Near-square threshold; adds columns for the near-square variant
    #[arg(long)]
    ast: Option<f64>,
    /// Aspect ratio used for the near-square columns
    #[arg(long, default_value_t = 1.0)]
    aspect: f64,
    #[arg(long, default_value_t = 361, value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long, default_value_t = 10.0)]
    kappa: f64,
    #[arg(long, value_enum, default_value_t = GammaArg::Exact)]
    gamma_mode: GammaArg,
    /// Near-square threshold for abfl_ast
    #[arg(long, default_value_t = abfl_core::loss::DEFAULT_AST)]
    ast: f64,
    /// Box aspect ratio for abfl_ast
    #[arg(long)]
    aspect: Option<f64>,
    /// Maximum number of iterations
    #[arg(long, default_value_t = 5000)]
    steps: usize,
    #[arg(long, default_value_t = 0.01)]
    step_size: f64,
    /// Stop once the circular error is below this many degrees
    #[arg(long, default_value_t = 1e-3_f64.to_degrees())]
    tol: f64,
    /// Start offset (degrees) applied at a stationary maximum
    #[arg(long, default_value_t = 1e-3_f64.to_degrees())]
    jitter: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Target angle in degrees
    #[arg(long, allow_negative_numbers = true)]
    gt: f64,
    /// Start angle in degrees
    #[arg(long, allow_negative_numbers = true)]
    init: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Abfl)]
    loss: LossArg,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Debug, Args)]
struct BoundaryArgs {
    /// Angles per axis; the grid has n² pairs
    #[arg(long, default_value_t = 36)]
    grid: usize,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "abfl,smooth_l1_raw"
    )]
    losses: Vec<LossArg>,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Directory of `<image_id>.txt` label files
    #[arg(long)]
    gt_dir: PathBuf,
    /// Directory of `Task1_<class>.txt` detection files
    #[arg(long)]
    det_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = ProtocolArg::Voc07)]
    protocol: ProtocolArg,
    /// IoU thresholds, comma separated [default: 0.50:0.05:0.95]
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Map unknown class names to a sentinel instead of failing
    #[arg(long)]
    lenient: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TileArgs {
    #[arg(long)]
    width: u32,
    #[arg(long)]
    height: u32,
    #[arg(long, default_value_t = 1024)]
    patch: u32,
    #[arg(long, default_value_t = 200, conflicts_with = "stride")]
    overlap: u32,
    /// Resize factors, comma separated; enables multi-scale tiling
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    /// Step between patches for multi-scale tiling
    #[arg(long, requires = "scales")]
    stride: Option<u32>,
    #[arg(long, default_value = "image")]
    image_id: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MergeArgs {
    /// Directory of `Task1_<class>.txt` files whose image ids are patch ids
    #[arg(long)]
    dets: PathBuf,
    /// Grid manifests from `tile`; repeat for several images
    #[arg(long, required = true)]
    manifest: Vec<PathBuf>,
    #[arg(long, default_value_t = abfl_core::data_io::DEFAULT_MERGE_IOU)]
    nms_iou: f64,
    /// Output directory for merged `Task1_<class>.txt` files
    #[arg(long)]
    out: PathBuf,
}

fn error_code(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<abfl_core::Error>() {
            return e.code();
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
        if cause.is::<serde_json::Error>() || cause.is::<csv::Error>() {
            return "parse";
        }
    }
    "error"
}

fn exit_code(code: &str) -> u8 {
    match code {
        "usage" | "config" => 2,
        _ => 1,
    }
}

fn report(err: &anyhow::Error) -> ExitCode {
    let code = error_code(err);
    eprintln!("error[{code}]: {err:#}");
    ExitCode::from(exit_code(code))
}

fn main() -> ExitCode {
    let argv = match config::apply(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            let msg = text.strip_prefix("error: ").unwrap_or(&text);
            eprint!("error[usage]: {msg}");
            return ExitCode::from(2);
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs as usize)
        .build();
    let result = match pool {
        Ok(pool) => pool.install(|| commands::run(cli.command)),
        Err(e) => Err(e.into()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
