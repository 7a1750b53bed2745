use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

mod commands;
mod input;

use splattrack::error::IoError;
use splattrack::eval::EvalError;
use splattrack::pipeline::{PipelineError, TrackerKind};

#[derive(Debug, Parser)]
#[command(name = "splattrack", version, about = "Gaussian-map RGB SLAM with feed-forward tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the online pipeline over a sequence.
    Run(RunArgs),
    /// Write a synthetic sequence in TUM layout.
    Synth(SynthArgs),
    /// Compute metrics between an estimate and ground truth.
    Eval(EvalArgs),
    /// Render a saved map at a pose.
    Render(RenderArgs),
    /// Repeat a run over values of one tracking parameter.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TrackerArg {
    Ff,
    #[value(name = "ff-nolgr")]
    FfNolgr,
    Iter,
}

impl From<TrackerArg> for TrackerKind {
    fn from(t: TrackerArg) -> Self {
        match t {
            TrackerArg::Ff => TrackerKind::FeedForward,
            TrackerArg::FfNolgr => TrackerKind::FeedForwardNoLgr,
            TrackerArg::Iter => TrackerKind::Iterative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExecArg {
    Sequential,
    Parallel,
}

/// Input and config flags shared by `run` and `sweep`.
#[derive(Debug, Args)]
struct PipelineArgs {
    /// TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `tum:DIR` or `synth:SPEC` (a preset name or a scene JSON path).
    #[arg(long)]
    input: String,
    #[arg(long, value_enum)]
    tracker: Option<TrackerArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Process only the first N frames.
    #[arg(long)]
    frames: Option<usize>,
    /// Pseudo-depth PNG directory (`{index:06}.png`) for TUM input.
    #[arg(long)]
    depth_dir: Option<PathBuf>,
    /// Flow file directory for TUM input.
    #[arg(long)]
    flow_dir: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, value_enum)]
    exec: Option<ExecArg>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also write one PLY per frame under `clouds/`.
    #[arg(long)]
    clouds: bool,
    /// Dump each frame's local graph under `graphs/`.
    #[arg(long)]
    dump_graph: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Preset name (orbit, static, constant_velocity, random_walk) or a JSON
    /// sequence spec.
    #[arg(long, default_value = "orbit")]
    spec: String,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Ate,
    Psnr,
    Ssim,
    #[value(name = "ms-ssim")]
    MsSsim,
    Depthl1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    est: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_enum, default_value = "ate")]
    metric: Vec<Metric>,
    /// Similarity instead of rigid alignment.
    #[arg(long)]
    sim3: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// `map.ply` with its `map.gmap` sidecar, or the sidecar itself.
    #[arg(long)]
    map: PathBuf,
    /// TUM pose line: `timestamp tx ty tz qx qy qz qw`.
    #[arg(long, allow_hyphen_values = true)]
    pose: String,
    #[arg(long)]
    out: PathBuf,
    /// Optional 16-bit depth PNG output.
    #[arg(long)]
    depth_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepParam {
    #[value(name = "N")]
    N,
    Alpha,
    Theta,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    values: Vec<f64>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Io(e) => CliError::Io(e),
            PipelineError::Flow(splattrack::flow::FlowError::Io(e)) => CliError::Io(e),
            PipelineError::Config(m) => CliError::Usage(m),
            PipelineError::Depth(m) => CliError::Io(IoError::Format {
                path: PathBuf::from("<depth>"),
                message: m,
            }),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Synth(a) => commands::synth(a),
        Command::Eval(a) => commands::eval(a),
        Command::Render(a) => commands::render(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
