//! The `rsonerf` command line: synth, chroma, train, render, eval and bench.
//!
//! Every command reads an optional JSON config (`--config`) whose sections
//! are overridden by flags. Exit codes: 0 on success, 2 for usage and
//! validation errors, 3 when training diverges, 1 for other failures.
//! `RSONERF_THREADS` caps the number of worker threads.

mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::fields::FieldKind;
pub use config::{BenchSettings, RunConfig, SynthSettings};

pub const THREADS_ENV: &str = "RSONERF_THREADS";

#[derive(Debug, Parser)]
#[command(name = "rsonerf", version, about = "Train and evaluate radiance fields on posed images")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic orbit or spin dataset of the analytic satellite.
    Synth(SynthArgs),
    /// Remove a green-screen background from every PNG in a directory.
    Chroma(ChromaArgs),
    /// Train a field on a dataset and write checkpoints.
    Train(TrainArgs),
    /// Render views from a checkpoint.
    Render(RenderArgs),
    /// Score a checkpoint on held-out views.
    Eval(EvalArgs),
    /// Compare time-to-quality across field kinds.
    Bench(BenchArgs),
}

fn parse_kind(s: &str) -> Result<FieldKind, String> {
    s.parse()
        .map_err(|_| format!("unknown field kind `{s}` (expected vanilla, instant or dnerf)"))
}

fn parse_rgb(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| format!("expected r,g,b, got `{s}`"))
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub views: Option<usize>,
    /// Lighting intensity in (0, 1].
    #[arg(long)]
    pub lighting: Option<f64>,
    /// Spin rate in degrees per second; produces a time-stamped sequence.
    #[arg(long)]
    pub spin: Option<f64>,
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub fov_deg: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ChromaArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub key_hue: Option<f64>,
    #[arg(long)]
    pub hue_tolerance: Option<f64>,
    #[arg(long)]
    pub min_saturation: Option<f64>,
    #[arg(long)]
    pub min_value: Option<f64>,
    #[arg(long)]
    pub despill: Option<f64>,
    #[arg(long)]
    pub feather: Option<usize>,
}

/// Training flags shared by `train` and `bench`.
#[derive(Debug, Args, Clone, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub rays: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub min_lr: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub holdout: Option<f64>,
    #[arg(long)]
    pub eval_views: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_parser = parse_rgb)]
    pub background: Option<[f64; 3]>,
    #[arg(long)]
    pub plateau_db: Option<f64>,
    #[arg(long)]
    pub plateau_evals: Option<usize>,
    /// Hash grid levels.
    #[arg(long)]
    pub hash_levels: Option<usize>,
    /// Hash table entries per level (a power of two).
    #[arg(long)]
    pub hash_table_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// vanilla, instant or dnerf.
    #[arg(long, value_parser = parse_kind)]
    pub kind: FieldKind,
    /// Directory for checkpoints and the eval history.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset (or manifest) supplying the camera poses.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Frames to render; all frames when omitted.
    #[arg(long, value_delimiter = ',')]
    pub frames: Option<Vec<usize>>,
    /// Render a 3x3 mosaic around this frame: its ground truth in the
    /// center and eight novel azimuths around it.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Azimuth spacing of the mosaic in degrees.
    #[arg(long, default_value_t = 10.0)]
    pub grid_step: f64,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_parser = parse_rgb)]
    pub background: Option<[f64; 3]>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Frames to score; the checkpoint's held-out frames when omitted.
    #[arg(long, value_delimiter = ',')]
    pub holdout: Option<Vec<usize>>,
    /// `view_id value` lines merged in as an LPIPS column.
    #[arg(long)]
    pub lpips_file: Option<PathBuf>,
    /// Directory for metrics.txt and metrics.jsonl.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
    pub kinds: Option<Vec<FieldKind>>,
    /// Held-out PSNR target in dB.
    #[arg(long)]
    pub target: Option<f64>,
    #[arg(long)]
    pub timeout: Option<f64>,
    #[arg(long)]
    pub timeout_factor: Option<f64>,
    /// Writes the table here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFiniteLoss { .. } => 3,
        Error::Io(_) | Error::Image(_) => 1,
        _ => 2,
    }
}

fn thread_cap() -> Result<Option<usize>, String> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("{THREADS_ENV} must be a positive integer, got `{v}`")),
        },
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Normal output goes to `out`, diagnostics to `err`.
pub fn run_with<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let sink: &mut (dyn Write + Send) = if code == 0 { out } else { err };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    let threads = match thread_cap() {
        Ok(t) => t,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return 2;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker threads: {e}");
            return 1;
        }
    };
    match pool.install(|| commands::dispatch(&cli, out, err)) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                Error::Validation(errs) => {
                    let _ = writeln!(err, "error: invalid configuration");
                    for m in errs {
                        let _ = writeln!(err, "  - {m}");
                    }
                }
                other => {
                    let _ = writeln!(err, "error: {other}");
                }
            }
            exit_code(&e)
        }
    }
}

/// [`run_with`] on the process arguments and standard streams.
pub fn run() -> i32 {
    run_with(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr())
}
