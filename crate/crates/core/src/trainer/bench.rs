use std::fmt::Write as _;

use super::run::{train_loop, LoopOptions, StopReason};
use super::TrainConfig;
use crate::dataset::DatasetManifest;
use crate::error::Result;
use crate::fields::{FieldKind, RadianceField};
use crate::raster::Image;

/// Time-to-quality of one field kind.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub kind: FieldKind,
    pub device: String,
    /// Training seconds until the target was first reached, or until the
    /// run stopped if it never was.
    pub seconds: f64,
    pub reached: bool,
    pub steps: usize,
    pub final_psnr: f64,
}

/// When to give up on a kind.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchLimits {
    pub timeout_seconds: f64,
    /// Once some kind has reached the target in `s` seconds, later kinds get
    /// at most `factor * s`.
    pub relative_timeout: Option<f64>,
}

impl Default for BenchLimits {
    fn default() -> Self {
        Self {
            timeout_seconds: 3600.0,
            relative_timeout: None,
        }
    }
}

pub fn device_description() -> String {
    format!(
        "cpu {} ({} worker threads)",
        std::env::consts::ARCH,
        rayon::current_num_threads()
    )
}

/// Trains each kind from `init(kind)` with `config(kind)` until the held-out
/// PSNR reaches `target_db`, the timeout passes or the step budget runs
/// out. Evaluation time is not counted.
pub fn bench(
    kinds: &[FieldKind],
    manifest: &DatasetManifest,
    images: &[Image],
    target_db: f64,
    limits: &BenchLimits,
    config: impl Fn(FieldKind) -> TrainConfig,
    init: impl Fn(FieldKind, &TrainConfig) -> Result<RadianceField<f32>>,
) -> Result<Vec<BenchRow>> {
    let mut rows: Vec<BenchRow> = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let cfg = TrainConfig {
            plateau_evals: 0,
            ..config(kind)
        };
        let best = rows.iter().filter(|r| r.reached).map(|r| r.seconds).reduce(f64::min);
        let timeout = match (limits.relative_timeout, best) {
            (Some(f), Some(b)) => limits.timeout_seconds.min(f * b),
            _ => limits.timeout_seconds,
        };
        let opts = LoopOptions {
            checkpoint_dir: None,
            target_psnr: Some(target_db),
            time_budget_seconds: Some(timeout),
        };
        let out = train_loop(init(kind, &cfg)?, manifest, images, &cfg, &opts, |_| {})?;
        let last = out.history.last().expect("train_loop always evaluates");
        rows.push(BenchRow {
            kind,
            device: device_description(),
            seconds: last.seconds,
            reached: out.stop == StopReason::TargetReached,
            steps: last.step,
            final_psnr: last.psnr,
        });
    }
    Ok(rows)
}

/// How many times faster `fast` reached the target than `slow`. When `slow`
/// never got there the ratio is a lower bound.
pub fn speedup(rows: &[BenchRow], fast: FieldKind, slow: FieldKind) -> Option<f64> {
    let f = rows.iter().find(|r| r.kind == fast && r.reached)?;
    let s = rows.iter().find(|r| r.kind == slow)?;
    Some(s.seconds / f.seconds.max(1e-9))
}

pub fn format_bench_table(rows: &[BenchRow], target_db: f64) -> String {
    let mut out = format!("target held-out PSNR {target_db:.2} dB\n");
    let _ = writeln!(
        out,
        "{:<8} {:<32} {:>10} {:>8} {:>8} {:>10}",
        "kind", "device", "seconds", "reached", "steps", "psnr"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<8} {:<32} {:>10.2} {:>8} {:>8} {:>10.3}",
            r.kind.name(),
            r.device,
            r.seconds,
            if r.reached { "yes" } else { "no" },
            r.steps,
            r.final_psnr
        );
    }
    out
}
