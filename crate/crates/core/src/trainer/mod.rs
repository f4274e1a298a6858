//! Photometric optimization of radiance fields, held-out evaluation and the
//! time-to-quality benchmark.

mod bench;
mod run;
#[cfg(test)]
mod tests;

pub use bench::{bench, device_description, format_bench_table, speedup, BenchLimits, BenchRow};
pub use run::{
    evaluate, ground_truth, plateaued, train_loop, Checkpoint, EvalRecord, LoopOptions, StopReason,
    TrainOutcome, Trainer,
};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, AdamState, Real, Tape, Tensor};
use crate::dataset::DatasetManifest;
use crate::error::{contract, Error, Result};
use crate::fields::{FieldKind, RadianceField};
use crate::raster::Image;
use crate::renderer::{pixel_to_ray, Ray, RenderConfig, SampleBatch};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_steps: usize,
    pub rays_per_batch: usize,
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate after every step.
    pub lr_decay: f64,
    /// Floor for the decayed learning rate.
    pub min_learning_rate: f64,
    /// Steps between held-out evaluations. 0 evaluates only at the start and
    /// the end.
    pub eval_every: usize,
    pub holdout_fraction: f64,
    /// Evaluate on at most this many held-out views.
    pub eval_views: Option<usize>,
    pub seed: u64,
    pub background_rgb: [f64; 3],
    pub samples_per_ray: usize,
    pub stratified_jitter: bool,
    /// Stop once each of the last `plateau_evals` eval-to-eval PSNR gains is
    /// below `plateau_db`. `plateau_evals = 0` disables the rule.
    pub plateau_db: f64,
    pub plateau_evals: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_kind(FieldKind::Instant)
    }
}

impl TrainConfig {
    /// Defaults per field kind: 5e-4 constant for the MLP fields, 1e-2
    /// decaying to 1e-3 over 20000 steps for the hash-grid field.
    pub fn for_kind(kind: FieldKind) -> Self {
        let (learning_rate, lr_decay, min_learning_rate) = match kind {
            FieldKind::Instant => (1e-2, 0.1f64.powf(1.0 / 20000.0), 1e-3),
            FieldKind::Vanilla | FieldKind::Deformed => (5e-4, 1.0, 5e-4),
        };
        Self {
            max_steps: 20000,
            rays_per_batch: 4096,
            learning_rate,
            lr_decay,
            min_learning_rate,
            eval_every: 1000,
            holdout_fraction: 0.1,
            eval_views: None,
            seed: 0,
            background_rgb: [0.0; 3],
            samples_per_ray: 64,
            stratified_jitter: true,
            plateau_db: 0.1,
            plateau_evals: 3,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.rays_per_batch == 0 {
            errs.push("rays_per_batch must be > 0".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            errs.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            errs.push(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay));
        }
        if !(self.min_learning_rate >= 0.0 && self.min_learning_rate <= self.learning_rate) {
            errs.push(format!(
                "min_learning_rate must lie in [0, learning_rate], got {}",
                self.min_learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            errs.push(format!("holdout_fraction must lie in [0, 1), got {}", self.holdout_fraction));
        }
        if self.eval_views == Some(0) {
            errs.push("eval_views must be > 0 when set".to_string());
        }
        if self.background_rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
            errs.push(format!("background_rgb {:?} outside [0,1]", self.background_rgb));
        }
        if self.samples_per_ray == 0 {
            errs.push("samples_per_ray must be > 0".to_string());
        }
        if !(self.plateau_db >= 0.0) {
            errs.push(format!("plateau_db must be >= 0, got {}", self.plateau_db));
        }
        errs
    }

    /// [`validate`](Self::validate) plus the checks that depend on the
    /// dataset.
    pub fn validate_for(&self, manifest: &DatasetManifest, kind: FieldKind) -> Vec<String> {
        let mut errs = self.validate();
        errs.extend(manifest.validate_for_training());
        let n = manifest.frames.len();
        if n > 0 && holdout_count(n, self.holdout_fraction) >= n {
            errs.push(format!(
                "holdout_fraction {} leaves no training frame out of {n}",
                self.holdout_fraction
            ));
        }
        if kind.needs_time() {
            if let Some(i) = manifest.frames.iter().position(|f| f.time.is_none()) {
                errs.push(format!("{kind} training needs `frames[{i}].time`"));
            }
        }
        errs
    }

    /// Learning rate in effect at `step`.
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        (self.learning_rate * self.lr_decay.powi(step.min(i32::MAX as usize) as i32))
            .max(self.min_learning_rate)
    }

    pub fn render_config(&self, jitter: bool) -> RenderConfig {
        RenderConfig {
            samples_per_ray: self.samples_per_ray,
            background_rgb: self.background_rgb,
            stratified_jitter: jitter && self.stratified_jitter,
            rng_seed: self.seed,
        }
    }
}

fn holdout_count(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction).round() as usize
}

/// Frames kept out of training: `round(n * fraction)` indices spread evenly
/// over the sequence.
pub fn holdout_indices(n: usize, fraction: f64) -> Vec<usize> {
    let h = holdout_count(n, fraction).min(n.saturating_sub(1));
    (0..h)
        .map(|k| ((k as f64 + 0.5) * n as f64 / h as f64) as usize)
        .collect()
}

/// Ground-truth color of one pixel: RGBA is composited over `background`.
pub fn target_color(img: &Image, x: usize, y: usize, background: [f64; 3]) -> [f64; 3] {
    let p = img.pixel(x, y);
    match p.len() {
        4 => {
            let a = p[3] as f64;
            std::array::from_fn(|k| a * p[k] as f64 + (1.0 - a) * background[k])
        }
        1 | 2 => [p[0] as f64; 3],
        _ => [p[0] as f64, p[1] as f64, p[2] as f64],
    }
}

/// Training rays with their targets.
#[derive(Clone, Debug, PartialEq)]
pub struct RayBatch {
    pub rays: Vec<Ray>,
    pub targets: Vec<[f64; 3]>,
    pub times: Option<Vec<f64>>,
    /// Frame and pixel index each ray was drawn from.
    pub frames: Vec<usize>,
    pub pixels: Vec<usize>,
    /// Per-ray jitter stream ids.
    pub streams: Vec<u64>,
}

impl RayBatch {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    fn slice(&self, range: std::ops::Range<usize>) -> (Vec<[f64; 3]>, Option<&[f64]>) {
        (
            self.targets[range.clone()].to_vec(),
            self.times.as_ref().map(|t| &t[range]),
        )
    }
}

/// Draws `n` pixels uniformly over all (training frame, pixel) pairs.
pub fn sample_ray_batch(
    manifest: &DatasetManifest,
    images: &[Image],
    train_frames: &[usize],
    n: usize,
    background: [f64; 3],
    rng: &mut impl Rng,
) -> Result<RayBatch> {
    if n == 0 || train_frames.is_empty() {
        return Err(contract(format!(
            "need n > 0 and at least one training frame, got n = {n} and {} frames",
            train_frames.len()
        )));
    }
    if images.len() != manifest.frames.len() {
        return Err(contract(format!(
            "{} images for {} frames",
            images.len(),
            manifest.frames.len()
        )));
    }
    let intr = &manifest.intrinsics;
    let per_frame = intr.pixel_count();
    let times = manifest.has_times().then(|| Vec::with_capacity(n));
    let mut batch = RayBatch {
        rays: Vec::with_capacity(n),
        targets: Vec::with_capacity(n),
        times,
        frames: Vec::with_capacity(n),
        pixels: Vec::with_capacity(n),
        streams: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let u = rng.gen_range(0..train_frames.len() * per_frame);
        let frame = train_frames[u / per_frame];
        let pixel = u % per_frame;
        let (x, y) = (pixel % intr.width, pixel / intr.width);
        batch.rays.push(pixel_to_ray(x, y, intr, &manifest.unit_pose(frame))?);
        batch.targets.push(target_color(&images[frame], x, y, background));
        if let Some(t) = batch.times.as_mut() {
            t.push(manifest.frames[frame].time.expect("checked by has_times"));
        }
        batch.frames.push(frame);
        batch.pixels.push(pixel);
        batch.streams.push(rng.gen());
    }
    Ok(batch)
}

/// Like `f64::max`, but a NaN argument wins so that diagnostics show it.
fn max_keep_nan(m: f64, s: f64) -> f64 {
    if s.is_nan() || s > m {
        s
    } else {
        m
    }
}

/// Rays per gradient buffer. Fixed so that results do not depend on the
/// number of worker threads.
const GRAD_CHUNK: usize = 1024;

struct ChunkGrad<S> {
    sse: f64,
    grads: Vec<Tensor<S>>,
    max_sigma: f64,
}

fn chunk_gradient<S: Real>(
    field: &RadianceField<S>,
    batch: &RayBatch,
    range: std::ops::Range<usize>,
    cfg: &RenderConfig,
) -> Result<ChunkGrad<S>> {
    let n = range.len();
    let (targets, times) = batch.slice(range.clone());
    let times = if field.kind().needs_time() {
        Some(times.ok_or_else(|| contract(format!("{} training needs frame times", field.kind())))?)
    } else {
        None
    };
    let samples = SampleBatch::<S>::build(&batch.rays[range.clone()], &batch.streams[range], times, cfg)?;
    let target = Tensor::new(vec![n, 3], targets.iter().flatten().map(|&v| S::of(v)).collect())?;

    let Some(query) = &samples.query else {
        // Every ray missed the cube: the prediction is the background.
        let sse = targets
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k] - cfg.background_rgb[k]).powi(2)))
            .sum();
        let grads = field.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        return Ok(ChunkGrad {
            sse,
            grads,
            max_sigma: 0.0,
        });
    };
    let mut tape = Tape::new();
    let vars = tape.bind_params(field.params());
    let out = field.forward(&mut tape, &vars, query)?;
    let max_sigma = tape
        .value(out.sigma)
        .data()
        .iter()
        .map(|s| s.f64())
        .fold(0.0f64, max_keep_nan);
    let pred = samples.composite_on_tape(&mut tape, out.sigma, out.rgb, cfg.background_rgb)?;
    let loss = tape.mse_loss(pred, target)?;
    let sse = tape.value(loss).item()?.f64() * (3 * n) as f64;
    let grads = tape.backward(loss)?.wrt(&tape, &vars);
    Ok(ChunkGrad {
        sse,
        grads,
        max_sigma,
    })
}

/// Renders every ray, takes the mean squared error against the targets,
/// backpropagates and applies one Adam update. Returns the loss.
///
/// Rays are split into fixed-size chunks processed in parallel, each with
/// its own gradient buffer; the buffers are summed in chunk order.
pub fn train_step<S: Real>(
    field: &mut RadianceField<S>,
    batch: &RayBatch,
    adam: &mut AdamState<S>,
    cfg: &RenderConfig,
    step: usize,
) -> Result<f64> {
    if batch.is_empty() || batch.targets.len() != batch.len() || batch.streams.len() != batch.len() {
        return Err(contract("ray batch is empty or inconsistent"));
    }
    let n = batch.len();
    let ranges: Vec<_> = (0..n).step_by(GRAD_CHUNK).map(|s| s..(s + GRAD_CHUNK).min(n)).collect();
    let frozen = &*field;
    let parts = ranges
        .par_iter()
        .map(|r| chunk_gradient(frozen, batch, r.clone(), cfg))
        .collect::<Result<Vec<_>>>()?;

    let loss = parts.iter().map(|p| p.sse).sum::<f64>() / (3 * n) as f64;
    let max_sigma = parts.iter().map(|p| p.max_sigma).fold(0.0f64, max_keep_nan);
    let mut parts = parts.into_iter().zip(&ranges);
    let (first, r0) = parts.next().expect("at least one chunk");
    let scale = |r: &std::ops::Range<usize>| S::of(r.len() as f64 / n as f64);
    let mut grads = first.grads;
    let s0 = scale(r0);
    for g in &mut grads {
        g.data_mut().iter_mut().for_each(|v| *v *= s0);
    }
    for (part, r) in parts {
        let s = scale(r);
        for (acc, g) in grads.iter_mut().zip(&part.grads) {
            for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b * s;
            }
        }
    }

    let finite = loss.is_finite() && grads.iter().all(Tensor::is_finite);
    if !finite {
        return Err(Error::NonFiniteLoss {
            step,
            learning_rate: adam.config.learning_rate,
            max_sigma,
        });
    }
    adam_step(field.params_mut(), &grads, adam)?;
    Ok(loss)
}
