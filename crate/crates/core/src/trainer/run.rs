use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{holdout_indices, sample_ray_batch, train_step, RayBatch, TrainConfig};
use crate::autodiff::{AdamConfig, AdamState, Real};
use crate::dataset::DatasetManifest;
use crate::error::{contract, Error, Result};
use crate::fields::checkpoint::ParamBlob;
use crate::fields::RadianceField;
use crate::metrics::{psnr, ssim};
use crate::preprocess::composite_over;
use crate::raster::Image;
use crate::renderer::render_image;

/// One held-out evaluation. `seconds` is training wall-clock up to this
/// point, excluding time spent evaluating.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub seconds: f64,
}

/// Trained parameters plus the bookkeeping needed to resume or audit a run.
#[derive(Clone, Debug)]
pub struct Checkpoint<S> {
    pub field: RadianceField<S>,
    pub train_config: TrainConfig,
    pub step: usize,
    pub running_loss: f64,
    pub elapsed_seconds: f64,
}

impl<S: Real> Checkpoint<S> {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut blob = ParamBlob::new(self.field.clone(), self.step as u64);
        blob.meta = BTreeMap::from([
            ("train_config".to_string(), serde_json::to_value(&self.train_config)?),
            ("running_loss".to_string(), json!(finite_or_null(self.running_loss))),
            ("elapsed_seconds".to_string(), json!(self.elapsed_seconds)),
        ]);
        blob.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let blob = ParamBlob::<S>::load(path)?;
        let train_config = match blob.meta.get("train_config") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Parse {
                field: "train_config".into(),
                reason: e.to_string(),
            })?,
            None => TrainConfig::for_kind(blob.field.kind()),
        };
        let num = |k: &str| blob.meta.get(k).and_then(|v| v.as_f64());
        Ok(Self {
            field: blob.field,
            train_config,
            step: blob.step as usize,
            running_loss: num("running_loss").unwrap_or(f64::NAN),
            elapsed_seconds: num("elapsed_seconds").unwrap_or(0.0),
        })
    }
}

fn finite_or_null(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// True once each of the last `patience` gains in `history` is below
/// `threshold_db`.
pub fn plateaued(history: &[f64], threshold_db: f64, patience: usize) -> bool {
    patience > 0
        && history.len() > patience
        && history[history.len() - patience - 1..]
            .windows(2)
            .all(|w| w[1] - w[0] < threshold_db)
}

/// Mean PSNR and SSIM of `field` over `views`, rendered without jitter and
/// compared against the ground truth composited over the background.
pub fn evaluate<S: Real>(
    field: &RadianceField<S>,
    manifest: &DatasetManifest,
    images: &[Image],
    views: &[usize],
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    if views.is_empty() {
        return Err(contract("no views to evaluate"));
    }
    let render = cfg.render_config(false);
    let (mut p, mut s) = (0.0, 0.0);
    for &v in views {
        let time = if field.kind().needs_time() {
            manifest.frames[v].time
        } else {
            None
        };
        let pred = render_image(&manifest.intrinsics, &manifest.unit_pose(v), field, time, &render)?
            .take_channels(3)?;
        let truth = ground_truth(&images[v], cfg.background_rgb)?;
        p += psnr(&pred, &truth, 1.0)?;
        s += ssim(&pred, &truth)?;
    }
    let n = views.len() as f64;
    Ok((p / n, s / n))
}

/// A frame as a 3-channel image, compositing alpha over `background`.
pub fn ground_truth(img: &Image, background: [f64; 3]) -> Result<Image> {
    match img.channels() {
        4 => composite_over(img, background),
        3 => Ok(img.clone()),
        c => Err(contract(format!("expected RGB or RGBA frames, got {c} channels"))),
    }
}

/// A field, its optimizer state and the ray sampler.
pub struct Trainer<S> {
    pub field: RadianceField<S>,
    pub config: TrainConfig,
    adam: AdamState<S>,
    rng: ChaCha8Rng,
    step: usize,
    train_frames: Vec<usize>,
    holdout: Vec<usize>,
    losses: Vec<f64>,
}

impl<S: Real> Trainer<S> {
    pub fn new(field: RadianceField<S>, manifest: &DatasetManifest, config: TrainConfig) -> Result<Self> {
        let errs = config.validate_for(manifest, field.kind());
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        let holdout = holdout_indices(manifest.frames.len(), config.holdout_fraction);
        let train_frames = (0..manifest.frames.len()).filter(|i| !holdout.contains(i)).collect();
        let adam = AdamState::new(
            field.params(),
            AdamConfig {
                learning_rate: config.learning_rate,
                ..AdamConfig::default()
            },
        );
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Self {
            field,
            config,
            adam,
            rng,
            step: 0,
            train_frames,
            holdout,
            losses: Vec::new(),
        })
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn train_frames(&self) -> &[usize] {
        &self.train_frames
    }

    pub fn holdout(&self) -> &[usize] {
        &self.holdout
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    /// Mean of the last 100 losses.
    pub fn running_loss(&self) -> f64 {
        let tail = &self.losses[self.losses.len().saturating_sub(100)..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }

    /// The next training batch.
    pub fn sample(&mut self, manifest: &DatasetManifest, images: &[Image]) -> Result<RayBatch> {
        sample_ray_batch(
            manifest,
            images,
            &self.train_frames,
            self.config.rays_per_batch,
            self.config.background_rgb,
            &mut self.rng,
        )
    }

    /// Draws a batch and takes one optimizer step.
    pub fn step(&mut self, manifest: &DatasetManifest, images: &[Image]) -> Result<f64> {
        let batch = self.sample(manifest, images)?;
        self.adam.set_learning_rate(self.config.learning_rate_at(self.step));
        let render = self.config.render_config(true);
        let loss = train_step(&mut self.field, &batch, &mut self.adam, &render, self.step)?;
        self.step += 1;
        self.losses.push(loss);
        Ok(loss)
    }

    pub fn checkpoint(&self, elapsed_seconds: f64) -> Checkpoint<S> {
        Checkpoint {
            field: self.field.clone(),
            train_config: self.config.clone(),
            step: self.step,
            running_loss: self.running_loss(),
            elapsed_seconds,
        }
    }
}

/// Extra stopping conditions and outputs for [`train_loop`].
#[derive(Clone, Debug, Default)]
pub struct LoopOptions {
    /// Writes `step_NNNNNN.params` at each eval, `final.params` at the end
    /// and `history.jsonl`.
    pub checkpoint_dir: Option<PathBuf>,
    /// Stop as soon as an eval reaches this PSNR.
    pub target_psnr: Option<f64>,
    /// Stop once this much training wall-clock has elapsed.
    pub time_budget_seconds: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxSteps,
    Plateau,
    TargetReached,
    TimeBudget,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<S> {
    pub checkpoint: Checkpoint<S>,
    pub history: Vec<EvalRecord>,
    pub losses: Vec<f64>,
    pub stop: StopReason,
    /// Frames used for evaluation.
    pub eval_views: Vec<usize>,
}

fn write_history(dir: &Path, history: &[EvalRecord]) -> Result<()> {
    let mut text = String::new();
    for r in history {
        text.push_str(&serde_json::to_string(&json!({
            "step": r.step,
            "psnr": finite_or_null(r.psnr).map_or(json!("inf"), |v| json!(v)),
            "ssim": r.ssim,
            "seconds": r.seconds,
        }))?);
        text.push('\n');
    }
    fs::write(dir.join("history.jsonl"), text)?;
    Ok(())
}

/// Trains `field` for up to `cfg.max_steps` steps. Evaluates before the
/// first step, every `eval_every` steps and after the last, stopping early
/// on a plateau or when an option's condition is met. `on_eval` sees each
/// record as it is produced.
pub fn train_loop<S: Real>(
    field: RadianceField<S>,
    manifest: &DatasetManifest,
    images: &[Image],
    cfg: &TrainConfig,
    opts: &LoopOptions,
    mut on_eval: impl FnMut(&EvalRecord),
) -> Result<TrainOutcome<S>> {
    let mut trainer = Trainer::new(field, manifest, cfg.clone())?;
    let mut eval_views = if trainer.holdout().is_empty() {
        trainer.train_frames().to_vec()
    } else {
        trainer.holdout().to_vec()
    };
    eval_views.truncate(cfg.eval_views.unwrap_or(usize::MAX));
    if let Some(dir) = &opts.checkpoint_dir {
        fs::create_dir_all(dir)?;
    }

    let mut history: Vec<EvalRecord> = Vec::new();
    let mut train_seconds = 0.0;
    let mut eval = |trainer: &Trainer<S>, seconds: f64, history: &mut Vec<EvalRecord>| -> Result<()> {
        let (p, s) = evaluate(&trainer.field, manifest, images, &eval_views, cfg)?;
        let rec = EvalRecord {
            step: trainer.step_count(),
            psnr: p,
            ssim: s,
            seconds,
        };
        history.push(rec);
        on_eval(&rec);
        if let Some(dir) = &opts.checkpoint_dir {
            trainer
                .checkpoint(seconds)
                .save(&dir.join(format!("step_{:06}.params", rec.step)))?;
            write_history(dir, history)?;
        }
        Ok(())
    };

    let reached = |h: &[EvalRecord]| opts.target_psnr.is_some_and(|t| h.last().is_some_and(|r| r.psnr >= t));
    eval(&trainer, 0.0, &mut history)?;
    let mut stop = if reached(&history) {
        StopReason::TargetReached
    } else {
        StopReason::MaxSteps
    };
    while stop == StopReason::MaxSteps && trainer.step_count() < cfg.max_steps {
        let t0 = Instant::now();
        trainer.step(manifest, images)?;
        train_seconds += t0.elapsed().as_secs_f64();

        let over_budget = opts.time_budget_seconds.is_some_and(|b| train_seconds >= b);
        let due = cfg.eval_every > 0 && trainer.step_count() % cfg.eval_every == 0;
        if due || over_budget {
            eval(&trainer, train_seconds, &mut history)?;
            let psnrs: Vec<f64> = history.iter().map(|r| r.psnr).collect();
            if reached(&history) {
                stop = StopReason::TargetReached;
            } else if over_budget {
                stop = StopReason::TimeBudget;
            } else if plateaued(&psnrs, cfg.plateau_db, cfg.plateau_evals) {
                stop = StopReason::Plateau;
            }
        }
    }
    if history.last().is_some_and(|r| r.step != trainer.step_count()) {
        eval(&trainer, train_seconds, &mut history)?;
        if reached(&history) {
            stop = StopReason::TargetReached;
        }
    }

    let checkpoint = trainer.checkpoint(train_seconds);
    if let Some(dir) = &opts.checkpoint_dir {
        checkpoint.save(&dir.join("final.params"))?;
    }
    Ok(TrainOutcome {
        checkpoint,
        history,
        losses: trainer.losses,
        stop,
        eval_views,
    })
}
