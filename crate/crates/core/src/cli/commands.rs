use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::config::{flag, BenchSettings, Flag, Resolver, RunConfig, SynthSettings};
use super::{BenchArgs, ChromaArgs, Cli, Command, EvalArgs, RenderArgs, SynthArgs, TrainArgs, TrainFlags};
use crate::dataset::{generate_dataset, generate_spin_dataset, AnalyticScene, Dataset, DatasetManifest, FrameRecord, MANIFEST_NAME};
use crate::error::{contract, Error, Result};
use crate::fields::{FieldConfig, FieldKind, RadianceField};
use crate::metrics::{build_report, parse_lpips_file};
use crate::preprocess::{chroma_key_dir, ChromaKeyConfig};
use crate::raster::{quantize, Image};
use crate::renderer::{render_image, RenderConfig};
use crate::trainer::{
    bench, format_bench_table, ground_truth, holdout_indices, speedup, train_loop, BenchLimits, Checkpoint,
    LoopOptions, TrainConfig,
};

pub fn dispatch(cli: &Cli, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> Result<()> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Synth(a) => cmd_synth(&config, a, out),
        Command::Chroma(a) => cmd_chroma(&config, a, out, err),
        Command::Train(a) => cmd_train(&config, a, out),
        Command::Render(a) => cmd_render(&config, a, out),
        Command::Eval(a) => cmd_eval(&config, a, out),
        Command::Bench(a) => cmd_bench(&config, a, out),
    }
}

fn cmd_synth(config: &RunConfig, a: &SynthArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let mut r = Resolver::new(config);
    let dir = r.path("out", &a.out, false);
    let s = r.resolve(
        &["synth"],
        SynthSettings::default(),
        &[
            flag("views", &a.views),
            flag("lighting", &a.lighting),
            flag("spin", &a.spin),
            flag("fps", &a.fps),
            flag("frames", &a.frames),
            flag("width", &a.width),
            flag("height", &a.height),
            flag("fov_deg", &a.fov_deg),
            flag("radius", &a.radius),
            flag("samples_per_ray", &a.samples),
            flag("seed", &a.seed),
        ],
    );
    if let Some(s) = &s {
        r.check("synth", s.validate());
    }
    r.finish()?;
    let (dir, s) = (dir.expect("checked"), s.expect("checked"));

    let scene = AnalyticScene::satellite();
    let data = match s.spin {
        Some(rate) => generate_spin_dataset(&scene, s.frames, rate, s.fps, &s.rig())?,
        None => generate_dataset(&scene, s.views, &s.rig())?,
    };
    data.write(&dir)?;
    writeln!(
        out,
        "wrote {} frames ({}x{}) to {}",
        data.images.len(),
        s.width,
        s.height,
        dir.display()
    )?;
    Ok(())
}

fn cmd_chroma(config: &RunConfig, a: &ChromaArgs, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> Result<()> {
    let mut r = Resolver::new(config);
    let input = r.path("input", &a.input, true);
    let output = r.path("out", &a.out, false);
    let cfg = r.resolve(
        &["chroma"],
        ChromaKeyConfig::default(),
        &[
            flag("key_hue", &a.key_hue),
            flag("hue_tolerance", &a.hue_tolerance),
            flag("min_saturation", &a.min_saturation),
            flag("min_value", &a.min_value),
            flag("despill_strength", &a.despill),
            flag("feather_radius", &a.feather),
        ],
    );
    if let Some(c) = &cfg {
        // Chroma messages already name their section.
        r.errors.extend(c.validate());
    }
    if let Some(p) = &input {
        if !p.is_dir() {
            r.errors.push(format!("input {} is not a directory", p.display()));
        }
    }
    r.finish()?;
    let (input, output, cfg) = (input.expect("checked"), output.expect("checked"), cfg.expect("checked"));
    let written = chroma_key_dir(&input, &output, &cfg)?;
    if written.is_empty() {
        writeln!(err, "warning: no PNG files in {}", input.display())?;
    }
    writeln!(out, "keyed {} images into {}", written.len(), output.display())?;
    Ok(())
}

fn train_flags(f: &TrainFlags) -> Vec<Flag> {
    vec![
        flag("max_steps", &f.steps),
        flag("rays_per_batch", &f.rays),
        flag("learning_rate", &f.lr),
        flag("lr_decay", &f.lr_decay),
        flag("min_learning_rate", &f.min_lr),
        flag("eval_every", &f.eval_every),
        flag("holdout_fraction", &f.holdout),
        flag("eval_views", &f.eval_views),
        flag("seed", &f.seed),
        flag("samples_per_ray", &f.samples),
        flag("background_rgb", &f.background),
        flag("plateau_db", &f.plateau_db),
        flag("plateau_evals", &f.plateau_evals),
    ]
}

fn hash_flags(f: &TrainFlags) -> Vec<Flag> {
    vec![flag("levels", &f.hash_levels), flag("table_size", &f.hash_table_size)]
}

fn cmd_train(config: &RunConfig, a: &TrainArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let mut r = Resolver::new(config);
    let data_path = r.path("dataset", &a.dataset, true);
    let dir = r.path("out", &a.out, false);
    let train = r.train(a.kind, &train_flags(&a.train));
    let field = r.field(a.kind, &hash_flags(&a.train));
    r.finish()?;
    let (data_path, dir) = (data_path.expect("checked"), dir.expect("checked"));
    let (train, field) = (train.expect("checked"), field.expect("checked"));

    let data = Dataset::open(&data_path)?;
    let errs = train.validate_for(&data.manifest, a.kind);
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    fs::create_dir_all(&dir)?;
    let resolved = json!({"kind": a.kind, "train": train, "field": field});
    fs::write(dir.join("run_config.json"), serde_json::to_string_pretty(&resolved)? + "\n")?;

    let init = RadianceField::<f32>::init_with(field, train.seed)?;
    writeln!(
        out,
        "training {} field ({} parameters) on {} frames",
        a.kind,
        init.parameter_count(),
        data.manifest.frames.len()
    )?;
    let opts = LoopOptions {
        checkpoint_dir: Some(dir.clone()),
        ..Default::default()
    };
    let outcome = train_loop(init, &data.manifest, &data.images, &train, &opts, |rec| {
        let _ = writeln!(
            out,
            "step {:>6}  psnr {:>8.3}  ssim {:.4}  {:.1}s",
            rec.step, rec.psnr, rec.ssim, rec.seconds
        );
    })?;
    writeln!(
        out,
        "stopped after {} steps ({:?}); checkpoint {}",
        outcome.checkpoint.step,
        outcome.stop,
        dir.join("final.params").display()
    )?;
    Ok(())
}

fn render_flags(samples: &Option<usize>, background: &Option<[f64; 3]>) -> Vec<Flag> {
    vec![flag("samples_per_ray", samples), flag("background_rgb", background)]
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_NAME)
    } else {
        p.to_path_buf()
    }
}

fn frame_time(field: &RadianceField<f32>, f: &FrameRecord) -> Option<f64> {
    if field.kind().needs_time() {
        f.time.or(Some(0.0))
    } else {
        None
    }
}

fn render_rgb(field: &RadianceField<f32>, m: &DatasetManifest, pose: &crate::renderer::Pose, time: Option<f64>, cfg: &RenderConfig) -> Result<Image> {
    render_image(&m.intrinsics, &m.to_unit(pose), field, time, cfg)?.take_channels(3)
}

fn cmd_render(config: &RunConfig, a: &RenderArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let mut r = Resolver::new(config);
    let ckpt_path = r.path("checkpoint", &a.checkpoint, true);
    let data_path = r.path("dataset", &a.dataset, true);
    let dir = r.path("out", &a.out, false);
    if !(a.grid_step.is_finite() && a.grid_step > 0.0) {
        r.errors.push(format!("grid-step must be positive, got {}", a.grid_step));
    }
    r.finish()?;
    let (ckpt_path, data_path, dir) = (ckpt_path.expect("checked"), data_path.expect("checked"), dir.expect("checked"));

    let ckpt = Checkpoint::<f32>::load(&ckpt_path)?;
    let mut r = Resolver::new(config);
    let cfg = r.resolve(&["render"], ckpt.train_config.render_config(false), &render_flags(&a.samples, &a.background));
    if let Some(c) = &cfg {
        r.check("render", c.validate());
    }
    r.finish()?;
    let cfg = cfg.expect("checked");
    let mpath = manifest_path(&data_path);
    let manifest = DatasetManifest::load(&mpath)?;
    let n = manifest.frames.len();
    let field = &ckpt.field;
    fs::create_dir_all(&dir)?;

    if let Some(g) = a.grid {
        if g >= n {
            return Err(Error::Validation(vec![format!("grid frame {g} out of range (dataset has {n} frames)")]));
        }
        let frame = &manifest.frames[g];
        let root = mpath.parent().map(Path::to_path_buf).unwrap_or_default();
        let truth = ground_truth(&Image::load_png(&root.join(&frame.file_path))?, cfg.background_rgb)?;
        let (w, h) = (manifest.intrinsics.width, manifest.intrinsics.height);
        let mut mosaic = Image::new(3 * w, 3 * h, 3);
        let mut cell = 0;
        for k in 0..9 {
            let img = if k == 4 {
                truth.clone()
            } else {
                // Offsets fall halfway between the grid steps: ±0.5, ±1.5, ...
                let offset = (cell as f64 - 3.5) * a.grid_step;
                cell += 1;
                let pose = frame.transform.yawed(offset.to_radians());
                let img = render_rgb(field, &manifest, &pose, frame_time(field, frame), &cfg)?;
                img.save_png(&dir.join(format!("novel_{g:03}_{:+06.1}.png", offset)))?;
                img
            };
            let (cx, cy) = (k % 3, k / 3);
            for y in 0..h {
                for x in 0..w {
                    mosaic.pixel_mut(cx * w + x, cy * h + y).copy_from_slice(img.pixel(x, y));
                }
            }
        }
        let p = dir.join(format!("grid_{g:03}.png"));
        mosaic.save_png(&p)?;
        writeln!(out, "wrote {}", p.display())?;
        return Ok(());
    }

    let frames = a.frames.clone().unwrap_or_else(|| (0..n).collect());
    if let Some(bad) = frames.iter().find(|&&i| i >= n) {
        return Err(Error::Validation(vec![format!("frame {bad} out of range (dataset has {n} frames)")]));
    }
    let mut rendered = DatasetManifest {
        frames: Vec::new(),
        ..manifest.clone()
    };
    for &i in &frames {
        let f = &manifest.frames[i];
        let img = render_rgb(field, &manifest, &f.transform, frame_time(field, f), &cfg)?;
        let rel = format!("images/r_{i:03}.png");
        img.save_png(&dir.join(&rel))?;
        rendered.frames.push(FrameRecord {
            file_path: rel,
            ..f.clone()
        });
    }
    rendered.write(&dir.join(MANIFEST_NAME))?;
    writeln!(out, "rendered {} views into {}", frames.len(), dir.display())?;
    Ok(())
}

/// Rounds to the nearest 8-bit level, as when the render is saved.
fn quantized(img: &Image) -> Image {
    img.map(|v| quantize(v) as f32 / 255.0)
}

fn cmd_eval(config: &RunConfig, a: &EvalArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let mut r = Resolver::new(config);
    let ckpt_path = r.path("checkpoint", &a.checkpoint, true);
    let data_path = r.path("dataset", &a.dataset, true);
    let lpips_path = r.optional_path("lpips_file", &a.lpips_file);
    let dir = a.out.clone();
    r.finish()?;
    let (ckpt_path, data_path) = (ckpt_path.expect("checked"), data_path.expect("checked"));

    let ckpt = Checkpoint::<f32>::load(&ckpt_path)?;
    let data = Dataset::open(&data_path)?;
    let mut r = Resolver::new(config);
    let cfg = r.resolve(&["render"], ckpt.train_config.render_config(false), &render_flags(&a.samples, &None));
    if let Some(c) = &cfg {
        r.check("render", c.validate());
    }
    r.finish()?;
    let cfg = cfg.expect("checked");
    let n = data.manifest.frames.len();
    let views = match &a.holdout {
        Some(v) => v.clone(),
        None => {
            let h = holdout_indices(n, ckpt.train_config.holdout_fraction);
            if h.is_empty() {
                (0..n).collect()
            } else {
                h
            }
        }
    };
    if let Some(bad) = views.iter().find(|&&i| i >= n) {
        return Err(Error::Validation(vec![format!("holdout frame {bad} out of range (dataset has {n} frames)")]));
    }
    if views.is_empty() {
        return Err(contract("no views to evaluate"));
    }
    let lpips: Option<HashMap<String, f64>> = match &lpips_path {
        Some(p) => Some(parse_lpips_file(&fs::read_to_string(p)?)?),
        None => None,
    };
    let field = &ckpt.field;
    let pairs = views
        .iter()
        .map(|&i| {
            let f = &data.manifest.frames[i];
            let pred = render_rgb(field, &data.manifest, &f.transform, frame_time(field, f), &cfg)?;
            let truth = ground_truth(&data.images[i], cfg.background_rgb)?;
            Ok((f.file_path.clone(), quantized(&pred), truth))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = build_report(&pairs, lpips.as_ref(), 1.0)?;
    if let Some(dir) = &dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.txt"), report.to_text())?;
        fs::write(dir.join("metrics.jsonl"), report.to_json_lines())?;
    }
    write!(out, "{}", report.to_text())?;
    Ok(())
}

fn cmd_bench(config: &RunConfig, a: &BenchArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let mut r = Resolver::new(config);
    let data_path = r.path("dataset", &a.dataset, true);
    let settings = r.resolve(
        &["bench"],
        BenchSettings::default(),
        &[
            flag("kinds", &a.kinds),
            flag("target_db", &a.target),
            flag("timeout_seconds", &a.timeout),
            flag("timeout_factor", &a.timeout_factor),
        ],
    );
    let Some(settings) = settings else {
        return r.finish();
    };
    r.check("bench", settings.validate());
    let mut per_kind: Vec<(FieldKind, TrainConfig, FieldConfig)> = Vec::new();
    for &k in &settings.kinds {
        let t = r.train(k, &train_flags(&a.train));
        let f = r.field(k, &hash_flags(&a.train));
        if let (Some(t), Some(f)) = (t, f) {
            per_kind.push((k, t, f));
        }
    }
    r.finish()?;
    let data = Dataset::open(&data_path.expect("checked"))?;
    let mut errs = Vec::new();
    for (k, t, _) in &per_kind {
        errs.extend(t.validate_for(&data.manifest, *k));
    }
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }

    let lookup = |k: FieldKind| per_kind.iter().find(|p| p.0 == k).expect("resolved above");
    let limits = BenchLimits {
        timeout_seconds: settings.timeout_seconds,
        relative_timeout: settings.timeout_factor,
    };
    let rows = bench(
        &settings.kinds,
        &data.manifest,
        &data.images,
        settings.target_db,
        &limits,
        |k| lookup(k).1.clone(),
        |k, c| RadianceField::init_with(lookup(k).2.clone(), c.seed),
    )?;
    let mut text = format_bench_table(&rows, settings.target_db);
    if let Some(s) = speedup(&rows, FieldKind::Instant, FieldKind::Vanilla) {
        let bound = if rows.iter().any(|r| r.kind == FieldKind::Vanilla && !r.reached) {
            ">= "
        } else {
            ""
        };
        text.push_str(&format!("speedup instant vs vanilla: {bound}{s:.1}x\n"));
    }
    if let Some(p) = &a.out {
        if let Some(d) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(d)?;
        }
        fs::write(p, &text)?;
    }
    write!(out, "{text}")?;
    Ok(())
}
