use super::*;
use crate::dataset::{generate_dataset, generate_spin_dataset, AnalyticScene, FrameRecord, RigConfig};
use crate::encodings::HashGridConfig;
use crate::fields::{FieldConfig, InstantConfig};
use crate::renderer::{CameraIntrinsics, Pose};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny_instant() -> FieldConfig {
    FieldConfig::Instant(InstantConfig {
        hash_grid: HashGridConfig::with_finest_resolution(4, 2, 1 << 8, 2, 16),
        density_width: 16,
        color_widths: vec![16, 8],
        direction_frequencies: 2,
    })
}

fn tiny_rig() -> RigConfig {
    RigConfig {
        intrinsics: CameraIntrinsics::from_fov(12, 12, 50f64.to_radians()),
        samples_per_ray: 32,
        ..Default::default()
    }
}

fn tiny_cfg() -> TrainConfig {
    TrainConfig {
        max_steps: 4,
        rays_per_batch: 32,
        eval_every: 2,
        samples_per_ray: 16,
        holdout_fraction: 0.25,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn field() -> RadianceField<f32> {
    RadianceField::init_with(tiny_instant(), 3).unwrap()
}

fn one_pixel_manifest(frames: usize) -> (DatasetManifest, Vec<Image>) {
    let m = DatasetManifest {
        intrinsics: CameraIntrinsics::from_fov(1, 1, 0.5),
        frames: (0..frames)
            .map(|i| FrameRecord {
                file_path: format!("{i}.png"),
                transform: Pose::canonical(),
                time: None,
            })
            .collect(),
        aabb_scale: 1.0,
    };
    let images = (0..frames).map(|i| Image::filled(1, 1, &[i as f32 * 0.5, 0.25, 1.0])).collect();
    (m, images)
}

#[test]
fn single_pixel_is_always_drawn() {
    let (m, images) = one_pixel_manifest(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let b = sample_ray_batch(&m, &images, &[0], 1, [0.0; 3], &mut rng).unwrap();
    assert_eq!((b.frames[0], b.pixels[0]), (0, 0));
    assert_eq!(b.targets[0], [0.0, 0.25, 1.0]);
    assert!(b.times.is_none());
}

#[test]
fn seeded_batches_repeat() {
    let s = generate_dataset(&AnalyticScene::satellite(), 3, &tiny_rig()).unwrap();
    let draw = || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        sample_ray_batch(&s.manifest, &s.images, &[0, 2], 64, [0.2; 3], &mut rng).unwrap()
    };
    assert_eq!(draw(), draw());
}

#[test]
fn frames_are_drawn_uniformly() {
    let (m, images) = one_pixel_manifest(2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 100_000;
    let b = sample_ray_batch(&m, &images, &[0, 1], n, [0.0; 3], &mut rng).unwrap();
    let ones = b.frames.iter().filter(|&&f| f == 1).count() as f64;
    let sigma = (n as f64 * 0.25).sqrt();
    assert!((ones - n as f64 / 2.0).abs() < 3.0 * sigma, "{ones}");
}

#[test]
fn rgba_targets_are_composited() {
    let img = Image::filled(1, 1, &[1.0, 0.0, 0.0, 0.25]);
    let c = target_color(&img, 0, 0, [0.0, 0.0, 1.0]);
    assert_eq!(c, [0.25, 0.0, 0.75]);
}

#[test]
fn holdout_layout() {
    assert_eq!(holdout_indices(36, 4.0 / 36.0), [4, 13, 22, 31]);
    assert!(holdout_indices(10, 0.0).is_empty());
    let (m, _) = one_pixel_manifest(2);
    let cfg = TrainConfig {
        holdout_fraction: 0.8,
        ..TrainConfig::default()
    };
    assert!(cfg.validate_for(&m, FieldKind::Instant).iter().any(|e| e.contains("no training frame")));
}

#[test]
fn held_out_frames_are_never_sampled() {
    let s = generate_dataset(&AnalyticScene::satellite(), 8, &tiny_rig()).unwrap();
    let mut t = Trainer::new(field(), &s.manifest, tiny_cfg()).unwrap();
    assert_eq!(t.holdout(), [2, 6]);
    for _ in 0..200 {
        let b = t.sample(&s.manifest, &s.images).unwrap();
        assert!(b.frames.iter().all(|f| !t.holdout().contains(f)));
    }
}

#[test]
fn learning_rate_schedule() {
    let c = TrainConfig::for_kind(FieldKind::Instant);
    assert_eq!(c.learning_rate_at(0), 1e-2);
    assert!((c.learning_rate_at(10_000) - 10f64.powf(-2.5)).abs() < 1e-9);
    assert!((c.learning_rate_at(20_000) - 1e-3).abs() < 1e-12);
    assert_eq!(c.learning_rate_at(90_000), 1e-3);
    let v = TrainConfig::for_kind(FieldKind::Vanilla);
    assert_eq!(v.learning_rate_at(5000), 5e-4);
}

#[test]
fn invalid_config_reports_every_problem() {
    let cfg = TrainConfig {
        rays_per_batch: 0,
        learning_rate: -1.0,
        holdout_fraction: 1.0,
        samples_per_ray: 0,
        ..TrainConfig::default()
    };
    // min_learning_rate now exceeds the (negative) learning rate as well.
    assert_eq!(cfg.validate().len(), 5);
}

#[test]
fn zero_steps_leave_parameters_unchanged() {
    let s = generate_dataset(&AnalyticScene::satellite(), 4, &tiny_rig()).unwrap();
    let f = field();
    let cfg = TrainConfig {
        max_steps: 0,
        ..tiny_cfg()
    };
    let out = train_loop(f.clone(), &s.manifest, &s.images, &cfg, &LoopOptions::default(), |_| {}).unwrap();
    assert_eq!(out.checkpoint.field.params(), f.params());
    assert_eq!(out.history.len(), 1);
    assert_eq!(out.checkpoint.step, 0);
}

#[test]
fn plateau_rule() {
    let h = [20.0, 20.05, 20.09, 20.12];
    for n in 1..4 {
        assert!(!plateaued(&h[..n], 0.1, 3));
    }
    assert!(plateaued(&h, 0.1, 3));
    assert!(!plateaued(&[20.0, 20.5, 20.55, 20.6], 0.1, 3));
    assert!(!plateaued(&h, 0.1, 0));
}

#[test]
fn training_is_deterministic_and_thread_independent() {
    let s = generate_dataset(&AnalyticScene::satellite(), 4, &tiny_rig()).unwrap();
    let cfg = TrainConfig {
        rays_per_batch: 2500,
        ..tiny_cfg()
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut t = Trainer::new(field(), &s.manifest, cfg.clone()).unwrap();
            for _ in 0..3 {
                t.step(&s.manifest, &s.images).unwrap();
            }
            (t.losses().to_vec(), t.field.params().to_vec())
        })
    };
    let a = run(1);
    assert_eq!(a, run(1));
    assert_eq!(a, run(3));
    assert!(a.0.iter().all(|l| l.is_finite()));
}

#[test]
fn loss_decreases_on_a_few_views() {
    let s = generate_dataset(&AnalyticScene::satellite(), 4, &tiny_rig()).unwrap();
    let cfg = TrainConfig {
        rays_per_batch: 128,
        holdout_fraction: 0.0,
        ..tiny_cfg()
    };
    let mut t = Trainer::new(field(), &s.manifest, cfg).unwrap();
    for _ in 0..150 {
        t.step(&s.manifest, &s.images).unwrap();
    }
    let l = t.losses();
    let head: f64 = l[..20].iter().sum::<f64>() / 20.0;
    let tail: f64 = l[l.len() - 20..].iter().sum::<f64>() / 20.0;
    assert!(tail < 0.5 * head, "{head} -> {tail}");
}

#[test]
fn nan_parameters_abort_with_diagnostics() {
    let s = generate_dataset(&AnalyticScene::satellite(), 4, &tiny_rig()).unwrap();
    let mut f = field();
    for p in f.params_mut() {
        p.data_mut().fill(f32::NAN);
    }
    let mut t = Trainer::new(f, &s.manifest, tiny_cfg()).unwrap();
    match t.step(&s.manifest, &s.images) {
        Err(Error::NonFiniteLoss { step, learning_rate, .. }) => {
            assert_eq!(step, 0);
            assert_eq!(learning_rate, 1e-2);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn checkpoint_round_trip_renders_identically() {
    let s = generate_dataset(&AnalyticScene::satellite(), 4, &tiny_rig()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let opts = LoopOptions {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let out = train_loop(field(), &s.manifest, &s.images, &tiny_cfg(), &opts, |_| {}).unwrap();
    assert_eq!(out.history.iter().map(|r| r.step).collect::<Vec<_>>(), [0, 2, 4]);
    for name in ["step_000000.params", "step_000002.params", "step_000004.params", "final.params"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let lines = std::fs::read_to_string(dir.path().join("history.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 3);

    let back = Checkpoint::<f32>::load(&dir.path().join("final.params")).unwrap();
    assert_eq!(back.step, 4);
    assert_eq!(back.train_config, tiny_cfg());
    assert_eq!(back.running_loss, out.checkpoint.running_loss);
    let render = |f: &RadianceField<f32>| {
        crate::renderer::render_image(
            &s.manifest.intrinsics,
            &s.manifest.unit_pose(0),
            f,
            None,
            &tiny_cfg().render_config(false),
        )
        .unwrap()
    };
    assert_eq!(render(&back.field).data(), render(&out.checkpoint.field).data());
}

#[test]
fn time_requirements() {
    let spin = generate_spin_dataset(&AnalyticScene::satellite(), 4, 10.0, 2.0, &tiny_rig()).unwrap();
    // Timestamps are ignored by fields that do not use them.
    let mut t = Trainer::new(field(), &spin.manifest, tiny_cfg()).unwrap();
    t.step(&spin.manifest, &spin.images).unwrap();

    let orbit = generate_dataset(&AnalyticScene::satellite(), 4, &tiny_rig()).unwrap();
    let dnerf = RadianceField::<f32>::init(FieldKind::Deformed, 0);
    match Trainer::new(dnerf, &orbit.manifest, tiny_cfg()) {
        Err(Error::Validation(errs)) => assert!(errs[0].contains("frames[0].time"), "{errs:?}"),
        Err(e) => panic!("{e}"),
        Ok(_) => panic!("accepted a dataset without times"),
    }
}

#[test]
fn bench_rows_and_checkpoint_start() {
    let s = generate_dataset(&AnalyticScene::satellite(), 4, &tiny_rig()).unwrap();
    let limits = BenchLimits {
        timeout_seconds: 30.0,
        relative_timeout: None,
    };
    // A target below the untrained PSNR is met before any training.
    let rows = bench(
        &[FieldKind::Instant],
        &s.manifest,
        &s.images,
        -100.0,
        &limits,
        |_| tiny_cfg(),
        |_, c| RadianceField::init_with(tiny_instant(), c.seed),
    )
    .unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].reached);
    assert_eq!((rows[0].seconds, rows[0].steps), (0.0, 0));

    let rows = bench(
        &[FieldKind::Instant, FieldKind::Instant],
        &s.manifest,
        &s.images,
        1e9,
        &limits,
        |_| tiny_cfg(),
        |_, c| RadianceField::init_with(tiny_instant(), c.seed),
    )
    .unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| !r.reached && r.steps == 4));
    assert!(format_bench_table(&rows, 1e9).lines().count() == 4);
}
