//! Synthesizes a small orbit dataset and trains the hash-grid field on it,
//! writing checkpoints and the eval history.
//!
//!     cargo run --release --example train_instant -- /tmp/run
//!
//! Afterwards try the `render_views` and `evaluate` examples on the output.

use std::path::PathBuf;

use rsonerf::dataset::{generate_dataset, AnalyticScene, RigConfig};
use rsonerf::encodings::HashGridConfig;
use rsonerf::fields::{FieldConfig, FieldKind, InstantConfig, RadianceField};
use rsonerf::renderer::CameraIntrinsics;
use rsonerf::trainer::{train_loop, LoopOptions, TrainConfig};

fn main() -> rsonerf::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "instant_run".into()));
    let rig = RigConfig {
        intrinsics: CameraIntrinsics::from_fov(64, 64, 50f64.to_radians()),
        ..Default::default()
    };
    let data = generate_dataset(&AnalyticScene::satellite(), 36, &rig)?;
    data.write(&root.join("data"))?;

    let field = RadianceField::<f32>::init_with(
        FieldConfig::Instant(InstantConfig {
            hash_grid: HashGridConfig::with_finest_resolution(16, 2, 1 << 14, 16, 256),
            ..Default::default()
        }),
        0,
    )?;
    let cfg = TrainConfig {
        max_steps: 400,
        rays_per_batch: 256,
        samples_per_ray: 48,
        eval_every: 100,
        eval_views: Some(2),
        holdout_fraction: 4.0 / 36.0,
        lr_decay: 0.1f64.powf(1.0 / 400.0),
        ..TrainConfig::for_kind(FieldKind::Instant)
    };
    let opts = LoopOptions {
        checkpoint_dir: Some(root.join("run")),
        ..Default::default()
    };
    let out = train_loop(field, &data.manifest, &data.images, &cfg, &opts, |r| {
        println!("step {:>4}  psnr {:6.2}  ssim {:.3}  {:5.1}s", r.step, r.psnr, r.ssim, r.seconds)
    })?;
    println!("{:?}; checkpoints in {}", out.stop, root.join("run").display());
    Ok(())
}
