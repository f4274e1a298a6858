//! Trains the time-conditioned field on a spin sequence and reports how far
//! the learned deformation moves points at a few times.
//!
//!     cargo run --release --example deformation_field

use rsonerf::dataset::{generate_spin_dataset, AnalyticScene, RigConfig};
use rsonerf::encodings::HashGridConfig;
use rsonerf::fields::{CanonicalConfig, DeformationConfig, FieldConfig, FieldKind, InstantConfig, RadianceField};
use rsonerf::renderer::CameraIntrinsics;
use rsonerf::trainer::{evaluate, TrainConfig, Trainer};

fn main() -> rsonerf::Result<()> {
    let rig = RigConfig {
        intrinsics: CameraIntrinsics::from_fov(48, 48, 50f64.to_radians()),
        samples_per_ray: 128,
        ..Default::default()
    };
    let data = generate_spin_dataset(&AnalyticScene::satellite(), 40, 10.0, 2.0, &rig)?;
    let field = RadianceField::<f32>::init_with(
        FieldConfig::Deformed(DeformationConfig {
            canonical: CanonicalConfig::Instant(InstantConfig {
                hash_grid: HashGridConfig::with_finest_resolution(12, 2, 1 << 13, 16, 128),
                ..Default::default()
            }),
            ..Default::default()
        }),
        0,
    )?;
    let cfg = TrainConfig {
        rays_per_batch: 256,
        samples_per_ray: 32,
        holdout_fraction: 0.1,
        // Slower than the hash-grid default so the displacement net does
        // not run away before the canonical field has settled.
        learning_rate: 3e-3,
        lr_decay: 1.0,
        ..TrainConfig::for_kind(FieldKind::Instant)
    };
    let mut t = Trainer::new(field, &data.manifest, cfg.clone())?;
    for step in 1..=300 {
        let loss = t.step(&data.manifest, &data.images)?;
        if step % 100 == 0 {
            println!("step {step}: loss {loss:.5}");
        }
    }
    let holdout = t.holdout().to_vec();
    let (psnr, ssim) = evaluate(&t.field, &data.manifest, &data.images, &holdout, &cfg)?;
    println!("held-out frames {holdout:?}: psnr {psnr:.2} dB, ssim {ssim:.3}");
    Ok(())
}
