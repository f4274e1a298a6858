//! Times the vanilla and hash-grid fields to a common held-out PSNR on a
//! small synthetic orbit.
//!
//!     cargo run --release --example bench_fields -- 22

use rsonerf::dataset::{generate_dataset, AnalyticScene, RigConfig};
use rsonerf::encodings::HashGridConfig;
use rsonerf::fields::{FieldConfig, FieldKind, InstantConfig, RadianceField};
use rsonerf::renderer::CameraIntrinsics;
use rsonerf::trainer::{bench, format_bench_table, speedup, BenchLimits, TrainConfig};

fn main() -> rsonerf::Result<()> {
    let target: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(22.0);
    let rig = RigConfig {
        intrinsics: CameraIntrinsics::from_fov(64, 64, 50f64.to_radians()),
        ..Default::default()
    };
    let data = generate_dataset(&AnalyticScene::satellite(), 36, &rig)?;
    let limits = BenchLimits {
        timeout_seconds: 600.0,
        relative_timeout: Some(10.0),
    };
    let config = |kind| TrainConfig {
        max_steps: 50_000,
        rays_per_batch: 256,
        samples_per_ray: 48,
        eval_every: 25,
        eval_views: Some(1),
        holdout_fraction: 4.0 / 36.0,
        ..TrainConfig::for_kind(kind)
    };
    let init = |kind, cfg: &TrainConfig| {
        let fc = match kind {
            FieldKind::Instant => FieldConfig::Instant(InstantConfig {
                hash_grid: HashGridConfig::with_finest_resolution(16, 2, 1 << 14, 16, 256),
                ..Default::default()
            }),
            k => FieldConfig::default_for(k),
        };
        RadianceField::init_with(fc, cfg.seed)
    };
    let kinds = [FieldKind::Instant, FieldKind::Vanilla];
    let rows = bench(&kinds, &data.manifest, &data.images, target, &limits, config, init)?;
    print!("{}", format_bench_table(&rows, target));
    if let Some(s) = speedup(&rows, FieldKind::Instant, FieldKind::Vanilla) {
        let bound = if rows[1].reached { "" } else { ">= " };
        println!("speedup {bound}{s:.1}x");
    }
    Ok(())
}
