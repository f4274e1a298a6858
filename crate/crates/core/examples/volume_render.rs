//! Renders the analytic satellite from one ring camera and writes a PNG.
//!
//!     cargo run --release --example volume_render -- out.png

use rsonerf::dataset::{AnalyticScene, RigConfig};
use rsonerf::renderer::{render_image, CameraIntrinsics, RenderConfig};

fn main() -> rsonerf::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "satellite.png".into());
    let rig = RigConfig {
        intrinsics: CameraIntrinsics::from_fov(160, 120, 50f64.to_radians()),
        ..Default::default()
    };
    // World coordinates map into the unit cube as x / aabb_scale + 0.5.
    let pose = rig.pose(30.0);
    let t = pose.translation();
    let pose = pose.with_translation(t.map(|v| v / rig.aabb_scale + 0.5));
    let cfg = RenderConfig {
        samples_per_ray: 192,
        background_rgb: [0.05, 0.05, 0.1],
        ..Default::default()
    };
    let img = render_image(&rig.intrinsics, &pose, &AnalyticScene::satellite(), None, &cfg)?;
    let coverage = img.data().chunks_exact(4).map(|p| p[3] as f64).sum::<f64>() / rig.intrinsics.pixel_count() as f64;
    img.take_channels(3)?.save_png(out.as_ref())?;
    println!("wrote {out} ({:.1}% of pixels covered)", 100.0 * coverage);
    Ok(())
}
