//! Writes an orbit dataset (cameras every 10 degrees) and a spin dataset
//! (a fixed camera watching the object yaw at 10 deg/s, filmed at 2 fps).
//!
//!     cargo run --release --example synth_dataset -- /tmp/satellite

use std::path::PathBuf;

use rsonerf::dataset::{generate_dataset, generate_spin_dataset, spin_step_deg, AnalyticScene, RigConfig};
use rsonerf::renderer::CameraIntrinsics;

fn main() -> rsonerf::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "satellite_data".into()));
    let scene = AnalyticScene::satellite();
    let rig = RigConfig {
        intrinsics: CameraIntrinsics::from_fov(96, 96, 50f64.to_radians()),
        ..Default::default()
    };

    let orbit = generate_dataset(&scene, 36, &rig)?;
    orbit.write(&root.join("orbit"))?;
    println!("orbit: {} views in {}", orbit.manifest.frames.len(), root.join("orbit").display());

    // Dim lighting, as in a dark test chamber.
    let dim = generate_dataset(&scene, 36, &RigConfig { lighting_scale: 0.1, ..rig.clone() })?;
    dim.write(&root.join("orbit_dim"))?;

    let spin = generate_spin_dataset(&scene, 80, 10.0, 2.0, &rig)?;
    spin.write(&root.join("spin"))?;
    println!(
        "spin: {} frames, {} deg apart, times {:?}..{:?}",
        spin.manifest.frames.len(),
        spin_step_deg(10.0, 2.0),
        spin.manifest.frames[0].time.unwrap(),
        spin.manifest.frames[79].time.unwrap()
    );
    Ok(())
}
