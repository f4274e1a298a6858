use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, FrameRecord, MANIFEST_NAME};
use super::scene::AnalyticScene;
use crate::error::{contract, Error, Result};
use crate::raster::Image;
use crate::renderer::{render_image, CameraIntrinsics, Pose, RenderConfig};

/// Camera ring and rendering settings shared by both generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigConfig {
    pub intrinsics: CameraIntrinsics,
    /// Ring radius in world units.
    pub radius: f64,
    /// Height of the ring above the scene center.
    pub height: f64,
    pub aabb_scale: f64,
    pub lighting_scale: f64,
    pub samples_per_ray: usize,
    pub seed: u64,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::from_fov(591, 443, 50f64.to_radians()),
            radius: 1.3,
            height: 0.35,
            aabb_scale: 1.0,
            lighting_scale: 1.0,
            samples_per_ray: 256,
            seed: 0,
        }
    }
}

impl RigConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = self.intrinsics.validate();
        // The ring must clear the scene's bounding cube.
        let half_diag = 0.5 * self.aabb_scale * 2f64.sqrt();
        if !(self.radius > half_diag) {
            errs.push(format!(
                "radius {} must exceed the scene half-diagonal {half_diag:.3}",
                self.radius
            ));
        }
        if !(self.aabb_scale > 0.0) {
            errs.push(format!("aabb_scale must be positive, got {}", self.aabb_scale));
        }
        if !(self.lighting_scale > 0.0 && self.lighting_scale <= 1.0) {
            errs.push(format!("lighting_scale must lie in (0, 1], got {}", self.lighting_scale));
        }
        if self.samples_per_ray < 2 {
            errs.push(format!("samples_per_ray must be >= 2, got {}", self.samples_per_ray));
        }
        errs
    }

    /// World-space camera on the ring at `azimuth_deg`, looking at the
    /// scene center.
    pub fn pose(&self, azimuth_deg: f64) -> Pose {
        let a = azimuth_deg.to_radians();
        let eye = [self.radius * a.cos(), self.radius * a.sin(), self.height];
        Pose::look_at(eye, [0.0; 3], [0.0, 0.0, -1.0]).expect("ring cameras are never vertical")
    }
}

/// Generated ground truth: a manifest and one straight-alpha RGBA image per
/// frame.
#[derive(Clone, Debug)]
pub struct Synthesized {
    pub manifest: DatasetManifest,
    pub images: Vec<Image>,
}

impl Synthesized {
    /// Writes `transforms.json` and the PNG frames under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (f, img) in self.manifest.frames.iter().zip(&self.images) {
            img.save_png(&dir.join(&f.file_path))?;
        }
        self.manifest.write(&dir.join(MANIFEST_NAME))
    }
}

/// Renders the scene with a black background and stores color divided by
/// opacity, with opacity as alpha.
fn render_frame(scene: &AnalyticScene, rig: &RigConfig, manifest: &DatasetManifest, pose: &Pose) -> Result<Image> {
    let cfg = RenderConfig {
        samples_per_ray: rig.samples_per_ray,
        background_rgb: [0.0; 3],
        stratified_jitter: false,
        rng_seed: rig.seed,
    };
    let mut img = render_image(&rig.intrinsics, &manifest.to_unit(pose), scene, None, &cfg)?;
    for px in img.data_mut().chunks_exact_mut(4) {
        let a = px[3];
        for c in &mut px[..3] {
            *c = if a > 0.0 { (*c / a).min(1.0) } else { 0.0 };
        }
    }
    Ok(img)
}

fn generate(
    scene: &AnalyticScene,
    rig: &RigConfig,
    azimuths: impl Iterator<Item = f64>,
    times: Option<Vec<f64>>,
) -> Result<Synthesized> {
    let mut errs = rig.validate();
    errs.extend(scene.validate());
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let lit = scene.lit(rig.lighting_scale);
    let mut manifest = DatasetManifest {
        intrinsics: rig.intrinsics,
        frames: Vec::new(),
        aabb_scale: rig.aabb_scale,
    };
    for (i, az) in azimuths.enumerate() {
        manifest.frames.push(FrameRecord {
            file_path: format!("images/r_{i:03}.png"),
            transform: rig.pose(az),
            time: times.as_ref().map(|t| t[i]),
        });
    }
    let images = manifest
        .frames
        .iter()
        .map(|f| render_frame(&lit, rig, &manifest, &f.transform))
        .collect::<Result<Vec<_>>>()?;
    Ok(Synthesized { manifest, images })
}

/// Azimuth step for `n_views` cameras evenly spaced around the ring.
pub fn orbit_step_deg(n_views: usize) -> f64 {
    360.0 / n_views as f64
}

/// Cameras evenly spaced around a horizontal ring.
pub fn generate_dataset(scene: &AnalyticScene, n_views: usize, rig: &RigConfig) -> Result<Synthesized> {
    if n_views < 2 {
        return Err(contract(format!("n_views must be >= 2, got {n_views}")));
    }
    let step = orbit_step_deg(n_views);
    generate(scene, rig, (0..n_views).map(|i| i as f64 * step), None)
}

/// Degrees the object turns between consecutive frames.
pub fn spin_step_deg(spin_deg_per_s: f64, frame_rate: f64) -> f64 {
    spin_deg_per_s / frame_rate
}

/// A stationary camera watching the scene yaw at a constant rate,
/// re-expressed as a camera orbiting the static scene the other way. Frame
/// `i` gets time `i / (n_frames - 1)`.
pub fn generate_spin_dataset(
    scene: &AnalyticScene,
    n_frames: usize,
    spin_deg_per_s: f64,
    frame_rate: f64,
    rig: &RigConfig,
) -> Result<Synthesized> {
    if n_frames < 2 {
        return Err(contract(format!("n_frames must be >= 2, got {n_frames}")));
    }
    if !(frame_rate > 0.0 && spin_deg_per_s.is_finite()) {
        return Err(contract(format!(
            "need a positive frame rate and finite spin rate, got {frame_rate} fps and {spin_deg_per_s} deg/s"
        )));
    }
    let step = spin_step_deg(spin_deg_per_s, frame_rate);
    let times = (0..n_frames).map(|i| i as f64 / (n_frames - 1) as f64).collect();
    generate(scene, rig, (0..n_frames).map(|i| -(i as f64) * step), Some(times))
}
