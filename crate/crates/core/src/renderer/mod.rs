//! Cameras, rays and the volume renderer.
//!
//! Scene content lives in the unit cube `[0,1]³`. Rays are clipped to it and
//! sample points outside it are treated as empty space.

pub mod camera;
pub mod sampling;
pub mod volume;

use rayon::prelude::*;

pub use camera::{pixel_to_ray, CameraIntrinsics, Pose, Ray, MISS_RANGE};
pub use sampling::{sample_points, RenderConfig, Sample};
pub use volume::{composite, render_ray, Composite, SampleBatch};

use crate::error::{Error, Result};
use crate::fields::FieldOutput;
use crate::raster::Image;

use camera::inside_unit_cube;

/// Anything that can be queried for density and color in batches.
pub trait RadianceSource: Sync {
    fn query_batch(
        &self,
        positions: &[[f64; 3]],
        directions: &[[f64; 3]],
        time: Option<f64>,
    ) -> Result<Vec<FieldOutput<f64>>>;
}

/// Pixels per batched field query in [`render_image`].
const CHUNK: usize = 256;

/// Renders a bundle of rays with one field query for all in-cube samples.
/// `first_index` numbers the rays for their jitter streams.
pub fn render_rays(
    source: &dyn RadianceSource,
    rays: &[Ray],
    first_index: u64,
    time: Option<f64>,
    cfg: &RenderConfig,
) -> Result<Vec<([f64; 3], f64)>> {
    let samples: Vec<Vec<Sample>> = rays
        .iter()
        .enumerate()
        .map(|(r, ray)| sample_points(ray, cfg, first_index + r as u64))
        .collect();
    let mut positions = Vec::new();
    let mut directions = Vec::new();
    for (ray, s) in rays.iter().zip(&samples) {
        for p in s.iter().map(|s| s.position).filter(|&p| inside_unit_cube(p)) {
            positions.push(volume::clamp_unit(p));
            directions.push(ray.direction);
        }
    }
    let outputs = if positions.is_empty() {
        Vec::new()
    } else {
        source.query_batch(&positions, &directions, time)?
    };
    if outputs.len() != positions.len() {
        return Err(Error::Shape {
            op: "render_rays",
            lhs: vec![positions.len()],
            rhs: vec![outputs.len()],
        });
    }
    let mut next = outputs.into_iter();
    Ok(samples
        .iter()
        .map(|s| {
            let n = s.len();
            let mut sigmas = vec![0.0; n];
            let mut colors = vec![[0.0; 3]; n];
            for (i, smp) in s.iter().enumerate() {
                if inside_unit_cube(smp.position) {
                    let o = next.next().expect("one output per in-cube sample");
                    sigmas[i] = o.sigma;
                    colors[i] = o.rgb;
                }
            }
            let deltas: Vec<f64> = s.iter().map(|s| s.delta).collect();
            let c = composite(&sigmas, &deltas, &colors, cfg.background_rgb);
            (c.rgb, c.opacity)
        })
        .collect())
}

/// Renders every pixel. The result has four channels: color composited over
/// the background, then opacity.
pub fn render_image(
    intr: &CameraIntrinsics,
    pose: &Pose,
    source: &dyn RadianceSource,
    time: Option<f64>,
    cfg: &RenderConfig,
) -> Result<Image> {
    let mut errs = intr.validate();
    errs.extend(cfg.validate());
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let n = intr.pixel_count();
    let chunks: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let rendered = chunks
        .par_iter()
        .map(|&start| {
            let rays = (start..(start + CHUNK).min(n))
                .map(|p| pixel_to_ray(p % intr.width, p / intr.width, intr, pose))
                .collect::<Result<Vec<_>>>()?;
            render_rays(source, &rays, start as u64, time, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let data = rendered
        .into_iter()
        .flatten()
        .flat_map(|(rgb, a)| [rgb[0] as f32, rgb[1] as f32, rgb[2] as f32, a as f32])
        .collect();
    Image::from_data(intr.width, intr.height, 4, data)
}
