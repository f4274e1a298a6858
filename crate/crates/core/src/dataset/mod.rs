//! Posed image datasets: transforms-JSON manifests, frame selection and
//! synthetic scenes with known ground truth.

mod manifest;
mod scene;
mod synth;

pub use manifest::{Dataset, DatasetManifest, FrameRecord, MANIFEST_NAME};
pub use scene::{AnalyticScene, Primitive, Shape};
pub use synth::{
    generate_dataset, generate_spin_dataset, orbit_step_deg, spin_step_deg, RigConfig, Synthesized,
};

use crate::error::{contract, Result};

/// Keeps every `round(source_rate / target_rate)`-th item, starting with the
/// first.
pub fn select_frames<T: Clone>(sequence: &[T], source_rate: f64, target_rate: f64) -> Result<Vec<T>> {
    if !(target_rate > 0.0 && source_rate.is_finite()) {
        return Err(contract(format!("target rate must be positive, got {target_rate}")));
    }
    if target_rate > source_rate {
        return Err(contract(format!(
            "target rate {target_rate} exceeds source rate {source_rate}"
        )));
    }
    let stride = (source_rate / target_rate).round() as usize;
    Ok(sequence.iter().step_by(stride.max(1)).cloned().collect())
}
