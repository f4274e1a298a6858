use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::camera::{Ray, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub samples_per_ray: usize,
    pub background_rgb: [f64; 3],
    pub stratified_jitter: bool,
    pub rng_seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            samples_per_ray: 64,
            background_rgb: [0.0; 3],
            stratified_jitter: false,
            rng_seed: 0,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.samples_per_ray < 2 {
            errs.push(format!(
                "render.samples_per_ray must be >= 2, got {}",
                self.samples_per_ray
            ));
        }
        if self.background_rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
            errs.push(format!(
                "render.background_rgb must lie in [0,1], got {:?}",
                self.background_rgb
            ));
        }
        errs
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub position: Vec3,
    pub delta: f64,
}

/// Independent random stream for one pixel (or ray), so results do not
/// depend on evaluation order.
pub fn ray_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `N` samples over `[t_near, t_far]`: bin midpoints, or one uniform draw per
/// bin when jitter is on. `delta` is always the bin width.
pub fn sample_points(ray: &Ray, cfg: &RenderConfig, index: u64) -> Vec<Sample> {
    let n = cfg.samples_per_ray;
    let span = ray.t_far - ray.t_near;
    let edge = |i: usize| {
        if i == n {
            ray.t_far
        } else {
            ray.t_near + span * i as f64 / n as f64
        }
    };
    let mut rng = cfg.stratified_jitter.then(|| ray_rng(cfg.rng_seed, index));
    (0..n)
        .map(|i| {
            let (lo, hi) = (edge(i), edge(i + 1));
            let u = rng.as_mut().map_or(0.5, |r| r.gen::<f64>());
            let t = lo + (hi - lo) * u;
            Sample {
                t,
                position: ray.at(t),
                delta: hi - lo,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ray(t_near: f64, t_far: f64) -> Ray {
        Ray {
            origin: [0.5, 0.5, 0.0],
            direction: [0.0, 0.0, 1.0],
            t_near,
            t_far,
        }
    }

    #[test]
    fn two_midpoints() {
        let cfg = RenderConfig {
            samples_per_ray: 2,
            ..Default::default()
        };
        let s = sample_points(&ray(0.0, 1.0), &cfg, 0);
        assert_eq!(s.iter().map(|s| s.t).collect::<Vec<_>>(), [0.25, 0.75]);
        assert_eq!(s.iter().map(|s| s.delta).collect::<Vec<_>>(), [0.5, 0.5]);
    }

    #[test]
    fn jitter_is_seeded_and_stays_in_bins() {
        let cfg = RenderConfig {
            samples_per_ray: 16,
            stratified_jitter: true,
            rng_seed: 3,
            ..Default::default()
        };
        let r = ray(0.2, 0.9);
        let a = sample_points(&r, &cfg, 11);
        assert_eq!(a, sample_points(&r, &cfg, 11));
        assert_ne!(a, sample_points(&r, &cfg, 12));
        let w = 0.7 / 16.0;
        for (i, s) in a.iter().enumerate() {
            let lo = 0.2 + w * i as f64;
            assert!(s.t >= lo - 1e-12 && s.t <= lo + w + 1e-12);
        }
    }

    #[test]
    fn config_rejects_single_sample() {
        let cfg = RenderConfig {
            samples_per_ray: 1,
            ..Default::default()
        };
        assert_eq!(cfg.validate().len(), 1);
    }

    proptest! {
        #[test]
        fn deltas_partition_the_segment(n in 2usize..600, a in 0.0f64..2.0, len in 1e-3f64..2.0, jitter: bool) {
            let cfg = RenderConfig { samples_per_ray: n, stratified_jitter: jitter, ..Default::default() };
            let r = ray(a, a + len);
            let s = sample_points(&r, &cfg, 5);
            prop_assert_eq!(s.len(), n);
            let total: f64 = s.iter().map(|s| s.delta).sum();
            prop_assert!((total - len).abs() <= 1e-12 * (a + len));
            prop_assert!(s.windows(2).all(|w| w[0].t <= w[1].t));
        }
    }
}
