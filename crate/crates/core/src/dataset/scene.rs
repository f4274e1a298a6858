use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fields::FieldOutput;
use crate::renderer::RadianceSource;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    /// Axis-aligned box `[min, max]`.
    Box { min: [f64; 3], max: [f64; 3] },
    /// Cylinder with its axis along z.
    Cylinder {
        center: [f64; 2],
        radius: f64,
        z_min: f64,
        z_max: f64,
    },
}

impl Shape {
    pub fn contains(&self, x: [f64; 3]) -> bool {
        match *self {
            Shape::Box { min, max } => (0..3).all(|i| x[i] >= min[i] && x[i] <= max[i]),
            Shape::Cylinder {
                center,
                radius,
                z_min,
                z_max,
            } => {
                let (dx, dy) = (x[0] - center[0], x[1] - center[1]);
                x[2] >= z_min && x[2] <= z_max && dx * dx + dy * dy <= radius * radius
            }
        }
    }

    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match *self {
            Shape::Box { min, max } => (min, max),
            Shape::Cylinder {
                center,
                radius,
                z_min,
                z_max,
            } => (
                [center[0] - radius, center[1] - radius, z_min],
                [center[0] + radius, center[1] + radius, z_max],
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub shape: Shape,
    pub sigma: f64,
    pub rgb: [f64; 3],
}

/// Piecewise-constant radiance made of boxes and cylinders in the unit cube.
/// Where primitives overlap, the one listed first wins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticScene {
    pub primitives: Vec<Primitive>,
}

impl AnalyticScene {
    /// A small satellite: a foil-covered body, two solar panels on thin
    /// wings and a dish on top.
    pub fn satellite() -> Self {
        let b = |min, max, sigma, rgb| Primitive {
            shape: Shape::Box { min, max },
            sigma,
            rgb,
        };
        Self {
            primitives: vec![
                b([0.38, 0.38, 0.33], [0.62, 0.62, 0.64], 60.0, [0.85, 0.66, 0.22]),
                b([0.07, 0.485, 0.38], [0.37, 0.515, 0.6], 80.0, [0.12, 0.22, 0.62]),
                b([0.63, 0.485, 0.38], [0.93, 0.515, 0.6], 80.0, [0.12, 0.22, 0.62]),
                Primitive {
                    shape: Shape::Cylinder {
                        center: [0.5, 0.5],
                        radius: 0.11,
                        z_min: 0.64,
                        z_max: 0.7,
                    },
                    sigma: 60.0,
                    rgb: [0.9, 0.9, 0.93],
                },
            ],
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for (i, p) in self.primitives.iter().enumerate() {
            if !(p.sigma >= 0.0 && p.sigma.is_finite()) {
                errs.push(format!("primitive {i}: sigma {} must be finite and >= 0", p.sigma));
            }
            if p.rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
                errs.push(format!("primitive {i}: rgb {:?} outside [0,1]", p.rgb));
            }
            let (lo, hi) = p.shape.bounds();
            if lo.iter().chain(&hi).any(|v| !(0.0..=1.0).contains(v)) {
                errs.push(format!("primitive {i}: extends outside the unit cube"));
            }
        }
        errs
    }

    /// Density and color at `x`: the first primitive containing it, or empty.
    pub fn query(&self, x: [f64; 3]) -> FieldOutput<f64> {
        self.primitives
            .iter()
            .find(|p| p.shape.contains(x))
            .map_or(FieldOutput::EMPTY, |p| FieldOutput {
                sigma: p.sigma,
                rgb: p.rgb,
            })
    }

    /// The same geometry with every color multiplied by `scale`.
    pub fn lit(&self, scale: f64) -> Self {
        Self {
            primitives: self
                .primitives
                .iter()
                .map(|p| Primitive {
                    rgb: p.rgb.map(|c| (c * scale).clamp(0.0, 1.0)),
                    ..*p
                })
                .collect(),
        }
    }
}

impl RadianceSource for AnalyticScene {
    fn query_batch(
        &self,
        positions: &[[f64; 3]],
        _directions: &[[f64; 3]],
        _time: Option<f64>,
    ) -> Result<Vec<FieldOutput<f64>>> {
        Ok(positions.iter().map(|&x| self.query(x)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn satellite_is_valid() {
        assert!(AnalyticScene::satellite().validate().is_empty());
    }

    #[test]
    fn membership_rules() {
        let s = AnalyticScene::satellite();
        assert_eq!(s.query([0.01, 0.01, 0.01]).sigma, 0.0);
        let body = s.query([0.5, 0.5, 0.5]);
        assert_eq!(body.sigma, 60.0);
        assert_eq!(body.rgb, [0.85, 0.66, 0.22]);
        // The dish overlaps the body's top face; the body is listed first.
        assert_eq!(s.query([0.5, 0.5, 0.64]).rgb, [0.85, 0.66, 0.22]);
        assert_eq!(s.query([0.5, 0.5, 0.66]).rgb, [0.9, 0.9, 0.93]);
    }

    #[test]
    fn lighting_scales_colors_only() {
        let s = AnalyticScene::satellite();
        let dim = s.lit(0.1);
        let (a, b) = (s.query([0.2, 0.5, 0.5]), dim.query([0.2, 0.5, 0.5]));
        assert_eq!(a.sigma, b.sigma);
        for k in 0..3 {
            assert!((a.rgb[k] * 0.1 - b.rgb[k]).abs() < 1e-15);
        }
    }
}
