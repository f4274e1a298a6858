use super::camera::{inside_unit_cube, Ray, Vec3};
use super::sampling::{sample_points, RenderConfig};
use crate::autodiff::{CustomOp, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::fields::{FieldOutput, QueryBatch};

/// Quadrature state along one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct Composite {
    pub rgb: [f64; 3],
    pub opacity: f64,
    pub weights: Vec<f64>,
    /// Transmittance reaching each sample, `T_i = Π_{j<i} (1 − α_j)`.
    pub transmittance: Vec<f64>,
    /// Transmittance left after the last sample.
    pub residual: f64,
}

/// Alpha-composites samples front to back over `background`.
pub fn composite(sigmas: &[f64], deltas: &[f64], colors: &[[f64; 3]], background: [f64; 3]) -> Composite {
    let n = sigmas.len();
    let mut weights = Vec::with_capacity(n);
    let mut transmittance = Vec::with_capacity(n);
    let mut t = 1.0;
    let mut rgb = [0.0; 3];
    for i in 0..n {
        let alpha = 1.0 - (-sigmas[i] * deltas[i]).exp();
        let w = t * alpha;
        transmittance.push(t);
        weights.push(w);
        for c in 0..3 {
            rgb[c] += w * colors[i][c];
        }
        t *= 1.0 - alpha;
    }
    for c in 0..3 {
        rgb[c] += t * background[c];
    }
    Composite {
        rgb,
        opacity: 1.0 - t,
        weights,
        transmittance,
        residual: t,
    }
}

/// Renders one ray. `query` receives the in-cube sample positions and the ray
/// direction; samples outside the unit cube are empty space.
pub fn render_ray<F>(ray: &Ray, cfg: &RenderConfig, index: u64, mut query: F) -> Result<Composite>
where
    F: FnMut(&[Vec3], Vec3) -> Result<Vec<FieldOutput<f64>>>,
{
    let samples = sample_points(ray, cfg, index);
    let inside: Vec<usize> = (0..samples.len())
        .filter(|&i| inside_unit_cube(samples[i].position))
        .collect();
    let positions: Vec<Vec3> = inside.iter().map(|&i| clamp_unit(samples[i].position)).collect();
    let outputs = if positions.is_empty() {
        Vec::new()
    } else {
        query(&positions, ray.direction)?
    };
    let mut sigmas = vec![0.0; samples.len()];
    let mut colors = vec![[0.0; 3]; samples.len()];
    for (&i, o) in inside.iter().zip(&outputs) {
        sigmas[i] = o.sigma;
        colors[i] = o.rgb;
    }
    let deltas: Vec<f64> = samples.iter().map(|s| s.delta).collect();
    Ok(composite(&sigmas, &deltas, &colors, cfg.background_rgb))
}

pub(crate) fn clamp_unit(p: Vec3) -> Vec3 {
    [p[0].clamp(0.0, 1.0), p[1].clamp(0.0, 1.0), p[2].clamp(0.0, 1.0)]
}

/// Field queries for a bundle of rays, with the bookkeeping needed to
/// composite them. Only in-cube samples are queried; rows for ray `r` are
/// `offsets[r]..offsets[r + 1]`.
#[derive(Clone, Debug)]
pub struct SampleBatch<S> {
    pub query: Option<QueryBatch<S>>,
    pub offsets: Vec<usize>,
    pub deltas: Vec<S>,
}

impl<S: Real> SampleBatch<S> {
    /// `indices[r]` seeds ray `r`'s jitter stream; `times[r]` is its frame time.
    pub fn build(rays: &[Ray], indices: &[u64], times: Option<&[f64]>, cfg: &RenderConfig) -> Result<Self> {
        if indices.len() != rays.len() || times.is_some_and(|t| t.len() != rays.len()) {
            return Err(Error::Shape {
                op: "sample_batch",
                lhs: vec![rays.len()],
                rhs: vec![indices.len(), times.map_or(0, |t| t.len())],
            });
        }
        let mut positions = Vec::new();
        let mut directions = Vec::new();
        let mut sample_times = times.map(|_| Vec::new());
        let mut deltas = Vec::new();
        let mut offsets = vec![0];
        for (r, ray) in rays.iter().enumerate() {
            let d = ray.direction.map(S::of);
            for s in sample_points(ray, cfg, indices[r]) {
                if inside_unit_cube(s.position) {
                    positions.push(clamp_unit(s.position).map(S::of));
                    directions.push(d);
                    deltas.push(S::of(s.delta));
                    if let (Some(st), Some(t)) = (sample_times.as_mut(), times) {
                        st.push(S::of(t[r]));
                    }
                }
            }
            offsets.push(positions.len());
        }
        let query = if positions.is_empty() {
            None
        } else {
            Some(QueryBatch::new(&positions, &directions, sample_times)?)
        };
        Ok(Self {
            query,
            offsets,
            deltas,
        })
    }

    pub fn ray_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Composites field outputs (`sigma` m×1, `rgb` m×3) into one color per
    /// ray (`rays×3`) on the tape.
    pub fn composite_on_tape<'a>(
        &self,
        tape: &mut Tape<'a, S>,
        sigma: Var,
        rgb: Var,
        background: [f64; 3],
    ) -> Result<Var> {
        let m = self.deltas.len();
        let (s, c) = (tape.value(sigma), tape.value(rgb));
        if s.numel() != m || c.numel() != 3 * m {
            return Err(Error::Shape {
                op: "composite",
                lhs: vec![m],
                rhs: vec![s.numel(), c.numel()],
            });
        }
        let bg = background.map(S::of);
        let rays = self.ray_count();
        let mut out = vec![S::zero(); rays * 3];
        for r in 0..rays {
            let range = self.offsets[r]..self.offsets[r + 1];
            let mut t = S::one();
            let mut acc = [S::zero(); 3];
            for i in range {
                let alpha = S::one() - (-s.data()[i] * self.deltas[i]).exp();
                let w = t * alpha;
                for k in 0..3 {
                    acc[k] += w * c.data()[3 * i + k];
                }
                t *= S::one() - alpha;
            }
            for k in 0..3 {
                out[3 * r + k] = acc[k] + t * bg[k];
            }
        }
        let op = CompositeOp {
            offsets: self.offsets.clone(),
            deltas: self.deltas.clone(),
            background: bg,
        };
        Ok(tape.custom(vec![sigma, rgb], Tensor::from_parts(vec![rays, 3], out), op))
    }
}

struct CompositeOp<S> {
    offsets: Vec<usize>,
    deltas: Vec<S>,
    background: [S; 3],
}

impl<S: Real> CustomOp<S> for CompositeOp<S> {
    fn name(&self) -> &'static str {
        "composite"
    }

    // With e_i = c_i − bg the ray color is bg + Σ w_i e_i, so
    // ∂C/∂c_i = w_i and ∂C/∂σ_k = δ_k (T_{k+1} e_k − Σ_{i>k} w_i e_i).
    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        needs_grad: &[bool],
    ) -> Result<Vec<Option<Tensor<S>>>> {
        let (sigma, rgb) = (inputs[0].data(), inputs[1].data());
        let m = self.deltas.len();
        let mut ds = vec![S::zero(); m];
        let mut dc = vec![S::zero(); 3 * m];
        let g = grad.data();
        let mut w = Vec::new();
        let mut t_after = Vec::new();
        for r in 0..self.offsets.len() - 1 {
            let (lo, hi) = (self.offsets[r], self.offsets[r + 1]);
            let gr = [g[3 * r], g[3 * r + 1], g[3 * r + 2]];
            w.clear();
            t_after.clear();
            let mut t = S::one();
            for i in lo..hi {
                let trans = (-sigma[i] * self.deltas[i]).exp();
                w.push(t * (S::one() - trans));
                t *= trans;
                t_after.push(t);
            }
            // g · e_i for each sample.
            let ge = |i: usize| {
                (0..3).fold(S::zero(), |acc, k| acc + gr[k] * (rgb[3 * i + k] - self.background[k]))
            };
            let mut suffix = S::zero();
            for i in (lo..hi).rev() {
                let j = i - lo;
                let gei = ge(i);
                ds[i] = self.deltas[i] * (t_after[j] * gei - suffix);
                suffix += w[j] * gei;
                for k in 0..3 {
                    dc[3 * i + k] = w[j] * gr[k];
                }
            }
        }
        Ok(vec![
            needs_grad[0].then(|| Tensor::from_parts(inputs[0].shape().to_vec(), ds)),
            needs_grad[1].then(|| Tensor::from_parts(inputs[1].shape().to_vec(), dc)),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::{finite_difference, relative_error};
    use proptest::prelude::*;

    fn segment() -> Ray {
        Ray {
            origin: [0.5, 0.5, 0.0],
            direction: [0.0, 0.0, 1.0],
            t_near: 0.0,
            t_far: 1.0,
        }
    }

    fn constant(sigma: f64, rgb: [f64; 3]) -> impl FnMut(&[Vec3], Vec3) -> Result<Vec<FieldOutput<f64>>> {
        move |p, _| Ok(vec![FieldOutput { sigma, rgb }; p.len()])
    }

    #[test]
    fn homogeneous_medium_matches_closed_form() {
        let cfg = RenderConfig {
            samples_per_ray: 256,
            ..Default::default()
        };
        let out = render_ray(&segment(), &cfg, 0, constant(1.0, [0.2, 0.4, 0.6])).unwrap();
        let expected = 1.0 - (-1.0f64).exp();
        assert!((out.opacity - expected).abs() < 1e-3);
        for (c, want) in out.rgb.iter().zip([0.2, 0.4, 0.6]) {
            assert!((c - want * expected).abs() < 1e-3);
        }
    }

    #[test]
    fn empty_space_is_background() {
        let cfg = RenderConfig {
            background_rgb: [0.3, 0.1, 0.9],
            ..Default::default()
        };
        let out = render_ray(&segment(), &cfg, 0, constant(0.0, [1.0; 3])).unwrap();
        assert_eq!(out.rgb, [0.3, 0.1, 0.9]);
        assert_eq!(out.opacity, 0.0);
    }

    #[test]
    fn opaque_wall() {
        let cfg = RenderConfig {
            samples_per_ray: 64,
            ..Default::default()
        };
        // A thin slab with σδ = 20 per sample.
        let out = render_ray(&segment(), &cfg, 0, |p: &[Vec3], _| {
            Ok(p.iter()
                .map(|x| {
                    let slab = (0.5..0.5 + 1.0 / 64.0).contains(&x[2]);
                    FieldOutput {
                        sigma: if slab { 20.0 * 64.0 } else { 0.0 },
                        rgb: [0.9, 0.5, 0.1],
                    }
                })
                .collect())
        })
        .unwrap();
        assert!(out.opacity > 1.0 - 1e-8);
        for (c, want) in out.rgb.iter().zip([0.9, 0.5, 0.1]) {
            assert!((c - want).abs() < 1e-8);
        }
    }

    #[test]
    fn samples_outside_the_cube_are_not_queried() {
        let ray = Ray {
            origin: [0.5, 0.5, -1.0],
            direction: [0.0, 0.0, 1.0],
            t_near: 0.0,
            t_far: 3.0,
        };
        let cfg = RenderConfig {
            samples_per_ray: 30,
            ..Default::default()
        };
        let mut seen = 0;
        render_ray(&ray, &cfg, 0, |p: &[Vec3], _| {
            seen += p.len();
            assert!(p.iter().all(|x| x.iter().all(|v| (0.0..=1.0).contains(v))));
            Ok(vec![FieldOutput::EMPTY; p.len()])
        })
        .unwrap();
        assert_eq!(seen, 10);
    }

    #[test]
    fn quadrature_error_shrinks_with_more_samples() {
        // Smooth density along the segment; color varies too.
        let field = |p: &[Vec3], _| {
            Ok(p.iter()
                .map(|x| FieldOutput {
                    sigma: 3.0 * (1.0 + (6.0 * x[2]).sin()),
                    rgb: [x[2], 1.0 - x[2], 0.5],
                })
                .collect())
        };
        let at = |n| {
            let cfg = RenderConfig {
                samples_per_ray: n,
                ..Default::default()
            };
            render_ray(&segment(), &cfg, 0, field).unwrap()
        };
        let reference = at(4096);
        let err = |c: &Composite| {
            (c.opacity - reference.opacity).abs()
                + (0..3).map(|k| (c.rgb[k] - reference.rgb[k]).abs()).sum::<f64>()
        };
        let errors: Vec<f64> = [8, 16, 32, 64, 128, 256].into_iter().map(|n| err(&at(n))).collect();
        assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    }

    fn tape_composite(sigma: &Tensor<f64>, rgb: &Tensor<f64>, batch: &SampleBatch<f64>) -> Tensor<f64> {
        let mut tape = Tape::new();
        let s = tape.constant(sigma.clone());
        let c = tape.constant(rgb.clone());
        let out = batch.composite_on_tape(&mut tape, s, c, [0.1, 0.2, 0.3]).unwrap();
        tape.value(out).clone()
    }

    #[test]
    fn tape_composite_matches_reference_and_finite_differences() {
        let rays = [segment(), Ray { t_near: 0.2, t_far: 0.7, ..segment() }];
        let cfg = RenderConfig {
            samples_per_ray: 6,
            ..Default::default()
        };
        let batch = SampleBatch::<f64>::build(&rays, &[0, 1], None, &cfg).unwrap();
        let m = batch.deltas.len();
        assert_eq!(m, 12);
        let sigma = Tensor::from_parts(vec![m, 1], (0..m).map(|i| 0.5 + 0.4 * i as f64).collect());
        let rgb = Tensor::from_parts(vec![m, 3], (0..3 * m).map(|i| ((i * 7) % 10) as f64 / 10.0).collect());

        let out = tape_composite(&sigma, &rgb, &batch);
        let reference = composite(
            &sigma.data()[..6],
            &batch.deltas[..6],
            &rgb.data()[..18].chunks(3).map(|c| [c[0], c[1], c[2]]).collect::<Vec<_>>(),
            [0.1, 0.2, 0.3],
        );
        for k in 0..3 {
            assert!((out.data()[k] - reference.rgb[k]).abs() < 1e-14);
        }

        // Weighted sum of outputs as the scalar loss.
        let coeffs: Vec<f64> = (0..6).map(|i| 1.0 - 0.3 * i as f64).collect();
        let mut tape = Tape::new();
        let s = tape.param(sigma.clone());
        let c = tape.param(rgb.clone());
        let out = batch.composite_on_tape(&mut tape, s, c, [0.1, 0.2, 0.3]).unwrap();
        let k = tape.constant(Tensor::from_parts(vec![2, 3], coeffs.clone()));
        let prod = tape.mul(out, k).unwrap();
        let loss = tape.sum(prod);
        let mut grads = tape.backward(loss).unwrap();
        let analytic = grads.wrt(&tape, &[s, c]);

        let mut params = vec![sigma, rgb];
        let numeric = finite_difference(&mut params, 1e-6, |p| {
            let o = tape_composite(&p[0], &p[1], &batch);
            o.data().iter().zip(&coeffs).map(|(a, b)| a * b).sum()
        });
        let err = relative_error(&analytic, &numeric);
        assert!(err < 1e-7, "{err}");
    }

    proptest! {
        #[test]
        fn weights_partition_and_transmittance_decreases(
            sigmas in prop::collection::vec(0.0f64..50.0, 2..64),
            len in 0.01f64..3.0,
        ) {
            let n = sigmas.len();
            let deltas = vec![len / n as f64; n];
            let colors = vec![[0.5; 3]; n];
            let c = composite(&sigmas, &deltas, &colors, [1.0; 3]);
            let total: f64 = c.weights.iter().sum::<f64>() + c.residual;
            prop_assert!((total - 1.0).abs() < 1e-6);
            prop_assert!(c.transmittance.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!((0.0..=1.0).contains(&c.opacity));
            prop_assert!(c.rgb.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
        }
    }
}
