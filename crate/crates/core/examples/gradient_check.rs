//! Compares the tape's parameter gradients of a small render loss against
//! central finite differences for each field kind.
//!
//!     cargo run --release --example gradient_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsonerf::autodiff::gradcheck::{finite_difference, relative_error};
use rsonerf::autodiff::{Tape, Tensor};
use rsonerf::encodings::HashGridConfig;
use rsonerf::fields::{
    CanonicalConfig, DeformationConfig, FieldConfig, FieldKind, InstantConfig, RadianceField, VanillaConfig,
};
use rsonerf::renderer::{Ray, RenderConfig, SampleBatch};

fn small(kind: FieldKind) -> FieldConfig {
    let instant = InstantConfig {
        hash_grid: HashGridConfig::with_finest_resolution(4, 2, 1 << 8, 2, 16),
        density_width: 16,
        color_widths: vec![16],
        direction_frequencies: 2,
    };
    match kind {
        FieldKind::Vanilla => FieldConfig::Vanilla(VanillaConfig {
            position_frequencies: 4,
            direction_frequencies: 2,
            depth: 3,
            width: 16,
            skip_layer: 2,
            color_width: 8,
        }),
        FieldKind::Instant => FieldConfig::Instant(instant),
        FieldKind::Deformed => FieldConfig::Deformed(DeformationConfig {
            canonical: CanonicalConfig::Instant(instant),
            width: 16,
            depth: 2,
            ..Default::default()
        }),
    }
}

fn loss(field: &RadianceField<f64>, params: &[Tensor<f64>], batch: &SampleBatch<f64>) -> (f64, Vec<Tensor<f64>>) {
    let mut tape = Tape::new();
    let vars = tape.bind_params(params);
    let out = field.forward(&mut tape, &vars, batch.query.as_ref().unwrap()).unwrap();
    let color = batch.composite_on_tape(&mut tape, out.sigma, out.rgb, [0.0; 3]).unwrap();
    let l = tape.mse_loss(color, Tensor::full(&[2, 3], 0.5)).unwrap();
    let value = tape.value(l).item().unwrap();
    let mut grads = tape.backward(l).unwrap();
    (value, grads.wrt(&tape, &vars))
}

fn main() {
    let rays = [
        Ray::clipped([-1.0, 0.45, 0.5], [1.0, 0.0, 0.0]),
        Ray::clipped([0.5, -1.0, 0.55], [0.0, 1.0, 0.0]),
    ];
    let cfg = RenderConfig {
        samples_per_ray: 16,
        ..Default::default()
    };
    for kind in FieldKind::ALL {
        let times = [0.25, 0.75];
        let batch = SampleBatch::build(&rays, &[0, 1], kind.needs_time().then_some(&times[..]), &cfg).unwrap();
        let mut field = RadianceField::<f64>::init_with(small(kind), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in field.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.2..0.2));
        }
        let (value, analytic) = loss(&field, field.params(), &batch);
        let mut params = field.params().to_vec();
        let numeric = finite_difference(&mut params, 1e-5, |p| loss(&field, p, &batch).0);
        println!(
            "{kind:<8} loss {value:.5}  {} params  relative error {:.2e}",
            field.parameter_count(),
            relative_error(&analytic, &numeric)
        );
    }
}
