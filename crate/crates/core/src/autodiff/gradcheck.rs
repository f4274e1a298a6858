//! Central finite differences, the reference every analytic gradient in this
//! crate is checked against.

use super::tensor::Tensor;

/// Central-difference gradient of `f` with respect to every scalar in
/// `params`. `params` is restored before returning.
pub fn finite_difference<F>(params: &mut [Tensor<f64>], h: f64, mut f: F) -> Vec<Tensor<f64>>
where
    F: FnMut(&[Tensor<f64>]) -> f64,
{
    let mut grads: Vec<Tensor<f64>> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
    for t in 0..params.len() {
        for i in 0..params[t].numel() {
            let orig = params[t].data()[i];
            params[t].data_mut()[i] = orig + h;
            let plus = f(params);
            params[t].data_mut()[i] = orig - h;
            let minus = f(params);
            params[t].data_mut()[i] = orig;
            grads[t].data_mut()[i] = (plus - minus) / (2.0 * h);
        }
    }
    grads
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)` over all tensors flattened together; zero
/// when both are zero.
pub fn relative_error(a: &[Tensor<f64>], b: &[Tensor<f64>]) -> f64 {
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (ta, tb) in a.iter().zip(b) {
        for (&x, &y) in ta.data().iter().zip(tb.data()) {
            diff += (x - y) * (x - y);
            na += x * x;
            nb += y * y;
        }
    }
    let scale = na.max(nb).sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}
