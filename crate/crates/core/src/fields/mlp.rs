use rand::Rng;

use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::error::Result;

/// Indices of a dense layer's weight (`in × out`) and bias (`out`) in a
/// field's flat parameter list.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Linear {
    weight: usize,
    bias: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn apply<S: Real>(&self, tape: &mut Tape<'_, S>, vars: &[Var], x: Var) -> Result<Var> {
        tape.linear(x, vars[self.weight], vars[self.bias])
    }

    pub fn parameter_count(&self) -> usize {
        self.fan_in * self.fan_out + self.fan_out
    }

    /// Multiply-adds per row, counted as two flops each.
    pub fn flops(&self) -> u64 {
        2 * (self.fan_in * self.fan_out) as u64 + self.fan_out as u64
    }
}

/// Appends freshly initialized tensors to a parameter list.
pub(crate) struct ParamBuilder<'p, S, R> {
    pub params: &'p mut Vec<Tensor<S>>,
    pub rng: R,
}

impl<S: Real, R: Rng> ParamBuilder<'_, S, R> {
    pub fn push(&mut self, t: Tensor<S>) -> usize {
        self.params.push(t);
        self.params.len() - 1
    }

    /// He-uniform weights `U(±√(6/fan_in))`, zero bias.
    pub fn linear(&mut self, fan_in: usize, fan_out: usize) -> Linear {
        self.linear_scaled(fan_in, fan_out, 1.0)
    }

    pub fn linear_scaled(&mut self, fan_in: usize, fan_out: usize, scale: f64) -> Linear {
        let bound = scale * (6.0 / fan_in as f64).sqrt();
        let w: Vec<S> = (0..fan_in * fan_out)
            .map(|_| S::of(self.rng.gen_range(-bound..=bound)))
            .collect();
        let weight = self.push(Tensor::from_parts(vec![fan_in, fan_out], w));
        let bias = self.push(Tensor::zeros(&[fan_out]));
        Linear {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }
}
