use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Linear, ParamBuilder};
use super::FieldVars;
use crate::autodiff::{Activation, Real, Tape, Var};
use crate::encodings::FrequencyEncoding;
use crate::error::Result;

/// Coordinate MLP on frequency-encoded inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VanillaConfig {
    pub position_frequencies: usize,
    pub direction_frequencies: usize,
    pub depth: usize,
    pub width: usize,
    /// Trunk layer whose input also receives the position encoding.
    pub skip_layer: usize,
    pub color_width: usize,
}

impl Default for VanillaConfig {
    fn default() -> Self {
        Self {
            position_frequencies: 10,
            direction_frequencies: 4,
            depth: 8,
            width: 256,
            skip_layer: 5,
            color_width: 128,
        }
    }
}

impl VanillaConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.depth == 0 {
            errs.push("vanilla.depth must be at least 1".into());
        }
        if self.width == 0 || self.color_width == 0 {
            errs.push("vanilla layer widths must be positive".into());
        }
        if self.skip_layer >= self.depth.max(1) {
            errs.push(format!(
                "vanilla.skip_layer {} must be below depth {}",
                self.skip_layer, self.depth
            ));
        }
        errs
    }
}

#[derive(Clone, Debug)]
pub(crate) struct VanillaNet {
    pos_enc: FrequencyEncoding,
    dir_enc: FrequencyEncoding,
    skip_layer: usize,
    trunk: Vec<Linear>,
    density: Linear,
    feature: Linear,
    color_hidden: Linear,
    color_out: Linear,
}

impl VanillaNet {
    pub fn build<S: Real, R: Rng>(c: &VanillaConfig, b: &mut ParamBuilder<'_, S, R>) -> Self {
        let pos_enc = FrequencyEncoding::new(c.position_frequencies, true);
        let dir_enc = FrequencyEncoding::new(c.direction_frequencies, true);
        let pd = pos_enc.output_dim(3);
        let dd = dir_enc.output_dim(3);
        let trunk = (0..c.depth)
            .map(|i| {
                let fan_in = match i {
                    0 => pd,
                    i if i == c.skip_layer && i > 0 => c.width + pd,
                    _ => c.width,
                };
                b.linear(fan_in, c.width)
            })
            .collect();
        Self {
            pos_enc,
            dir_enc,
            skip_layer: c.skip_layer,
            trunk,
            density: b.linear(c.width, 1),
            feature: b.linear(c.width, c.width),
            color_hidden: b.linear(c.width + dd, c.color_width),
            color_out: b.linear(c.color_width, 3),
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Linear> {
        self.trunk
            .iter()
            .chain([&self.density, &self.feature, &self.color_hidden, &self.color_out])
    }

    pub fn mlp_parameter_count(&self) -> usize {
        self.layers().map(Linear::parameter_count).sum()
    }

    pub fn flops_per_query(&self) -> u64 {
        let enc = 2 * 3 * (self.pos_enc.num_frequencies + self.dir_enc.num_frequencies) as u64;
        enc + self.layers().map(Linear::flops).sum::<u64>()
    }

    pub fn forward<S: Real>(
        &self,
        tape: &mut Tape<'_, S>,
        vars: &[Var],
        pos: Var,
        dir: Var,
    ) -> Result<FieldVars> {
        let pe = self.pos_enc.apply(tape, pos);
        let de = self.dir_enc.apply(tape, dir);
        let mut h = pe;
        for (i, layer) in self.trunk.iter().enumerate() {
            if i == self.skip_layer && i > 0 {
                h = tape.concat(h, pe)?;
            }
            let z = layer.apply(tape, vars, h)?;
            h = tape.activation(z, Activation::Relu);
        }
        let s = self.density.apply(tape, vars, h)?;
        let sigma = tape.activation(s, Activation::Softplus);
        let feat = self.feature.apply(tape, vars, h)?;
        let cat = tape.concat(feat, de)?;
        let z = self.color_hidden.apply(tape, vars, cat)?;
        let hc = tape.activation(z, Activation::Relu);
        let c = self.color_out.apply(tape, vars, hc)?;
        let rgb = tape.activation(c, Activation::Sigmoid);
        Ok(FieldVars { sigma, rgb })
    }
}
