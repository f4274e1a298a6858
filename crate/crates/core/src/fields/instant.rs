use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Linear, ParamBuilder};
use super::FieldVars;
use crate::autodiff::{Activation, Real, Tape, Var};
use crate::encodings::{FrequencyEncoding, HashGridConfig};
use crate::error::Result;

/// Hash-grid encoding followed by two small MLPs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstantConfig {
    pub hash_grid: HashGridConfig,
    pub density_width: usize,
    pub color_widths: Vec<usize>,
    pub direction_frequencies: usize,
}

impl Default for InstantConfig {
    fn default() -> Self {
        Self {
            hash_grid: HashGridConfig::default(),
            density_width: 64,
            color_widths: vec![80, 64],
            direction_frequencies: 4,
        }
    }
}

impl InstantConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = self.hash_grid.validate();
        if self.density_width == 0 || self.color_widths.iter().any(|&w| w == 0) {
            errs.push("instant layer widths must be positive".into());
        }
        errs
    }
}

#[derive(Clone, Debug)]
pub(crate) struct InstantNet {
    grid: HashGridConfig,
    tables: Vec<usize>,
    dir_enc: FrequencyEncoding,
    hidden: Linear,
    density: Linear,
    color: Vec<Linear>,
    color_out: Linear,
}

impl InstantNet {
    pub fn build<S: Real, R: Rng>(c: &InstantConfig, b: &mut ParamBuilder<'_, S, R>) -> Self {
        let tables = c
            .hash_grid
            .init_tables::<S, _>(&mut b.rng)
            .into_iter()
            .map(|t| b.push(t))
            .collect();
        let dir_enc = FrequencyEncoding::new(c.direction_frequencies, true);
        let hidden = b.linear(c.hash_grid.output_dim(), c.density_width);
        let density = b.linear(c.density_width, 1);
        let mut color = Vec::new();
        let mut width = c.density_width;
        for &w in &c.color_widths {
            color.push(b.linear(width, w));
            width = w;
        }
        let color_out = b.linear(width + dir_enc.output_dim(3), 3);
        Self {
            grid: c.hash_grid,
            tables,
            dir_enc,
            hidden,
            density,
            color,
            color_out,
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Linear> {
        [&self.hidden, &self.density]
            .into_iter()
            .chain(&self.color)
            .chain([&self.color_out])
    }

    pub fn mlp_parameter_count(&self) -> usize {
        self.layers().map(Linear::parameter_count).sum()
    }

    pub fn flops_per_query(&self) -> u64 {
        // Per level: corner weights, eight lookups and a weighted sum.
        let f = self.grid.features_per_level as u64;
        let grid = self.grid.levels as u64 * (12 + 8 * (6 + 2 * f));
        let dir = 2 * 3 * self.dir_enc.num_frequencies as u64;
        grid + dir + self.layers().map(Linear::flops).sum::<u64>()
    }

    pub fn forward<S: Real>(
        &self,
        tape: &mut Tape<'_, S>,
        vars: &[Var],
        pos: Var,
        dir: Var,
    ) -> Result<FieldVars> {
        let tables: Vec<Var> = self.tables.iter().map(|&i| vars[i]).collect();
        let enc = self.grid.apply(tape, pos, &tables)?;
        let z = self.hidden.apply(tape, vars, enc)?;
        let h = tape.activation(z, Activation::Relu);
        let s = self.density.apply(tape, vars, h)?;
        let sigma = tape.activation(s, Activation::Exp);
        let mut hc = h;
        for layer in &self.color {
            let z = layer.apply(tape, vars, hc)?;
            hc = tape.activation(z, Activation::Relu);
        }
        let de = self.dir_enc.apply(tape, dir);
        let cat = tape.concat(hc, de)?;
        let c = self.color_out.apply(tape, vars, cat)?;
        let rgb = tape.activation(c, Activation::Sigmoid);
        Ok(FieldVars { sigma, rgb })
    }
}
