use rand::Rng;
use serde::{Deserialize, Serialize};

use super::instant::{InstantConfig, InstantNet};
use super::mlp::{Linear, ParamBuilder};
use super::vanilla::{VanillaConfig, VanillaNet};
use super::{FieldConfig, FieldVars};
use crate::autodiff::{Activation, Real, Tape, Tensor, Var};
use crate::encodings::FrequencyEncoding;
use crate::error::Result;

/// The static field that a deformed field warps into.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CanonicalConfig {
    Vanilla(VanillaConfig),
    Instant(InstantConfig),
}

impl CanonicalConfig {
    pub fn into_field_config(self) -> FieldConfig {
        match self {
            CanonicalConfig::Vanilla(c) => FieldConfig::Vanilla(c),
            CanonicalConfig::Instant(c) => FieldConfig::Instant(c),
        }
    }
}

/// Time-conditioned displacement network in front of a canonical field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationConfig {
    pub canonical: CanonicalConfig,
    pub position_frequencies: usize,
    pub time_frequencies: usize,
    pub depth: usize,
    pub width: usize,
    /// Shrinks the initial output layer so the field starts near identity.
    pub output_scale: f64,
}

impl Default for DeformationConfig {
    fn default() -> Self {
        Self {
            canonical: CanonicalConfig::Instant(InstantConfig::default()),
            position_frequencies: 6,
            time_frequencies: 4,
            depth: 4,
            width: 128,
            output_scale: 1e-2,
        }
    }
}

impl DeformationConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = match &self.canonical {
            CanonicalConfig::Vanilla(c) => c.validate(),
            CanonicalConfig::Instant(c) => c.validate(),
        };
        if self.depth == 0 || self.width == 0 {
            errs.push("deformation depth and width must be positive".into());
        }
        if !(self.output_scale.is_finite() && self.output_scale >= 0.0) {
            errs.push(format!(
                "deformation.output_scale must be finite and non-negative, got {}",
                self.output_scale
            ));
        }
        errs
    }
}

#[derive(Clone, Debug)]
pub(crate) enum CanonicalNet {
    Vanilla(VanillaNet),
    Instant(InstantNet),
}

impl CanonicalNet {
    pub fn build<S: Real, R: Rng>(c: &CanonicalConfig, b: &mut ParamBuilder<'_, S, R>) -> Self {
        match c {
            CanonicalConfig::Vanilla(c) => CanonicalNet::Vanilla(VanillaNet::build(c, b)),
            CanonicalConfig::Instant(c) => CanonicalNet::Instant(InstantNet::build(c, b)),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct DeformedNet {
    canonical: CanonicalNet,
    canonical_params: usize,
    pos_enc: FrequencyEncoding,
    time_enc: FrequencyEncoding,
    layers: Vec<Linear>,
    out: Linear,
}

impl DeformedNet {
    pub fn build<S: Real, R: Rng>(
        c: &DeformationConfig,
        canonical: CanonicalNet,
        b: &mut ParamBuilder<'_, S, R>,
    ) -> Self {
        let canonical_params = b.params.len();
        let pos_enc = FrequencyEncoding::new(c.position_frequencies, true);
        let time_enc = FrequencyEncoding::new(c.time_frequencies, true);
        let mut width = pos_enc.output_dim(3) + time_enc.output_dim(1);
        let mut layers = Vec::new();
        for _ in 0..c.depth {
            layers.push(b.linear(width, c.width));
            width = c.width;
        }
        let out = b.linear_scaled(width, 3, c.output_scale);
        Self {
            canonical,
            canonical_params,
            pos_enc,
            time_enc,
            layers,
            out,
        }
    }

    pub fn canonical_param_count(&self) -> usize {
        self.canonical_params
    }

    fn canonical_mlp_parameter_count(&self) -> usize {
        match &self.canonical {
            CanonicalNet::Vanilla(n) => n.mlp_parameter_count(),
            CanonicalNet::Instant(n) => n.mlp_parameter_count(),
        }
    }

    pub fn mlp_parameter_count(&self) -> usize {
        self.canonical_mlp_parameter_count()
            + self.layers.iter().chain([&self.out]).map(Linear::parameter_count).sum::<usize>()
    }

    pub fn flops_per_query(&self) -> u64 {
        let canonical = match &self.canonical {
            CanonicalNet::Vanilla(n) => n.flops_per_query(),
            CanonicalNet::Instant(n) => n.flops_per_query(),
        };
        let enc = 2 * (3 * self.pos_enc.num_frequencies + self.time_enc.num_frequencies) as u64;
        let mlp: u64 = self.layers.iter().chain([&self.out]).map(Linear::flops).sum();
        canonical + enc + mlp + 3
    }

    pub fn forward<S: Real>(
        &self,
        tape: &mut Tape<'_, S>,
        vars: &[Var],
        pos: Var,
        dir: Var,
        times: &[S],
    ) -> Result<FieldVars> {
        let m = times.len();
        let t = tape.constant(Tensor::from_parts(vec![m, 1], times.to_vec()));
        let pe = self.pos_enc.apply(tape, pos);
        let te = self.time_enc.apply(tape, t);
        let mut h = tape.concat(pe, te)?;
        for layer in &self.layers {
            let z = layer.apply(tape, vars, h)?;
            h = tape.activation(z, Activation::Relu);
        }
        let raw = self.out.apply(tape, vars, h)?;
        // The reference frame is undeformed by construction.
        let keep = times.iter().map(|&t| t != S::zero()).collect();
        let delta = tape.mask_rows(raw, keep)?;
        let moved = tape.add(pos, delta)?;
        let moved = tape.clamp(moved, S::zero(), S::one());
        match &self.canonical {
            CanonicalNet::Vanilla(n) => n.forward(tape, vars, moved, dir),
            CanonicalNet::Instant(n) => n.forward(tape, vars, moved, dir),
        }
    }
}
