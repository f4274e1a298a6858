//! Radiance fields behind a single query contract:
//! position (+ direction, + optional time) → (density, color).
//!
//! Every field keeps its trainable tensors in one flat list so the optimizer,
//! the tape and the checkpoint format can treat all kinds alike.

pub mod checkpoint;
mod deformed;
mod instant;
mod mlp;
mod vanilla;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::error::{contract, Error, Result};
use crate::renderer::RadianceSource;

pub use deformed::{CanonicalConfig, DeformationConfig};
pub use instant::InstantConfig;
pub use vanilla::VanillaConfig;

use deformed::DeformedNet;
use instant::InstantNet;
use mlp::ParamBuilder;
use vanilla::VanillaNet;

/// Density and color emitted at one query point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldOutput<S> {
    pub sigma: S,
    pub rgb: [S; 3],
}

impl FieldOutput<f64> {
    pub const EMPTY: Self = FieldOutput {
        sigma: 0.0,
        rgb: [0.0; 3],
    };
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldQuery<S> {
    pub position: [S; 3],
    pub direction: [S; 3],
    pub time: Option<S>,
}

/// A batch of query points as `m×3` tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryBatch<S> {
    pub positions: Tensor<S>,
    pub directions: Tensor<S>,
    pub times: Option<Vec<S>>,
}

impl<S: Real> QueryBatch<S> {
    pub fn new(positions: &[[S; 3]], directions: &[[S; 3]], times: Option<Vec<S>>) -> Result<Self> {
        if positions.len() != directions.len()
            || times.as_ref().is_some_and(|t| t.len() != positions.len())
        {
            return Err(Error::Shape {
                op: "query_batch",
                lhs: vec![positions.len()],
                rhs: vec![directions.len(), times.map_or(0, |t| t.len())],
            });
        }
        let m = positions.len();
        Ok(Self {
            positions: Tensor::from_parts(vec![m, 3], positions.iter().flatten().copied().collect()),
            directions: Tensor::from_parts(vec![m, 3], directions.iter().flatten().copied().collect()),
            times,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Vanilla,
    Instant,
    #[serde(rename = "dnerf")]
    Deformed,
}

impl FieldKind {
    pub const ALL: [FieldKind; 3] = [FieldKind::Vanilla, FieldKind::Instant, FieldKind::Deformed];

    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Vanilla => "vanilla",
            FieldKind::Instant => "instant",
            FieldKind::Deformed => "dnerf",
        }
    }

    pub fn needs_time(self) -> bool {
        self == FieldKind::Deformed
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FieldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vanilla" | "nerf" => Ok(FieldKind::Vanilla),
            "instant" | "ngp" => Ok(FieldKind::Instant),
            "dnerf" | "deformed" | "d-nerf" => Ok(FieldKind::Deformed),
            other => Err(contract(format!(
                "unknown field kind `{other}` (expected vanilla, instant or dnerf)"
            ))),
        }
    }
}

/// Architecture of a field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldConfig {
    Vanilla(VanillaConfig),
    Instant(InstantConfig),
    #[serde(rename = "dnerf")]
    Deformed(DeformationConfig),
}

impl FieldConfig {
    pub fn default_for(kind: FieldKind) -> Self {
        match kind {
            FieldKind::Vanilla => FieldConfig::Vanilla(VanillaConfig::default()),
            FieldKind::Instant => FieldConfig::Instant(InstantConfig::default()),
            FieldKind::Deformed => FieldConfig::Deformed(DeformationConfig::default()),
        }
    }

    pub fn kind(&self) -> FieldKind {
        match self {
            FieldConfig::Vanilla(_) => FieldKind::Vanilla,
            FieldConfig::Instant(_) => FieldKind::Instant,
            FieldConfig::Deformed(_) => FieldKind::Deformed,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        match self {
            FieldConfig::Vanilla(c) => c.validate(),
            FieldConfig::Instant(c) => c.validate(),
            FieldConfig::Deformed(c) => c.validate(),
        }
    }
}

/// Tape handles for a batch of field outputs: `sigma` is `m×1`, `rgb` `m×3`.
#[derive(Clone, Copy, Debug)]
pub struct FieldVars {
    pub sigma: Var,
    pub rgb: Var,
}

#[derive(Clone, Debug)]
enum Net {
    Vanilla(VanillaNet),
    Instant(InstantNet),
    Deformed(DeformedNet),
}

/// A radiance field: architecture, seed and trainable parameters.
#[derive(Clone, Debug)]
pub struct RadianceField<S> {
    config: FieldConfig,
    seed: u64,
    net: Net,
    params: Vec<Tensor<S>>,
}

/// Seed offset for the deformation network, so that the canonical part of a
/// deformed field initializes exactly like a standalone canonical field.
const DEFORM_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

impl<S: Real> RadianceField<S> {
    /// Default architecture for `kind`.
    pub fn init(kind: FieldKind, seed: u64) -> Self {
        Self::init_with(FieldConfig::default_for(kind), seed).expect("default configs are valid")
    }

    pub fn init_with(config: FieldConfig, seed: u64) -> Result<Self> {
        let errs = config.validate();
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        let mut params = Vec::new();
        let net = build_net(&config, seed, &mut params);
        Ok(Self {
            config,
            seed,
            net,
            params,
        })
    }

    /// Rebuilds a field from stored parameters, checking every shape.
    pub fn from_parts(config: FieldConfig, seed: u64, params: Vec<Tensor<S>>) -> Result<Self> {
        let template = Self::init_with(config, seed)?;
        if template.params.len() != params.len() {
            return Err(Error::Shape {
                op: "field parameters",
                lhs: vec![template.params.len()],
                rhs: vec![params.len()],
            });
        }
        for (a, b) in template.params.iter().zip(&params) {
            if a.shape() != b.shape() {
                return Err(Error::Shape {
                    op: "field parameters",
                    lhs: a.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
        }
        Ok(Self { params, ..template })
    }

    pub fn kind(&self) -> FieldKind {
        self.config.kind()
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Tensor<S>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.numel()).sum()
    }

    /// Scalars in dense layers only (hash tables excluded).
    pub fn mlp_parameter_count(&self) -> usize {
        match &self.net {
            Net::Vanilla(n) => n.mlp_parameter_count(),
            Net::Instant(n) => n.mlp_parameter_count(),
            Net::Deformed(n) => n.mlp_parameter_count(),
        }
    }

    /// Analytic floating-point operations for one forward query.
    pub fn flops_per_query(&self) -> u64 {
        match &self.net {
            Net::Vanilla(n) => n.flops_per_query(),
            Net::Instant(n) => n.flops_per_query(),
            Net::Deformed(n) => n.flops_per_query(),
        }
    }

    fn check_time(&self, batch: &QueryBatch<S>) -> Result<()> {
        match (self.kind().needs_time(), batch.times.is_some()) {
            (true, false) => Err(contract(format!(
                "{} field queries need a time value",
                self.kind()
            ))),
            (false, true) => Err(contract(format!(
                "{} field queries take no time value",
                self.kind()
            ))),
            _ => Ok(()),
        }
    }

    /// Records a batched forward pass. `vars` are this field's parameters as
    /// bound on `tape` (see [`Tape::bind_params`]).
    pub fn forward<'a>(
        &self,
        tape: &mut Tape<'a, S>,
        vars: &[Var],
        batch: &QueryBatch<S>,
    ) -> Result<FieldVars> {
        self.check_time(batch)?;
        if vars.len() != self.params.len() {
            return Err(contract(format!(
                "expected {} parameter vars, got {}",
                self.params.len(),
                vars.len()
            )));
        }
        let pos = tape.constant(batch.positions.clone());
        let dir = tape.constant(batch.directions.clone());
        match &self.net {
            Net::Vanilla(n) => n.forward(tape, vars, pos, dir),
            Net::Instant(n) => n.forward(tape, vars, pos, dir),
            Net::Deformed(n) => {
                let times = batch.times.as_ref().expect("checked above");
                n.forward(tape, vars, pos, dir, times)
            }
        }
    }

    /// Forward pass without gradient tracking.
    pub fn eval_batch(&self, batch: &QueryBatch<S>) -> Result<Vec<FieldOutput<S>>> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.iter().map(|p| tape.constant_ref(p)).collect();
        let out = self.forward(&mut tape, &vars, batch)?;
        let sigma = tape.value(out.sigma).data();
        let rgb = tape.value(out.rgb).data();
        Ok(sigma
            .iter()
            .zip(rgb.chunks_exact(3))
            .map(|(&s, c)| FieldOutput {
                sigma: s,
                rgb: [c[0], c[1], c[2]],
            })
            .collect())
    }

    /// Single-point query.
    pub fn query(&self, q: &FieldQuery<S>) -> Result<FieldOutput<S>> {
        let batch = QueryBatch::new(&[q.position], &[q.direction], q.time.map(|t| vec![t]))?;
        Ok(self.eval_batch(&batch)?[0])
    }

    /// The canonical field inside a deformed field, with its parameters.
    pub fn canonical(&self) -> Option<RadianceField<S>> {
        let (Net::Deformed(n), FieldConfig::Deformed(cfg)) = (&self.net, &self.config) else {
            return None;
        };
        let config = cfg.canonical.clone().into_field_config();
        let params = self.params[..n.canonical_param_count()].to_vec();
        RadianceField::from_parts(config, self.seed, params).ok()
    }
}

fn build_net<S: Real>(config: &FieldConfig, seed: u64, params: &mut Vec<Tensor<S>>) -> Net {
    let mut builder = ParamBuilder {
        params,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    match config {
        FieldConfig::Vanilla(c) => Net::Vanilla(VanillaNet::build(c, &mut builder)),
        FieldConfig::Instant(c) => Net::Instant(InstantNet::build(c, &mut builder)),
        FieldConfig::Deformed(c) => {
            let canonical = deformed::CanonicalNet::build(&c.canonical, &mut builder);
            let mut deform_builder = ParamBuilder {
                params: builder.params,
                rng: ChaCha8Rng::seed_from_u64(seed ^ DEFORM_STREAM),
            };
            Net::Deformed(DeformedNet::build(c, canonical, &mut deform_builder))
        }
    }
}

impl<S: Real> RadianceSource for RadianceField<S> {
    fn query_batch(
        &self,
        positions: &[[f64; 3]],
        directions: &[[f64; 3]],
        time: Option<f64>,
    ) -> Result<Vec<FieldOutput<f64>>> {
        let conv = |v: &[f64; 3]| [S::of(v[0]), S::of(v[1]), S::of(v[2])];
        let pos: Vec<[S; 3]> = positions.iter().map(conv).collect();
        let dir: Vec<[S; 3]> = directions.iter().map(conv).collect();
        let times = time.map(|t| vec![S::of(t); positions.len()]);
        let batch = QueryBatch::new(&pos, &dir, times)?;
        Ok(self
            .eval_batch(&batch)?
            .into_iter()
            .map(|o| FieldOutput {
                sigma: o.sigma.f64(),
                rgb: [o.rgb[0].f64(), o.rgb[1].f64(), o.rgb[2].f64()],
            })
            .collect())
    }
}
