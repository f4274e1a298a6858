//! The JSON run configuration and its layering: built-in defaults, then the
//! config file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dataset::RigConfig;
use crate::error::{Error, Result};
use crate::fields::{FieldConfig, FieldKind};
use crate::renderer::CameraIntrinsics;
use crate::trainer::TrainConfig;

/// Top-level keys accepted in a config file.
pub const SECTIONS: [&str; 8] = ["synth", "chroma", "train", "render", "hash_grid", "field", "bench", "paths"];

/// A parsed config file. Sections are kept as JSON and resolved on demand
/// against the defaults of the command that needs them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    sections: Map<String, Value>,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        Self::from_value(v)
    }

    pub fn from_value(v: Value) -> Result<Self> {
        let Value::Object(sections) = v else {
            return Err(Error::Validation(vec!["config file must hold a JSON object".into()]));
        };
        let errs: Vec<String> = sections
            .iter()
            .filter(|(k, _)| !SECTIONS.contains(&k.as_str()))
            .map(|(k, _)| format!("unknown config section `{k}`"))
            .chain(
                sections
                    .iter()
                    .filter(|(_, v)| !v.is_object())
                    .map(|(k, _)| format!("config section `{k}` must be an object")),
            )
            .collect();
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        Ok(Self { sections })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Validation(vec![format!("cannot read config {}: {e}", path.display())])
        })?;
        Self::from_json_str(&text)
    }

    fn section(&self, path: &[&str]) -> Option<&Value> {
        let mut v = self.sections.get(path[0])?;
        for key in &path[1..] {
            v = v.get(*key)?;
        }
        Some(v)
    }
}

/// Overlays `overlay` onto `base`, refusing keys that `base` lacks.
fn merge(base: &mut Value, overlay: &Value, prefix: &str, errs: &mut Vec<String>) {
    let (Value::Object(b), Value::Object(o)) = (&mut *base, overlay) else {
        *base = overlay.clone();
        return;
    };
    for (k, v) in o {
        match b.get_mut(k) {
            Some(slot) if slot.is_object() && v.is_object() => merge(slot, v, &format!("{prefix}.{k}"), errs),
            Some(slot) => *slot = v.clone(),
            None => errs.push(format!("unknown config key `{prefix}.{k}`")),
        }
    }
}

/// A command-line value for a config key; `None` when the flag was not
/// given.
pub type Flag = (&'static str, Option<Value>);

pub fn flag<T: Serialize>(key: &'static str, v: &Option<T>) -> Flag {
    (key, v.as_ref().map(|v| serde_json::to_value(v).expect("flag values serialize")))
}

/// Resolves sections while collecting every problem, so that one run
/// reports all invalid values at once.
pub struct Resolver<'a> {
    config: &'a RunConfig,
    pub errors: Vec<String>,
}

impl<'a> Resolver<'a> {
    pub fn new(config: &'a RunConfig) -> Self {
        Self {
            config,
            errors: Vec::new(),
        }
    }

    /// `base`, overlaid by the config section at `path`, then by `flags`.
    pub fn resolve<T: Serialize + DeserializeOwned>(&mut self, path: &[&str], base: T, flags: &[Flag]) -> Option<T> {
        let name = path.join(".");
        let mut v = serde_json::to_value(&base).expect("defaults serialize");
        if let Some(over) = self.config.section(path) {
            merge(&mut v, over, &name, &mut self.errors);
        }
        if let Value::Object(m) = &mut v {
            for (k, val) in flags {
                if let Some(val) = val {
                    m.insert(k.to_string(), val.clone());
                }
            }
        }
        match serde_json::from_value(v) {
            Ok(t) => Some(t),
            Err(e) => {
                self.errors.push(format!("{name}: {e}"));
                None
            }
        }
    }

    pub fn check(&mut self, section: &str, errs: Vec<String>) {
        self.errors.extend(errs.into_iter().map(|e| format!("{section}: {e}")));
    }

    pub fn train(&mut self, kind: FieldKind, flags: &[Flag]) -> Option<TrainConfig> {
        let t = self.resolve(&["train"], TrainConfig::for_kind(kind), flags)?;
        self.check("train", t.validate());
        Some(t)
    }

    /// Field architecture: defaults for `kind`, then the `hash_grid`
    /// section and flags for any hash grid it contains, then
    /// `field.<kind>`.
    pub fn field(&mut self, kind: FieldKind, hash_flags: &[Flag]) -> Option<FieldConfig> {
        let mut v = serde_json::to_value(FieldConfig::default_for(kind)).expect("defaults serialize");
        let grid = match kind {
            FieldKind::Instant => v.get_mut("hash_grid"),
            FieldKind::Deformed => v.get_mut("canonical").and_then(|c| c.get_mut("hash_grid")),
            FieldKind::Vanilla => None,
        };
        if let Some(grid) = grid {
            let base = std::mem::take(grid);
            let base: crate::encodings::HashGridConfig = serde_json::from_value(base).expect("defaults parse");
            *grid = serde_json::to_value(self.resolve(&["hash_grid"], base, hash_flags)?).expect("serializes");
        }
        if let Some(over) = self.config.section(&["field", kind.name()]) {
            merge(&mut v, over, &format!("field.{}", kind.name()), &mut self.errors);
        }
        match serde_json::from_value::<FieldConfig>(v) {
            Ok(c) if c.kind() != kind => {
                self.errors.push(format!("field.{}: kind must stay `{}`", kind.name(), kind.name()));
                None
            }
            Ok(c) => {
                self.check(&format!("field.{}", kind.name()), c.validate());
                Some(c)
            }
            Err(e) => {
                self.errors.push(format!("field.{}: {e}", kind.name()));
                None
            }
        }
    }

    /// A path from its flag or from `paths.<key>`; reports it when absent.
    pub fn path(&mut self, key: &str, from_flag: &Option<PathBuf>, must_exist: bool) -> Option<PathBuf> {
        let p = from_flag.clone().or_else(|| {
            self.config
                .section(&["paths", key])
                .and_then(Value::as_str)
                .map(PathBuf::from)
        });
        match p {
            None => {
                self.errors.push(format!("missing path `{key}` (flag --{} or paths.{key})", key.replace('_', "-")));
                None
            }
            Some(p) if must_exist && !p.exists() => {
                self.errors.push(format!("{key} path {} does not exist", p.display()));
                None
            }
            Some(p) => Some(p),
        }
    }

    pub fn optional_path(&mut self, key: &str, from_flag: &Option<PathBuf>) -> Option<PathBuf> {
        let given = from_flag.is_some() || self.config.section(&["paths", key]).is_some();
        if given {
            self.path(key, from_flag, true)
        } else {
            None
        }
    }

    pub fn finish(self) -> Result<()> {
        if self.errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(self.errors))
        }
    }
}

/// Settings for `synth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSettings {
    /// Orbit views, evenly spaced around the ring.
    pub views: usize,
    pub lighting: f64,
    /// Spin rate in degrees per second; when set, a time-stamped spin
    /// sequence is produced instead of an orbit.
    pub spin: Option<f64>,
    pub fps: f64,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    pub radius: f64,
    pub ring_height: f64,
    pub aabb_scale: f64,
    pub samples_per_ray: usize,
    pub seed: u64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let rig = RigConfig::default();
        Self {
            views: 36,
            lighting: 1.0,
            spin: None,
            fps: 2.0,
            frames: 80,
            width: rig.intrinsics.width,
            height: rig.intrinsics.height,
            fov_deg: 50.0,
            radius: rig.radius,
            ring_height: rig.height,
            aabb_scale: rig.aabb_scale,
            samples_per_ray: rig.samples_per_ray,
            seed: rig.seed,
        }
    }
}

impl SynthSettings {
    pub fn rig(&self) -> RigConfig {
        RigConfig {
            intrinsics: CameraIntrinsics::from_fov(self.width, self.height, self.fov_deg.to_radians()),
            radius: self.radius,
            height: self.ring_height,
            aabb_scale: self.aabb_scale,
            lighting_scale: self.lighting,
            samples_per_ray: self.samples_per_ray,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.spin.is_none() && self.views < 2 {
            errs.push(format!("views must be >= 2, got {}", self.views));
        }
        if self.spin.is_some() {
            if self.frames < 2 {
                errs.push(format!("frames must be >= 2, got {}", self.frames));
            }
            if !(self.fps > 0.0 && self.fps.is_finite()) {
                errs.push(format!("fps must be positive, got {}", self.fps));
            }
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            errs.push(format!("fov_deg must lie in (0, 180), got {}", self.fov_deg));
        }
        if self.width == 0 || self.height == 0 {
            errs.push(format!("image size {}x{} must be positive", self.width, self.height));
        } else {
            errs.extend(self.rig().validate());
        }
        errs
    }
}

/// Settings for `bench`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSettings {
    pub kinds: Vec<FieldKind>,
    pub target_db: f64,
    pub timeout_seconds: f64,
    /// Cap later kinds at this multiple of the fastest time so far.
    pub timeout_factor: Option<f64>,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            kinds: vec![FieldKind::Instant, FieldKind::Vanilla],
            target_db: 25.0,
            timeout_seconds: 1800.0,
            timeout_factor: None,
        }
    }
}

impl BenchSettings {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.kinds.is_empty() {
            errs.push("kinds must name at least one field kind".into());
        }
        if !self.target_db.is_finite() {
            errs.push(format!("target_db must be finite, got {}", self.target_db));
        }
        if !(self.timeout_seconds > 0.0) {
            errs.push(format!("timeout_seconds must be positive, got {}", self.timeout_seconds));
        }
        if self.timeout_factor.is_some_and(|f| !(f > 0.0)) {
            errs.push("timeout_factor must be positive".into());
        }
        errs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn layering_order() {
        let cfg = RunConfig::from_value(json!({
            "train": {"max_steps": 50, "seed": 4},
            "hash_grid": {"levels": 8},
        }))
        .unwrap();
        let mut r = Resolver::new(&cfg);
        let t = r.train(FieldKind::Instant, &[flag("seed", &Some(9u64))]).unwrap();
        assert_eq!((t.max_steps, t.seed, t.learning_rate), (50, 9, 1e-2));
        let f = r.field(FieldKind::Instant, &[]).unwrap();
        let FieldConfig::Instant(i) = f else { panic!() };
        assert_eq!(i.hash_grid.levels, 8);
        r.finish().unwrap();
    }

    #[test]
    fn every_problem_is_reported() {
        let cfg = RunConfig::from_value(json!({
            "train": {"max_step": 50, "rays_per_batch": 0, "learning_rate": -1.0},
            "field": {"vanilla": {"width": 0}},
        }))
        .unwrap();
        let mut r = Resolver::new(&cfg);
        r.train(FieldKind::Vanilla, &[]);
        r.field(FieldKind::Vanilla, &[]);
        r.path("dataset", &None, true);
        let Err(Error::Validation(errs)) = r.finish() else { panic!() };
        let text = errs.join("\n");
        for needle in ["train.max_step", "rays_per_batch", "learning_rate", "field.vanilla", "dataset"] {
            assert!(text.contains(needle), "{needle} missing from\n{text}");
        }
    }

    #[test]
    fn unknown_sections_are_rejected() {
        let Err(Error::Validation(errs)) = RunConfig::from_value(json!({"trian": {}, "synth": 3})) else {
            panic!()
        };
        assert_eq!(errs.len(), 2);
    }

    #[test]
    fn deformed_hash_grid_goes_to_the_canonical_field() {
        let cfg = RunConfig::from_value(json!({"hash_grid": {"table_size": 1024}})).unwrap();
        let mut r = Resolver::new(&cfg);
        let FieldConfig::Deformed(d) = r.field(FieldKind::Deformed, &[]).unwrap() else { panic!() };
        let crate::fields::CanonicalConfig::Instant(c) = d.canonical else { panic!() };
        assert_eq!(c.hash_grid.table_size, 1024);
    }
}
