//! Parameter blobs: a plain-text header followed by every parameter scalar
//! in little-endian order.
//!
//! ```text
//! RSONERF-PARAMS v1
//! kind instant
//! scalar_bits 32
//! seed 7
//! step 1200
//! config {"kind":"instant",...}
//! meta running_loss 0.0031
//! tensor 8192 2
//! ...
//! end_header
//! <raw scalars>
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{FieldConfig, FieldKind, RadianceField};
use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};

const MAGIC: &str = "RSONERF-PARAMS v1";
const END: &str = "end_header";

/// A field plus training bookkeeping. `meta` holds free-form JSON values
/// keyed by single-word names.
#[derive(Clone, Debug)]
pub struct ParamBlob<S> {
    pub field: RadianceField<S>,
    pub step: u64,
    pub meta: BTreeMap<String, serde_json::Value>,
}

fn parse_err(field: &str, reason: impl Into<String>) -> Error {
    Error::Parse {
        field: field.into(),
        reason: reason.into(),
    }
}

impl<S: Real> ParamBlob<S> {
    pub fn new(field: RadianceField<S>, step: u64) -> Self {
        Self {
            field,
            step,
            meta: BTreeMap::new(),
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let f = &self.field;
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "kind {}", f.kind())?;
        writeln!(w, "scalar_bits {}", S::BITS)?;
        writeln!(w, "seed {}", f.seed())?;
        writeln!(w, "step {}", self.step)?;
        writeln!(w, "config {}", serde_json::to_string(f.config())?)?;
        for (k, v) in &self.meta {
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(crate::error::contract(format!("bad meta key {k:?}")));
            }
            writeln!(w, "meta {k} {}", serde_json::to_string(v)?)?;
        }
        for p in f.params() {
            let dims: Vec<String> = p.shape().iter().map(|d| d.to_string()).collect();
            writeln!(w, "tensor {}", dims.join(" "))?;
        }
        writeln!(w, "{END}")?;
        let mut bytes = Vec::with_capacity(f.parameter_count() * S::BITS as usize / 8);
        for p in f.params() {
            S::to_le_bytes_vec(p.data(), &mut bytes);
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        let mut next = |r: &mut BufReader<_>| -> Result<String> {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(parse_err("header", "unexpected end of file"));
            }
            Ok(line.trim_end_matches(['\n', '\r']).to_string())
        };
        if next(&mut r)? != MAGIC {
            return Err(parse_err("header", "not a parameter blob"));
        }
        let mut kind = None;
        let mut bits = None;
        let mut seed = None;
        let mut step = None;
        let mut config: Option<FieldConfig> = None;
        let mut meta = BTreeMap::new();
        let mut shapes = Vec::new();
        loop {
            let l = next(&mut r)?;
            if l == END {
                break;
            }
            let (key, rest) = l.split_once(' ').unwrap_or((l.as_str(), ""));
            let num = |v: &str| v.parse::<u64>().map_err(|e| parse_err(key, e.to_string()));
            match key {
                "kind" => kind = Some(rest.parse::<FieldKind>()?),
                "scalar_bits" => bits = Some(num(rest)?),
                "seed" => seed = Some(num(rest)?),
                "step" => step = Some(num(rest)?),
                "config" => {
                    config = Some(serde_json::from_str(rest).map_err(|e| parse_err("config", e.to_string()))?)
                }
                "meta" => {
                    let (k, v) = rest.split_once(' ').ok_or_else(|| parse_err("meta", "missing value"))?;
                    let v = serde_json::from_str(v).map_err(|e| parse_err("meta", e.to_string()))?;
                    meta.insert(k.to_string(), v);
                }
                "tensor" => {
                    let dims = rest
                        .split_whitespace()
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| parse_err("tensor", e.to_string()))?;
                    shapes.push(dims);
                }
                other => return Err(parse_err("header", format!("unknown key `{other}`"))),
            }
        }
        let missing = |name: &str| parse_err(name, "missing from header");
        let kind = kind.ok_or_else(|| missing("kind"))?;
        let config = config.ok_or_else(|| missing("config"))?;
        let bits = bits.ok_or_else(|| missing("scalar_bits"))?;
        let seed = seed.ok_or_else(|| missing("seed"))?;
        let step = step.ok_or_else(|| missing("step"))?;
        if config.kind() != kind {
            return Err(parse_err("kind", format!("header says {kind}, config says {}", config.kind())));
        }
        let width = match bits {
            32 => 4,
            64 => 8,
            b => return Err(parse_err("scalar_bits", format!("unsupported width {b}"))),
        };
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
        if bytes.len() != total * width {
            return Err(parse_err(
                "payload",
                format!("expected {} bytes, found {}", total * width, bytes.len()),
            ));
        }
        let mut values = bytes.chunks_exact(width).map(|b| {
            if width == 4 {
                S::of(f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            } else {
                S::of(f64::from_le_bytes(b.try_into().expect("8 bytes")))
            }
        });
        let params = shapes
            .into_iter()
            .map(|shape| {
                let n = shape.iter().product();
                Tensor::new(shape, values.by_ref().take(n).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let field = RadianceField::from_parts(config, seed, params)?;
        Ok(Self { field, step, meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(fs::File::open(path)?)
    }
}
