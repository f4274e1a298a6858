use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::raster::Image;
use crate::renderer::camera::check_rigid;
use crate::renderer::{CameraIntrinsics, Pose};

#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub file_path: String,
    /// Camera-to-world transform in world units, as stored in the file.
    pub transform: Pose,
    pub time: Option<f64>,
}

/// A posed image collection in the transforms-JSON layout.
///
/// World coordinates map into the unit cube as `x / aabb_scale + 0.5`; use
/// [`DatasetManifest::unit_pose`] to get a pose the renderer can use.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub intrinsics: CameraIntrinsics,
    pub frames: Vec<FrameRecord>,
    pub aabb_scale: f64,
}

fn parse_err(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Parse {
        field: field.into(),
        reason: reason.into(),
    }
}

fn number(obj: &Map<String, Value>, key: &str) -> Result<Option<f64>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| parse_err(key, format!("expected a number, got {v}"))),
    }
}

fn required(obj: &Map<String, Value>, key: &str) -> Result<f64> {
    number(obj, key)?.ok_or_else(|| parse_err(key, "missing"))
}

fn size(obj: &Map<String, Value>, key: &str) -> Result<usize> {
    let v = required(obj, key)?;
    if v.fract() != 0.0 || v <= 0.0 {
        return Err(parse_err(key, format!("expected a positive integer, got {v}")));
    }
    Ok(v as usize)
}

fn parse_matrix(v: Option<&Value>, field: &str) -> Result<[[f64; 4]; 4]> {
    let rows = v
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err(field, "missing or not an array"))?;
    if rows.len() != 4 {
        return Err(parse_err(field, format!("expected 4 rows, got {}", rows.len())));
    }
    let mut m = [[0.0; 4]; 4];
    for (i, row) in rows.iter().enumerate() {
        let cols = row
            .as_array()
            .filter(|c| c.len() == 4)
            .ok_or_else(|| parse_err(format!("{field}[{i}]"), "expected 4 numbers"))?;
        for (j, c) in cols.iter().enumerate() {
            m[i][j] = c
                .as_f64()
                .ok_or_else(|| parse_err(format!("{field}[{i}][{j}]"), "not a number"))?;
        }
    }
    Ok(m)
}

impl DatasetManifest {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text)?;
        let obj = root
            .as_object()
            .ok_or_else(|| parse_err("manifest", "top level is not an object"))?;
        let width = size(obj, "w")?;
        let height = size(obj, "h")?;
        let fx = match (number(obj, "fl_x")?, number(obj, "camera_angle_x")?) {
            (Some(f), _) => f,
            (None, Some(angle)) => 0.5 * width as f64 / (0.5 * angle).tan(),
            (None, None) => return Err(parse_err("fl_x", "missing (and no camera_angle_x)")),
        };
        let intrinsics = CameraIntrinsics {
            fx,
            fy: number(obj, "fl_y")?.unwrap_or(fx),
            cx: number(obj, "cx")?.unwrap_or(0.5 * width as f64),
            cy: number(obj, "cy")?.unwrap_or(0.5 * height as f64),
            width,
            height,
            k1: number(obj, "k1")?.unwrap_or(0.0),
        };
        let errs = intrinsics.validate();
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        let aabb_scale = number(obj, "aabb_scale")?.unwrap_or(1.0);
        if !(aabb_scale > 0.0 && aabb_scale.is_finite()) {
            return Err(parse_err("aabb_scale", format!("must be positive, got {aabb_scale}")));
        }
        let frames_json = obj
            .get("frames")
            .and_then(Value::as_array)
            .ok_or_else(|| parse_err("frames", "missing or not an array"))?;
        let mut frames = Vec::with_capacity(frames_json.len());
        let mut seen = HashSet::new();
        for (i, f) in frames_json.iter().enumerate() {
            let fo = f
                .as_object()
                .ok_or_else(|| parse_err(format!("frames[{i}]"), "not an object"))?;
            let file_path = fo
                .get("file_path")
                .and_then(Value::as_str)
                .ok_or_else(|| parse_err(format!("frames[{i}].file_path"), "missing or not a string"))?
                .to_string();
            if !seen.insert(file_path.clone()) {
                return Err(parse_err(format!("frames[{i}].file_path"), format!("duplicate `{file_path}`")));
            }
            let m = parse_matrix(fo.get("transform_matrix"), &format!("frames[{i}].transform_matrix"))?;
            check_rigid(&m).map_err(|reason| Error::NonRigidPose {
                frame: i,
                path: file_path.clone(),
                reason,
            })?;
            let time = number(fo, "time").map_err(|_| parse_err(format!("frames[{i}].time"), "not a number"))?;
            if let Some(t) = time {
                if !(0.0..=1.0).contains(&t) {
                    return Err(parse_err(format!("frames[{i}].time"), format!("{t} outside [0, 1]")));
                }
            }
            frames.push(FrameRecord {
                file_path,
                transform: Pose::from_matrix(m)?,
                time,
            });
        }
        Ok(Self {
            intrinsics,
            frames,
            aabb_scale,
        })
    }

    pub fn to_json_value(&self) -> Value {
        let i = &self.intrinsics;
        let frames: Vec<Value> = self
            .frames
            .iter()
            .map(|f| {
                let mut o = json!({
                    "file_path": f.file_path,
                    "transform_matrix": f.transform.matrix(),
                });
                if let Some(t) = f.time {
                    o["time"] = json!(t);
                }
                o
            })
            .collect();
        json!({
            "fl_x": i.fx,
            "fl_y": i.fy,
            "cx": i.cx,
            "cy": i.cy,
            "w": i.width,
            "h": i.height,
            "k1": i.k1,
            "aabb_scale": self.aabb_scale,
            "frames": frames,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    /// Writes pretty-printed JSON. Floats use the shortest representation
    /// that reads back to the same bits.
    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        fs::write(path, serde_json::to_string_pretty(&self.to_json_value())? + "\n")?;
        Ok(())
    }

    pub fn has_times(&self) -> bool {
        !self.frames.is_empty() && self.frames.iter().all(|f| f.time.is_some())
    }

    /// Maps a world-space camera pose into unit-cube coordinates.
    pub fn to_unit(&self, pose: &Pose) -> Pose {
        let t = pose.translation();
        pose.with_translation(t.map(|v| v / self.aabb_scale + 0.5))
    }

    /// Maps a unit-cube pose back into world units.
    pub fn to_world(&self, pose: &Pose) -> Pose {
        let t = pose.translation();
        pose.with_translation(t.map(|v| (v - 0.5) * self.aabb_scale))
    }

    pub fn unit_pose(&self, frame: usize) -> Pose {
        self.to_unit(&self.frames[frame].transform)
    }

    /// Checks the requirements for training use.
    pub fn validate_for_training(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.frames.len() < 2 {
            errs.push(format!("dataset needs at least 2 frames, has {}", self.frames.len()));
        }
        errs
    }
}

/// A manifest plus its decoded images.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub images: Vec<Image>,
}

pub const MANIFEST_NAME: &str = "transforms.json";

impl Dataset {
    /// Opens a dataset from its directory or directly from a manifest file.
    pub fn open(path: &Path) -> Result<Self> {
        let manifest_path = if path.is_dir() {
            path.join(MANIFEST_NAME)
        } else {
            path.to_path_buf()
        };
        let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = DatasetManifest::load(&manifest_path)?;
        let images = manifest
            .frames
            .iter()
            .map(|f| {
                let p = root.join(&f.file_path);
                let p = if p.extension().is_none() { p.with_extension("png") } else { p };
                let img = Image::load_png(&p)?;
                let intr = &manifest.intrinsics;
                if img.width() != intr.width || img.height() != intr.height {
                    return Err(parse_err(
                        f.file_path.clone(),
                        format!(
                            "image is {}x{}, manifest says {}x{}",
                            img.width(),
                            img.height(),
                            intr.width,
                            intr.height
                        ),
                    ));
                }
                Ok(img)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            root,
            manifest,
            images,
        })
    }
}
