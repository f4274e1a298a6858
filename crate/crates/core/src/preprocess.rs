//! Chroma-key background removal.

use std::fs;
use std::path::{Path, PathBuf};

use image::{RgbImage, RgbaImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Image;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChromaKeyConfig {
    pub key_hue: f64,
    pub hue_tolerance: f64,
    pub min_saturation: f64,
    pub min_value: f64,
    pub despill_strength: f64,
    pub feather_radius: usize,
}

impl Default for ChromaKeyConfig {
    fn default() -> Self {
        Self {
            key_hue: 120.0,
            hue_tolerance: 35.0,
            min_saturation: 0.25,
            min_value: 0.15,
            despill_strength: 0.5,
            feather_radius: 1,
        }
    }
}

impl ChromaKeyConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(0.0..360.0).contains(&self.key_hue) {
            errs.push(format!("chroma.key_hue must lie in [0, 360), got {}", self.key_hue));
        }
        if !(self.hue_tolerance > 0.0) {
            errs.push(format!("chroma.hue_tolerance must be > 0, got {}", self.hue_tolerance));
        }
        for (name, v) in [
            ("min_saturation", self.min_saturation),
            ("min_value", self.min_value),
            ("despill_strength", self.despill_strength),
        ] {
            if !(0.0..=1.0).contains(&v) {
                errs.push(format!("chroma.{name} must lie in [0, 1], got {v}"));
            }
        }
        errs
    }

    /// The fully saturated, full-value color of the key hue.
    pub fn key_rgb(&self) -> [f64; 3] {
        hsv_to_rgb(self.key_hue, 1.0, 1.0)
    }

    /// Whether a color falls inside the key range.
    pub fn is_key(&self, rgb: [f64; 3]) -> bool {
        let (h, s, v) = rgb_to_hsv(rgb);
        let d = (h - self.key_hue).rem_euclid(360.0);
        d.min(360.0 - d) <= self.hue_tolerance && s >= self.min_saturation && v >= self.min_value
    }

    /// RGB channel closest to the key hue.
    fn spill_channel(&self) -> usize {
        ((self.key_hue / 120.0).round() as usize) % 3
    }
}

/// Hexcone conversion; hue in degrees `[0, 360)`, zero when undefined.
pub fn rgb_to_hsv(rgb: [f64; 3]) -> (f64, f64, f64) {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let c = max - min;
    let h = if c == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / c).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / c + 2.0)
    } else {
        60.0 * ((r - g) / c + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { c / max };
    (h, s, max)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn rgb8(p: &[u8]) -> [f64; 3] {
    [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0]
}

/// Binary key mask: 0 on background, 255 on foreground.
pub fn key_mask(img: &RgbImage, cfg: &ChromaKeyConfig) -> Vec<u8> {
    img.as_raw()
        .par_chunks(3)
        .map(|p| if cfg.is_key(rgb8(p)) { 0 } else { 255 })
        .collect()
}

/// Mean over a `(2r+1)²` window, clipped at the borders.
fn box_blur(mask: &[u8], w: usize, h: usize, r: usize) -> Vec<u8> {
    if r == 0 {
        return mask.to_vec();
    }
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for y in 0..h {
            for x in 0..w {
                let (pos, len) = if horizontal { (x, w) } else { (y, h) };
                let lo = pos.saturating_sub(r);
                let hi = (pos + r).min(len - 1);
                let sum: f64 = (lo..=hi)
                    .map(|k| if horizontal { src[y * w + k] } else { src[k * w + x] })
                    .sum();
                out[y * w + x] = sum / (hi - lo + 1) as f64;
            }
        }
        out
    };
    let m: Vec<f64> = mask.iter().map(|&v| v as f64).collect();
    pass(&pass(&m, true), false)
        .into_iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Keys out the background: binary mask, optional feathering, then spill
/// suppression on the remaining foreground.
pub fn chroma_key(img: &RgbImage, cfg: &ChromaKeyConfig) -> Result<RgbaImage> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    let alpha = box_blur(&key_mask(img, cfg), w, h, cfg.feather_radius);
    let ch = cfg.spill_channel();
    let mut out = Vec::with_capacity(w * h * 4);
    for (p, &a) in img.as_raw().chunks_exact(3).zip(&alpha) {
        let mut px = [p[0], p[1], p[2]];
        if a > 0 && cfg.despill_strength > 0.0 {
            let others = (0..3).filter(|&k| k != ch).map(|k| px[k] as f64).sum::<f64>() / 2.0;
            let v = px[ch] as f64;
            if v > others {
                px[ch] = (v - cfg.despill_strength * (v - others)).round() as u8;
            }
        }
        out.extend_from_slice(&[px[0], px[1], px[2], a]);
    }
    Ok(RgbaImage::from_raw(w as u32, h as u32, out).expect("buffer sized from image"))
}

/// `α·fg + (1 − α)·background` per pixel.
pub fn composite_over(img: &Image, background: [f64; 3]) -> Result<Image> {
    if img.channels() != 4 {
        return Err(crate::error::contract(format!(
            "composite_over needs RGBA, got {} channels",
            img.channels()
        )));
    }
    let data = img
        .data()
        .chunks_exact(4)
        .flat_map(|p| {
            let a = p[3];
            std::array::from_fn::<f32, 3, _>(|k| a * p[k] + (1.0 - a) * background[k] as f32)
        })
        .collect();
    Image::from_data(img.width(), img.height(), 3, data)
}

/// 8-bit version of [`composite_over`].
pub fn composite_over_rgba8(img: &RgbaImage, background: [f64; 3]) -> RgbImage {
    let f = composite_over(&Image::from_rgba8(img), background).expect("rgba input");
    f.to_rgb8().expect("rgb output")
}

fn is_png(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Keys every PNG in `in_dir` into `out_dir` under the same file name.
/// Returns the written paths in name order.
pub fn chroma_key_dir(in_dir: &Path, out_dir: &Path, cfg: &ChromaKeyConfig) -> Result<Vec<PathBuf>> {
    let mut inputs: Vec<PathBuf> = fs::read_dir(in_dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    inputs.retain(|p| p.is_file() && is_png(p));
    inputs.sort();
    if !inputs.is_empty() {
        fs::create_dir_all(out_dir)?;
    }
    inputs
        .iter()
        .map(|p| {
            let img = image::open(p)?.to_rgb8();
            let out = out_dir.join(p.file_name().expect("file has a name"));
            chroma_key(&img, cfg)?.save(&out)?;
            Ok(out)
        })
        .collect()
}

/// Intersection over union of two binary masks (nonzero = set).
pub fn mask_iou(a: &[u8], b: &[u8]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += usize::from(x > 0 && y > 0);
        union += usize::from(x > 0 || y > 0);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
