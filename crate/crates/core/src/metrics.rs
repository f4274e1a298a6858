//! Image-quality metrics (PSNR, SSIM) and per-view reports.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::error::{contract, Error, Result};
use crate::raster::Image;

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if a.same_dims(b) {
        Ok(())
    } else {
        Err(Error::Shape {
            op: "metric",
            lhs: vec![a.height(), a.width(), a.channels()],
            rhs: vec![b.height(), b.width(), b.channels()],
        })
    }
}

/// `10·log10(max² / MSE)`; `+∞` when the inputs are identical.
pub fn psnr_from_mse(mse: f64, max_value: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max_value * max_value / mse).log10()
    }
}

/// PSNR over every pixel and channel.
pub fn psnr(a: &Image, b: &Image, max_value: f64) -> Result<f64> {
    check_dims(a, b)?;
    let n = a.data().len();
    if n == 0 {
        return Err(contract("psnr of an empty image"));
    }
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum();
    Ok(psnr_from_mse(sse / n as f64, max_value))
}

/// PSNR restricted to pixels where `mask` is set.
pub fn psnr_masked(a: &Image, b: &Image, max_value: f64, mask: &[bool]) -> Result<f64> {
    check_dims(a, b)?;
    if mask.len() != a.width() * a.height() {
        return Err(Error::Shape {
            op: "psnr_masked",
            lhs: vec![a.width() * a.height()],
            rhs: vec![mask.len()],
        });
    }
    let c = a.channels();
    let (mut sse, mut n) = (0.0, 0usize);
    for ((pa, pb), &m) in a.data().chunks_exact(c).zip(b.data().chunks_exact(c)).zip(mask) {
        if m {
            sse += pa.iter().zip(pb).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>();
            n += c;
        }
    }
    if n == 0 {
        return Err(contract("psnr mask selects no pixels"));
    }
    Ok(psnr_from_mse(sse / n as f64, max_value))
}

/// PSNR of two 8-bit buffers with peak 255.
pub fn psnr_u8(a: &[u8], b: &[u8]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape {
            op: "psnr_u8",
            lhs: vec![a.len()],
            rhs: vec![b.len()],
        });
    }
    let sse: f64 = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
    Ok(psnr_from_mse(sse / a.len() as f64, 255.0))
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// Rec.601 luma of the first three channels (or the single channel).
pub fn luma(img: &Image) -> Vec<f64> {
    let c = img.channels();
    img.data()
        .chunks_exact(c)
        .map(|p| {
            if c >= 3 {
                0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
            } else {
                p[0] as f64
            }
        })
        .collect()
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut g = std::array::from_fn(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Valid-region separable filtering of a `w×h` plane.
fn filter_valid(src: &[f64], w: usize, h: usize, g: &[f64; SSIM_WINDOW]) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * src[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * tmp[(y + k) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Mean SSIM over all fully contained 11×11 Gaussian windows of the luma
/// planes. `dynamic_range` is 1 for float images and 255 for 8-bit values.
pub fn ssim_with_range(a: &Image, b: &Image, dynamic_range: f64) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(contract(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let (x, y) = (luma(a), luma(b));
    let g = gaussian_taps();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let (mx, _, _) = filter_valid(&x, w, h, &g);
    let (my, _, _) = filter_valid(&y, w, h, &g);
    let (xx, _, _) = filter_valid(&prod(&x, &x), w, h, &g);
    let (yy, _, _) = filter_valid(&prod(&y, &y), w, h, &g);
    let (xy, _, _) = filter_valid(&prod(&x, &y), w, h, &g);
    let c1 = (K1 * dynamic_range).powi(2);
    let c2 = (K2 * dynamic_range).powi(2);
    let total: f64 = (0..mx.len())
        .map(|i| ssim_window(mx[i], my[i], xx[i] - mx[i] * mx[i], yy[i] - my[i] * my[i], xy[i] - mx[i] * my[i], c1, c2))
        .sum();
    Ok(total / mx.len() as f64)
}

fn ssim_window(mx: f64, my: f64, vx: f64, vy: f64, cov: f64, c1: f64, c2: f64) -> f64 {
    ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// SSIM of float images in `[0, 1]`.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_with_range(a, b, 1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub view_id: String,
    pub psnr: f64,
    pub ssim: f64,
    pub lpips: Option<f64>,
}

/// Per-view metrics with their means. PSNR rows for identical images hold
/// `+∞`, which makes the mean infinite too.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_lpips: Option<f64>,
    pub max_value: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

impl MetricReport {
    pub fn from_rows(rows: Vec<MetricRow>, max_value: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(contract("metric report needs at least one view"));
        }
        let with_lpips: Vec<f64> = rows.iter().filter_map(|r| r.lpips).collect();
        Ok(Self {
            mean_psnr: mean(rows.iter().map(|r| r.psnr)),
            mean_ssim: mean(rows.iter().map(|r| r.ssim)),
            mean_lpips: (!with_lpips.is_empty()).then(|| mean(with_lpips.into_iter())),
            rows,
            max_value,
        })
    }

    fn has_lpips(&self) -> bool {
        self.rows.iter().any(|r| r.lpips.is_some())
    }

    /// Aligned plain-text table with a trailing mean row.
    pub fn to_text(&self) -> String {
        let fmt_psnr = |v: f64| if v.is_infinite() { "inf".to_string() } else { format!("{v:.4}") };
        let width = self.rows.iter().map(|r| r.view_id.len()).max().unwrap_or(4).max(4);
        let lp = self.has_lpips();
        let mut s = String::new();
        let _ = writeln!(s, "# psnr peak value {}", self.max_value);
        let _ = write!(s, "{:<width$}  {:>10}  {:>8}", "view", "psnr", "ssim");
        if lp {
            let _ = write!(s, "  {:>8}", "lpips");
        }
        s.push('\n');
        let mut line = |id: &str, p: f64, q: f64, l: Option<f64>| {
            let _ = write!(s, "{id:<width$}  {:>10}  {q:>8.4}", fmt_psnr(p));
            if lp {
                let _ = write!(s, "  {:>8}", l.map_or("-".into(), |v| format!("{v:.4}")));
            }
            s.push('\n');
        };
        for r in &self.rows {
            line(&r.view_id, r.psnr, r.ssim, r.lpips);
        }
        line("mean", self.mean_psnr, self.mean_ssim, self.mean_lpips);
        s
    }

    /// One JSON object per view and line; infinite PSNR is written as "inf".
    pub fn to_json_lines(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let mut v = json!({
                "view": r.view_id,
                "psnr": if r.psnr.is_finite() { json!(r.psnr) } else { json!("inf") },
                "ssim": r.ssim,
            });
            if let Some(l) = r.lpips {
                v["lpips"] = json!(l);
            }
            s.push_str(&v.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_json_lines(text: &str, max_value: f64) -> Result<Self> {
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, line)| {
                let v: Value = serde_json::from_str(line)?;
                let field = |k: &str| Error::Parse {
                    field: format!("line {}: {k}", i + 1),
                    reason: "missing or malformed".into(),
                };
                let psnr = match &v["psnr"] {
                    Value::String(s) if s == "inf" => f64::INFINITY,
                    p => p.as_f64().ok_or_else(|| field("psnr"))?,
                };
                Ok(MetricRow {
                    view_id: v["view"].as_str().ok_or_else(|| field("view"))?.to_string(),
                    psnr,
                    ssim: v["ssim"].as_f64().ok_or_else(|| field("ssim"))?,
                    lpips: v.get("lpips").and_then(Value::as_f64),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(rows, max_value)
    }
}

/// Computes PSNR/SSIM for `(view id, rendered, ground truth)` triples and
/// attaches any externally supplied LPIPS values by view id.
pub fn build_report(
    pairs: &[(String, Image, Image)],
    external_lpips: Option<&HashMap<String, f64>>,
    max_value: f64,
) -> Result<MetricReport> {
    let rows = pairs
        .iter()
        .map(|(id, rendered, truth)| {
            Ok(MetricRow {
                view_id: id.clone(),
                psnr: psnr(rendered, truth, max_value)?,
                ssim: ssim_with_range(rendered, truth, max_value)?,
                lpips: external_lpips.and_then(|m| m.get(id).copied()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MetricReport::from_rows(rows, max_value)
}

/// Parses `view_id value` pairs, one per line; `#` starts a comment.
pub fn parse_lpips_file(text: &str) -> Result<HashMap<String, f64>> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(id), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse {
                field: format!("lpips line {}", i + 1),
                reason: format!("expected `view_id value`, got {line:?}"),
            });
        };
        let v: f64 = v.parse().map_err(|e: std::num::ParseFloatError| Error::Parse {
            field: format!("lpips line {}", i + 1),
            reason: e.to_string(),
        })?;
        out.insert(id.to_string(), v);
    }
    Ok(out)
}
