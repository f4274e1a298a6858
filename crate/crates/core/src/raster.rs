//! Floating-point image buffers and their on-disk forms (8-bit PNG and a raw
//! little-endian `f32` dump).

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Rgb, Rgba};

use crate::error::{contract, Error, Result};

const RAW_MAGIC: &str = "RSONERF-RAW v1";

/// Interleaved row-major image, one `f32` per channel. Values are nominally
/// in `[0, 1]` but nothing here enforces that.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Shape {
                op: "image",
                lhs: vec![height, width, channels],
                rhs: vec![data.len()],
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: &[f32]) -> Self {
        let mut data = Vec::with_capacity(width * height * value.len());
        for _ in 0..width * height {
            data.extend_from_slice(value);
        }
        Self {
            width,
            height,
            channels: value.len(),
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let o = (y * self.width + x) * self.channels;
        &self.data[o..o + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let o = (y * self.width + x) * self.channels;
        &mut self.data[o..o + self.channels]
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Keeps the first `n` channels.
    pub fn take_channels(&self, n: usize) -> Result<Image> {
        if n > self.channels {
            return Err(contract(format!("cannot take {n} of {} channels", self.channels)));
        }
        let data = self
            .data
            .chunks_exact(self.channels)
            .flat_map(|p| p[..n].iter().copied())
            .collect();
        Image::from_data(self.width, self.height, n, data)
    }

    /// Applies `f` to every sample.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Image {
        Image {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            channels: 3,
            data: img.as_raw().iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }

    pub fn from_rgba8(img: &image::RgbaImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            channels: 4,
            data: img.as_raw().iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }

    fn quantized(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn to_rgb8(&self) -> Result<image::RgbImage> {
        let rgb = if self.channels == 3 {
            self.clone()
        } else {
            self.take_channels(3)?
        };
        ImageBuffer::<Rgb<u8>, _>::from_raw(self.width as u32, self.height as u32, rgb.quantized())
            .ok_or_else(|| contract("rgb buffer size"))
    }

    pub fn to_rgba8(&self) -> Result<image::RgbaImage> {
        if self.channels != 4 {
            return Err(contract(format!("expected 4 channels, got {}", self.channels)));
        }
        ImageBuffer::<Rgba<u8>, _>::from_raw(self.width as u32, self.height as u32, self.quantized())
            .ok_or_else(|| contract("rgba buffer size"))
    }

    /// Reads a PNG; RGBA files keep their alpha, everything else becomes RGB.
    pub fn load_png(path: &Path) -> Result<Image> {
        let img = image::open(path)?;
        Ok(match img {
            DynamicImage::ImageRgba8(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageRgba16(_)
            | DynamicImage::ImageLumaA16(_) => Image::from_rgba8(&img.to_rgba8()),
            other => Image::from_rgb8(&other.to_rgb8()),
        })
    }

    /// Writes an 8-bit PNG with 3 or 4 channels.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        match self.channels {
            3 => self.to_rgb8()?.save(path)?,
            4 => self.to_rgba8()?.save(path)?,
            c => return Err(contract(format!("PNG output needs 3 or 4 channels, got {c}"))),
        }
        Ok(())
    }

    /// Raw dump: a two-line text header (`RSONERF-RAW v1`, then
    /// `width height channels`) followed by little-endian `f32` samples.
    pub fn save_raw(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        writeln!(f, "{RAW_MAGIC}")?;
        writeln!(f, "{} {} {}", self.width, self.height, self.channels)?;
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn load_raw(path: &Path) -> Result<Image> {
        let mut reader = BufReader::new(fs::File::open(path)?);
        let mut line = String::new();
        reader.read_line(&mut line)?;
        if line.trim_end() != RAW_MAGIC {
            return Err(Error::Parse {
                field: "raw header".into(),
                reason: format!("bad magic {:?}", line.trim_end()),
            });
        }
        line.clear();
        reader.read_line(&mut line)?;
        let dims: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                field: "raw dimensions".into(),
                reason: e.to_string(),
            })?;
        let [w, h, c] = dims[..] else {
            return Err(Error::Parse {
                field: "raw dimensions".into(),
                reason: format!("expected 3 values, got {}", dims.len()),
            });
        };
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Image::from_data(w, h, c, data)
    }
}

/// Rounds a `[0, 1]` sample to 8 bits.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
