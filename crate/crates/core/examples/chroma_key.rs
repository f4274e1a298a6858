//! Keys a synthetic green-screen shot and checks the recovered mask.
//!
//!     cargo run --release --example chroma_key -- keyed.png

use image::{Rgb, RgbImage};
use rsonerf::preprocess::{chroma_key, key_mask, mask_iou, ChromaKeyConfig};

fn main() -> rsonerf::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "keyed.png".into());
    let (w, h) = (128u32, 96u32);
    let mut truth = Vec::new();
    // A grey body with gold panels on an unevenly lit green backdrop.
    let shot = RgbImage::from_fn(w, h, |x, y| {
        let body = (40..88).contains(&x) && (30..66).contains(&y);
        let panel = (10..118).contains(&x) && (44..52).contains(&y);
        truth.push(if body || panel { 255u8 } else { 0 });
        if body {
            Rgb([150, 150, 160])
        } else if panel {
            Rgb([200, 160, 40])
        } else {
            Rgb([20, (170 + (x + y) % 60) as u8, 30])
        }
    });

    let cfg = ChromaKeyConfig::default();
    let iou = mask_iou(&key_mask(&shot, &cfg), &truth);
    let keyed = chroma_key(&shot, &cfg)?;
    keyed.save(&out)?;
    println!("mask IoU against the painted truth: {iou:.4}; wrote {out}");
    Ok(())
}
