//! Loads a transforms-JSON dataset, reports its cameras and subsamples a
//! time-stamped sequence to a lower frame rate.
//!
//!     cargo run --release --example manifest_io -- /tmp/satellite/spin/transforms.json

use rsonerf::dataset::{select_frames, DatasetManifest};

fn main() -> rsonerf::Result<()> {
    let Some(path) = std::env::args().nth(1) else {
        eprintln!("usage: manifest_io <transforms.json>");
        std::process::exit(2);
    };
    let m = DatasetManifest::load(path.as_ref())?;
    let i = &m.intrinsics;
    println!("{}x{} pixels, focal {:.1}, aabb scale {}", i.width, i.height, i.fx, m.aabb_scale);
    for (k, f) in m.frames.iter().enumerate().take(5) {
        let t = f.transform.translation();
        println!("{k:>3} {} camera at ({:.3}, {:.3}, {:.3}) time {:?}", f.file_path, t[0], t[1], t[2], f.time);
    }
    if m.frames.len() > 5 {
        println!("... {} frames in total", m.frames.len());
    }
    if let Some(problems) = Some(m.validate_for_training()).filter(|p| !p.is_empty()) {
        println!("not trainable: {problems:?}");
    }
    let halved = select_frames(&m.frames, 2.0, 1.0)?;
    println!("at half the frame rate: {} frames", halved.len());
    Ok(())
}
