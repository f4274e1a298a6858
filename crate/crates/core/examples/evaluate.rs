//! Scores a checkpoint on its held-out views and prints the metric table.
//!
//!     cargo run --release --example evaluate -- /tmp/run/run/final.params /tmp/run/data

use rsonerf::dataset::Dataset;
use rsonerf::metrics::build_report;
use rsonerf::renderer::render_image;
use rsonerf::trainer::{ground_truth, holdout_indices, Checkpoint};

fn main() -> rsonerf::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    if args.len() < 3 {
        eprintln!("usage: evaluate <checkpoint> <dataset dir>");
        std::process::exit(2);
    }
    let ckpt = Checkpoint::<f32>::load(args[1].as_ref())?;
    let data = Dataset::open(args[2].as_ref())?;
    let cfg = &ckpt.train_config;
    let render = cfg.render_config(false);

    let mut pairs = Vec::new();
    for v in holdout_indices(data.manifest.frames.len(), cfg.holdout_fraction) {
        let time = if ckpt.field.kind().needs_time() { data.manifest.frames[v].time } else { None };
        let pred = render_image(&data.manifest.intrinsics, &data.manifest.unit_pose(v), &ckpt.field, time, &render)?;
        let truth = ground_truth(&data.images[v], cfg.background_rgb)?;
        pairs.push((data.manifest.frames[v].file_path.clone(), pred.take_channels(3)?, truth));
    }
    print!("{}", build_report(&pairs, None, 1.0)?.to_text());
    Ok(())
}
