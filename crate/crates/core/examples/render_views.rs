//! Renders a trained checkpoint at a dataset pose and at novel azimuths
//! around it.
//!
//!     cargo run --release --example render_views -- /tmp/run/run/final.params /tmp/run/data out_dir

use std::path::PathBuf;

use rsonerf::dataset::Dataset;
use rsonerf::trainer::Checkpoint;
use rsonerf::renderer::render_image;

fn main() -> rsonerf::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    if args.len() < 3 {
        eprintln!("usage: render_views <checkpoint> <dataset dir> [out dir]");
        std::process::exit(2);
    }
    let ckpt = Checkpoint::<f32>::load(args[1].as_ref())?;
    let data = Dataset::open(args[2].as_ref())?;
    let out = PathBuf::from(args.get(3).cloned().unwrap_or_else(|| "views".into()));
    std::fs::create_dir_all(&out)?;

    let render = ckpt.train_config.render_config(false);
    let base = data.manifest.unit_pose(0);
    for deg in [-15.0f64, -5.0, 0.0, 5.0, 15.0] {
        let pose = base.yawed(deg.to_radians());
        let time = ckpt.field.kind().needs_time().then_some(0.0);
        let img = render_image(&data.manifest.intrinsics, &pose, &ckpt.field, time, &render)?;
        let path = out.join(format!("yaw_{deg:+05.1}.png"));
        img.take_channels(3)?.save_png(&path)?;
        println!("{}", path.display());
    }
    Ok(())
}
