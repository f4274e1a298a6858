//! Prints the level layout of a multiresolution hash grid and encodes a
//! point with freshly initialized tables.
//!
//!     cargo run --release --example hash_encoding

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsonerf::encodings::{FrequencyEncoding, HashGridConfig};

fn main() -> rsonerf::Result<()> {
    let grid = HashGridConfig::with_finest_resolution(16, 2, 1 << 14, 16, 256);
    println!("per-level scale {:.4}", grid.per_level_scale);
    for level in 0..grid.levels {
        println!(
            "level {level:>2}: {:>4} cells per axis, {:>6} entries, {}",
            grid.resolution(level),
            grid.entries(level),
            if grid.is_dense(level) { "dense" } else { "hashed" }
        );
    }
    println!("{} parameters, {} output features", grid.parameter_count(), grid.output_dim());

    let tables = grid.init_tables::<f64, _>(&mut ChaCha8Rng::seed_from_u64(0));
    let features = grid.encode([0.31, 0.5, 0.77], &tables)?;
    println!("encoding of (0.31, 0.5, 0.77): {:.2e} ..", features[0]);

    let freq = FrequencyEncoding::new(10, true);
    println!("positional encoding of a 3-vector has {} values", freq.output_dim(3));
    Ok(())
}
