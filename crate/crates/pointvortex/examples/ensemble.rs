//! Near-collapse statistics over uniformly sampled initial data.
//!
//! Run with `cargo run --release --example ensemble`. Set
//! `POINTVORTEX_WORKERS` or `RAYON_NUM_THREADS` to control parallelism.

use pointvortex::measure::{ensemble_statistics, EnsembleOptions};
use pointvortex::DomainModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let disk = DomainModel::disk();
    let deltas = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
    let report = ensemble_statistics(&disk, 2, &[1.0, 1.0], 500, 5.0, &deltas, 42, &EnsembleOptions::default())?;
    print!("{}", report.collapse_csv());
    println!("terminations: {:?}", report.terminations);
    Ok(())
}
