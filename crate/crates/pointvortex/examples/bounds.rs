//! Pointwise checks of the Robin function against the boundary distance.
//!
//! Run with `cargo run --release --example bounds`.

use num_complex::Complex64;
use pointvortex::measure::verify_pointwise_bounds;
use pointvortex::{DomainModel, HolomorphicMap};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let domains = [
        DomainModel::disk(),
        DomainModel::annulus(0.5)?,
        DomainModel::mapped(HolomorphicMap::polynomial(Complex64::new(0.2, 0.1))?)?,
    ];
    for d in &domains {
        let r = verify_pointwise_bounds(d, 10_000, 7)?;
        println!(
            "{:<24} violations {}  max gap {:.6}  max |grad|*d {:.6}",
            r.domain, r.violations, r.max_gap, r.max_gradient_distance
        );
        for s in &r.strata {
            println!("    d = {:.0e}: |grad|*d <= {:.8}", s.distance, s.max_gradient_distance);
        }
        for c in &r.concentration {
            println!("    k = {}: fitted C {:?}, spread {:?}", c.k, c.fitted_c, c.spread);
        }
    }
    Ok(())
}
