//! Stratified quadrature of the singular coupling integrals.
//!
//! Run with `cargo run --release --example inequalities`.

use pointvortex::measure::{verify_inequality_suite_with, InequalityOptions};
use pointvortex::DomainModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let opts = InequalityOptions {
        base_samples: 10_000,
        phi_samples: 5_000,
        ..InequalityOptions::default()
    };
    for d in [DomainModel::disk(), DomainModel::annulus(0.5)?] {
        let r = verify_inequality_suite_with(&d, &opts)?;
        println!("{} (kappa {}): {:?}", r.domain, r.kappa, r.verdict);
        for s in &r.estimates {
            println!("  {:<34} {:?}  change {:.2}%", s.name, s.estimates, 100.0 * s.relative_change);
        }
        for e in &r.regularized {
            println!("  eps {:>6.0e}: {:.4} {:.4}", e.epsilon, e.distance_weighted, e.boundary_weighted);
        }
    }
    Ok(())
}
