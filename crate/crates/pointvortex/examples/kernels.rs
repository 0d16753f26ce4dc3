//! Green's and Robin functions on the model domains.
//!
//! Run with `cargo run --example kernels`.

use num_complex::Complex64;
use pointvortex::greens::{coupling, grad_robin, green, harmonic_measure, robin};
use pointvortex::DomainModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = Complex64::new(0.6, 0.1);
    let y = Complex64::new(-0.2, 0.7);
    let domains = [
        ("unit disk", DomainModel::disk()),
        ("annulus rho = 0.3", DomainModel::annulus(0.3)?),
        ("exterior of the disk", DomainModel::exterior_disk()),
    ];
    for (name, d) in &domains {
        let (x, y) = if d.is_exterior() { (x * 2.5, y * 2.0) } else { (x, y) };
        println!("{name}");
        println!("  G(x, y)        = {:+.12}", green(d, x, y)?);
        println!("  robin(x)       = {:+.12}", robin(d, x)?);
        println!("  grad robin(x)  = {:+.6}", grad_robin(d, x)?);
        println!("  coupling(x, y) = {:+.6e}", coupling(d, x, y)?);
        if d.hole_count() > 0 {
            println!("  w_1(x)         = {:.12}", harmonic_measure(d, 1, x)?);
        }
    }
    Ok(())
}
