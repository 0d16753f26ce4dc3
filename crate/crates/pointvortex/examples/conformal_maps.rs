//! Building holomorphic maps, checking them, and using them to define domains.
//!
//! Run with `cargo run --example conformal_maps`.

use num_complex::Complex64;
use pointvortex::complexmap::{map_sanity_report, psi_correction};
use pointvortex::greens::{green, robin};
use pointvortex::{DomainModel, HolomorphicMap};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mobius = HolomorphicMap::mobius(Complex64::new(0.3, -0.2), 0.7)?;
    let z = Complex64::new(0.1, 0.4);
    let j = mobius.jet(z)?;
    println!("Mobius: T(z) = {:.6}, T'(z) = {:.6}, T''(z) = {:.6}", j.value, j.d1, j.d2);
    println!("  inverse round trip error {:.2e}", (mobius.inverse(j.value)? - z).norm());

    // Disk automorphisms leave the disk kernel unchanged.
    let disk = DomainModel::disk();
    let y = Complex64::new(-0.5, 0.2);
    let moved = green(&disk, mobius.eval(z)?, mobius.eval(y)?)?;
    println!("  G(z, y) = {:.15}, G(Tz, Ty) = {:.15}", green(&disk, z, y)?, moved);

    let poly = HolomorphicMap::polynomial(Complex64::new(0.2, 0.0))?;
    let report = map_sanity_report(&poly, 2048, 0)?;
    println!(
        "z + 0.2 z^2: |T'| in [{:.4}, {:.4}], injectivity violations {}",
        report.m_lower, report.m_upper, report.injectivity_violations
    );
    let lobe = DomainModel::mapped(poly.clone())?;
    let x = Complex64::new(0.4, -0.3);
    println!("  area {:.6}, robin(x) = {:.9}, psi(x) = {:.6}", lobe.area(), robin(&lobe, x)?, psi_correction(&poly, x)?);

    match HolomorphicMap::polynomial(Complex64::new(0.75, 0.0)) {
        Ok(_) => println!("0.75 z^2 accepted?"),
        Err(e) => println!("z + 0.75 z^2 rejected: {e}"),
    }
    Ok(())
}
