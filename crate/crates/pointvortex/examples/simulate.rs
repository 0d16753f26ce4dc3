//! Integrating the point-vortex system and watching the invariants.
//!
//! Run with `cargo run --release --example simulate`.

use num_complex::Complex64;
use pointvortex::dynamics::{flow_jacobian, integrate, IntegratorOptions, VortexConfiguration};
use pointvortex::DomainModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let annulus = DomainModel::annulus(0.4)?;
    let x0 = VortexConfiguration::new(
        vec![Complex64::new(0.7, 0.0), Complex64::new(-0.55, 0.3), Complex64::new(0.0, -0.8)],
        vec![1.0, -0.5, 0.8],
        vec![0.3],
    );
    let traj = integrate(&annulus, &x0, 10.0, &IntegratorOptions::default())?;
    println!("{} accepted steps, termination {:?}", traj.times.len(), traj.termination);
    println!("max relative energy drift {:.3e}", traj.max_energy_drift());
    let dmin = traj.min_separation_series.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("smallest d(X) along the orbit {dmin:.4}");
    for p in &traj.final_state().positions {
        println!("  final position {p:.6}");
    }

    let disk = DomainModel::disk();
    let pair = VortexConfiguration::simple(vec![Complex64::new(0.3, 0.1), Complex64::new(-0.2, -0.4)], vec![1.0, 2.0]);
    println!("det D S_1 = {:.9} (the flow preserves area)", flow_jacobian(&disk, &pair, 1.0)?);
    Ok(())
}
