//! The cutoff kernels, the regularized flow and its stopping time.
//!
//! Run with `cargo run --release --example regularized`.

use num_complex::Complex64;
use pointvortex::dynamics::{IntegratorOptions, VortexConfiguration};
use pointvortex::regularization::{
    lambda_eps, phi_eps, phi_hitting_bound, tau_eps, velocity_reg, FunctionalParams, RegularizedKernels,
};
use pointvortex::DomainModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let disk = DomainModel::disk();
    let eps = 1e-2;
    let kernels = RegularizedKernels::new(&disk, eps)?;
    let cut = kernels.cutoff();
    println!("cutoff for eps = {eps}: threshold {:.4}, plateau {:.4}", cut.threshold(), cut.plateau());

    // Velocities stay finite even for coincident vortices and boundary points.
    let stress = VortexConfiguration::simple(
        vec![Complex64::new(0.2, 0.0), Complex64::new(0.2, 0.0), Complex64::new(1.0, 0.0)],
        vec![1.0, 1.0, 1.0],
    );
    println!("velocities at a degenerate state: {:?}", velocity_reg(&kernels, &stress)?);

    let params = FunctionalParams::new(0.1)?;
    // An unequal dipole drifts towards the wall until a threshold is met.
    let dipole = VortexConfiguration::simple(
        vec![Complex64::new(0.9, 0.01), Complex64::new(0.9, -0.01)],
        vec![-1.0, 1.2],
    );
    println!("phi_eps(X0) = {:.6}", phi_eps(&kernels, &params, &dipole));
    let lam = lambda_eps(&kernels, &params, &dipole)?;
    println!("Lambda_eps(X0) = {:.6e} from terms {:?}", lam.total, lam.terms);

    let out = tau_eps(&disk, &dipole, eps, 5.0, &IntegratorOptions::default())?;
    println!("tau_eps = {:.6} via {:?}", out.tau, out.condition);
    println!(
        "phi_eps at tau = {:.6} (lower bound {:.6})",
        phi_eps(&kernels, &params, &out.state),
        phi_hitting_bound(eps, &params)
    );
    Ok(())
}
