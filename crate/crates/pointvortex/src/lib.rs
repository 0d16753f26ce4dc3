//! Point-vortex dynamics on planar domains.
//!
//! The crate is organised bottom-up:
//!
//! * [`complexmap`] holomorphic maps and the transport of gradients through them,
//! * [`greens`] Green's and Robin functions, harmonic measures, boundary geometry,
//! * [`dynamics`] the vortex vector field, its Hamiltonian and the integrators,
//! * [`regularization`] the cutoff kernels, the regularized flow and the
//!   Lyapunov-type functional `phi_eps`,
//! * [`measure`] Monte Carlo sampling, collapse statistics and inequality checks,
//! * [`cli`] configuration files and the command-line front end.
//!
//! Runnable walkthroughs live in the `examples/` directory of this crate.

pub mod cli;
pub mod complexmap;
pub mod dynamics;
pub mod greens;
pub mod measure;
pub mod regularization;

pub use complexmap::{HolomorphicMap, Point};
pub use greens::DomainModel;
