//! Numerical laboratory for Wasserstein gradient flows with several
//! stationary solutions: granular media and kinetic Fokker-Planck solvers,
//! the self-consistency map of the quadratic-interaction model, particle
//! systems and explicit local convergence certificates.

pub mod error;
pub mod analysis;
pub mod certificates;
pub mod grid;
pub mod meanfield;
pub mod model;
pub mod particles;
pub mod pde;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
