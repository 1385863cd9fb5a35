//! Numerical laboratory for Bergman kernels, Fubini-Study currents and zeros
//! of random sections for singular weights on the Riemann sphere and on
//! products of two spheres.

pub mod bergman;
pub mod bivariate;
pub mod currents;
pub mod error;
pub mod geom;
pub mod l2;
pub mod plane;
pub mod poly;
pub mod quad;
pub mod random;

pub use error::{LabError, Result};
