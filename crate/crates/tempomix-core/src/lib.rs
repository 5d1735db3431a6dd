//! Numerical laboratory for suspension flows over subshifts of finite type.
//!
//! The crate models a mixing machinery end to end on finite symbolic data:
//! thermodynamic formalism (transfer operators, pressure, Gibbs measures),
//! stable/unstable holonomy and temporal distance of suspension flows,
//! Diophantine certificates for ratios of temporal-range values, twisted
//! transfer operators with measured norm contraction, correlation decay of
//! the flow, and prime orbit counting with the logarithmic-integral
//! comparison. All potentials, roofs, and test functions are locally
//! constant at finite depth, which makes every holonomy sum and seminorm
//! exact rather than truncated.

pub mod error;
pub mod shift;
pub mod linalg;
pub mod thermo;
pub mod suspension;
pub mod diophantine;
pub mod dolgopyat;
pub mod mixing;
pub mod orbits;

pub use error::{Error, Result};
