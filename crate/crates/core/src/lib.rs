//! Simulation and verification toolkit for the Dyson-Jacobi particle system
//!
//! ```text
//! dX_i = sqrt(2 X_i (1 - X_i)) dB_i + (b - (a+b) X_i) dt
//!        + (beta/2) sum_{j != i} H(X_i, X_j) / (X_i - X_j) dt,
//! H(x, y) = x(1 - y) + y(1 - x)
//! ```
//!
//! and its flattened form `Y = 2 asin(sqrt(X))`, which has constant
//! diffusion and a convex potential. All distances are measured in the
//! flattened chart (see [`geometry::NORMALIZATION`]).

pub mod analysis;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod geometry;
#[cfg(feature = "matrix-oracle")]
pub mod matrix_oracle;
pub mod model;
pub mod rng;
pub mod stats;

pub use dynamics::{Configuration, FlatConfiguration, Scheme, StepControl, TrajectoryEnsemble};
pub use error::{Error, Result};
pub use model::{DerivedConstants, ModelParams, RawParams};
