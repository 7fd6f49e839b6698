//! Closed-form normal coordinates and zero dynamics for affine nonlinear
//! systems whose drift factors through a symmetric, state-dependent system
//! matrix, with every identity verified numerically against brute-force
//! oracles.
//!
//! The toolkit splits into:
//!
//! * [`model`] - the system contract (`f = M^-1(x_beta) l(x)`) and its
//!   basic operations
//! * [`blocklin`] - partitioned algebra: Schur complement, block inverse,
//!   null basis of the transposed input map
//! * [`geomdiff`] - Lie derivatives and brackets, involutivity, relative
//!   degrees
//! * [`normalform`] - the closed-form coordinate change and internal/zero
//!   dynamics
//! * [`sim`] - RK4 integration, linearizing control, trajectory
//!   cross-validation
//! * [`spacecraft`] - the flexible-spacecraft example system
//! * [`registry`] - named models with JSON parameterization
//! * [`verify`] - the invariant suite behind `zerodyn verify`
//! * [`cli`] - command implementations for the binary

pub mod blocklin;
pub mod cli;
pub mod error;
pub mod geomdiff;
pub mod model;
pub mod normalform;
pub mod registry;
pub mod report;
pub mod sampling;
pub mod sim;
pub mod spacecraft;
pub mod verify;

pub use error::{Error, Result};
pub use model::{Dimensions, StateVector, SystemModel};
pub use normalform::NormalState;
pub use sim::{IntegratorConfig, Trajectory};
pub use spacecraft::SpacecraftParams;
