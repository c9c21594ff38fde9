//! Max-Weight scheduling under heavy-tailed arrivals: fluid and
//! jumping-fluid models, robustness checks, stochastic simulation and
//! Lyapunov-function verification.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arrivals;
pub mod cli;
pub mod error;
pub mod fluid;
pub mod jf;
pub mod lyapunov;
pub mod network;
pub mod scenario;
pub mod stability;

pub use error::{Error, Result};
pub use fluid::{integrate_fluid, min_norm_drift, PiecewiseLinearTrajectory};
pub use network::{CapacityClass, CapacityVerdict, Network, ServiceVector};
