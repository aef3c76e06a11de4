//! Electrical impedance tomography toolkit for the 16-electrode unit disk.

pub mod autodiff;
pub mod baselines;
pub mod cli_io;
pub mod error;
pub mod fem;
pub mod gridfield;
pub mod mesh;
pub mod metrics;
pub mod pipeline;
pub mod phantom;
pub mod pinn;

pub use error::{EitError, Result};
