pub mod analysis;
pub mod ansatz;
pub mod automl;
pub mod baselines;
pub mod data;
pub mod error;
pub mod forest;
pub mod gradients;
pub mod model;
pub mod statevector;
pub mod train;

pub use error::{Error, Result};
