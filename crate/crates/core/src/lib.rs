pub mod cli;
pub mod error;
pub mod harness;
pub mod model;
pub mod quad;
pub mod rng;
pub mod smoother;
pub mod spectral;
pub mod theory;

pub use error::{Error, Result};
