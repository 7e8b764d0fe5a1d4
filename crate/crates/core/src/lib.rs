pub mod dsp;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod tensor;

pub use error::{Error, Result};
