//! Parallel GAN for exocentric → egocentric view translation.

pub mod autodiff;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod synthdata;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result, TensorError};
pub use tensor::{DType, Element, Tensor};
