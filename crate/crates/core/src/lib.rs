pub mod autodiff;
mod binio;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod network;
pub mod params;
pub mod rapconv;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{ConvSpec, Scalar, Shape, Tensor};
