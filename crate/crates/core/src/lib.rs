//! Quaternion and real-valued networks with iterative magnitude pruning.

pub mod data;
pub mod error;
pub mod harness;
pub mod models;
pub mod par;
pub mod pruning;
pub mod quat;
pub mod scalar;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use quat::Quaternion;
pub use scalar::Scalar;
pub use tensor::Tensor;
