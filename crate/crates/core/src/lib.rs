//! Encoder–connector–language-model vision-language models at desk scale.

pub mod adapters;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod param;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{MedVlm, ModelConfig};
pub use param::{Module, Parameter};
pub use tensor::{no_grad, Elem, Tensor};
