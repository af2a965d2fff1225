//! Joint face and body motion generation with a shared transformer
//! denoiser and cross-modal adapters.

mod binio;
pub mod config;
pub mod data;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod network;
pub mod numcore;
pub mod sampler;

pub use config::{AudioTokens, ModelConfig, Variant};
pub use error::{Error, Result};
pub use numcore::{ParamStore, Tape, Tensor, Var};
