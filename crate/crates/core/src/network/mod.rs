//! Shared-backbone transformer denoiser with per-modality projections and
//! cross-modal adapters.

mod denoiser;
mod gradcheck;
mod layers;
mod model;

pub use denoiser::{adapter_param_count, count_params, ConditioningBundle, Denoiser};
pub use gradcheck::network_grad_check;
pub use layers::{positional_table, sinusoid};
pub use model::{Model, X0Predictor};
