//! Dense tensors, reverse-mode autodiff, parameters, optimizer and checkpoints.

mod adam;
mod checkpoint;
mod gradcheck;
mod ops;
mod params;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig, StepOutcome};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{
    grad_check, op_grad_checks, relative_error, GradCheckReport, ParamCheck, DEFAULT_STEP, DEFAULT_TOLERANCE,
};
pub use ops::{apply_linear, layer_norm, multi_head_attention, scaled_dot_attention, AttentionWeights};
pub use params::{Bound, ParamId, ParamStore};
pub use tape::{gelu, Gradients, Tape, Var};
pub use tensor::Tensor;
