//! Forward noising, reverse posterior steps, losses and the training loop.

mod loss;
mod schedule;
mod train;

pub use loss::{loss_rec, loss_rec_var, loss_vel, loss_vel_var};
pub use schedule::{posterior_coefficients, Schedule, VarianceKind};
pub use train::{standard_normal, train_step, write_loss_csv, EvalBatch, LossRecord, NoisedItem, TrainConfig, Trainer};
