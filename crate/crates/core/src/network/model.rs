use std::path::Path;

use super::denoiser::{ConditioningBundle, Denoiser};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numcore::{Adam, Checkpoint, ParamStore, Tape, Tensor};

/// Anything that maps noisy motion and conditioning to a clean-motion estimate.
pub trait X0Predictor {
    fn clip_frames(&self) -> usize;
    fn seed_frames(&self) -> usize;
    fn predict_x0(&self, x_t: &Tensor, cond: &ConditioningBundle) -> Result<Tensor>;
}

/// A denoiser together with its parameter values.
#[derive(Clone, Debug)]
pub struct Model {
    pub denoiser: Denoiser,
    pub params: ParamStore,
}

impl Model {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        let (denoiser, params) = Denoiser::new(cfg)?;
        Ok(Self { denoiser, params })
    }

    pub fn config(&self) -> &ModelConfig {
        self.denoiser.config()
    }

    pub fn checkpoint(&self, step: u64, optimizer: Option<Adam>) -> Checkpoint {
        Checkpoint {
            config: self.config().to_text(),
            step,
            params: self.params.clone(),
            optimizer,
        }
    }

    /// Rebuilds the network from the stored config and takes its values.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let cfg = ModelConfig::from_text(&ckpt.config)?;
        let mut model = Self::new(&cfg)?;
        if model.params.len() != ckpt.params.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} tensors, config needs {}",
                ckpt.params.len(),
                model.params.len()
            )));
        }
        for ((want, slot), (name, value)) in model.params.iter().zip(ckpt.params.iter()) {
            if want != name || slot.shape() != value.shape() {
                return Err(Error::Format(format!(
                    "checkpoint tensor {name} {:?} does not match {want} {:?}",
                    value.shape(),
                    slot.shape()
                )));
            }
        }
        model.params = ckpt.params.clone();
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Checkpoint)> {
        let ckpt = Checkpoint::load(path)?;
        Ok((Self::from_checkpoint(&ckpt)?, ckpt))
    }
}

impl X0Predictor for Model {
    fn clip_frames(&self) -> usize {
        self.config().clip_frames
    }

    fn seed_frames(&self) -> usize {
        self.config().seed_frames
    }

    fn predict_x0(&self, x_t: &Tensor, cond: &ConditioningBundle) -> Result<Tensor> {
        let tape = Tape::new();
        let p = self.params.bind_frozen(&tape);
        let out = self.denoiser.forward(&p, tape.constant(x_t.clone()), cond)?;
        Ok(out.value().as_ref().clone())
    }
}
