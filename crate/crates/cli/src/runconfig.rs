//! The single run configuration file: model keys (see
//! [`ModelConfig`]) plus the keys below, one `key=value` per line.
//!
//! | key | default | used by |
//! |-----|---------|---------|
//! | `synth_seed` | 0 | synth |
//! | `num_sequences` | 100 | synth |
//! | `frames_per_sequence` | 400 | synth |
//! | `split_seed` | 0 | synth |
//! | `train_steps` | 2000 | train |
//! | `batch_size` | 8 | train |
//! | `lr` | 1e-3 | train |
//! | `lambda_vel` | 1 | train |
//! | `train_seed` | 0 | train |
//! | `checkpoint_every` | 500 | train |
//! | `nan_patience` | 20 | train |
//! | `eval_seed` | 0 | evaluate, generate |
//! | `set_size` | 50 | evaluate |
//! | `sigma` | 0.1 | evaluate |
//! | `ae_steps` | 3000 | autoencoder |
//! | `ae_seed` | 0 | autoencoder |

use std::path::Path;
use std::str::FromStr;

use jointmotion_core::config::parse_pairs;
use jointmotion_core::data::{SynthConfig, FPS};
use jointmotion_core::diffusion::TrainConfig;
use jointmotion_core::metrics::{AutoencoderConfig, EvalConfig, DEFAULT_SET_SIZE, DEFAULT_SIGMA};
use jointmotion_core::numcore::AdamConfig;
use jointmotion_core::{Error, ModelConfig, Result};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub synth_seed: u64,
    pub num_sequences: usize,
    pub frames_per_sequence: usize,
    pub split_seed: u64,
    pub train_steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lambda_vel: f64,
    pub train_seed: u64,
    pub checkpoint_every: u64,
    pub nan_patience: usize,
    pub eval_seed: u64,
    pub set_size: usize,
    pub sigma: f64,
    pub ae_steps: usize,
    pub ae_seed: u64,
}

impl RunConfig {
    pub fn with_model(model: ModelConfig) -> Self {
        Self {
            model,
            synth_seed: 0,
            num_sequences: 100,
            frames_per_sequence: 400,
            split_seed: 0,
            train_steps: 2000,
            batch_size: 8,
            lr: 1e-3,
            lambda_vel: 1.0,
            train_seed: 0,
            checkpoint_every: 500,
            nan_patience: 20,
            eval_seed: 0,
            set_size: DEFAULT_SET_SIZE,
            sigma: DEFAULT_SIGMA,
            ae_steps: 3000,
            ae_seed: 0,
        }
    }

    /// Reads `file` (if any) over `base`, then applies `overrides`.
    pub fn load(base: ModelConfig, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::with_model(base);
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            for (k, v) in parse_pairs(&text)? {
                cfg.set(&k, &v)?;
            }
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("{k}: cannot parse {v:?}")))
        }
        match key {
            "synth_seed" => self.synth_seed = num(key, value)?,
            "num_sequences" => self.num_sequences = num(key, value)?,
            "frames_per_sequence" => self.frames_per_sequence = num(key, value)?,
            "split_seed" => self.split_seed = num(key, value)?,
            "train_steps" => self.train_steps = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "lambda_vel" => self.lambda_vel = num(key, value)?,
            "train_seed" => self.train_seed = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "nan_patience" => self.nan_patience = num(key, value)?,
            "eval_seed" => self.eval_seed = num(key, value)?,
            "set_size" => self.set_size = num(key, value)?,
            "sigma" => self.sigma = num(key, value)?,
            "ae_steps" => self.ae_steps = num(key, value)?,
            "ae_seed" => self.ae_seed = num(key, value)?,
            _ => self.model.set(key, value)?,
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = self.model.to_text();
        let extra: [(&str, String); 16] = [
            ("synth_seed", self.synth_seed.to_string()),
            ("num_sequences", self.num_sequences.to_string()),
            ("frames_per_sequence", self.frames_per_sequence.to_string()),
            ("split_seed", self.split_seed.to_string()),
            ("train_steps", self.train_steps.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", format!("{:?}", self.lr)),
            ("lambda_vel", format!("{:?}", self.lambda_vel)),
            ("train_seed", self.train_seed.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("nan_patience", self.nan_patience.to_string()),
            ("eval_seed", self.eval_seed.to_string()),
            ("set_size", self.set_size.to_string()),
            ("sigma", format!("{:?}", self.sigma)),
            ("ae_steps", self.ae_steps.to_string()),
            ("ae_seed", self.ae_seed.to_string()),
        ];
        for (k, v) in extra {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            seed: self.synth_seed,
            num_sequences: self.num_sequences,
            frames_per_sequence: self.frames_per_sequence,
            speakers: self.model.speakers,
            feature_dim: self.model.audio_dim,
            layout: self.model.layout,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            steps: self.train_steps,
            batch_size: self.batch_size,
            lambda_vel: self.lambda_vel,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            seed: self.train_seed,
        }
    }

    pub fn eval(&self) -> EvalConfig {
        EvalConfig {
            seed: self.eval_seed,
            set_size: self.set_size,
            sigma: self.sigma,
            fps: FPS,
            variance: self.model.variance,
        }
    }

    pub fn autoencoder(&self) -> AutoencoderConfig {
        AutoencoderConfig {
            max_steps: self.ae_steps,
            seed: self.ae_seed,
            ..AutoencoderConfig::default()
        }
    }
}
