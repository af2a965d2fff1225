//! JSON written next to generated motion.

use jointmotion_core::sampler::BlendRegion;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub checkpoint_sha256: String,
    pub config_hash: String,
    pub variant: String,
    pub features_sha256: String,
    pub seed_frames_sha256: String,
    pub speaker: usize,
    pub rng_seed: u64,
    pub variance: String,
    pub frames: usize,
    pub offsets: Vec<usize>,
    pub blends: Vec<BlendRegion>,
    /// Mean absolute difference between the seed and the first generated frames.
    pub seed_deviation: f64,
    pub output_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub format: String,
    pub variant: String,
    pub params: u64,
    pub steps: u64,
    pub config_hash: String,
    pub final_total: Option<f64>,
    pub checkpoint: String,
}
