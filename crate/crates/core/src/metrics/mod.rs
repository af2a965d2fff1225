//! Evaluation metrics: Fréchet distances over learned clip features,
//! diversity, beat consistency and face reconstruction errors.

mod autoencoder;
mod beat;
mod diversity;
mod evaluate;
mod face;
mod frechet;
mod report;

pub use autoencoder::{window_starts, AutoencoderConfig, FeatureAutoencoder, Scope, MIN_TRAIN_CLIPS};
pub use beat::{
    audio_beats, beat_alignment_score, beat_consistency, frame_speed, kinematic_beats, peaks, DEFAULT_SIGMA,
};
pub use diversity::{diversity, DEFAULT_SET_SIZE};
pub use evaluate::{evaluate_model, generate_for_clips, score_clips, Autoencoders, EvalConfig};
pub use face::{jaw_l1, lmk_l1, lvd, LandmarkBasis, LANDMARKS, LANDMARK_SEED, SHIPPED_BASIS_CSV};
pub use frechet::{frechet, frechet_from_stats, GaussianStats, FRECHET_EPS};
pub use report::{MetricReport, CSV_COLUMNS};
