//! Motion and audio data types, windowing, file formats and the synthetic corpus.

mod io;
mod motion;
mod synth;
mod window;

pub use io::{
    load_features, load_motion, read_features, read_motion, save_features, save_motion, write_features, write_motion,
    LayoutPolicy, FEATURE_MAGIC, FORMAT_VERSION, MOTION_MAGIC,
};
pub use motion::{
    AudioFeatureTrack, ClipSample, MotionLayout, MotionSequence, CLIP_FRAMES, EXPRESSIONS, FPS, JOINTS, SEED_FRAMES,
};
pub use synth::{envelope, render_envelope, synth_dataset, SynthConfig, SynthSequence, DEFAULT_FEATURE_DIM};
pub use window::{window_clips, window_offsets, DatasetSplit, SplitAssignment, SplitProportions};
