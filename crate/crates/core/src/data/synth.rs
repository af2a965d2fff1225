//! Deterministic synthetic speech/motion corpus.
//!
//! Each sequence is driven by a loudness envelope made of decaying
//! syllable bursts. Audio features are delayed, scaled copies of the
//! envelope plus low-passed noise, with channel 0 holding the envelope
//! itself. The jaw follows the envelope, expressions are a fixed linear map
//! of its recent history, and every body channel is a speaker-specific
//! offset plus gain times a one-pole low-pass of the envelope. Only
//! additions and multiplications are used so the output is identical on
//! every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::motion::{AudioFeatureTrack, MotionLayout, MotionSequence, FPS};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const DEFAULT_FEATURE_DIM: usize = 16;

const EXPRESSION_LAGS: usize = 4;
const JAW_GAINS: [f64; 3] = [0.5, 0.1, -0.05];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_sequences: usize,
    pub frames_per_sequence: usize,
    pub speakers: usize,
    pub feature_dim: usize,
    pub layout: MotionLayout,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_sequences: 100,
            frames_per_sequence: 400,
            speakers: 4,
            feature_dim: DEFAULT_FEATURE_DIM,
            layout: MotionLayout::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSequence {
    pub motion: MotionSequence,
    pub audio: AudioFeatureTrack,
    pub speaker: usize,
}

/// Tables shared by every sequence of one corpus.
struct World {
    offsets: Vec<Vec<f64>>,
    gains: Vec<Vec<f64>>,
    poles: Vec<f64>,
    expression_map: Vec<[f64; EXPRESSION_LAGS]>,
    feature_gain: Vec<f64>,
    feature_lag: Vec<usize>,
    feature_noise: Vec<f64>,
}

impl World {
    fn new(cfg: &SynthConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let body = cfg.layout.body_width();
        let offsets = (0..cfg.speakers)
            .map(|_| (0..body).map(|_| rng.gen_range(-0.5..0.5)).collect())
            .collect();
        let gains = (0..cfg.speakers)
            .map(|_| (0..body).map(|_| rng.gen_range(-0.8..0.8)).collect())
            .collect();
        let poles = (0..body).map(|_| rng.gen_range(0.5..0.85)).collect();
        let expression_map = (0..cfg.layout.expressions)
            .map(|_| {
                let mut row = [0.0; EXPRESSION_LAGS];
                row.iter_mut().for_each(|w| *w = rng.gen_range(-0.5..0.5));
                row
            })
            .collect();
        let feature_gain = (0..cfg.feature_dim).map(|_| rng.gen_range(0.5..1.5)).collect();
        let feature_lag = (0..cfg.feature_dim).map(|_| rng.gen_range(0..3)).collect();
        let feature_noise = (0..cfg.feature_dim).map(|_| rng.gen_range(0.0..0.3)).collect();
        Self {
            offsets,
            gains,
            poles,
            expression_map,
            feature_gain,
            feature_lag,
            feature_noise,
        }
    }
}

/// Syllable-burst loudness envelope in `[0, 1]`.
pub fn envelope(rng: &mut ChaCha8Rng, frames: usize) -> Vec<f64> {
    let mut raw = vec![0.0; frames];
    let mut level: f64 = 0.0;
    let mut next_onset = rng.gen_range(0..8usize);
    for (f, r) in raw.iter_mut().enumerate() {
        level *= 0.75;
        if f == next_onset {
            level = level.max(rng.gen_range(0.5..1.0));
            next_onset += if rng.gen_bool(0.15) {
                rng.gen_range(20..40)
            } else {
                rng.gen_range(6..16)
            };
        }
        *r = level;
    }
    (0..frames)
        .map(|f| 0.7 * raw[f] + if f > 0 { 0.3 * raw[f - 1] } else { 0.0 })
        .collect()
}

/// Motion and features for one envelope.
fn render(
    world: &World,
    cfg: &SynthConfig,
    env: &[f64],
    speaker: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SynthSequence> {
    let frames = env.len();
    let layout = cfg.layout;
    let lagged = |f: usize, lag: usize| if f >= lag { env[f - lag] } else { 0.0 };

    let mut feats = vec![0.0; frames * cfg.feature_dim];
    let mut noise = vec![0.0; cfg.feature_dim];
    for f in 0..frames {
        for k in 0..cfg.feature_dim {
            noise[k] = 0.8 * noise[k] + 0.2 * rng.gen_range(-1.0..1.0);
            feats[f * cfg.feature_dim + k] = if k == 0 {
                env[f]
            } else {
                world.feature_gain[k] * lagged(f, world.feature_lag[k]) + world.feature_noise[k] * noise[k]
            };
        }
    }

    let body_w = layout.body_width();
    let width = layout.width();
    let mut motion = vec![0.0; frames * width];
    let mut state = vec![0.0; body_w];
    for f in 0..frames {
        let row = &mut motion[f * width..(f + 1) * width];
        for c in 0..body_w {
            let a = world.poles[c];
            state[c] = a * state[c] + (1.0 - a) * env[f];
            row[c] = world.offsets[speaker][c] + 2.0 * world.gains[speaker][c] * state[c];
        }
        for (j, g) in JAW_GAINS.iter().enumerate() {
            row[body_w + j] = g * env[f];
        }
        for (e, weights) in world.expression_map.iter().enumerate() {
            row[body_w + 3 + e] = weights.iter().enumerate().map(|(lag, w)| w * lagged(f, lag)).sum();
        }
    }
    Ok(SynthSequence {
        motion: MotionSequence::new(layout, FPS, Tensor::matrix(frames, width, motion)?)?,
        audio: AudioFeatureTrack::new(Tensor::matrix(frames, cfg.feature_dim, feats)?)?,
        speaker,
    })
}

/// Renders a sequence from an explicit envelope using the corpus tables of `cfg`.
pub fn render_envelope(cfg: &SynthConfig, env: &[f64], speaker: usize) -> Result<SynthSequence> {
    if speaker >= cfg.speakers {
        return Err(Error::Config(format!(
            "speaker {speaker} out of range {}",
            cfg.speakers
        )));
    }
    let world = World::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    render(&world, cfg, env, speaker, &mut rng)
}

pub fn synth_dataset(cfg: &SynthConfig) -> Result<Vec<SynthSequence>> {
    if cfg.speakers == 0 {
        return Err(Error::Config("at least one speaker is required".into()));
    }
    if cfg.feature_dim == 0 || cfg.frames_per_sequence == 0 {
        return Err(Error::Config(
            "feature width and sequence length must be positive".into(),
        ));
    }
    let world = World::new(cfg);
    (0..cfg.num_sequences)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64 + 1);
            let speaker = i % cfg.speakers;
            let env = envelope(&mut rng, cfg.frames_per_sequence);
            render(&world, cfg, &env, speaker, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            seed: 11,
            num_sequences: 3,
            frames_per_sequence: 120,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        assert_eq!(synth_dataset(&small()).unwrap(), synth_dataset(&small()).unwrap());
        let other = SynthConfig { seed: 12, ..small() };
        assert_ne!(synth_dataset(&small()).unwrap(), synth_dataset(&other).unwrap());
    }

    #[test]
    fn silent_envelope_gives_still_jaw() {
        let s = render_envelope(&small(), &[0.0; 50], 1).unwrap();
        assert!(s.motion.jaw().max_abs() == 0.0);
        assert!(s.motion.face().max_abs() == 0.0);
    }

    #[test]
    fn shapes_and_bounds() {
        let d = synth_dataset(&small()).unwrap();
        assert_eq!(d.len(), 3);
        for s in &d {
            assert_eq!(s.motion.frames(), 120);
            assert_eq!(s.audio.frames(), 120);
            assert_eq!(s.audio.dim(), DEFAULT_FEATURE_DIM);
            assert_eq!(s.motion.tensor().cols(), 232);
            assert!(s.motion.body().max_abs() <= 0.5 + 1.6);
            let env = s.audio.envelope();
            assert!(env.iter().all(|e| (0.0..=1.0).contains(e)));
        }
        assert_eq!(d[1].speaker, 1);
        assert!(synth_dataset(&SynthConfig { speakers: 0, ..small() }).is_err());
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn jaw_speed_tracks_envelope() {
        let cfg = SynthConfig {
            num_sequences: 1,
            frames_per_sequence: 1000,
            ..small()
        };
        let s = &synth_dataset(&cfg).unwrap()[0];
        let jaw = s.motion.jaw();
        let env = s.audio.envelope();
        let speed: Vec<f64> = (1..1000).map(|f| (jaw.at(f, 0) - jaw.at(f - 1, 0)).abs()).collect();
        let r = pearson(&speed, &env[1..]);
        assert!(r > 0.5, "correlation {r}");

        // face and body share the driver
        let body0: Vec<f64> = (0..1000).map(|f| s.motion.tensor().at(f, 0)).collect();
        let jaw0: Vec<f64> = (0..1000).map(|f| jaw.at(f, 0)).collect();
        assert!(pearson(&body0, &jaw0).abs() > 0.1);
    }
}
