use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::motion::{AudioFeatureTrack, ClipSample, MotionSequence};
use super::synth::SynthSequence;
use crate::error::{Error, Result};

/// Start frames of full `n`-frame windows sharing `m` frames with their
/// neighbour. Frames past the last full window are dropped.
pub fn window_offsets(frames: usize, n: usize, m: usize) -> Result<Vec<usize>> {
    if m >= n {
        return Err(Error::Config(format!("overlap {m} must be smaller than window {n}")));
    }
    if frames < n {
        return Err(Error::Data(format!(
            "sequence of {frames} frames is shorter than one {n}-frame window"
        )));
    }
    let stride = n - m;
    let count = (frames - n) / stride + 1;
    Ok((0..count).map(|i| i * stride).collect())
}

pub fn window_clips(
    motion: &MotionSequence,
    audio: &AudioFeatureTrack,
    n: usize,
    m: usize,
    speaker: usize,
    sequence_index: usize,
) -> Result<Vec<ClipSample>> {
    if motion.frames() != audio.frames() {
        return Err(Error::Data(format!(
            "motion has {} frames but audio has {}",
            motion.frames(),
            audio.frames()
        )));
    }
    window_offsets(motion.frames(), n, m)?
        .into_iter()
        .map(|off| {
            ClipSample::new(
                motion.slice_frames(off, n)?,
                audio.slice_frames(off, n)?,
                m,
                speaker,
                (sequence_index, off),
            )
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitProportions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitProportions {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

/// Sequence indices assigned to each split.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitAssignment {
    /// Shuffles sequence indices with `seed` and cuts them by `props`.
    /// Splitting whole sequences keeps overlapping windows out of different splits.
    pub fn new(sequences: usize, props: SplitProportions, seed: u64) -> Result<Self> {
        if sequences == 0 {
            return Err(Error::Data("cannot split an empty dataset".into()));
        }
        let total = props.train + props.val + props.test;
        if [props.train, props.val, props.test].iter().any(|p| *p < 0.0) || total <= 0.0 {
            return Err(Error::Config(format!("invalid split proportions {props:?}")));
        }
        let mut idx: Vec<usize> = (0..sequences).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((props.train / total) * sequences as f64).round() as usize;
        let n_val = (((props.val / total) * sequences as f64).round() as usize).min(sequences - n_train);
        let mut train = idx[..n_train].to_vec();
        let mut val = idx[n_train..n_train + n_val].to_vec();
        let mut test = idx[n_train + n_val..].to_vec();
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        Ok(Self { train, val, test })
    }
}

#[derive(Clone, Debug, Default)]
pub struct DatasetSplit {
    pub train: Vec<ClipSample>,
    pub val: Vec<ClipSample>,
    pub test: Vec<ClipSample>,
}

impl DatasetSplit {
    /// Windows every sequence into `n`-frame clips overlapping by `m` and
    /// files them under the split its sequence was assigned to.
    pub fn from_sequences(seqs: &[SynthSequence], assignment: &SplitAssignment, n: usize, m: usize) -> Result<Self> {
        let clips = |idx: &[usize]| -> Result<Vec<ClipSample>> {
            let mut out = Vec::new();
            for &i in idx {
                let s = seqs
                    .get(i)
                    .ok_or_else(|| Error::Data(format!("split names sequence {i} of {}", seqs.len())))?;
                out.extend(window_clips(&s.motion, &s.audio, n, m, s.speaker, i)?);
            }
            Ok(out)
        };
        Ok(Self {
            train: clips(&assignment.train)?,
            val: clips(&assignment.val)?,
            test: clips(&assignment.test)?,
        })
    }

    pub fn total(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }
}
