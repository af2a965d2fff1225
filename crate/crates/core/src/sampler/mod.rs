//! Reverse-process sampling of single clips and seed-chained long-form generation.

use rand::Rng;

use crate::diffusion::{standard_normal, Schedule, VarianceKind};
use crate::error::{Error, Result};
use crate::network::{ConditioningBundle, X0Predictor};
use crate::numcore::Tensor;

/// Runs the full reverse chain from `x_T ~ N(0, I)` down to `x_0`.
pub fn sample_segment(
    model: &impl X0Predictor,
    schedule: &Schedule,
    variance: VarianceKind,
    seed: &Tensor,
    audio: &Tensor,
    speaker: usize,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let (n, w) = (model.clip_frames(), seed.cols());
    let mut x = standard_normal(n, w, rng);
    for t in (1..=schedule.steps()).rev() {
        let cond = ConditioningBundle {
            seed,
            audio,
            speaker,
            t,
        };
        let x0_hat = model.predict_x0(&x, &cond)?;
        let noise = (t > 1).then(|| standard_normal(n, w, rng));
        x = schedule.posterior_step(&x, &x0_hat, t, variance, noise.as_ref())?;
        if !x.is_finite() {
            return Err(Error::Numerical(format!("sample became non-finite at step t={t}")));
        }
    }
    Ok(x)
}

/// `(previous, next)` weights for an overlap of `len` frames: the previous
/// segment fades from `len/(len+1)` down to `1/(len+1)`.
pub fn blend_weights(len: usize) -> Vec<(f64, f64)> {
    let denom = (len + 1) as f64;
    (0..len)
        .map(|i| ((len - i) as f64 / denom, (i + 1) as f64 / denom))
        .collect()
}

/// Frame-wise convex combination of two equally long overlapping regions.
pub fn blend_overlap(prev: &Tensor, next: &Tensor) -> Result<Tensor> {
    if prev.shape() != next.shape() {
        return Err(Error::shape("blend_overlap", prev.shape(), next.shape()));
    }
    let cols = prev.cols();
    let mut out = prev.clone();
    for (i, (wp, wn)) in blend_weights(prev.rows()).into_iter().enumerate() {
        let row = &mut out.data_mut()[i * cols..(i + 1) * cols];
        for (c, v) in row.iter_mut().enumerate() {
            *v = wp * *v + wn * next.at(i, c);
        }
    }
    Ok(out)
}

/// Window start frames covering `frames` exactly: stride `n - m`, plus a
/// final window aligned to the end when the stride does not land on it.
pub fn plan_windows(frames: usize, n: usize, m: usize) -> Result<Vec<usize>> {
    if m >= n {
        return Err(Error::Config(format!("overlap {m} must be smaller than window {n}")));
    }
    if frames < n {
        return Err(Error::Data(format!(
            "audio has {frames} frames but one segment needs {n}; pad the features to at least {n} frames"
        )));
    }
    let stride = n - m;
    let mut offsets: Vec<usize> = (0..).map(|i| i * stride).take_while(|o| o + n <= frames).collect();
    let last_end = offsets.last().map_or(0, |o| o + n);
    if last_end < frames {
        offsets.push(frames - n);
    }
    Ok(offsets)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BlendRegion {
    pub start: usize,
    pub len: usize,
}

/// Generated motion plus what produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct LongForm {
    pub motion: Tensor,
    pub offsets: Vec<usize>,
    /// Seed frames each segment was conditioned on.
    pub seeds: Vec<Tensor>,
    /// Segment outputs before blending.
    pub raw: Vec<Tensor>,
    pub blends: Vec<BlendRegion>,
}

impl LongForm {
    /// Mean absolute difference between the initial seed and the first `M`
    /// generated frames. The model is not constrained to reproduce its seed.
    pub fn seed_deviation(&self) -> f64 {
        let seed = &self.seeds[0];
        let head = self.motion.slice_rows(0, seed.rows());
        head.data()
            .iter()
            .zip(seed.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / seed.len() as f64
    }
}

/// Generates motion for an arbitrarily long feature track. Each segment is
/// seeded with the previous segment's raw frames at the new window's first
/// `M` positions (its final `M` frames for regular strides), and overlaps
/// are blended with [`blend_overlap`].
pub fn generate_long(
    model: &impl X0Predictor,
    schedule: &Schedule,
    variance: VarianceKind,
    seed: &Tensor,
    audio: &Tensor,
    speaker: usize,
    rng: &mut impl Rng,
) -> Result<LongForm> {
    let (n, m) = (model.clip_frames(), model.seed_frames());
    if seed.rows() != m {
        return Err(Error::shape("initial seed", seed.shape(), &[m, seed.cols()]));
    }
    let offsets = plan_windows(audio.rows(), n, m)?;
    let mut seeds = Vec::with_capacity(offsets.len());
    let mut raw: Vec<Tensor> = Vec::with_capacity(offsets.len());
    let mut blends = Vec::new();
    let mut motion: Option<Tensor> = None;

    for (k, &off) in offsets.iter().enumerate() {
        let seg_seed = if k == 0 {
            seed.clone()
        } else {
            raw[k - 1].slice_rows(off - offsets[k - 1], m)
        };
        let seg = sample_segment(
            model,
            schedule,
            variance,
            &seg_seed,
            &audio.slice_rows(off, n),
            speaker,
            rng,
        )?;
        motion = Some(match motion {
            None => seg.clone(),
            Some(acc) => {
                let overlap = acc.rows() - off;
                let blended = blend_overlap(&acc.slice_rows(off, overlap), &seg.slice_rows(0, overlap))?;
                blends.push(BlendRegion {
                    start: off,
                    len: overlap,
                });
                let head = acc.slice_rows(0, off);
                let tail = seg.slice_rows(overlap, n - overlap);
                Tensor::concat_rows(&[&head, &blended, &tail])?
            }
        });
        seeds.push(seg_seed);
        raw.push(seg);
    }
    Ok(LongForm {
        motion: motion.expect("at least one window"),
        offsets,
        seeds,
        raw,
        blends,
    })
}
