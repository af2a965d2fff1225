use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Width of the Gaussian beat-matching kernel in seconds.
pub const DEFAULT_SIGMA: f64 = 0.1;

/// Indices of local maxima of `signal` that exceed `mean + std` of the signal.
pub fn peaks(signal: &[f64]) -> Vec<usize> {
    let n = signal.len();
    if n < 3 {
        return Vec::new();
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let std = (signal.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    let threshold = mean + std;
    (1..n - 1)
        .filter(|&i| signal[i] > signal[i - 1] && signal[i] >= signal[i + 1] && signal[i] > threshold)
        .collect()
}

/// Mean absolute frame-to-frame change over the columns of `x`; entry `f - 1`
/// belongs to frame `f`.
pub fn frame_speed(x: &Tensor) -> Vec<f64> {
    let cols = x.cols() as f64;
    (1..x.rows())
        .map(|f| {
            x.row(f)
                .iter()
                .zip(x.row(f - 1))
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / cols
        })
        .collect()
}

/// Frame times (seconds) of kinematic beats: peaks of joint-angle speed.
pub fn kinematic_beats(body: &Tensor, fps: f64) -> Vec<f64> {
    peaks(&frame_speed(body))
        .into_iter()
        .map(|i| (i + 1) as f64 / fps)
        .collect()
}

/// Frame times (seconds) of audio beats: peaks of onset strength, the
/// positive part of the envelope's temporal difference.
pub fn audio_beats(envelope: &[f64], fps: f64) -> Vec<f64> {
    let onset: Vec<f64> = envelope.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
    peaks(&onset).into_iter().map(|i| (i + 1) as f64 / fps).collect()
}

/// Mean over audio beats of `exp(-d² / 2σ²)`, `d` the distance to the
/// nearest kinematic beat. No kinematic beats scores 0; no audio beats is an error.
pub fn beat_alignment_score(audio: &[f64], kinematic: &[f64], sigma: f64) -> Result<f64> {
    if audio.is_empty() {
        return Err(Error::Unavailable("no audio beats detected".into()));
    }
    if kinematic.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = audio
        .iter()
        .map(|a| {
            let d = kinematic.iter().map(|k| (a - k).abs()).fold(f64::INFINITY, f64::min);
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .sum();
    Ok(total / audio.len() as f64)
}

/// Beat consistency of `body` motion with an audio `envelope` at `fps`.
pub fn beat_consistency(body: &Tensor, envelope: &[f64], fps: f64, sigma: f64) -> Result<f64> {
    if body.rows() != envelope.len() {
        return Err(Error::Data(format!(
            "motion has {} frames but the envelope has {}",
            body.rows(),
            envelope.len()
        )));
    }
    beat_alignment_score(&audio_beats(envelope, fps), &kinematic_beats(body, fps), sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulses(frames: usize, at: &[usize]) -> Vec<f64> {
        (0..frames).map(|f| if at.contains(&f) { 1.0 } else { 0.0 }).collect()
    }

    /// One-column body whose speed spikes at the given frames.
    fn body_with_jumps(frames: usize, at: &[usize]) -> Tensor {
        let mut v = 0.0;
        let data = (0..frames)
            .map(|f| {
                if at.contains(&f) {
                    v += 1.0;
                }
                v
            })
            .collect();
        Tensor::matrix(frames, 1, data).unwrap()
    }

    #[test]
    fn formula_cases() {
        assert_eq!(beat_alignment_score(&[1.0, 2.0], &[1.0, 2.0], 0.1).unwrap(), 1.0);
        let s = beat_alignment_score(&[1.0], &[0.3, 1.1], 0.1).unwrap();
        assert!((s - (-0.5f64).exp()).abs() < 1e-12);
        assert!((s - 0.6065).abs() < 1e-4);
        assert_eq!(beat_alignment_score(&[1.0], &[], 0.1).unwrap(), 0.0);
        assert!(beat_alignment_score(&[], &[1.0], 0.1).is_err());
    }

    #[test]
    fn aligned_sequence_scores_one() {
        let at = [10, 25, 40, 52];
        let env = pulses(60, &at);
        let body = body_with_jumps(60, &at);
        assert_eq!(beat_consistency(&body, &env, 30.0, DEFAULT_SIGMA).unwrap(), 1.0);
    }

    #[test]
    fn motionless_sequence_scores_zero() {
        let env = pulses(60, &[10, 30]);
        assert_eq!(
            beat_consistency(&Tensor::zeros(&[60, 3]), &env, 30.0, DEFAULT_SIGMA).unwrap(),
            0.0
        );
    }

    #[test]
    fn shifting_motion_away_lowers_the_score() {
        let at = [10, 25, 40, 52];
        let env = pulses(70, &at);
        let mut last = f64::INFINITY;
        for shift in 0..6 {
            let moved: Vec<usize> = at.iter().map(|f| f + shift).collect();
            let s = beat_consistency(&body_with_jumps(70, &moved), &env, 30.0, DEFAULT_SIGMA).unwrap();
            assert!((0.0..=1.0).contains(&s));
            assert!(s < last, "shift {shift}: {s} !< {last}");
            last = s;
        }
    }
}
