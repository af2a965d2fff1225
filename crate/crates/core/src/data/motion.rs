use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const JOINTS: usize = 43;
pub const EXPRESSIONS: usize = 100;
pub const CLIP_FRAMES: usize = 34;
pub const SEED_FRAMES: usize = 4;
pub const FPS: f64 = 30.0;

/// Channel layout of one motion frame: `3·J` body rotations followed by
/// 3 jaw rotations and `E` expression weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MotionLayout {
    pub joints: usize,
    pub expressions: usize,
}

impl Default for MotionLayout {
    fn default() -> Self {
        Self {
            joints: JOINTS,
            expressions: EXPRESSIONS,
        }
    }
}

impl MotionLayout {
    pub fn body_width(&self) -> usize {
        3 * self.joints
    }

    pub fn face_width(&self) -> usize {
        3 + self.expressions
    }

    /// `(J + 1)·3 + E`
    pub fn width(&self) -> usize {
        self.body_width() + self.face_width()
    }
}

/// Frame-major motion: row `f` holds body then face channels of frame `f`.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionSequence {
    layout: MotionLayout,
    fps: f64,
    data: Tensor,
}

impl MotionSequence {
    pub fn new(layout: MotionLayout, fps: f64, data: Tensor) -> Result<Self> {
        if data.cols() != layout.width() || data.shape().len() != 2 {
            return Err(Error::shape("motion", data.shape(), &[data.rows(), layout.width()]));
        }
        Ok(Self { layout, fps, data })
    }

    /// Joins body (`frames x 3J`) and face (`frames x (3+E)`) parts.
    pub fn from_parts(layout: MotionLayout, fps: f64, body: &Tensor, face: &Tensor) -> Result<Self> {
        if body.rows() != face.rows() {
            return Err(Error::Data(format!(
                "body has {} frames but face has {}",
                body.rows(),
                face.rows()
            )));
        }
        if body.cols() != layout.body_width() {
            return Err(Error::shape("body", body.shape(), &[body.rows(), layout.body_width()]));
        }
        if face.cols() != layout.face_width() {
            return Err(Error::shape("face", face.shape(), &[face.rows(), layout.face_width()]));
        }
        Self::new(layout, fps, Tensor::concat_cols(&[body, face])?)
    }

    pub fn layout(&self) -> MotionLayout {
        self.layout
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frames(&self) -> usize {
        self.data.rows()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    pub fn body(&self) -> Tensor {
        self.data.slice_cols(0, self.layout.body_width())
    }

    pub fn face(&self) -> Tensor {
        self.data.slice_cols(self.layout.body_width(), self.layout.face_width())
    }

    pub fn jaw(&self) -> Tensor {
        self.data.slice_cols(self.layout.body_width(), 3)
    }

    pub fn split(&self) -> (Tensor, Tensor) {
        (self.body(), self.face())
    }

    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.frames() {
            return Err(Error::Data(format!(
                "frames [{start}, {}) out of range for {} frames",
                start + len,
                self.frames()
            )));
        }
        Self::new(self.layout, self.fps, self.data.slice_rows(start, len))
    }
}

/// Per-frame audio features aligned one-to-one with motion frames.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioFeatureTrack {
    data: Tensor,
}

impl AudioFeatureTrack {
    pub fn new(data: Tensor) -> Result<Self> {
        if data.shape().len() != 2 {
            return Err(Error::Data(format!(
                "feature track must be 2-D, got {:?}",
                data.shape()
            )));
        }
        Ok(Self { data })
    }

    pub fn frames(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.frames() {
            return Err(Error::Data(format!(
                "frames [{start}, {}) out of range for {} frames",
                start + len,
                self.frames()
            )));
        }
        Self::new(self.data.slice_rows(start, len))
    }

    /// Loudness proxy used for onset detection: channel 0.
    pub fn envelope(&self) -> Vec<f64> {
        (0..self.frames()).map(|f| self.data.at(f, 0)).collect()
    }
}

/// One training window.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipSample {
    pub motion: MotionSequence,
    pub audio: AudioFeatureTrack,
    /// First `M` frames of `motion`, full width.
    pub seed: Tensor,
    pub speaker: usize,
    /// Index of the source sequence and frame offset of the window.
    pub source: (usize, usize),
}

impl ClipSample {
    pub fn new(
        motion: MotionSequence,
        audio: AudioFeatureTrack,
        seed_frames: usize,
        speaker: usize,
        source: (usize, usize),
    ) -> Result<Self> {
        if motion.frames() != audio.frames() {
            return Err(Error::Data(format!(
                "motion has {} frames but audio has {}",
                motion.frames(),
                audio.frames()
            )));
        }
        if seed_frames == 0 || seed_frames >= motion.frames() {
            return Err(Error::Config(format!(
                "seed length {seed_frames} must be in [1, {})",
                motion.frames()
            )));
        }
        let seed = motion.tensor().slice_rows(0, seed_frames);
        Ok(Self {
            motion,
            audio,
            seed,
            speaker,
            source,
        })
    }

    pub fn frames(&self) -> usize {
        self.motion.frames()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(rows: usize, cols: usize) -> Tensor {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|i| i as f64 * 0.5).collect()).unwrap()
    }

    #[test]
    fn default_layout_widths() {
        let l = MotionLayout::default();
        assert_eq!(l.body_width(), 129);
        assert_eq!(l.face_width(), 103);
        assert_eq!(l.width(), 232);
    }

    #[test]
    fn split_concat_round_trip() {
        let l = MotionLayout::default();
        let m = MotionSequence::new(l, FPS, ramp(5, 232)).unwrap();
        let (body, face) = m.split();
        assert_eq!(body.cols(), 129);
        assert_eq!(face.cols(), 103);
        assert_eq!(MotionSequence::from_parts(l, FPS, &body, &face).unwrap(), m);
        assert_eq!(m.jaw().data()[0], m.tensor().at(0, 129));
    }

    #[test]
    fn split_concat_frame_mismatch() {
        let l = MotionLayout::default();
        let r = MotionSequence::from_parts(l, FPS, &ramp(5, 129), &ramp(4, 103));
        assert!(matches!(r, Err(Error::Data(_))));
    }

    #[test]
    fn seed_is_clip_prefix() {
        let l = MotionLayout {
            joints: 2,
            expressions: 1,
        };
        let m = MotionSequence::new(l, FPS, ramp(6, l.width())).unwrap();
        let a = AudioFeatureTrack::new(ramp(6, 3)).unwrap();
        let c = ClipSample::new(m.clone(), a, 4, 0, (0, 0)).unwrap();
        assert_eq!(c.seed, m.tensor().slice_rows(0, 4));
        let a = AudioFeatureTrack::new(ramp(6, 3)).unwrap();
        assert!(ClipSample::new(m, a, 6, 0, (0, 0)).is_err());
    }
}
