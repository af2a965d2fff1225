//! Binary motion and feature files.
//!
//! Motion file (little-endian):
//!
//! ```text
//! magic   8 bytes "JMMOTN\0\x01"
//! version u32 = 1
//! frames  u64
//! J       u32
//! E       u32
//! fps     f64
//! values  f64 x frames x (3J + 3 + E), row-major
//! ```
//!
//! Feature file: magic `"JMFEAT\0\x01"`, version `u32`, frames `u64`,
//! width `u32`, then `frames x width` row-major `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::motion::{AudioFeatureTrack, MotionLayout, MotionSequence};
use crate::binio::*;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const MOTION_MAGIC: &[u8; 8] = b"JMMOTN\0\x01";
pub const FEATURE_MAGIC: &[u8; 8] = b"JMFEAT\0\x01";
pub const FORMAT_VERSION: u32 = 1;

/// Layout check applied when reading a motion file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayoutPolicy {
    /// Header must match this layout exactly.
    Strict(MotionLayout),
    /// Accept whatever the header declares.
    Any,
}

impl Default for LayoutPolicy {
    fn default() -> Self {
        LayoutPolicy::Strict(MotionLayout::default())
    }
}

pub fn write_motion(w: &mut impl Write, m: &MotionSequence) -> Result<()> {
    w.write_all(MOTION_MAGIC)?;
    put_u32(w, FORMAT_VERSION)?;
    put_u64(w, m.frames() as u64)?;
    put_u32(w, m.layout().joints as u32)?;
    put_u32(w, m.layout().expressions as u32)?;
    put_f64(w, m.fps())?;
    put_f64s(w, m.tensor().data())
}

pub fn read_motion(r: &mut impl Read, policy: LayoutPolicy) -> Result<MotionSequence> {
    expect_magic(r, MOTION_MAGIC)?;
    let version = get_u32(r, "version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported motion version {version}")));
    }
    let frames = get_u64(r, "frames")? as usize;
    let layout = MotionLayout {
        joints: get_u32(r, "J")? as usize,
        expressions: get_u32(r, "E")? as usize,
    };
    let fps = get_f64(r, "fps")?;
    if let LayoutPolicy::Strict(want) = policy {
        if want != layout {
            return Err(Error::Shape {
                op: "motion header",
                lhs: vec![layout.joints, layout.expressions],
                rhs: vec![want.joints, want.expressions],
            });
        }
    }
    if frames == 0 || !(fps.is_finite() && fps > 0.0) {
        return Err(Error::Format(format!("invalid header: frames={frames} fps={fps}")));
    }
    let data = get_f64s(r, frames * layout.width(), "motion values")?;
    MotionSequence::new(layout, fps, Tensor::matrix(frames, layout.width(), data)?)
}

pub fn write_features(w: &mut impl Write, a: &AudioFeatureTrack) -> Result<()> {
    w.write_all(FEATURE_MAGIC)?;
    put_u32(w, FORMAT_VERSION)?;
    put_u64(w, a.frames() as u64)?;
    put_u32(w, a.dim() as u32)?;
    put_f64s(w, a.tensor().data())
}

pub fn read_features(r: &mut impl Read) -> Result<AudioFeatureTrack> {
    expect_magic(r, FEATURE_MAGIC)?;
    let version = get_u32(r, "version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported feature version {version}")));
    }
    let frames = get_u64(r, "frames")? as usize;
    let dim = get_u32(r, "width")? as usize;
    if frames == 0 || dim == 0 {
        return Err(Error::Format(format!("invalid header: frames={frames} width={dim}")));
    }
    let data = get_f64s(r, frames * dim, "feature values")?;
    AudioFeatureTrack::new(Tensor::matrix(frames, dim, data)?)
}

pub fn save_motion(path: impl AsRef<Path>, m: &MotionSequence) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_motion(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_motion(path: impl AsRef<Path>, policy: LayoutPolicy) -> Result<MotionSequence> {
    read_motion(&mut BufReader::new(File::open(path)?), policy)
}

pub fn save_features(path: impl AsRef<Path>, a: &AudioFeatureTrack) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_features(&mut w, a)?;
    w.flush()?;
    Ok(())
}

pub fn load_features(path: impl AsRef<Path>) -> Result<AudioFeatureTrack> {
    read_features(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::motion::FPS;

    fn sample(layout: MotionLayout, frames: usize) -> MotionSequence {
        let w = layout.width();
        let data = (0..frames * w).map(|i| (i as f64 * 0.37).sin()).collect();
        MotionSequence::new(layout, FPS, Tensor::matrix(frames, w, data).unwrap()).unwrap()
    }

    #[test]
    fn motion_round_trip_is_bit_exact() {
        let m = sample(MotionLayout::default(), 3);
        let mut buf = Vec::new();
        write_motion(&mut buf, &m).unwrap();
        let back = read_motion(&mut buf.as_slice(), LayoutPolicy::default()).unwrap();
        assert_eq!(back, m);
        let bits = |s: &MotionSequence| s.tensor().data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn strict_policy_rejects_other_layouts() {
        let m = sample(
            MotionLayout {
                joints: 10,
                expressions: 100,
            },
            2,
        );
        let mut buf = Vec::new();
        write_motion(&mut buf, &m).unwrap();
        let err = read_motion(&mut buf.as_slice(), LayoutPolicy::default());
        assert!(matches!(err, Err(Error::Shape { .. })));
        assert!(read_motion(&mut buf.as_slice(), LayoutPolicy::Any).is_ok());
    }

    #[test]
    fn empty_or_truncated_input_is_a_parse_error() {
        assert!(matches!(
            read_motion(&mut &b""[..], LayoutPolicy::default()),
            Err(Error::Format(_))
        ));
        let m = sample(MotionLayout::default(), 2);
        let mut buf = Vec::new();
        write_motion(&mut buf, &m).unwrap();
        buf.truncate(buf.len() - 5);
        assert!(matches!(
            read_motion(&mut buf.as_slice(), LayoutPolicy::default()),
            Err(Error::Format(_))
        ));
        assert!(matches!(read_features(&mut &b""[..]), Err(Error::Format(_))));
    }

    #[test]
    fn feature_round_trip() {
        let a =
            AudioFeatureTrack::new(Tensor::matrix(4, 3, (0..12).map(|i| i as f64 / 7.0).collect()).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_features(&mut buf, &a).unwrap();
        assert_eq!(read_features(&mut buf.as_slice()).unwrap(), a);
    }
}
