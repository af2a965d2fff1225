use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const LANDMARKS: usize = 68;
pub const LANDMARK_SEED: u64 = 68;

/// The basis shipped with the crate, `3·68` rows by 103 columns.
pub const SHIPPED_BASIS_CSV: &str = include_str!("../../assets/landmark_basis.csv");

/// Linear map from face parameters (jaw then expressions) to `L` 3-D points.
/// Row `3l + k` gives coordinate `k` of landmark `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkBasis {
    matrix: Tensor,
}

impl LandmarkBasis {
    pub fn new(matrix: Tensor) -> Result<Self> {
        if matrix.shape().len() != 2 || !matrix.rows().is_multiple_of(3) {
            return Err(Error::Data(format!(
                "basis rows must be 3 per landmark, got shape {:?}",
                matrix.shape()
            )));
        }
        Ok(Self { matrix })
    }

    /// Sparse non-negative basis: each coordinate reads one jaw channel and
    /// three expression channels.
    pub fn seeded(seed: u64, landmarks: usize, face_width: usize) -> Result<Self> {
        if face_width < 4 {
            return Err(Error::Config(format!(
                "face width {face_width} leaves no expression channels"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = 3 * landmarks;
        let mut data = vec![0.0; rows * face_width];
        for r in 0..rows {
            let row = &mut data[r * face_width..(r + 1) * face_width];
            row[r % 3] = rng.gen_range(0.5..1.0);
            let picks = sample(&mut rng, face_width - 3, 3.min(face_width - 3));
            for p in picks {
                row[3 + p] = rng.gen_range(0.0..0.5);
            }
        }
        Self::new(Tensor::matrix(rows, face_width, data)?)
    }

    /// Coordinate `i` of landmark `i / 3` reads face parameter `i`.
    pub fn selection(landmarks: usize, face_width: usize) -> Result<Self> {
        let rows = 3 * landmarks;
        if rows > face_width {
            return Err(Error::Config(format!(
                "{rows} coordinates exceed face width {face_width}"
            )));
        }
        let mut data = vec![0.0; rows * face_width];
        for r in 0..rows {
            data[r * face_width + r] = 1.0;
        }
        Self::new(Tensor::matrix(rows, face_width, data)?)
    }

    pub fn shipped() -> Result<Self> {
        Self::from_csv(SHIPPED_BASIS_CSV)
    }

    pub fn landmarks(&self) -> usize {
        self.matrix.rows() / 3
    }

    pub fn face_width(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    /// `frames x 3L` landmark coordinates of a `frames x face_width` face track.
    pub fn apply(&self, face: &Tensor) -> Result<Tensor> {
        if face.cols() != self.face_width() {
            return Err(Error::shape(
                "landmarks",
                face.shape(),
                &[face.rows(), self.face_width()],
            ));
        }
        face.matmul(&self.matrix.transpose())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for r in 0..self.matrix.rows() {
            let row: Vec<String> = self.matrix.row(r).iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Format(format!("bad basis value {v:?}")))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(Tensor::from_rows(&rows)?)
    }
}

fn check_frames(what: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Data(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn mean_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Mean absolute difference over the three jaw channels of two face tracks.
pub fn jaw_l1(gt_face: &Tensor, gen_face: &Tensor) -> Result<f64> {
    check_frames("jaw_l1", gt_face, gen_face)?;
    Ok(mean_abs_diff(&gt_face.slice_cols(0, 3), &gen_face.slice_cols(0, 3)))
}

/// Mean absolute landmark coordinate difference.
pub fn lmk_l1(gt_face: &Tensor, gen_face: &Tensor, basis: &LandmarkBasis) -> Result<f64> {
    check_frames("lmk_l1", gt_face, gen_face)?;
    Ok(mean_abs_diff(&basis.apply(gt_face)?, &basis.apply(gen_face)?))
}

/// Landmark coordinates followed by the jaw channels, per frame.
fn lvd_features(face: &Tensor, basis: &LandmarkBasis) -> Result<Tensor> {
    Tensor::concat_cols(&[&basis.apply(face)?, &face.slice_cols(0, 3)])
}

/// Mean absolute difference of frame-to-frame landmark and jaw velocities.
pub fn lvd(gt_face: &Tensor, gen_face: &Tensor, basis: &LandmarkBasis) -> Result<f64> {
    check_frames("lvd", gt_face, gen_face)?;
    if gt_face.rows() < 2 {
        return Err(Error::Data("velocity difference needs at least 2 frames".into()));
    }
    let (a, b) = (lvd_features(gt_face, basis)?, lvd_features(gen_face, basis)?);
    let velocity = |x: &Tensor| -> Tensor {
        let later = x.slice_rows(1, x.rows() - 1);
        let earlier = x.slice_rows(0, x.rows() - 1);
        let data = later.data().iter().zip(earlier.data()).map(|(p, q)| p - q).collect();
        Tensor::new(later.shape(), data).expect("same shape")
    };
    Ok(mean_abs_diff(&velocity(&a), &velocity(&b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn face(frames: usize, f: impl Fn(usize, usize) -> f64) -> Tensor {
        Tensor::matrix(frames, 103, (0..frames * 103).map(|i| f(i / 103, i % 103)).collect()).unwrap()
    }

    #[test]
    fn shipped_file_matches_generator() {
        let shipped = LandmarkBasis::shipped().unwrap();
        assert_eq!(shipped, LandmarkBasis::seeded(LANDMARK_SEED, LANDMARKS, 103).unwrap());
        assert_eq!(shipped.landmarks(), 68);
        assert!(shipped.matrix().data().iter().all(|v| *v >= 0.0));
        for r in 0..shipped.matrix().rows() {
            assert_eq!(shipped.matrix().row(r).iter().filter(|v| **v != 0.0).count(), 4);
        }
    }

    #[test]
    fn jaw_cases() {
        let a = face(5, |f, c| (f * c) as f64 * 0.01);
        assert_eq!(jaw_l1(&a, &a).unwrap(), 0.0);
        let b = face(5, |f, c| (f * c) as f64 * 0.01 + if c == 1 { 0.5 } else { 0.0 });
        assert!((jaw_l1(&a, &b).unwrap() - 0.5 / 3.0).abs() < 1e-12);
        assert_eq!(jaw_l1(&a, &b).unwrap(), jaw_l1(&b, &a).unwrap());
        assert!(jaw_l1(&a, &face(4, |_, _| 0.0)).is_err());
    }

    #[test]
    fn selection_basis_reduces_to_parameter_l1() {
        let basis = LandmarkBasis::selection(10, 103).unwrap();
        let a = face(4, |f, c| ((f + 1) * (c + 2)) as f64 * 0.03);
        let b = face(4, |f, c| (f as f64 - c as f64) * 0.02);
        let plain = mean_abs_diff(&a.slice_cols(0, 30), &b.slice_cols(0, 30));
        assert!((lmk_l1(&a, &b, &basis).unwrap() - plain).abs() < 1e-12);
        // scaling the difference scales the metric
        let b2 = face(4, |f, c| {
            let x = ((f + 1) * (c + 2)) as f64 * 0.03;
            x + 3.0 * ((f as f64 - c as f64) * 0.02 - x)
        });
        let shipped = LandmarkBasis::shipped().unwrap();
        let l1 = lmk_l1(&a, &b, &shipped).unwrap();
        assert!((lmk_l1(&a, &b2, &shipped).unwrap() - 3.0 * l1).abs() < 1e-9);
    }

    #[test]
    fn lvd_cases() {
        let basis = LandmarkBasis::selection(10, 103).unwrap();
        let gt = face(6, |_, _| 0.2);
        assert_eq!(lvd(&gt, &gt, &basis).unwrap(), 0.0);
        assert!(lvd(&gt, &face(6, |_, _| 1.2), &basis).unwrap().abs() < 1e-15);
        // expression channel 8 flips between +1 and -1
        let gen = face(6, |f, c| {
            if c == 8 {
                if f % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                0.2
            }
        });
        let want = 2.0 / (30.0 + 3.0);
        assert!((lvd(&gt, &gen, &basis).unwrap() - want).abs() < 1e-12);
        assert!(lvd(&face(1, |_, _| 0.0), &face(1, |_, _| 0.0), &basis).is_err());
    }
}
