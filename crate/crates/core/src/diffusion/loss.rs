use crate::error::{Error, Result};
use crate::numcore::{Tensor, Var};

/// Mean squared error between target and prediction.
pub fn loss_rec(x0: &Tensor, x0_hat: &Tensor) -> Result<f64> {
    if x0.shape() != x0_hat.shape() {
        return Err(Error::shape("loss_rec", x0.shape(), x0_hat.shape()));
    }
    let n = x0.len() as f64;
    Ok(x0
        .data()
        .iter()
        .zip(x0_hat.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Mean absolute difference of frame-to-frame velocities. Clips shorter
/// than two frames have no velocity and contribute 0.
pub fn loss_vel(x0: &Tensor, x0_hat: &Tensor) -> Result<f64> {
    if x0.shape() != x0_hat.shape() {
        return Err(Error::shape("loss_vel", x0.shape(), x0_hat.shape()));
    }
    let (frames, cols) = (x0.rows(), x0.cols());
    if frames < 2 {
        log::warn!("velocity loss on a {frames}-frame clip is zero");
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for f in 1..frames {
        for c in 0..cols {
            let vt = x0.at(f, c) - x0.at(f - 1, c);
            let vp = x0_hat.at(f, c) - x0_hat.at(f - 1, c);
            acc += (vt - vp).abs();
        }
    }
    Ok(acc / ((frames - 1) * cols) as f64)
}

/// Tape version of [`loss_rec`].
pub fn loss_rec_var<'t>(x0: Var<'t>, x0_hat: Var<'t>) -> Result<Var<'t>> {
    Ok(x0_hat.sub(x0)?.square().mean())
}

/// Tape version of [`loss_vel`].
pub fn loss_vel_var<'t>(x0: Var<'t>, x0_hat: Var<'t>) -> Result<Var<'t>> {
    let frames = x0.rows();
    if frames < 2 {
        log::warn!("velocity loss on a {frames}-frame clip is zero");
        return Ok(x0.tape().constant(Tensor::scalar(0.0)));
    }
    let diff = x0_hat.sub(x0)?;
    let later = diff.slice_rows(1, frames - 1)?;
    let earlier = diff.slice_rows(0, frames - 1)?;
    Ok(later.sub(earlier)?.abs().mean())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tape;

    fn col(v: &[f64]) -> Tensor {
        Tensor::matrix(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn hand_cases() {
        assert_eq!(
            loss_rec(&Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap(), &Tensor::zeros(&[1, 2])).unwrap(),
            1.0
        );
        assert_eq!(loss_vel(&col(&[0.0, 1.0, 2.0]), &col(&[0.0; 3])).unwrap(), 1.0);
        assert_eq!(loss_vel(&col(&[3.0]), &col(&[0.0])).unwrap(), 0.0);
        // constant offsets have no velocity error
        assert_eq!(loss_vel(&col(&[1.0, 2.0]), &col(&[5.0, 6.0])).unwrap(), 0.0);
        assert!(loss_rec(&col(&[1.0]), &col(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn tape_versions_agree() {
        let a = Tensor::matrix(3, 2, vec![0.1, -0.4, 0.9, 0.3, -0.2, 0.7]).unwrap();
        let b = Tensor::matrix(3, 2, vec![0.5, 0.1, -0.3, 0.2, 0.6, -0.1]).unwrap();
        let tape = Tape::new();
        let (va, vb) = (tape.constant(a.clone()), tape.constant(b.clone()));
        let r = loss_rec_var(va, vb).unwrap().value().item();
        let v = loss_vel_var(va, vb).unwrap().value().item();
        assert!((r - loss_rec(&a, &b).unwrap()).abs() < 1e-15);
        assert!((v - loss_vel(&a, &b).unwrap()).abs() < 1e-15);
    }
}
