use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Added to covariance diagonals when the unregularized distance is not
/// computable (a singular covariance or a non-finite square root).
pub const FRECHET_EPS: f64 = 1e-6;

/// Sample mean and unbiased covariance of a feature set.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn from_features(features: &[Vec<f64>]) -> Result<Self> {
        let dim = features.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::Data("feature set is empty".into()));
        }
        if features.len() < dim + 1 {
            return Err(Error::Data(format!(
                "Fréchet distance on {dim}-dimensional features needs at least {} samples per set, got {}",
                dim + 1,
                features.len()
            )));
        }
        if features.iter().any(|f| f.len() != dim) {
            return Err(Error::Data("feature vectors differ in length".into()));
        }
        let n = features.len() as f64;
        let mut mean = DVector::zeros(dim);
        for f in features {
            mean += DVector::from_column_slice(f);
        }
        mean /= n;
        let mut cov = DMatrix::zeros(dim, dim);
        for f in features {
            let c = DVector::from_column_slice(f) - &mean;
            cov.ger(1.0, &c, &c, 1.0);
        }
        cov /= n - 1.0;
        Ok(Self { mean, cov })
    }
}

/// Square root of a symmetric PSD matrix; negative round-off eigenvalues clamp to zero.
fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let ra = sqrt_psd(a);
    let inner = &ra * b * &ra;
    let sym = (&inner + inner.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum()
}

fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.clone().cholesky().is_some()
}

/// `‖μ₁−μ₂‖² + Tr(Σ₁ + Σ₂ − 2(Σ₁Σ₂)^{1/2})`.
pub fn frechet_from_stats(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.mean.len() != b.mean.len() {
        return Err(Error::shape("frechet", &[a.mean.len()], &[b.mean.len()]));
    }
    let diff = (&a.mean - &b.mean).norm_squared();
    let mut ca = a.cov.clone();
    let mut cb = b.cov.clone();
    if !(is_positive_definite(&ca) && is_positive_definite(&cb)) {
        log::debug!("singular covariance, adding {FRECHET_EPS} to the diagonal");
        for i in 0..ca.nrows() {
            ca[(i, i)] += FRECHET_EPS;
            cb[(i, i)] += FRECHET_EPS;
        }
    }
    let mut tr = trace_sqrt_product(&ca, &cb);
    if !tr.is_finite() {
        for i in 0..ca.nrows() {
            ca[(i, i)] += FRECHET_EPS;
            cb[(i, i)] += FRECHET_EPS;
        }
        tr = trace_sqrt_product(&ca, &cb);
    }
    let d = diff + ca.trace() + cb.trace() - 2.0 * tr;
    if !d.is_finite() {
        return Err(Error::Numerical("Fréchet distance is not finite".into()));
    }
    Ok(d.max(0.0))
}

pub fn frechet(real: &[Vec<f64>], generated: &[Vec<f64>]) -> Result<f64> {
    frechet_from_stats(
        &GaussianStats::from_features(real)?,
        &GaussianStats::from_features(generated)?,
    )
}
