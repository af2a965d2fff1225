//! Layer primitives composed from tape operations.

use super::tape::Var;
use crate::error::{Error, Result};

/// `x · w + b` for `x: n x d_in`, `w: d_in x d_out`, `b: d_out`.
pub fn apply_linear<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    x.matmul(w)?.add_row(b)
}

pub fn layer_norm<'t>(x: Var<'t>, gain: Var<'t>, bias: Var<'t>, eps: f64) -> Result<Var<'t>> {
    x.layer_norm(gain, bias, eps)
}

/// Single-head scaled dot-product attention with no learned projections.
pub fn scaled_dot_attention<'t>(q: Var<'t>, k: Var<'t>, v: Var<'t>) -> Result<Var<'t>> {
    if q.cols() != k.cols() {
        return Err(Error::shape("attention", &q.shape(), &k.shape()));
    }
    if k.rows() != v.rows() {
        return Err(Error::shape("attention", &k.shape(), &v.shape()));
    }
    let scale = 1.0 / (q.cols() as f64).sqrt();
    let weights = q.matmul_t(k, false, true)?.scale(scale).softmax();
    weights.matmul(v)
}

/// Learned projections of one multi-head attention layer.
#[derive(Clone, Copy)]
pub struct AttentionWeights<'t> {
    pub wq: Var<'t>,
    pub bq: Var<'t>,
    pub wk: Var<'t>,
    pub bk: Var<'t>,
    pub wv: Var<'t>,
    pub bv: Var<'t>,
    pub wo: Var<'t>,
    pub bo: Var<'t>,
}

/// Per-head scaled dot-product attention, heads concatenated and then
/// output-projected.
pub fn multi_head_attention<'t>(
    q: Var<'t>,
    k: Var<'t>,
    v: Var<'t>,
    heads: usize,
    w: &AttentionWeights<'t>,
) -> Result<Var<'t>> {
    let d = q.cols();
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(Error::Config(format!("width {d} is not divisible by {heads} heads")));
    }
    if k.cols() != d || v.cols() != d {
        return Err(Error::shape("multi_head_attention", &q.shape(), &k.shape()));
    }
    let qp = apply_linear(q, w.wq, w.bq)?;
    let kp = apply_linear(k, w.wk, w.bk)?;
    let vp = apply_linear(v, w.wv, w.bv)?;
    let dh = d / heads;
    let out = if heads == 1 {
        scaled_dot_attention(qp, kp, vp)?
    } else {
        let per_head = (0..heads)
            .map(|h| {
                scaled_dot_attention(
                    qp.slice_cols(h * dh, dh)?,
                    kp.slice_cols(h * dh, dh)?,
                    vp.slice_cols(h * dh, dh)?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Var::concat_cols(&per_head)?
    };
    apply_linear(out, w.wo, w.bo)
}
