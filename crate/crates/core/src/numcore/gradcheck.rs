//! Central-difference verification of tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops::{multi_head_attention, AttentionWeights};
use super::params::{Bound, ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Gradients smaller than this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }

    pub fn max_rel_err(&self) -> f64 {
        self.worst().map_or(0.0, |w| w.max_rel_err)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn eval<F>(f: &F, params: &ParamStore) -> Result<f64>
where
    F: for<'t> Fn(&Bound<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let bound = params.bind_frozen(&tape);
    let v = f(&bound)?.value().item();
    if !v.is_finite() {
        return Err(Error::Numerical(format!("objective evaluated to {v}")));
    }
    Ok(v)
}

/// Compares the tape gradient of `f` with central differences of step `h`
/// for every scalar in `params`.
pub fn grad_check<F>(f: F, params: &ParamStore, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&Bound<'t>) -> Result<Var<'t>>,
{
    let analytic = {
        let tape = Tape::new();
        let bound = params.bind(&tape);
        let out = f(&bound)?;
        let value = out.value().item();
        if !value.is_finite() {
            return Err(Error::Numerical(format!("objective evaluated to {value}")));
        }
        let grads = tape.backward(out)?;
        bound.collect(&grads)
    };

    let mut work = params.clone();
    let mut report = Vec::with_capacity(params.len());
    for (idx, (name, tensor)) in params.iter().enumerate() {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for i in 0..tensor.len() {
            let orig = tensor.data()[i];
            let id = super::params::ParamId(idx);
            work.get_mut(id).data_mut()[i] = orig + h;
            let up = eval(&f, &work)?;
            work.get_mut(id).data_mut()[i] = orig - h;
            let down = eval(&f, &work)?;
            work.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[idx].data()[i];
            max_rel = max_rel.max(relative_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
        }
        report.push(ParamCheck {
            name: name.to_string(),
            max_rel_err: max_rel,
            max_abs_err: max_abs,
        });
    }
    Ok(GradCheckReport {
        params: report,
        tolerance: tol,
    })
}

type Objective = Box<dyn for<'t> Fn(&Bound<'t>) -> Result<Var<'t>>>;

/// Gradient checks of each tape primitive on small random inputs, labelled
/// by operation.
pub fn op_grad_checks(h: f64, tol: f64, seed: u64) -> Result<Vec<(&'static str, GradCheckReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamStore::new();
    let mut rand = |p: &mut ParamStore, name: &str, shape: &[usize]| -> Result<ParamId> {
        let n = shape.iter().product();
        p.insert(
            name,
            Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?,
        )
    };
    let a = rand(&mut p, "a", &[3, 4])?;
    let b = rand(&mut p, "b", &[4, 2])?;
    let c = rand(&mut p, "c", &[3, 4])?;
    let w = rand(&mut p, "w", &[3, 2])?;
    let row = rand(&mut p, "row", &[4])?;
    let gain = p.insert("gain", Tensor::new(&[4], vec![1.2, 0.7, -0.4, 1.0])?)?;
    let mut attn = Vec::new();
    for n in ["wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"] {
        attn.push(rand(&mut p, n, if n.starts_with('w') { &[4, 4] } else { &[4] })?);
    }

    let checks: Vec<(&'static str, Objective)> = vec![
        (
            "matmul",
            Box::new(move |q| Ok(q.var(a).matmul(q.var(b))?.square().sum())),
        ),
        (
            "matmul_rhs_transposed",
            Box::new(move |q| Ok(q.var(a).matmul_t(q.var(c), false, true)?.square().sum())),
        ),
        (
            "matmul_lhs_transposed",
            Box::new(move |q| Ok(q.var(a).matmul_t(q.var(w), true, false)?.square().sum())),
        ),
        (
            "add_sub_mul",
            Box::new(move |q| q.var(a).add(q.var(c))?.mul(q.var(a).sub(q.var(c))?).map(|v| v.sum())),
        ),
        (
            "add_row",
            Box::new(move |q| Ok(q.var(a).add_row(q.var(row))?.square().sum())),
        ),
        ("gelu", Box::new(move |q| Ok(q.var(a).gelu().sum()))),
        ("abs", Box::new(move |q| Ok(q.var(a).scale(2.0).abs().mean()))),
        (
            "softmax",
            Box::new(move |q| q.var(a).softmax().mul(q.var(c)).map(|v| v.sum())),
        ),
        (
            "layer_norm",
            Box::new(move |q| {
                q.var(a)
                    .layer_norm(q.var(gain), q.var(row), 1e-5)?
                    .mul(q.var(c))
                    .map(|v| v.sum())
            }),
        ),
        (
            "slice_concat",
            Box::new(move |q| {
                let x = q.var(a);
                let y = Var::concat_cols(&[x.slice_cols(2, 2)?, x.slice_cols(0, 1)?])?;
                Ok(Var::concat_rows(&[y.slice_rows(1, 2)?, y])?.square().sum())
            }),
        ),
        (
            "mean_rows_gather",
            Box::new(move |q| q.var(a).mean_rows().mul(q.var(c).gather_row(1)?).map(|v| v.sum())),
        ),
        (
            "multi_head_attention",
            Box::new(move |q| {
                let v = |i: usize| q.var(attn[i]);
                let aw = AttentionWeights {
                    wq: v(0),
                    bq: v(1),
                    wk: v(2),
                    bk: v(3),
                    wv: v(4),
                    bv: v(5),
                    wo: v(6),
                    bo: v(7),
                };
                let x = q.var(a);
                multi_head_attention(x, q.var(c), q.var(c), 2, &aw)?
                    .mul(x)
                    .map(|v| v.sum())
            }),
        ),
    ];
    checks
        .into_iter()
        .map(|(name, f)| Ok((name, grad_check(|q| f(q), &p, h, tol)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_primitive_passes() {
        for (name, r) in op_grad_checks(DEFAULT_STEP, DEFAULT_TOLERANCE, 0).unwrap() {
            assert!(r.passed(), "{name}: {:?}", r.worst());
        }
    }

    #[test]
    fn square_at_three() {
        let mut p = ParamStore::new();
        let x = p.insert("x", Tensor::scalar(3.0)).unwrap();
        let r = grad_check(|b| Ok(b.var(x).square().sum()), &p, DEFAULT_STEP, DEFAULT_TOLERANCE).unwrap();
        assert!(r.passed());
        assert!(r.max_rel_err() < 1e-8, "{}", r.max_rel_err());
    }

    #[test]
    fn constant_objective() {
        let mut p = ParamStore::new();
        let x = p.insert("x", Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap()).unwrap();
        let r = grad_check(|b| Ok(b.var(x).scale(0.0).sum()), &p, DEFAULT_STEP, DEFAULT_TOLERANCE).unwrap();
        assert_eq!(r.max_rel_err(), 0.0);
        assert_eq!(r.params[0].max_abs_err, 0.0);
    }

    #[test]
    fn non_finite_objective_aborts() {
        let mut p = ParamStore::new();
        let x = p.insert("x", Tensor::scalar(f64::INFINITY)).unwrap();
        let r = grad_check(|b| Ok(b.var(x).sum()), &p, DEFAULT_STEP, DEFAULT_TOLERANCE);
        assert!(matches!(r, Err(Error::Numerical(_))));
    }

    #[test]
    fn zero_tolerance_fails() {
        let mut p = ParamStore::new();
        let x = p.insert("x", Tensor::scalar(0.7)).unwrap();
        let r = grad_check(|b| Ok(b.var(x).gelu().square().sum()), &p, DEFAULT_STEP, 0.0).unwrap();
        assert!(!r.passed());
        assert_eq!(r.worst().unwrap().name, "x");
    }
}
