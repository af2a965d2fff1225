use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numcore::{apply_linear, multi_head_attention, AttentionWeights, Bound, ParamId, ParamStore, Tensor, Var};

pub(crate) const LN_EPS: f64 = 1e-5;

pub(crate) fn uniform(
    store: &mut ParamStore,
    name: String,
    rows: usize,
    cols: usize,
    bound: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ParamId> {
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    store.insert(name, Tensor::matrix(rows, cols, data)?)
}

#[derive(Clone, Debug)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            w: store.insert_uniform(format!("{name}.w"), d_in, d_out, rng)?,
            b: store.insert(format!("{name}.b"), Tensor::zeros(&[d_out]))?,
        })
    }

    pub fn zeroed(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize) -> Result<Self> {
        Ok(Self {
            w: store.insert(format!("{name}.w"), Tensor::zeros(&[d_in, d_out]))?,
            b: store.insert(format!("{name}.b"), Tensor::zeros(&[d_out]))?,
        })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        apply_linear(x, p.var(self.w), p.var(self.b))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Norm {
    gain: ParamId,
    bias: ParamId,
}

impl Norm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Result<Self> {
        Ok(Self {
            gain: store.insert(format!("{name}.g"), Tensor::filled(&[d], 1.0))?,
            bias: store.insert(format!("{name}.b"), Tensor::zeros(&[d]))?,
        })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        x.layer_norm(p.var(self.gain), p.var(self.bias), LN_EPS)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct SelfAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

impl SelfAttention {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            q: Linear::new(store, &format!("{name}.q"), d, d, rng)?,
            k: Linear::new(store, &format!("{name}.k"), d, d, rng)?,
            v: Linear::new(store, &format!("{name}.v"), d, d, rng)?,
            o: Linear::new(store, &format!("{name}.o"), d, d, rng)?,
        })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>, heads: usize) -> Result<Var<'t>> {
        let w = AttentionWeights {
            wq: p.var(self.q.w),
            bq: p.var(self.q.b),
            wk: p.var(self.k.w),
            bk: p.var(self.k.b),
            wv: p.var(self.v.w),
            bv: p.var(self.v.b),
            wo: p.var(self.o.w),
            bo: p.var(self.o.b),
        };
        multi_head_attention(x, x, x, heads, &w)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, ff: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            up: Linear::new(store, &format!("{name}.up"), d, ff, rng)?,
            down: Linear::new(store, &format!("{name}.down"), ff, d, rng)?,
        })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        self.down.forward(p, self.up.forward(p, x)?.gelu())
    }
}

/// Pre-norm transformer block.
#[derive(Clone, Debug)]
pub(crate) struct Block {
    pub ln1: Norm,
    pub attn: SelfAttention,
    pub ln2: Norm,
    pub ff: FeedForward,
}

impl Block {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, ff: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            ln1: Norm::new(store, &format!("{name}.ln1"), d)?,
            attn: SelfAttention::new(store, &format!("{name}.attn"), d, rng)?,
            ln2: Norm::new(store, &format!("{name}.ln2"), d)?,
            ff: FeedForward::new(store, &format!("{name}.ff"), d, ff, rng)?,
        })
    }
}

/// Sinusoidal code of a scalar position: even channels `sin`, odd `cos`.
pub fn sinusoid(pos: f64, d: usize) -> Vec<f64> {
    (0..d)
        .map(|j| {
            let i = (j / 2) as f64;
            let angle = pos / 10000f64.powf(2.0 * i / d as f64);
            if j % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// `len x d` table of [`sinusoid`] codes for positions `0..len`.
pub fn positional_table(len: usize, d: usize) -> Tensor {
    let data = (0..len).flat_map(|p| sinusoid(p as f64, d)).collect();
    Tensor::new(&[len, d], data).expect("positive extents")
}
