//! Clip feature extractor for the Fréchet metrics.
//!
//! A clip is cut into overlapping windows of `window` frames; each window is
//! normalized per channel, flattened and passed through a two-layer MLP
//! encoder. The clip feature is the mean of its window codes.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::config::parse_pairs;
use crate::data::MotionLayout;
use crate::error::{Error, Result};
use crate::numcore::{apply_linear, Adam, AdamConfig, Bound, Checkpoint, ParamId, ParamStore, Tape, Tensor, Var};

/// Which part of the motion an autoencoder sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Full body + face motion.
    Holistic,
    /// Jaw and expressions only.
    Face,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Holistic => "holistic",
            Scope::Face => "face",
        }
    }

    pub fn width(self, layout: MotionLayout) -> usize {
        match self {
            Scope::Holistic => layout.width(),
            Scope::Face => layout.face_width(),
        }
    }

    /// The scope's columns of a full motion clip.
    pub fn select(self, layout: MotionLayout, motion: &Tensor) -> Result<Tensor> {
        if motion.cols() != layout.width() {
            return Err(Error::shape("scope", motion.shape(), &[motion.rows(), layout.width()]));
        }
        Ok(match self {
            Scope::Holistic => motion.clone(),
            Scope::Face => motion.slice_cols(layout.body_width(), layout.face_width()),
        })
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "holistic" => Ok(Scope::Holistic),
            "face" => Ok(Scope::Face),
            _ => Err(Error::Config(format!(
                "unknown autoencoder scope {s:?} (expected holistic or face)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderConfig {
    pub window: usize,
    pub hidden: usize,
    pub feature_dim: usize,
    pub max_steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Held-out reconstruction MSE must fall below this fraction of the
    /// held-out data variance.
    pub threshold: f64,
    pub check_every: usize,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            window: 8,
            hidden: 128,
            feature_dim: 32,
            max_steps: 3000,
            batch_size: 64,
            lr: 1e-3,
            threshold: 0.1,
            check_every: 250,
            seed: 0,
        }
    }
}

pub const MIN_TRAIN_CLIPS: usize = 100;

/// Start frames of the windows over a clip: stride `window / 2`, the last one
/// aligned to the clip end.
pub fn window_starts(frames: usize, window: usize) -> Vec<usize> {
    if frames < window {
        return Vec::new();
    }
    let stride = (window / 2).max(1);
    let mut starts: Vec<usize> = (0..).map(|i| i * stride).take_while(|s| s + window <= frames).collect();
    if starts.last().is_none_or(|s| s + window < frames) {
        starts.push(frames - window);
    }
    starts
}

#[derive(Clone, Debug)]
pub struct FeatureAutoencoder {
    scope: Scope,
    layout: MotionLayout,
    window: usize,
    hidden: usize,
    feature_dim: usize,
    params: ParamStore,
    enc1: (ParamId, ParamId),
    enc2: (ParamId, ParamId),
    dec1: (ParamId, ParamId),
    dec2: (ParamId, ParamId),
    mean: ParamId,
    std: ParamId,
    /// Held-out relative reconstruction error at freeze time.
    pub val_relative_mse: f64,
    pub steps: usize,
}

fn linear(
    store: &mut ParamStore,
    name: &str,
    d_in: usize,
    d_out: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(ParamId, ParamId)> {
    Ok((
        store.insert_uniform(format!("{name}.w"), d_in, d_out, rng)?,
        store.insert(format!("{name}.b"), Tensor::zeros(&[d_out]))?,
    ))
}

impl FeatureAutoencoder {
    fn build(
        scope: Scope,
        layout: MotionLayout,
        cfg: &AutoencoderConfig,
        mut params: ParamStore,
        fresh: bool,
    ) -> Result<Self> {
        let width = scope.width(layout);
        let input = cfg.window * width;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let ids = |p: &ParamStore, name: &str| -> Result<(ParamId, ParamId)> {
            let get = |n: String| {
                p.id_of(&n)
                    .ok_or_else(|| Error::Format(format!("autoencoder checkpoint lacks {n}")))
            };
            Ok((get(format!("{name}.w"))?, get(format!("{name}.b"))?))
        };
        let (enc1, enc2, dec1, dec2, mean, std) = if fresh {
            (
                linear(&mut params, "enc1", input, cfg.hidden, &mut rng)?,
                linear(&mut params, "enc2", cfg.hidden, cfg.feature_dim, &mut rng)?,
                linear(&mut params, "dec1", cfg.feature_dim, cfg.hidden, &mut rng)?,
                linear(&mut params, "dec2", cfg.hidden, input, &mut rng)?,
                params.insert("norm.mean", Tensor::zeros(&[width]))?,
                params.insert("norm.std", Tensor::filled(&[width], 1.0))?,
            )
        } else {
            let get = |n: &str| {
                params
                    .id_of(n)
                    .ok_or_else(|| Error::Format(format!("autoencoder checkpoint lacks {n}")))
            };
            (
                ids(&params, "enc1")?,
                ids(&params, "enc2")?,
                ids(&params, "dec1")?,
                ids(&params, "dec2")?,
                get("norm.mean")?,
                get("norm.std")?,
            )
        };
        let want = [
            (enc1.0, vec![input, cfg.hidden]),
            (enc2.0, vec![cfg.hidden, cfg.feature_dim]),
            (dec1.0, vec![cfg.feature_dim, cfg.hidden]),
            (dec2.0, vec![cfg.hidden, input]),
            (mean, vec![width]),
        ];
        for (id, shape) in want {
            if params.get(id).shape() != shape.as_slice() {
                return Err(Error::shape("autoencoder parameter", params.get(id).shape(), &shape));
            }
        }
        Ok(Self {
            scope,
            layout,
            window: cfg.window,
            hidden: cfg.hidden,
            feature_dim: cfg.feature_dim,
            params,
            enc1,
            enc2,
            dec1,
            dec2,
            mean,
            std,
            val_relative_mse: f64::NAN,
            steps: 0,
        })
    }

    pub fn new(scope: Scope, layout: MotionLayout, cfg: &AutoencoderConfig) -> Result<Self> {
        if cfg.window == 0 || cfg.hidden == 0 || cfg.feature_dim == 0 {
            return Err(Error::Config("autoencoder sizes must be positive".into()));
        }
        Self::build(scope, layout, cfg, ParamStore::new(), true)
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Width of one input frame.
    pub fn input_width(&self) -> usize {
        self.scope.width(self.layout)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Normalized, flattened windows of a full-width motion clip, one per row.
    fn windows(&self, motion: &Tensor) -> Result<Tensor> {
        let x = self.scope.select(self.layout, motion)?;
        let starts = window_starts(x.rows(), self.window);
        if starts.is_empty() {
            return Err(Error::Data(format!(
                "clip has {} frames, the autoencoder window is {}",
                x.rows(),
                self.window
            )));
        }
        let (mean, std) = (self.params.get(self.mean).data(), self.params.get(self.std).data());
        let w = x.cols();
        let mut data = Vec::with_capacity(starts.len() * self.window * w);
        for s in &starts {
            for f in *s..s + self.window {
                data.extend(x.row(f).iter().enumerate().map(|(c, v)| (v - mean[c]) / std[c]));
            }
        }
        Tensor::matrix(starts.len(), self.window * w, data)
    }

    fn encode_var<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let h = apply_linear(x, p.var(self.enc1.0), p.var(self.enc1.1))?.gelu();
        apply_linear(h, p.var(self.enc2.0), p.var(self.enc2.1))
    }

    fn decode_var<'t>(&self, p: &Bound<'t>, z: Var<'t>) -> Result<Var<'t>> {
        let h = apply_linear(z, p.var(self.dec1.0), p.var(self.dec1.1))?.gelu();
        apply_linear(h, p.var(self.dec2.0), p.var(self.dec2.1))
    }

    /// Clip feature: mean code over the clip's windows.
    pub fn encode(&self, motion: &Tensor) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let p = self.params.bind_frozen(&tape);
        let z = self.encode_var(&p, tape.constant(self.windows(motion)?))?;
        let z = z.mean_rows().value();
        Ok(z.data().to_vec())
    }

    pub fn encode_all(&self, clips: &[Tensor]) -> Result<Vec<Vec<f64>>> {
        clips.iter().map(|c| self.encode(c)).collect()
    }

    /// `(mse, variance)` of the reconstruction of normalized windows.
    fn reconstruction(&self, windows: &Tensor) -> Result<(f64, f64)> {
        let tape = Tape::new();
        let p = self.params.bind_frozen(&tape);
        let x = tape.constant(windows.clone());
        let r = self.decode_var(&p, self.encode_var(&p, x)?)?;
        let mse = r.sub(x)?.square().mean().value().item();
        let n = windows.rows() as f64;
        let mut var = 0.0;
        for c in 0..windows.cols() {
            let m = (0..windows.rows()).map(|r| windows.at(r, c)).sum::<f64>() / n;
            var += (0..windows.rows()).map(|r| (windows.at(r, c) - m).powi(2)).sum::<f64>() / n;
        }
        Ok((mse, var / windows.cols() as f64))
    }

    /// Held-out reconstruction MSE divided by the held-out data variance.
    pub fn relative_error(&self, clips: &[Tensor]) -> Result<f64> {
        let (mse, var) = self.reconstruction(&self.stack_windows(clips)?)?;
        Ok(if var > 0.0 { mse / var } else { mse })
    }

    fn stack_windows(&self, clips: &[Tensor]) -> Result<Tensor> {
        let parts = clips.iter().map(|c| self.windows(c)).collect::<Result<Vec<_>>>()?;
        Tensor::concat_rows(&parts.iter().collect::<Vec<_>>())
    }

    fn fit_normalization(&mut self, clips: &[Tensor]) -> Result<()> {
        let xs = clips
            .iter()
            .map(|c| self.scope.select(self.layout, c))
            .collect::<Result<Vec<_>>>()?;
        let w = self.input_width();
        let frames: usize = xs.iter().map(Tensor::rows).sum();
        let mut mean = vec![0.0; w];
        for x in &xs {
            for f in 0..x.rows() {
                mean.iter_mut().zip(x.row(f)).for_each(|(m, v)| *m += v);
            }
        }
        mean.iter_mut().for_each(|m| *m /= frames as f64);
        let mut var = vec![0.0; w];
        for x in &xs {
            for f in 0..x.rows() {
                var.iter_mut()
                    .zip(x.row(f))
                    .zip(&mean)
                    .for_each(|((s, v), m)| *s += (v - m) * (v - m));
            }
        }
        // constant channels keep unit scale
        let std: Vec<f64> = var
            .iter()
            .map(|s| (s / frames as f64).sqrt())
            .map(|s| if s > 1e-8 { s } else { 1.0 })
            .collect();
        *self.params.get_mut(self.mean) = Tensor::new(&[w], mean)?;
        *self.params.get_mut(self.std) = Tensor::new(&[w], std)?;
        Ok(())
    }

    /// Seeded training on `train` clips until the relative error on `val`
    /// drops below the threshold. Fails with [`Error::Unavailable`] when the
    /// step budget runs out first.
    pub fn train(
        scope: Scope,
        layout: MotionLayout,
        train: &[Tensor],
        val: &[Tensor],
        cfg: &AutoencoderConfig,
    ) -> Result<Self> {
        if train.len() < MIN_TRAIN_CLIPS {
            return Err(Error::Data(format!(
                "autoencoder training needs at least {MIN_TRAIN_CLIPS} clips, got {}",
                train.len()
            )));
        }
        if val.is_empty() {
            return Err(Error::Data("autoencoder training needs held-out clips".into()));
        }
        let mut ae = Self::new(scope, layout, cfg)?;
        ae.fit_normalization(train)?;
        let windows = ae.stack_windows(train)?;
        let val_windows = ae.stack_windows(val)?;
        let trainable: Vec<ParamId> = [ae.enc1, ae.enc2, ae.dec1, ae.dec2]
            .iter()
            .flat_map(|(w, b)| [*w, *b])
            .collect();
        let mut opt = Adam::new(
            AdamConfig {
                lr: cfg.lr,
                ..AdamConfig::default()
            },
            &ae.params,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xAE);
        let mut order: Vec<usize> = (0..windows.rows()).collect();
        let mut cursor = order.len();
        let check = cfg.check_every.max(1);

        for step in 1..=cfg.max_steps {
            let mut rows = Vec::with_capacity(cfg.batch_size);
            while rows.len() < cfg.batch_size.min(order.len()) {
                if cursor == order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                rows.push(order[cursor]);
                cursor += 1;
            }
            let batch = Tensor::from_rows(&rows.iter().map(|&r| windows.row(r).to_vec()).collect::<Vec<_>>())?;
            let tape = Tape::new();
            let p = ae.params.bind(&tape);
            let x = tape.constant(batch);
            let loss = ae.decode_var(&p, ae.encode_var(&p, x)?)?.sub(x)?.square().mean();
            let grads = tape.backward(loss)?;
            let mut g = p.collect(&grads);
            // normalization statistics stay fixed
            for (i, gi) in g.iter_mut().enumerate() {
                if !trainable.iter().any(|id| id.index() == i) {
                    *gi = Tensor::zeros(gi.shape());
                }
            }
            drop(p);
            opt.step(&mut ae.params, &g)?;
            ae.steps = step;

            if step % check == 0 || step == cfg.max_steps {
                let (mse, var) = ae.reconstruction(&val_windows)?;
                ae.val_relative_mse = mse / var.max(f64::MIN_POSITIVE);
                log::debug!(
                    "{} autoencoder step {step}: relative error {:.4}",
                    scope,
                    ae.val_relative_mse
                );
                if ae.val_relative_mse < cfg.threshold {
                    return Ok(ae);
                }
            }
        }
        Err(Error::Unavailable(format!(
            "{scope} autoencoder reached relative error {:.4} after {} steps, threshold {}",
            ae.val_relative_mse, cfg.max_steps, cfg.threshold
        )))
    }

    fn config_text(&self) -> String {
        format!(
            "kind=feature_autoencoder\nscope={}\nJ={}\nE={}\nwindow={}\nhidden={}\nd_f={}\nval_relative_mse={:?}\n",
            self.scope,
            self.layout.joints,
            self.layout.expressions,
            self.window,
            self.hidden,
            self.feature_dim,
            self.val_relative_mse
        )
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config_text(),
            step: self.steps as u64,
            params: self.params.clone(),
            optimizer: None,
        }
    }

    /// Rebuilds a frozen autoencoder; `expect` guards against loading the
    /// wrong scope.
    pub fn from_checkpoint(ck: Checkpoint, expect: Option<Scope>) -> Result<Self> {
        let kv = parse_pairs(&ck.config)?;
        let get = |k: &str| {
            kv.get(k)
                .ok_or_else(|| Error::Format(format!("autoencoder checkpoint lacks {k}")))
        };
        if get("kind")? != "feature_autoencoder" {
            return Err(Error::Format("checkpoint is not a feature autoencoder".into()));
        }
        let scope: Scope = get("scope")?.parse()?;
        if let Some(want) = expect {
            if want != scope {
                return Err(Error::Config(format!(
                    "expected a {want} autoencoder, checkpoint holds {scope}"
                )));
            }
        }
        let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| Error::Format(format!("bad {k}"))) };
        let layout = MotionLayout {
            joints: num("J")?,
            expressions: num("E")?,
        };
        let cfg = AutoencoderConfig {
            window: num("window")?,
            hidden: num("hidden")?,
            feature_dim: num("d_f")?,
            ..AutoencoderConfig::default()
        };
        let mut ae = Self::build(scope, layout, &cfg, ck.params, false)?;
        ae.val_relative_mse = get("val_relative_mse")?.parse().unwrap_or(f64::NAN);
        ae.steps = ck.step as usize;
        Ok(ae)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>, expect: Option<Scope>) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?, expect)
    }

    /// SHA-256 of the serialized checkpoint.
    pub fn hash(&self) -> String {
        let mut buf = Vec::new();
        self.checkpoint().write_to(&mut buf).expect("in-memory write");
        hex::encode(Sha256::digest(&buf))
    }
}
