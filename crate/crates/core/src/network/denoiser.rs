use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{positional_table, sinusoid, uniform, Block, Linear, Norm};
use crate::config::{AudioTokens, ModelConfig, Variant};
use crate::error::{Error, Result};
use crate::numcore::{scaled_dot_attention, Bound, ParamId, ParamStore, Tensor, Var};

/// Everything the denoiser is conditioned on besides the noisy motion.
#[derive(Clone, Copy, Debug)]
pub struct ConditioningBundle<'a> {
    /// `M x W` seed frames, full width.
    pub seed: &'a Tensor,
    /// `N x D_a` audio features.
    pub audio: &'a Tensor,
    pub speaker: usize,
    pub t: usize,
}

/// Turns the conditioning bundle into prefix tokens for one backbone.
#[derive(Clone, Debug)]
struct Conditioning {
    seed_cols: (usize, usize),
    seed: Linear,
    audio: Linear,
    speaker: ParamId,
    time: Linear,
}

struct Embedded<'t> {
    prefix: Var<'t>,
    audio_frames: Var<'t>,
}

impl Conditioning {
    fn embed<'t>(&self, p: &Bound<'t>, cond: &ConditioningBundle, d: usize) -> Result<Embedded<'t>> {
        let tape = p.tape();
        let seed = tape.constant(cond.seed.slice_cols(self.seed_cols.0, self.seed_cols.1));
        let seed_tokens = self.seed.forward(p, seed)?;
        let audio_frames = self.audio.forward(p, tape.constant(cond.audio.clone()))?;
        let pooled = audio_frames.mean_rows();
        let t_code = tape.constant(Tensor::matrix(1, d, sinusoid(cond.t as f64, d))?);
        let fused = p
            .var(self.speaker)
            .gather_row(cond.speaker)?
            .add(self.time.forward(p, t_code)?)?;
        Ok(Embedded {
            prefix: Var::concat_rows(&[seed_tokens, pooled, fused])?,
            audio_frames,
        })
    }
}

/// Shared transformer: encoder stack, norm, decoder stack, norm, output MLP.
#[derive(Clone, Debug)]
struct Backbone {
    cond: Conditioning,
    encoder: Vec<Block>,
    mid: Norm,
    decoder: Vec<Block>,
    out_norm: Norm,
    head1: Linear,
    head2: Linear,
}

/// Cross-modal adapter: parameter-free attention from `K` learned latent
/// tokens onto the other modality, attention from this modality onto the
/// latent summary, then a zero-initialised bottleneck MLP.
#[derive(Clone, Debug)]
struct Adapter {
    latent: ParamId,
    down: Linear,
    hidden: Linear,
    up: Linear,
}

impl Adapter {
    fn new(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (d, db) = (cfg.d, cfg.bottleneck);
        Ok(Self {
            latent: uniform(store, format!("{name}.latent"), cfg.latent_tokens, d, 1.0, rng)?,
            down: Linear::new(store, &format!("{name}.down"), d, db, rng)?,
            hidden: Linear::new(store, &format!("{name}.hidden"), db, db, rng)?,
            up: Linear::zeroed(store, &format!("{name}.up"), db, d)?,
        })
    }

    fn forward<'t>(&self, p: &Bound<'t>, own: Var<'t>, other: Var<'t>) -> Result<Var<'t>> {
        let summary = scaled_dot_attention(p.var(self.latent), other, other)?;
        let fused = scaled_dot_attention(own, summary, summary)?;
        let h = self.hidden.forward(p, self.down.forward(p, fused)?.gelu())?;
        self.up.forward(p, h)
    }
}

/// One modality stream (or the whole motion for the combined variant).
#[derive(Clone, Debug)]
struct Branch {
    name: &'static str,
    offset: usize,
    width: usize,
    backbone: usize,
    in1: Linear,
    in2: Linear,
    out: Linear,
    /// Per block (encoder then decoder): attention-side and feed-forward-side adapter.
    adapters: Vec<[Adapter; 2]>,
}

/// Denoising network for all four variants. Built together with its
/// [`ParamStore`]; parameters are looked up by handle at forward time.
#[derive(Clone, Debug)]
pub struct Denoiser {
    cfg: ModelConfig,
    backbones: Vec<Backbone>,
    branches: Vec<Branch>,
    positions: Tensor,
}

impl Denoiser {
    /// Builds the network and draws its initial parameters from `cfg.init_seed`.
    pub fn new(cfg: &ModelConfig) -> Result<(Self, ParamStore)> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let mut store = ParamStore::new();
        let layout = cfg.layout;
        let streams: Vec<(&'static str, usize, usize)> = match cfg.variant {
            Variant::Combined => vec![("motion", 0, layout.width())],
            _ => vec![
                ("body", 0, layout.body_width()),
                ("face", layout.body_width(), layout.face_width()),
            ],
        };
        let n_backbones = match cfg.variant {
            Variant::Separate | Variant::Split => 2,
            Variant::JointAdapters | Variant::Combined => 1,
        };

        let mut backbones = Vec::with_capacity(n_backbones);
        for (b, &(_, offset, width)) in streams.iter().take(n_backbones).enumerate() {
            let seed_cols = if n_backbones == 1 {
                (0, layout.width())
            } else {
                (offset, width)
            };
            backbones.push(build_backbone(
                &mut store,
                &format!("net{b}"),
                cfg,
                seed_cols,
                &mut rng,
            )?);
        }

        let mut branches = Vec::with_capacity(streams.len());
        for (i, (name, offset, width)) in streams.into_iter().enumerate() {
            let d = cfg.d;
            let in1 = Linear::new(&mut store, &format!("{name}.in1"), width, d, &mut rng)?;
            let in2 = Linear::new(&mut store, &format!("{name}.in2"), d, d, &mut rng)?;
            let out = Linear::new(&mut store, &format!("{name}.out"), d, width, &mut rng)?;
            let mut adapters = Vec::new();
            if cfg.variant.has_adapters() {
                for k in 0..cfg.blocks() {
                    adapters.push([
                        Adapter::new(&mut store, &format!("{name}.adapter{k}.attn"), cfg, &mut rng)?,
                        Adapter::new(&mut store, &format!("{name}.adapter{k}.ff"), cfg, &mut rng)?,
                    ]);
                }
            }
            branches.push(Branch {
                name,
                offset,
                width,
                backbone: if n_backbones == 1 { 0 } else { i },
                in1,
                in2,
                out,
                adapters,
            });
        }

        let positions = positional_table(cfg.seed_frames + 2 + cfg.clip_frames, cfg.d);
        Ok((
            Self {
                cfg: cfg.clone(),
                backbones,
                branches,
                positions,
            },
            store,
        ))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Names of the modality streams in output column order.
    pub fn branch_names(&self) -> Vec<&'static str> {
        self.branches.iter().map(|b| b.name).collect()
    }

    pub fn backbone_count(&self) -> usize {
        self.backbones.len()
    }

    /// Predicts clean motion (`N x W`) from noisy motion `x_t`.
    pub fn forward<'t>(&self, p: &Bound<'t>, x_t: Var<'t>, cond: &ConditioningBundle) -> Result<Var<'t>> {
        self.run(p, x_t, cond, true)
    }

    /// Same as [`Denoiser::forward`] with every adapter branch skipped.
    pub fn forward_backbone_only<'t>(&self, p: &Bound<'t>, x_t: Var<'t>, cond: &ConditioningBundle) -> Result<Var<'t>> {
        self.run(p, x_t, cond, false)
    }

    fn check_inputs(&self, x_t: &[usize], cond: &ConditioningBundle) -> Result<()> {
        let c = &self.cfg;
        let w = c.layout.width();
        if x_t != [c.clip_frames, w] {
            return Err(Error::shape("denoiser input", x_t, &[c.clip_frames, w]));
        }
        if cond.seed.shape() != [c.seed_frames, w] {
            return Err(Error::shape("seed frames", cond.seed.shape(), &[c.seed_frames, w]));
        }
        if cond.audio.shape() != [c.clip_frames, c.audio_dim] {
            return Err(Error::shape(
                "audio features",
                cond.audio.shape(),
                &[c.clip_frames, c.audio_dim],
            ));
        }
        if cond.speaker >= c.speakers {
            return Err(Error::Config(format!(
                "speaker {} out of range {}",
                cond.speaker, c.speakers
            )));
        }
        if cond.t == 0 || cond.t > c.steps {
            return Err(Error::Config(format!("timestep {} outside 1..={}", cond.t, c.steps)));
        }
        Ok(())
    }

    fn run<'t>(&self, p: &Bound<'t>, x_t: Var<'t>, cond: &ConditioningBundle, adapters: bool) -> Result<Var<'t>> {
        self.check_inputs(&x_t.shape(), cond)?;
        let cfg = &self.cfg;
        let tape = x_t.tape();
        let embedded = self
            .backbones
            .iter()
            .map(|bb| bb.cond.embed(p, cond, cfg.d))
            .collect::<Result<Vec<_>>>()?;
        let positions = tape.constant(self.positions.clone());

        let mut states = Vec::with_capacity(self.branches.len());
        for br in &self.branches {
            let e = &embedded[br.backbone];
            let x = x_t.slice_cols(br.offset, br.width)?;
            let mut tok = br.in2.forward(p, br.in1.forward(p, x)?.gelu())?;
            if cfg.audio_tokens == AudioTokens::PerFrame {
                tok = tok.add(e.audio_frames)?;
            }
            states.push(Var::concat_rows(&[e.prefix, tok])?.add(positions)?);
        }

        for i in 0..cfg.enc_layers {
            states = self.block_step(p, &states, |bb| &bb.encoder[i], i, adapters)?;
        }
        states = self.norm_step(p, &states, |bb| &bb.mid)?;
        for i in 0..cfg.dec_layers {
            states = self.block_step(p, &states, |bb| &bb.decoder[i], cfg.enc_layers + i, adapters)?;
        }
        states = self.norm_step(p, &states, |bb| &bb.out_norm)?;

        let prefix = cfg.seed_frames + 2;
        let mut outs = Vec::with_capacity(self.branches.len());
        for (br, h) in self.branches.iter().zip(states) {
            let bb = &self.backbones[br.backbone];
            let h = bb.head2.forward(p, bb.head1.forward(p, h)?.gelu())?;
            outs.push(br.out.forward(p, h.slice_rows(prefix, cfg.clip_frames)?)?);
        }
        if outs.len() == 1 {
            Ok(outs[0])
        } else {
            Var::concat_cols(&outs)
        }
    }

    fn norm_step<'t>(&self, p: &Bound<'t>, xs: &[Var<'t>], pick: impl Fn(&Backbone) -> &Norm) -> Result<Vec<Var<'t>>> {
        self.branches
            .iter()
            .zip(xs)
            .map(|(br, x)| pick(&self.backbones[br.backbone]).forward(p, *x))
            .collect()
    }

    /// Advances every stream through one block. Adapters read the other
    /// stream at the same depth, so all streams move in lockstep.
    fn block_step<'t>(
        &self,
        p: &Bound<'t>,
        xs: &[Var<'t>],
        pick: impl Fn(&Backbone) -> &Block,
        depth: usize,
        use_adapters: bool,
    ) -> Result<Vec<Var<'t>>> {
        let blocks: Vec<&Block> = self
            .branches
            .iter()
            .map(|br| pick(&self.backbones[br.backbone]))
            .collect();
        let other = |i: usize| (i + 1) % self.branches.len();
        let adapter = |i: usize, slot: usize| -> Option<&Adapter> {
            if use_adapters && self.branches.len() == 2 {
                self.branches[i].adapters.get(depth).map(|a| &a[slot])
            } else {
                None
            }
        };

        let n1 = blocks
            .iter()
            .zip(xs)
            .map(|(b, x)| b.ln1.forward(p, *x))
            .collect::<Result<Vec<_>>>()?;
        let mut hs = Vec::with_capacity(xs.len());
        for i in 0..xs.len() {
            let mut a = blocks[i].attn.forward(p, n1[i], self.cfg.heads)?;
            if let Some(ad) = adapter(i, 0) {
                a = a.add(ad.forward(p, n1[i], n1[other(i)])?)?;
            }
            hs.push(xs[i].add(a)?);
        }

        let n2 = blocks
            .iter()
            .zip(&hs)
            .map(|(b, h)| b.ln2.forward(p, *h))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(xs.len());
        for i in 0..xs.len() {
            let mut f = blocks[i].ff.forward(p, n2[i])?;
            if let Some(ad) = adapter(i, 1) {
                f = f.add(ad.forward(p, n2[i], n2[other(i)])?)?;
            }
            out.push(hs[i].add(f)?);
        }
        Ok(out)
    }
}

fn build_backbone(
    store: &mut ParamStore,
    name: &str,
    cfg: &ModelConfig,
    seed_cols: (usize, usize),
    rng: &mut ChaCha8Rng,
) -> Result<Backbone> {
    let d = cfg.d;
    let cond = Conditioning {
        seed_cols,
        seed: Linear::new(store, &format!("{name}.cond.seed"), seed_cols.1, d, rng)?,
        audio: Linear::new(store, &format!("{name}.cond.audio"), cfg.audio_dim, d, rng)?,
        speaker: uniform(store, format!("{name}.cond.speaker"), cfg.speakers, d, 1.0, rng)?,
        time: Linear::new(store, &format!("{name}.cond.time"), d, d, rng)?,
    };
    let encoder = (0..cfg.enc_layers)
        .map(|i| Block::new(store, &format!("{name}.enc{i}"), d, cfg.ff, rng))
        .collect::<Result<Vec<_>>>()?;
    let mid = Norm::new(store, &format!("{name}.enc_norm"), d)?;
    let decoder = (0..cfg.dec_layers)
        .map(|i| Block::new(store, &format!("{name}.dec{i}"), d, cfg.ff, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Backbone {
        cond,
        encoder,
        mid,
        decoder,
        out_norm: Norm::new(store, &format!("{name}.dec_norm"), d)?,
        head1: Linear::new(store, &format!("{name}.head1"), d, d, rng)?,
        head2: Linear::new(store, &format!("{name}.head2"), d, d, rng)?,
    })
}

/// Total trainable scalars of the network described by `cfg`.
pub fn count_params(cfg: &ModelConfig) -> Result<usize> {
    Ok(Denoiser::new(cfg)?.1.count())
}

/// Scalars whose names mark them as adapter parameters.
pub fn adapter_param_count(store: &ParamStore) -> usize {
    store
        .iter()
        .filter(|(n, _)| n.contains(".adapter"))
        .map(|(_, t)| t.len())
        .sum()
}
