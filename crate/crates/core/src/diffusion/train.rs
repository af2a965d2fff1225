use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::loss::{loss_rec_var, loss_vel_var};
use super::schedule::Schedule;
use crate::data::ClipSample;
use crate::error::{Error, Result};
use crate::network::{ConditioningBundle, Model};
use crate::numcore::{Adam, AdamConfig, Checkpoint, StepOutcome, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lambda_vel: f64,
    pub adam: AdamConfig,
    /// Drives batch selection, timesteps and noise.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 8,
            lambda_vel: 1.0,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// Losses of one optimizer step, averaged over the batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub rec: f64,
    pub vel: f64,
    pub total: f64,
    /// False when the loss or a gradient was non-finite and the update was skipped.
    pub applied: bool,
}

pub fn standard_normal(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(&[rows, cols], data).expect("positive extents")
}

/// One training item with its drawn timestep and noise.
pub struct NoisedItem<'a> {
    pub clip: &'a ClipSample,
    pub t: usize,
    pub eps: Tensor,
}

/// Builds the batch objective on `tape`; returns `(rec, vel, total)`.
fn batch_loss<'t>(
    model: &Model,
    p: &crate::numcore::Bound<'t>,
    schedule: &Schedule,
    items: &[NoisedItem],
    lambda_vel: f64,
) -> Result<(Var<'t>, Var<'t>, Var<'t>)> {
    let tape = p.tape();
    let mut rec: Option<Var<'t>> = None;
    let mut vel: Option<Var<'t>> = None;
    for item in items {
        let x0 = item.clip.motion.tensor();
        let x_t = schedule.q_sample(x0, item.t, &item.eps)?;
        let cond = ConditioningBundle {
            seed: &item.clip.seed,
            audio: item.clip.audio.tensor(),
            speaker: item.clip.speaker,
            t: item.t,
        };
        let x0_hat = model.denoiser.forward(p, tape.constant(x_t), &cond)?;
        let target = tape.constant(x0.clone());
        let r = loss_rec_var(target, x0_hat)?;
        let v = loss_vel_var(target, x0_hat)?;
        rec = Some(match rec {
            None => r,
            Some(acc) => acc.add(r)?,
        });
        vel = Some(match vel {
            None => v,
            Some(acc) => acc.add(v)?,
        });
    }
    let scale = 1.0 / items.len() as f64;
    let (rec, vel) = match (rec, vel) {
        (Some(r), Some(v)) => (r.scale(scale), v.scale(scale)),
        _ => return Err(Error::Data("empty training batch".into())),
    };
    let total = rec.add(vel.scale(lambda_vel))?;
    Ok((rec, vel, total))
}

/// One gradient step on `items`.
pub fn train_step(
    model: &mut Model,
    opt: &mut Adam,
    schedule: &Schedule,
    items: &[NoisedItem],
    lambda_vel: f64,
    step: u64,
) -> Result<LossRecord> {
    let (rec, vel, total, grads) = {
        let tape = Tape::new();
        let p = model.params.bind(&tape);
        let (rec, vel, total) = batch_loss(model, &p, schedule, items, lambda_vel)?;
        let values = (rec.value().item(), vel.value().item(), total.value().item());
        if !values.2.is_finite() {
            log::warn!("step {step}: non-finite loss {}, update skipped", values.2);
            return Ok(LossRecord {
                step,
                rec: values.0,
                vel: values.1,
                total: values.2,
                applied: false,
            });
        }
        let grads = p.collect(&tape.backward(total)?);
        (values.0, values.1, values.2, grads)
    };
    let outcome = opt.step(&mut model.params, &grads)?;
    if outcome == StepOutcome::Rejected {
        log::warn!("step {step}: non-finite gradient, update skipped");
    }
    Ok(LossRecord {
        step,
        rec,
        vel,
        total,
        applied: outcome == StepOutcome::Applied,
    })
}

/// Fixed clips, timesteps and noise for comparable loss measurements.
pub struct EvalBatch<'a> {
    items: Vec<NoisedItem<'a>>,
}

impl<'a> EvalBatch<'a> {
    pub fn new(clips: &'a [ClipSample], size: usize, steps: usize, seed: u64) -> Result<Self> {
        if clips.is_empty() || size == 0 {
            return Err(Error::Data("evaluation batch needs at least one clip".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let items = (0..size)
            .map(|i| {
                let clip = &clips[(i * clips.len()) / size];
                NoisedItem {
                    clip,
                    t: rng.gen_range(1..=steps),
                    eps: standard_normal(clip.frames(), clip.motion.tensor().cols(), &mut rng),
                }
            })
            .collect();
        Ok(Self { items })
    }

    /// `(rec, vel, total)` of `model` on this batch without touching parameters.
    pub fn loss(&self, model: &Model, schedule: &Schedule, lambda_vel: f64) -> Result<(f64, f64, f64)> {
        let tape = Tape::new();
        let p = model.params.bind_frozen(&tape);
        let (r, v, t) = batch_loss(model, &p, schedule, &self.items, lambda_vel)?;
        Ok((r.value().item(), v.value().item(), t.value().item()))
    }
}

/// Optimizer state plus a step counter. Each step's randomness is derived
/// from `(seed, step)`, so a run resumed from a checkpoint continues
/// bit-identically.
pub struct Trainer {
    pub model: Model,
    pub opt: Adam,
    pub schedule: Schedule,
    pub cfg: TrainConfig,
    pub step: u64,
    pub history: Vec<LossRecord>,
}

impl Trainer {
    pub fn new(model: Model, cfg: TrainConfig) -> Result<Self> {
        let m = model.config();
        let schedule = Schedule::linear(m.steps, m.beta_start, m.beta_end)?;
        let opt = Adam::new(cfg.adam, &model.params);
        Ok(Self {
            model,
            opt,
            schedule,
            cfg,
            step: 0,
            history: Vec::new(),
        })
    }

    pub fn resume(ckpt: &Checkpoint, cfg: TrainConfig) -> Result<Self> {
        let model = Model::from_checkpoint(ckpt)?;
        let mut t = Self::new(model, cfg)?;
        if let Some(opt) = &ckpt.optimizer {
            t.opt = opt.clone();
        }
        t.step = ckpt.step;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        self.model.checkpoint(self.step, Some(self.opt.clone()))
    }

    fn draw<'a>(&self, data: &'a [ClipSample]) -> Vec<NoisedItem<'a>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(self.step);
        let b = self.cfg.batch_size.min(data.len());
        let picks = sample(&mut rng, data.len(), b).into_vec();
        picks
            .into_iter()
            .map(|i| {
                let clip = &data[i];
                NoisedItem {
                    clip,
                    t: rng.gen_range(1..=self.schedule.steps()),
                    eps: standard_normal(clip.frames(), clip.motion.tensor().cols(), &mut rng),
                }
            })
            .collect()
    }

    pub fn step_once(&mut self, data: &[ClipSample]) -> Result<LossRecord> {
        if data.is_empty() {
            return Err(Error::Data("no training clips".into()));
        }
        let items = self.draw(data);
        let rec = {
            let (model, opt, schedule) = (&mut self.model, &mut self.opt, &self.schedule);
            train_step(model, opt, schedule, &items, self.cfg.lambda_vel, self.step)?
        };
        self.step += 1;
        self.history.push(rec);
        Ok(rec)
    }

    /// Runs until `self.step == until`, calling `on_step` after each step.
    pub fn run(&mut self, data: &[ClipSample], until: u64, mut on_step: impl FnMut(&LossRecord)) -> Result<()> {
        while self.step < until {
            let rec = self.step_once(data)?;
            on_step(&rec);
        }
        Ok(())
    }
}

pub fn write_loss_csv(w: &mut impl Write, records: &[LossRecord]) -> Result<()> {
    writeln!(w, "step,L_rec,L_vel,total")?;
    for r in records {
        writeln!(w, "{},{},{},{}", r.step, r.rec, r.vel, r.total)?;
    }
    Ok(())
}
