//! Generation over a clip set and computation of the whole metric battery.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::autoencoder::FeatureAutoencoder;
use super::beat::{beat_consistency, DEFAULT_SIGMA};
use super::diversity::{diversity, DEFAULT_SET_SIZE};
use super::face::{jaw_l1, lmk_l1, lvd, LandmarkBasis};
use super::frechet::frechet;
use super::report::MetricReport;
use crate::data::{ClipSample, MotionLayout, FPS};
use crate::diffusion::{Schedule, VarianceKind};
use crate::error::{Error, Result};
use crate::network::{Model, X0Predictor};
use crate::numcore::Tensor;
use crate::sampler::sample_segment;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub seed: u64,
    pub set_size: usize,
    pub sigma: f64,
    pub fps: f64,
    pub variance: VarianceKind,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            set_size: DEFAULT_SET_SIZE,
            sigma: DEFAULT_SIGMA,
            fps: FPS,
            variance: VarianceKind::Posterior,
        }
    }
}

/// Frozen feature extractors. Either may be missing, in which case the
/// metrics that need it are reported as unavailable.
#[derive(Clone, Debug, Default)]
pub struct Autoencoders {
    pub holistic: Option<FeatureAutoencoder>,
    pub face: Option<FeatureAutoencoder>,
}

/// One sample per clip, conditioned on the clip's seed frames, audio and
/// speaker. Clip `i` draws from stream `i` of the evaluation seed, so the
/// output does not depend on evaluation order.
pub fn generate_for_clips(
    model: &impl X0Predictor,
    schedule: &Schedule,
    variance: VarianceKind,
    clips: &[ClipSample],
    seed: u64,
) -> Result<Vec<Tensor>> {
    clips
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            sample_segment(
                model,
                schedule,
                variance,
                &c.seed,
                c.audio.tensor(),
                c.speaker,
                &mut rng,
            )
        })
        .collect()
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Fills the metric fields of `report` by comparing `generated` against the
/// ground truth of `real` clip by clip.
pub fn score_clips(
    report: &mut MetricReport,
    real: &[ClipSample],
    generated: &[Tensor],
    layout: MotionLayout,
    aes: &Autoencoders,
    basis: &LandmarkBasis,
    cfg: &EvalConfig,
) -> Result<()> {
    if real.len() != generated.len() {
        return Err(Error::Data(format!(
            "{} real clips but {} generated",
            real.len(),
            generated.len()
        )));
    }
    report.clips = real.len();
    let bw = layout.body_width();
    let fw = layout.face_width();

    let (mut jaw, mut lmk, mut vel, mut bc) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut no_beats = 0;
    for (clip, gen) in real.iter().zip(generated) {
        if gen.shape() != clip.motion.tensor().shape() {
            return Err(Error::shape(
                "generated clip",
                gen.shape(),
                clip.motion.tensor().shape(),
            ));
        }
        let gt_face = clip.motion.face();
        let gen_face = gen.slice_cols(bw, fw);
        jaw.push(jaw_l1(&gt_face, &gen_face)?);
        lmk.push(lmk_l1(&gt_face, &gen_face, basis)?);
        vel.push(lvd(&gt_face, &gen_face, basis)?);
        match beat_consistency(&gen.slice_cols(0, bw), &clip.audio.envelope(), cfg.fps, cfg.sigma) {
            Ok(v) => bc.push(v),
            Err(Error::Unavailable(_)) => no_beats += 1,
            Err(e) => return Err(e),
        }
    }
    report.jaw_l1 = mean(&jaw);
    report.lmk_l1 = mean(&lmk);
    report.lvd = mean(&vel);
    report.bc = mean(&bc);
    if no_beats > 0 {
        report
            .notes
            .push(format!("bc: {no_beats} clips without audio beats skipped"));
    }

    let real_motion: Vec<Tensor> = real.iter().map(|c| c.motion.tensor().clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    for (name, ae) in [("holistic", &aes.holistic), ("face", &aes.face)] {
        let Some(ae) = ae else {
            let (fd, div) = if name == "holistic" {
                ("fmd", "div_all")
            } else {
                ("fed", "div_face")
            };
            log::warn!("no {name} autoencoder; {fd} and {div} unavailable");
            report.notes.push(format!("{fd}, {div}: no {name} autoencoder"));
            continue;
        };
        let fr = ae.encode_all(&real_motion)?;
        let fg = ae.encode_all(generated)?;
        let fd = frechet(&fr, &fg)
            .map_err(|e| log::warn!("{name} Fréchet distance: {e}"))
            .ok();
        let div = diversity(&fg, cfg.set_size, &mut rng)
            .map_err(|e| log::warn!("{name} diversity: {e}"))
            .ok();
        if fd.is_none() || div.is_none() {
            report
                .notes
                .push(format!("{name}: too few clips for the feature statistics"));
        }
        if name == "holistic" {
            (report.fmd, report.div_all) = (fd, div);
        } else {
            (report.fed, report.div_face) = (fd, div);
        }
    }
    report.validate()
}

/// Generates for every clip with `model` and scores the result.
pub fn evaluate_model(
    model: &Model,
    clips: &[ClipSample],
    aes: &Autoencoders,
    basis: &LandmarkBasis,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    let mc = model.config();
    let schedule = Schedule::linear(mc.steps, mc.beta_start, mc.beta_end)?;
    let generated = generate_for_clips(model, &schedule, cfg.variance, clips, cfg.seed)?;
    let mut report = MetricReport::empty(mc.variant.as_str(), model.params.count() as u64, mc.hash(), cfg.seed);
    score_clips(&mut report, clips, &generated, mc.layout, aes, basis, cfg)?;
    Ok(report)
}
