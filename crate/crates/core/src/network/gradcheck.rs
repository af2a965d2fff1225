use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::denoiser::{ConditioningBundle, Denoiser};
use crate::config::ModelConfig;
use crate::diffusion::{loss_rec_var, loss_vel_var};
use crate::error::Result;
use crate::numcore::{grad_check, GradCheckReport, Tensor};

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("sized")
}

/// Checks the gradient of `L_rec + L_vel` through the whole denoiser against
/// central differences. Adapter output layers start at zero, which would
/// hide everything upstream of them, so they are randomized first.
pub fn network_grad_check(cfg: &ModelConfig, h: f64, tol: f64, seed: u64) -> Result<GradCheckReport> {
    let (net, mut params) = Denoiser::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let up: Vec<String> = params
        .iter()
        .filter(|(n, _)| n.contains(".adapter") && n.contains(".up."))
        .map(|(n, _)| n.to_string())
        .collect();
    for n in up {
        for v in params.by_name_mut(&n).expect("listed").data_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    let w = cfg.layout.width();
    let x = random(cfg.clip_frames, w, &mut rng);
    let target = random(cfg.clip_frames, w, &mut rng);
    let seed_frames = random(cfg.seed_frames, w, &mut rng);
    let audio = random(cfg.clip_frames, cfg.audio_dim, &mut rng);
    let cond = ConditioningBundle {
        seed: &seed_frames,
        audio: &audio,
        speaker: cfg.speakers - 1,
        t: cfg.steps.div_ceil(2),
    };
    grad_check(
        |p| {
            let tape = p.tape();
            let out = net.forward(p, tape.constant(x.clone()), &cond)?;
            let x0 = tape.constant(target.clone());
            loss_rec_var(x0, out)?.add(loss_vel_var(x0, out)?)
        },
        &params,
        h,
        tol,
    )
}
