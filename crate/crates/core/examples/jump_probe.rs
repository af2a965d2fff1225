//! Compares jump statistics at blended boundaries for generated, hard-cut
//! and ground-truth motion on the ten test sequences.
//! Usage: jump_probe <checkpoint>

use jointmotion_core::data::{synth_dataset, SplitAssignment, SplitProportions, SynthConfig};
use jointmotion_core::diffusion::{Schedule, VarianceKind};
use jointmotion_core::network::Model;
use jointmotion_core::sampler::generate_long;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn main() -> jointmotion_core::Result<()> {
    let path = std::env::args().nth(1).expect("usage: jump_probe <checkpoint>");
    let (model, _) = Model::load(path)?;
    let cfg = model.config().clone();
    let schedule = Schedule::linear(cfg.steps, cfg.beta_start, cfg.beta_end)?;
    let seqs = synth_dataset(&SynthConfig::default())?;
    let split = SplitAssignment::new(seqs.len(), SplitProportions::default(), 0)?;
    for (run, &i) in split.test.iter().enumerate() {
        let s = &seqs[i];
        let frames = 301;
        let audio = s.audio.tensor().slice_rows(0, frames);
        let seed = s.motion.tensor().slice_rows(0, cfg.seed_frames);
        let mut rng = ChaCha8Rng::seed_from_u64(run as u64);
        let out = generate_long(
            &model,
            &schedule,
            VarianceKind::Posterior,
            &seed,
            &audio,
            s.speaker,
            &mut rng,
        )?;
        // hard cut: each later segment overwrites from its offset, no blending
        let mut cut = out.raw[0].clone();
        for (k, &off) in out.offsets.iter().enumerate().skip(1) {
            let head = cut.slice_rows(0, off);
            cut = jointmotion_core::Tensor::concat_rows(&[&head, &out.raw[k]])?;
        }
        let gt = s.motion.tensor().slice_rows(0, frames);
        let mut line = format!("run {run}:");
        for (name, x) in [("gen", &out.motion), ("cut", &cut), ("gt", &gt)] {
            let w = x.cols();
            let mut all = vec![false; frames - 1];
            let mut edge = vec![false; frames - 1];
            for b in &out.blends {
                all[b.start.saturating_sub(1)..(b.start + b.len).min(frames - 1)].fill(true);
                edge[b.start - 1] = true;
                edge[(b.start + b.len - 1).min(frames - 2)] = true;
            }
            let jump = |f: usize| (0..w).map(|c| (x.at(f + 1, c) - x.at(f, c)).abs()).sum::<f64>() / w as f64;
            let med = median((0..frames - 1).filter(|f| !all[*f]).map(jump).collect());
            let b: Vec<f64> = (0..frames - 1).filter(|f| all[*f]).map(jump).collect();
            let e: Vec<f64> = (0..frames - 1).filter(|f| edge[*f]).map(jump).collect();
            let mx = b.iter().copied().fold(0.0, f64::max) / med;
            let emx = e.iter().copied().fold(0.0, f64::max) / med;
            let bmed = median(b.clone()) / med;
            let bmean = b.iter().sum::<f64>() / b.len() as f64 / med;
            let intra_max = (0..frames - 1).filter(|f| !all[*f]).map(jump).fold(0.0, f64::max) / med;
            line +=
                &format!(" {name}[max {mx:.2} edge {emx:.2} med {bmed:.2} mean {bmean:.2} intramax {intra_max:.2}]");
        }
        println!("{line}");
    }
    Ok(())
}
