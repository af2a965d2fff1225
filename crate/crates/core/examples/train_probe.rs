//! Trains on the synthetic corpus and prints fixed-batch losses.
//! Usage: train_probe [steps] [batch] [key=value overrides...]

use std::time::Instant;

use jointmotion_core::data::{synth_dataset, DatasetSplit, SplitAssignment, SplitProportions, SynthConfig};
use jointmotion_core::diffusion::{EvalBatch, TrainConfig, Trainer};
use jointmotion_core::network::Model;
use jointmotion_core::ModelConfig;

fn main() -> jointmotion_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: u64 = args.first().map_or(300, |s| s.parse().unwrap());
    let batch: usize = args.get(1).map_or(8, |s| s.parse().unwrap());
    let cfg = ModelConfig::default().apply_text(&args.iter().skip(2).cloned().collect::<Vec<_>>().join("\n"))?;
    let synth = SynthConfig::default();
    let seqs = synth_dataset(&synth)?;
    let split = SplitAssignment::new(seqs.len(), SplitProportions::default(), 0)?;
    let data = DatasetSplit::from_sequences(&seqs, &split, cfg.clip_frames, cfg.seed_frames)?;
    println!(
        "clips: train {} val {} test {}",
        data.train.len(),
        data.val.len(),
        data.test.len()
    );
    let mut trainer = Trainer::new(
        Model::new(&cfg)?,
        TrainConfig {
            batch_size: batch,
            ..TrainConfig::default()
        },
    )?;
    let eval = EvalBatch::new(&data.train, 32, cfg.steps, 99)?;
    let l0 = eval.loss(&trainer.model, &trainer.schedule, 1.0)?;
    println!("step 0 eval {:?}", l0);
    let start = Instant::now();
    while trainer.step < steps {
        let target = (trainer.step + 100).min(steps);
        trainer.run(&data.train, target, |_| {})?;
        let l = eval.loss(&trainer.model, &trainer.schedule, 1.0)?;
        println!(
            "step {} eval rec {:.5} vel {:.5} total {:.5} ratio {:.4}  {:.1} ms/step",
            trainer.step,
            l.0,
            l.1,
            l.2,
            l.2 / l0.2,
            start.elapsed().as_secs_f64() * 1e3 / trainer.step as f64
        );
    }
    Ok(())
}
