//! Trains both feature autoencoders, then scores a model trained for a
//! given number of steps on the test split.
//! Usage: eval_probe [steps] [key=value overrides...]

use std::time::Instant;

use jointmotion_core::data::{synth_dataset, DatasetSplit, SplitAssignment, SplitProportions, SynthConfig};
use jointmotion_core::diffusion::{TrainConfig, Trainer};
use jointmotion_core::metrics::{
    evaluate_model, AutoencoderConfig, Autoencoders, EvalConfig, FeatureAutoencoder, LandmarkBasis, Scope,
};
use jointmotion_core::network::Model;
use jointmotion_core::ModelConfig;

fn main() -> jointmotion_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: u64 = args.first().map_or(0, |s| s.parse().unwrap());
    let cfg = ModelConfig::default().apply_text(&args.iter().skip(1).cloned().collect::<Vec<_>>().join("\n"))?;
    let seqs = synth_dataset(&SynthConfig::default())?;
    let split = SplitAssignment::new(seqs.len(), SplitProportions::default(), 0)?;
    let data = DatasetSplit::from_sequences(&seqs, &split, cfg.clip_frames, cfg.seed_frames)?;
    let train: Vec<_> = data.train.iter().map(|c| c.motion.tensor().clone()).collect();
    let val: Vec<_> = data.val.iter().map(|c| c.motion.tensor().clone()).collect();
    let mut aes = Autoencoders::default();
    for scope in [Scope::Holistic, Scope::Face] {
        let t = Instant::now();
        let ae = FeatureAutoencoder::train(scope, cfg.layout, &train, &val, &AutoencoderConfig::default());
        match ae {
            Ok(ae) => {
                println!(
                    "{scope}: rel {:.4} after {} steps, {:.1}s",
                    ae.val_relative_mse,
                    ae.steps,
                    t.elapsed().as_secs_f64()
                );
                if scope == Scope::Holistic {
                    aes.holistic = Some(ae)
                } else {
                    aes.face = Some(ae)
                }
            }
            Err(e) => println!("{scope}: {e}"),
        }
    }
    let basis = LandmarkBasis::shipped()?;
    let mut trainer = Trainer::new(Model::new(&cfg)?, TrainConfig::default())?;
    let t = Instant::now();
    let r0 = evaluate_model(&trainer.model, &data.test, &aes, &basis, &EvalConfig::default())?;
    println!("untrained ({:.1}s): {}", t.elapsed().as_secs_f64(), r0.csv_row());
    if steps > 0 {
        trainer.run(&data.train, steps, |_| {})?;
        let r = evaluate_model(&trainer.model, &data.test, &aes, &basis, &EvalConfig::default())?;
        println!("step {steps}: {}", r.csv_row());
    }
    Ok(())
}
