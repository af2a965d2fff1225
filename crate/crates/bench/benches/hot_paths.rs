use criterion::{black_box, criterion_group, criterion_main, Criterion};
use jointmotion_core::data::{synth_dataset, DatasetSplit, SplitAssignment, SplitProportions, SynthConfig};
use jointmotion_core::diffusion::{standard_normal, train_step, NoisedItem, Schedule};
use jointmotion_core::metrics::frechet;
use jointmotion_core::network::{ConditioningBundle, Model, X0Predictor};
use jointmotion_core::numcore::{Adam, AdamConfig};
use jointmotion_core::{ModelConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (a, b) = (random(64, 256, &mut rng), random(256, 64, &mut rng));
    c.bench_function("matmul 64x256x64", |bn| bn.iter(|| black_box(a.matmul(&b).unwrap())));
}

fn denoiser(c: &mut Criterion) {
    let cfg = ModelConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = cfg.layout.width();
    let (x, seed, audio) = (
        random(cfg.clip_frames, w, &mut rng),
        random(cfg.seed_frames, w, &mut rng),
        random(cfg.clip_frames, cfg.audio_dim, &mut rng),
    );
    let mut group = c.benchmark_group("denoiser forward");
    for variant in jointmotion_core::Variant::ALL {
        let model = Model::new(&ModelConfig { variant, ..cfg.clone() }).unwrap();
        let cond = ConditioningBundle {
            seed: &seed,
            audio: &audio,
            speaker: 0,
            t: 10,
        };
        group.bench_function(variant.as_str(), |bn| {
            bn.iter(|| black_box(model.predict_x0(&x, &cond).unwrap()))
        });
    }
    group.finish();
}

fn training_step(c: &mut Criterion) {
    let cfg = ModelConfig::default();
    let synth = SynthConfig {
        num_sequences: 10,
        frames_per_sequence: 200,
        ..SynthConfig::default()
    };
    let seqs = synth_dataset(&synth).unwrap();
    let split = SplitAssignment::new(seqs.len(), SplitProportions::default(), 0).unwrap();
    let data = DatasetSplit::from_sequences(&seqs, &split, cfg.clip_frames, cfg.seed_frames).unwrap();
    let schedule = Schedule::linear(cfg.steps, cfg.beta_start, cfg.beta_end).unwrap();
    let mut model = Model::new(&cfg).unwrap();
    let mut opt = Adam::new(AdamConfig::default(), &model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let items: Vec<NoisedItem> = data.train[..8]
        .iter()
        .map(|clip| NoisedItem {
            clip,
            t: rng.gen_range(1..=cfg.steps),
            eps: standard_normal(cfg.clip_frames, cfg.layout.width(), &mut rng),
        })
        .collect();
    let mut step = 0;
    c.bench_function("train step (batch 8)", |bn| {
        bn.iter(|| {
            step += 1;
            black_box(train_step(&mut model, &mut opt, &schedule, &items, 1.0, step).unwrap())
        })
    });
}

fn frechet_distance(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let set = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..130)
            .map(|_| (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    };
    let (a, b) = (set(&mut rng), set(&mut rng));
    c.bench_function("frechet 130x32", |bn| bn.iter(|| black_box(frechet(&a, &b).unwrap())));
}

criterion_group!(benches, matmul, denoiser, training_step, frechet_distance);
criterion_main!(benches);
