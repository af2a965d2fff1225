use jointmotion_core::data::MotionLayout;
use jointmotion_core::diffusion::{loss_rec_var, loss_vel_var};
use jointmotion_core::network::{adapter_param_count, count_params, ConditioningBundle, Denoiser, Model, X0Predictor};
use jointmotion_core::numcore::{grad_check, Adam, AdamConfig, DEFAULT_STEP, DEFAULT_TOLERANCE};
use jointmotion_core::{ModelConfig, ParamStore, Tape, Tensor, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(variant: Variant) -> ModelConfig {
    ModelConfig {
        d: 16,
        heads: 2,
        enc_layers: 1,
        dec_layers: 1,
        latent_tokens: 3,
        bottleneck: 4,
        ff: 32,
        steps: 10,
        clip_frames: 6,
        seed_frames: 2,
        layout: MotionLayout {
            joints: 3,
            expressions: 4,
        },
        audio_dim: 5,
        speakers: 2,
        variant,
        ..ModelConfig::default()
    }
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

struct Inputs {
    x: Tensor,
    seed: Tensor,
    audio: Tensor,
}

impl Inputs {
    fn new(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = cfg.layout.width();
        Self {
            x: random(cfg.clip_frames, w, &mut rng),
            seed: random(cfg.seed_frames, w, &mut rng),
            audio: random(cfg.clip_frames, cfg.audio_dim, &mut rng),
        }
    }

    fn cond(&self, t: usize) -> ConditioningBundle<'_> {
        ConditioningBundle {
            seed: &self.seed,
            audio: &self.audio,
            speaker: 1,
            t,
        }
    }
}

fn run(model: &Model, inp: &Inputs) -> Tensor {
    model.predict_x0(&inp.x, &inp.cond(3)).unwrap()
}

fn randomize_adapter_outputs(params: &mut ParamStore, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = params
        .iter()
        .filter(|(n, _)| n.contains(".adapter") && n.contains(".up."))
        .map(|(n, _)| n.to_string())
        .collect();
    for n in names {
        for v in params.by_name_mut(&n).unwrap().data_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
}

fn max_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn output_shape_matches_input() {
    for v in Variant::ALL {
        let cfg = small(v);
        let model = Model::new(&cfg).unwrap();
        let out = run(&model, &Inputs::new(&cfg, 1));
        assert_eq!(out.shape(), &[6, cfg.layout.width()], "{v}");
        assert!(out.is_finite());
    }
}

#[test]
fn fresh_adapters_are_exact_no_ops() {
    let cfg = small(Variant::JointAdapters);
    let (net, params) = Denoiser::new(&cfg).unwrap();
    let inp = Inputs::new(&cfg, 2);
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    let x = tape.constant(inp.x.clone());
    let with = net.forward(&p, x, &inp.cond(4)).unwrap().value();
    let without = net.forward_backbone_only(&p, x, &inp.cond(4)).unwrap().value();
    assert!(max_diff(&with, &without) < 1e-10);
}

#[test]
fn backbone_weights_are_shared_between_streams() {
    let cfg = small(Variant::JointAdapters);
    let mut model = Model::new(&cfg).unwrap();
    let inp = Inputs::new(&cfg, 3);
    let before = run(&model, &inp);
    model.params.by_name_mut("net0.enc0.ff.up.w").unwrap().data_mut()[0] += 0.5;
    let after = run(&model, &inp);
    let bw = cfg.layout.body_width();
    let body_changed = max_diff(&before.slice_cols(0, bw), &after.slice_cols(0, bw));
    let face_changed = max_diff(&before.slice_cols(bw, 7), &after.slice_cols(bw, 7));
    assert!(body_changed > 1e-8 && face_changed > 1e-8);

    let cfg = small(Variant::Separate);
    let mut model = Model::new(&cfg).unwrap();
    let before = run(&model, &inp);
    model.params.by_name_mut("net0.enc0.ff.up.w").unwrap().data_mut()[0] += 0.5;
    let after = run(&model, &inp);
    assert!(max_diff(&before.slice_cols(0, bw), &after.slice_cols(0, bw)) > 1e-8);
    assert_eq!(before.slice_cols(bw, 7), after.slice_cols(bw, 7));
}

#[test]
fn mirrored_streams_give_mirrored_outputs() {
    // 3J == 3 + E, so both streams have width 6
    let cfg = ModelConfig {
        layout: MotionLayout {
            joints: 2,
            expressions: 3,
        },
        ..small(Variant::JointAdapters)
    };
    let mut model = Model::new(&cfg).unwrap();
    randomize_adapter_outputs(&mut model.params, 9);
    let body: Vec<(String, Tensor)> = model
        .params
        .iter()
        .filter(|(n, _)| n.starts_with("body."))
        .map(|(n, t)| (n.replacen("body.", "face.", 1), t.clone()))
        .collect();
    for (n, t) in body {
        *model.params.by_name_mut(&n).unwrap() = t;
    }
    let mut inp = Inputs::new(&cfg, 4);
    let half = inp.x.slice_cols(0, 6);
    inp.x = Tensor::concat_cols(&[&half, &half]).unwrap();
    let out = run(&model, &inp);
    assert!(max_diff(&out.slice_cols(0, 6), &out.slice_cols(6, 6)) < 1e-12);
}

fn coupling(model: &Model, inp: &Inputs, bw: usize) -> f64 {
    let base = run(model, inp);
    let mut bumped = Inputs {
        x: inp.x.clone(),
        seed: inp.seed.clone(),
        audio: inp.audio.clone(),
    };
    let w = bumped.x.cols();
    for f in 0..bumped.x.rows() {
        bumped.x.data_mut()[f * w + bw + 1] += 1e-3;
    }
    let out = run(model, &bumped);
    max_diff(&base.slice_cols(0, bw), &out.slice_cols(0, bw))
}

#[test]
fn one_step_opens_cross_modal_path() {
    let cfg = small(Variant::JointAdapters);
    let bw = cfg.layout.body_width();
    let inp = Inputs::new(&cfg, 5);
    let mut model = Model::new(&cfg).unwrap();
    assert_eq!(coupling(&model, &inp, bw), 0.0);

    let mut opt = Adam::new(AdamConfig::default(), &model.params);
    let target = Tensor::filled(inp.x.shape(), 0.3);
    let grads = {
        let tape = Tape::new();
        let p = model.params.bind(&tape);
        let out = model
            .denoiser
            .forward(&p, tape.constant(inp.x.clone()), &inp.cond(3))
            .unwrap();
        let loss = loss_rec_var(tape.constant(target), out).unwrap();
        p.collect(&tape.backward(loss).unwrap())
    };
    opt.step(&mut model.params, &grads).unwrap();
    assert!(coupling(&model, &inp, bw) > 1e-9);

    // independent networks never couple
    let cfg = small(Variant::Separate);
    let mut model = Model::new(&cfg).unwrap();
    model
        .params
        .values_mut()
        .for_each(|t| t.data_mut().iter_mut().for_each(|v| *v *= 1.1));
    assert_eq!(coupling(&model, &inp, bw), 0.0);
}

#[test]
fn full_network_gradients_match_finite_differences() {
    for variant in [Variant::JointAdapters, Variant::Combined] {
        let cfg = ModelConfig {
            variant,
            ..ModelConfig::gradcheck_toy()
        };
        let (net, mut params) = Denoiser::new(&cfg).unwrap();
        randomize_adapter_outputs(&mut params, 10);
        let inp = Inputs::new(&cfg, 6);
        let target = Inputs::new(&cfg, 7).x;
        let report = grad_check(
            |p| {
                let tape = p.tape();
                let out = net.forward(p, tape.constant(inp.x.clone()), &inp.cond(2))?;
                let x0 = tape.constant(target.clone());
                loss_rec_var(x0, out)?.add(loss_vel_var(x0, out)?)
            },
            &params,
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )
        .unwrap();
        assert!(report.passed(), "{variant}: {:?}", report.worst());
    }
}

#[test]
fn rejects_malformed_conditioning() {
    let cfg = small(Variant::JointAdapters);
    let model = Model::new(&cfg).unwrap();
    let inp = Inputs::new(&cfg, 8);
    let short_seed = inp.seed.slice_rows(0, 1);
    let c = ConditioningBundle {
        seed: &short_seed,
        ..inp.cond(1)
    };
    assert!(model.predict_x0(&inp.x, &c).is_err());
    assert!(model
        .predict_x0(
            &inp.x,
            &ConditioningBundle {
                speaker: 2,
                ..inp.cond(1)
            }
        )
        .is_err());
    assert!(model.predict_x0(&inp.x, &inp.cond(0)).is_err());
    assert!(model.predict_x0(&inp.x, &inp.cond(11)).is_err());
    assert!(model.predict_x0(&inp.x.slice_rows(0, 5), &inp.cond(1)).is_err());
}

#[test]
fn adapter_parameters_scale_with_bottleneck() {
    let base = ModelConfig::default();
    let joint = count_params(&base).unwrap();
    let separate = count_params(&ModelConfig {
        variant: Variant::Separate,
        ..base.clone()
    })
    .unwrap();
    assert!((joint as f64) < 0.6 * separate as f64, "{joint} vs {separate}");
    let mut last = 0;
    for db in [4, 8, 16, 32] {
        let (_, p) = Denoiser::new(&ModelConfig {
            bottleneck: db,
            ..base.clone()
        })
        .unwrap();
        let a = adapter_param_count(&p);
        assert!(a > last);
        last = a;
    }
    assert_eq!(
        adapter_param_count(
            &Denoiser::new(&ModelConfig {
                variant: Variant::Combined,
                ..base
            })
            .unwrap()
            .1
        ),
        0
    );
}

#[test]
fn checkpoint_restores_identical_outputs() {
    let cfg = small(Variant::Split);
    let mut model = Model::new(&cfg).unwrap();
    randomize_adapter_outputs(&mut model.params, 11);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    model.checkpoint(7, None).save(&path).unwrap();
    let (back, ckpt) = Model::load(&path).unwrap();
    assert_eq!(ckpt.step, 7);
    let inp = Inputs::new(&cfg, 12);
    assert_eq!(run(&model, &inp), run(&back, &inp));
}
