use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use sha2::{Digest, Sha256};

const SMALL_MODEL: [&str; 5] = ["d=16", "heads=2", "ff=32", "L_e=1", "L_d=1"];

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_jointmotion"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn with_sets(args: &[&str], sets: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    for s in sets {
        v.push("--set".into());
        v.push(s.to_string());
    }
    v
}

fn run_owned(args: &[String]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn sha(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn schema(name: &str) -> jsonschema::JSONSchema {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(name);
    jsonschema::JSONSchema::compile(&json(&path)).expect("schema compiles")
}

fn assert_valid(schema_name: &str, doc: &Value) {
    let s = schema(schema_name);
    let msgs: Vec<String> = match s.validate(doc) {
        Ok(()) => return,
        Err(errors) => errors.map(|e| e.to_string()).collect(),
    };
    panic!("{schema_name}: {msgs:?}");
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn data(&self) -> PathBuf {
        self.root.join("data")
    }
    fn run(&self) -> PathBuf {
        self.root.join("run")
    }
}

/// 30 sequences of 400 frames, a briefly trained small model and both
/// autoencoders, shared by the tests below.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let data = root.join("data");
        let o = run_owned(&with_sets(
            &["synth", "--out", data.to_str().unwrap()],
            &["num_sequences=30"],
        ));
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let mut sets = SMALL_MODEL.to_vec();
        sets.extend(["train_steps=4", "checkpoint_every=2"]);
        let o = run_owned(&with_sets(
            &[
                "train",
                "--data",
                data.to_str().unwrap(),
                "--out",
                root.join("run").to_str().unwrap(),
            ],
            &sets,
        ));
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        for scope in ["holistic", "face"] {
            let out = root.join(format!("ae_{scope}.ckpt"));
            let o = run(&[
                "autoencoder",
                "--data",
                data.to_str().unwrap(),
                "--scope",
                scope,
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
        }
        Fixture { _dir: dir, root }
    })
}

#[test]
fn synth_default_manifest_has_80_10_10_split_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["synth", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let m = json(&a.join("manifest.json"));
    assert_valid("manifest.schema.json", &m);
    assert_eq!(m["sequence_counts"]["train"], 80);
    assert_eq!(m["sequence_counts"]["val"], 10);
    assert_eq!(m["sequence_counts"]["test"], 10);
    assert_eq!(m["proportions"], serde_json::json!([0.8, 0.1, 0.1]));
    assert!(m["clip_counts"]["train"].as_u64().unwrap() >= 500);
    assert_eq!(sha(&a.join("manifest.json")), sha(&b.join("manifest.json")));
}

#[test]
fn synth_rejects_empty_corpus_and_unwritable_paths() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_owned(&with_sets(
        &["synth", "--out", dir.path().join("x").to_str().unwrap()],
        &["num_sequences=0"],
    ));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("num_sequences"), "{}", stderr(&o));
    let file = dir.path().join("file");
    std::fs::write(&file, "x").unwrap();
    let o = run(&["synth", "--out", file.join("sub").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn joint_model_logs_fewer_parameters_than_separate() {
    let f = fixture();
    let joint = json(&f.run().join("train.json"));
    let out = f.root.join("separate");
    let mut sets = SMALL_MODEL.to_vec();
    sets.push("train_steps=1");
    let o = run_owned(&with_sets(
        &[
            "train",
            "--data",
            f.data().to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--variant",
            "separate",
        ],
        &sets,
    ));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sep = json(&out.join("train.json"));
    assert_eq!(sep["variant"], "separate");
    assert!(joint["params"].as_u64().unwrap() < sep["params"].as_u64().unwrap());
}

#[test]
fn unknown_variant_is_a_usage_error() {
    let f = fixture();
    let o = run(&[
        "train",
        "--data",
        f.data().to_str().unwrap(),
        "--out",
        f.root.join("bogus").to_str().unwrap(),
        "--variant",
        "bogus",
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("joint_adapters"));
}

#[test]
fn resume_reproduces_later_losses_exactly() {
    let f = fixture();
    let out = f.root.join("resumed");
    let mut sets = SMALL_MODEL.to_vec();
    sets.push("train_steps=4");
    let ckpt = f.run().join("checkpoints/step_000002.ckpt");
    let o = run_owned(&with_sets(
        &[
            "train",
            "--data",
            f.data().to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--resume",
            ckpt.to_str().unwrap(),
        ],
        &sets,
    ));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let full = std::fs::read_to_string(f.run().join("loss.csv")).unwrap();
    let resumed = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    let tail: Vec<&str> = full.lines().skip(3).collect();
    let again: Vec<&str> = resumed.lines().skip(1).collect();
    assert_eq!(tail.len(), 2);
    assert_eq!(tail, again);
}

fn generate(f: &Fixture, features: &Path, seed: &Path, out: &Path, rng: &str) -> Output {
    run(&[
        "generate",
        "--checkpoint",
        f.run().join("last.ckpt").to_str().unwrap(),
        "--features",
        features.to_str().unwrap(),
        "--seed-frames",
        seed.to_str().unwrap(),
        "--speaker",
        "1",
        "--rng-seed",
        rng,
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn generation_matches_feature_length_and_is_reproducible() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let short = dir.path().join("short");
    let o = run_owned(&with_sets(
        &["synth", "--out", short.to_str().unwrap()],
        &["num_sequences=1", "frames_per_sequence=100"],
    ));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let feat = short.join("seq_0000.feat");
    let seed = f.data().join("seq_0000.motion");
    let (a, b) = (dir.path().join("a.motion"), dir.path().join("b.motion"));
    for out in [&a, &b] {
        let o = generate(f, &feat, &seed, out, "5");
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(sha(&a), sha(&b));
    let side = json(&dir.path().join("a.motion.json"));
    assert_valid("sidecar.schema.json", &side);
    assert_eq!(side["frames"], 100);
    assert_eq!(side["output_sha256"], sha(&a));
    let c = dir.path().join("c.motion");
    assert_eq!(code(&generate(f, &feat, &seed, &c, "6")), 0);
    assert_ne!(sha(&a), sha(&c));
}

#[test]
fn generation_rejects_missing_seed_frames_and_wrong_features() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let o = generate(
        f,
        &f.data().join("seq_0000.feat"),
        &dir.path().join("none.motion"),
        &dir.path().join("o"),
        "0",
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("M=4"), "{}", stderr(&o));
    let other = dir.path().join("other");
    let o = run_owned(&with_sets(
        &["synth", "--out", other.to_str().unwrap()],
        &["num_sequences=1", "frames_per_sequence=100", "D_a=7"],
    ));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = generate(
        f,
        &other.join("seq_0000.feat"),
        &f.data().join("seq_0000.motion"),
        &dir.path().join("o"),
        "0",
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("D_a=16"), "{}", stderr(&o));
}

fn evaluate(f: &Fixture, extra: &[&str], out: &Path) -> Output {
    let data = f.data();
    let mut args = vec![
        "evaluate",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--set",
        "set_size=10",
    ];
    args.extend(extra);
    run(&args)
}

#[test]
fn ground_truth_scores_zero_against_itself() {
    let f = fixture();
    let out = f.root.join("eval_gt");
    let h = f.root.join("ae_holistic.ckpt");
    let fa = f.root.join("ae_face.ckpt");
    let o = evaluate(
        f,
        &[
            "--ground-truth",
            "--ae-holistic",
            h.to_str().unwrap(),
            "--ae-face",
            fa.to_str().unwrap(),
        ],
        &out,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&out.join("report.json"));
    assert_valid("metric_report.schema.json", &r);
    for k in ["fmd", "fed"] {
        assert!(r[k].as_f64().unwrap().abs() < 1e-6, "{k} = {}", r[k]);
    }
    for k in ["jaw_l1", "lmk_l1", "lvd"] {
        assert_eq!(r[k].as_f64().unwrap(), 0.0, "{k}");
    }
}

#[test]
fn model_report_has_table_columns_and_validates() {
    let f = fixture();
    let out = f.root.join("eval_model");
    let h = f.root.join("ae_holistic.ckpt");
    let fa = f.root.join("ae_face.ckpt");
    let ck = f.run().join("last.ckpt");
    let o = evaluate(
        f,
        &[
            "--checkpoint",
            ck.to_str().unwrap(),
            "--ae-holistic",
            h.to_str().unwrap(),
            "--ae-face",
            fa.to_str().unwrap(),
        ],
        &out,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&out.join("report.json"));
    assert_valid("metric_report.schema.json", &r);
    for k in ["fmd", "fed", "div_all", "div_face", "bc", "jaw_l1", "lmk_l1", "lvd"] {
        assert!(r[k].is_number(), "{k} missing");
    }
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let metrics: Vec<&str> = header
        .iter()
        .copied()
        .filter(|c| !["variant", "config_hash", "clips"].contains(c))
        .collect();
    assert_eq!(
        metrics,
        ["params", "fmd", "div_all", "bc", "fed", "div_face", "jaw_l1", "lmk_l1", "lvd"]
    );
}

#[test]
fn missing_autoencoders_leave_other_metrics() {
    let f = fixture();
    let out = f.root.join("eval_noae");
    let ck = f.run().join("last.ckpt");
    let o = evaluate(
        f,
        &[
            "--checkpoint",
            ck.to_str().unwrap(),
            "--ae-face",
            "/nonexistent/ae.ckpt",
        ],
        &out,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("WARN"), "{}", stderr(&o));
    let r = json(&out.join("report.json"));
    assert_valid("metric_report.schema.json", &r);
    for k in ["fmd", "fed", "div_all", "div_face"] {
        assert!(r[k].is_null(), "{k}");
    }
    for k in ["bc", "jaw_l1", "lmk_l1", "lvd"] {
        assert!(r[k].is_number(), "{k}");
    }
}

#[test]
fn gradcheck_passes_on_toy_config_and_fails_at_zero_tolerance() {
    let o = run(&["gradcheck"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(out.contains("PASS"));
    assert!(out.contains("worst") && out.contains("max rel err"), "{out}");
    let o = run(&["gradcheck", "--tolerance", "0"]);
    assert_eq!(code(&o), 1);
}
