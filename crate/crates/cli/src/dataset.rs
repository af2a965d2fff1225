//! On-disk synthetic dataset: one motion and one feature file per sequence
//! plus `manifest.json`.

use std::fs;
use std::path::Path;

use jointmotion_core::data::{
    load_features, load_motion, save_features, save_motion, DatasetSplit, LayoutPolicy, MotionLayout, SplitAssignment,
    SplitProportions, SynthSequence,
};
use jointmotion_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "jointmotion-dataset";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub index: usize,
    pub speaker: usize,
    pub frames: usize,
    pub motion: String,
    pub features: String,
    pub motion_sha256: String,
    pub features_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub split_seed: u64,
    pub num_sequences: usize,
    pub frames_per_sequence: usize,
    pub speakers: usize,
    pub feature_dim: usize,
    pub joints: usize,
    pub expressions: usize,
    pub fps: f64,
    pub proportions: [f64; 3],
    pub split: SplitAssignment,
    /// Sequences per split.
    pub sequence_counts: SplitCounts,
    /// Training windows per split at the configured clip and seed lengths.
    pub clip_counts: SplitCounts,
    pub clip_frames: usize,
    pub seed_frames: usize,
    pub sequences: Vec<SequenceEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Writes every sequence and the manifest into `dir`.
pub fn write_dataset(
    dir: &Path,
    seqs: &[SynthSequence],
    split: &SplitAssignment,
    mut manifest: Manifest,
) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    manifest.sequences.clear();
    for (i, s) in seqs.iter().enumerate() {
        let motion = format!("seq_{i:04}.motion");
        let features = format!("seq_{i:04}.feat");
        save_motion(dir.join(&motion), &s.motion)?;
        save_features(dir.join(&features), &s.audio)?;
        manifest.sequences.push(SequenceEntry {
            index: i,
            speaker: s.speaker,
            frames: s.motion.frames(),
            motion_sha256: sha256_file(&dir.join(&motion))?,
            features_sha256: sha256_file(&dir.join(&features))?,
            motion,
            features,
        });
    }
    manifest.split = split.clone();
    fs::write(
        dir.join(MANIFEST),
        serde_json::to_string_pretty(&manifest).expect("serializes"),
    )?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if m.format != MANIFEST_FORMAT {
        return Err(Error::Format(format!("{} is not a dataset manifest", path.display())));
    }
    Ok(m)
}

/// Loads every sequence listed in the manifest, checking file hashes.
pub fn load_sequences(dir: &Path, m: &Manifest) -> Result<Vec<SynthSequence>> {
    let layout = MotionLayout {
        joints: m.joints,
        expressions: m.expressions,
    };
    m.sequences
        .iter()
        .map(|e| {
            for (file, want) in [(&e.motion, &e.motion_sha256), (&e.features, &e.features_sha256)] {
                if &sha256_file(&dir.join(file))? != want {
                    return Err(Error::Data(format!("{file} does not match its manifest hash")));
                }
            }
            Ok(SynthSequence {
                motion: load_motion(dir.join(&e.motion), LayoutPolicy::Strict(layout))?,
                audio: load_features(dir.join(&e.features))?,
                speaker: e.speaker,
            })
        })
        .collect()
}

pub fn load_split(dir: &Path, clip_frames: usize, seed_frames: usize) -> Result<(Manifest, DatasetSplit)> {
    let m = read_manifest(dir)?;
    let seqs = load_sequences(dir, &m)?;
    let split = DatasetSplit::from_sequences(&seqs, &m.split, clip_frames, seed_frames)?;
    Ok((m, split))
}

pub fn proportions() -> SplitProportions {
    SplitProportions::default()
}
