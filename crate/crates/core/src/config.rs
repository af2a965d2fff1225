//! Model configuration and its `key=value` text form.
//!
//! ```text
//! # comments and blank lines are ignored
//! d=64
//! heads=4
//! L_e=2
//! L_d=2
//! K=8
//! d_b=4
//! T=50
//! N=34
//! M=4
//! J=43
//! E=100
//! D_a=16
//! S=4
//! variant=joint_adapters
//! ```
//!
//! Optional keys: `ff` (feed-forward width), `audio_tokens`
//! (`per_frame` | `pooled`), `beta_start`, `beta_end`, `variance`
//! (`posterior` | `beta`), `init_seed`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::data::MotionLayout;
use crate::diffusion::VarianceKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// One shared backbone for face and body with cross-modal adapters.
    JointAdapters,
    /// Two independent single-modality networks.
    Separate,
    /// One network on the concatenated motion.
    Combined,
    /// Two single-modality networks joined by cross-modal adapters.
    Split,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::JointAdapters,
        Variant::Separate,
        Variant::Combined,
        Variant::Split,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::JointAdapters => "joint_adapters",
            Variant::Separate => "separate",
            Variant::Combined => "combined",
            Variant::Split => "split",
        }
    }

    pub fn has_adapters(self) -> bool {
        matches!(self, Variant::JointAdapters | Variant::Split)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown variant {s:?}; expected one of joint_adapters, separate, combined, split"
            ))
        })
    }
}

/// How audio features enter the denoiser.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AudioTokens {
    /// Only the pooled prefix token.
    Pooled,
    /// Pooled prefix token plus the projected feature added to each motion frame token.
    PerFrame,
}

impl AudioTokens {
    fn as_str(self) -> &'static str {
        match self {
            AudioTokens::Pooled => "pooled",
            AudioTokens::PerFrame => "per_frame",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub d: usize,
    pub heads: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub latent_tokens: usize,
    pub bottleneck: usize,
    pub ff: usize,
    pub steps: usize,
    pub clip_frames: usize,
    pub seed_frames: usize,
    pub layout: MotionLayout,
    pub audio_dim: usize,
    pub speakers: usize,
    pub variant: Variant,
    pub audio_tokens: AudioTokens,
    pub beta_start: f64,
    pub beta_end: f64,
    pub variance: VarianceKind,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    /// Desk-scale defaults.
    fn default() -> Self {
        Self {
            d: 64,
            heads: 4,
            enc_layers: 2,
            dec_layers: 2,
            latent_tokens: 8,
            bottleneck: 4,
            ff: 256,
            steps: 50,
            clip_frames: 34,
            seed_frames: 4,
            layout: MotionLayout::default(),
            audio_dim: 16,
            speakers: 4,
            variant: Variant::JointAdapters,
            audio_tokens: AudioTokens::PerFrame,
            beta_start: 1e-3,
            beta_end: 0.2,
            variance: VarianceKind::Posterior,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Width-8, one-block configuration used for full-network gradient checks.
    pub fn gradcheck_toy() -> Self {
        Self {
            d: 8,
            heads: 2,
            enc_layers: 1,
            dec_layers: 1,
            latent_tokens: 2,
            bottleneck: 2,
            ff: 16,
            steps: 5,
            clip_frames: 2,
            seed_frames: 1,
            layout: MotionLayout {
                joints: 2,
                expressions: 2,
            },
            audio_dim: 3,
            speakers: 2,
            ..Self::default()
        }
    }

    /// Full-width, 16-block configuration, for parameter-ratio reporting only.
    pub fn full_width() -> Self {
        Self {
            d: 512,
            heads: 8,
            enc_layers: 8,
            dec_layers: 8,
            latent_tokens: 8,
            bottleneck: 64,
            ff: 2048,
            steps: 500,
            beta_start: 1e-4,
            beta_end: 0.02,
            ..Self::default()
        }
    }

    pub fn blocks(&self) -> usize {
        self.enc_layers + self.dec_layers
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d == 0 || self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return bad(format!(
                "d={} must be a positive multiple of heads={}",
                self.d, self.heads
            ));
        }
        if self.enc_layers == 0 || self.dec_layers == 0 {
            return bad("encoder and decoder need at least one block each".into());
        }
        if self.latent_tokens == 0 || self.bottleneck == 0 || self.ff == 0 {
            return bad("K, d_b and ff must be positive".into());
        }
        if self.seed_frames == 0 || self.seed_frames >= self.clip_frames {
            return bad(format!("M={} must be in [1, N={})", self.seed_frames, self.clip_frames));
        }
        if self.speakers == 0 || self.audio_dim == 0 || self.steps == 0 {
            return bad("S, D_a and T must be positive".into());
        }
        if !(0.0 < self.beta_start && self.beta_start <= self.beta_end && self.beta_end < 1.0) {
            return bad(format!(
                "need 0 < beta_start <= beta_end < 1, got {} and {}",
                self.beta_start, self.beta_end
            ));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.pairs() {
            s.push_str(&k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    fn pairs(&self) -> Vec<(String, String)> {
        vec![
            ("d".into(), self.d.to_string()),
            ("heads".into(), self.heads.to_string()),
            ("L_e".into(), self.enc_layers.to_string()),
            ("L_d".into(), self.dec_layers.to_string()),
            ("K".into(), self.latent_tokens.to_string()),
            ("d_b".into(), self.bottleneck.to_string()),
            ("ff".into(), self.ff.to_string()),
            ("T".into(), self.steps.to_string()),
            ("N".into(), self.clip_frames.to_string()),
            ("M".into(), self.seed_frames.to_string()),
            ("J".into(), self.layout.joints.to_string()),
            ("E".into(), self.layout.expressions.to_string()),
            ("D_a".into(), self.audio_dim.to_string()),
            ("S".into(), self.speakers.to_string()),
            ("variant".into(), self.variant.to_string()),
            ("audio_tokens".into(), self.audio_tokens.as_str().into()),
            ("beta_start".into(), format!("{:?}", self.beta_start)),
            ("beta_end".into(), format!("{:?}", self.beta_end)),
            ("variance".into(), self.variance.as_str().into()),
            ("init_seed".into(), self.init_seed.to_string()),
        ]
    }

    /// Applies `key=value` lines on top of `self`.
    pub fn apply_text(mut self, text: &str) -> Result<Self> {
        for (k, v) in parse_pairs(text)? {
            self.set(&k, &v)?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::default().apply_text(text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("{k}: cannot parse {v:?}")))
        }
        match key {
            "d" => self.d = num(key, value)?,
            "heads" => self.heads = num(key, value)?,
            "L_e" => self.enc_layers = num(key, value)?,
            "L_d" => self.dec_layers = num(key, value)?,
            "K" => self.latent_tokens = num(key, value)?,
            "d_b" => self.bottleneck = num(key, value)?,
            "ff" => self.ff = num(key, value)?,
            "T" => self.steps = num(key, value)?,
            "N" => self.clip_frames = num(key, value)?,
            "M" => self.seed_frames = num(key, value)?,
            "J" => self.layout.joints = num(key, value)?,
            "E" => self.layout.expressions = num(key, value)?,
            "D_a" => self.audio_dim = num(key, value)?,
            "S" => self.speakers = num(key, value)?,
            "variant" => self.variant = value.parse()?,
            "audio_tokens" => {
                self.audio_tokens = match value {
                    "pooled" => AudioTokens::Pooled,
                    "per_frame" => AudioTokens::PerFrame,
                    _ => return Err(Error::Config(format!("audio_tokens: unknown mode {value:?}"))),
                }
            }
            "beta_start" => self.beta_start = num(key, value)?,
            "beta_end" => self.beta_end = num(key, value)?,
            "variance" => self.variance = value.parse()?,
            "init_seed" => self.init_seed = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical text form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

/// Parses `key=value` lines, ignoring blanks and `#` comments.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}
