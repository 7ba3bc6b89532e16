//! Run configuration: one flat TOML file of `key = value` pairs. Every key
//! can be overridden by an environment variable named `ECX_` followed by the
//! key in upper case (`ECX_SEED=7`, `ECX_BACKEND=wire`). Override values are
//! read as TOML values when they parse as one and as plain strings
//! otherwise.
//!
//! Relative paths in the file are resolved against the file's directory.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::detect::DetectorConfig;
use crate::error::{Error, Result};
use crate::prompt::DEFAULT_INSTRUCTION;

pub const ENV_PREFIX: &str = "ECX_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    pub encoder: String,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub token_dim: usize,
    /// Optional `[embed_dim, token_dim]` container; seeded when absent.
    pub projection_weights: Option<PathBuf>,

    pub detection_head: String,
    /// Score used by the `constant` detection head.
    pub constant_head_score: f64,
    pub anchor_scales: Vec<f64>,
    pub anchor_stride: f64,
    pub score_threshold: f64,
    pub iou_threshold: f64,

    pub feature_h: usize,
    pub feature_w: usize,
    pub feature_c: usize,
    pub dda_kernel: Vec<f64>,
    /// Optional `[feature_h * feature_w * feature_c, 7]` container.
    pub classifier_weights: Option<PathBuf>,
    /// Optional `[7]` container.
    pub classifier_bias: Option<PathBuf>,

    pub backend: String,
    pub endpoint: String,
    pub timeout_ms: u64,
    pub instruction: String,

    pub embedder: String,
    pub dedup_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let det = DetectorConfig::default();
        RunConfig {
            seed: 0,
            encoder: "patch-stats".into(),
            patch_size: 16,
            embed_dim: 8,
            token_dim: 8,
            projection_weights: None,
            detection_head: "center-cell".into(),
            constant_head_score: 0.9,
            anchor_scales: det.anchor_scales,
            anchor_stride: det.anchor_stride,
            score_threshold: det.score_threshold,
            iou_threshold: det.iou_threshold,
            feature_h: 7,
            feature_w: 7,
            feature_c: 4,
            dda_kernel: vec![0.25, 0.5, 0.25],
            classifier_weights: None,
            classifier_bias: None,
            backend: "echo".into(),
            endpoint: String::new(),
            timeout_ms: 30_000,
            instruction: DEFAULT_INSTRUCTION.into(),
            embedder: "one-hot".into(),
            dedup_threshold: crate::dataset::DEFAULT_DEDUP_THRESHOLD,
        }
    }
}

fn env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl RunConfig {
    /// Parses configuration text and applies overrides. `base_dir` anchors
    /// relative paths.
    pub fn parse<I, K, V>(text: &str, env: I, base_dir: Option<&Path>) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::input(format!("config: {e}")))?;
        for (k, v) in env {
            if let Some(key) = k.as_ref().strip_prefix(ENV_PREFIX) {
                table.insert(key.to_ascii_lowercase(), env_value(v.as_ref()));
            }
        }
        // Integers are accepted where floats are expected.
        for key in ["constant_head_score", "anchor_stride", "score_threshold", "iou_threshold", "dedup_threshold"] {
            if let Some(toml::Value::Integer(i)) = table.get(key) {
                let f = *i as f64;
                table.insert(key.into(), toml::Value::Float(f));
            }
        }
        for key in ["anchor_scales", "dda_kernel"] {
            if let Some(toml::Value::Array(items)) = table.get_mut(key) {
                for item in items.iter_mut() {
                    if let toml::Value::Integer(i) = item {
                        *item = toml::Value::Float(*i as f64);
                    }
                }
            }
        }
        let mut cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::input(format!("config: {}", e.message())))?;
        if let Some(dir) = base_dir {
            for p in [&mut cfg.projection_weights, &mut cfg.classifier_weights, &mut cfg.classifier_bias]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads from an optional file plus the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let (text, dir) = match path {
            Some(p) => (std::fs::read_to_string(p)?, p.parent().map(Path::to_path_buf)),
            None => (String::new(), None),
        };
        RunConfig::parse(&text, std::env::vars(), dir.as_deref())
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            anchor_scales: self.anchor_scales.clone(),
            anchor_stride: self.anchor_stride,
            score_threshold: self.score_threshold,
            iou_threshold: self.iou_threshold,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder != "patch-stats" {
            return Err(Error::input(format!("unknown encoder {:?}", self.encoder)));
        }
        if !["center-cell", "constant"].contains(&self.detection_head.as_str()) {
            return Err(Error::input(format!("unknown detection head {:?}", self.detection_head)));
        }
        if !["echo", "canned", "empty", "wire"].contains(&self.backend.as_str()) {
            return Err(Error::input(format!("unknown backend {:?}", self.backend)));
        }
        if self.backend == "wire" && self.endpoint.is_empty() {
            return Err(Error::input("backend \"wire\" needs an endpoint"));
        }
        if self.embedder != "one-hot" {
            return Err(Error::input(format!("unknown embedder {:?}", self.embedder)));
        }
        for (name, v) in [
            ("patch_size", self.patch_size),
            ("embed_dim", self.embed_dim),
            ("token_dim", self.token_dim),
            ("feature_h", self.feature_h),
            ("feature_w", self.feature_w),
            ("feature_c", self.feature_c),
        ] {
            if v == 0 {
                return Err(Error::input(format!("{name} must be positive")));
            }
        }
        if self.anchor_stride.fract() != 0.0 {
            return Err(Error::input("anchor_stride must be a whole number of pixels"));
        }
        self.detector().validate()?;
        if !(0.0..=1.0).contains(&self.constant_head_score) {
            return Err(Error::input("constant_head_score must be in [0, 1]"));
        }
        if self.dda_kernel.len().is_multiple_of(2) || self.dda_kernel.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("dda_kernel must have odd length and finite weights"));
        }
        if self.timeout_ms == 0 {
            return Err(Error::input("timeout_ms must be positive"));
        }
        if self.instruction.is_empty() {
            return Err(Error::input("instruction must be non-empty"));
        }
        if !(self.dedup_threshold.is_finite() && self.dedup_threshold >= 0.0) {
            return Err(Error::input("dedup_threshold must be non-negative"));
        }
        Ok(())
    }
}
