//! Run configuration: loss weights, pyramid geometry, texture layout,
//! optimizer schedule and evaluation thresholds.
//!
//! Configs are flat TOML key/value files; every key has a default so partial
//! files work. [`Config::validate`] enforces the structural invariants and
//! [`Config::content_hash`] names run directories.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Which pretrained feature extractor backs the losses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureBackend {
    /// Deterministic small CNN with weights derived from `seed`. Used by the
    /// test suite; needs no weight files.
    Test,
    /// 16-layer VGG-style classifier loaded from `weights_path`.
    Vgg16,
    /// 19-layer VGG-style classifier loaded from `weights_path`.
    Vgg19,
}

/// Normal-to-view angle source: per-pixel ray or the camera forward axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewDirection {
    Ray,
    Axis,
}

/// Sign convention for the depth blend weight (see `blend` module docs).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendConvention {
    /// Weight toward the nearest layer is 1 when R equals its height.
    NearestDominant,
    /// Literal reading where the nearest-layer factor is |R-L1|/|L1-L2|.
    Strict,
}

/// Ablation mode selected on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// Complete method: render pyramid, angle filter, gradient weights.
    Full,
    /// Single resolution with the angle filter and angle gradient weight.
    Angle,
    /// Single resolution, no angle filter, unit angle weight.
    TwoD,
}

impl AblationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::Angle => "angle",
            AblationMode::TwoD => "2d",
        }
    }

    pub fn parse(s: &str) -> Result<AblationMode> {
        match s {
            "full" => Ok(AblationMode::Full),
            "angle" => Ok(AblationMode::Angle),
            "2d" => Ok(AblationMode::TwoD),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected full, angle or 2d)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    // Loss weights.
    pub lambda_content: f64,
    pub lambda_style: f64,
    pub lambda_reg: f64,

    // Depth-level render parts.
    pub theta_min: f64,
    pub theta_d: f64,
    pub theta_a: f64,
    pub theta_l: usize,
    pub pyramid_heights: Vec<usize>,

    // Texture layout.
    pub texture_resolution: usize,
    pub texture_levels: usize,
    pub init_color: [f64; 3],

    // Optimizer schedule.
    pub epochs: usize,
    pub frame_repeats: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub checkpoint_every: usize,

    // Style image pyramid.
    pub style_fine_min: usize,
    pub style_coarse_up: usize,

    // Feature extraction.
    pub backend: FeatureBackend,
    pub weights_path: String,
    pub tiny_part_floor: usize,

    // Geometry conventions.
    pub view_direction: ViewDirection,
    pub blend_convention: BlendConvention,
    pub render_background: [f64; 3],

    // Input handling.
    pub depth_unit: f64,
    pub blur_threshold: f64,

    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            lambda_content: 70.0,
            lambda_style: 1e-4,
            lambda_reg: 5000.0,
            theta_min: 32.0,
            theta_d: 0.25,
            theta_a: 30.0,
            theta_l: 4,
            pyramid_heights: vec![256, 432, 608, 784],
            texture_resolution: 4096,
            texture_levels: 4,
            init_color: [0.5, 0.5, 0.5],
            epochs: 7,
            frame_repeats: 10,
            lr0: 1.0,
            lr_decay: 0.1,
            lr_decay_every: 3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            checkpoint_every: 0,
            style_fine_min: 256,
            style_coarse_up: 2,
            backend: FeatureBackend::Vgg19,
            weights_path: String::new(),
            tiny_part_floor: 16,
            view_direction: ViewDirection::Ray,
            blend_convention: BlendConvention::NearestDominant,
            render_background: [0.0, 0.0, 0.0],
            depth_unit: 0.001,
            blur_threshold: 0.0,
            seed: 0,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Config =
            toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_l == 0 {
            return Err(Error::Config("theta_l must be at least 1".into()));
        }
        if self.theta_l != self.pyramid_heights.len() {
            return Err(Error::Config(format!(
                "theta_l = {} but pyramid_heights has {} entries",
                self.theta_l,
                self.pyramid_heights.len()
            )));
        }
        if !self.pyramid_heights.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(
                "pyramid_heights must be strictly increasing".into(),
            ));
        }
        if self.pyramid_heights.iter().any(|&h| h == 0) {
            return Err(Error::Config("pyramid heights must be positive".into()));
        }
        if !(self.theta_d > 0.0) {
            return Err(Error::Config("theta_d must be positive".into()));
        }
        if !(self.theta_a > 0.0 && self.theta_a < 90.0) {
            return Err(Error::Config(
                "theta_a must lie strictly between 0 and 90 degrees".into(),
            ));
        }
        if self.texture_levels == 0 {
            return Err(Error::Config("texture_levels must be at least 1".into()));
        }
        let div = 1usize << (self.texture_levels - 1);
        if self.texture_resolution == 0 || self.texture_resolution % div != 0 {
            return Err(Error::Config(format!(
                "texture_resolution {} is not divisible by 2^(texture_levels-1) = {}",
                self.texture_resolution, div
            )));
        }
        if !(self.depth_unit > 0.0) {
            return Err(Error::Config("depth_unit must be positive".into()));
        }
        if self.blur_threshold < 0.0 {
            return Err(Error::Config("blur_threshold must be >= 0".into()));
        }
        Ok(())
    }

    /// Heights after applying an ablation mode: single-resolution modes keep
    /// only the largest configured pyramid height.
    pub fn effective_heights(&self, mode: AblationMode) -> Vec<usize> {
        match mode {
            AblationMode::Full => self.pyramid_heights.clone(),
            AblationMode::Angle | AblationMode::TwoD => {
                vec![*self.pyramid_heights.last().expect("validated non-empty")]
            }
        }
    }

    /// Angle threshold after the mode: `2d` disables the filter (90 degrees
    /// keeps every front-facing pixel).
    pub fn effective_theta_a(&self, mode: AblationMode) -> f64 {
        match mode {
            AblationMode::TwoD => 90.0,
            _ => self.theta_a,
        }
    }

    /// Whether the cosine gradient weight is applied in this mode.
    pub fn uses_angle_weight(&self, mode: AblationMode) -> bool {
        mode != AblationMode::TwoD
    }

    /// Hex digest identifying the config contents.
    pub fn content_hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
