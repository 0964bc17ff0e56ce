//! Run configuration: every hyperparameter the pipeline needs, with
//! desk-scale defaults and a mandatory seed.
//!
//! Configs load from JSON; unknown keys are rejected by name so typos never
//! silently fall back to defaults. Every training/eval run echoes its fully
//! resolved config next to its outputs for reproducibility.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::color::ColorSpaceTag;
use crate::nn::{AdamParams, Precision};
use crate::shape_stage::PriorKind;
use crate::{Error, Result};

/// All hyperparameters for both training stages and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// RNG seed; mandatory so every run is reproducible by construction.
    pub seed: u64,

    /// Latent dimension D shared by both stages.
    #[serde(default = "d_latent_dim")]
    pub latent_dim: usize,
    /// Per-point encoder MLP widths (hidden layers; the last entry is the
    /// pooled feature width).
    #[serde(default = "d_encoder_widths")]
    pub encoder_widths: Vec<usize>,
    /// Hidden widths of the hypernetwork head mapping a latent to the target
    /// network's flat weights.
    #[serde(default = "d_weight_head_widths")]
    pub weight_head_widths: Vec<usize>,
    /// Hidden widths of the shape target network (3 -> ... -> 3).
    #[serde(default = "d_target_widths")]
    pub target_widths: Vec<usize>,
    /// Hidden widths of the color target network (3 -> ... -> 3, sigmoid).
    #[serde(default = "d_color_widths")]
    pub color_widths: Vec<usize>,

    /// KL weight in the stage-1 loss.
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    /// KL weight in the stage-2 loss; 0 disables the variational term.
    #[serde(default)]
    pub lambda2: f64,
    /// Neighbor count for color alignment targets.
    #[serde(default = "d_k")]
    pub k: usize,
    /// Prior sample size per training step and default reconstruction size.
    #[serde(default = "d_recon_points")]
    pub recon_points: usize,
    /// Optimization steps per training run.
    #[serde(default = "d_steps")]
    pub steps: usize,

    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default = "d_beta2")]
    pub beta2: f64,
    #[serde(default = "d_adam_eps")]
    pub adam_eps: f64,

    /// Prior distribution the target networks consume.
    #[serde(default)]
    pub prior: PriorKind,
    /// Floating-point width for network arithmetic.
    #[serde(default)]
    pub precision: Precision,
    /// Color space used for stage-2 training (evaluation always reports
    /// 0-255 RGB).
    #[serde(default = "d_color_space")]
    pub color_space: ColorSpaceTag,
    /// Single-stage baseline: the shape target network emits 6 channels and
    /// trains with Chamfer in R^6 over positions and colors jointly.
    #[serde(default)]
    pub baseline_mode: bool,
}

fn d_latent_dim() -> usize {
    32
}
fn d_encoder_widths() -> Vec<usize> {
    vec![64, 64]
}
fn d_weight_head_widths() -> Vec<usize> {
    vec![64]
}
fn d_target_widths() -> Vec<usize> {
    vec![32, 32]
}
fn d_color_widths() -> Vec<usize> {
    vec![32, 32]
}
fn d_lambda() -> f64 {
    0.001
}
fn d_k() -> usize {
    1
}
fn d_recon_points() -> usize {
    256
}
fn d_steps() -> usize {
    2000
}
fn d_lr() -> f64 {
    1e-3
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_adam_eps() -> f64 {
    1e-8
}
fn d_color_space() -> ColorSpaceTag {
    ColorSpaceTag::Lab
}

impl TrainConfig {
    /// Defaults with an explicit seed.
    pub fn with_seed(seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({ "seed": seed })).unwrap()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::InvalidConfig { key, message } => Error::InvalidConfig {
                key,
                message: format!("{message} (in {})", path.display()),
            },
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: TrainConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig {
                key: extract_key(&e.to_string()),
                message: e.to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive_counts = [
            ("latent_dim", self.latent_dim),
            ("k", self.k),
            ("recon_points", self.recon_points),
            ("steps", self.steps),
        ];
        for (key, value) in positive_counts {
            if value == 0 {
                return Err(Error::InvalidConfig {
                    key: key.into(),
                    message: "must be positive".into(),
                });
            }
        }
        let width_lists = [
            ("encoder_widths", &self.encoder_widths),
            ("weight_head_widths", &self.weight_head_widths),
            ("target_widths", &self.target_widths),
            ("color_widths", &self.color_widths),
        ];
        for (key, widths) in width_lists {
            if widths.is_empty() || widths.contains(&0) {
                return Err(Error::InvalidConfig {
                    key: key.into(),
                    message: format!("widths must be nonempty and positive, got {widths:?}"),
                });
            }
        }
        if self.lambda < 0.0 || self.lambda2 < 0.0 {
            return Err(Error::InvalidConfig {
                key: "lambda".into(),
                message: "KL weights must be nonnegative".into(),
            });
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::InvalidConfig {
                key: "lr".into(),
                message: format!("learning rate must be positive, got {}", self.lr),
            });
        }
        for (key, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::InvalidConfig {
                    key: key.into(),
                    message: format!("must be in [0, 1), got {beta}"),
                });
            }
        }
        if !self.adam_eps.is_finite() || self.adam_eps <= 0.0 {
            return Err(Error::InvalidConfig {
                key: "adam_eps".into(),
                message: "must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn adam_params(&self) -> AdamParams {
        AdamParams {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

/// Best-effort extraction of the offending key from a serde error message
/// (e.g. "unknown field `foo`" or "missing field `seed`").
fn extract_key(message: &str) -> String {
    if let Some(start) = message.find('`') {
        if let Some(len) = message[start + 1..].find('`') {
            return message[start + 1..start + 1 + len].to_string();
        }
    }
    "<config>".to_string()
}
