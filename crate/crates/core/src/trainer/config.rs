use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{ContextualFormula, ContextualParams, LossWeights};
use crate::nets::{PatchGanConfig, UNetConfig};
use crate::synthdata::AugmentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ContextualDirections {
    /// Only `(ego, G₁(exo))`.
    EgoOnly,
    /// Mean of the ego and exo directions.
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub net: UNetConfig,
    pub disc: PatchGanConfig,
    pub contextual_formula: ContextualFormula,
    pub contextual_directions: ContextualDirections,
    /// Appends the target view's segmentation as one input channel.
    pub seg_conditioning: bool,
    /// Steps between intermediate checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub psi_seed: u64,
    /// Stops early after this many steps.
    pub max_steps: Option<usize>,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            weights: LossWeights::default(),
            epochs: 35,
            batch_size: 4,
            learning_rate: 2e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            net: UNetConfig::default(),
            disc: PatchGanConfig::default(),
            contextual_formula: ContextualFormula::Standard,
            contextual_directions: ContextualDirections::Both,
            seg_conditioning: false,
            checkpoint_every: 0,
            psi_seed: 7,
            max_steps: None,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Checks ranges and fills `net.conditioning_channels` from
    /// `seg_conditioning`.
    pub fn effective(&self) -> Result<Self> {
        let mut c = self.clone();
        let want = c.seg_conditioning as usize;
        match (c.net.conditioning_channels, want) {
            (0, 1) => c.net.conditioning_channels = 1,
            (have, want) if have != want => {
                return Err(Error::Config(format!(
                    "net.conditioning_channels = {have} disagrees with seg_conditioning = {}",
                    c.seg_conditioning
                )))
            }
            _ => {}
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        for (key, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{key} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(Error::Config(format!("adam_eps must be positive, got {}", self.adam_eps)));
        }
        if self.max_steps == Some(0) {
            return Err(Error::Config("max_steps must be positive when set".into()));
        }
        if self.net.conditioning_channels != self.seg_conditioning as usize {
            return Err(Error::Config(format!(
                "net.conditioning_channels must be {} when seg_conditioning is {}",
                self.seg_conditioning as usize, self.seg_conditioning
            )));
        }
        self.weights.validate()?;
        self.net.validate()?;
        self.disc.validate()
    }

    pub fn contextual_params(&self) -> ContextualParams {
        ContextualParams { zeta: self.weights.zeta, bandwidth: self.weights.h, formula: self.contextual_formula }
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper { lr: self.learning_rate, beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}
