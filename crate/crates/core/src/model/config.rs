use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::mixture::DEFAULT_BINS;
use crate::numerics::AdamWConfig;
use crate::ordering::{OrderingConfig, Strategy};

/// Continuous attributes per object: translation (3), size (3), yaw (1).
pub const GEOMETRY_DIMS: usize = 7;

/// Architecture and denoising settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub decoder_layers: usize,
    pub decoder_heads: usize,
    pub hidden: usize,
    pub ff_mult: usize,
    pub layout_resolution: usize,
    pub layout_patch: usize,
    pub layout_layers: usize,
    pub layout_heads: usize,
    pub layout_dim: usize,
    pub class_dim: usize,
    /// Frequencies per scalar in the sinusoidal attribute encoding.
    pub encoding_frequencies: usize,
    pub geometry_hidden: usize,
    pub mixture_components: usize,
    pub bins: usize,
    pub dropout: f64,
    pub mask_rate: f64,
    pub noise_rate: f64,
    pub max_len: usize,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            decoder_layers: 6,
            decoder_heads: 6,
            hidden: 192,
            ff_mult: 4,
            layout_resolution: 64,
            layout_patch: 8,
            layout_layers: 4,
            layout_heads: 3,
            layout_dim: 192,
            class_dim: 64,
            encoding_frequencies: 32,
            geometry_hidden: 256,
            mixture_components: 10,
            bins: DEFAULT_BINS,
            dropout: 0.1,
            mask_rate: 0.05,
            noise_rate: 0.05,
            max_len: 32,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    /// Small network that trains in minutes on one CPU core. Token layout,
    /// mixture heads, and sequence length match the default.
    pub fn desk() -> Self {
        Self {
            decoder_layers: 2,
            decoder_heads: 4,
            hidden: 64,
            ff_mult: 4,
            layout_layers: 1,
            layout_heads: 2,
            layout_dim: 64,
            geometry_hidden: 128,
            ..Self::default()
        }
    }

    /// Width of an object token.
    pub fn token_dim(&self) -> usize {
        self.class_dim + GEOMETRY_DIMS * 2 * self.encoding_frequencies
    }

    pub fn num_patches(&self) -> usize {
        let side = self.layout_resolution / self.layout_patch;
        side * side
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.hidden == 0 || self.decoder_heads == 0 || self.hidden % self.decoder_heads != 0 {
            return bad("hidden must be a positive multiple of decoder_heads");
        }
        if self.layout_dim == 0 || self.layout_heads == 0 || self.layout_dim % self.layout_heads != 0 {
            return bad("layout_dim must be a positive multiple of layout_heads");
        }
        if self.layout_patch == 0 || self.layout_resolution % self.layout_patch != 0 {
            return bad("layout_resolution must be a multiple of layout_patch");
        }
        if self.mixture_components == 0 || self.bins < 2 || self.max_len == 0 {
            return bad("mixture_components, bins, and max_len must be positive");
        }
        for (name, v) in [("dropout", self.dropout), ("mask_rate", self.mask_rate), ("noise_rate", self.noise_rate)] {
            if !(0.0..=1.0).contains(&v) || (name == "dropout" && v >= 1.0) {
                return Err(Error::Config(format!("{name} out of range: {v}")));
            }
        }
        Ok(())
    }
}

/// Optimization and data-pipeline settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub strategy: Strategy,
    pub ordering: OrderingConfig,
    /// Rotate each training scene by a uniform random yaw every epoch.
    pub rotation_augmentation: bool,
    /// Validation interval in epochs.
    pub eval_every: usize,
    pub seed: u64,
    /// Stop after this many optimizer steps.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            optimizer: AdamWConfig::default(),
            strategy: Strategy::ForestBfs,
            ordering: OrderingConfig::default(),
            rotation_augmentation: true,
            eval_every: 10,
            seed: 0,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config("epochs, batch_size, and eval_every must be positive".into()));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}
