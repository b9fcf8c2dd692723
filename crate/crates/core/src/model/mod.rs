//! Per-track emission network, confidence-weighted track pooling, Adam, and
//! the self-supervised training loop.

mod adam;
pub mod checkpoint;
mod pool;
mod tcn;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub(crate) use pool::to_distributions;
pub use pool::{pool_tracks, softmax_rows};
pub use tcn::{
    encode_track, track_forward, ConvBlock, EmissionModel, ModelConfig, INPUT_CHANNELS, KERNEL_SIZE,
};
pub(crate) use train::derive_seed;
pub use train::{
    loss_and_gradients, predict, predict_matrix, train, train_from, SongLoss, TrainReport,
};

/// A set of flat parameter tensors in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Weight of the inter-track consistency term.
    pub lambda_consistency: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Songs per gradient step.
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            epochs: 10,
            lambda_consistency: 1.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && self.adam_beta1 > 0.0
            && self.adam_beta1 < 1.0
            && self.adam_beta2 > 0.0
            && self.adam_beta2 < 1.0
            && self.adam_eps > 0.0
            && self.lambda_consistency >= 0.0
            && self.batch > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid training config {self:?}")))
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}
