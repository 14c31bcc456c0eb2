//! From-scratch convolutional classifier over pose-evolution maps.
//!
//! Two blocks of two 3x3 convolutions (stride 2 then 1; 128 then 256
//! filters), each convolution followed by rectification, batch
//! normalization, and dropout; global average pooling; one fully connected
//! layer to the five class logits under softmax cross-entropy. Forward and
//! backward passes are written out by hand and checked against central
//! finite differences.

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
mod network;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use layers::Real;
pub use network::{
    forward, init_params, loss_and_grad, predict, update_running_stats, Cache, Gradients, Mode,
    Params,
};
pub use train::{
    accuracy, calibrate_running_stats, evaluate, train, Dataset, EpochStats, Metrics, TrainConfig,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("input shape {got:?} does not match spec {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("label {0} out of range")]
    LabelOutOfRange(usize),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Architecture hyperparameters; the layer order itself is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NetworkSpec {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub block1_filters: usize,
    pub block2_filters: usize,
    pub classes: usize,
}

impl NetworkSpec {
    pub fn new(input_channels: usize, input_height: usize, input_width: usize) -> Self {
        Self {
            input_channels,
            input_height,
            input_width,
            block1_filters: 128,
            block2_filters: 256,
            classes: 5,
        }
    }

    /// Small configuration used by the finite-difference gradient check.
    pub fn tiny() -> Self {
        Self {
            input_channels: 6,
            input_height: 8,
            input_width: 8,
            block1_filters: 2,
            block2_filters: 2,
            classes: 3,
        }
    }

    /// Per-convolution strides, fixed by the architecture.
    pub fn strides() -> [usize; 4] {
        [2, 1, 2, 1]
    }

    /// Filter count of each convolution.
    pub fn filters(&self) -> [usize; 4] {
        [
            self.block1_filters,
            self.block1_filters,
            self.block2_filters,
            self.block2_filters,
        ]
    }

    /// Input channel count of each convolution.
    pub fn layer_inputs(&self) -> [usize; 4] {
        [
            self.input_channels,
            self.block1_filters,
            self.block1_filters,
            self.block2_filters,
        ]
    }

    /// Spatial size after each convolution; 3x3 kernels with 1-pixel zero
    /// padding give `ceil(size / stride)`.
    pub fn spatial_sizes(&self) -> [(usize, usize); 4] {
        let mut sizes = [(0, 0); 4];
        let (mut h, mut w) = (self.input_height, self.input_width);
        for (i, stride) in Self::strides().iter().enumerate() {
            h = h.div_ceil(*stride);
            w = w.div_ceil(*stride);
            sizes[i] = (h, w);
        }
        sizes
    }

    /// Number of trainable parameters (running statistics excluded).
    pub fn parameter_count(&self) -> usize {
        let mut count = 0;
        for ((filters, inputs), _) in self
            .filters()
            .iter()
            .zip(self.layer_inputs())
            .zip(Self::strides())
        {
            count += filters * inputs * 9; // conv weight
            count += filters; // conv bias
            count += 2 * filters; // batch-norm gamma and beta
        }
        count += self.classes * self.block2_filters + self.classes; // fully connected
        count
    }
}
