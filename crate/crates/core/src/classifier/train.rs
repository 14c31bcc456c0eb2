//! Training loop with seeded shuffling, per-batch noise augmentation, Adam
//! updates, and best-on-validation checkpointing; plus evaluation metrics.

use ndarray::{Array3, Array4, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::network::{forward, init_params, loss_and_grad, predict, Mode, Params};
use super::{ClassifierError, NetworkSpec};
use crate::rng::{derive_seed_indexed, indexed_rng};
use crate::types::ACTION_CLASS_COUNT;

/// Featurized clips ready for the network.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub maps: Vec<Array3<f32>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn push(&mut self, map: Array3<f32>, label: usize) {
        self.maps.push(map);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub epochs: usize,
    /// Std of the white noise added to training inputs.
    pub sigma_aug: f64,
    pub seed: u64,
    /// Stop once validation accuracy reaches this value, keeping the best
    /// parameters seen.
    pub stop_at_val_accuracy: Option<f64>,
    /// Print one progress line per epoch to stderr.
    pub verbose: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 70,
            dropout: 0.3,
            epochs: 30,
            sigma_aug: 0.01,
            seed: 0,
            stop_at_val_accuracy: None,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// Evaluation summary in fixed label order.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub overall_accuracy: f64,
    pub per_class_accuracy: [f64; ACTION_CLASS_COUNT],
    pub confusion: [[u64; ACTION_CLASS_COUNT]; ACTION_CLASS_COUNT],
    pub loss_history: Vec<f64>,
}

fn assemble_batch(dataset: &Dataset, indices: &[usize]) -> (Array4<f32>, Vec<usize>) {
    let dims = dataset.maps[indices[0]].dim();
    let mut batch = Array4::zeros((indices.len(), dims.0, dims.1, dims.2));
    let mut labels = Vec::with_capacity(indices.len());
    for (slot, &i) in indices.iter().enumerate() {
        batch.index_axis_mut(Axis(0), slot).assign(&dataset.maps[i]);
        labels.push(dataset.labels[i]);
    }
    (batch, labels)
}

fn augment_batch(batch: &mut Array4<f32>, sigma: f64, seed: u64) {
    if sigma == 0.0 {
        return;
    }
    let mut rng = indexed_rng(seed, "batch-augment", 0);
    let normal = Normal::new(0.0f64, sigma).expect("valid sigma");
    for v in batch.iter_mut() {
        *v = (f64::from(*v) + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32;
    }
}

/// Re-estimate batch-norm running statistics from clean train-mode passes.
///
/// The inputs the network normalizes are sparse, so per-layer statistics sit
/// far from their (0, 1) initialization and drift with augmentation noise
/// and dropout masks. Averaging batch statistics over dropout-free,
/// augmentation-free batches gives eval mode statistics that actually match
/// the activations it sees.
pub fn calibrate_running_stats(
    params: &mut Params<f32>,
    spec: &NetworkSpec,
    dataset: &Dataset,
    batch_size: usize,
    max_batches: usize,
    seed: u64,
) -> Result<(), ClassifierError> {
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut crate::rng::stage_rng(seed, "bn-calibration"));
    let full_chunks: Vec<&[usize]> = order
        .chunks(batch_size)
        .filter(|c| c.len() == batch_size)
        .take(max_batches)
        .collect();
    let chunks: Vec<&[usize]> = if full_chunks.is_empty() {
        vec![&order[..]]
    } else {
        full_chunks
    };

    let mut mean_acc: Vec<ndarray::Array1<f32>> = params
        .bn
        .iter()
        .map(|bn| ndarray::Array1::zeros(bn.running_mean.len()))
        .collect();
    let mut var_acc = mean_acc.clone();
    for chunk in &chunks {
        let (batch, _) = assemble_batch(dataset, chunk);
        let (_, cache) = forward(params, spec, &batch, Mode::Train, 0.0, 0)?;
        for (layer, (mean, var)) in cache.batch_stats().into_iter().enumerate() {
            mean_acc[layer] += &mean;
            var_acc[layer] += &var;
        }
    }
    let count = chunks.len() as f32;
    for (layer, bn) in params.bn.iter_mut().enumerate() {
        bn.running_mean = mean_acc[layer].mapv(|v| v / count);
        bn.running_var = var_acc[layer].mapv(|v| v / count);
    }
    Ok(())
}

/// Prediction accuracy in eval mode, batched for throughput.
pub fn accuracy(params: &Params<f32>, spec: &NetworkSpec, dataset: &Dataset) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(64) {
        let (batch, labels) = assemble_batch(dataset, chunk);
        let (logits, _) =
            forward(params, spec, &batch, Mode::Eval, 0.0, 0).expect("dataset shape was validated");
        for (pred, actual) in predict(&logits).into_iter().zip(labels) {
            if pred == actual {
                correct += 1;
            }
        }
    }
    correct as f64 / dataset.len() as f64
}

fn validate_dataset(spec: &NetworkSpec, dataset: &Dataset) -> Result<(), ClassifierError> {
    for map in &dataset.maps {
        let got = map.dim();
        let expected = (spec.input_channels, spec.input_height, spec.input_width);
        if got != expected {
            return Err(ClassifierError::ShapeMismatch { expected, got });
        }
    }
    if let Some(&bad) = dataset.labels.iter().find(|l| **l >= spec.classes) {
        return Err(ClassifierError::LabelOutOfRange(bad));
    }
    Ok(())
}

/// Train the network, returning the parameters with the best validation
/// accuracy and the per-epoch history.
pub fn train(
    train_set: &Dataset,
    val_set: &Dataset,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
) -> Result<(Params<f32>, Vec<EpochStats>), ClassifierError> {
    if train_set.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    assert!(cfg.batch_size > 0, "batch size must be positive");
    assert!(
        (0.0..1.0).contains(&cfg.dropout),
        "dropout must be in [0, 1)"
    );
    validate_dataset(spec, train_set)?;
    validate_dataset(spec, val_set)?;

    let mut params: Params<f32> = init_params(spec, crate::rng::derive_seed(cfg.seed, "init"));
    let mut state = AdamState::new(&params);
    let adam_cfg = AdamConfig::default();
    let mut best_params = params.clone();
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut history = Vec::new();

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut indexed_rng(cfg.seed, "shuffle", epoch as u64));

        let mut loss_sum = 0.0f64;
        let mut batches = 0usize;
        for (batch_index, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (mut batch, labels) = assemble_batch(train_set, chunk);
            let step_seed =
                derive_seed_indexed(cfg.seed, "step", (epoch * 1_000_000 + batch_index) as u64);
            augment_batch(&mut batch, cfg.sigma_aug, step_seed);
            let (loss, grads, _) =
                loss_and_grad(&params, spec, &batch, &labels, cfg.dropout, step_seed)?;
            adam_step(
                &mut params,
                &grads,
                &mut state,
                cfg.learning_rate,
                &adam_cfg,
            );
            loss_sum += f64::from(loss);
            batches += 1;
        }

        // eval mode must see statistics of clean, dropout-free activations
        calibrate_running_stats(
            &mut params,
            spec,
            train_set,
            cfg.batch_size,
            8,
            crate::rng::derive_seed(cfg.seed, "calibration"),
        )?;
        let val_accuracy = accuracy(&params, spec, val_set);
        if cfg.verbose {
            eprintln!(
                "epoch {}: train loss {:.4}, val accuracy {:.4}",
                epoch,
                loss_sum / batches.max(1) as f64,
                val_accuracy
            );
        }
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            val_accuracy,
        });
        if val_accuracy > best_accuracy {
            best_accuracy = val_accuracy;
            best_params = params.clone();
        }
        if cfg
            .stop_at_val_accuracy
            .is_some_and(|target| best_accuracy >= target)
        {
            break;
        }
    }
    Ok((best_params, history))
}

/// Confusion matrix and accuracies of argmax predictions over a dataset.
pub fn evaluate(params: &Params<f32>, spec: &NetworkSpec, dataset: &Dataset) -> Metrics {
    let mut confusion = [[0u64; ACTION_CLASS_COUNT]; ACTION_CLASS_COUNT];
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(64) {
        let (batch, labels) = assemble_batch(dataset, chunk);
        let (logits, _) =
            forward(params, spec, &batch, Mode::Eval, 0.0, 0).expect("dataset shape was validated");
        for (pred, actual) in predict(&logits).into_iter().zip(labels) {
            confusion[actual][pred] += 1;
        }
    }
    let mut correct = 0u64;
    let mut per_class = [0.0f64; ACTION_CLASS_COUNT];
    for (label, row) in confusion.iter().enumerate() {
        let support: u64 = row.iter().sum();
        correct += row[label];
        per_class[label] = if support == 0 {
            0.0
        } else {
            row[label] as f64 / support as f64
        };
    }
    let total = dataset.len() as f64;
    Metrics {
        overall_accuracy: if dataset.is_empty() {
            0.0
        } else {
            correct as f64 / total
        },
        per_class_accuracy: per_class,
        confusion,
        loss_history: Vec::new(),
    }
}
