//! Parameter container, initialization, and the full forward/backward pass.

use ndarray::{Array1, Array2, Array4, Axis};
use rand_distr::{Distribution, Normal};

use super::layers::{
    batchnorm_backward, batchnorm_forward_eval, batchnorm_forward_train, conv_backward,
    conv_forward, dropout_mask, fc_backward, fc_forward, global_average_pool,
    global_average_pool_backward, real, relu_backward, relu_forward, softmax_cross_entropy,
    BnCache, Real,
};
use super::{ClassifierError, NetworkSpec};
use crate::rng::indexed_rng;

/// One convolution's trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<F> {
    pub weight: Array4<F>,
    pub bias: Array1<F>,
}

/// One batch-norm layer's tensors; the running statistics follow training
/// but are not gradient-updated.
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams<F> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params<F> {
    pub conv: Vec<ConvParams<F>>,
    pub bn: Vec<BnParams<F>>,
    pub fc_weight: Array2<F>,
    pub fc_bias: Array1<F>,
}

impl<F: Real> Params<F> {
    pub fn trainable_count(&self) -> usize {
        self.conv
            .iter()
            .map(|c| c.weight.len() + c.bias.len())
            .sum::<usize>()
            + self
                .bn
                .iter()
                .map(|b| b.gamma.len() + b.beta.len())
                .sum::<usize>()
            + self.fc_weight.len()
            + self.fc_bias.len()
    }
}

/// Gradients for every trainable tensor, shaped like [`Params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub conv_weight: Vec<Array4<F>>,
    pub conv_bias: Vec<Array1<F>>,
    pub bn_gamma: Vec<Array1<F>>,
    pub bn_beta: Vec<Array1<F>>,
    pub fc_weight: Array2<F>,
    pub fc_bias: Array1<F>,
}

impl<F: Real> Gradients<F> {
    pub fn zeros_like(params: &Params<F>) -> Self {
        Self {
            conv_weight: params
                .conv
                .iter()
                .map(|c| Array4::zeros(c.weight.dim()))
                .collect(),
            conv_bias: params
                .conv
                .iter()
                .map(|c| Array1::zeros(c.bias.len()))
                .collect(),
            bn_gamma: params
                .bn
                .iter()
                .map(|b| Array1::zeros(b.gamma.len()))
                .collect(),
            bn_beta: params
                .bn
                .iter()
                .map(|b| Array1::zeros(b.beta.len()))
                .collect(),
            fc_weight: Array2::zeros(params.fc_weight.dim()),
            fc_bias: Array1::zeros(params.fc_bias.len()),
        }
    }
}

/// Fan-in-scaled zero-mean initialization; biases zero, batch-norm scale
/// one and shift zero. Identical seeds give bitwise-identical parameters.
pub fn init_params<F: Real>(spec: &NetworkSpec, seed: u64) -> Params<F> {
    let normal = Normal::new(0.0f64, 1.0).expect("unit normal");
    let filters = spec.filters();
    let inputs = spec.layer_inputs();
    let mut conv = Vec::with_capacity(4);
    let mut bn = Vec::with_capacity(4);
    for layer in 0..4 {
        let fan_in = inputs[layer] * 9;
        let std = (2.0 / fan_in as f64).sqrt();
        let mut rng = indexed_rng(seed, "init-conv", layer as u64);
        let weight = Array4::from_shape_simple_fn((filters[layer], inputs[layer], 3, 3), || {
            real::<F>(normal.sample(&mut rng) * std)
        });
        conv.push(ConvParams {
            weight,
            bias: Array1::zeros(filters[layer]),
        });
        bn.push(BnParams {
            gamma: Array1::ones(filters[layer]),
            beta: Array1::zeros(filters[layer]),
            running_mean: Array1::zeros(filters[layer]),
            running_var: Array1::ones(filters[layer]),
        });
    }
    let fc_std = (2.0 / spec.block2_filters as f64).sqrt();
    let mut rng = indexed_rng(seed, "init-fc", 0);
    let fc_weight = Array2::from_shape_simple_fn((spec.classes, spec.block2_filters), || {
        real::<F>(normal.sample(&mut rng) * fc_std)
    });
    Params {
        conv,
        bn,
        fc_weight,
        fc_bias: Array1::zeros(spec.classes),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything the backward pass needs, plus the batch statistics the
/// training loop folds into the running estimates.
pub struct Cache<F> {
    conv_inputs: Vec<Array4<F>>,
    conv_outputs: Vec<Array4<F>>,
    bn_caches: Vec<BnCache<F>>,
    dropout_masks: Vec<Array4<F>>,
    gap_input_dim: (usize, usize),
    fc_input: Array2<F>,
    pub logits: Array2<F>,
}

impl<F: Real> Cache<F> {
    /// Per-layer (mean, variance) of the batch, for running-stat updates.
    pub fn batch_stats(&self) -> Vec<(Array1<F>, Array1<F>)> {
        self.bn_caches
            .iter()
            .map(|c| (c.batch_mean.clone(), c.batch_var.clone()))
            .collect()
    }
}

fn check_input<F: Real>(spec: &NetworkSpec, x: &Array4<F>) -> Result<(), ClassifierError> {
    let (_, c, h, w) = x.dim();
    let expected = (spec.input_channels, spec.input_height, spec.input_width);
    if (c, h, w) != expected {
        return Err(ClassifierError::ShapeMismatch {
            expected,
            got: (c, h, w),
        });
    }
    Ok(())
}

/// Run the network. Train mode uses batch statistics and seeded dropout;
/// eval mode uses running statistics and no dropout. Neither mutates the
/// parameters; the caller applies running-stat updates from the cache.
pub fn forward<F: Real>(
    params: &Params<F>,
    spec: &NetworkSpec,
    x: &Array4<F>,
    mode: Mode,
    dropout: f64,
    seed: u64,
) -> Result<(Array2<F>, Cache<F>), ClassifierError> {
    check_input(spec, x)?;
    let strides = NetworkSpec::strides();
    let mut conv_inputs = Vec::with_capacity(4);
    let mut conv_outputs = Vec::with_capacity(4);
    let mut bn_caches = Vec::with_capacity(4);
    let mut dropout_masks = Vec::with_capacity(4);
    let mut current = x.clone();
    for layer in 0..4 {
        let conv_out = conv_forward(
            &current,
            &params.conv[layer].weight,
            &params.conv[layer].bias,
            strides[layer],
        );
        conv_inputs.push(std::mem::replace(&mut current, Array4::zeros((0, 0, 0, 0))));
        let activated = relu_forward(&conv_out);
        conv_outputs.push(conv_out);
        let normalized = match mode {
            Mode::Train => {
                let (y, cache) = batchnorm_forward_train(
                    &activated,
                    &params.bn[layer].gamma,
                    &params.bn[layer].beta,
                );
                bn_caches.push(cache);
                y
            }
            Mode::Eval => batchnorm_forward_eval(
                &activated,
                &params.bn[layer].gamma,
                &params.bn[layer].beta,
                &params.bn[layer].running_mean,
                &params.bn[layer].running_var,
            ),
        };
        current = match mode {
            Mode::Train => {
                let mut rng = indexed_rng(seed, "dropout", layer as u64);
                let mask = dropout_mask::<F>(normalized.dim(), dropout, &mut rng);
                let dropped = &normalized * &mask;
                dropout_masks.push(mask);
                dropped
            }
            Mode::Eval => normalized,
        };
    }

    let spatial = (current.dim().2, current.dim().3);
    let pooled = global_average_pool(&current);
    let logits = fc_forward(&pooled.view(), &params.fc_weight, &params.fc_bias);
    Ok((
        logits.clone(),
        Cache {
            conv_inputs,
            conv_outputs,
            bn_caches,
            dropout_masks,
            gap_input_dim: spatial,
            fc_input: pooled,
            logits,
        },
    ))
}

/// Mean cross-entropy over the batch plus gradients for every trainable
/// parameter, computed with the train-mode forward pass.
pub fn loss_and_grad<F: Real>(
    params: &Params<F>,
    spec: &NetworkSpec,
    x: &Array4<F>,
    labels: &[usize],
    dropout: f64,
    seed: u64,
) -> Result<(F, Gradients<F>, Cache<F>), ClassifierError> {
    if let Some(&bad) = labels.iter().find(|l| **l >= spec.classes) {
        return Err(ClassifierError::LabelOutOfRange(bad));
    }
    let (logits, cache) = forward(params, spec, x, Mode::Train, dropout, seed)?;
    let (loss, dlogits) = softmax_cross_entropy(&logits, labels);

    let mut grads = Gradients::zeros_like(params);
    let (dpooled, dfc_w, dfc_b) = fc_backward(&cache.fc_input.view(), &params.fc_weight, &dlogits);
    grads.fc_weight = dfc_w;
    grads.fc_bias = dfc_b;
    let mut dcurrent = global_average_pool_backward(&dpooled, cache.gap_input_dim);

    let strides = NetworkSpec::strides();
    for layer in (0..4).rev() {
        let dafter_bn = &dcurrent * &cache.dropout_masks[layer];
        let (dactivated, dgamma, dbeta) =
            batchnorm_backward(&cache.bn_caches[layer], &params.bn[layer].gamma, &dafter_bn);
        grads.bn_gamma[layer] = dgamma;
        grads.bn_beta[layer] = dbeta;
        let dconv_out = relu_backward(&cache.conv_outputs[layer], &dactivated);
        let (dx, dw, db) = conv_backward(
            &cache.conv_inputs[layer],
            &params.conv[layer].weight,
            strides[layer],
            &dconv_out,
        );
        grads.conv_weight[layer] = dw;
        grads.conv_bias[layer] = db;
        dcurrent = dx;
    }

    Ok((loss, grads, cache))
}

/// Fold a cache's batch statistics into the running estimates.
pub fn update_running_stats<F: Real>(params: &mut Params<F>, cache: &Cache<F>, momentum: f64) {
    let m = real::<F>(momentum);
    let keep = F::one() - m;
    for (bn, (mean, var)) in params.bn.iter_mut().zip(cache.batch_stats()) {
        bn.running_mean = bn.running_mean.mapv(|v| v * keep) + &(mean.mapv(|v| v * m));
        bn.running_var = bn.running_var.mapv(|v| v * keep) + &(var.mapv(|v| v * m));
    }
}

/// Argmax predictions, first index winning ties.
pub fn predict<F: Real>(logits: &Array2<F>) -> Vec<usize> {
    logits
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stage_rng;
    use rand::Rng;

    fn tiny_batch(batch: usize, seed: u64) -> (Array4<f64>, Vec<usize>) {
        let spec = NetworkSpec::tiny();
        let mut rng = stage_rng(seed, "tiny-batch");
        let x = Array4::from_shape_simple_fn(
            (
                batch,
                spec.input_channels,
                spec.input_height,
                spec.input_width,
            ),
            || rng.gen_range(0.0..1.0),
        );
        let labels = (0..batch).map(|_| rng.gen_range(0..spec.classes)).collect();
        (x, labels)
    }

    #[test]
    fn init_is_seed_deterministic() {
        let spec = NetworkSpec::tiny();
        let a: Params<f32> = init_params(&spec, 5);
        let b: Params<f32> = init_params(&spec, 5);
        let c: Params<f32> = init_params(&spec, 6);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn parameter_count_matches_layer_arithmetic() {
        // default network over C = 3 maps: 42 input channels
        let spec = NetworkSpec::new(42, 135, 240);
        let by_shapes = 128 * 42 * 9 + 128 + 2 * 128   // conv1 + bn1
            + 128 * 128 * 9 + 128 + 2 * 128            // conv2 + bn2
            + 256 * 128 * 9 + 256 + 2 * 256            // conv3 + bn3
            + 256 * 256 * 9 + 256 + 2 * 256            // conv4 + bn4
            + 5 * 256 + 5; // fc
        assert_eq!(spec.parameter_count(), by_shapes);
        assert_eq!(spec.parameter_count(), 1_084_165);
        let params: Params<f32> = init_params(&spec, 0);
        assert_eq!(params.trainable_count(), by_shapes);
    }

    #[test]
    fn spatial_sizes_follow_strides() {
        let spec = NetworkSpec::new(42, 135, 240);
        assert_eq!(
            spec.spatial_sizes(),
            [(68, 120), (68, 120), (34, 60), (34, 60)]
        );
        let tiny = NetworkSpec::tiny();
        assert_eq!(tiny.spatial_sizes(), [(4, 4), (4, 4), (2, 2), (2, 2)]);
    }

    #[test]
    fn zero_input_with_zero_fc_gives_uniform_softmax() {
        let spec = NetworkSpec {
            classes: 5,
            ..NetworkSpec::tiny()
        };
        let mut params: Params<f64> = init_params(&spec, 1);
        params.fc_weight.fill(0.0);
        params.fc_bias.fill(0.0);
        let x = Array4::zeros((1, spec.input_channels, spec.input_height, spec.input_width));
        let (logits, _) = forward(&params, &spec, &x, Mode::Eval, 0.0, 0).unwrap();
        let probs = super::super::layers::softmax(&logits);
        for p in probs.iter() {
            assert!((p - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let spec = NetworkSpec::tiny();
        let params: Params<f64> = init_params(&spec, 2);
        let (x, _) = tiny_batch(3, 40);
        let (a, _) = forward(&params, &spec, &x, Mode::Eval, 0.3, 7).unwrap();
        let (b, _) = forward(&params, &spec, &x, Mode::Eval, 0.3, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn train_forward_is_seed_reproducible() {
        let spec = NetworkSpec::tiny();
        let params: Params<f64> = init_params(&spec, 2);
        let (x, _) = tiny_batch(3, 41);
        let (a, _) = forward(&params, &spec, &x, Mode::Train, 0.3, 7).unwrap();
        let (b, _) = forward(&params, &spec, &x, Mode::Train, 0.3, 7).unwrap();
        let (c, _) = forward(&params, &spec, &x, Mode::Train, 0.3, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn eval_equals_train_with_dropout_off_and_frozen_stats() {
        let spec = NetworkSpec::tiny();
        let mut params: Params<f64> = init_params(&spec, 3);
        let (x, _) = tiny_batch(5, 42);
        // one train pass fully determines the batch statistics
        let (_, cache) = forward(&params, &spec, &x, Mode::Train, 0.0, 0).unwrap();
        for (bn, (mean, var)) in params.bn.iter_mut().zip(cache.batch_stats()) {
            bn.running_mean = mean;
            bn.running_var = var;
        }
        let (train_logits, _) = forward(&params, &spec, &x, Mode::Train, 0.0, 0).unwrap();
        let (eval_logits, _) = forward(&params, &spec, &x, Mode::Eval, 0.3, 0).unwrap();
        for (t, e) in train_logits.iter().zip(eval_logits.iter()) {
            assert!((t - e).abs() < 1e-9, "{} vs {}", t, e);
        }
    }

    #[test]
    fn permuting_a_batch_permutes_eval_logits() {
        let spec = NetworkSpec::tiny();
        let params: Params<f64> = init_params(&spec, 4);
        let (x, _) = tiny_batch(4, 43);
        let (logits, _) = forward(&params, &spec, &x, Mode::Eval, 0.0, 0).unwrap();
        let permutation = [2usize, 0, 3, 1];
        let mut shuffled = x.clone();
        for (to, &from) in permutation.iter().enumerate() {
            shuffled
                .index_axis_mut(Axis(0), to)
                .assign(&x.index_axis(Axis(0), from));
        }
        let (shuffled_logits, _) = forward(&params, &spec, &shuffled, Mode::Eval, 0.0, 0).unwrap();
        for (to, &from) in permutation.iter().enumerate() {
            for k in 0..spec.classes {
                assert_eq!(shuffled_logits[(to, k)], logits[(from, k)]);
            }
        }
    }

    #[test]
    fn duplicated_batch_keeps_mean_loss() {
        let spec = NetworkSpec::tiny();
        let params: Params<f64> = init_params(&spec, 5);
        let (x, labels) = tiny_batch(3, 44);
        let (loss, _, _) = loss_and_grad(&params, &spec, &x, &labels, 0.0, 0).unwrap();
        let mut doubled = Array4::zeros((6, x.dim().1, x.dim().2, x.dim().3));
        for b in 0..3 {
            doubled
                .index_axis_mut(Axis(0), b)
                .assign(&x.index_axis(Axis(0), b));
            doubled
                .index_axis_mut(Axis(0), b + 3)
                .assign(&x.index_axis(Axis(0), b));
        }
        let mut doubled_labels = labels.clone();
        doubled_labels.extend(&labels);
        let (loss2, _, _) =
            loss_and_grad(&params, &spec, &doubled, &doubled_labels, 0.0, 0).unwrap();
        assert!((loss - loss2).abs() < 1e-12, "{} vs {}", loss, loss2);
    }

    #[test]
    fn shape_mismatch_is_an_input_error() {
        let spec = NetworkSpec::tiny();
        let params: Params<f64> = init_params(&spec, 6);
        let x = Array4::zeros((1, 2, 8, 8));
        assert!(matches!(
            forward(&params, &spec, &x, Mode::Eval, 0.0, 0),
            Err(ClassifierError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn running_stats_move_toward_batch_stats() {
        let spec = NetworkSpec::tiny();
        let mut params: Params<f64> = init_params(&spec, 7);
        let (x, _) = tiny_batch(4, 45);
        let (_, cache) = forward(&params, &spec, &x, Mode::Train, 0.0, 0).unwrap();
        let before = params.bn[0].running_mean.clone();
        update_running_stats(&mut params, &cache, 0.1);
        let stats = cache.batch_stats();
        for ((b, a), m) in before
            .iter()
            .zip(params.bn[0].running_mean.iter())
            .zip(stats[0].0.iter())
        {
            assert!((a - (b * 0.9 + m * 0.1)).abs() < 1e-12);
        }
    }
}
