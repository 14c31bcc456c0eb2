//! Adam optimizer with bias correction.

use ndarray::{Array, Dimension, Zip};

use super::layers::{real, Real};
use super::network::{Gradients, Params};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators plus the step count.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub m: Gradients<F>,
    pub v: Gradients<F>,
    pub step: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(params: &Params<F>) -> Self {
        Self {
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
            step: 0,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update_tensor<F: Real, D: Dimension>(
    param: &mut Array<F, D>,
    grad: &Array<F, D>,
    m: &mut Array<F, D>,
    v: &mut Array<F, D>,
    lr: F,
    beta1: F,
    beta2: F,
    eps: F,
    bias1: F,
    bias2: F,
) {
    let one = F::one();
    Zip::from(param)
        .and(grad)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| {
            *m = beta1 * *m + (one - beta1) * g;
            *v = beta2 * *v + (one - beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        });
}

/// One Adam update across every trainable tensor; increments the step count
/// by exactly one.
pub fn adam_step<F: Real>(
    params: &mut Params<F>,
    grads: &Gradients<F>,
    state: &mut AdamState<F>,
    learning_rate: f64,
    cfg: &AdamConfig,
) {
    state.step += 1;
    let lr = real::<F>(learning_rate);
    let beta1 = real::<F>(cfg.beta1);
    let beta2 = real::<F>(cfg.beta2);
    let eps = real::<F>(cfg.epsilon);
    let bias1 = F::one() - beta1.powi(state.step as i32);
    let bias2 = F::one() - beta2.powi(state.step as i32);

    for layer in 0..params.conv.len() {
        update_tensor(
            &mut params.conv[layer].weight,
            &grads.conv_weight[layer],
            &mut state.m.conv_weight[layer],
            &mut state.v.conv_weight[layer],
            lr,
            beta1,
            beta2,
            eps,
            bias1,
            bias2,
        );
        update_tensor(
            &mut params.conv[layer].bias,
            &grads.conv_bias[layer],
            &mut state.m.conv_bias[layer],
            &mut state.v.conv_bias[layer],
            lr,
            beta1,
            beta2,
            eps,
            bias1,
            bias2,
        );
        update_tensor(
            &mut params.bn[layer].gamma,
            &grads.bn_gamma[layer],
            &mut state.m.bn_gamma[layer],
            &mut state.v.bn_gamma[layer],
            lr,
            beta1,
            beta2,
            eps,
            bias1,
            bias2,
        );
        update_tensor(
            &mut params.bn[layer].beta,
            &grads.bn_beta[layer],
            &mut state.m.bn_beta[layer],
            &mut state.v.bn_beta[layer],
            lr,
            beta1,
            beta2,
            eps,
            bias1,
            bias2,
        );
    }
    update_tensor(
        &mut params.fc_weight,
        &grads.fc_weight,
        &mut state.m.fc_weight,
        &mut state.v.fc_weight,
        lr,
        beta1,
        beta2,
        eps,
        bias1,
        bias2,
    );
    update_tensor(
        &mut params.fc_bias,
        &grads.fc_bias,
        &mut state.m.fc_bias,
        &mut state.v.fc_bias,
        lr,
        beta1,
        beta2,
        eps,
        bias1,
        bias2,
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{init_params, NetworkSpec};

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let spec = NetworkSpec::tiny();
        let mut params: Params<f64> = init_params(&spec, 1);
        let before = params.clone();
        let grads = Gradients::zeros_like(&params);
        let mut state = AdamState::new(&params);
        adam_step(
            &mut params,
            &grads,
            &mut state,
            0.01,
            &AdamConfig::default(),
        );
        assert_eq!(params, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        let spec = NetworkSpec::tiny();
        let mut params: Params<f64> = init_params(&spec, 2);
        let before = params.clone();
        let mut grads = Gradients::zeros_like(&params);
        grads.fc_weight.fill(0.5);
        grads.fc_bias.fill(-2.0);
        let mut state = AdamState::new(&params);
        adam_step(
            &mut params,
            &grads,
            &mut state,
            0.01,
            &AdamConfig::default(),
        );
        // bias-corrected first step: lr * g / (|g| + eps) ~ lr * sign(g)
        for (after, b) in params.fc_weight.iter().zip(before.fc_weight.iter()) {
            assert!((after - (b - 0.01)).abs() < 1e-6);
        }
        for (after, b) in params.fc_bias.iter().zip(before.fc_bias.iter()) {
            assert!((after - (b + 0.01)).abs() < 1e-6);
        }
        // untouched tensors stay put
        assert_eq!(params.conv[0].weight, before.conv[0].weight);
    }

    #[test]
    fn step_count_increments_by_one() {
        let spec = NetworkSpec::tiny();
        let mut params: Params<f64> = init_params(&spec, 3);
        let grads = Gradients::zeros_like(&params);
        let mut state = AdamState::new(&params);
        for expected in 1..=4 {
            adam_step(
                &mut params,
                &grads,
                &mut state,
                0.01,
                &AdamConfig::default(),
            );
            assert_eq!(state.step, expected);
        }
    }
}
