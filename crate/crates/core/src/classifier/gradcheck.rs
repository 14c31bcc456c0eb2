//! Central finite-difference check of the full backward pass, run in f64.

use ndarray::Array4;
use rand::Rng;

use super::network::{init_params, loss_and_grad, Gradients, Params};
use super::NetworkSpec;
use crate::rng::stage_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub parameters_checked: usize,
    /// Tensor and flat index of the worst disagreement.
    pub worst_parameter: String,
}

/// Trainable tensors in a fixed order: per layer weight/bias, per layer
/// gamma/beta, then the fully connected pair.
fn tensor_name(index: usize) -> String {
    match index {
        0..=7 => {
            let layer = index / 2;
            if index.is_multiple_of(2) {
                format!("conv{}.weight", layer)
            } else {
                format!("conv{}.bias", layer)
            }
        }
        8..=15 => {
            let layer = (index - 8) / 2;
            if index.is_multiple_of(2) {
                format!("bn{}.gamma", layer)
            } else {
                format!("bn{}.beta", layer)
            }
        }
        16 => "fc.weight".into(),
        _ => "fc.bias".into(),
    }
}

const TENSOR_COUNT: usize = 18;

fn tensor_mut(params: &mut Params<f64>, index: usize) -> &mut [f64] {
    match index {
        0..=7 => {
            let layer = index / 2;
            if index.is_multiple_of(2) {
                params.conv[layer]
                    .weight
                    .as_slice_mut()
                    .expect("contiguous")
            } else {
                params.conv[layer].bias.as_slice_mut().expect("contiguous")
            }
        }
        8..=15 => {
            let layer = (index - 8) / 2;
            if index.is_multiple_of(2) {
                params.bn[layer].gamma.as_slice_mut().expect("contiguous")
            } else {
                params.bn[layer].beta.as_slice_mut().expect("contiguous")
            }
        }
        16 => params.fc_weight.as_slice_mut().expect("contiguous"),
        _ => params.fc_bias.as_slice_mut().expect("contiguous"),
    }
}

fn analytic_tensor(grads: &Gradients<f64>, index: usize) -> Vec<f64> {
    match index {
        0..=7 => {
            let layer = index / 2;
            if index.is_multiple_of(2) {
                grads.conv_weight[layer].iter().copied().collect()
            } else {
                grads.conv_bias[layer].iter().copied().collect()
            }
        }
        8..=15 => {
            let layer = (index - 8) / 2;
            if index.is_multiple_of(2) {
                grads.bn_gamma[layer].iter().copied().collect()
            } else {
                grads.bn_beta[layer].iter().copied().collect()
            }
        }
        16 => grads.fc_weight.iter().copied().collect(),
        _ => grads.fc_bias.iter().copied().collect(),
    }
}

/// Compare analytic gradients of every trainable parameter against central
/// finite differences on a random batch.
///
/// Relative error uses `|a - n| / max(|a| + |n|, 1e-3)`: tolerant where both
/// gradients are tiny (finite-difference noise dominates), strict where a
/// real disagreement would matter.
pub fn finite_difference_check(
    spec: &NetworkSpec,
    batch_size: usize,
    dropout: f64,
    epsilon: f64,
    seed: u64,
) -> GradCheckReport {
    let mut rng = stage_rng(seed, "gradcheck-data");
    let x = Array4::from_shape_simple_fn(
        (
            batch_size,
            spec.input_channels,
            spec.input_height,
            spec.input_width,
        ),
        || rng.gen_range(0.0..1.0),
    );
    let labels: Vec<usize> = (0..batch_size)
        .map(|_| rng.gen_range(0..spec.classes))
        .collect();

    let mut params: Params<f64> = init_params(spec, seed);
    // the same dropout seed keeps the masks fixed across every probe, so the
    // loss stays a smooth function of the parameters
    let dropout_seed = crate::rng::derive_seed(seed, "gradcheck-dropout");
    let loss_of = |params: &Params<f64>| -> f64 {
        loss_and_grad(params, spec, &x, &labels, dropout, dropout_seed)
            .expect("valid shapes")
            .0
    };
    let (_, grads, _) =
        loss_and_grad(&params, spec, &x, &labels, dropout, dropout_seed).expect("valid shapes");

    let mut max_rel = 0.0f64;
    let mut worst = String::from("none");
    let mut checked = 0usize;
    for tensor_index in 0..TENSOR_COUNT {
        let analytic = analytic_tensor(&grads, tensor_index);
        for flat in 0..analytic.len() {
            let original = tensor_mut(&mut params, tensor_index)[flat];
            tensor_mut(&mut params, tensor_index)[flat] = original + epsilon;
            let loss_plus = loss_of(&params);
            tensor_mut(&mut params, tensor_index)[flat] = original - epsilon;
            let loss_minus = loss_of(&params);
            tensor_mut(&mut params, tensor_index)[flat] = original;

            let numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
            let a = analytic[flat];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-3);
            checked += 1;
            if rel > max_rel {
                max_rel = rel;
                worst = format!("{}[{}]", tensor_name(tensor_index), flat);
            }
        }
    }
    GradCheckReport {
        max_relative_error: max_rel,
        parameters_checked: checked,
        worst_parameter: worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_network_passes_the_gradient_check() {
        let report = finite_difference_check(&NetworkSpec::tiny(), 2, 0.2, 1e-5, 3);
        assert!(
            report.max_relative_error < 1e-4,
            "max relative error {} at {}",
            report.max_relative_error,
            report.worst_parameter
        );
        assert_eq!(
            report.parameters_checked,
            NetworkSpec::tiny().parameter_count()
        );
    }
}
