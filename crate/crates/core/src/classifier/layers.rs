//! Layer primitives with hand-written backward passes.
//!
//! Everything is generic over [`Real`] so training runs in f32 while the
//! gradient checks run the identical code in f64. Batch work parallelizes
//! over samples; all cross-sample reductions happen in index order, so
//! results do not depend on the thread count.

use ndarray::{Array1, Array2, Array3, Array4, ArrayView2, ArrayView3, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Scalar type the network runs in.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::ops::AddAssign
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for converting float literals into the working type.
pub fn real<F: Real>(v: f64) -> F {
    F::from(v).expect("constant fits the float type")
}

pub const KERNEL: usize = 3;
pub const PAD: usize = 1;

/// Output size of a padded 3x3 convolution: `ceil(size / stride)`.
pub fn conv_out_size(size: usize, stride: usize) -> usize {
    (size + 2 * PAD - KERNEL) / stride + 1
}

/// Unfold one sample into an `(OH * OW, C * 9)` patch matrix.
fn im2col_single<F: Real>(x: &ArrayView3<F>, stride: usize) -> Array2<F> {
    let (channels, height, width) = x.dim();
    let out_h = conv_out_size(height, stride);
    let out_w = conv_out_size(width, stride);
    let k = channels * KERNEL * KERNEL;
    let mut cols = Array2::zeros((out_h * out_w, k));
    let col_slice = cols.as_slice_mut().expect("freshly allocated");
    for oy in 0..out_h {
        for ox in 0..out_w {
            let row_base = (oy * out_w + ox) * k;
            for c in 0..channels {
                let plane = x.index_axis(Axis(0), c);
                for ky in 0..KERNEL {
                    let y = (oy * stride + ky) as isize - PAD as isize;
                    if y < 0 || y >= height as isize {
                        continue;
                    }
                    for kx in 0..KERNEL {
                        let px = (ox * stride + kx) as isize - PAD as isize;
                        if px < 0 || px >= width as isize {
                            continue;
                        }
                        col_slice[row_base + (c * KERNEL + ky) * KERNEL + kx] =
                            plane[(y as usize, px as usize)];
                    }
                }
            }
        }
    }
    cols
}

/// Fold a patch-gradient matrix back onto the input grid (scatter-add).
fn col2im_single<F: Real>(
    dcols: &Array2<F>,
    channels: usize,
    height: usize,
    width: usize,
    stride: usize,
) -> Array3<F> {
    let out_h = conv_out_size(height, stride);
    let out_w = conv_out_size(width, stride);
    let k = channels * KERNEL * KERNEL;
    let mut dx = Array3::zeros((channels, height, width));
    let dcol_slice = dcols.as_slice().expect("contiguous");
    for oy in 0..out_h {
        for ox in 0..out_w {
            let row_base = (oy * out_w + ox) * k;
            for c in 0..channels {
                for ky in 0..KERNEL {
                    let y = (oy * stride + ky) as isize - PAD as isize;
                    if y < 0 || y >= height as isize {
                        continue;
                    }
                    for kx in 0..KERNEL {
                        let px = (ox * stride + kx) as isize - PAD as isize;
                        if px < 0 || px >= width as isize {
                            continue;
                        }
                        dx[(c, y as usize, px as usize)] += dcol_slice[row_base + (c * KERNEL + ky) * KERNEL + kx];
                    }
                }
            }
        }
    }
    dx
}

/// Padded 3x3 convolution over a batch.
pub fn conv_forward<F: Real>(
    x: &Array4<F>,
    weight: &Array4<F>,
    bias: &Array1<F>,
    stride: usize,
) -> Array4<F> {
    let (batch, channels, height, width) = x.dim();
    let filters = weight.dim().0;
    let out_h = conv_out_size(height, stride);
    let out_w = conv_out_size(width, stride);
    let w_mat = weight
        .view()
        .into_shape_with_order((filters, channels * KERNEL * KERNEL))
        .expect("weights are contiguous");

    let samples: Vec<Array3<F>> = (0..batch)
        .into_par_iter()
        .map(|b| {
            let cols = im2col_single(&x.index_axis(Axis(0), b), stride);
            let mut out = w_mat.dot(&cols.t()); // (filters, OH * OW)
            for (f, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
                row += bias[f];
            }
            out.into_shape_with_order((filters, out_h, out_w))
                .expect("shape agrees")
        })
        .collect();

    let mut out = Array4::zeros((batch, filters, out_h, out_w));
    for (b, sample) in samples.into_iter().enumerate() {
        out.index_axis_mut(Axis(0), b).assign(&sample);
    }
    out
}

/// Gradients of a padded 3x3 convolution.
pub fn conv_backward<F: Real>(
    x: &Array4<F>,
    weight: &Array4<F>,
    stride: usize,
    dout: &Array4<F>,
) -> (Array4<F>, Array4<F>, Array1<F>) {
    let (batch, channels, height, width) = x.dim();
    let (filters, _, _, _) = weight.dim();
    let k = channels * KERNEL * KERNEL;
    let w_mat = weight
        .view()
        .into_shape_with_order((filters, k))
        .expect("weights are contiguous");

    let partials: Vec<(Array3<F>, Array2<F>, Array1<F>)> = (0..batch)
        .into_par_iter()
        .map(|b| {
            let cols = im2col_single(&x.index_axis(Axis(0), b), stride);
            let dout_b = dout.index_axis(Axis(0), b);
            let dout_mat = dout_b
                .into_shape_with_order((filters, cols.dim().0))
                .expect("dout is contiguous");
            let dw = dout_mat.dot(&cols); // (filters, k)
            let db = dout_mat.sum_axis(Axis(1));
            let dcols = dout_mat.t().dot(&w_mat); // (OH * OW, k)
            let dx = col2im_single(&dcols, channels, height, width, stride);
            (dx, dw, db)
        })
        .collect();

    let mut dx = Array4::zeros((batch, channels, height, width));
    let mut dw_mat = Array2::<F>::zeros((filters, k));
    let mut db = Array1::<F>::zeros(filters);
    // per-sample gradients are reduced in index order
    for (b, (dx_b, dw_b, db_b)) in partials.into_iter().enumerate() {
        dx.index_axis_mut(Axis(0), b).assign(&dx_b);
        dw_mat += &dw_b;
        db += &db_b;
    }
    let dw = dw_mat
        .into_shape_with_order(weight.dim())
        .expect("shape agrees");
    (dx, dw, db)
}

pub fn relu_forward<F: Real>(x: &Array4<F>) -> Array4<F> {
    x.mapv(|v| v.max(F::zero()))
}

/// Backward through rectification; `x` is the pre-activation input.
pub fn relu_backward<F: Real>(x: &Array4<F>, dout: &Array4<F>) -> Array4<F> {
    let mut dx = dout.clone();
    Zip::from(&mut dx).and(x).for_each(|d, &v| {
        if v <= F::zero() {
            *d = F::zero();
        }
    });
    dx
}

/// Train-mode batch-norm cache for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<F> {
    pub x_hat: Array4<F>,
    pub inv_std: Array1<F>,
    pub batch_mean: Array1<F>,
    pub batch_var: Array1<F>,
}

pub const BN_EPSILON: f64 = 1e-5;

/// Batch normalization over (batch, height, width) per channel, using batch
/// statistics.
pub fn batchnorm_forward_train<F: Real>(
    x: &Array4<F>,
    gamma: &Array1<F>,
    beta: &Array1<F>,
) -> (Array4<F>, BnCache<F>) {
    let (batch, channels, height, width) = x.dim();
    let count = real::<F>((batch * height * width) as f64);
    let eps = real::<F>(BN_EPSILON);
    let mut y = Array4::zeros(x.dim());
    let mut x_hat = Array4::zeros(x.dim());
    let mut inv_std = Array1::zeros(channels);
    let mut batch_mean = Array1::zeros(channels);
    let mut batch_var = Array1::zeros(channels);
    for c in 0..channels {
        let xc = x.index_axis(Axis(1), c);
        let mean = xc.iter().copied().sum::<F>() / count;
        let var = xc.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / count;
        let istd = F::one() / (var + eps).sqrt();
        batch_mean[c] = mean;
        batch_var[c] = var;
        inv_std[c] = istd;
        let mut yc = y.index_axis_mut(Axis(1), c);
        let mut hc = x_hat.index_axis_mut(Axis(1), c);
        Zip::from(&mut yc)
            .and(&mut hc)
            .and(&xc)
            .for_each(|y, h, &v| {
                let normalized = (v - mean) * istd;
                *h = normalized;
                *y = gamma[c] * normalized + beta[c];
            });
    }
    (
        y,
        BnCache {
            x_hat,
            inv_std,
            batch_mean,
            batch_var,
        },
    )
}

/// Batch normalization with frozen running statistics.
pub fn batchnorm_forward_eval<F: Real>(
    x: &Array4<F>,
    gamma: &Array1<F>,
    beta: &Array1<F>,
    running_mean: &Array1<F>,
    running_var: &Array1<F>,
) -> Array4<F> {
    let channels = x.dim().1;
    let eps = real::<F>(BN_EPSILON);
    let mut y = Array4::zeros(x.dim());
    for c in 0..channels {
        let istd = F::one() / (running_var[c] + eps).sqrt();
        let mean = running_mean[c];
        let mut yc = y.index_axis_mut(Axis(1), c);
        Zip::from(&mut yc)
            .and(&x.index_axis(Axis(1), c))
            .for_each(|y, &v| *y = gamma[c] * (v - mean) * istd + beta[c]);
    }
    y
}

/// Backward through train-mode batch normalization.
pub fn batchnorm_backward<F: Real>(
    cache: &BnCache<F>,
    gamma: &Array1<F>,
    dout: &Array4<F>,
) -> (Array4<F>, Array1<F>, Array1<F>) {
    let (batch, channels, height, width) = dout.dim();
    let count = real::<F>((batch * height * width) as f64);
    let mut dx = Array4::zeros(dout.dim());
    let mut dgamma = Array1::zeros(channels);
    let mut dbeta = Array1::zeros(channels);
    for c in 0..channels {
        let dc = dout.index_axis(Axis(1), c);
        let hc = cache.x_hat.index_axis(Axis(1), c);
        let sum_dout = dc.iter().copied().sum::<F>();
        let sum_dout_xhat = dc.iter().zip(hc.iter()).map(|(&d, &h)| d * h).sum::<F>();
        dgamma[c] = sum_dout_xhat;
        dbeta[c] = sum_dout;
        let scale = gamma[c] * cache.inv_std[c] / count;
        let mut dxc = dx.index_axis_mut(Axis(1), c);
        Zip::from(&mut dxc)
            .and(&dc)
            .and(&hc)
            .for_each(|dx, &d, &h| {
                *dx = scale * (count * d - sum_dout - h * sum_dout_xhat);
            });
    }
    (dx, dgamma, dbeta)
}

/// Inverted dropout mask: kept activations are scaled by `1 / (1 - p)` so
/// eval mode needs no rescaling.
pub fn dropout_mask<F: Real>(
    shape: (usize, usize, usize, usize),
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Array4<F> {
    assert!((0.0..1.0).contains(&p), "dropout probability in [0, 1)");
    if p == 0.0 {
        return Array4::ones(shape);
    }
    let keep_scale = real::<F>(1.0 / (1.0 - p));
    let mut mask = Array4::zeros(shape);
    for v in mask.iter_mut() {
        if rng.gen::<f64>() >= p {
            *v = keep_scale;
        }
    }
    mask
}

/// Spatial mean per channel: (B, C, H, W) -> (B, C).
pub fn global_average_pool<F: Real>(x: &Array4<F>) -> Array2<F> {
    let (batch, channels, height, width) = x.dim();
    let count = real::<F>((height * width) as f64);
    let mut out = Array2::zeros((batch, channels));
    for b in 0..batch {
        for c in 0..channels {
            let sum = x
                .index_axis(Axis(0), b)
                .index_axis(Axis(0), c)
                .iter()
                .copied()
                .sum::<F>();
            out[(b, c)] = sum / count;
        }
    }
    out
}

pub fn global_average_pool_backward<F: Real>(
    dout: &Array2<F>,
    spatial: (usize, usize),
) -> Array4<F> {
    let (batch, channels) = dout.dim();
    let (height, width) = spatial;
    let scale = F::one() / real::<F>((height * width) as f64);
    let mut dx = Array4::zeros((batch, channels, height, width));
    for b in 0..batch {
        for c in 0..channels {
            dx.index_axis_mut(Axis(0), b)
                .index_axis_mut(Axis(0), c)
                .fill(dout[(b, c)] * scale);
        }
    }
    dx
}

/// Fully connected layer: `logits = x W^T + b`.
pub fn fc_forward<F: Real>(x: &ArrayView2<F>, weight: &Array2<F>, bias: &Array1<F>) -> Array2<F> {
    let mut out = x.dot(&weight.t());
    for (k, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        col += bias[k];
    }
    out
}

pub fn fc_backward<F: Real>(
    x: &ArrayView2<F>,
    weight: &Array2<F>,
    dout: &Array2<F>,
) -> (Array2<F>, Array2<F>, Array1<F>) {
    let dw = dout.t().dot(x);
    let db = dout.sum_axis(Axis(0));
    let dx = dout.dot(weight);
    (dx, dw, db)
}

/// Row-wise softmax with the max subtracted for stability.
pub fn softmax<F: Real>(logits: &Array2<F>) -> Array2<F> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

/// Mean cross-entropy loss and its gradient with respect to the logits.
pub fn softmax_cross_entropy<F: Real>(logits: &Array2<F>, labels: &[usize]) -> (F, Array2<F>) {
    let batch = logits.dim().0;
    assert_eq!(batch, labels.len());
    let probabilities = softmax(logits);
    let batch_f = real::<F>(batch as f64);
    let mut loss = F::zero();
    let mut dlogits = probabilities.clone();
    for (b, &label) in labels.iter().enumerate() {
        let p = probabilities[(b, label)].max(real::<F>(1e-300));
        loss = loss - p.ln();
        dlogits[(b, label)] = dlogits[(b, label)] - F::one();
    }
    (loss / batch_f, dlogits / batch_f)
}
