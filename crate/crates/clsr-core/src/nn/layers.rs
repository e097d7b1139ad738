//! Layers of the encoder stack with explicit forward/backward passes.
//!
//! Activations are passed around as flat row-major buffers. Convolutions and
//! batch norm operate on `rows = batch·steps` rows of `channels` values each
//! (channels-last layout), so the same dense kernels serve both the
//! convolution (via im2col) and the time-distributed dense layer.

use super::linalg;
use super::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::exec;
use crate::seeding;
use rand::Rng;

/// Per-channel standardization fitted on the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct InputNorm<S> {
    pub mean: Vec<S>,
    pub std: Vec<S>,
    pub fitted: bool,
}

impl<S: Scalar> InputNorm<S> {
    pub fn unfitted(channels: usize) -> Self {
        Self {
            mean: vec![S::zero(); channels],
            std: vec![S::one(); channels],
            fitted: false,
        }
    }

    /// Fit mean and population std per channel over every cell of `data`
    /// (rows of `channels` values). Std is floored at 1e-6.
    pub fn fit(&mut self, data: &[S], channels: usize) -> Result<()> {
        if data.is_empty() {
            return Err(Error::State(
                "cannot fit normalization on an empty training set".into(),
            ));
        }
        let rows = data.len() / channels;
        let mut sum = vec![0.0f64; channels];
        let mut sumsq = vec![0.0f64; channels];
        for row in data.chunks_exact(channels) {
            for (c, v) in row.iter().enumerate() {
                let v = v.as_f64();
                sum[c] += v;
                sumsq[c] += v * v;
            }
        }
        let n = rows as f64;
        for c in 0..channels {
            let mean = sum[c] / n;
            let var = (sumsq[c] / n - mean * mean).max(0.0);
            self.mean[c] = S::from_f64(mean);
            self.std[c] = S::from_f64(var.sqrt().max(1e-6));
        }
        self.fitted = true;
        Ok(())
    }

    pub fn forward(&self, x: &[S], channels: usize) -> Result<Vec<S>> {
        if !self.fitted {
            return Err(Error::State(
                "normalization statistics not initialized; fit on training data first".into(),
            ));
        }
        let mut out = vec![S::zero(); x.len()];
        exec::for_each_chunk_mut(&mut out, channels, |r, row| {
            let x_row = &x[r * channels..(r + 1) * channels];
            for c in 0..channels {
                row[c] = (x_row[c] - self.mean[c]) / self.std[c];
            }
        });
        Ok(out)
    }

    pub fn backward(&self, dy: &[S], channels: usize) -> Vec<S> {
        let mut dx = vec![S::zero(); dy.len()];
        exec::for_each_chunk_mut(&mut dx, channels, |r, row| {
            let dy_row = &dy[r * channels..(r + 1) * channels];
            for c in 0..channels {
                row[c] = dy_row[c] / self.std[c];
            }
        });
        dx
    }
}

/// 1-D convolution over time, stride 1, zero same-padding.
/// Kernel tensor shape: (kernel_size, in_channels, out_channels).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<S> {
    pub kernel: Tensor<S>,
    pub bias: Tensor<S>,
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl<S: Scalar> Conv1d<S> {
    pub fn zeros(kernel_size: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            kernel: Tensor::zeros(&[kernel_size, in_channels, out_channels]),
            bias: Tensor::zeros(&[out_channels]),
            kernel_size,
            in_channels,
            out_channels,
        }
    }

    fn pad(&self) -> usize {
        (self.kernel_size - 1) / 2
    }

    /// Unfold (batch, steps, in) into rows of kernel_size·in window values.
    pub fn im2col(&self, x: &[S], batch: usize, steps: usize) -> Vec<S> {
        let cin = self.in_channels;
        let k = self.kernel_size;
        let pad = self.pad();
        let mut col = vec![S::zero(); batch * steps * k * cin];
        exec::for_each_chunk_mut(&mut col, steps * k * cin, |b, col_b| {
            let x_b = &x[b * steps * cin..(b + 1) * steps * cin];
            for t in 0..steps {
                let row = &mut col_b[t * k * cin..(t + 1) * k * cin];
                for dt in 0..k {
                    let src = t as isize + dt as isize - pad as isize;
                    if src >= 0 && (src as usize) < steps {
                        let src = src as usize;
                        row[dt * cin..(dt + 1) * cin]
                            .copy_from_slice(&x_b[src * cin..(src + 1) * cin]);
                    }
                }
            }
        });
        col
    }

    /// Returns (output, col buffer). Output time length equals the input's.
    pub fn forward(&self, x: &[S], batch: usize, steps: usize) -> (Vec<S>, Vec<S>) {
        let col = self.im2col(x, batch, steps);
        let rows = batch * steps;
        let in_dim = self.kernel_size * self.in_channels;
        let mut out = vec![S::zero(); rows * self.out_channels];
        linalg::addmm(
            &col,
            self.kernel.data(),
            self.bias.data(),
            rows,
            in_dim,
            self.out_channels,
            &mut out,
        );
        (out, col)
    }

    /// Accumulates kernel/bias gradients and returns the input gradient.
    pub fn backward(&mut self, col: &[S], dy: &[S], batch: usize, steps: usize) -> Vec<S> {
        let rows = batch * steps;
        let in_dim = self.kernel_size * self.in_channels;
        let cout = self.out_channels;

        let Conv1d { kernel, bias, .. } = self;
        linalg::addmm_grad_wb(col, dy, rows, in_dim, cout, kernel.grad_mut(), bias.grad_mut());

        let wt = linalg::transpose(self.kernel.data(), in_dim, cout);
        let mut dcol = vec![S::zero(); rows * in_dim];
        linalg::addmm_grad_x(dy, &wt, rows, in_dim, cout, &mut dcol);

        // col2im: scatter window gradients back onto the time axis.
        let cin = self.in_channels;
        let k = self.kernel_size;
        let pad = self.pad();
        let mut dx = vec![S::zero(); batch * steps * cin];
        exec::for_each_chunk_mut(&mut dx, steps * cin, |b, dx_b| {
            let dcol_b = &dcol[b * steps * k * cin..(b + 1) * steps * k * cin];
            for t in 0..steps {
                let row = &dcol_b[t * k * cin..(t + 1) * k * cin];
                for dt in 0..k {
                    let src = t as isize + dt as isize - pad as isize;
                    if src >= 0 && (src as usize) < steps {
                        let src = src as usize;
                        let dst = &mut dx_b[src * cin..(src + 1) * cin];
                        let s = &row[dt * cin..(dt + 1) * cin];
                        for (d, &v) in dst.iter_mut().zip(s) {
                            *d = *d + v;
                        }
                    }
                }
            }
        });
        dx
    }
}

/// Batch normalization over the (batch·steps) rows of each channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<S> {
    pub gamma: Tensor<S>,
    pub beta: Tensor<S>,
    pub running_mean: Vec<S>,
    pub running_var: Vec<S>,
    pub momentum: S,
    pub epsilon: S,
    pub channels: usize,
}

/// Cache produced by a train-mode batch-norm forward.
#[derive(Debug, Clone)]
pub struct BnCache<S> {
    pub xhat: Vec<S>,
    pub inv_std: Vec<S>,
}

impl<S: Scalar> BatchNorm<S> {
    pub fn identity(channels: usize, momentum: S, epsilon: S) -> Self {
        let mut gamma = Tensor::zeros(&[channels]);
        gamma.data_mut().fill(S::one());
        Self {
            gamma,
            beta: Tensor::zeros(&[channels]),
            running_mean: vec![S::zero(); channels],
            running_var: vec![S::one(); channels],
            momentum,
            epsilon,
            channels,
        }
    }

    /// Train-mode forward: normalize by batch statistics and update the
    /// running averages.
    pub fn forward_train(&mut self, x: &[S]) -> (Vec<S>, BnCache<S>) {
        let c = self.channels;
        let rows = x.len() / c;
        let n = rows as f64;

        let mut sum = vec![0.0f64; c];
        let mut sumsq = vec![0.0f64; c];
        for row in x.chunks_exact(c) {
            for (i, v) in row.iter().enumerate() {
                let v = v.as_f64();
                sum[i] += v;
                sumsq[i] += v * v;
            }
        }
        let mut mean = vec![S::zero(); c];
        let mut inv_std = vec![S::zero(); c];
        let eps = self.epsilon.as_f64();
        for i in 0..c {
            let m = sum[i] / n;
            let var = (sumsq[i] / n - m * m).max(0.0);
            mean[i] = S::from_f64(m);
            inv_std[i] = S::from_f64(1.0 / (var + eps).sqrt());
            let mom = self.momentum.as_f64();
            let rm = self.running_mean[i].as_f64();
            let rv = self.running_var[i].as_f64();
            self.running_mean[i] = S::from_f64(mom * rm + (1.0 - mom) * m);
            self.running_var[i] = S::from_f64(mom * rv + (1.0 - mom) * var);
        }

        let mut xhat = vec![S::zero(); x.len()];
        exec::for_each_chunk_mut(&mut xhat, c, |r, row| {
            let x_row = &x[r * c..(r + 1) * c];
            for i in 0..c {
                row[i] = (x_row[i] - mean[i]) * inv_std[i];
            }
        });
        let mut y = vec![S::zero(); x.len()];
        let gamma = self.gamma.data();
        let beta = self.beta.data();
        exec::for_each_chunk_mut(&mut y, c, |r, row| {
            let xh = &xhat[r * c..(r + 1) * c];
            for i in 0..c {
                row[i] = gamma[i] * xh[i] + beta[i];
            }
        });
        (y, BnCache { xhat, inv_std })
    }

    /// Eval-mode forward using the running statistics only.
    pub fn forward_eval(&self, x: &[S]) -> Vec<S> {
        let c = self.channels;
        let gamma = self.gamma.data();
        let beta = self.beta.data();
        let mut scale = vec![S::zero(); c];
        let mut shift = vec![S::zero(); c];
        for i in 0..c {
            let s = gamma[i] / (self.running_var[i] + self.epsilon).sqrt();
            scale[i] = s;
            shift[i] = beta[i] - self.running_mean[i] * s;
        }
        let mut y = vec![S::zero(); x.len()];
        exec::for_each_chunk_mut(&mut y, c, |r, row| {
            let x_row = &x[r * c..(r + 1) * c];
            for i in 0..c {
                row[i] = x_row[i] * scale[i] + shift[i];
            }
        });
        y
    }

    /// Train-mode backward accounting for the batch-statistic dependence.
    /// Accumulates gamma/beta gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &BnCache<S>, dy: &[S]) -> Vec<S> {
        let c = self.channels;
        let rows = dy.len() / c;
        let n = rows as f64;

        let mut sum_dy = vec![0.0f64; c];
        let mut sum_dy_xhat = vec![0.0f64; c];
        for r in 0..rows {
            let dy_row = &dy[r * c..(r + 1) * c];
            let xh_row = &cache.xhat[r * c..(r + 1) * c];
            for i in 0..c {
                let g = dy_row[i].as_f64();
                sum_dy[i] += g;
                sum_dy_xhat[i] += g * xh_row[i].as_f64();
            }
        }
        {
            let dgamma = self.gamma.grad_mut();
            for i in 0..c {
                dgamma[i] = dgamma[i] + S::from_f64(sum_dy_xhat[i]);
            }
        }
        {
            let dbeta = self.beta.grad_mut();
            for i in 0..c {
                dbeta[i] = dbeta[i] + S::from_f64(sum_dy[i]);
            }
        }

        let gamma = self.gamma.data().to_vec();
        let mean_dy: Vec<S> = sum_dy.iter().map(|v| S::from_f64(v / n)).collect();
        let mean_dy_xhat: Vec<S> = sum_dy_xhat.iter().map(|v| S::from_f64(v / n)).collect();
        let mut dx = vec![S::zero(); dy.len()];
        exec::for_each_chunk_mut(&mut dx, c, |r, row| {
            let dy_row = &dy[r * c..(r + 1) * c];
            let xh_row = &cache.xhat[r * c..(r + 1) * c];
            for i in 0..c {
                let centered = dy_row[i] - mean_dy[i] - xh_row[i] * mean_dy_xhat[i];
                row[i] = gamma[i] * cache.inv_std[i] * centered;
            }
        });
        dx
    }
}

/// Affine map applied to each row. Weight shape: (in_dim, out_dim).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<S> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl<S: Scalar> Dense<S> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[in_dim, out_dim]),
            bias: Tensor::zeros(&[out_dim]),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, x: &[S], rows: usize) -> Vec<S> {
        let mut out = vec![S::zero(); rows * self.out_dim];
        linalg::addmm(
            x,
            self.weight.data(),
            self.bias.data(),
            rows,
            self.in_dim,
            self.out_dim,
            &mut out,
        );
        out
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &[S], dy: &[S], rows: usize) -> Vec<S> {
        let Dense {
            weight,
            bias,
            in_dim,
            out_dim,
        } = self;
        linalg::addmm_grad_wb(x, dy, rows, *in_dim, *out_dim, weight.grad_mut(), bias.grad_mut());
        let wt = linalg::transpose(self.weight.data(), self.in_dim, self.out_dim);
        let mut dx = vec![S::zero(); rows * self.in_dim];
        linalg::addmm_grad_x(dy, &wt, rows, self.in_dim, self.out_dim, &mut dx);
        dx
    }
}

/// ReLU, elementwise.
pub fn relu<S: Scalar>(x: &mut [S]) {
    for v in x.iter_mut() {
        if *v < S::zero() {
            *v = S::zero();
        }
    }
}

/// ReLU backward given the forward *output* (zero output ⇔ zero gradient).
pub fn relu_backward<S: Scalar>(dy: &[S], y: &[S]) -> Vec<S> {
    dy.iter()
        .zip(y)
        .map(|(&g, &v)| if v > S::zero() { g } else { S::zero() })
        .collect()
}

/// Inverted-dropout mask: zero with probability `rate`, else 1/(1−rate).
/// Each batch element draws from its own seed substream so masks are
/// identical however elements are scheduled.
pub fn dropout_mask<S: Scalar>(batch: usize, per_elem: usize, rate: f64, seed: u64) -> Vec<S> {
    let keep_scale = S::from_f64(1.0 / (1.0 - rate));
    let mut mask = vec![S::zero(); batch * per_elem];
    exec::for_each_chunk_mut(&mut mask, per_elem, |b, chunk| {
        let mut rng = seeding::substream(seed, b as u64);
        for m in chunk.iter_mut() {
            *m = if rng.random::<f64>() < rate {
                S::zero()
            } else {
                keep_scale
            };
        }
    });
    mask
}

pub fn apply_mask<S: Scalar>(x: &[S], mask: &[S]) -> Vec<S> {
    x.iter().zip(mask).map(|(&v, &m)| v * m).collect()
}

/// Mean over the time axis: (batch, steps, channels) → (batch, channels).
pub fn global_average_pool<S: Scalar>(x: &[S], batch: usize, steps: usize, channels: usize) -> Vec<S> {
    let inv_t = S::from_f64(1.0 / steps as f64);
    let mut out = vec![S::zero(); batch * channels];
    exec::for_each_chunk_mut(&mut out, channels, |b, row| {
        let x_b = &x[b * steps * channels..(b + 1) * steps * channels];
        for t in 0..steps {
            let x_row = &x_b[t * channels..(t + 1) * channels];
            for (acc, &v) in row.iter_mut().zip(x_row) {
                *acc = *acc + v;
            }
        }
        for acc in row.iter_mut() {
            *acc = *acc * inv_t;
        }
    });
    out
}

pub fn global_average_pool_backward<S: Scalar>(
    dy: &[S],
    batch: usize,
    steps: usize,
    channels: usize,
) -> Vec<S> {
    let inv_t = S::from_f64(1.0 / steps as f64);
    let mut dx = vec![S::zero(); batch * steps * channels];
    exec::for_each_chunk_mut(&mut dx, steps * channels, |b, dx_b| {
        let dy_row = &dy[b * channels..(b + 1) * channels];
        for t in 0..steps {
            let row = &mut dx_b[t * channels..(t + 1) * channels];
            for (d, &g) in row.iter_mut().zip(dy_row) {
                *d = g * inv_t;
            }
        }
    });
    dx
}
