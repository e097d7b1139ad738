//! Central-difference verification of the analytic gradients.
//!
//! Every check builds a seeded random instance, computes analytic gradients
//! through the backward pass, and compares each coordinate against a
//! two-sided finite difference evaluated in `f64`. Checks are deterministic
//! per seed; they back both the crate's own tests and the acceptance suite.

use super::layers::{
    apply_mask, dropout_mask, global_average_pool, global_average_pool_backward, relu,
    relu_backward, BatchNorm, Conv1d, Dense, InputNorm,
};
use super::{ArchConfig, Encoder, Tensor};
use crate::seeding;
use crate::train::nt_xent_loss;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Central-difference step (on the f64 shadow of the model).
pub const FD_STEP: f64 = 1e-3;
/// Accepted relative error between analytic and numeric gradients.
pub const FD_RTOL: f64 = 1e-4;
/// Absolute floor: central differences at step h carry O(h²) truncation
/// error, so coordinates below this are indistinguishable from FD noise.
pub const FD_ATOL: f64 = 1e-6;

/// Outcome of one gradient check.
#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub coords: usize,
    pub worst_rel: f64,
    pub failures: Vec<String>,
}

impl CheckReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn assert_ok(&self, what: &str) {
        assert!(
            self.ok(),
            "{what}: {}/{} gradient coordinates disagree with finite differences \
             (worst rel err {:.3e}); first: {}",
            self.failures.len(),
            self.coords,
            self.worst_rel,
            self.failures.first().map(String::as_str).unwrap_or("-")
        );
    }

    fn compare(&mut self, name: &str, idx: usize, analytic: f64, numeric: f64) {
        self.coords += 1;
        let abs = (analytic - numeric).abs();
        let scale = analytic.abs().max(numeric.abs());
        let rel = abs / scale.max(FD_ATOL);
        if rel > self.worst_rel && abs > FD_ATOL {
            self.worst_rel = rel;
        }
        if abs > FD_ATOL + FD_RTOL * scale {
            self.failures.push(format!(
                "{name}[{idx}]: analytic {analytic:.9e}, fd {numeric:.9e}"
            ));
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Values bounded away from zero, mixed signs (safe around the relu kink).
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v = rng.random_range(0.2..1.2);
            if rng.random::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect()
}

/// Sweep one slot vector with central differences against analytic grads.
fn sweep(
    report: &mut CheckReport,
    name: &str,
    analytic: &[f64],
    mut loss_at: impl FnMut(usize, f64) -> f64,
) {
    for c in 0..analytic.len() {
        let lp = loss_at(c, FD_STEP);
        let lm = loss_at(c, -FD_STEP);
        report.compare(name, c, analytic[c], (lp - lm) / (2.0 * FD_STEP));
    }
}

pub fn check_conv1d(seed: u64) -> CheckReport {
    let mut rng = seeding::substream(seed, 1);
    let (batch, steps, cin, cout, k) = (2, 7, 3, 5, 3);
    let mut conv = Conv1d::<f64>::zeros(k, cin, cout);
    for v in conv.kernel.data_mut() {
        *v = rng.random_range(-0.8..0.8);
    }
    for v in conv.bias.data_mut() {
        *v = rng.random_range(-0.3..0.3);
    }
    let x = uniform(&mut rng, batch * steps * cin, -1.0, 1.0);
    let lw = uniform(&mut rng, batch * steps * cout, -1.0, 1.0);

    let (out, col) = conv.forward(&x, batch, steps);
    let _ = out;
    let mut conv_b = conv.clone();
    let dx = conv_b.backward(&col, &lw, batch, steps);
    let dk = conv_b.kernel.grad().unwrap().to_vec();
    let db = conv_b.bias.grad().unwrap().to_vec();

    let mut report = CheckReport::default();
    let loss = |conv: &Conv1d<f64>, x: &[f64]| dot(&conv.forward(x, batch, steps).0, &lw);
    sweep(&mut report, "conv.kernel", &dk, |c, d| {
        let mut m = conv.clone();
        m.kernel.data_mut()[c] += d;
        loss(&m, &x)
    });
    sweep(&mut report, "conv.bias", &db, |c, d| {
        let mut m = conv.clone();
        m.bias.data_mut()[c] += d;
        loss(&m, &x)
    });
    sweep(&mut report, "conv.input", &dx, |c, d| {
        let mut xs = x.clone();
        xs[c] += d;
        loss(&conv, &xs)
    });
    report
}

pub fn check_batch_norm(seed: u64) -> CheckReport {
    let mut rng = seeding::substream(seed, 2);
    let (rows, c) = (8, 4);
    let mut bn = BatchNorm::<f64>::identity(c, 0.99, 1e-3);
    for v in bn.gamma.data_mut() {
        *v = rng.random_range(0.5..1.5);
    }
    for v in bn.beta.data_mut() {
        *v = rng.random_range(-0.5..0.5);
    }
    let x = uniform(&mut rng, rows * c, -2.0, 2.0);
    let lw = uniform(&mut rng, rows * c, -1.0, 1.0);

    // Train-mode loss; the running-stat update does not feed the output.
    let loss = |bn: &BatchNorm<f64>, x: &[f64]| {
        let mut m = bn.clone();
        dot(&m.forward_train(x).0, &lw)
    };

    let mut bn_b = bn.clone();
    let (_, cache) = bn_b.forward_train(&x);
    let dx = bn_b.backward(&cache, &lw);
    let dgamma = bn_b.gamma.grad().unwrap().to_vec();
    let dbeta = bn_b.beta.grad().unwrap().to_vec();

    let mut report = CheckReport::default();
    sweep(&mut report, "bn.gamma", &dgamma, |c_, d| {
        let mut m = bn.clone();
        m.gamma.data_mut()[c_] += d;
        loss(&m, &x)
    });
    sweep(&mut report, "bn.beta", &dbeta, |c_, d| {
        let mut m = bn.clone();
        m.beta.data_mut()[c_] += d;
        loss(&m, &x)
    });
    sweep(&mut report, "bn.input", &dx, |c_, d| {
        let mut xs = x.clone();
        xs[c_] += d;
        loss(&bn, &xs)
    });
    report
}

pub fn check_dense(seed: u64) -> CheckReport {
    let mut rng = seeding::substream(seed, 3);
    let (rows, in_dim, out_dim) = (5, 4, 3);
    let mut dense = Dense::<f64>::zeros(in_dim, out_dim);
    for v in dense.weight.data_mut() {
        *v = rng.random_range(-0.7..0.7);
    }
    for v in dense.bias.data_mut() {
        *v = rng.random_range(-0.3..0.3);
    }
    let x = uniform(&mut rng, rows * in_dim, -1.0, 1.0);
    let lw = uniform(&mut rng, rows * out_dim, -1.0, 1.0);

    let mut dense_b = dense.clone();
    let dx = dense_b.backward(&x, &lw, rows);
    let dw = dense_b.weight.grad().unwrap().to_vec();
    let db = dense_b.bias.grad().unwrap().to_vec();

    let loss = |m: &Dense<f64>, x: &[f64]| dot(&m.forward(x, rows), &lw);
    let mut report = CheckReport::default();
    sweep(&mut report, "dense.weight", &dw, |c, d| {
        let mut m = dense.clone();
        m.weight.data_mut()[c] += d;
        loss(&m, &x)
    });
    sweep(&mut report, "dense.bias", &db, |c, d| {
        let mut m = dense.clone();
        m.bias.data_mut()[c] += d;
        loss(&m, &x)
    });
    sweep(&mut report, "dense.input", &dx, |c, d| {
        let mut xs = x.clone();
        xs[c] += d;
        loss(&dense, &xs)
    });
    report
}

pub fn check_input_norm(seed: u64) -> CheckReport {
    let mut rng = seeding::substream(seed, 4);
    let (rows, c) = (6, 2);
    let mut norm = InputNorm::<f64>::unfitted(c);
    norm.fit(&uniform(&mut rng, 20 * c, -30.0, 70.0), c).unwrap();
    let x = uniform(&mut rng, rows * c, -30.0, 70.0);
    let lw = uniform(&mut rng, rows * c, -1.0, 1.0);

    let dx = norm.backward(&lw, c);
    let mut report = CheckReport::default();
    sweep(&mut report, "input_norm.input", &dx, |i, d| {
        let mut xs = x.clone();
        xs[i] += d;
        dot(&norm.forward(&xs, c).unwrap(), &lw)
    });
    report
}

pub fn check_relu(seed: u64) -> CheckReport {
    let mut rng = seeding::substream(seed, 5);
    let n = 24;
    let x = away_from_zero(&mut rng, n);
    let lw = uniform(&mut rng, n, -1.0, 1.0);

    let mut y = x.clone();
    relu(&mut y);
    let dx = relu_backward(&lw, &y);
    let mut report = CheckReport::default();
    sweep(&mut report, "relu.input", &dx, |c, d| {
        let mut xs = x.clone();
        xs[c] += d;
        let mut ys = xs;
        relu(&mut ys);
        dot(&ys, &lw)
    });
    report
}

pub fn check_dropout(seed: u64) -> CheckReport {
    let mut rng = seeding::substream(seed, 6);
    let (batch, per) = (3, 8);
    let x = uniform(&mut rng, batch * per, -1.0, 1.0);
    let lw = uniform(&mut rng, batch * per, -1.0, 1.0);
    let mask = dropout_mask::<f64>(batch, per, 0.5, seed ^ 0xD0);

    let dy_masked = apply_mask(&lw, &mask);
    let mut report = CheckReport::default();
    sweep(&mut report, "dropout.input", &dy_masked, |c, d| {
        let mut xs = x.clone();
        xs[c] += d;
        dot(&apply_mask(&xs, &mask), &lw)
    });
    report
}

pub fn check_global_average_pool(seed: u64) -> CheckReport {
    let mut rng = seeding::substream(seed, 7);
    let (batch, steps, c) = (3, 5, 4);
    let x = uniform(&mut rng, batch * steps * c, -1.0, 1.0);
    let lw = uniform(&mut rng, batch * c, -1.0, 1.0);

    let dx = global_average_pool_backward(&lw, batch, steps, c);
    let mut report = CheckReport::default();
    sweep(&mut report, "gap.input", &dx, |i, d| {
        let mut xs = x.clone();
        xs[i] += d;
        dot(&global_average_pool(&xs, batch, steps, c), &lw)
    });
    report
}

/// Smallest distance of any relu input to its kink: finite differencing is
/// only trustworthy when no pre-activation sits within the step of zero.
fn relu_kink_margin(enc: &Encoder<f64>, cache: &super::Cache<f64>) -> f64 {
    let mut margin = f64::INFINITY;
    for (block, bn_cache) in enc.blocks.iter().zip(&cache.bn_caches) {
        let gamma = block.bn.gamma.data();
        let beta = block.bn.beta.data();
        let c = gamma.len();
        for row in bn_cache.xhat.chunks_exact(c) {
            for (i, xh) in row.iter().enumerate() {
                margin = margin.min((gamma[i] * xh + beta[i]).abs());
            }
        }
    }
    margin
}

fn tiny_encoder(seed: u64) -> (Encoder<f64>, Vec<f64>, usize) {
    let arch = ArchConfig {
        steps: 6,
        channels: 1,
        conv_blocks: 3,
        conv_channels: 4,
        kernel_size: 3,
        embed_dim: 3,
        dropout_rate: 0.5,
        ..ArchConfig::default()
    };
    let batch = 4;
    // Reject instances with a pre-activation too close to the relu kink;
    // central differences would straddle it.
    for attempt in 0..400u64 {
        let sub = seeding::derive_seed(seed, attempt);
        let mut enc = Encoder::<f64>::new(arch.clone(), sub).unwrap();
        let mut rng = seeding::substream(sub, 8);
        let stats = uniform(&mut rng, 64, -20.0, 80.0);
        enc.norm.fit(&stats, 1).unwrap();
        let x = uniform(&mut rng, batch * arch.steps, -20.0, 80.0);
        let mut probe = enc.clone();
        let (_, cache) = probe.forward_train(&x, batch, sub).unwrap();
        if relu_kink_margin(&enc, &cache) > 10.0 * FD_STEP {
            return (enc, x, batch);
        }
    }
    panic!("no kink-free gradcheck instance found for seed {seed}");
}

/// Full stack in train mode (batch statistics, live dropout) feeding the
/// paired contrastive loss; checks every parameter plus the input gradient.
///
/// τ = 1 keeps the softmax third derivative small; sharper temperatures
/// inflate the O(h²) truncation on an O(1/τ³) curvature without telling us
/// anything new about the backward pass (the loss itself is FD-checked at
/// training temperatures with a finer step).
pub fn check_encoder_ntxent(seed: u64) -> CheckReport {
    let tau = 1.0;
    let (base, x, batch) = tiny_encoder(seed);
    let dim = base.arch.embed_dim;
    let dropout_seed = seed ^ 0x5EED;

    let loss_value = |enc: &Encoder<f64>, x: &[f64]| -> f64 {
        let mut m = enc.clone();
        let (emb, _) = m.forward_train(x, batch, dropout_seed).unwrap();
        nt_xent_loss(&emb, batch, dim, tau).unwrap().loss
    };

    let mut m = base.clone();
    m.zero_grad();
    let (emb, cache) = m.forward_train(&x, batch, dropout_seed).unwrap();
    let out = nt_xent_loss(&emb, batch, dim, tau).unwrap();
    let d_input = m.backward(&cache, &out.grad).unwrap();
    let param_grads: Vec<Vec<f64>> = m
        .parameters_mut()
        .iter()
        .map(|p| p.grad().unwrap().to_vec())
        .collect();

    let mut report = CheckReport::default();
    for (pidx, grads) in param_grads.iter().enumerate() {
        sweep(&mut report, &format!("encoder.param{pidx}"), grads, |c, d| {
            let mut pert = base.clone();
            pert.parameters_mut()[pidx].data_mut()[c] += d;
            loss_value(&pert, &x)
        });
    }
    sweep(&mut report, "encoder.input", &d_input, |c, d| {
        let mut xs = x.clone();
        xs[c] += d;
        loss_value(&base, &xs)
    });
    report
}

/// Weighted-sum loss over the embeddings; exercises the stack without the
/// contrastive head.
pub fn check_encoder_weighted_sum(seed: u64) -> CheckReport {
    let (base, x, batch) = tiny_encoder(seed);
    let dim = base.arch.embed_dim;
    let dropout_seed = seed ^ 0xA11;
    let mut rng = seeding::substream(seed, 9);
    let lw = uniform(&mut rng, batch * dim, -1.0, 1.0);

    let loss_value = |enc: &Encoder<f64>, x: &[f64]| -> f64 {
        let mut m = enc.clone();
        let (emb, _) = m.forward_train(x, batch, dropout_seed).unwrap();
        dot(&emb, &lw)
    };

    let mut m = base.clone();
    m.zero_grad();
    let (_, cache) = m.forward_train(&x, batch, dropout_seed).unwrap();
    let d_input = m.backward(&cache, &lw).unwrap();
    let param_grads: Vec<Vec<f64>> = m
        .parameters_mut()
        .iter()
        .map(|p| p.grad().unwrap().to_vec())
        .collect();

    let mut report = CheckReport::default();
    for (pidx, grads) in param_grads.iter().enumerate() {
        sweep(&mut report, &format!("encoder.param{pidx}"), grads, |c, d| {
            let mut pert = base.clone();
            pert.parameters_mut()[pidx].data_mut()[c] += d;
            loss_value(&pert, &x)
        });
    }
    sweep(&mut report, "encoder.input", &d_input, |c, d| {
        let mut xs = x.clone();
        xs[c] += d;
        loss_value(&base, &xs)
    });
    report
}

/// Backward with a zero upstream gradient must leave every parameter
/// gradient at zero.
pub fn zero_upstream_gives_zero_grads(seed: u64) -> bool {
    let (mut enc, x, batch) = tiny_encoder(seed);
    enc.zero_grad();
    let (emb, cache) = enc.forward_train(&x, batch, seed).unwrap();
    let zeros = vec![0.0; emb.len()];
    enc.backward(&cache, &zeros).unwrap();
    enc.parameters_mut()
        .iter()
        .all(|p| p.grad().unwrap().iter().all(|g| *g == 0.0))
}
