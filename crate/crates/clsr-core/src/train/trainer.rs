//! The training loop: seeded shuffling, paired batches, AdamW updates, and
//! validation-based early stopping.

use super::config::{EpochStats, StopReason, TrainConfig, TrainReport};
use super::loss::nt_xent_loss;
use crate::data::SituationPair;
use crate::error::{Error, Result};
use crate::nn::{batch_from_situations, checkpoint, AdamW, Encoder};
use crate::seeding;
use rand::seq::SliceRandom;
use std::path::Path;

/// Stops training once the validation loss has failed to improve for
/// `patience` consecutive epochs. Improvement means strictly lower.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    Improved,
    NoImprovement { stale: usize },
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> Observation {
        match self.best {
            Some(best) if val_loss >= best => {
                self.stale += 1;
                if self.stale >= self.patience {
                    Observation::Stop
                } else {
                    Observation::NoImprovement { stale: self.stale }
                }
            }
            _ => {
                self.best = Some(val_loss);
                self.best_epoch = epoch;
                self.stale = 0;
                Observation::Improved
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.best
    }
}

fn batch_input(model: &Encoder<f32>, pairs: &[&SituationPair]) -> Result<Vec<f32>> {
    let mut refs = Vec::with_capacity(pairs.len() * 2);
    for p in pairs {
        refs.push(&p.first);
        refs.push(&p.second);
    }
    batch_from_situations(&refs, &model.arch)
}

fn validation_loss(
    model: &Encoder<f32>,
    val_pairs: &[SituationPair],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    let ppb = cfg.pairs_per_batch();
    let dim = model.arch.embed_dim;
    let mut weighted = 0.0f64;
    let mut total = 0usize;
    for (batch_idx, chunk) in val_pairs.chunks(ppb).enumerate() {
        // A trailing chunk needs at least two pairs for the loss to carry
        // signal; a lone pair only sees its own partner in the denominator.
        if chunk.len() < 2 {
            continue;
        }
        let refs: Vec<&SituationPair> = chunk.iter().collect();
        let x = batch_input(model, &refs)?;
        let b = chunk.len() * 2;
        let emb = model.forward_eval(&x, b)?;
        let out = nt_xent_loss(&emb, b, dim, cfg.tau)?;
        let loss = f64::from(out.loss);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: batch_idx,
                detail: "validation loss is not finite".into(),
            });
        }
        weighted += loss * b as f64;
        total += b;
    }
    if total == 0 {
        return Err(Error::EmptyDataset(
            "validation set has no usable batch (need at least 2 pairs)".into(),
        ));
    }
    Ok(weighted / total as f64)
}

/// Train `model` on pre-imputed pairs, validating after every epoch.
///
/// Normalization statistics must already be fitted. The checkpoint with the
/// lowest validation loss is written to `checkpoint_path`. Fully
/// deterministic for a fixed config and input order.
pub fn train(
    model: &mut Encoder<f32>,
    train_pairs: &[SituationPair],
    val_pairs: &[SituationPair],
    cfg: &TrainConfig,
    checkpoint_path: &Path,
) -> Result<TrainReport> {
    cfg.validate()?;
    if !model.norm.fitted {
        return Err(Error::State(
            "fit_normalization must run before training".into(),
        ));
    }
    if train_pairs.is_empty() || val_pairs.is_empty() {
        return Err(Error::EmptyDataset(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let ppb = cfg.pairs_per_batch();
    let n_batches = train_pairs.len() / ppb;
    if n_batches == 0 {
        return Err(Error::EmptyDataset(format!(
            "{} training pairs cannot fill one batch of {} pairs",
            train_pairs.len(),
            ppb
        )));
    }
    let dim = model.arch.embed_dim;
    let mut optimizer = AdamW::new(cfg.lr, cfg.weight_decay);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut epochs = Vec::new();
    let mut best_bytes: Option<Vec<u8>> = None;
    let mut stop_reason = StopReason::MaxEpochs;

    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        let epoch_seed = seeding::derive_seed(cfg.rng_seed, epoch as u64);
        let mut shuffle_rng = seeding::substream(epoch_seed, 0);
        order.shuffle(&mut shuffle_rng);

        let mut train_loss_sum = 0.0f64;
        for (batch_idx, chunk) in order.chunks_exact(ppb).enumerate() {
            let refs: Vec<&SituationPair> = chunk.iter().map(|&i| &train_pairs[i]).collect();
            let x = batch_input(model, &refs)?;
            let b = cfg.batch_situations;
            let dropout_seed = seeding::derive_seed(epoch_seed, 1 + batch_idx as u64);
            let (emb, cache) = model.forward_train(&x, b, dropout_seed)?;
            let out = nt_xent_loss(&emb, b, dim, cfg.tau)?;
            let loss = f64::from(out.loss);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    detail: format!("training loss {loss}"),
                });
            }
            train_loss_sum += loss;
            model.zero_grad();
            model.backward(&cache, &out.grad)?;
            optimizer.step(&mut model.parameters_mut())?;
        }
        let train_loss = train_loss_sum / n_batches as f64;
        let val_loss = validation_loss(model, val_pairs, cfg, epoch)?;
        epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });

        match stopper.observe(epoch, val_loss) {
            Observation::Improved => {
                best_bytes = Some(checkpoint::to_bytes(model));
            }
            Observation::NoImprovement { .. } => {}
            Observation::Stop => {
                stop_reason = StopReason::EarlyStopping;
                break;
            }
        }
    }

    let bytes = best_bytes.expect("at least one epoch ran; first epoch always improves");
    std::fs::write(checkpoint_path, &bytes)?;
    let checkpoint_file = checkpoint_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(TrainReport {
        config_name: cfg.name.clone(),
        epochs,
        best_epoch: stopper.best_epoch(),
        best_val_loss: stopper.best_loss().expect("observed at least once"),
        stop_reason,
        checkpoint_file,
    })
}
