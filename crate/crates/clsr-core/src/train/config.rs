//! Training configuration, the named model presets, and the train report.

use crate::data::{Augmentations, Range};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub name: String,
    /// Softmax temperature τ.
    pub tau: f32,
    /// Situations per batch (built from half as many pairs). Must be even.
    pub batch_situations: usize,
    pub lr: f32,
    pub weight_decay: f32,
    /// Consecutive epochs without validation improvement before stopping.
    pub patience: usize,
    /// Safety bound; early stopping usually fires first.
    pub max_epochs: usize,
    pub rng_seed: u64,
    /// Transformations applied to the second member of each pair during
    /// preparation for this model variant.
    pub augmentations: Augmentations,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            name: "clsr-10".into(),
            tau: 0.10,
            batch_situations: 256,
            lr: 1e-5,
            weight_decay: 1e-4,
            patience: 5,
            max_epochs: 200,
            rng_seed: 0,
            augmentations: Augmentations::none(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 {
            return Err(Error::Config(format!(
                "temperature {} must be positive",
                self.tau
            )));
        }
        if self.batch_situations < 2 || self.batch_situations % 2 != 0 {
            return Err(Error::Config(format!(
                "batch size {} must be even (batches hold pairs)",
                self.batch_situations
            )));
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "patience and max_epochs must be positive".into(),
            ));
        }
        if self.lr <= 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config(
                "learning rate must be positive and weight decay non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn pairs_per_batch(&self) -> usize {
        self.batch_situations / 2
    }
}

/// The eight shipped model variants: τ ∈ {0.10, 0.20} crossed with no
/// augmentation, cyclic shift, vertical shift, or scaling.
pub fn preset_names() -> [&'static str; 8] {
    [
        "clsr-10",
        "clsr-20",
        "clsr-10-cyclic-shift",
        "clsr-20-cyclic-shift",
        "clsr-10-vertical-shift",
        "clsr-20-vertical-shift",
        "clsr-10-scale",
        "clsr-20-scale",
    ]
}

/// Look up a preset by name.
pub fn preset(name: &str) -> Result<TrainConfig> {
    let tau = if name.starts_with("clsr-10") {
        0.10
    } else if name.starts_with("clsr-20") {
        0.20
    } else {
        return Err(Error::Config(format!(
            "unknown preset '{name}'; expected one of {:?}",
            preset_names()
        )));
    };
    let augmentations = match name
        .trim_start_matches("clsr-10")
        .trim_start_matches("clsr-20")
    {
        "" => Augmentations::none(),
        "-cyclic-shift" => Augmentations {
            cyclic_shift: true,
            ..Augmentations::none()
        },
        "-vertical-shift" => Augmentations {
            vertical_shift: Some(Range::new(-10.0, 10.0)),
            ..Augmentations::none()
        },
        "-scale" => Augmentations {
            scale: Some(Range::new(0.5, 2.0)),
            ..Augmentations::none()
        },
        _ => {
            return Err(Error::Config(format!(
                "unknown preset '{name}'; expected one of {:?}",
                preset_names()
            )))
        }
    };
    Ok(TrainConfig {
        name: name.to_string(),
        tau,
        augmentations,
        ..TrainConfig::default()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStopping,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config_name: String,
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch with the lowest validation loss.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
    /// Checkpoint file name, relative to the report's directory.
    pub checkpoint_file: String,
}

impl TrainReport {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        std::fs::write(path, bytes)?;
        Ok(())
    }

    /// Loss curve as `epoch,train_loss,val_loss` CSV.
    pub fn save_curve_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{:.9},{:.9}\n", e.epoch, e.train_loss, e.val_loss));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_cover_the_configuration_matrix() {
        for name in preset_names() {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            assert_eq!(cfg.name, name);
            if name.starts_with("clsr-10") {
                assert_eq!(cfg.tau, 0.10);
            } else {
                assert_eq!(cfg.tau, 0.20);
            }
            assert_eq!(cfg.batch_situations, 256);
            assert_eq!(cfg.lr, 1e-5);
            assert_eq!(cfg.weight_decay, 1e-4);
            assert_eq!(cfg.patience, 5);
            let a = cfg.augmentations;
            match name {
                "clsr-10" | "clsr-20" => assert!(a.is_empty()),
                "clsr-10-cyclic-shift" | "clsr-20-cyclic-shift" => {
                    assert!(a.cyclic_shift && a.vertical_shift.is_none() && a.scale.is_none())
                }
                "clsr-10-vertical-shift" | "clsr-20-vertical-shift" => {
                    assert_eq!(a.vertical_shift, Some(Range::new(-10.0, 10.0)));
                    assert!(!a.cyclic_shift && a.scale.is_none());
                }
                _ => {
                    assert_eq!(a.scale, Some(Range::new(0.5, 2.0)));
                    assert!(!a.cyclic_shift && a.vertical_shift.is_none());
                }
            }
        }
        assert!(preset("clsr-15").is_err());
        assert!(preset("clsr-10-warp").is_err());
    }

    #[test]
    fn odd_batch_size_is_rejected() {
        let cfg = TrainConfig {
            batch_situations: 7,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
