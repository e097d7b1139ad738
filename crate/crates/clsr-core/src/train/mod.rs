//! Contrastive training: the paired-batch loss, configuration presets,
//! validation-based early stopping, and the epoch loop.

mod config;
mod loss;
mod trainer;

pub use config::{preset, preset_names, StopReason, TrainConfig, TrainReport};
pub use loss::{cos_sim, nt_xent_loss, LossOutput};
pub use trainer::{train, EarlyStopping, Observation};
