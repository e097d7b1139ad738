//! Situation data model, JSONL interchange, and the data-preparation
//! pipeline that turns raw sampled telemetry into contrastive training pairs.

mod jsonl;
mod prep;

pub use jsonl::{
    read_pairs, read_raw_series, read_situations, write_pairs, write_raw_series, write_situations,
};
pub use prep::{
    augment_cyclic_shift, augment_scale, augment_vertical_shift, build_pair_dataset,
    filter_min_points, impute, odd_even_split, reinterleave, segment_and_average, DatasetManifest,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One device's raw sampled telemetry at a fixed interval.
/// `None` entries mean the device was not reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    pub device_id: String,
    /// Epoch seconds of the first sample.
    pub start_time: i64,
    /// Seconds between consecutive samples.
    pub sample_interval: u32,
    pub values: Vec<Option<f32>>,
}

/// Optional provenance carried alongside a situation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Meta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub device_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_time: Option<i64>,
}

/// A fixed-length T×C window of feature values with an explicit missing-mask.
///
/// Values are stored row-major (time-major). A cell with `mask == false` is
/// missing; after [`impute`] it holds the configured sentinel, before that
/// its value is unspecified and must not be read.
#[derive(Debug, Clone, PartialEq)]
pub struct Situation {
    pub id: String,
    pub steps: usize,
    pub channels: usize,
    pub values: Vec<f32>,
    pub mask: Vec<bool>,
    pub meta: Option<Meta>,
}

impl Situation {
    pub fn new(
        id: impl Into<String>,
        steps: usize,
        channels: usize,
        values: Vec<f32>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if values.len() != steps * channels || mask.len() != steps * channels {
            return Err(Error::Shape(format!(
                "situation expects {}x{}={} cells, got {} values / {} mask entries",
                steps,
                channels,
                steps * channels,
                values.len(),
                mask.len()
            )));
        }
        Ok(Self {
            id: id.into(),
            steps,
            channels,
            values,
            mask,
            meta: None,
        })
    }

    /// Build a fully observed single-channel situation.
    pub fn from_observed(id: impl Into<String>, values: Vec<f32>) -> Self {
        let n = values.len();
        Self {
            id: id.into(),
            steps: n,
            channels: 1,
            values,
            mask: vec![true; n],
            meta: None,
        }
    }

    /// Build a single-channel situation from optional values (None = missing).
    pub fn from_optional(id: impl Into<String>, values: &[Option<f32>]) -> Self {
        let mask: Vec<bool> = values.iter().map(Option::is_some).collect();
        let values: Vec<f32> = values.iter().map(|v| v.unwrap_or(0.0)).collect();
        let n = values.len();
        Self {
            id: id.into(),
            steps: n,
            channels: 1,
            values,
            mask,
            meta: None,
        }
    }

    pub fn cell(&self, step: usize, channel: usize) -> f32 {
        self.values[step * self.channels + channel]
    }

    pub fn is_observed(&self, step: usize, channel: usize) -> bool {
        self.mask[step * self.channels + channel]
    }

    /// Number of observed cells.
    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// True once every cell is either observed or filled with a sentinel.
    pub fn fully_valued(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Two situations declared similar; the unit of contrastive training.
#[derive(Debug, Clone, PartialEq)]
pub struct SituationPair {
    pub first: Situation,
    pub second: Situation,
}

impl SituationPair {
    pub fn new(first: Situation, second: Situation) -> Result<Self> {
        if first.steps != second.steps || first.channels != second.channels {
            return Err(Error::Shape(format!(
                "pair members disagree on shape: {}x{} vs {}x{}",
                first.steps, first.channels, second.steps, second.channels
            )));
        }
        Ok(Self { first, second })
    }
}

/// Inclusive value range for vertical-shift and scaling draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f32,
    pub hi: f32,
}

impl Range {
    pub fn new(lo: f32, hi: f32) -> Self {
        Self { lo, hi }
    }
}

/// Which optional transformations are applied to the second member of each pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Augmentations {
    #[serde(default)]
    pub cyclic_shift: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertical_shift: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Range>,
}

impl Augmentations {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        !self.cyclic_shift && self.vertical_shift.is_none() && self.scale.is_none()
    }
}

/// Configuration for the preparation pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    /// Segment length in minutes.
    pub segment_minutes: u32,
    /// Averaging window in seconds.
    pub window_seconds: u32,
    /// Minimum observed cells for a split half to survive filtering.
    pub min_points: usize,
    /// Value imputed into missing cells; must lie outside the valid range.
    pub sentinel: f32,
    /// Valid feature range (inclusive).
    pub valid_min: f32,
    pub valid_max: f32,
    pub augmentations: Augmentations,
    pub rng_seed: u64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            segment_minutes: 60,
            window_seconds: 60,
            min_points: 10,
            sentinel: -100.0,
            valid_min: 0.0,
            valid_max: 100.0,
            augmentations: Augmentations::none(),
            rng_seed: 0,
        }
    }
}

impl PrepConfig {
    /// Entries produced per segment (the 2T sequence length).
    pub fn entries_per_segment(&self) -> usize {
        (self.segment_minutes as usize * 60) / self.window_seconds as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_minutes == 0 || self.window_seconds == 0 {
            return Err(Error::Config(
                "segment_minutes and window_seconds must be positive".into(),
            ));
        }
        if (self.segment_minutes as u64 * 60) % self.window_seconds as u64 != 0 {
            return Err(Error::Config(format!(
                "segment length {} min is not divisible by window {} s",
                self.segment_minutes, self.window_seconds
            )));
        }
        if self.entries_per_segment() % 2 != 0 {
            return Err(Error::Config(format!(
                "segments yield {} entries; odd-even splitting needs an even count",
                self.entries_per_segment()
            )));
        }
        if self.sentinel >= self.valid_min && self.sentinel <= self.valid_max {
            return Err(Error::Config(format!(
                "sentinel {} lies inside the valid range [{}, {}]",
                self.sentinel, self.valid_min, self.valid_max
            )));
        }
        if let Some(r) = self.augmentations.vertical_shift {
            if r.lo >= r.hi {
                return Err(Error::Config(format!(
                    "vertical shift bounds ({}, {}) must satisfy lo < hi",
                    r.lo, r.hi
                )));
            }
        }
        if let Some(r) = self.augmentations.scale {
            if r.lo >= r.hi || r.lo <= 0.0 {
                return Err(Error::Config(format!(
                    "scale bounds ({}, {}) must be positive with lo < hi",
                    r.lo, r.hi
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn situation_shape_is_checked() {
        let err = Situation::new("s", 3, 1, vec![1.0, 2.0], vec![true, true]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn pair_members_must_share_shape() {
        let a = Situation::from_observed("a", vec![1.0, 2.0]);
        let b = Situation::from_observed("b", vec![1.0, 2.0, 3.0]);
        assert!(SituationPair::new(a, b).is_err());
    }

    #[test]
    fn default_config_is_valid() {
        PrepConfig::default().validate().unwrap();
    }

    #[test]
    fn sentinel_inside_valid_range_is_rejected() {
        let cfg = PrepConfig {
            sentinel: 50.0,
            ..PrepConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn non_divisible_window_is_rejected() {
        let cfg = PrepConfig {
            window_seconds: 70,
            ..PrepConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
