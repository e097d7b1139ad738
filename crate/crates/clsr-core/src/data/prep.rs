//! Preparation pipeline: segmentation, window averaging, odd-even splitting,
//! filtering, augmentation, and imputation.

use super::{Meta, PrepConfig, RawSeries, Situation, SituationPair};
use crate::error::{Error, Result};
use crate::exec;
use crate::seeding;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Counts and configuration echo describing one prepared dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub raw_series: usize,
    pub segments: usize,
    pub pairs_kept: usize,
    pub pairs_dropped: usize,
    pub rng_seed: u64,
    pub config: PrepConfig,
}

/// Cut a raw series into fixed-length segments and average each window.
///
/// Every segment yields one sequence of `entries_per_segment` entries; each
/// entry is the mean of the observed samples in its window, or `None` when
/// the whole window is missing. Partial trailing segments are dropped.
pub fn segment_and_average(raw: &RawSeries, cfg: &PrepConfig) -> Result<Vec<Vec<Option<f32>>>> {
    if raw.sample_interval == 0 || cfg.window_seconds % raw.sample_interval != 0 {
        return Err(Error::Config(format!(
            "sample interval {} s does not divide window {} s",
            raw.sample_interval, cfg.window_seconds
        )));
    }
    if (cfg.segment_minutes as u64 * 60) % cfg.window_seconds as u64 != 0 {
        return Err(Error::Config(format!(
            "segment length {} min is not divisible by window {} s",
            cfg.segment_minutes, cfg.window_seconds
        )));
    }
    let samples_per_window = (cfg.window_seconds / raw.sample_interval) as usize;
    let entries = cfg.entries_per_segment();
    let samples_per_segment = samples_per_window * entries;

    let mut segments = Vec::new();
    for chunk in raw.values.chunks_exact(samples_per_segment) {
        let seq: Vec<Option<f32>> = chunk
            .chunks_exact(samples_per_window)
            .map(|window| {
                let mut sum = 0.0f64;
                let mut count = 0usize;
                for v in window.iter().flatten() {
                    sum += f64::from(*v);
                    count += 1;
                }
                if count == 0 {
                    None
                } else {
                    Some((sum / count as f64) as f32)
                }
            })
            .collect();
        segments.push(seq);
    }
    Ok(segments)
}

/// Interleave a 2T-entry sequence into two length-T situations: entries at
/// odd 1-based positions form the first member, even positions the second.
/// Missingness is recorded in the masks; ids are left empty for the caller.
pub fn odd_even_split(seq: &[Option<f32>]) -> Result<SituationPair> {
    if seq.len() % 2 != 0 {
        return Err(Error::Shape(format!(
            "odd-even split needs an even-length sequence, got {}",
            seq.len()
        )));
    }
    let odd: Vec<Option<f32>> = seq.iter().step_by(2).copied().collect();
    let even: Vec<Option<f32>> = seq.iter().skip(1).step_by(2).copied().collect();
    SituationPair::new(
        Situation::from_optional("", &odd),
        Situation::from_optional("", &even),
    )
}

/// Reassemble the original 2T sequence from a split pair (test/diagnostic aid).
pub fn reinterleave(pair: &SituationPair) -> Vec<Option<f32>> {
    let mut out = Vec::with_capacity(pair.first.steps * 2);
    for t in 0..pair.first.steps {
        for s in [&pair.first, &pair.second] {
            out.push(if s.mask[t] { Some(s.values[t]) } else { None });
        }
    }
    out
}

/// Keep a situation only if it has at least `min_points` observed cells.
pub fn filter_min_points(s: &Situation, cfg: &PrepConfig) -> bool {
    s.observed_count() >= cfg.min_points
}

/// Fill every missing cell with the configured sentinel. Observed cells and
/// the mask are unchanged.
pub fn impute(mut s: Situation, cfg: &PrepConfig) -> Result<Situation> {
    if cfg.sentinel >= cfg.valid_min && cfg.sentinel <= cfg.valid_max {
        return Err(Error::Config(format!(
            "sentinel {} lies inside the valid range [{}, {}]",
            cfg.sentinel, cfg.valid_min, cfg.valid_max
        )));
    }
    for (v, observed) in s.values.iter_mut().zip(s.mask.iter()) {
        if !observed {
            *v = cfg.sentinel;
        }
    }
    Ok(s)
}

/// Rotate values and mask jointly along the time axis by a random offset in
/// {0, …, T−1}, wrapping at the boundaries.
pub fn augment_cyclic_shift<R: Rng>(mut s: Situation, rng: &mut R) -> Situation {
    let offset = rng.random_range(0..s.steps);
    let cells = offset * s.channels;
    s.values.rotate_right(cells);
    s.mask.rotate_right(cells);
    s
}

/// Add one offset drawn from `Uniform(lo, hi)` to every observed cell.
pub fn augment_vertical_shift<R: Rng>(mut s: Situation, rng: &mut R, lo: f32, hi: f32) -> Situation {
    let delta = rng.random_range(lo..hi);
    for (v, observed) in s.values.iter_mut().zip(s.mask.iter()) {
        if *observed {
            *v += delta;
        }
    }
    s
}

/// Multiply every observed cell by one factor drawn from `Uniform(lo, hi)`.
pub fn augment_scale<R: Rng>(mut s: Situation, rng: &mut R, lo: f32, hi: f32) -> Situation {
    let factor = rng.random_range(lo..hi);
    for (v, observed) in s.values.iter_mut().zip(s.mask.iter()) {
        if *observed {
            *v *= factor;
        }
    }
    s
}

fn apply_augmentations<R: Rng>(s: Situation, cfg: &PrepConfig, rng: &mut R) -> Situation {
    let mut s = s;
    if cfg.augmentations.cyclic_shift {
        s = augment_cyclic_shift(s, rng);
    }
    if let Some(r) = cfg.augmentations.vertical_shift {
        s = augment_vertical_shift(s, rng, r.lo, r.hi);
    }
    if let Some(r) = cfg.augmentations.scale {
        s = augment_scale(s, rng, r.lo, r.hi);
    }
    s
}

/// Run the full preparation pipeline over a set of raw series.
///
/// Per segment: window averaging → odd-even split → min-points filter on both
/// members (all-or-nothing) → configured augmentations applied to the second
/// member only → imputation of both. Output order is deterministic given the
/// input order and `cfg.rng_seed`; each series draws from its own seed
/// substream so the result does not depend on scheduling.
pub fn build_pair_dataset(
    raws: &[RawSeries],
    cfg: &PrepConfig,
) -> Result<(Vec<SituationPair>, DatasetManifest)> {
    cfg.validate()?;

    struct SeriesOutput {
        pairs: Vec<SituationPair>,
        segments: usize,
        dropped: usize,
    }

    let per_series: Vec<SeriesOutput> = exec::try_map_indexed(raws, |idx, raw| {
        let mut rng = seeding::substream(cfg.rng_seed, idx as u64);
        let segments = segment_and_average(raw, cfg)?;
        let mut out = SeriesOutput {
            pairs: Vec::new(),
            segments: segments.len(),
            dropped: 0,
        };
        for (seg_idx, seq) in segments.iter().enumerate() {
            let mut pair = odd_even_split(seq)?;
            if !filter_min_points(&pair.first, cfg) || !filter_min_points(&pair.second, cfg) {
                out.dropped += 1;
                continue;
            }
            let segment_seconds = (cfg.segment_minutes as i64) * 60 * seg_idx as i64;
            let meta = Meta {
                device_id: Some(raw.device_id.clone()),
                start_time: Some(raw.start_time + segment_seconds),
            };
            pair.first.id = format!("{}/{}/odd", raw.device_id, seg_idx);
            pair.second.id = format!("{}/{}/even", raw.device_id, seg_idx);
            pair.first.meta = Some(meta.clone());
            pair.second.meta = Some(meta);

            let second = apply_augmentations(pair.second, cfg, &mut rng);
            let first = impute(pair.first, cfg)?;
            let second = impute(second, cfg)?;
            out.pairs.push(SituationPair { first, second });
        }
        Ok::<_, Error>(out)
    })?;

    let mut pairs = Vec::new();
    let mut segments = 0;
    let mut dropped = 0;
    for s in per_series {
        segments += s.segments;
        dropped += s.dropped;
        pairs.extend(s.pairs);
    }
    if pairs.is_empty() {
        return Err(Error::EmptyDataset(
            "preparation produced no pairs; every segment was dropped or no input was given"
                .into(),
        ));
    }
    let manifest = DatasetManifest {
        raw_series: raws.len(),
        segments,
        pairs_kept: pairs.len(),
        pairs_dropped: dropped,
        rng_seed: cfg.rng_seed,
        config: cfg.clone(),
    };
    Ok((pairs, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Augmentations, Range};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn raw(values: Vec<Option<f32>>) -> RawSeries {
        RawSeries {
            device_id: "dev0".into(),
            start_time: 1_700_000_000,
            sample_interval: 10,
            values,
        }
    }

    #[test]
    fn window_mean_uses_observed_samples_only() {
        // One 60-entry segment where the first window holds 10, 20, -, 30, rest missing.
        let mut values = vec![None; 360];
        values[0] = Some(10.0);
        values[1] = Some(20.0);
        values[3] = Some(30.0);
        let segs = segment_and_average(&raw(values), &PrepConfig::default()).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0][0], Some(20.0));
    }

    #[test]
    fn all_missing_window_stays_missing() {
        let mut values: Vec<Option<f32>> = (0..360).map(|_| Some(1.0)).collect();
        for v in values.iter_mut().take(6) {
            *v = None;
        }
        let segs = segment_and_average(&raw(values), &PrepConfig::default()).unwrap();
        assert_eq!(segs[0][0], None);
        assert_eq!(segs[0][1], Some(1.0));
    }

    #[test]
    fn exact_segment_yields_one_sequence_and_trailing_partials_drop() {
        let values: Vec<Option<f32>> = (0..360).map(|i| Some(i as f32 % 50.0)).collect();
        let segs = segment_and_average(&raw(values), &PrepConfig::default()).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].len(), 60);

        let values: Vec<Option<f32>> = (0..500).map(|_| Some(1.0)).collect();
        let segs = segment_and_average(&raw(values), &PrepConfig::default()).unwrap();
        assert_eq!(segs.len(), 1);
    }

    #[test]
    fn bad_interval_divisibility_is_a_config_error() {
        let mut r = raw(vec![Some(1.0); 360]);
        r.sample_interval = 7;
        let err = segment_and_average(&r, &PrepConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn split_interleaves_and_tracks_masks() {
        let pair = odd_even_split(&[Some(1.0), None, Some(3.0), Some(4.0)]).unwrap();
        assert_eq!(pair.first.values, vec![1.0, 3.0]);
        assert_eq!(pair.first.mask, vec![true, true]);
        assert_eq!(pair.second.mask, vec![false, true]);
        assert_eq!(pair.second.values[1], 4.0);
    }

    #[test]
    fn split_of_60_entries_gives_30_step_members() {
        let seq: Vec<Option<f32>> = (0..60).map(|i| Some(i as f32)).collect();
        let pair = odd_even_split(&seq).unwrap();
        assert_eq!(pair.first.steps, 30);
        assert_eq!(pair.second.steps, 30);
    }

    #[test]
    fn odd_length_split_is_a_shape_error() {
        assert!(matches!(
            odd_even_split(&[Some(1.0); 3]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn min_points_threshold_is_inclusive() {
        let cfg = PrepConfig::default();
        let mut mask = vec![false; 30];
        for m in mask.iter_mut().take(10) {
            *m = true;
        }
        let s = Situation::new("s", 30, 1, vec![1.0; 30], mask).unwrap();
        assert!(filter_min_points(&s, &cfg));

        let mut mask = vec![false; 30];
        for m in mask.iter_mut().take(9) {
            *m = true;
        }
        let s = Situation::new("s", 30, 1, vec![1.0; 30], mask).unwrap();
        assert!(!filter_min_points(&s, &cfg));

        let s = Situation::from_observed("s", vec![1.0; 30]);
        assert!(filter_min_points(&s, &cfg));
    }

    #[test]
    fn impute_fills_sentinel_at_missing_cells_only() {
        let cfg = PrepConfig::default();
        let s = Situation::from_optional("s", &[Some(5.0), None, Some(7.0)]);
        let s = impute(s, &cfg).unwrap();
        assert_eq!(s.values, vec![5.0, -100.0, 7.0]);
        assert_eq!(s.mask, vec![true, false, true]);

        let s = Situation::from_observed("s", vec![1.0, 2.0]);
        let imputed = impute(s.clone(), &cfg).unwrap();
        assert_eq!(imputed, s);

        let s = Situation::from_optional("s", &[None, None]);
        let s = impute(s, &cfg).unwrap();
        assert_eq!(s.values, vec![-100.0, -100.0]);
    }

    /// Smallest seed whose first draw from `0..t` equals `want`.
    fn seed_for_offset(t: usize, want: usize) -> u64 {
        (0u64..10_000)
            .find(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.random_range(0..t) == want
            })
            .expect("no seed produced the wanted offset")
    }

    #[test]
    fn cyclic_shift_rotates_values_and_mask_jointly() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_for_offset(4, 1));
        let s = Situation::from_optional("s", &[Some(1.0), Some(2.0), Some(3.0), None]);
        let shifted = augment_cyclic_shift(s, &mut rng);
        assert_eq!(shifted.mask, vec![false, true, true, true]);
        assert_eq!(&shifted.values[1..], &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn shift_by_zero_is_identity_and_multiset_is_preserved() {
        let s = Situation::from_observed("s", vec![1.0, 2.0, 3.0, 4.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed_for_offset(4, 0));
        let shifted = augment_cyclic_shift(s.clone(), &mut rng);
        assert_eq!(shifted, s);

        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let shifted = augment_cyclic_shift(s.clone(), &mut rng);
        let mut a = s.values.clone();
        let mut b = shifted.values.clone();
        a.sort_by(f32::total_cmp);
        b.sort_by(f32::total_cmp);
        assert_eq!(a, b);
    }

    #[test]
    fn vertical_shift_moves_observed_cells_by_one_offset() {
        let s = Situation::from_optional("s", &[Some(20.0), Some(20.0), None]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let shifted = augment_vertical_shift(s.clone(), &mut rng, -10.0, 10.0);
        let delta = shifted.values[0] - 20.0;
        assert!((-10.0..10.0).contains(&delta));
        assert_eq!(shifted.values[1] - 20.0, delta);
        assert!(!shifted.mask[2]);
        // Pairwise differences of observed values are preserved.
        assert_eq!(
            shifted.values[1] - shifted.values[0],
            s.values[1] - s.values[0]
        );
    }

    #[test]
    fn scale_multiplies_observed_cells_by_one_factor() {
        let s = Situation::from_observed("s", vec![10.0, 20.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let scaled = augment_scale(s, &mut rng, 0.5, 2.0);
        let alpha = scaled.values[0] / 10.0;
        assert!((0.5..2.0).contains(&alpha));
        assert!((scaled.values[1] / scaled.values[0] - 2.0).abs() < 1e-6);
    }

    fn full_raw() -> RawSeries {
        raw((0..360).map(|i| Some(20.0 + (i % 7) as f32)).collect())
    }

    #[test]
    fn pipeline_produces_clean_pairs_without_augmentation() {
        let (pairs, manifest) = build_pair_dataset(&[full_raw()], &PrepConfig::default()).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(manifest.pairs_kept, 1);
        assert_eq!(manifest.pairs_dropped, 0);
        let p = &pairs[0];
        assert_eq!(p.first.steps, 30);
        assert!(p.first.mask.iter().all(|m| *m));
        assert!(p.second.mask.iter().all(|m| *m));
        assert_eq!(p.first.id, "dev0/0/odd");
        assert_eq!(p.second.id, "dev0/0/even");
    }

    #[test]
    fn pipeline_is_deterministic() {
        let cfg = PrepConfig {
            augmentations: Augmentations {
                cyclic_shift: true,
                vertical_shift: Some(Range::new(-10.0, 10.0)),
                scale: Some(Range::new(0.5, 2.0)),
            },
            rng_seed: 99,
            ..PrepConfig::default()
        };
        let raws = vec![full_raw(), full_raw()];
        let (a, ma) = build_pair_dataset(&raws, &cfg).unwrap();
        let (b, mb) = build_pair_dataset(&raws, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
    }

    #[test]
    fn augmentation_touches_second_member_only() {
        let plain = PrepConfig::default();
        let scaled = PrepConfig {
            augmentations: Augmentations {
                scale: Some(Range::new(0.5, 2.0)),
                ..Augmentations::none()
            },
            ..PrepConfig::default()
        };
        let raws = vec![full_raw()];
        let (p0, _) = build_pair_dataset(&raws, &plain).unwrap();
        let (p1, _) = build_pair_dataset(&raws, &scaled).unwrap();
        assert_eq!(p0[0].first, p1[0].first);
        assert_ne!(p0[0].second.values, p1[0].second.values);
    }

    #[test]
    fn empty_output_is_an_error() {
        let err = build_pair_dataset(&[], &PrepConfig::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset(_)));

        // A series with everything missing is filtered out entirely.
        let err = build_pair_dataset(&[raw(vec![None; 360])], &PrepConfig::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset(_)));
    }

    #[test]
    fn kept_pairs_satisfy_min_points_on_both_members() {
        // Four segments: one entirely missing, the rest with scattered gaps
        // (every fifth window starting at the fourth).
        let values: Vec<Option<f32>> = (0..1440)
            .map(|i| {
                let segment = i / 360;
                let window = i / 6;
                if segment == 2 || window % 5 == 3 {
                    None
                } else {
                    Some(30.0)
                }
            })
            .collect();
        let (pairs, manifest) =
            build_pair_dataset(&[raw(values)], &PrepConfig::default()).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(manifest.pairs_dropped, 1);
        for p in &pairs {
            assert!(p.first.observed_count() >= 10);
            assert!(p.second.observed_count() >= 10);
        }
    }

    proptest! {
        #[test]
        fn split_then_reinterleave_is_identity(
            seq in proptest::collection::vec(
                proptest::option::of(-100.0f32..100.0), 2..40usize
            )
        ) {
            let seq: Vec<Option<f32>> = if seq.len() % 2 == 0 {
                seq
            } else {
                seq[..seq.len() - 1].to_vec()
            };
            let pair = odd_even_split(&seq).unwrap();
            prop_assert_eq!(reinterleave(&pair), seq);
        }

        #[test]
        fn imputation_leaves_no_unvalued_cell(
            seq in proptest::collection::vec(
                proptest::option::of(0.0f32..100.0), 1..60usize
            )
        ) {
            let cfg = PrepConfig::default();
            let s = impute(Situation::from_optional("s", &seq), &cfg).unwrap();
            for (i, cell) in s.values.iter().enumerate() {
                if s.mask[i] {
                    prop_assert_ne!(*cell, cfg.sentinel);
                } else {
                    prop_assert_eq!(*cell, cfg.sentinel);
                }
            }
        }

        #[test]
        fn shift_composition_matches_modular_sum(
            values in proptest::collection::vec(0.0f32..100.0, 2..50usize),
            a in 0usize..50,
            b in 0usize..50,
        ) {
            let t = values.len();
            let (a, b) = (a % t, b % t);
            let s = Situation::from_observed("s", values);
            let mut s1 = s.clone();
            s1.values.rotate_right(a);
            s1.mask.rotate_right(a);
            s1.values.rotate_right(b);
            s1.mask.rotate_right(b);
            let mut s2 = s.clone();
            s2.values.rotate_right((a + b) % t);
            s2.mask.rotate_right((a + b) % t);
            prop_assert_eq!(s1, s2);
        }
    }
}
