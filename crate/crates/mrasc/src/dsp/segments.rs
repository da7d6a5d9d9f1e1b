//! Aligned multi-resolution segment extraction and per-resolution
//! standardization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spectral::{log_mel, mel_filterbank, MelFilterbank, StftPlan};
use super::{DspError, MelSegment, ResolutionProfile};
use crate::corpus::AudioClip;

/// Provenance attached to every segment cut from one clip.
#[derive(Debug, Clone)]
pub struct SegmentSource {
    pub path: String,
    pub class_label: String,
    pub location_id: String,
    /// "none" for originals, otherwise the augmentation method name.
    pub augmentation: String,
}

impl SegmentSource {
    pub fn original(path: &str, class_label: &str, location_id: &str) -> Self {
        Self {
            path: path.to_string(),
            class_label: class_label.to_string(),
            location_id: location_id.to_string(),
            augmentation: "none".to_string(),
        }
    }
}

/// One aligned tuple: the same start offset rendered at every resolution,
/// narrowest window first.
pub type SegmentTuple = Vec<MelSegment>;

/// Cut `n_segments` aligned tuples from a clip.
///
/// Each tuple shares one start offset drawn uniformly from
/// `[0, len - widest_span]`; every resolution renders the first 80 frames
/// of its log-Mel spectrogram from that offset.
pub fn extract_segments(
    clip: &AudioClip,
    profiles: &[ResolutionProfile],
    n_segments: usize,
    seed: u64,
    source: &SegmentSource,
) -> Result<Vec<SegmentTuple>, DspError> {
    assert!(!profiles.is_empty());
    let widest = profiles.iter().map(ResolutionProfile::span_samples).max().unwrap();
    if clip.len() < widest {
        return Err(DspError::InsufficientInput {
            needed: widest,
            got: clip.len(),
        });
    }

    let banks: Vec<MelFilterbank> = profiles
        .iter()
        .map(|p| mel_filterbank(p.sample_rate, p.fft_size, p.mel_bands))
        .collect();
    let mut plans: Vec<StftPlan> = profiles
        .iter()
        .map(|p| StftPlan::new(p.fft_size, p.hop))
        .collect();

    let max_offset = clip.len() - widest;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets: Vec<usize> = (0..n_segments)
        .map(|_| rng.random_range(0..=max_offset))
        .collect();

    let mut tuples = Vec::with_capacity(n_segments);
    for offset in offsets {
        let mut tuple = Vec::with_capacity(profiles.len());
        for ((profile, bank), plan) in profiles.iter().zip(&banks).zip(&mut plans) {
            let span = profile.span_samples();
            let slice = &clip.samples[offset..offset + span];
            let power = plan.power(slice)?;
            debug_assert_eq!(power.n_frames, profile.frames_per_segment);
            let values: Vec<f32> = log_mel(&power, bank).iter().map(|&v| v as f32).collect();
            tuple.push(MelSegment {
                values,
                profile: *profile,
                source_path: source.path.clone(),
                class_label: source.class_label.clone(),
                location_id: source.location_id.clone(),
                offset_samples: offset,
                augmentation: source.augmentation.clone(),
            });
        }
        tuples.push(tuple);
    }
    Ok(tuples)
}

/// Per-resolution scalar mean/std over all training cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolutionStats {
    pub fft_size: usize,
    pub mean: f32,
    pub std: f32,
}

/// Compute per-resolution statistics over a training set and transform it
/// in place: `x -> (x - mean) / std`, std floored at 1e-8.
///
/// The returned stats must be reused (see [`apply_standardization`]) for
/// validation and test segments.
pub fn standardize(segments: &mut [MelSegment]) -> Result<Vec<ResolutionStats>, DspError> {
    let mut ffts: Vec<usize> = segments.iter().map(|s| s.profile.fft_size).collect();
    ffts.sort_unstable();
    ffts.dedup();

    let mut stats = Vec::with_capacity(ffts.len());
    for fft in ffts {
        let count = segments.iter().filter(|s| s.profile.fft_size == fft).count();
        if count < 2 {
            return Err(DspError::TooFewSegments { fft, got: count });
        }
        // two-pass in f64: a fixed summation order keeps the result
        // independent of how callers shard the corpus
        let mut n = 0usize;
        let mut sum = 0.0f64;
        for seg in segments.iter().filter(|s| s.profile.fft_size == fft) {
            for &v in &seg.values {
                sum += f64::from(v);
            }
            n += seg.values.len();
        }
        let mean = sum / n as f64;
        let mut sq = 0.0f64;
        for seg in segments.iter().filter(|s| s.profile.fft_size == fft) {
            for &v in &seg.values {
                let d = f64::from(v) - mean;
                sq += d * d;
            }
        }
        let std = (sq / n as f64).sqrt().max(1e-8);
        stats.push(ResolutionStats {
            fft_size: fft,
            mean: mean as f32,
            std: std as f32,
        });
    }
    apply_standardization(segments, &stats)?;
    Ok(stats)
}

/// Transform segments with previously computed training statistics.
pub fn apply_standardization(
    segments: &mut [MelSegment],
    stats: &[ResolutionStats],
) -> Result<(), DspError> {
    for seg in segments.iter_mut() {
        let fft = seg.profile.fft_size;
        let stat = stats
            .iter()
            .find(|s| s.fft_size == fft)
            .ok_or(DspError::MissingStats(fft))?;
        let inv = 1.0 / stat.std;
        for v in &mut seg.values {
            *v = (*v - stat.mean) * inv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{FRAMES_PER_SEGMENT, MEL_BANDS};

    fn noise_clip(len: usize, seed: u64) -> AudioClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioClip::new((0..len).map(|_| rng.random_range(-0.5..0.5)).collect(), 44_100)
    }

    fn source() -> SegmentSource {
        SegmentSource::original("x.wav", "beach", "loc1")
    }

    #[test]
    fn tuples_share_offsets_and_have_shape() {
        let profiles = vec![
            ResolutionProfile::new(512, 44_100).unwrap(),
            ResolutionProfile::new(1024, 44_100).unwrap(),
        ];
        let clip = noise_clip(50_000, 3);
        let tuples = extract_segments(&clip, &profiles, 4, 11, &source()).unwrap();
        assert_eq!(tuples.len(), 4);
        for tuple in &tuples {
            assert_eq!(tuple.len(), 2);
            let off = tuple[0].offset_samples;
            for seg in tuple {
                assert_eq!(seg.offset_samples, off);
                assert_eq!(seg.values.len(), MEL_BANDS * FRAMES_PER_SEGMENT);
                assert!(seg.values.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn extraction_is_deterministic() {
        let profiles = vec![ResolutionProfile::new(512, 44_100).unwrap()];
        let clip = noise_clip(30_000, 7);
        let a = extract_segments(&clip, &profiles, 3, 99, &source()).unwrap();
        let b = extract_segments(&clip, &profiles, 3, 99, &source()).unwrap();
        for (ta, tb) in a.iter().zip(&b) {
            assert_eq!(ta[0].offset_samples, tb[0].offset_samples);
            assert_eq!(ta[0].values, tb[0].values);
        }
    }

    #[test]
    fn short_clip_is_rejected_with_widest_span() {
        let profiles = ResolutionProfile::standard_set(44_100);
        let clip = noise_clip(100_000, 1);
        match extract_segments(&clip, &profiles, 1, 0, &source()) {
            Err(DspError::InsufficientInput { needed, .. }) => assert_eq!(needed, 331_776),
            other => panic!("expected InsufficientInput, got {other:?}"),
        }
    }

    fn segment_with(fft: usize, fill: f32) -> MelSegment {
        MelSegment {
            values: vec![fill; MEL_BANDS * FRAMES_PER_SEGMENT],
            profile: ResolutionProfile::new(fft, 44_100).unwrap(),
            source_path: "x.wav".into(),
            class_label: "beach".into(),
            location_id: "loc1".into(),
            offset_samples: 0,
            augmentation: "none".into(),
        }
    }

    #[test]
    fn constant_training_set_standardizes_to_zero() {
        let mut segs = vec![segment_with(512, 3.5), segment_with(512, 3.5)];
        let stats = standardize(&mut segs).unwrap();
        assert_eq!(stats.len(), 1);
        assert!(segs.iter().all(|s| s.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn standardized_set_has_zero_mean_unit_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut segs: Vec<MelSegment> = (0..6)
            .map(|_| {
                let mut s = segment_with(1024, 0.0);
                for v in &mut s.values {
                    *v = rng.random_range(-4.0..4.0);
                }
                s
            })
            .collect();
        standardize(&mut segs).unwrap();
        let n = segs.len() * MEL_BANDS * FRAMES_PER_SEGMENT;
        let mean: f64 = segs
            .iter()
            .flat_map(|s| s.values.iter())
            .map(|&v| f64::from(v))
            .sum::<f64>()
            / n as f64;
        let var: f64 = segs
            .iter()
            .flat_map(|s| s.values.iter())
            .map(|&v| (f64::from(v) - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 1e-6, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 1e-6, "std {}", var.sqrt());
    }

    #[test]
    fn validation_reuses_training_statistics() {
        let mut train = vec![segment_with(512, 1.0), segment_with(512, 3.0)];
        let stats = standardize(&mut train).unwrap();
        // training stats: mean 2, std 1
        let mut val = vec![segment_with(512, 2.0)];
        apply_standardization(&mut val, &stats).unwrap();
        // (2 - 2) / 1 = 0: the val segment's own mean/std are never used
        assert!(val[0].values.iter().all(|&v| v.abs() < 1e-6));
    }
}
