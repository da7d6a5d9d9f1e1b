//! Data augmentation: split-shuffle-remix, place remixing, pitch shift,
//! time stretch (time domain) and Gaussian noise on standardized
//! spectrogram cells (training time).

mod nonsilent;
mod vocoder;

pub use nonsilent::{detect_nonsilent, NonSilentInterval, RMS_FRAME, RMS_HOP};
pub use vocoder::{pitch_shift, time_stretch};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::corpus::AudioClip;
use crate::nn::Mode;
use crate::util::derive_seed;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("clip of {got} samples is too short, need at least {needed}")]
    ClipTooShort { needed: usize, got: usize },
    #[error("class has a single location, cannot remix places")]
    SingleLocation,
}

/// Knobs exposed through the CLI config surface.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// std-dev of Gaussian noise on standardized log-Mel cells
    pub noise_sigma: f64,
    /// pitch factor drawn from `1 +/- shift_range`
    pub shift_range: f64,
    /// stretch rate drawn from `1 +/- stretch_range`
    pub stretch_range: f64,
    /// split-shuffle-remix aims for this many intervals
    pub target_segments: usize,
    pub crossfade_ms: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.1,
            shift_range: 0.1,
            stretch_range: 0.1,
            target_segments: 10,
            crossfade_ms: 10.0,
        }
    }
}

/// Gaussian noise on standardized spectrogram cells. Applied fresh per
/// epoch in training; the identity at inference or `sigma = 0`.
pub fn apply_noise(values: &mut [f32], sigma: f64, mode: Mode, rng: &mut ChaCha8Rng) {
    assert!(sigma >= 0.0);
    if mode != Mode::Train || sigma == 0.0 {
        return;
    }
    let normal = Normal::new(0.0f64, sigma).expect("sigma validated");
    for v in values {
        *v += normal.sample(rng) as f32;
    }
}

/// Rescale to unit peak only when the signal exceeds it.
fn clamp_peak(samples: &mut [f32]) {
    let peak = samples.iter().fold(0.0f32, |m, s| m.max(s.abs()));
    if peak > 1.0 {
        let inv = 1.0 / peak;
        for s in samples {
            *s *= inv;
        }
    }
}

/// The threshold ladder for split-shuffle-remix: start at -60 dB and step
/// +6 dB until the interval count reaches the target or the cap of -12 dB.
pub const SSR_THRESHOLD_START_DB: f64 = -60.0;
pub const SSR_THRESHOLD_STEP_DB: f64 = 6.0;
pub const SSR_THRESHOLD_CAP_DB: f64 = -12.0;

/// Split at non-silent intervals, quadruple the segments, shuffle and
/// concatenate with short linear crossfades.
///
/// A clip that never splits (steady signals hit the -12 dB cap with one
/// interval) degenerates to a shuffled fourfold tiling of itself.
pub fn split_shuffle_remix(
    clip: &AudioClip,
    target_segments: usize,
    crossfade_ms: f64,
    seed: u64,
) -> AudioClip {
    let mut threshold = SSR_THRESHOLD_START_DB;
    let intervals = loop {
        let intervals = detect_nonsilent(clip, threshold);
        if intervals.len() >= target_segments || threshold >= SSR_THRESHOLD_CAP_DB {
            break intervals;
        }
        threshold += SSR_THRESHOLD_STEP_DB;
    };
    // all-silent clip at the final threshold: treat the whole clip as one
    let spans: Vec<(usize, usize)> = if intervals.is_empty() {
        vec![(0, clip.len())]
    } else {
        intervals
            .iter()
            .map(|iv| (iv.start_sample, iv.end_sample))
            .collect()
    };

    let mut order: Vec<(usize, usize)> = spans
        .iter()
        .flat_map(|&s| std::iter::repeat_n(s, 4))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let cf = ((crossfade_ms / 1000.0) * f64::from(clip.sample_rate)).round() as usize;
    let mut out: Vec<f32> = Vec::new();
    for &(start, end) in &order {
        let seg = &clip.samples[start..end];
        if out.is_empty() {
            out.extend_from_slice(seg);
            continue;
        }
        let overlap = cf.min(out.len()).min(seg.len());
        let tail_at = out.len() - overlap;
        for i in 0..overlap {
            let t = i as f32 / overlap as f32;
            out[tail_at + i] = out[tail_at + i] * (1.0 - t) + seg[i] * t;
        }
        out.extend_from_slice(&seg[overlap..]);
    }
    clamp_peak(&mut out);
    AudioClip::new(out, clip.sample_rate)
}

/// One planned place remix: a seeded file pick for each location of an
/// unordered location pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemixPlan {
    pub location_a: String,
    pub file_a: String,
    pub location_b: String,
    pub file_b: String,
}

impl RemixPlan {
    /// Synthetic source identifier used in manifests and segment indexes.
    pub fn id(&self) -> String {
        format!("remix:{}+{}", self.file_a, self.file_b)
    }
}

/// Plan the place remixes for one class: every unordered pair of its
/// locations, one seeded random file per location. `C(L, 2)` plans.
pub fn plan_remixes(
    files_by_location: &[(String, Vec<String>)],
    seed: u64,
) -> Result<Vec<RemixPlan>, AugmentError> {
    if files_by_location.len() < 2 {
        return Err(AugmentError::SingleLocation);
    }
    let mut plans = Vec::new();
    for i in 0..files_by_location.len() {
        for j in i + 1..files_by_location.len() {
            let (loc_a, files_a) = &files_by_location[i];
            let (loc_b, files_b) = &files_by_location[j];
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(seed, &["remix", loc_a, loc_b]));
            let file_a = files_a[rng.random_range(0..files_a.len())].clone();
            let file_b = files_b[rng.random_range(0..files_b.len())].clone();
            plans.push(RemixPlan {
                location_a: loc_a.clone(),
                file_a,
                location_b: loc_b.clone(),
                file_b,
            });
        }
    }
    Ok(plans)
}

/// Mix two recordings of one class by averaging, truncated to the shorter.
pub fn remix_pair(a: &AudioClip, b: &AudioClip) -> AudioClip {
    assert_eq!(a.sample_rate, b.sample_rate, "remix inputs must share a rate");
    let len = a.len().min(b.len());
    let mut samples: Vec<f32> = a.samples[..len]
        .iter()
        .zip(&b.samples[..len])
        .map(|(x, y)| 0.5 * (x + y))
        .collect();
    clamp_peak(&mut samples);
    AudioClip::new(samples, a.sample_rate)
}

/// Draw an augmentation factor `1 +/- range` (e.g. a pitch factor or a
/// stretch rate) from a derived seed.
pub fn draw_factor(range: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.random_range(1.0 - range..=1.0 + range)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// sr chosen so 0.1 s aligns with the RMS hop
    const SR: u32 = 51_200;

    fn tone(freq: f64, secs: f64, amp: f32) -> Vec<f32> {
        let n = (secs * f64::from(SR)).round() as usize;
        (0..n)
            .map(|i| (std::f64::consts::TAU * freq * i as f64 / f64::from(SR)).sin() as f32 * amp)
            .collect()
    }

    /// ten tone blocks at distinct frequencies separated by silence
    fn ten_block_clip() -> (AudioClip, Vec<(usize, usize)>) {
        let mut samples = Vec::new();
        let mut spans = Vec::new();
        for b in 0..10 {
            samples.extend(vec![0.0f32; (0.3 * f64::from(SR)) as usize]);
            let start = samples.len();
            samples.extend(tone(400.0 + 100.0 * b as f64, 0.8, 0.5));
            spans.push((start, samples.len()));
        }
        samples.extend(vec![0.0f32; (0.3 * f64::from(SR)) as usize]);
        (AudioClip::new(samples, SR), spans)
    }

    #[test]
    fn ssr_is_deterministic() {
        let (clip, _) = ten_block_clip();
        let a = split_shuffle_remix(&clip, 10, 10.0, 5);
        let b = split_shuffle_remix(&clip, 10, 10.0, 5);
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn ssr_duration_follows_interval_arithmetic() {
        let (clip, _) = ten_block_clip();
        let intervals = detect_nonsilent(&clip, SSR_THRESHOLD_START_DB);
        assert_eq!(intervals.len(), 10);
        let content: usize = intervals.iter().map(|iv| iv.len()).sum();
        let out = split_shuffle_remix(&clip, 10, 10.0, 5);
        let cf = (0.010 * f64::from(SR)).round() as usize;
        let expect = 4 * content - 39 * cf;
        let hop = RMS_HOP;
        assert!(
            out.len().abs_diff(expect) <= hop,
            "got {} expected {expect}",
            out.len()
        );
        // ballpark of the idealized 4 * 8.0 s - 39 * 10 ms figure
        let secs = out.duration_s();
        assert!((secs - 31.61).abs() < 1.5, "duration {secs}");
    }

    #[test]
    fn ssr_quadruples_content_energy() {
        let (clip, _) = ten_block_clip();
        let out = split_shuffle_remix(&clip, 10, 10.0, 9);
        let energy = |s: &[f32]| s.iter().map(|v| f64::from(*v) * f64::from(*v)).sum::<f64>();
        let ratio = energy(&out.samples) / energy(&clip.samples);
        assert!((ratio - 4.0).abs() / 4.0 < 0.05, "energy ratio {ratio}");
    }

    #[test]
    fn ssr_output_is_a_4x_multiset_of_input_intervals() {
        let (clip, _) = ten_block_clip();
        let intervals = detect_nonsilent(&clip, SSR_THRESHOLD_START_DB);
        let out = split_shuffle_remix(&clip, 10, 10.0, 31);
        let cf = (0.010 * f64::from(SR)).round() as usize;

        // locate each interval's interior in the output by exact bit match;
        // the interior excludes the crossfade zone at each end
        let out_bits: Vec<u32> = out.samples.iter().map(|s| s.to_bits()).collect();
        for iv in &intervals {
            let body = &clip.samples[iv.start_sample + cf..iv.end_sample - cf];
            let needle: Vec<u32> = body.iter().map(|s| s.to_bits()).collect();
            let head = &needle[..64.min(needle.len())];
            let mut hits = 0;
            let mut at = 0;
            while at + needle.len() <= out_bits.len() {
                if out_bits[at..at + head.len()] == *head {
                    if out_bits[at..at + needle.len()] == needle[..] {
                        hits += 1;
                        at += needle.len();
                        continue;
                    }
                }
                at += 1;
            }
            assert_eq!(hits, 4, "interval at {} found {hits} times", iv.start_sample);
        }
    }

    #[test]
    fn ssr_steady_clip_falls_back_to_whole_clip_tiling() {
        // constant amplitude everywhere: no frame falls 12 dB under the max,
        // so the ladder tops out with a single interval
        let clip = AudioClip::new(tone(500.0, 2.0, 0.5), SR);
        let out = split_shuffle_remix(&clip, 10, 10.0, 0);
        let cf = (0.010 * f64::from(SR)).round() as usize;
        assert_eq!(out.len(), 4 * clip.len() - 3 * cf);
    }

    #[test]
    fn remix_count_is_pairs_choose_two() {
        let files: Vec<(String, Vec<String>)> = (0..4)
            .map(|l| {
                (
                    format!("loc{l}"),
                    vec![format!("l{l}a.wav"), format!("l{l}b.wav")],
                )
            })
            .collect();
        let plans = plan_remixes(&files, 7).unwrap();
        assert_eq!(plans.len(), 6); // C(4,2)
        let again = plan_remixes(&files, 7).unwrap();
        assert_eq!(plans, again);
    }

    #[test]
    fn remix_single_location_is_an_error() {
        let files = vec![("only".to_string(), vec!["a.wav".to_string()])];
        assert!(matches!(
            plan_remixes(&files, 0),
            Err(AugmentError::SingleLocation)
        ));
    }

    #[test]
    fn remix_pair_identity_and_peak_bound() {
        let a = AudioClip::new(tone(440.0, 0.1, 0.8), SR);
        let same = remix_pair(&a, &a);
        for (x, y) in a.samples.iter().zip(&same.samples) {
            assert!((x - y).abs() < 1e-7);
        }
        let b = AudioClip::new(tone(523.0, 0.15, 0.6), SR);
        let mix = remix_pair(&a, &b);
        assert_eq!(mix.len(), a.len().min(b.len()));
        let peak = |c: &AudioClip| c.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()));
        assert!(peak(&mix) <= peak(&a).max(peak(&b)) + 1e-7);
    }

    #[test]
    fn noise_statistics_match_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cells = 16;
        let draws = 10_000;
        let mut sums = vec![0.0f64; cells];
        let mut sqs = vec![0.0f64; cells];
        for _ in 0..draws {
            let mut v = vec![0.0f32; cells];
            apply_noise(&mut v, 0.1, Mode::Train, &mut rng);
            for (i, x) in v.iter().enumerate() {
                sums[i] += f64::from(*x);
                sqs[i] += f64::from(*x) * f64::from(*x);
            }
        }
        for i in 0..cells {
            let mean = sums[i] / draws as f64;
            let var = sqs[i] / draws as f64 - mean * mean;
            let std = var.sqrt();
            assert!(mean.abs() < 0.01, "cell {i} mean {mean}");
            assert!((0.095..=0.105).contains(&std), "cell {i} std {std}");
        }
    }

    #[test]
    fn noise_identity_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let orig: Vec<f32> = (0..100).map(|i| i as f32 * 0.01).collect();

        let mut x = orig.clone();
        apply_noise(&mut x, 0.0, Mode::Train, &mut rng);
        assert_eq!(x, orig);

        let mut x = orig.clone();
        apply_noise(&mut x, 0.5, Mode::Eval, &mut rng);
        assert_eq!(x, orig);
    }

    #[test]
    fn draw_factor_stays_in_range() {
        for seed in 0..50 {
            let f = draw_factor(0.1, seed);
            assert!((0.9..=1.1).contains(&f));
        }
        assert_eq!(draw_factor(0.1, 9), draw_factor(0.1, 9));
    }
}
