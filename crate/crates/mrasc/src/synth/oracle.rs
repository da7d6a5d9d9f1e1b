//! Class identifiability oracles.
//!
//! Cheap non-neural checks that the generated corpus actually carries the
//! cues the classes are supposed to differ by, each at its intended
//! resolution. A corpus that fails here is rejected before any training.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::SynthError;
use crate::corpus::{normalize_peak, read_audio, AudioClip, RecordingMeta};

/// Coefficient of variation of 512-sample frame energies (hop 256).
/// Amplitude-modulated textures fluctuate frame to frame; steady textures
/// do not.
pub fn energy_cv_feature(clip: &AudioClip) -> f64 {
    let (frame, hop) = (512usize, 256usize);
    let n_frames = (clip.len().saturating_sub(frame)) / hop + 1;
    let mut energies = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let e: f64 = clip.samples[t * hop..t * hop + frame]
            .iter()
            .map(|&s| f64::from(s) * f64::from(s))
            .sum();
        energies.push(e);
    }
    let mean = energies.iter().sum::<f64>() / energies.len() as f64;
    let var = energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / energies.len() as f64;
    var.sqrt() / mean.max(1e-12)
}

/// Mean spectral centroid over 512-sample frames, in Hz.
pub fn spectral_centroid_feature(clip: &AudioClip) -> f64 {
    let (frame, hop) = (512usize, 256usize);
    let n_frames = (clip.len().saturating_sub(frame)) / hop + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame);
    let bin_hz = f64::from(clip.sample_rate) / frame as f64;
    let mut acc = 0.0;
    for t in 0..n_frames {
        let mut buf: Vec<Complex<f64>> = clip.samples[t * hop..t * hop + frame]
            .iter()
            .map(|&s| Complex::new(f64::from(s), 0.0))
            .collect();
        fft.process(&mut buf);
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, c) in buf.iter().take(frame / 2 + 1).enumerate() {
            let p = c.norm_sqr();
            num += k as f64 * bin_hz * p;
            den += p;
        }
        acc += num / den.max(1e-12);
    }
    acc / n_frames as f64
}

/// Slow carrier-balance drift, measured on 8192-sample frames (hop 4096).
///
/// Both event arrangements swing the per-frame balance between the two
/// carrier bands; what distinguishes them is the period. Smoothing the
/// balance trace over ~0.75 s cancels the fast per-burst alternation and
/// keeps the multi-second carrier blocks, so the smoothed variability is
/// a wide-window-only cue.
pub fn band_alternation_feature(clip: &AudioClip, carriers: (f64, f64)) -> f64 {
    let (frame, hop) = (8192usize, 4096usize);
    if clip.len() < frame {
        return 0.0;
    }
    let n_frames = (clip.len() - frame) / hop + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame);
    let bin_hz = f64::from(clip.sample_rate) / frame as f64;
    let half_band = 300.0; // covers the carrier jitter plus sidelobes
    let band = |f0: f64| -> (usize, usize) {
        let lo = ((f0 - half_band) / bin_hz).floor().max(0.0) as usize;
        let hi = ((f0 + half_band) / bin_hz).ceil() as usize;
        (lo, hi.min(frame / 2))
    };
    let (a_lo, a_hi) = band(carriers.0);
    let (b_lo, b_hi) = band(carriers.1);

    let mut balances = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let mut buf: Vec<Complex<f64>> = clip.samples[t * hop..t * hop + frame]
            .iter()
            .map(|&s| Complex::new(f64::from(s), 0.0))
            .collect();
        fft.process(&mut buf);
        let ea: f64 = (a_lo..=a_hi).map(|k| buf[k].norm_sqr()).sum();
        let eb: f64 = (b_lo..=b_hi).map(|k| buf[k].norm_sqr()).sum();
        balances.push((ea - eb) / (ea + eb).max(1e-12));
    }
    // moving average over 8 hops (~0.74 s at 44.1 kHz)
    let window = 8usize.min(balances.len());
    let smoothed: Vec<f64> = balances
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect();
    let mean = smoothed.iter().sum::<f64>() / smoothed.len() as f64;
    let var = smoothed.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / smoothed.len() as f64;
    var.sqrt()
}

/// Best achievable accuracy of a single-threshold classifier on a scalar
/// feature (both polarities tried).
pub fn best_threshold_accuracy(labeled: &[(f64, bool)]) -> f64 {
    let mut values: Vec<f64> = labeled.iter().map(|(v, _)| *v).collect();
    values.sort_by(f64::total_cmp);
    let n = labeled.len() as f64;
    let mut best = 0.0f64;
    let mut thresholds = vec![values[0] - 1.0];
    thresholds.extend(values.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    thresholds.push(values[values.len() - 1] + 1.0);
    for t in thresholds {
        let above_true = labeled
            .iter()
            .filter(|(v, l)| (*v > t) == *l)
            .count() as f64;
        best = best.max(above_true / n).max(1.0 - above_true / n);
    }
    best
}

#[derive(Debug, Clone)]
pub struct IdentifiabilityReport {
    /// texture pair separated by fine-resolution energy variability
    pub texture_pair_accuracy: f64,
    /// timing pair separated by wide-window band alternation
    pub timing_pair_accuracy: f64,
    pub texture_pair: (String, String),
    pub timing_pair: (String, String),
}

/// Which class pairs the oracle probes and with which carriers.
#[derive(Debug, Clone)]
pub struct OracleSpec {
    pub texture_pair: (String, String),
    pub timing_pair: (String, String),
    pub carriers: (f64, f64),
}

impl OracleSpec {
    /// Pairing for [`super::default_scene_specs`].
    pub fn for_default_corpus() -> Self {
        Self {
            texture_pair: ("am_noise".into(), "event_fast".into()),
            timing_pair: ("event_fast".into(), "event_slow".into()),
            carriers: (2200.0, 3600.0),
        }
    }
}

/// Run both oracles on in-memory clips. Labels are class names.
pub fn identifiability_scores(
    clips: &[(String, AudioClip)],
    oracle: &OracleSpec,
) -> IdentifiabilityReport {
    let texture: Vec<(f64, bool)> = clips
        .iter()
        .filter(|(c, _)| *c == oracle.texture_pair.0 || *c == oracle.texture_pair.1)
        .map(|(c, clip)| (energy_cv_feature(clip), *c == oracle.texture_pair.0))
        .collect();
    let timing: Vec<(f64, bool)> = clips
        .iter()
        .filter(|(c, _)| *c == oracle.timing_pair.0 || *c == oracle.timing_pair.1)
        .map(|(c, clip)| {
            (
                band_alternation_feature(clip, oracle.carriers),
                *c == oracle.timing_pair.0,
            )
        })
        .collect();
    IdentifiabilityReport {
        texture_pair_accuracy: best_threshold_accuracy(&texture),
        timing_pair_accuracy: best_threshold_accuracy(&timing),
        texture_pair: oracle.texture_pair.clone(),
        timing_pair: oracle.timing_pair.clone(),
    }
}

/// Load a generated corpus from disk and gate it on both oracles at the
/// given accuracy floor (0.95 by convention).
pub fn identifiability_check(
    metas: &[RecordingMeta],
    oracle: &OracleSpec,
    floor: f64,
) -> Result<IdentifiabilityReport, SynthError> {
    let mut clips = Vec::new();
    for meta in metas {
        let relevant = [
            &oracle.texture_pair.0,
            &oracle.texture_pair.1,
            &oracle.timing_pair.0,
            &oracle.timing_pair.1,
        ]
        .iter()
        .any(|c| **c == meta.class_label);
        if relevant {
            clips.push((
                meta.class_label.clone(),
                normalize_peak(&read_audio(&meta.path)?),
            ));
        }
    }
    let report = identifiability_scores(&clips, oracle);
    if report.texture_pair_accuracy < floor {
        return Err(SynthError::NotIdentifiable(format!(
            "texture pair {:?} separates at {:.3}, floor {floor}",
            report.texture_pair, report.texture_pair_accuracy
        )));
    }
    if report.timing_pair_accuracy < floor {
        return Err(SynthError::NotIdentifiable(format!(
            "timing pair {:?} separates at {:.3}, floor {floor}",
            report.timing_pair, report.timing_pair_accuracy
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_classifier_finds_clean_split() {
        let data: Vec<(f64, bool)> = (0..20)
            .map(|i| (i as f64, i >= 10))
            .collect();
        assert_eq!(best_threshold_accuracy(&data), 1.0);
        // inverted polarity scores equally
        let data: Vec<(f64, bool)> = (0..20).map(|i| (i as f64, i < 10)).collect();
        assert_eq!(best_threshold_accuracy(&data), 1.0);
    }

    #[test]
    fn overlapping_features_score_near_chance() {
        let data: Vec<(f64, bool)> = (0..100)
            .map(|i| ((i % 10) as f64, i % 2 == 0))
            .collect();
        let acc = best_threshold_accuracy(&data);
        assert!(acc < 0.7, "accuracy {acc}");
    }
}
