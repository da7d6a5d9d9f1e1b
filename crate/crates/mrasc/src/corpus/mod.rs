//! Manifest-driven dataset handling: WAV I/O, signal normalization and
//! grouped-stratified fold construction.

mod folds;
mod manifest;
mod wav;

pub use folds::{grouped_stratified_folds, FoldPlan};
pub use manifest::{load_manifest, load_manifest_path, RecordingMeta};
pub use wav::{encode_wav_f32, parse_wav, read_audio, write_audio};

use thiserror::Error;

/// Errors produced while loading manifests, decoding audio or building folds.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("manifest line {line}: duplicate path `{path}`")]
    DuplicatePath { line: usize, path: String },
    #[error("manifest line {line}: unknown class `{class}`")]
    UnknownClass { line: usize, class: String },
    #[error("location `{location}` is listed under both `{first}` and `{second}`")]
    LocationClassClash {
        location: String,
        first: String,
        second: String,
    },
    #[error("class `{class}` has {locations} locations, fewer than {folds} folds")]
    InfeasibleFolds {
        class: String,
        locations: usize,
        folds: usize,
    },
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt WAV file: {0}")]
    CorruptFile(String),
    #[error("audio clip is empty")]
    EmptyClip,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A mono audio signal with its sample rate.
///
/// Samples are finite and, once [`normalize_peak`] has run, bounded by 1.0
/// in magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    /// Wrap raw samples. Panics on an empty signal, a zero sample rate or
    /// non-finite samples; those are programmer errors, not data errors.
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        assert!(!samples.is_empty(), "AudioClip must not be empty");
        assert!(sample_rate > 0, "sample rate must be positive");
        assert!(
            samples.iter().all(|s| s.is_finite()),
            "AudioClip samples must be finite"
        );
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// Scale a clip so its peak magnitude is exactly 1.0.
///
/// An all-zero clip comes back unchanged.
pub fn normalize_peak(clip: &AudioClip) -> AudioClip {
    let peak = clip.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()));
    if peak == 0.0 {
        return clip.clone();
    }
    let inv = 1.0 / peak;
    AudioClip {
        samples: clip.samples.iter().map(|s| s * inv).collect(),
        sample_rate: clip.sample_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_peak_scales_by_inverse_peak() {
        let clip = AudioClip::new(vec![0.5, -0.25], 44_100);
        let out = normalize_peak(&clip);
        assert_eq!(out.samples, vec![1.0, -0.5]);
        assert_eq!(out.sample_rate, 44_100);
    }

    #[test]
    fn normalize_peak_leaves_silence_alone() {
        let clip = AudioClip::new(vec![0.0, 0.0, 0.0], 8_000);
        let out = normalize_peak(&clip);
        assert_eq!(out.samples, clip.samples);
    }

    #[test]
    fn normalize_peak_handles_preclipped_input() {
        let clip = AudioClip::new(vec![-2.0, 1.0], 44_100);
        let out = normalize_peak(&clip);
        assert_eq!(out.samples, vec![-1.0, 0.5]);
    }

    #[test]
    fn duration_is_len_over_rate() {
        let clip = AudioClip::new(vec![0.0; 441_000], 44_100);
        assert_eq!(clip.duration_s(), 10.0);
    }
}
