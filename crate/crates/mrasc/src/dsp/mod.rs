//! Spectrogram front-end: STFT, Mel filterbank, log scaling and aligned
//! multi-resolution segment extraction.

mod segments;
mod spectral;
pub mod store;

pub use segments::{
    apply_standardization, extract_segments, standardize, ResolutionStats, SegmentSource,
    SegmentTuple,
};
pub use spectral::{
    hz_to_mel, log_mel, mel_filterbank, mel_to_hz, stft_power, MelFilterbank, PowerSpectrogram,
};

use thiserror::Error;

/// FFT window sizes used by the five temporal resolutions.
pub const STANDARD_FFT_SIZES: [usize; 5] = [512, 1024, 2048, 4096, 8192];

/// Mel bands per segment.
pub const MEL_BANDS: usize = 80;

/// STFT frames per segment.
pub const FRAMES_PER_SEGMENT: usize = 80;

/// Additive floor inside the log, `ln(power + EPS)`.
pub const LOG_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("clip of {got} samples is shorter than the required {needed}")]
    InsufficientInput { needed: usize, got: usize },
    #[error("unsupported FFT size {0}; expected one of 512, 1024, 2048, 4096, 8192")]
    BadFftSize(usize),
    #[error("resolution {fft} has {got} segments; need at least 2 to standardize")]
    TooFewSegments { fft: usize, got: usize },
    #[error("no statistics recorded for resolution {0}")]
    MissingStats(usize),
    #[error("segment store: {0}")]
    Store(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One temporal resolution: an FFT window with 50% overlap, producing
/// 80 Mel bands by 80 frames per segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ResolutionProfile {
    pub fft_size: usize,
    pub hop: usize,
    pub mel_bands: usize,
    pub frames_per_segment: usize,
    pub sample_rate: u32,
}

impl ResolutionProfile {
    pub fn new(fft_size: usize, sample_rate: u32) -> Result<Self, DspError> {
        if !STANDARD_FFT_SIZES.contains(&fft_size) {
            return Err(DspError::BadFftSize(fft_size));
        }
        Ok(Self {
            fft_size,
            hop: fft_size / 2,
            mel_bands: MEL_BANDS,
            frames_per_segment: FRAMES_PER_SEGMENT,
            sample_rate,
        })
    }

    /// All five standard resolutions, narrowest window first.
    pub fn standard_set(sample_rate: u32) -> Vec<Self> {
        STANDARD_FFT_SIZES
            .iter()
            .map(|&fft| Self::new(fft, sample_rate).unwrap())
            .collect()
    }

    /// Samples covered by one 80-frame segment: `79 * hop + fft_size`.
    pub fn span_samples(&self) -> usize {
        (self.frames_per_segment - 1) * self.hop + self.fft_size
    }
}

/// One log-Mel segment, tagged with its resolution and provenance.
#[derive(Debug, Clone)]
pub struct MelSegment {
    /// `mel_bands * frames` cells, row-major over (mel, time).
    pub values: Vec<f32>,
    pub profile: ResolutionProfile,
    pub source_path: String,
    pub class_label: String,
    pub location_id: String,
    pub offset_samples: usize,
    /// Which augmentation produced the source audio ("none" for originals).
    pub augmentation: String,
}

impl MelSegment {
    pub fn at(&self, mel: usize, frame: usize) -> f32 {
        self.values[mel * self.profile.frames_per_segment + frame]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_enforces_half_overlap() {
        let p = ResolutionProfile::new(512, 44_100).unwrap();
        assert_eq!(p.hop, 256);
        assert_eq!(p.mel_bands, 80);
        assert_eq!(p.frames_per_segment, 80);
    }

    #[test]
    fn profile_rejects_odd_sizes() {
        assert!(matches!(
            ResolutionProfile::new(513, 44_100),
            Err(DspError::BadFftSize(513))
        ));
    }

    #[test]
    fn segment_spans_match_framing_arithmetic() {
        let narrow = ResolutionProfile::new(512, 44_100).unwrap();
        assert_eq!(narrow.span_samples(), 20_736);
        // ~0.470 s at 44.1 kHz
        let secs = narrow.span_samples() as f64 / 44_100.0;
        assert!((secs - 0.470).abs() < 1e-3);

        let wide = ResolutionProfile::new(8192, 44_100).unwrap();
        assert_eq!(wide.span_samples(), 331_776);
        let secs = wide.span_samples() as f64 / 44_100.0;
        assert!((secs - 7.523).abs() < 1e-3);
    }
}
