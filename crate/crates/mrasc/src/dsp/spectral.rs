//! STFT power spectra, Mel filterbanks and log scaling.
//!
//! The spectral path is computed in f64 end to end; segments are narrowed
//! to f32 only when they become training inputs.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{DspError, LOG_EPS};
use crate::corpus::AudioClip;

/// Squared-magnitude spectrogram, frame-major storage.
#[derive(Debug, Clone)]
pub struct PowerSpectrogram {
    pub bins: usize,
    pub n_frames: usize,
    data: Vec<f64>,
}

impl PowerSpectrogram {
    pub fn at(&self, bin: usize, frame: usize) -> f64 {
        self.data[frame * self.bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[f64] {
        &self.data[frame * self.bins..(frame + 1) * self.bins]
    }
}

/// Periodic Hann window.
pub(crate) fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

/// Hann-windowed STFT power. Frame `t` covers samples
/// `[t*hop, t*hop + fft_size)`; the output has `fft_size/2 + 1` bins and
/// `floor((len - fft_size)/hop) + 1` frames.
pub fn stft_power(
    clip: &AudioClip,
    fft_size: usize,
    hop: usize,
) -> Result<PowerSpectrogram, DspError> {
    stft_power_slice(&clip.samples, fft_size, hop)
}

/// Reusable STFT plan: window, FFT plan and scratch buffers.
pub(crate) struct StftPlan {
    fft_size: usize,
    hop: usize,
    window: Vec<f64>,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl StftPlan {
    pub(crate) fn new(fft_size: usize, hop: usize) -> Self {
        assert!(fft_size >= 2 && hop >= 1);
        let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
        let scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        Self {
            fft_size,
            hop,
            window: hann_window(fft_size),
            fft,
            buf: vec![Complex::new(0.0, 0.0); fft_size],
            scratch,
        }
    }

    pub(crate) fn power(&mut self, samples: &[f32]) -> Result<PowerSpectrogram, DspError> {
        if samples.len() < self.fft_size {
            return Err(DspError::InsufficientInput {
                needed: self.fft_size,
                got: samples.len(),
            });
        }
        let n_frames = (samples.len() - self.fft_size) / self.hop + 1;
        let bins = self.fft_size / 2 + 1;
        let mut data = Vec::with_capacity(n_frames * bins);
        for t in 0..n_frames {
            let start = t * self.hop;
            for (i, c) in self.buf.iter_mut().enumerate() {
                *c = Complex::new(f64::from(samples[start + i]) * self.window[i], 0.0);
            }
            self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
            data.extend(self.buf[..bins].iter().map(|c| c.norm_sqr()));
        }
        Ok(PowerSpectrogram {
            bins,
            n_frames,
            data,
        })
    }
}

pub(crate) fn stft_power_slice(
    samples: &[f32],
    fft_size: usize,
    hop: usize,
) -> Result<PowerSpectrogram, DspError> {
    StftPlan::new(fft_size, hop).power(samples)
}

/// Triangular Mel filterbank, `mel_bands x (fft_size/2 + 1)`.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub mel_bands: usize,
    pub bins: usize,
    /// row-major weights, `weights[m * bins + k]`
    pub weights: Vec<f64>,
    /// band edges in Hz: `mel_bands + 2` points, uniform on the mel scale
    pub edges_hz: Vec<f64>,
    /// per band, the half-open bin range with non-zero weight
    support: Vec<(usize, usize)>,
}

impl MelFilterbank {
    pub fn weight(&self, mel: usize, bin: usize) -> f64 {
        self.weights[mel * self.bins + bin]
    }

    pub fn row(&self, mel: usize) -> &[f64] {
        &self.weights[mel * self.bins..(mel + 1) * self.bins]
    }
}

/// `m(f) = 2595 * log10(1 + f / 700)`
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Build a peak-normalized triangular Mel filterbank with band centers
/// uniform on the mel scale between 0 Hz and Nyquist. The FFT bin nearest
/// each band center is pinned to weight 1.0 so that narrow low bands keep
/// at least one positive weight.
pub fn mel_filterbank(sample_rate: u32, fft_size: usize, mel_bands: usize) -> MelFilterbank {
    assert!(mel_bands >= 2, "need at least 2 mel bands");
    let bins = fft_size / 2 + 1;
    let nyquist = f64::from(sample_rate) / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let edges_hz: Vec<f64> = (0..mel_bands + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (mel_bands + 1) as f64))
        .collect();
    let bin_hz = f64::from(sample_rate) / fft_size as f64;

    let mut weights = vec![0.0; mel_bands * bins];
    for m in 0..mel_bands {
        let (left, center, right) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let w = if f <= center {
                (f - left) / (center - left)
            } else {
                (right - f) / (right - center)
            };
            if w > 0.0 {
                weights[m * bins + k] = w;
            }
        }
        let center_bin = ((center / bin_hz).round() as usize).min(bins - 1);
        weights[m * bins + center_bin] = 1.0;
    }
    let support = (0..mel_bands)
        .map(|m| {
            let row = &weights[m * bins..(m + 1) * bins];
            let lo = row.iter().position(|&w| w > 0.0).unwrap_or(0);
            let hi = bins - row.iter().rev().position(|&w| w > 0.0).unwrap_or(bins);
            (lo, hi)
        })
        .collect();
    MelFilterbank {
        mel_bands,
        bins,
        weights,
        edges_hz,
        support,
    }
}

/// Log-amplitude Mel spectrogram: `ln(fb * power + 1e-6)`, one row per
/// Mel band, frame-major input preserved as column order.
pub fn log_mel(power: &PowerSpectrogram, fb: &MelFilterbank) -> Vec<f64> {
    assert_eq!(power.bins, fb.bins, "filterbank/spectrogram bin mismatch");
    assert!(power.n_frames >= 1);
    let mut out = vec![0.0; fb.mel_bands * power.n_frames];
    for t in 0..power.n_frames {
        let frame = power.frame(t);
        for m in 0..fb.mel_bands {
            let (lo, hi) = fb.support[m];
            let row = &fb.row(m)[lo..hi];
            let mut acc = 0.0;
            for (w, p) in row.iter().zip(&frame[lo..hi]) {
                acc += w * p;
            }
            out[m * power.n_frames + t] = (acc + LOG_EPS).ln();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine_clip(freq: f64, rate: u32, len: usize) -> AudioClip {
        let samples: Vec<f32> = (0..len)
            .map(|i| (std::f64::consts::TAU * freq * i as f64 / f64::from(rate)).sin() as f32)
            .collect();
        AudioClip::new(samples, rate)
    }

    #[test]
    fn frame_count_follows_framing_arithmetic() {
        let clip = AudioClip::new(vec![0.0; 441_000], 44_100);
        let spec = stft_power(&clip, 512, 256).unwrap();
        assert_eq!(spec.n_frames, 1721);
        assert_eq!(spec.bins, 257);
    }

    #[test]
    fn zero_clip_gives_zero_power() {
        let clip = AudioClip::new(vec![0.0; 2048], 44_100);
        let spec = stft_power(&clip, 512, 256).unwrap();
        for t in 0..spec.n_frames {
            assert!(spec.frame(t).iter().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn short_clip_is_an_error() {
        let clip = AudioClip::new(vec![0.1; 100], 44_100);
        assert!(matches!(
            stft_power(&clip, 512, 256),
            Err(DspError::InsufficientInput { needed: 512, got: 100 })
        ));
    }

    #[test]
    fn bin_aligned_sine_concentrates_energy() {
        // k = 12 cycles inside one 512-sample window
        let rate = 44_100;
        let freq = f64::from(rate) * 12.0 / 512.0;
        let clip = sine_clip(freq, rate, 512);
        let spec = stft_power(&clip, 512, 256).unwrap();
        let total: f64 = spec.frame(0).iter().sum();
        // Hann leakage spreads into the two neighbors of the target bin
        let near: f64 = (11..=13).map(|k| spec.at(k, 0)).sum();
        assert!(near / total >= 0.90, "energy ratio {}", near / total);
        let peak_bin = (0..spec.bins)
            .max_by(|&a, &b| spec.at(a, 0).total_cmp(&spec.at(b, 0)))
            .unwrap();
        assert_eq!(peak_bin, 12);
    }

    #[test]
    fn mel_scale_anchors() {
        assert!((hz_to_mel(1000.0) - 1000.0).abs() < 0.5);
        assert_eq!(hz_to_mel(0.0), 0.0);
    }

    #[test]
    fn filterbank_rows_are_positive_and_unimodal() {
        for &fft in &[512usize, 2048] {
            let fb = mel_filterbank(44_100, fft, 80);
            for m in 0..fb.mel_bands {
                let row = fb.row(m);
                assert!(row.iter().any(|&w| w > 0.0), "band {m} empty at fft {fft}");
                // unimodal: rises to the peak, then falls
                let peak = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap()
                    .0;
                for k in 1..=peak {
                    assert!(row[k] >= row[k - 1] || row[k] == 1.0);
                }
                for k in peak + 1..row.len() {
                    assert!(row[k] <= row[k - 1] || row[k - 1] == 1.0);
                }
            }
        }
    }

    #[test]
    fn filterbank_covers_bins_between_first_and_last_center() {
        let fb = mel_filterbank(44_100, 2048, 80);
        let bin_hz = 44_100.0 / 2048.0;
        let first_center_bin = (fb.edges_hz[1] / bin_hz).ceil() as usize;
        let last_center_bin = (fb.edges_hz[80] / bin_hz).floor() as usize;
        for k in first_center_bin..=last_center_bin {
            let col: f64 = (0..fb.mel_bands).map(|m| fb.weight(m, k)).sum();
            assert!(col > 0.0, "bin {k} uncovered");
        }
    }

    #[test]
    fn log_mel_floor_is_ln_eps() {
        let clip = AudioClip::new(vec![0.0; 1024], 44_100);
        let spec = stft_power(&clip, 512, 256).unwrap();
        let fb = mel_filterbank(44_100, 512, 80);
        let lm = log_mel(&spec, &fb);
        for &v in &lm {
            assert!((v - LOG_EPS.ln()).abs() < 1e-12);
            assert!((v + 13.8155).abs() < 1e-3);
        }
    }

    #[test]
    fn log_mel_monotone_under_power_doubling() {
        let clip = sine_clip(1000.0, 44_100, 2048);
        let louder = AudioClip::new(
            clip.samples.iter().map(|s| s * std::f32::consts::SQRT_2).collect(),
            44_100,
        );
        let fb = mel_filterbank(44_100, 512, 80);
        let a = log_mel(&stft_power(&clip, 512, 256).unwrap(), &fb);
        let b = log_mel(&stft_power(&louder, 512, 256).unwrap(), &fb);
        let mut strict = 0;
        for (x, y) in a.iter().zip(&b) {
            assert!(y >= x);
            if y > x {
                strict += 1;
            }
        }
        assert!(strict > 0);
    }

    #[test]
    fn log_mel_matches_double_loop_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<f32> = (0..512 + 4 * 256).map(|_| rng.random_range(-1.0..1.0)).collect();
        let clip = AudioClip::new(samples, 44_100);
        let spec = stft_power(&clip, 512, 256).unwrap();
        assert_eq!(spec.n_frames, 5);
        let fb = mel_filterbank(44_100, 512, 80);
        let got = log_mel(&spec, &fb);
        for m in 0..80 {
            for t in 0..5 {
                let mut acc = 0.0;
                for k in 0..spec.bins {
                    acc += fb.weight(m, k) * spec.at(k, t);
                }
                let want = (acc + LOG_EPS).ln();
                assert!((got[m * 5 + t] - want).abs() < 1e-9);
            }
        }
    }
}
