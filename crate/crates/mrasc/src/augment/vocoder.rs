//! Phase-vocoder time stretching and pitch shifting.
//!
//! Analysis runs at FFT 2048 with hop 512 (Hann window). Stretching walks
//! the analysis frames at a fractional rate, interpolating magnitudes and
//! propagating per-bin instantaneous frequency; pitch shifting stretches
//! by the factor and resamples back to the original duration.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::corpus::AudioClip;

pub(crate) const PV_FFT: usize = 2048;
pub(crate) const PV_HOP: usize = 512;

/// Minimum clip length either operation accepts.
pub const MIN_VOCODER_SAMPLES: usize = 4096;

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

fn princarg(phase: f64) -> f64 {
    phase - std::f64::consts::TAU * (phase / std::f64::consts::TAU).round()
}

/// Complex STFT frames (full spectrum) at the vocoder geometry.
fn analysis_frames(samples: &[f32]) -> Vec<Vec<Complex<f64>>> {
    let window = hann(PV_FFT);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(PV_FFT);
    let n_frames = (samples.len() - PV_FFT) / PV_HOP + 1;
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    (0..n_frames)
        .map(|t| {
            let mut buf: Vec<Complex<f64>> = samples[t * PV_HOP..t * PV_HOP + PV_FFT]
                .iter()
                .zip(&window)
                .map(|(&s, &w)| Complex::new(f64::from(s) * w, 0.0))
                .collect();
            fft.process_with_scratch(&mut buf, &mut scratch);
            buf
        })
        .collect()
}

/// Stretch to an exact output length with phase propagation.
fn stretch_to(samples: &[f32], out_len: usize) -> Vec<f32> {
    let frames = analysis_frames(samples);
    let bins = PV_FFT / 2 + 1;
    let window = hann(PV_FFT);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(PV_FFT);
    let mut scratch = vec![Complex::new(0.0, 0.0); ifft.get_inplace_scratch_len()];

    // analysis frames advanced per synthesis frame
    let in_span = (frames.len() - 1) as f64;
    let out_frames = ((out_len.max(PV_FFT) - PV_FFT) / PV_HOP + 1).max(2);
    let step = in_span / (out_frames - 1).max(1) as f64;

    let mut acc = vec![0.0f64; (out_frames - 1) * PV_HOP + PV_FFT];
    let mut norm = vec![0.0f64; acc.len()];
    let mut phase: Vec<f64> = (0..bins).map(|k| frames[0][k].arg()).collect();
    let expected: Vec<f64> = (0..bins)
        .map(|k| std::f64::consts::TAU * k as f64 * PV_HOP as f64 / PV_FFT as f64)
        .collect();

    let mut buf = vec![Complex::new(0.0, 0.0); PV_FFT];
    for j in 0..out_frames {
        let pos = (j as f64 * step).min(in_span - 1e-9).max(0.0);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(frames.len() - 1);
        let frac = pos - i0 as f64;

        for k in 0..bins {
            let mag = frames[i0][k].norm() * (1.0 - frac) + frames[i1][k].norm() * frac;
            buf[k] = Complex::from_polar(mag, phase[k]);
        }
        for k in bins..PV_FFT {
            buf[k] = buf[PV_FFT - k].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);

        let at = j * PV_HOP;
        for (i, (&w, c)) in window.iter().zip(&buf).enumerate() {
            // rustfft's inverse is unnormalized
            let v = c.re / PV_FFT as f64;
            acc[at + i] += v * w;
            norm[at + i] += w * w;
        }

        // advance phases by the instantaneous frequency between the
        // bracketing analysis frames
        for k in 0..bins {
            let dphi = princarg(frames[i1][k].arg() - frames[i0][k].arg() - expected[k])
                + expected[k];
            phase[k] += dphi;
        }
    }

    // flooring the window-power normalizer keeps boundary samples (with
    // almost no overlap coverage) attenuated instead of blown up;
    // steady-state coverage is sum(w^2)/hop
    let steady: f64 = window.iter().map(|w| w * w).sum::<f64>() / PV_HOP as f64;
    let floor = steady * 0.1;
    (0..out_len)
        .map(|i| {
            if i < acc.len() {
                (acc[i] / norm[i].max(floor)) as f32
            } else {
                0.0
            }
        })
        .collect()
}

fn clamp_peak(samples: &mut [f32]) {
    let peak = samples.iter().fold(0.0f32, |m, s| m.max(s.abs()));
    if peak > 1.0 {
        let inv = 1.0 / peak;
        for s in samples {
            *s *= inv;
        }
    }
}

/// Change tempo by `rate` (0.9 to 1.1) without changing pitch. Output
/// length is exactly `round(len / rate)`; `rate = 1.0` reproduces the
/// input duration.
pub fn time_stretch(clip: &AudioClip, rate: f64) -> AudioClip {
    assert!(
        clip.len() >= MIN_VOCODER_SAMPLES,
        "need at least {MIN_VOCODER_SAMPLES} samples"
    );
    assert!(rate > 0.0);
    let out_len = (clip.len() as f64 / rate).round() as usize;
    let mut samples = stretch_to(&clip.samples, out_len);
    clamp_peak(&mut samples);
    AudioClip::new(samples, clip.sample_rate)
}

/// Shift pitch by `factor` (0.9 to 1.1) keeping the duration: stretch the
/// signal by the factor, then resample back over the original length.
pub fn pitch_shift(clip: &AudioClip, factor: f64) -> AudioClip {
    assert!(
        clip.len() >= MIN_VOCODER_SAMPLES,
        "need at least {MIN_VOCODER_SAMPLES} samples"
    );
    assert!(factor > 0.0);
    let stretched_len = (clip.len() as f64 * factor).round() as usize;
    let stretched = stretch_to(&clip.samples, stretched_len);
    // linear-interpolation resample with read step `factor`
    let mut samples: Vec<f32> = (0..clip.len())
        .map(|i| {
            let p = i as f64 * factor;
            let j = p.floor() as usize;
            if j + 1 >= stretched.len() {
                *stretched.last().unwrap_or(&0.0)
            } else {
                let frac = (p - j as f64) as f32;
                stretched[j] * (1.0 - frac) + stretched[j + 1] * frac
            }
        })
        .collect();
    clamp_peak(&mut samples);
    AudioClip::new(samples, clip.sample_rate)
}
