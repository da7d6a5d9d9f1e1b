//! Non-silent interval detection on frame RMS.

use crate::corpus::AudioClip;

/// RMS analysis frame length in samples.
pub const RMS_FRAME: usize = 2048;
/// RMS analysis hop in samples.
pub const RMS_HOP: usize = 512;

const MIN_INTERVAL_MS: f64 = 100.0;

/// A half-open sample range judged non-silent.
#[derive(Debug, Clone, PartialEq)]
pub struct NonSilentInterval {
    pub start_sample: usize,
    pub end_sample: usize,
    /// interval RMS in dB relative to the clip's loudest analysis frame
    pub rms_db: f64,
}

impl NonSilentInterval {
    pub fn len(&self) -> usize {
        self.end_sample - self.start_sample
    }

    pub fn is_empty(&self) -> bool {
        self.end_sample <= self.start_sample
    }
}

/// Detect non-silent intervals.
///
/// Frame RMS runs on 2048-sample windows with hop 512; a frame is
/// non-silent iff its RMS relative to the loudest frame exceeds
/// `threshold_db` (negative). Runs of flagged frames merge into intervals
/// at hop granularity; since the window is four hops long, an interval
/// edge can reach up to one window length into the surrounding silence.
/// Intervals shorter than 100 ms are absorbed into their nearest
/// neighbor. All-silent input yields an empty list.
pub fn detect_nonsilent(clip: &AudioClip, threshold_db: f64) -> Vec<NonSilentInterval> {
    assert!(threshold_db < 0.0, "threshold must be below the peak frame");
    let n = clip.len();
    let frame = RMS_FRAME.min(n);
    let n_frames = if n <= frame { 1 } else { (n - frame) / RMS_HOP + 1 };

    let mut rms = Vec::with_capacity(n_frames);
    let mut max_rms = 0.0f64;
    for t in 0..n_frames {
        let start = t * RMS_HOP;
        let end = (start + frame).min(n);
        let sq: f64 = clip.samples[start..end]
            .iter()
            .map(|&s| f64::from(s) * f64::from(s))
            .sum();
        let r = (sq / (end - start) as f64).sqrt();
        max_rms = max_rms.max(r);
        rms.push(r);
    }
    if max_rms == 0.0 {
        return Vec::new();
    }

    // flagged frames -> hop-granular runs; a frame owns [t*hop, t*hop+hop),
    // the final frame extends to the clip end
    let floor_db = |r: f64| 20.0 * (r / max_rms).max(1e-12).log10();
    let mut intervals: Vec<(usize, usize)> = Vec::new();
    let mut open: Option<usize> = None;
    for t in 0..n_frames {
        let loud = floor_db(rms[t]) > threshold_db;
        match (loud, open) {
            (true, None) => open = Some(t),
            (false, Some(s)) => {
                intervals.push((s * RMS_HOP, t * RMS_HOP));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        intervals.push((s * RMS_HOP, n));
    }

    // absorb sub-100 ms intervals into the neighbor across the smaller gap
    let min_len = (MIN_INTERVAL_MS / 1000.0 * f64::from(clip.sample_rate)).round() as usize;
    loop {
        if intervals.len() <= 1 {
            break;
        }
        let Some(short) = intervals.iter().position(|&(s, e)| e - s < min_len) else {
            break;
        };
        let merge_with_prev = if short == 0 {
            false
        } else if short == intervals.len() - 1 {
            true
        } else {
            let gap_prev = intervals[short].0 - intervals[short - 1].1;
            let gap_next = intervals[short + 1].0 - intervals[short].1;
            gap_prev <= gap_next
        };
        if merge_with_prev {
            intervals[short - 1].1 = intervals[short].1;
            intervals.remove(short);
        } else {
            intervals[short + 1].0 = intervals[short].0;
            intervals.remove(short);
        }
    }

    intervals
        .into_iter()
        .map(|(start, end)| {
            let sq: f64 = clip.samples[start..end]
                .iter()
                .map(|&s| f64::from(s) * f64::from(s))
                .sum();
            let r = (sq / (end - start).max(1) as f64).sqrt();
            NonSilentInterval {
                start_sample: start,
                end_sample: end,
                rms_db: floor_db(r),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SR: u32 = 51_200;

    fn secs(s: f64) -> usize {
        (s * f64::from(SR)).round() as usize
    }

    fn tone(freq: f64, n: usize, amp: f32) -> Vec<f32> {
        (0..n)
            .map(|i| (std::f64::consts::TAU * freq * i as f64 / f64::from(SR)).sin() as f32 * amp)
            .collect()
    }

    #[test]
    fn silence_tone_silence_yields_one_interval() {
        let mut samples = vec![0.0f32; secs(1.0)];
        samples.extend(tone(440.0, secs(1.0), 1.0));
        samples.extend(vec![0.0f32; secs(1.0)]);
        let clip = AudioClip::new(samples, SR);
        let intervals = detect_nonsilent(&clip, -40.0);
        assert_eq!(intervals.len(), 1);
        let iv = &intervals[0];
        // interval must cover the tone, edges within one analysis window
        assert!(iv.start_sample <= secs(1.0));
        assert!(secs(1.0) - iv.start_sample <= RMS_FRAME);
        assert!(iv.end_sample >= secs(2.0));
        assert!(iv.end_sample - secs(2.0) <= RMS_FRAME);
        assert!(iv.rms_db > -40.0);
    }

    #[test]
    fn all_zero_clip_has_no_intervals() {
        let clip = AudioClip::new(vec![0.0; secs(0.5)], SR);
        assert!(detect_nonsilent(&clip, -40.0).is_empty());
    }

    #[test]
    fn alternating_blocks_yield_five_intervals() {
        // 10 alternating tone/silence blocks of 0.5 s, tone first
        let mut samples = Vec::new();
        for b in 0..10 {
            if b % 2 == 0 {
                samples.extend(tone(500.0, secs(0.5), 0.8));
            } else {
                samples.extend(vec![0.0f32; secs(0.5)]);
            }
        }
        let clip = AudioClip::new(samples, SR);
        let intervals = detect_nonsilent(&clip, -40.0);
        assert_eq!(intervals.len(), 5);

        // per-frame oracle: scan every frame independently and count runs
        let mut flags = Vec::new();
        let n_frames = (clip.len() - RMS_FRAME) / RMS_HOP + 1;
        let mut peak = 0.0f64;
        let mut rms = Vec::new();
        for t in 0..n_frames {
            let s = &clip.samples[t * RMS_HOP..t * RMS_HOP + RMS_FRAME];
            let r = (s.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>()
                / RMS_FRAME as f64)
                .sqrt();
            peak = peak.max(r);
            rms.push(r);
        }
        for r in rms {
            flags.push(20.0 * (r / peak).max(1e-12).log10() > -40.0);
        }
        let runs = flags
            .windows(2)
            .filter(|w| !w[0] && w[1])
            .count()
            + usize::from(flags[0]);
        assert_eq!(runs, 5);
    }

    #[test]
    fn short_blips_are_absorbed() {
        // a 30 ms blip shortly after a long block merges into it
        let mut samples = tone(440.0, secs(0.5), 0.8);
        samples.extend(vec![0.0f32; secs(0.2)]);
        samples.extend(tone(880.0, secs(0.03), 0.8));
        samples.extend(vec![0.0f32; secs(0.4)]);
        let clip = AudioClip::new(samples, SR);
        let intervals = detect_nonsilent(&clip, -40.0);
        assert_eq!(intervals.len(), 1);
        assert!(intervals[0].end_sample >= secs(0.7));
    }
}
