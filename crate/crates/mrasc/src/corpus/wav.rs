//! Minimal RIFF/WAVE codec: reads PCM 16-bit and IEEE float 32-bit with one
//! or two channels, writes float 32-bit mono.

use std::path::Path;

use super::{AudioClip, CorpusError};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

/// Read and decode a WAV file. Stereo is downmixed by channel mean, PCM16
/// samples are scaled by 1/32768.
pub fn read_audio(path: impl AsRef<Path>) -> Result<AudioClip, CorpusError> {
    let bytes = std::fs::read(path)?;
    parse_wav(&bytes)
}

/// Decode WAV bytes. See [`read_audio`].
pub fn parse_wav(bytes: &[u8]) -> Result<AudioClip, CorpusError> {
    if bytes.len() < 12 {
        return Err(CorpusError::CorruptFile("shorter than a RIFF header".into()));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(CorpusError::CorruptFile("missing RIFF tag".into()));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(CorpusError::CorruptFile("missing WAVE tag".into()));
    }

    let mut pos = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None; // (code, channels, rate, bits)
    let mut data: Option<&[u8]> = None;

    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body_start + 16 > bytes.len() {
                    return Err(CorpusError::CorruptFile("fmt chunk truncated".into()));
                }
                let f = &bytes[body_start..];
                let code = u16::from_le_bytes([f[0], f[1]]);
                let channels = u16::from_le_bytes([f[2], f[3]]);
                let rate = u32::from_le_bytes([f[4], f[5], f[6], f[7]]);
                let bits = u16::from_le_bytes([f[14], f[15]]);
                format = Some((code, channels, rate, bits));
            }
            b"data" => {
                if body_start + size > bytes.len() {
                    return Err(CorpusError::CorruptFile(format!(
                        "data chunk declares {size} bytes but only {} remain",
                        bytes.len() - body_start
                    )));
                }
                data = Some(&bytes[body_start..body_start + size]);
            }
            _ => {}
        }
        // chunks are word-aligned; odd sizes carry a pad byte
        pos = body_start + size + (size & 1);
    }

    let (code, channels, rate, bits) =
        format.ok_or_else(|| CorpusError::CorruptFile("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| CorpusError::CorruptFile("no data chunk".into()))?;

    if !(1..=2).contains(&channels) {
        return Err(CorpusError::UnsupportedFormat(format!(
            "{channels} channels (expected 1 or 2)"
        )));
    }
    if rate == 0 {
        return Err(CorpusError::CorruptFile("zero sample rate".into()));
    }

    let samples = match (code, bits) {
        (FORMAT_PCM, 16) => decode_frames(data, channels as usize, 2, |b| {
            f32::from(i16::from_le_bytes([b[0], b[1]])) / 32_768.0
        })?,
        (FORMAT_IEEE_FLOAT, 32) => decode_frames(data, channels as usize, 4, |b| {
            f32::from_le_bytes([b[0], b[1], b[2], b[3]])
        })?,
        (code, bits) => {
            return Err(CorpusError::UnsupportedFormat(format!(
                "format code {code} at {bits} bits (expected PCM16 or FLOAT32)"
            )))
        }
    };
    if samples.is_empty() {
        return Err(CorpusError::EmptyClip);
    }
    Ok(AudioClip {
        samples,
        sample_rate: rate,
    })
}

fn decode_frames(
    data: &[u8],
    channels: usize,
    sample_bytes: usize,
    decode: impl Fn(&[u8]) -> f32,
) -> Result<Vec<f32>, CorpusError> {
    let frame_bytes = channels * sample_bytes;
    if data.len() % frame_bytes != 0 {
        return Err(CorpusError::CorruptFile(
            "data chunk is not a whole number of frames".into(),
        ));
    }
    let mut out = Vec::with_capacity(data.len() / frame_bytes);
    for frame in data.chunks_exact(frame_bytes) {
        let mut acc = 0.0f32;
        for ch in frame.chunks_exact(sample_bytes) {
            acc += decode(ch);
        }
        out.push(acc / channels as f32);
    }
    Ok(out)
}

/// Encode a clip as 32-bit IEEE float mono WAV bytes.
pub fn encode_wav_f32(clip: &AudioClip) -> Vec<u8> {
    let n = clip.samples.len();
    let data_size = (n * 4) as u32;
    let mut out = Vec::with_capacity(58 + n * 4);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(50u32 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    // fmt
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_IEEE_FLOAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 4).to_le_bytes()); // byte rate
    out.extend_from_slice(&4u16.to_le_bytes()); // block align
    out.extend_from_slice(&32u16.to_le_bytes());
    // fact chunk, required for non-PCM formats
    out.extend_from_slice(b"fact");
    out.extend_from_slice(&4u32.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    // data
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for s in &clip.samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Write a clip to disk as 32-bit float mono WAV.
pub fn write_audio(path: impl AsRef<Path>, clip: &AudioClip) -> Result<(), CorpusError> {
    std::fs::write(path, encode_wav_f32(clip))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pcm16_mono(samples: &[i16], rate: u32) -> Vec<u8> {
        let data: Vec<u8> = samples.iter().flat_map(|s| s.to_le_bytes()).collect();
        build_wav(FORMAT_PCM, 1, rate, 16, &data)
    }

    fn build_wav(code: u16, channels: u16, rate: u32, bits: u16, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&code.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        let byte_rate = rate * u32::from(channels) * u32::from(bits / 8);
        out.extend_from_slice(&byte_rate.to_le_bytes());
        out.extend_from_slice(&(channels * bits / 8).to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(data);
        out
    }

    #[test]
    fn pcm16_scaling_identity() {
        let clip = parse_wav(&pcm16_mono(&[16_384], 44_100)).unwrap();
        assert_eq!(clip.samples, vec![0.5]);
        assert_eq!(clip.sample_rate, 44_100);
    }

    #[test]
    fn stereo_downmix_is_channel_mean() {
        let mut data = Vec::new();
        data.extend_from_slice(&0.2f32.to_le_bytes());
        data.extend_from_slice(&0.6f32.to_le_bytes());
        let clip = parse_wav(&build_wav(FORMAT_IEEE_FLOAT, 2, 44_100, 32, &data)).unwrap();
        assert!((clip.samples[0] - 0.4).abs() < 1e-7);
    }

    #[test]
    fn duration_from_sample_count() {
        let samples = vec![0i16; 441_000];
        let clip = parse_wav(&pcm16_mono(&samples, 44_100)).unwrap();
        assert_eq!(clip.duration_s(), 10.0);
    }

    #[test]
    fn unsupported_codec_is_reported() {
        let wav = build_wav(7, 1, 44_100, 16, &[0, 0]);
        match parse_wav(&wav) {
            Err(CorpusError::UnsupportedFormat(_)) => {}
            other => panic!("expected UnsupportedFormat, got {other:?}"),
        }
    }

    #[test]
    fn truncated_data_chunk_is_corrupt() {
        let mut wav = pcm16_mono(&[1, 2, 3, 4], 44_100);
        wav.truncate(wav.len() - 3);
        match parse_wav(&wav) {
            Err(CorpusError::CorruptFile(_)) => {}
            other => panic!("expected CorruptFile, got {other:?}"),
        }
    }

    #[test]
    fn float32_round_trip_is_bit_exact() {
        let samples: Vec<f32> = (0..1000)
            .map(|i| ((i as f32) * 0.37).sin() * 0.9)
            .collect();
        let clip = AudioClip::new(samples.clone(), 22_050);
        let decoded = parse_wav(&encode_wav_f32(&clip)).unwrap();
        assert_eq!(decoded.sample_rate, 22_050);
        assert_eq!(
            decoded.samples.iter().map(|s| s.to_bits()).collect::<Vec<_>>(),
            samples.iter().map(|s| s.to_bits()).collect::<Vec<_>>()
        );
    }
}
