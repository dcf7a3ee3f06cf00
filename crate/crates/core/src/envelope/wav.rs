//! Minimal RIFF/WAVE reader and writer covering 16-bit PCM and 32-bit
//! IEEE float, mono or stereo. Unknown chunks are skipped on read.

use std::fs;
use std::path::Path;

use super::{EnvelopeError, Waveform};

/// Sample encodings supported on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    /// 16-bit signed PCM (format tag 1).
    Pcm16,
    /// 32-bit IEEE float (format tag 3).
    Float32,
}

/// Read a WAV file into a [`Waveform`].
pub fn read_wav(path: &Path) -> Result<Waveform, EnvelopeError> {
    decode_wav(&fs::read(path)?)
}

/// Write a waveform with the given on-disk sample format.
pub fn write_wav(path: &Path, w: &Waveform, format: SampleFormat) -> Result<(), EnvelopeError> {
    fs::write(path, encode_wav(w, format))?;
    Ok(())
}

pub fn encode_wav(w: &Waveform, format: SampleFormat) -> Vec<u8> {
    let channels = w.channels();
    let sample_rate = w.sample_rate();
    let (format_tag, bits): (u16, u16) = match format {
        SampleFormat::Pcm16 => (1, 16),
        SampleFormat::Float32 => (3, 32),
    };
    let block_align = channels * bits / 8;
    let byte_rate = sample_rate * block_align as u32;
    let data_len = w.samples().len() * (bits / 8) as usize;

    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&format_tag.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    match format {
        SampleFormat::Pcm16 => {
            for &x in w.samples() {
                out.extend_from_slice(&encode_i16(x).to_le_bytes());
            }
        }
        SampleFormat::Float32 => {
            for &x in w.samples() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_wav(bytes: &[u8]) -> Result<Waveform, EnvelopeError> {
    let header = |msg: &str| EnvelopeError::CorruptHeader(msg.to_string());
    if bytes.len() < 12 {
        return Err(header("file shorter than RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(header("missing RIFF/WAVE tags"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // tag, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        if body_start + size > bytes.len() {
            return Err(header("chunk extends past end of file"));
        }
        let body = &bytes[body_start..body_start + size];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(header("fmt chunk shorter than 16 bytes"));
                }
                let tag = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((tag, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned; odd sizes carry one pad byte.
        pos = body_start + size + (size & 1);
    }

    let (tag, channels, rate, bits) = fmt.ok_or_else(|| header("no fmt chunk"))?;
    let data = data.ok_or_else(|| header("no data chunk"))?;
    if !(1..=2).contains(&channels) {
        return Err(EnvelopeError::UnsupportedFormat(format!(
            "{channels} channels"
        )));
    }

    let samples: Vec<f64> = match (tag, bits) {
        (1, 16) => {
            if data.len() % 2 != 0 {
                return Err(header("odd PCM16 payload length"));
            }
            data.chunks_exact(2)
                .map(|c| decode_i16(i16::from_le_bytes(c.try_into().unwrap())))
                .collect()
        }
        (3, 32) => {
            if data.len() % 4 != 0 {
                return Err(header("float payload not a multiple of 4"));
            }
            data.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect()
        }
        _ => {
            return Err(EnvelopeError::UnsupportedFormat(format!(
                "format tag {tag} with {bits} bits"
            )))
        }
    };
    if samples.is_empty() {
        return Err(header("empty data chunk"));
    }
    Waveform::new(samples, rate, channels)
}

fn encode_i16(x: f64) -> i16 {
    let scaled = (x.clamp(-1.0, 1.0) * 32768.0).round();
    scaled.clamp(-32768.0, 32767.0) as i16
}

fn decode_i16(k: i16) -> f64 {
    k as f64 / 32768.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_round_trips_exactly() {
        let w = Waveform::mono_from(vec![0.0; 44100], 44100).unwrap();
        let back = decode_wav(&encode_wav(&w, SampleFormat::Pcm16)).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn full_scale_square_wave_within_one_lsb() {
        let samples: Vec<f64> = (0..512).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let w = Waveform::mono_from(samples.clone(), 4410).unwrap();
        let back = decode_wav(&encode_wav(&w, SampleFormat::Pcm16)).unwrap();
        for (a, b) in back.samples().iter().zip(&samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0, "{a} vs {b}");
        }
    }

    #[test]
    fn random_signal_pcm16_within_half_lsb_interior() {
        let mut rng = crate::testutil::Lcg::new(99);
        let samples: Vec<f64> = rng.vector(1000).iter().map(|x| 0.9 * x).collect();
        let w = Waveform::mono_from(samples.clone(), 4410).unwrap();
        let back = decode_wav(&encode_wav(&w, SampleFormat::Pcm16)).unwrap();
        for (a, b) in back.samples().iter().zip(&samples) {
            assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12);
        }
    }

    #[test]
    fn float32_round_trip_is_cast_exact() {
        let mut rng = crate::testutil::Lcg::new(7);
        let samples = rng.vector(333);
        let w = Waveform::mono_from(samples.clone(), 44100).unwrap();
        let back = decode_wav(&encode_wav(&w, SampleFormat::Float32)).unwrap();
        for (a, b) in back.samples().iter().zip(&samples) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn stereo_round_trips() {
        let interleaved = vec![0.5, -0.5, 0.25, -0.25, 0.0, 1.0];
        let w = Waveform::new(interleaved, 48000, 2).unwrap();
        let back = decode_wav(&encode_wav(&w, SampleFormat::Float32)).unwrap();
        assert_eq!(back.channels(), 2);
        assert_eq!(back.sample_rate(), 48000);
        assert_eq!(back.frame_count(), 3);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let w = Waveform::mono_from(vec![0.1; 64], 4410).unwrap();
        let bytes = encode_wav(&w, SampleFormat::Pcm16);
        let err = decode_wav(&bytes[..50]).unwrap_err();
        assert!(matches!(err, EnvelopeError::CorruptHeader(_)));
    }

    #[test]
    fn garbage_is_corrupt() {
        assert!(matches!(
            decode_wav(b"not a wav file at all"),
            Err(EnvelopeError::CorruptHeader(_))
        ));
    }

    #[test]
    fn unsupported_bit_depth_rejected() {
        let w = Waveform::mono_from(vec![0.1; 16], 4410).unwrap();
        let mut bytes = encode_wav(&w, SampleFormat::Pcm16);
        bytes[34] = 8; // bits per sample
        assert!(matches!(
            decode_wav(&bytes),
            Err(EnvelopeError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn extra_chunks_are_skipped() {
        let w = Waveform::mono_from(vec![0.25; 8], 4410).unwrap();
        let data = encode_wav(&w, SampleFormat::Pcm16);
        // Splice a LIST chunk between fmt and data.
        let mut spliced = data[..36].to_vec();
        spliced.extend_from_slice(b"LIST");
        spliced.extend_from_slice(&5u32.to_le_bytes());
        spliced.extend_from_slice(b"junk!\x00"); // odd size + pad
        spliced.extend_from_slice(&data[36..]);
        let riff_len = (spliced.len() - 8) as u32;
        spliced[4..8].copy_from_slice(&riff_len.to_le_bytes());
        let back = decode_wav(&spliced).unwrap();
        assert_eq!(back.frame_count(), 8);
    }
}
