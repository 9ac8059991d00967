//! Minimal RIFF/WAVE reader and writer for mono PCM16 and IEEE float32.

use std::fs;
use std::path::Path;

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Real;

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Sample encoding used when writing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Pcm16,
    Float32,
}

struct Fmt {
    format: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(chunk: &[u8]) -> Result<Fmt> {
    if chunk.len() < 16 {
        return Err(Error::Wav(format!("fmt chunk too short ({} bytes)", chunk.len())));
    }
    let mut format = u16_at(chunk, 0);
    if format == FORMAT_EXTENSIBLE {
        if chunk.len() < 26 {
            return Err(Error::Wav("truncated WAVE_FORMAT_EXTENSIBLE header".into()));
        }
        // first two bytes of the sub-format GUID carry the actual codec
        format = u16_at(chunk, 24);
    }
    Ok(Fmt { format, channels: u16_at(chunk, 2), sample_rate: u32_at(chunk, 4), bits: u16_at(chunk, 14) })
}

/// Decodes a WAV byte buffer. Stereo and wider files are averaged to mono.
pub fn decode_wav<S: Real>(bytes: &[u8]) -> Result<Waveform<S>> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Wav("not a RIFF/WAVE file".into()));
    }
    let mut pos = 12;
    let mut fmt = None;
    let mut data = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body.checked_add(size).filter(|&e| e <= bytes.len());
        match id {
            b"fmt " => {
                let end = end.ok_or_else(|| Error::Wav("truncated fmt chunk".into()))?;
                fmt = Some(parse_fmt(&bytes[body..end])?);
            }
            b"data" => {
                // Tolerate a data size that overruns the file only by padding.
                let end = end.ok_or_else(|| Error::Wav("truncated data chunk".into()))?;
                data = Some(&bytes[body..end]);
            }
            _ => {}
        }
        pos = body.saturating_add(size).saturating_add(size & 1);
    }
    let fmt = fmt.ok_or_else(|| Error::Wav("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Wav("missing data chunk".into()))?;
    if fmt.channels == 0 {
        return Err(Error::Wav("zero channels".into()));
    }
    if fmt.sample_rate == 0 {
        return Err(Error::Wav("zero sample rate".into()));
    }
    let decode: fn(&[u8]) -> f64 = match (fmt.format, fmt.bits) {
        (FORMAT_PCM, 16) => |b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
        (FORMAT_FLOAT, 32) => |b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        (f, b) => return Err(Error::Wav(format!("unsupported codec: format tag {f}, {b} bits"))),
    };
    let width = fmt.bits as usize / 8;
    let frame = width * fmt.channels as usize;
    let n = data.len() / frame;
    if fmt.channels > 1 {
        log::warn!("averaging {} channels to mono", fmt.channels);
    }
    let samples: Vec<S> = (0..n)
        .map(|i| {
            let f = &data[i * frame..(i + 1) * frame];
            let sum: f64 = f.chunks_exact(width).map(decode).sum();
            S::lit(sum / fmt.channels as f64)
        })
        .collect();
    Waveform::new(samples, fmt.sample_rate).map_err(|e| Error::Wav(e.to_string()))
}

/// Encodes a mono waveform. PCM16 clips to full scale.
pub fn encode_wav<S: Real>(w: &Waveform<S>, depth: BitDepth) -> Vec<u8> {
    let (format, bits) = match depth {
        BitDepth::Pcm16 => (FORMAT_PCM, 16u16),
        BitDepth::Float32 => (FORMAT_FLOAT, 32u16),
    };
    let width = bits as u32 / 8;
    let data_len = w.len() as u32 * width;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&format.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate().to_le_bytes());
    out.extend_from_slice(&(w.sample_rate() * width).to_le_bytes());
    out.extend_from_slice(&(width as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in w.samples() {
        match depth {
            BitDepth::Pcm16 => {
                let q = (s.as_f64() * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
            BitDepth::Float32 => out.extend_from_slice(&(s.as_f64() as f32).to_le_bytes()),
        }
    }
    out
}

pub fn read_wav<S: Real>(path: impl AsRef<Path>) -> Result<Waveform<S>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_wav(&bytes).map_err(|e| Error::Wav(format!("{}: {e}", path.display())))
}

pub fn write_wav<S: Real>(path: impl AsRef<Path>, w: &Waveform<S>, depth: BitDepth) -> Result<()> {
    fs::write(path, encode_wav(w, depth))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize) -> Waveform<f32> {
        Waveform::new((0..n).map(|i| (i as f32 * 0.013).sin() * 0.9).collect(), 44100).unwrap()
    }

    #[test]
    fn float32_round_trip_is_bit_exact() {
        let w = ramp(1000);
        let back: Waveform<f32> = decode_wav(&encode_wav(&w, BitDepth::Float32)).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn pcm16_round_trip_within_one_lsb() {
        let w = ramp(1000);
        let back: Waveform<f32> = decode_wav(&encode_wav(&w, BitDepth::Pcm16)).unwrap();
        assert_eq!(back.len(), w.len());
        for (a, b) in w.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn stereo_is_averaged() {
        let mut bytes = encode_wav(&ramp(4), BitDepth::Pcm16);
        // patch header to two channels with frames of (1000, 3000)
        bytes[22] = 2;
        let data_start = 44;
        bytes.truncate(data_start);
        for _ in 0..2 {
            bytes.extend_from_slice(&1000i16.to_le_bytes());
            bytes.extend_from_slice(&3000i16.to_le_bytes());
        }
        let w: Waveform<f64> = decode_wav(&bytes).unwrap();
        assert_eq!(w.len(), 2);
        assert!((w.samples()[0] - 2000.0 / 32768.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_inputs_are_errors() {
        assert!(decode_wav::<f32>(b"RIFF").is_err());
        assert!(decode_wav::<f32>(b"not a wav file at all").is_err());
        let mut bytes = encode_wav(&ramp(100), BitDepth::Pcm16);
        bytes[34] = 24; // 24-bit PCM is not supported
        assert!(matches!(decode_wav::<f32>(&bytes), Err(Error::Wav(_))));
    }

    proptest! {
        #[test]
        fn truncated_files_never_panic(cut in 0usize..300) {
            let bytes = encode_wav(&ramp(100), BitDepth::Float32);
            let _ = decode_wav::<f32>(&bytes[..cut.min(bytes.len())]);
        }
    }
}
