//! Mono WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    #[default]
    Pcm16,
    Float32,
}

/// Decoded mono audio with samples scaled to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

fn wav_err(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::Wav(other.to_string()),
    }
}

pub fn read_wav(path: &Path) -> Result<Audio> {
    let reader = WavReader::open(path).map_err(wav_err)?;
    decode(reader)
}

pub fn read_wav_bytes(bytes: &[u8]) -> Result<Audio> {
    decode(WavReader::new(std::io::Cursor::new(bytes)).map_err(wav_err)?)
}

fn decode<R: std::io::Read>(reader: WavReader<R>) -> Result<Audio> {
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Wav(format!(
            "only mono input is supported, got {} channels",
            spec.channels
        )));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<Vec<_>, _>>(),
        (SampleFormat::Int, bits @ 8..=32) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect()
        }
        (fmt, bits) => return Err(Error::Wav(format!("unsupported sample format {fmt:?}/{bits}"))),
    }
    .map_err(wav_err)?;
    Ok(Audio {
        samples,
        sample_rate: spec.sample_rate,
    })
}

pub fn encode_wav(samples: &[f64], sample_rate: u32, format: WavFormat) -> Result<Vec<u8>> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => SampleFormat::Int,
            WavFormat::Float32 => SampleFormat::Float,
        },
    };
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let mut w = WavWriter::new(&mut cursor, spec).map_err(wav_err)?;
        for &s in samples {
            match format {
                WavFormat::Pcm16 => {
                    let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    w.write_sample(v).map_err(wav_err)?;
                }
                WavFormat::Float32 => w.write_sample(s as f32).map_err(wav_err)?,
            }
        }
        w.finalize().map_err(wav_err)?;
    }
    Ok(cursor.into_inner())
}

pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32, format: WavFormat) -> Result<()> {
    crate::formats::write_atomic(path, &encode_wav(samples, sample_rate, format)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_is_exact_in_f32() {
        let x: Vec<f64> = (0..100).map(|t| ((t as f64) * 0.1).sin() as f32 as f64).collect();
        let bytes = encode_wav(&x, 16000, WavFormat::Float32).unwrap();
        let a = read_wav_bytes(&bytes).unwrap();
        assert_eq!(a.sample_rate, 16000);
        assert_eq!(a.samples, x);
    }

    #[test]
    fn pcm16_round_trip_and_clipping() {
        let x = vec![0.0, 0.5, -0.5, 2.0, -2.0];
        let a = read_wav_bytes(&encode_wav(&x, 8000, WavFormat::Pcm16).unwrap()).unwrap();
        assert_eq!(a.samples, vec![0.0, 0.5, -0.5, 32767.0 / 32768.0, -1.0]);
    }

    #[test]
    fn stereo_is_rejected() {
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut cursor = std::io::Cursor::new(Vec::new());
        {
            let mut w = WavWriter::new(&mut cursor, spec).unwrap();
            w.write_sample(0i16).unwrap();
            w.write_sample(0i16).unwrap();
            w.finalize().unwrap();
        }
        assert!(matches!(read_wav_bytes(&cursor.into_inner()), Err(Error::Wav(_))));
    }
}
