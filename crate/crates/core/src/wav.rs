//! Multichannel WAV I/O (16-bit PCM and 32-bit float).

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    Pcm16,
    #[default]
    Float32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WavAudio {
    pub sample_rate: u32,
    /// One vector per channel, all the same length.
    pub channels: Vec<Vec<f64>>,
}

impl WavAudio {
    pub fn num_samples(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }
}

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_wav(path: &Path) -> Result<WavAudio> {
    let mut reader = WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    let nch = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err(path))?,
        (SampleFormat::Int, bits) if bits <= 32 => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(wav_err(path))?
        }
        _ => return Err(wav_err(path)(hound::Error::Unsupported)),
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / nch.max(1)); nch];
    for frame in interleaved.chunks_exact(nch) {
        for (c, &v) in frame.iter().enumerate() {
            channels[c].push(v);
        }
    }
    Ok(WavAudio {
        sample_rate: spec.sample_rate,
        channels,
    })
}

/// Reads a WAV and fails if its rate differs from `expected`. No resampling.
pub fn read_wav_at_rate(path: &Path, expected: u32) -> Result<WavAudio> {
    let audio = read_wav(path)?;
    if audio.sample_rate != expected {
        return Err(Error::SampleRateMismatch {
            expected,
            found: audio.sample_rate,
            path: path.to_path_buf(),
        });
    }
    Ok(audio)
}

pub fn write_wav(path: &Path, audio: &WavAudio, format: WavFormat) -> Result<()> {
    let nch = audio.channels.len();
    if nch == 0 || nch > u16::MAX as usize {
        return Err(Error::invalid(format!("cannot write {nch} channels")));
    }
    let len = audio.num_samples();
    if audio.channels.iter().any(|c| c.len() != len) {
        return Err(Error::invalid("channels differ in length"));
    }
    let spec = WavSpec {
        channels: nch as u16,
        sample_rate: audio.sample_rate,
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => SampleFormat::Int,
            WavFormat::Float32 => SampleFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err(path))?;
    for i in 0..len {
        for ch in &audio.channels {
            let v = ch[i];
            match format {
                WavFormat::Pcm16 => {
                    let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(q).map_err(wav_err(path))?;
                }
                WavFormat::Float32 => writer.write_sample(v as f32).map_err(wav_err(path))?,
            }
        }
    }
    writer.finalize().map_err(wav_err(path))?;
    Ok(())
}
