//! WAV input and output. Samples are exchanged as `f64` in `[-1, 1)`,
//! one vector per channel.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub sample_rate: u32,
    pub channels: Vec<Vec<f64>>,
}

impl Audio {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn hound_error(path: &Path, e: hound::Error) -> AppError {
    match e {
        hound::Error::IoError(io) => AppError::io(path, io),
        other => AppError::format(path, other.to_string()),
    }
}

/// Reads integer PCM (8 to 32 bits) or 32-bit float WAV files.
pub fn read(path: &Path) -> AppResult<Audio> {
    let reader = WavReader::open(path).map_err(|e| hound_error(path, e))?;
    let spec = reader.spec();
    let n_ch = spec.channels as usize;
    if n_ch == 0 {
        return Err(AppError::format(path, "no channels"));
    }
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(AppError::format(
                    path,
                    "only 32-bit float samples are supported",
                ));
            }
            reader
                .into_samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<Result<_, _>>()
                .map_err(|e| hound_error(path, e))?
        }
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(|e| hound_error(path, e))?
        }
    };
    let frames = interleaved.len() / n_ch;
    let mut channels = vec![Vec::with_capacity(frames); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (ch, &v) in channels.iter_mut().zip(frame) {
            ch.push(v);
        }
    }
    Ok(Audio {
        sample_rate: spec.sample_rate,
        channels,
    })
}

/// Writes 32-bit float samples.
pub fn write(path: &Path, audio: &Audio) -> AppResult<()> {
    let n_ch = audio.channels.len();
    if n_ch == 0 || n_ch > u16::MAX as usize {
        return Err(AppError::Config(
            "cannot write audio without channels".into(),
        ));
    }
    let len = audio.len();
    if audio.channels.iter().any(|c| c.len() != len) {
        return Err(AppError::Config("channels have different lengths".into()));
    }
    let spec = WavSpec {
        channels: n_ch as u16,
        sample_rate: audio.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| hound_error(path, e))?;
    for t in 0..len {
        for ch in &audio.channels {
            writer
                .write_sample(ch[t] as f32)
                .map_err(|e| hound_error(path, e))?;
        }
    }
    writer.finalize().map_err(|e| hound_error(path, e))
}

/// Writes 16-bit PCM, clipping to `[-1, 1)`.
pub fn write_pcm16(path: &Path, audio: &Audio) -> AppResult<()> {
    let spec = WavSpec {
        channels: audio.channels.len() as u16,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| hound_error(path, e))?;
    for t in 0..audio.len() {
        for ch in &audio.channels {
            let v = (ch[t] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            writer.write_sample(v).map_err(|e| hound_error(path, e))?;
        }
    }
    writer.finalize().map_err(|e| hound_error(path, e))
}
