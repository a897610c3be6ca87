//! Mono WAV input and output.

use std::path::Path;

use pgtk_core::dsp::{AudioSignal, SAMPLE_RATE};

#[derive(Debug, thiserror::Error)]
pub enum WavError {
    #[error(transparent)]
    Hound(#[from] hound::Error),
    #[error("expected mono audio, found {0} channels")]
    Channels(u16),
    #[error("expected {SAMPLE_RATE} Hz audio, found {0} Hz (resample before loading)")]
    SampleRate(u32),
    #[error("unsupported sample format: {0}")]
    Format(String),
}

/// Reads a 16-bit integer or 32-bit float mono file at 22.05 kHz.
pub fn read_wav(path: &Path) -> Result<AudioSignal, WavError> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(WavError::Channels(spec.channels));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(WavError::SampleRate(spec.sample_rate));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<Vec<_>, _>>()?,
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<Vec<_>, _>>()?,
        (f, b) => return Err(WavError::Format(format!("{b}-bit {f:?}"))),
    };
    Ok(AudioSignal::new(samples, spec.sample_rate))
}

/// Writes 32-bit float samples, so reading back is lossless.
pub fn write_wav(path: &Path, audio: &AudioSignal) -> Result<(), WavError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in &audio.samples {
        w.write_sample(s)?;
    }
    w.finalize()?;
    Ok(())
}

pub fn write_wav_i16(path: &Path, audio: &AudioSignal) -> Result<(), WavError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in &audio.samples {
        w.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?;
    }
    w.finalize()?;
    Ok(())
}
