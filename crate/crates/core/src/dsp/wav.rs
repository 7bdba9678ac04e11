use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::error::{input_err, Error, Result};
use crate::scalar::Real;

const FULL_SCALE: f64 = 32767.0;

/// Round to the nearest 16-bit PCM level so a write/read cycle is lossless.
/// Zero comes back positive, as it does from disk.
pub fn quantize_pcm16(v: f64) -> f64 {
    (v.clamp(-1.0, 1.0) * FULL_SCALE).round() / FULL_SCALE + 0.0
}

/// Write 16-bit PCM mono; samples are clamped to [-1, 1].
pub fn write_wav<T: Real>(path: &Path, w: &Waveform<T>) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut out = WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in w.samples() {
        let v = (s.to_f64_lossy().clamp(-1.0, 1.0) * FULL_SCALE).round() as i16;
        out.write_sample(v).map_err(wav_err)?;
    }
    out.finalize().map_err(wav_err)
}

/// Read 16-bit PCM mono.
pub fn read_wav<T: Real>(path: &Path) -> Result<Waveform<T>> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let reader = WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != SampleFormat::Int
    {
        return Err(input_err!(
            "{}: expected 16-bit PCM mono, got {} channel(s) at {} bits",
            path.display(),
            spec.channels,
            spec.bits_per_sample
        ));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| T::c(v as f64 / FULL_SCALE)))
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(wav_err)?;
    Waveform::new(samples, spec.sample_rate)
}
