//! PCM WAV input/output.

use super::AudioBuffer;
use crate::error::{Error, Result};
use std::path::Path;

/// Read a PCM WAV file (8/16/24-bit integer or 32-bit float, any rate and
/// channel count) into normalized f64 channels.
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let n_ch = spec.channels as usize;
    if n_ch == 0 {
        return Err(Error::format("WAV with zero channels"));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = (1i64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
        (fmt, bits) => {
            return Err(Error::format(format!(
                "unsupported WAV encoding: {fmt:?} at {bits} bits"
            )))
        }
    };
    if interleaved.is_empty() {
        return Err(Error::format("empty WAV file"));
    }
    let n = interleaved.len() / n_ch;
    let mut channels = vec![Vec::with_capacity(n); n_ch];
    for (i, &v) in interleaved.iter().enumerate() {
        channels[i % n_ch].push(v);
    }
    Ok(AudioBuffer {
        channels,
        sample_rate: spec.sample_rate,
    })
}

/// Write a mono buffer as 16-bit PCM WAV.
pub fn write_wav_mono16(path: &Path, audio: &AudioBuffer) -> Result<()> {
    if !audio.is_mono() {
        return Err(Error::format("write_wav_mono16 requires mono audio"));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &x in audio.samples() {
        let v = (x.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SAMPLE_RATE;

    #[test]
    fn wav_round_trip_16bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let audio = AudioBuffer::mono(
            (0..1600).map(|i| ((i as f64) * 0.013).sin() * 0.8).collect(),
            SAMPLE_RATE,
        );
        write_wav_mono16(&path, &audio).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, SAMPLE_RATE);
        assert_eq!(back.n_samples(), 1600);
        // half-step rounding plus the 32767-write/32768-read scale skew
        let max_err = audio
            .samples()
            .iter()
            .zip(back.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 2.0 / 32768.0, "max_err = {max_err}");
    }

    #[test]
    fn reads_stereo_float_wav() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 48_000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for i in 0..100 {
            w.write_sample(i as f32 / 100.0).unwrap();
            w.write_sample(-(i as f32) / 100.0).unwrap();
        }
        w.finalize().unwrap();
        let audio = read_wav(&path).unwrap();
        assert_eq!(audio.channels.len(), 2);
        assert_eq!(audio.n_samples(), 100);
        assert_eq!(audio.sample_rate, 48_000);
        assert!((audio.channels[0][50] - 0.5).abs() < 1e-6);
        assert!((audio.channels[1][50] + 0.5).abs() < 1e-6);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(read_wav(Path::new("/nonexistent/x.wav")).is_err());
    }
}
