//! Audio frontend: WAV ingestion, standardization to 16 kHz mono,
//! 1-second segmentation, and the log-magnitude STFT feature matrix.

mod mel;
mod resample;
mod stft;
mod wav;

pub use mel::{mel_filterbank, mel_project};
pub use stft::log_magnitude_stft;
pub use wav::{read_wav, write_wav_mono16};

use crate::error::{Error, Result};

/// Target sample rate after standardization.
pub const SAMPLE_RATE: u32 = 16_000;
/// STFT size (F = FFT_SIZE/2 + 1 frequency bins).
pub const FFT_SIZE: usize = 2048;
/// Hop in samples (10 ms at 16 kHz).
pub const HOP: usize = 160;
/// Default clip length in seconds.
pub const CLIP_SECONDS: f64 = 1.0;
/// Trailing remainders at least this long are zero-padded into a final clip;
/// shorter ones are dropped.
pub const PAD_THRESHOLD_SECONDS: f64 = 0.5;

/// Raw audio: interleaved-free mono or multi-channel samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    /// One Vec per channel, equal lengths.
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Self {
        AudioBuffer {
            channels: vec![samples],
            sample_rate,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_mono(&self) -> bool {
        self.channels.len() == 1
    }

    /// The single channel of a mono buffer.
    pub fn samples(&self) -> &[f64] {
        assert!(self.is_mono(), "samples() requires a mono buffer");
        &self.channels[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::format("zero sample rate"));
        }
        if self.n_samples() == 0 {
            return Err(Error::format("empty audio buffer"));
        }
        if self.channels.iter().any(|c| c.len() != self.n_samples()) {
            return Err(Error::shape("channel length mismatch"));
        }
        if self
            .channels
            .iter()
            .any(|c| c.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::numeric("non-finite audio samples"));
        }
        Ok(())
    }
}

/// T x F log-magnitude feature matrix for one clip (row-major, T rows).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureClip {
    pub data: Vec<f64>,
    pub n_frames: usize,
    pub n_freq: usize,
    /// Hop in seconds between consecutive frames.
    pub hop_seconds: f64,
}

impl FeatureClip {
    pub fn new(n_frames: usize, n_freq: usize, hop_seconds: f64) -> Self {
        FeatureClip {
            data: vec![0.0; n_frames * n_freq],
            n_frames,
            n_freq,
            hop_seconds,
        }
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_freq..(t + 1) * self.n_freq]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.n_freq..(t + 1) * self.n_freq]
    }

    /// Keep only the first `n_freq` frequency bins (low-frequency truncation
    /// used by desk-scale model configs).
    pub fn truncate_freq(&self, n_freq: usize) -> FeatureClip {
        assert!(n_freq <= self.n_freq);
        let mut out = FeatureClip::new(self.n_frames, n_freq, self.hop_seconds);
        for t in 0..self.n_frames {
            out.row_mut(t).copy_from_slice(&self.row(t)[..n_freq]);
        }
        out
    }
}

/// Channel-average to mono and resample to 16 kHz.
///
/// Already-conforming input passes through bit-identical. The resampler is
/// a windowed-sinc polyphase filter; output peaks are normalized down to 1
/// if interpolation overshoots.
pub fn standardize(audio: &AudioBuffer) -> Result<AudioBuffer> {
    audio.validate()?;
    let mono: Vec<f64> = if audio.is_mono() {
        audio.channels[0].clone()
    } else {
        let n = audio.n_samples();
        let k = audio.channels.len() as f64;
        (0..n)
            .map(|i| audio.channels.iter().map(|c| c[i]).sum::<f64>() / k)
            .collect()
    };
    let samples = if audio.sample_rate == SAMPLE_RATE {
        mono
    } else {
        resample::resample(&mono, audio.sample_rate, SAMPLE_RATE)
    };
    let peak = samples.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let samples = if peak > 1.0 {
        samples.iter().map(|&x| x / peak).collect()
    } else {
        samples
    };
    Ok(AudioBuffer::mono(samples, SAMPLE_RATE))
}

/// Split standardized audio into non-overlapping clips of `clip_seconds`.
///
/// The trailing remainder is zero-padded into a final clip when at least
/// [`PAD_THRESHOLD_SECONDS`] long, otherwise dropped.
pub fn segment(audio: &AudioBuffer, clip_seconds: f64) -> Result<Vec<AudioBuffer>> {
    if !audio.is_mono() || audio.sample_rate != SAMPLE_RATE {
        return Err(Error::format("segment() requires standardized 16 kHz mono audio"));
    }
    let clip_len = (clip_seconds * SAMPLE_RATE as f64).round() as usize;
    if clip_len == 0 {
        return Err(Error::config("clip_seconds too small"));
    }
    let samples = audio.samples();
    let n_full = samples.len() / clip_len;
    let mut clips = Vec::with_capacity(n_full + 1);
    for c in 0..n_full {
        clips.push(AudioBuffer::mono(
            samples[c * clip_len..(c + 1) * clip_len].to_vec(),
            SAMPLE_RATE,
        ));
    }
    let rem = samples.len() - n_full * clip_len;
    if rem > 0 && rem as f64 / SAMPLE_RATE as f64 >= PAD_THRESHOLD_SECONDS {
        let mut tail = samples[n_full * clip_len..].to_vec();
        tail.resize(clip_len, 0.0);
        clips.push(AudioBuffer::mono(tail, SAMPLE_RATE));
    }
    Ok(clips)
}

/// Featurize a batch of standardized clips (data-parallel across clips).
pub fn featurize_clips(clips: &[AudioBuffer]) -> Result<Vec<FeatureClip>> {
    crate::par::map_slice(clips, log_magnitude_stft)
        .into_iter()
        .collect()
}
