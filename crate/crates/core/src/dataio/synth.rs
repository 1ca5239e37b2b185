//! Seeded synthetic clip generation with controllable domain shift.
//!
//! Clips are harmonic-stack "voices" over piecewise-constant note pitches
//! with vibrato, additive white noise at a target SNR, and an optional
//! low-frequency accompaniment hum. Timbre (harmonic decay), noise, hum and
//! pitch range are the domain-shift knobs.

use super::labels::LabelSeries;
use crate::dsp::{AudioBuffer, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::pitchgrid::PitchGrid;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Peak amplitude of the clean voice component.
const VOICE_AMP: f64 = 0.7;
/// Per-note fade in/out, seconds.
const NOTE_FADE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_harmonics: usize,
    /// Amplitude ratio between consecutive harmonics, in (0, 1].
    pub harmonic_decay: f64,
    pub vibrato_depth_cents: f64,
    pub vibrato_rate_hz: f64,
    pub noise_snr_db: f64,
    /// Linear gain of the low-frequency hum relative to the voice.
    pub accompaniment_level: f64,
    pub pitch_min_hz: f64,
    pub pitch_max_hz: f64,
    pub voiced_fraction: f64,
    /// Notes per second (each note is a constant base pitch).
    pub note_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_harmonics: 5,
            harmonic_decay: 0.7,
            vibrato_depth_cents: 20.0,
            vibrato_rate_hz: 5.0,
            noise_snr_db: 40.0,
            accompaniment_level: 0.0,
            pitch_min_hz: 110.0,
            pitch_max_hz: 520.0,
            voiced_fraction: 0.85,
            note_rate: 3.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self, grid: &PitchGrid) -> Result<()> {
        if self.n_harmonics == 0 {
            return Err(Error::config("n_harmonics must be >= 1"));
        }
        if !(self.harmonic_decay > 0.0 && self.harmonic_decay <= 1.0) {
            return Err(Error::config(format!(
                "harmonic_decay must be in (0, 1], got {}",
                self.harmonic_decay
            )));
        }
        if !self.noise_snr_db.is_finite() {
            return Err(Error::config("noise_snr_db must be finite"));
        }
        if !(0.0..=1.0).contains(&self.voiced_fraction) {
            return Err(Error::config(format!(
                "voiced_fraction must be in [0, 1], got {}",
                self.voiced_fraction
            )));
        }
        if !(self.note_rate > 0.0) {
            return Err(Error::config("note_rate must be positive"));
        }
        if self.vibrato_depth_cents < 0.0 || self.vibrato_rate_hz < 0.0 || self.accompaniment_level < 0.0 {
            return Err(Error::config("vibrato and accompaniment parameters must be >= 0"));
        }
        let lo = grid.f_min;
        let hi = grid.upper_edge_hz();
        if !(self.pitch_min_hz >= lo && self.pitch_max_hz <= hi && self.pitch_min_hz < self.pitch_max_hz) {
            return Err(Error::config(format!(
                "pitch_range [{}, {}] outside grid span [{lo:.2}, {hi:.2}]",
                self.pitch_min_hz, self.pitch_max_hz
            )));
        }
        Ok(())
    }
}

/// Generate one deterministic 1-second clip and its 10 ms label series.
pub fn generate_synthetic_clip(
    spec: &SyntheticSpec,
    grid: &PitchGrid,
    seed: u64,
) -> Result<(AudioBuffer, LabelSeries)> {
    spec.validate(grid)?;
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
    let fs = SAMPLE_RATE as f64;
    let n = SAMPLE_RATE as usize;

    // piecewise-constant base pitches, log-uniform over the range
    let note_len = fs / spec.note_rate;
    let n_notes = (n as f64 / note_len).ceil() as usize;
    let ln_lo = spec.pitch_min_hz.ln();
    let ln_hi = spec.pitch_max_hz.ln();
    let notes: Vec<Option<f64>> = (0..n_notes)
        .map(|_| {
            let base = (rng.gen_range(ln_lo..ln_hi)).exp();
            // draw voicing after the pitch so the stream layout is stable
            if rng.gen::<f64>() < spec.voiced_fraction {
                Some(base)
            } else {
                None
            }
        })
        .collect();

    // instantaneous f0 per sample
    let two_pi = std::f64::consts::TAU;
    let f0_at = |i: usize| -> f64 {
        let t = i as f64 / fs;
        let note = ((i as f64 / note_len) as usize).min(n_notes - 1);
        match notes[note] {
            Some(base) => {
                let vib = spec.vibrato_depth_cents * (two_pi * spec.vibrato_rate_hz * t).sin();
                base * (vib / 1200.0).exp2()
            }
            None => 0.0,
        }
    };

    // harmonic stack with per-harmonic phase accumulation
    let amp_norm: f64 = (0..spec.n_harmonics).map(|h| spec.harmonic_decay.powi(h as i32)).sum();
    let nyquist_cap = 0.98 * fs / 2.0;
    let fade_samples = (NOTE_FADE * fs) as usize;
    let mut phases = vec![0.0f64; spec.n_harmonics];
    let mut voice = vec![0.0f64; n];
    for (i, v) in voice.iter_mut().enumerate() {
        let f0 = f0_at(i);
        if f0 <= 0.0 {
            continue;
        }
        let mut s = 0.0;
        for (h, phase) in phases.iter_mut().enumerate() {
            let fh = f0 * (h + 1) as f64;
            *phase += two_pi * fh / fs;
            if fh < nyquist_cap {
                s += spec.harmonic_decay.powi(h as i32) * phase.sin();
            }
        }
        // fade at note boundaries to avoid clicks
        let pos_in_note = i % note_len.max(1.0) as usize;
        let note_end = (note_len as usize).min(n - (i - pos_in_note));
        let fade_in = (pos_in_note as f64 / fade_samples.max(1) as f64).min(1.0);
        let fade_out = ((note_end - pos_in_note) as f64 / fade_samples.max(1) as f64).min(1.0);
        *v = VOICE_AMP * s / amp_norm * fade_in * fade_out;
    }

    // accompaniment hum: drone + one overtone at a seeded low frequency
    let mut mix = voice.clone();
    if spec.accompaniment_level > 0.0 {
        let hum_f = rng.gen_range(70.0..110.0);
        let amp = spec.accompaniment_level * VOICE_AMP;
        for (i, m) in mix.iter_mut().enumerate() {
            let t = i as f64 / fs;
            *m += amp * ((two_pi * hum_f * t).sin() + 0.5 * (two_pi * 2.0 * hum_f * t).sin());
        }
    }

    // white noise at the requested SNR relative to the voice power
    let voice_power = voice.iter().map(|x| x * x).sum::<f64>() / n as f64;
    let p_ref = if voice_power > 0.0 {
        voice_power
    } else {
        VOICE_AMP * VOICE_AMP / 2.0
    };
    let noise_power = p_ref / 10f64.powf(spec.noise_snr_db / 10.0);
    let normal = Normal::new(0.0, noise_power.sqrt()).map_err(|e| Error::numeric(e.to_string()))?;
    for m in mix.iter_mut() {
        *m += normal.sample(&mut rng);
    }

    // keep the peak within [-1, 1] without touching relative levels
    let peak = mix.iter().fold(0.0f64, |p, &x| p.max(x.abs()));
    if peak > 1.0 {
        mix.iter_mut().for_each(|x| *x /= peak);
    }

    // labels: exact instantaneous f0 at 10 ms hop
    let labels: LabelSeries = (0..100)
        .map(|k| {
            let i = k * (SAMPLE_RATE as usize / 100);
            (k as f64 * 0.01, f0_at(i))
        })
        .collect();

    Ok((AudioBuffer::mono(mix, SAMPLE_RATE), labels))
}
