//! Centered log-magnitude STFT.

use super::{AudioBuffer, FeatureClip, FFT_SIZE, HOP, SAMPLE_RATE};
use crate::error::{Error, Result};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;

fn hann_window() -> Vec<f64> {
    // periodic Hann
    (0..FFT_SIZE)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / FFT_SIZE as f64).cos())
        .collect()
}

/// Reflect-pad `x` by `pad` samples on each side.
fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    assert!(x.len() > pad, "clip shorter than padding");
    let mut out = Vec::with_capacity(x.len() + 2 * pad);
    for i in (1..=pad).rev() {
        out.push(x[i]);
    }
    out.extend_from_slice(x);
    for i in 2..=pad + 1 {
        out.push(x[x.len() - i]);
    }
    out
}

/// Hann-windowed, centered (reflect-padded) STFT with `ln(1 + |X|)` values.
///
/// A 1-second 16 kHz clip yields exactly T = 100 frames and F = 1025 bins;
/// frame t is centered on sample `t * HOP`.
pub fn log_magnitude_stft(clip: &AudioBuffer) -> Result<FeatureClip> {
    if !clip.is_mono() || clip.sample_rate != SAMPLE_RATE {
        return Err(Error::format("log_magnitude_stft requires 16 kHz mono input"));
    }
    let samples = clip.samples();
    if samples.len() < HOP {
        return Err(Error::format(format!(
            "clip too short for one frame: {} samples",
            samples.len()
        )));
    }
    if samples.len() <= FFT_SIZE / 2 {
        return Err(Error::format("clip shorter than half the FFT size"));
    }
    let n_frames = samples.len() / HOP;
    let n_freq = FFT_SIZE / 2 + 1;
    let padded = reflect_pad(samples, FFT_SIZE / 2);
    let window = hann_window();

    let mut fft_planner = FftPlanner::<f64>::new();
    let fft = fft_planner.plan_fft_forward(FFT_SIZE);

    let rows = crate::par::map_indexed(n_frames, |t| {
        let start = t * HOP;
        let mut buf: Vec<Complex<f64>> = (0..FFT_SIZE)
            .map(|i| Complex::new(padded[start + i] * window[i], 0.0))
            .collect();
        fft.process(&mut buf);
        buf[..n_freq]
            .iter()
            .map(|c| c.norm().ln_1p())
            .collect::<Vec<f64>>()
    });

    let mut out = FeatureClip::new(n_frames, n_freq, HOP as f64 / SAMPLE_RATE as f64);
    for (t, row) in rows.into_iter().enumerate() {
        out.row_mut(t).copy_from_slice(&row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, seconds: f64) -> AudioBuffer {
        let n = (seconds * SAMPLE_RATE as f64) as usize;
        AudioBuffer::mono(
            (0..n)
                .map(|i| (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin())
                .collect(),
            SAMPLE_RATE,
        )
    }

    #[test]
    fn zero_clip_gives_zero_matrix() {
        let clip = AudioBuffer::mono(vec![0.0; 16_000], SAMPLE_RATE);
        let f = log_magnitude_stft(&clip).unwrap();
        assert_eq!(f.n_frames, 100);
        assert_eq!(f.n_freq, 1025);
        assert!(f.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn one_second_clip_has_100_frames() {
        let f = log_magnitude_stft(&tone(440.0, 1.0)).unwrap();
        assert_eq!(f.n_frames, 100);
        assert_eq!(f.n_freq, 1025);
        assert!(f.data.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn khz_tone_peaks_at_bin_128() {
        // 1000 Hz / (16000/2048) = 128.0 exactly
        let f = log_magnitude_stft(&tone(1000.0, 1.0)).unwrap();
        for t in 0..f.n_frames {
            let row = f.row(t);
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            // reflect padding breaks tone periodicity at the clip edges,
            // smearing the first/last few frames by up to one bin
            if (7..93).contains(&t) {
                assert_eq!(argmax, 128, "frame {t}");
            } else {
                assert!((argmax as i64 - 128).abs() <= 1, "frame {t}: {argmax}");
            }
        }
    }

    #[test]
    fn windowed_frame_matches_direct_dft() {
        // oracle: direct DFT of the first centered frame
        let clip = tone(440.0, 1.0);
        let f = log_magnitude_stft(&clip).unwrap();
        let padded = reflect_pad(clip.samples(), FFT_SIZE / 2);
        let window = hann_window();
        let t = 3usize;
        for &bin in &[0usize, 56, 128, 512] {
            let mut re = 0.0;
            let mut im = 0.0;
            for i in 0..FFT_SIZE {
                let x = padded[t * HOP + i] * window[i];
                let ang = -2.0 * PI * bin as f64 * i as f64 / FFT_SIZE as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            let expect = (re * re + im * im).sqrt().ln_1p();
            let got = f.row(t)[bin];
            assert!((expect - got).abs() < 1e-9, "bin {bin}: {expect} vs {got}");
        }
    }

    #[test]
    fn deterministic_across_runs() {
        let clip = tone(313.0, 1.0);
        let a = log_magnitude_stft(&clip).unwrap();
        let b = log_magnitude_stft(&clip).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_wrong_rate_or_shape() {
        assert!(log_magnitude_stft(&AudioBuffer::mono(vec![0.0; 16_000], 8000)).is_err());
        let stereo = AudioBuffer {
            channels: vec![vec![0.0; 16_000], vec![0.0; 16_000]],
            sample_rate: SAMPLE_RATE,
        };
        assert!(log_magnitude_stft(&stereo).is_err());
    }
}
