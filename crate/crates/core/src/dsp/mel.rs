//! Optional triangular mel filterbank frontend.

use super::{FeatureClip, FFT_SIZE, SAMPLE_RATE};
use crate::error::{Error, Result};

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filterbank: `n_mel` rows over `n_freq` linear bins spanning
/// 0–8 kHz, each row normalized to sum 1.
///
/// Rows whose triangle falls between two linear bins get a unit weight on
/// the bin nearest their center so the row-sum invariant holds for any
/// `n_mel < n_freq`.
pub fn mel_filterbank(n_mel: usize, n_freq: usize) -> Result<Vec<Vec<f64>>> {
    if n_mel < 2 {
        return Err(Error::config(format!("n_mel must be >= 2, got {n_mel}")));
    }
    if n_mel >= n_freq {
        return Err(Error::config(format!(
            "n_mel must be < n_freq ({n_freq}), got {n_mel}"
        )));
    }
    let f_max = SAMPLE_RATE as f64 / 2.0;
    let bin_hz = SAMPLE_RATE as f64 / FFT_SIZE as f64;
    let mel_points: Vec<f64> = (0..n_mel + 2)
        .map(|i| mel_to_hz(hz_to_mel(f_max) * i as f64 / (n_mel + 1) as f64))
        .collect();

    let mut bank = vec![vec![0.0; n_freq]; n_mel];
    for (m, row) in bank.iter_mut().enumerate() {
        let (lo, center, hi) = (mel_points[m], mel_points[m + 1], mel_points[m + 2]);
        for (b, w) in row.iter_mut().enumerate() {
            let f = b as f64 * bin_hz;
            if f > lo && f < hi {
                *w = if f <= center {
                    (f - lo) / (center - lo)
                } else {
                    (hi - f) / (hi - center)
                };
            }
        }
        let sum: f64 = row.iter().sum();
        if sum < 1e-12 {
            let nearest = (center / bin_hz).round() as usize;
            row[nearest.min(n_freq - 1)] = 1.0;
        } else {
            row.iter_mut().for_each(|w| *w /= sum);
        }
    }
    Ok(bank)
}

/// Project a log-magnitude [`FeatureClip`] onto `n_mel` mel bands.
///
/// The filterbank applies to linear magnitudes, so values go through
/// `exp(v) - 1` first and back through `ln(1 + .)` after.
pub fn mel_project(clip: &FeatureClip, n_mel: usize) -> Result<FeatureClip> {
    let bank = mel_filterbank(n_mel, clip.n_freq)?;
    let mut out = FeatureClip::new(clip.n_frames, n_mel, clip.hop_seconds);
    for t in 0..clip.n_frames {
        let linear: Vec<f64> = clip.row(t).iter().map(|&v| v.exp_m1()).collect();
        let row = out.row_mut(t);
        for (m, filt) in bank.iter().enumerate() {
            let e: f64 = filt
                .iter()
                .zip(&linear)
                .filter(|(w, _)| **w != 0.0)
                .map(|(w, x)| w * x)
                .sum();
            row[m] = e.max(0.0).ln_1p();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_configs_rejected() {
        assert!(mel_filterbank(1, 1025).is_err());
        assert!(mel_filterbank(1025, 1025).is_err());
        assert!(mel_filterbank(2000, 1025).is_err());
        assert!(mel_filterbank(40, 1025).is_ok());
    }

    #[test]
    fn rows_sum_to_one() {
        for &n_mel in &[2usize, 40, 128, 512] {
            let bank = mel_filterbank(n_mel, 1025).unwrap();
            for (m, row) in bank.iter().enumerate() {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() < 1e-6, "n_mel={n_mel} row {m} sums to {s}");
            }
        }
    }

    #[test]
    fn zero_input_stays_zero() {
        let clip = FeatureClip::new(10, 1025, 0.01);
        let out = mel_project(&clip, 40).unwrap();
        assert!(out.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_spectrum_projects_to_near_constant_mel_frame() {
        // oracle: each row sums to 1, so a constant magnitude c maps to c
        let mut clip = FeatureClip::new(3, 1025, 0.01);
        let c: f64 = 0.7;
        clip.data.fill(c.ln_1p());
        let out = mel_project(&clip, 40).unwrap();
        for t in 0..3 {
            for &v in out.row(t) {
                let rel = (v.exp_m1() - c).abs() / c;
                assert!(rel <= 0.01, "band value {v} off by {rel}");
            }
        }
    }
}
