//! Windowed-sinc polyphase sample-rate conversion.
//!
//! The rate change is reduced to a rational L/M; each output sample is a dot
//! product with one of L precomputed polyphase filter branches derived from
//! a Blackman-windowed sinc lowpass at the tighter of the two Nyquist rates.

use std::f64::consts::PI;

/// Half-width of the sinc kernel in input samples (per side, at the cutoff
/// rate). 32 taps per side gives > 80 dB stopband with a Blackman window.
const HALF_TAPS: usize = 32;

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn blackman(x: f64) -> f64 {
    // x in [0, 1]
    0.42 - 0.5 * (2.0 * PI * x).cos() + 0.08 * (4.0 * PI * x).cos()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Resample `input` from `from_rate` to `to_rate`.
pub fn resample(input: &[f64], from_rate: u32, to_rate: u32) -> Vec<f64> {
    assert!(from_rate > 0 && to_rate > 0);
    if from_rate == to_rate || input.is_empty() {
        return input.to_vec();
    }
    let g = gcd(from_rate, to_rate);
    let up = (to_rate / g) as usize; // L
    let down = (from_rate / g) as usize; // M

    // cutoff at the tighter Nyquist, expressed relative to the upsampled rate
    let cutoff = 0.5 / (down.max(up) as f64);
    // kernel spans HALF_TAPS sinc zero crossings per side on the upsampled grid
    let half = HALF_TAPS * up.max(down);

    // h[n] = 2*cutoff*L * sinc(2*cutoff*n) * blackman, n over upsampled grid
    let full = 2 * half + 1;
    let mut kernel = vec![0.0; full];
    for (i, k) in kernel.iter_mut().enumerate() {
        let n = i as f64 - half as f64;
        let w = blackman((i as f64) / (full - 1) as f64);
        *k = 2.0 * cutoff * up as f64 * sinc(2.0 * cutoff * n) * w;
    }

    let n_out = (input.len() * up) / down;
    let mut out = Vec::with_capacity(n_out);
    for j in 0..n_out {
        // output sample j sits at position j*M on the upsampled grid;
        // input sample i sits at position i*L
        let pos = j * down;
        let i_min = pos.saturating_sub(half).div_ceil(up);
        let i_max = ((pos + half) / up).min(input.len().saturating_sub(1));
        let mut acc = 0.0;
        for i in i_min..=i_max {
            let k = pos as i64 - (i * up) as i64 + half as i64;
            acc += input[i] * kernel[k as usize];
        }
        out.push(acc);
    }
    out
}
