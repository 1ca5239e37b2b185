//! Network layers with explicit forward/backward passes.
//!
//! Training forwards cache what backward needs; eval forwards are cache-free
//! and take `&self` so inference can run clip-parallel. All parallel loops
//! write disjoint planes or reduce per-channel in a fixed order, so results
//! do not depend on the thread count.

use super::tensor::{Batch3, Batch4, Param};
use crate::par;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// 2-D convolution with stride 1 and "same" padding (odd kernels only).
pub struct Conv2d {
    pub w: Param, // [c_out, c_in, kh, kw]
    pub b: Param, // [c_out]
    pub c_in: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    cache: Option<Batch4>,
}

impl Conv2d {
    pub fn new(c_in: usize, c_out: usize, kh: usize, kw: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(kh % 2 == 1 && kw % 2 == 1, "same-padding needs odd kernels");
        Conv2d {
            w: Param::he_uniform(&[c_out, c_in, kh, kw], c_in * kh * kw, rng),
            b: Param::zeros(&[c_out]),
            c_in,
            c_out,
            kh,
            kw,
            cache: None,
        }
    }

    fn run(&self, x: &Batch4) -> Batch4 {
        assert_eq!(x.c, self.c_in, "conv input channels");
        let (t_len, f_len) = (x.t, x.f);
        let pad_t = self.kh / 2;
        let pad_f = self.kw / 2;
        let mut out = Batch4::zeros(x.n, self.c_out, t_len, f_len);
        let plane = out.plane();
        let (c_in, kh, kw) = (self.c_in, self.kh, self.kw);
        let w = &self.w.value.data;
        let b = &self.b.value.data;
        par::for_each_chunk_mut(&mut out.data, plane, |pi, out_plane| {
            let n = pi / self.c_out;
            let co = pi % self.c_out;
            for ci in 0..c_in {
                let x_plane = x.plane_slice(n, ci);
                for dt in 0..kh {
                    let t_off = dt as i64 - pad_t as i64;
                    let t_lo = 0.max(-t_off) as usize;
                    let t_hi = (t_len as i64).min(t_len as i64 - t_off) as usize;
                    for df in 0..kw {
                        let wv = w[((co * c_in + ci) * kh + dt) * kw + df];
                        let f_off = df as i64 - pad_f as i64;
                        let f_lo = 0.max(-f_off) as usize;
                        let f_hi = (f_len as i64).min(f_len as i64 - f_off) as usize;
                        if f_hi <= f_lo {
                            continue;
                        }
                        let len = f_hi - f_lo;
                        for t in t_lo..t_hi {
                            let t_in = (t as i64 + t_off) as usize;
                            let src = &x_plane[t_in * f_len + (f_lo as i64 + f_off) as usize..][..len];
                            let dst = &mut out_plane[t * f_len + f_lo..][..len];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += wv * s;
                            }
                        }
                    }
                }
            }
            let bias = b[co];
            out_plane.iter_mut().for_each(|v| *v += bias);
        });
        out
    }

    pub fn forward_train(&mut self, x: &Batch4) -> Batch4 {
        let out = self.run(x);
        self.cache = Some(x.clone());
        out
    }

    pub fn forward_eval(&self, x: &Batch4) -> Batch4 {
        self.run(x)
    }

    pub fn backward(&mut self, dout: &Batch4) -> Batch4 {
        let x = self.cache.take().expect("conv backward without forward");
        let (t_len, f_len) = (x.t, x.f);
        let pad_t = self.kh / 2;
        let pad_f = self.kw / 2;
        let (c_in, c_out, kh, kw) = (self.c_in, self.c_out, self.kh, self.kw);
        let w = &self.w.value.data;

        // input gradient: scatter dout through the flipped kernel
        let mut dx = Batch4::zeros(x.n, x.c, t_len, f_len);
        let plane = dx.plane();
        par::for_each_chunk_mut(&mut dx.data, plane, |pi, dx_plane| {
            let n = pi / c_in;
            let ci = pi % c_in;
            for co in 0..c_out {
                let dout_plane = dout.plane_slice(n, co);
                for dt in 0..kh {
                    let t_off = dt as i64 - pad_t as i64;
                    let t_lo = 0.max(-t_off) as usize;
                    let t_hi = (t_len as i64).min(t_len as i64 - t_off) as usize;
                    for df in 0..kw {
                        let wv = w[((co * c_in + ci) * kh + dt) * kw + df];
                        let f_off = df as i64 - pad_f as i64;
                        let f_lo = 0.max(-f_off) as usize;
                        let f_hi = (f_len as i64).min(f_len as i64 - f_off) as usize;
                        if f_hi <= f_lo {
                            continue;
                        }
                        let len = f_hi - f_lo;
                        for t_out in t_lo..t_hi {
                            let t_in = (t_out as i64 + t_off) as usize;
                            let src = &dout_plane[t_out * f_len + f_lo..][..len];
                            let dst = &mut dx_plane[t_in * f_len + (f_lo as i64 + f_off) as usize..][..len];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += wv * s;
                            }
                        }
                    }
                }
            }
        });

        // weight gradient: one disjoint chunk per output channel
        let w_chunk = c_in * kh * kw;
        par::for_each_chunk_mut(&mut self.w.grad.data, w_chunk, |co, dw| {
            for n in 0..x.n {
                let dout_plane = dout.plane_slice(n, co);
                for ci in 0..c_in {
                    let x_plane = x.plane_slice(n, ci);
                    for dt in 0..kh {
                        let t_off = dt as i64 - pad_t as i64;
                        let t_lo = 0.max(-t_off) as usize;
                        let t_hi = (t_len as i64).min(t_len as i64 - t_off) as usize;
                        for df in 0..kw {
                            let f_off = df as i64 - pad_f as i64;
                            let f_lo = 0.max(-f_off) as usize;
                            let f_hi = (f_len as i64).min(f_len as i64 - f_off) as usize;
                            if f_hi <= f_lo {
                                continue;
                            }
                            let len = f_hi - f_lo;
                            let mut acc = 0.0;
                            for t_out in t_lo..t_hi {
                                let t_in = (t_out as i64 + t_off) as usize;
                                let a = &dout_plane[t_out * f_len + f_lo..][..len];
                                let bsl = &x_plane[t_in * f_len + (f_lo as i64 + f_off) as usize..][..len];
                                for (p, q) in a.iter().zip(bsl) {
                                    acc += p * q;
                                }
                            }
                            dw[(ci * kh + dt) * kw + df] += acc;
                        }
                    }
                }
            }
        });

        for co in 0..c_out {
            let mut acc = 0.0;
            for n in 0..x.n {
                acc += dout.plane_slice(n, co).iter().sum::<f64>();
            }
            self.b.grad.data[co] += acc;
        }
        dx
    }
}

/// Per-channel batch normalization over (N, T, F).
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    channels: usize,
    cache: Option<BnCache>,
}

struct BnCache {
    x_hat: Batch4,
    inv_std: Vec<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Param::filled(&[channels], 1.0),
            beta: Param::zeros(&[channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
            channels,
            cache: None,
        }
    }

    pub fn forward_train(&mut self, x: &Batch4) -> Batch4 {
        assert_eq!(x.c, self.channels);
        let m = (x.n * x.t * x.f) as f64;
        // per-channel batch statistics, each reduced in fixed order
        let stats: Vec<(f64, f64)> = par::map_indexed(self.channels, |c| {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for n in 0..x.n {
                for &v in x.plane_slice(n, c) {
                    sum += v;
                    sq += v * v;
                }
            }
            let mean = sum / m;
            let var = (sq / m - mean * mean).max(0.0);
            (mean, var)
        });
        let inv_std: Vec<f64> = stats.iter().map(|&(_, v)| 1.0 / (v + self.eps).sqrt()).collect();
        for c in 0..self.channels {
            self.running_mean[c] = (1.0 - self.momentum) * self.running_mean[c] + self.momentum * stats[c].0;
            self.running_var[c] = (1.0 - self.momentum) * self.running_var[c] + self.momentum * stats[c].1;
        }

        let mut x_hat = x.clone();
        let plane = x.plane();
        let n_c = self.channels;
        par::for_each_chunk_mut(&mut x_hat.data, plane, |pi, p| {
            let c = pi % n_c;
            let (mean, _) = stats[c];
            let s = inv_std[c];
            p.iter_mut().for_each(|v| *v = (*v - mean) * s);
        });
        let mut out = x_hat.clone();
        let gamma = &self.gamma.value.data;
        let beta = &self.beta.value.data;
        par::for_each_chunk_mut(&mut out.data, plane, |pi, p| {
            let c = pi % n_c;
            let (g, b) = (gamma[c], beta[c]);
            p.iter_mut().for_each(|v| *v = g * *v + b);
        });
        self.cache = Some(BnCache { x_hat, inv_std });
        out
    }

    pub fn forward_eval(&self, x: &Batch4) -> Batch4 {
        assert_eq!(x.c, self.channels);
        let mut out = x.clone();
        let plane = x.plane();
        let n_c = self.channels;
        let gamma = &self.gamma.value.data;
        let beta = &self.beta.value.data;
        let rm = &self.running_mean;
        let rv = &self.running_var;
        let eps = self.eps;
        par::for_each_chunk_mut(&mut out.data, plane, |pi, p| {
            let c = pi % n_c;
            let s = 1.0 / (rv[c] + eps).sqrt();
            let (mean, g, b) = (rm[c], gamma[c], beta[c]);
            p.iter_mut().for_each(|v| *v = g * (*v - mean) * s + b);
        });
        out
    }

    pub fn backward(&mut self, dout: &Batch4) -> Batch4 {
        let BnCache { x_hat, inv_std } = self.cache.take().expect("bn backward without forward");
        let m = (dout.n * dout.t * dout.f) as f64;
        let n_c = self.channels;
        // per-channel reductions: s1 = sum(dout), s2 = sum(dout * x_hat)
        let sums: Vec<(f64, f64)> = par::map_indexed(n_c, |c| {
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for n in 0..dout.n {
                for (d, xh) in dout.plane_slice(n, c).iter().zip(x_hat.plane_slice(n, c)) {
                    s1 += d;
                    s2 += d * xh;
                }
            }
            (s1, s2)
        });
        for c in 0..n_c {
            self.gamma.grad.data[c] += sums[c].1;
            self.beta.grad.data[c] += sums[c].0;
        }
        let gamma = &self.gamma.value.data;
        let mut dx = Batch4::zeros(dout.n, dout.c, dout.t, dout.f);
        let plane = dx.plane();
        par::for_each_chunk_mut(&mut dx.data, plane, |pi, p| {
            let n = pi / n_c;
            let c = pi % n_c;
            let (s1, s2) = sums[c];
            let scale = gamma[c] * inv_std[c];
            let d_plane = dout.plane_slice(n, c);
            let xh_plane = x_hat.plane_slice(n, c);
            for ((o, &d), &xh) in p.iter_mut().zip(d_plane).zip(xh_plane) {
                *o = scale * (d - s1 / m - xh * s2 / m);
            }
        });
        dx
    }
}

/// Elementwise LeakyReLU.
pub struct LeakyRelu {
    pub slope: f64,
    cache: Option<Vec<f64>>, // per-element derivative (1 or slope)
}

impl LeakyRelu {
    pub fn new(slope: f64) -> Self {
        LeakyRelu { slope, cache: None }
    }

    pub fn forward_train(&mut self, x: &Batch4) -> Batch4 {
        let mut out = x.clone();
        let mut mask = vec![0.0; x.data.len()];
        for (i, v) in out.data.iter_mut().enumerate() {
            if *v > 0.0 {
                mask[i] = 1.0;
            } else {
                mask[i] = self.slope;
                *v *= self.slope;
            }
        }
        self.cache = Some(mask);
        out
    }

    pub fn forward_eval(&self, x: &Batch4) -> Batch4 {
        let mut out = x.clone();
        let s = self.slope;
        out.data.iter_mut().for_each(|v| {
            if *v <= 0.0 {
                *v *= s;
            }
        });
        out
    }

    pub fn backward(&mut self, dout: &Batch4) -> Batch4 {
        let mask = self.cache.take().expect("relu backward without forward");
        let mut dx = dout.clone();
        for (d, m) in dx.data.iter_mut().zip(&mask) {
            *d *= m;
        }
        dx
    }
}

/// Max-pool along the frequency axis only; time resolution is preserved.
/// The final window absorbs any remainder (`F_out = ceil(F / factor)`).
pub struct MaxPoolFreq {
    pub factor: usize,
    cache: Option<(Vec<usize>, usize, usize, usize, usize)>, // argmax + input dims
}

impl MaxPoolFreq {
    pub fn new(factor: usize) -> Self {
        assert!(factor >= 1);
        MaxPoolFreq { factor, cache: None }
    }

    pub fn out_freq(&self, f_in: usize) -> usize {
        f_in.div_ceil(self.factor)
    }

    fn run(&self, x: &Batch4) -> (Batch4, Vec<usize>) {
        let f_out = self.out_freq(x.f);
        let factor = self.factor;
        let f_in = x.f;
        // one (values, argmax) pair per plane, computed independently
        let planes: Vec<(Vec<f64>, Vec<usize>)> = par::map_indexed(x.n * x.c, |pi| {
            let n = pi / x.c;
            let c = pi % x.c;
            let x_plane = x.plane_slice(n, c);
            let mut vals = vec![0.0; x.t * f_out];
            let mut args = vec![0usize; x.t * f_out];
            for t in 0..x.t {
                for fo in 0..f_out {
                    let lo = fo * factor;
                    let hi = (lo + factor).min(f_in);
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = lo;
                    for fi in lo..hi {
                        let v = x_plane[t * f_in + fi];
                        // strict > keeps the first maximum on ties
                        if v > best {
                            best = v;
                            best_i = fi;
                        }
                    }
                    vals[t * f_out + fo] = best;
                    args[t * f_out + fo] = t * f_in + best_i;
                }
            }
            (vals, args)
        });
        let mut out = Batch4::zeros(x.n, x.c, x.t, f_out);
        let mut argmax = vec![0usize; out.data.len()];
        let plane_out = out.plane();
        for (pi, (vals, args)) in planes.into_iter().enumerate() {
            out.data[pi * plane_out..(pi + 1) * plane_out].copy_from_slice(&vals);
            argmax[pi * plane_out..(pi + 1) * plane_out].copy_from_slice(&args);
        }
        (out, argmax)
    }

    pub fn forward_train(&mut self, x: &Batch4) -> Batch4 {
        let (out, argmax) = self.run(x);
        self.cache = Some((argmax, x.n, x.c, x.t, x.f));
        out
    }

    pub fn forward_eval(&self, x: &Batch4) -> Batch4 {
        self.run(x).0
    }

    pub fn backward(&mut self, dout: &Batch4) -> Batch4 {
        let (argmax, n, c, t, f) = self.cache.take().expect("pool backward without forward");
        let mut dx = Batch4::zeros(n, c, t, f);
        let plane_out = dout.plane();
        let plane_in = dx.plane();
        par::for_each_chunk_mut(&mut dx.data, plane_in, |pi, dx_plane| {
            let base = pi * plane_out;
            let d_plane = &dout.data[base..base + plane_out];
            let a_plane = &argmax[base..base + plane_out];
            for (d, &a) in d_plane.iter().zip(a_plane) {
                dx_plane[a] += d;
            }
        });
        dx
    }
}

/// Inverted dropout on per-frame channel vectors.
pub struct Dropout {
    pub rate: f64,
    cache: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate));
        Dropout { rate, cache: None }
    }

    pub fn forward_train(&mut self, x: &Batch3, rng: &mut ChaCha8Rng) -> Batch3 {
        if self.rate == 0.0 {
            self.cache = Some(Vec::new());
            return x.clone();
        }
        let keep = 1.0 - self.rate;
        let mask: Vec<f64> = (0..x.data.len())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mut out = x.clone();
        for (v, m) in out.data.iter_mut().zip(&mask) {
            *v *= m;
        }
        self.cache = Some(mask);
        out
    }

    pub fn forward_eval(&self, x: &Batch3) -> Batch3 {
        x.clone()
    }

    pub fn backward(&mut self, dout: &Batch3) -> Batch3 {
        let mask = self.cache.take().expect("dropout backward without forward");
        if mask.is_empty() {
            return dout.clone();
        }
        let mut dx = dout.clone();
        for (d, m) in dx.data.iter_mut().zip(&mask) {
            *d *= m;
        }
        dx
    }
}

/// Global average over the remaining frequency axis: [N,C,T,F] -> [N,C,T].
pub struct FreqGap {
    cache: Option<usize>, // F
}

impl FreqGap {
    pub fn new() -> Self {
        FreqGap { cache: None }
    }

    fn run(x: &Batch4) -> Batch3 {
        let mut out = Batch3::zeros(x.n, x.c, x.t);
        let inv = 1.0 / x.f as f64;
        let t_len = x.t;
        let f_len = x.f;
        par::for_each_chunk_mut(&mut out.data, t_len, |pi, row| {
            let n = pi / x.c;
            let c = pi % x.c;
            let plane = x.plane_slice(n, c);
            for (t, r) in row.iter_mut().enumerate() {
                *r = plane[t * f_len..(t + 1) * f_len].iter().sum::<f64>() * inv;
            }
        });
        out
    }

    pub fn forward_train(&mut self, x: &Batch4) -> Batch3 {
        self.cache = Some(x.f);
        Self::run(x)
    }

    pub fn forward_eval(&self, x: &Batch4) -> Batch3 {
        Self::run(x)
    }

    pub fn backward(&mut self, dout: &Batch3) -> Batch4 {
        let f = self.cache.take().expect("gap backward without forward");
        let mut dx = Batch4::zeros(dout.n, dout.c, dout.t, f);
        let inv = 1.0 / f as f64;
        let plane = dx.plane();
        par::for_each_chunk_mut(&mut dx.data, plane, |pi, p| {
            let n = pi / dout.c;
            let c = pi % dout.c;
            let row = dout.row(n, c);
            for t in 0..dout.t {
                let g = row[t] * inv;
                p[t * f..(t + 1) * f].iter_mut().for_each(|v| *v = g);
            }
        });
        dx
    }
}

/// Flatten the remaining frequency axis into per-frame channel vectors:
/// [N,C,T,F] -> [N, C*F, T]. Unlike a frequency average, this keeps the
/// position of spectral energy, which is the pitch information itself.
pub struct FreqFlatten {
    cache: Option<(usize, usize, usize, usize)>,
}

impl FreqFlatten {
    pub fn new() -> Self {
        FreqFlatten { cache: None }
    }

    fn run(x: &Batch4) -> Batch3 {
        let mut out = Batch3::zeros(x.n, x.c * x.f, x.t);
        let (t_len, f_len) = (x.t, x.f);
        par::for_each_chunk_mut(&mut out.data, t_len, |pi, row| {
            // row index pi = n * (C*F) + c * F + f
            let n = pi / (x.c * f_len);
            let rem = pi % (x.c * f_len);
            let c = rem / f_len;
            let f = rem % f_len;
            let plane = x.plane_slice(n, c);
            for (t, r) in row.iter_mut().enumerate() {
                *r = plane[t * f_len + f];
            }
        });
        out
    }

    pub fn forward_train(&mut self, x: &Batch4) -> Batch3 {
        self.cache = Some((x.n, x.c, x.t, x.f));
        Self::run(x)
    }

    pub fn forward_eval(&self, x: &Batch4) -> Batch3 {
        Self::run(x)
    }

    pub fn backward(&mut self, dout: &Batch3) -> Batch4 {
        let (n, c, t, f) = self.cache.take().expect("flatten backward without forward");
        let mut dx = Batch4::zeros(n, c, t, f);
        let plane = dx.plane();
        par::for_each_chunk_mut(&mut dx.data, plane, |pi, p| {
            let ni = pi / c;
            let ci = pi % c;
            for fi in 0..f {
                let row = dout.row(ni, ci * f + fi);
                for (ti, &d) in row.iter().enumerate() {
                    p[ti * f + fi] = d;
                }
            }
        });
        dx
    }
}

/// Per-frame linear head: [N,C,T] -> [N,OUT,T], weights shared across time.
pub struct FrameLinear {
    pub w: Param, // [out, c_in]
    pub b: Param, // [out]
    pub c_in: usize,
    pub c_out: usize,
    cache: Option<Batch3>,
}

impl FrameLinear {
    pub fn new(c_in: usize, c_out: usize, rng: &mut ChaCha8Rng) -> Self {
        FrameLinear {
            w: Param::he_uniform(&[c_out, c_in], c_in, rng),
            b: Param::zeros(&[c_out]),
            c_in,
            c_out,
            cache: None,
        }
    }

    fn run(&self, x: &Batch3) -> Batch3 {
        assert_eq!(x.c, self.c_in);
        let mut out = Batch3::zeros(x.n, self.c_out, x.t);
        let w = &self.w.value.data;
        let b = &self.b.value.data;
        let (c_in, c_out, t_len) = (self.c_in, self.c_out, x.t);
        par::for_each_chunk_mut(&mut out.data, t_len, |pi, row| {
            let n = pi / c_out;
            let o = pi % c_out;
            row.fill(b[o]);
            for c in 0..c_in {
                let wv = w[o * c_in + c];
                let x_row = x.row(n, c);
                for (r, xv) in row.iter_mut().zip(x_row) {
                    *r += wv * xv;
                }
            }
        });
        out
    }

    pub fn forward_train(&mut self, x: &Batch3) -> Batch3 {
        let out = self.run(x);
        self.cache = Some(x.clone());
        out
    }

    pub fn forward_eval(&self, x: &Batch3) -> Batch3 {
        self.run(x)
    }

    pub fn backward(&mut self, dout: &Batch3) -> Batch3 {
        let x = self.cache.take().expect("linear backward without forward");
        let (c_in, c_out, t_len) = (self.c_in, self.c_out, x.t);
        let w = &self.w.value.data;

        let mut dx = Batch3::zeros(x.n, c_in, t_len);
        par::for_each_chunk_mut(&mut dx.data, t_len, |pi, row| {
            let n = pi / c_in;
            let c = pi % c_in;
            for o in 0..c_out {
                let wv = w[o * c_in + c];
                let d_row = dout.row(n, o);
                for (r, dv) in row.iter_mut().zip(d_row) {
                    *r += wv * dv;
                }
            }
        });

        par::for_each_chunk_mut(&mut self.w.grad.data, c_in, |o, dw_row| {
            for n in 0..x.n {
                let d_row = dout.row(n, o);
                for (c, dwc) in dw_row.iter_mut().enumerate() {
                    let x_row = x.row(n, c);
                    let mut acc = 0.0;
                    for (dv, xv) in d_row.iter().zip(x_row) {
                        acc += dv * xv;
                    }
                    *dwc += acc;
                }
            }
        });

        for o in 0..c_out {
            let mut acc = 0.0;
            for n in 0..x.n {
                acc += dout.row(n, o).iter().sum::<f64>();
            }
            self.b.grad.data[o] += acc;
        }
        dx
    }
}
