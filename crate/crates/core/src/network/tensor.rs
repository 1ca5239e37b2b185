//! Flat f64 tensors, trainable parameters, and seeded initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// A trainable tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn zeros(shape: &[usize]) -> Self {
        Param {
            value: Tensor::zeros(shape),
            grad: Tensor::zeros(shape),
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        Param {
            value: Tensor::filled(shape, v),
            grad: Tensor::zeros(shape),
        }
    }

    /// He-uniform init: U(-b, b) with `b = sqrt(6 / fan_in)`.
    pub fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let mut p = Param::zeros(shape);
        for v in p.value.data.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        p
    }

    pub fn zero_grad(&mut self) {
        self.grad.data.fill(0.0);
    }
}

/// Batched 4-D activation tensor `[N, C, T, F]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch4 {
    pub n: usize,
    pub c: usize,
    pub t: usize,
    pub f: usize,
    pub data: Vec<f64>,
}

impl Batch4 {
    pub fn zeros(n: usize, c: usize, t: usize, f: usize) -> Self {
        Batch4 {
            n,
            c,
            t,
            f,
            data: vec![0.0; n * c * t * f],
        }
    }

    /// Plane length per (n, c) pair.
    #[inline]
    pub fn plane(&self) -> usize {
        self.t * self.f
    }

    /// Flat offset of element (n, c, 0, 0).
    #[inline]
    pub fn plane_offset(&self, n: usize, c: usize) -> usize {
        (n * self.c + c) * self.plane()
    }

    pub fn plane_slice(&self, n: usize, c: usize) -> &[f64] {
        let o = self.plane_offset(n, c);
        &self.data[o..o + self.plane()]
    }

    pub fn plane_slice_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let o = self.plane_offset(n, c);
        let p = self.plane();
        &mut self.data[o..o + p]
    }
}

/// Batched 3-D activation tensor `[N, C, T]` (per-frame channel vectors).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch3 {
    pub n: usize,
    pub c: usize,
    pub t: usize,
    pub data: Vec<f64>,
}

impl Batch3 {
    pub fn zeros(n: usize, c: usize, t: usize) -> Self {
        Batch3 {
            n,
            c,
            t,
            data: vec![0.0; n * c * t],
        }
    }

    #[inline]
    pub fn idx(&self, n: usize, c: usize, t: usize) -> usize {
        (n * self.c + c) * self.t + t
    }

    pub fn row(&self, n: usize, c: usize) -> &[f64] {
        let o = (n * self.c + c) * self.t;
        &self.data[o..o + self.t]
    }

    pub fn row_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let o = (n * self.c + c) * self.t;
        &mut self.data[o..o + self.t]
    }
}
