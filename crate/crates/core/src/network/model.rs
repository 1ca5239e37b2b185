//! Model assembly: residual bottleneck blocks over (time, frequency) with
//! frequency-only pooling, a frequency GAP, and per-frame output heads.

use super::layers::{BatchNorm2d, Conv2d, Dropout, FrameLinear, FreqFlatten, LeakyRelu, MaxPoolFreq};
use super::tensor::{Batch3, Batch4, Param};
use crate::error::{Error, Result};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Training objective / head layout selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    /// Evidential classification over K bins (Dirichlet head).
    M1,
    /// Evidential regression on quantized cents targets with voicing.
    M2,
    /// Plain regression on raw Hz targets, no voicing separation.
    R1,
    /// Evidential regression on quantized cents targets, no voicing separation.
    R2,
    /// Heteroscedastic Gaussian baseline (mean + log variance).
    #[serde(rename = "beta-nll")]
    BetaNll,
    /// Classifier with auxiliary true-class-probability confidence head.
    #[serde(rename = "tcp")]
    Tcp,
}

impl Task {
    /// Width of the main head per frame.
    pub fn head_width(&self, n_bins: usize) -> usize {
        match self {
            Task::M1 | Task::Tcp => n_bins,
            Task::M2 | Task::R1 | Task::R2 => 4,
            Task::BetaNll => 2,
        }
    }

    /// Ground-truth encoding this task trains on.
    pub fn target_mode(&self) -> crate::pitchgrid::TargetMode {
        match self {
            Task::M1 | Task::Tcp => crate::pitchgrid::TargetMode::M1,
            Task::M2 | Task::R2 | Task::BetaNll => crate::pitchgrid::TargetMode::M2R2,
            Task::R1 => crate::pitchgrid::TargetMode::R1,
        }
    }

    /// Whether the voicing head is trained (R1/R2 are pure regressors).
    pub fn trains_voicing(&self) -> bool {
        !matches!(self, Task::R1 | Task::R2)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::M1 => "M1",
            Task::M2 => "M2",
            Task::R1 => "R1",
            Task::R2 => "R2",
            Task::BetaNll => "beta-nll",
            Task::Tcp => "tcp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub task: Task,
    /// Output channels per residual block.
    pub block_filters: Vec<usize>,
    /// K pitch bins.
    pub n_bins: usize,
    /// Input frequency bins (must match the feature frontend).
    pub n_freq: usize,
    pub dropout_rate: f64,
    pub weight_decay: f64,
    pub leaky_slope: f64,
    /// Frequency-axis pooling factor per block.
    pub pool_factor: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            task: Task::M2,
            block_filters: vec![32, 64, 128, 256],
            n_bins: 384,
            n_freq: 1025,
            dropout_rate: 0.3,
            weight_decay: 1e-5,
            leaky_slope: 0.01,
            pool_factor: 2,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Small configuration that trains in seconds on a desktop CPU:
    /// 2 blocks, 64 bins, 257-bin truncated spectrum.
    pub fn desk_scale(task: Task) -> Self {
        ModelConfig {
            task,
            block_filters: vec![8, 16],
            n_bins: 64,
            n_freq: 257,
            dropout_rate: 0.1,
            ..ModelConfig::default()
        }
    }

    /// Minimal configuration for finite-difference gradient checks.
    pub fn tiny(task: Task) -> Self {
        ModelConfig {
            task,
            block_filters: vec![4, 8],
            n_bins: 16,
            n_freq: 65,
            dropout_rate: 0.0,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_filters.is_empty() {
            return Err(Error::config("block_filters must not be empty"));
        }
        if self.block_filters.iter().any(|&c| c == 0) {
            return Err(Error::config("block filter counts must be positive"));
        }
        if self.n_bins < 2 {
            return Err(Error::config("n_bins must be >= 2"));
        }
        if self.n_freq == 0 {
            return Err(Error::config("n_freq must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("dropout_rate must be in [0, 1)"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config("weight_decay must be >= 0"));
        }
        if self.pool_factor == 0 {
            return Err(Error::config("pool_factor must be >= 1"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        hex_string(&h.finalize())
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Residual bottleneck block: 1x1 reduce, 3x3, 1x1 expand, skip connection
/// (1x1 projection when widths change), frequency-only max-pool.
struct Block {
    reduce: Conv2d,
    bn1: BatchNorm2d,
    act1: LeakyRelu,
    mid: Conv2d,
    bn2: BatchNorm2d,
    act2: LeakyRelu,
    expand: Conv2d,
    bn3: BatchNorm2d,
    proj: Option<(Conv2d, BatchNorm2d)>,
    act_out: LeakyRelu,
    pool: MaxPoolFreq,
}

impl Block {
    fn new(c_in: usize, c_out: usize, slope: f64, pool: usize, rng: &mut ChaCha8Rng) -> Self {
        let c_mid = (c_out / 4).max(1);
        Block {
            reduce: Conv2d::new(c_in, c_mid, 1, 1, rng),
            bn1: BatchNorm2d::new(c_mid),
            act1: LeakyRelu::new(slope),
            mid: Conv2d::new(c_mid, c_mid, 3, 3, rng),
            bn2: BatchNorm2d::new(c_mid),
            act2: LeakyRelu::new(slope),
            expand: Conv2d::new(c_mid, c_out, 1, 1, rng),
            bn3: BatchNorm2d::new(c_out),
            proj: if c_in == c_out {
                None
            } else {
                Some((Conv2d::new(c_in, c_out, 1, 1, rng), BatchNorm2d::new(c_out)))
            },
            act_out: LeakyRelu::new(slope),
            pool: MaxPoolFreq::new(pool),
        }
    }

    fn forward_train(&mut self, x: &Batch4) -> Batch4 {
        let y = self.act1.forward_train(&self.bn1.forward_train(&self.reduce.forward_train(x)));
        let y = self.act2.forward_train(&self.bn2.forward_train(&self.mid.forward_train(&y)));
        let mut y = self.bn3.forward_train(&self.expand.forward_train(&y));
        let skip = match &mut self.proj {
            Some((conv, bn)) => bn.forward_train(&conv.forward_train(x)),
            None => x.clone(),
        };
        for (a, b) in y.data.iter_mut().zip(&skip.data) {
            *a += b;
        }
        let z = self.act_out.forward_train(&y);
        self.pool.forward_train(&z)
    }

    fn forward_eval(&self, x: &Batch4) -> Batch4 {
        let y = self.act1.forward_eval(&self.bn1.forward_eval(&self.reduce.forward_eval(x)));
        let y = self.act2.forward_eval(&self.bn2.forward_eval(&self.mid.forward_eval(&y)));
        let mut y = self.bn3.forward_eval(&self.expand.forward_eval(&y));
        let skip = match &self.proj {
            Some((conv, bn)) => bn.forward_eval(&conv.forward_eval(x)),
            None => x.clone(),
        };
        for (a, b) in y.data.iter_mut().zip(&skip.data) {
            *a += b;
        }
        let z = self.act_out.forward_eval(&y);
        self.pool.forward_eval(&z)
    }

    fn backward(&mut self, dout: &Batch4) -> Batch4 {
        let dz = self.pool.backward(dout);
        let dsum = self.act_out.backward(&dz);
        // main path
        let dy = self.bn3.backward(&dsum);
        let dy = self.expand.backward(&dy);
        let dy = self.act2.backward(&dy);
        let dy = self.bn2.backward(&dy);
        let dy = self.mid.backward(&dy);
        let dy = self.act1.backward(&dy);
        let dy = self.bn1.backward(&dy);
        let mut dx = self.reduce.backward(&dy);
        // skip path
        let dskip = match &mut self.proj {
            Some((conv, bn)) => {
                let d = bn.backward(&dsum);
                conv.backward(&d)
            }
            None => dsum,
        };
        for (a, b) in dx.data.iter_mut().zip(&dskip.data) {
            *a += b;
        }
        dx
    }

    fn out_freq(&self, f_in: usize) -> usize {
        self.pool.out_freq(f_in)
    }

    fn visit<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Param)) {
        f(format!("{prefix}.reduce.w"), &mut self.reduce.w);
        f(format!("{prefix}.reduce.b"), &mut self.reduce.b);
        f(format!("{prefix}.bn1.gamma"), &mut self.bn1.gamma);
        f(format!("{prefix}.bn1.beta"), &mut self.bn1.beta);
        f(format!("{prefix}.mid.w"), &mut self.mid.w);
        f(format!("{prefix}.mid.b"), &mut self.mid.b);
        f(format!("{prefix}.bn2.gamma"), &mut self.bn2.gamma);
        f(format!("{prefix}.bn2.beta"), &mut self.bn2.beta);
        f(format!("{prefix}.expand.w"), &mut self.expand.w);
        f(format!("{prefix}.expand.b"), &mut self.expand.b);
        f(format!("{prefix}.bn3.gamma"), &mut self.bn3.gamma);
        f(format!("{prefix}.bn3.beta"), &mut self.bn3.beta);
        if let Some((conv, bn)) = &mut self.proj {
            f(format!("{prefix}.proj.w"), &mut conv.w);
            f(format!("{prefix}.proj.b"), &mut conv.b);
            f(format!("{prefix}.proj_bn.gamma"), &mut bn.gamma);
            f(format!("{prefix}.proj_bn.beta"), &mut bn.beta);
        }
    }

    fn visit_buffers<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Vec<f64>)) {
        f(format!("{prefix}.bn1.running_mean"), &mut self.bn1.running_mean);
        f(format!("{prefix}.bn1.running_var"), &mut self.bn1.running_var);
        f(format!("{prefix}.bn2.running_mean"), &mut self.bn2.running_mean);
        f(format!("{prefix}.bn2.running_var"), &mut self.bn2.running_var);
        f(format!("{prefix}.bn3.running_mean"), &mut self.bn3.running_mean);
        f(format!("{prefix}.bn3.running_var"), &mut self.bn3.running_var);
        if let Some((_, bn)) = &mut self.proj {
            f(format!("{prefix}.proj_bn.running_mean"), &mut bn.running_mean);
            f(format!("{prefix}.proj_bn.running_var"), &mut bn.running_var);
        }
    }
}

/// Per-frame raw outputs of one forward pass.
pub struct ForwardOutput {
    /// Voicing logits, `[N, 1, T]`.
    pub voicing: Batch3,
    /// Main head outputs, `[N, W, T]` with task-dependent width W.
    pub head: Batch3,
    /// Raw confidence outputs (TCP only), `[N, 1, T]`.
    pub confidence: Option<Batch3>,
}

pub struct Model {
    pub config: ModelConfig,
    blocks: Vec<Block>,
    flatten: FreqFlatten,
    dropout: Dropout,
    voicing_head: FrameLinear,
    main_head: FrameLinear,
    conf_head: Option<FrameLinear>,
    recording: bool,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(config.seed);
        let mut blocks = Vec::with_capacity(config.block_filters.len());
        let mut c_in = 1;
        for &c_out in &config.block_filters {
            blocks.push(Block::new(c_in, c_out, config.leaky_slope, config.pool_factor, &mut rng));
            c_in = c_out;
        }
        let c_last = *config.block_filters.last().unwrap();
        // frequency axis surviving all pooling stages; the heads consume the
        // flattened (channel, frequency) map per frame
        let mut f_last = config.n_freq;
        for _ in 0..config.block_filters.len() {
            f_last = f_last.div_ceil(config.pool_factor);
        }
        let feat = c_last * f_last;
        let width = config.task.head_width(config.n_bins);
        Ok(Model {
            voicing_head: FrameLinear::new(feat, 1, &mut rng),
            main_head: FrameLinear::new(feat, width, &mut rng),
            conf_head: match config.task {
                Task::Tcp => Some(FrameLinear::new(feat, 1, &mut rng)),
                _ => None,
            },
            flatten: FreqFlatten::new(),
            dropout: Dropout::new(config.dropout_rate),
            blocks,
            config,
            recording: false,
        })
    }

    fn check_input(&self, x: &Batch4) -> Result<()> {
        if x.c != 1 {
            return Err(Error::shape(format!("expected single-channel input, got {}", x.c)));
        }
        if x.f != self.config.n_freq {
            return Err(Error::shape(format!(
                "input has {} frequency bins, config expects {}",
                x.f, self.config.n_freq
            )));
        }
        if x.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite values in model input"));
        }
        Ok(())
    }

    /// Training-mode forward: batch statistics, active dropout, caches for
    /// [`Model::backward`].
    pub fn forward_train(&mut self, x: &Batch4, rng: &mut ChaCha8Rng) -> Result<ForwardOutput> {
        self.check_input(x)?;
        let mut h = x.clone();
        for b in self.blocks.iter_mut() {
            h = b.forward_train(&h);
        }
        let pooled = self.flatten.forward_train(&h);
        let dropped = self.dropout.forward_train(&pooled, rng);
        let out = ForwardOutput {
            voicing: self.voicing_head.forward_train(&dropped),
            head: self.main_head.forward_train(&dropped),
            confidence: self.conf_head.as_mut().map(|c| c.forward_train(&dropped)),
        };
        if !out.voicing.data.iter().all(|v| v.is_finite()) || !out.head.data.iter().all(|v| v.is_finite()) {
            return Err(Error::numeric("non-finite activations in forward pass"));
        }
        self.recording = true;
        Ok(out)
    }

    /// Evaluation-mode forward: running statistics, no dropout, no caches.
    pub fn forward_eval(&self, x: &Batch4) -> Result<ForwardOutput> {
        self.check_input(x)?;
        let pooled = self.eval_features(x)?;
        Ok(ForwardOutput {
            voicing: self.voicing_head.forward_eval(&pooled),
            head: self.main_head.forward_eval(&pooled),
            confidence: self.conf_head.as_ref().map(|c| c.forward_eval(&pooled)),
        })
    }

    /// Eval-mode backbone features after flattening, `[N, C_last * F_last, T]`.
    pub fn eval_features(&self, x: &Batch4) -> Result<Batch3> {
        self.check_input(x)?;
        let mut h = x.clone();
        for b in &self.blocks {
            h = b.forward_eval(&h);
        }
        Ok(self.flatten.forward_eval(&h))
    }

    /// Reverse-mode pass from per-frame output gradients. Consumes the
    /// recorded forward; calling it again without a new forward is an error.
    pub fn backward(
        &mut self,
        d_voicing: &Batch3,
        d_head: &Batch3,
        d_conf: Option<&Batch3>,
    ) -> Result<()> {
        if !self.recording {
            return Err(Error::State(
                "backward requires a recorded forward pass".into(),
            ));
        }
        self.recording = false;
        let mut d_pooled = self.voicing_head.backward(d_voicing);
        let d_main = self.main_head.backward(d_head);
        for (a, b) in d_pooled.data.iter_mut().zip(&d_main.data) {
            *a += b;
        }
        if let (Some(conf), Some(dc)) = (self.conf_head.as_mut(), d_conf) {
            let d = conf.backward(dc);
            for (a, b) in d_pooled.data.iter_mut().zip(&d.data) {
                *a += b;
            }
        }
        let d_flat = self.dropout.backward(&d_pooled);
        let mut dh = self.flatten.backward(&d_flat);
        for b in self.blocks.iter_mut().rev() {
            dh = b.backward(&dh);
        }
        Ok(())
    }

    /// Train only the confidence head on frozen eval-mode features
    /// (TCP phase 2).
    pub fn confidence_head_step(
        &mut self,
        features: &Batch3,
        d_conf: &Batch3,
    ) -> Result<()> {
        let head = self
            .conf_head
            .as_mut()
            .ok_or_else(|| Error::config("model has no confidence head"))?;
        let _ = head.forward_train(features);
        head.backward(d_conf);
        Ok(())
    }

    /// Confidence-head raw outputs on eval features (TCP).
    pub fn confidence_eval(&self, features: &Batch3) -> Result<Batch3> {
        let head = self
            .conf_head
            .as_ref()
            .ok_or_else(|| Error::config("model has no confidence head"))?;
        Ok(head.forward_eval(features))
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Param)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit(&format!("block{i}"), f);
        }
        f("voicing.w".into(), &mut self.voicing_head.w);
        f("voicing.b".into(), &mut self.voicing_head.b);
        f("head.w".into(), &mut self.main_head.w);
        f("head.b".into(), &mut self.main_head.b);
        if let Some(c) = &mut self.conf_head {
            f("confidence.w".into(), &mut c.w);
            f("confidence.b".into(), &mut c.b);
        }
    }

    /// Visit only the confidence-head parameters (TCP phase 2 optimizer).
    pub fn visit_confidence_params(&mut self, f: &mut dyn FnMut(String, &mut Param)) {
        if let Some(c) = &mut self.conf_head {
            f("confidence.w".into(), &mut c.w);
            f("confidence.b".into(), &mut c.b);
        }
    }

    pub fn visit_buffers(&mut self, f: &mut dyn FnMut(String, &mut Vec<f64>)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_buffers(&format!("block{i}"), f);
        }
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |_, p| p.zero_grad());
    }

    /// Add the L2 regularization gradient `2 * weight_decay * theta` to every
    /// parameter gradient.
    pub fn apply_weight_decay(&mut self) {
        let wd = self.config.weight_decay;
        if wd == 0.0 {
            return;
        }
        self.visit_params(&mut |_, p| {
            for (g, v) in p.grad.data.iter_mut().zip(&p.value.data) {
                *g += 2.0 * wd * v;
            }
        });
    }

    /// Total parameter count.
    pub fn n_params(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, p| n += p.value.len());
        n
    }

    /// Flattened parameter values in visit order.
    pub fn param_vector(&mut self) -> Vec<f64> {
        let mut v = Vec::new();
        self.visit_params(&mut |_, p| v.extend_from_slice(&p.value.data));
        v
    }

    /// Overwrite parameters from a flattened vector in visit order.
    pub fn set_param_vector(&mut self, values: &[f64]) {
        let mut off = 0;
        self.visit_params(&mut |_, p| {
            let n = p.value.data.len();
            p.value.data.copy_from_slice(&values[off..off + n]);
            off += n;
        });
        assert_eq!(off, values.len(), "parameter vector length mismatch");
    }

    /// Flattened gradients in visit order.
    pub fn grad_vector(&mut self) -> Vec<f64> {
        let mut v = Vec::new();
        self.visit_params(&mut |_, p| v.extend_from_slice(&p.grad.data));
        v
    }

    /// Output frequency width after all blocks (sanity/diagnostics).
    pub fn final_freq(&self) -> usize {
        let mut f = self.config.n_freq;
        for b in &self.blocks {
            f = b.out_freq(f);
        }
        f
    }
}
