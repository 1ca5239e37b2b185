//! Training loop, per-task loss assembly, and inference.

use super::adam::{Adam, AdamHyper};
use super::checkpoint::Checkpoint;
use super::model::{ForwardOutput, Model, Task};
use super::tensor::{Batch3, Batch4};
use crate::dataio::LabeledClip;
use crate::dsp::FeatureClip;
use crate::error::{Error, Result};
use crate::evidential::{
    self, special::sigmoid, AnnealSchedule, UncertaintyPair,
};
use crate::metrics::{self, TrackMetrics};
use crate::pitchgrid::{FrameTarget, PitchGrid};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Regression targets are divided by this before entering the NIG /
/// beta-NLL losses and multiplied back at the prediction boundary, mapping
/// the 4800-cent grid span (and the Hz range) into roughly [0, 1]. Without
/// rescaling, Adam's ~lr-sized per-step updates cannot reach the targets in
/// any desk-scale step budget.
pub const REGRESSION_TARGET_SCALE: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Weight `w` of the evidential loss next to the voicing BCE.
    pub evidential_weight: f64,
    /// Fixed regularizer coupling λ for the NIG objective (M2/R1/R2).
    pub m2_lambda: f64,
    /// KL warmup λ_t for the Dirichlet objective (M1).
    pub anneal: AnnealSchedule,
    /// β of the β-NLL baseline.
    pub beta_coef: f64,
    /// Extra epochs for the TCP confidence head (phase 2).
    pub tcp_confidence_epochs: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 30,
            batch_size: 8,
            lr: 1e-3,
            seed: 0,
            evidential_weight: 1.0,
            m2_lambda: 0.01,
            anneal: AnnealSchedule::default(),
            beta_coef: 0.5,
            tcp_confidence_epochs: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_oa: Option<f64>,
    pub lambda_t: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrainStatus {
    Completed,
    /// Loss went non-finite; the returned checkpoint is the last good one.
    Diverged { epoch: usize },
}

pub struct TrainOutput {
    pub model: Model,
    pub best: Checkpoint,
    pub log: Vec<EpochLog>,
    pub status: TrainStatus,
}

/// Stack clips into a `[N, 1, T, F]` batch.
fn make_batch(clips: &[&LabeledClip]) -> Result<Batch4> {
    let t = clips[0].features.n_frames;
    let f = clips[0].features.n_freq;
    for c in clips {
        if c.features.n_frames != t || c.features.n_freq != f {
            return Err(Error::shape("clips in a batch must share T and F"));
        }
    }
    let mut x = Batch4::zeros(clips.len(), 1, t, f);
    for (n, c) in clips.iter().enumerate() {
        x.plane_slice_mut(n, 0).copy_from_slice(&c.features.data);
    }
    Ok(x)
}

fn cents_target(t: &FrameTarget) -> Result<f64> {
    t.cents_value
        .ok_or_else(|| Error::config("clip targets carry no cents values; reload with the task's target mode"))
}

fn bin_target(t: &FrameTarget) -> Result<usize> {
    t.bin_index
        .ok_or_else(|| Error::config("clip targets carry no bin indices; reload with the task's target mode"))
}

struct BatchLoss {
    total: f64,
    d_voicing: Batch3,
    d_head: Batch3,
}

/// Per-frame losses and output gradients for one forward pass.
///
/// Voicing BCE is averaged over all frames; the evidential loss is averaged
/// over voiced frames (all frames for R1, which regresses the unvoiced zeros
/// too). R1/R2 skip the voicing term entirely.
fn compute_loss(
    task: Task,
    out: &ForwardOutput,
    clips: &[&LabeledClip],
    lambda_t: f64,
    params: &TrainParams,
) -> Result<BatchLoss> {
    let n = clips.len();
    let t_len = out.head.t;
    let width = out.head.c;
    let w_evi = params.evidential_weight;

    struct ClipBits {
        bce_sum: f64,
        task_sum: f64,
        task_frames: usize,
        d_voicing: Vec<f64>,
        d_head: Vec<f64>,
    }

    let bits: Vec<Result<ClipBits>> = crate::par::map_indexed(n, |ni| {
        let clip = clips[ni];
        let mut b = ClipBits {
            bce_sum: 0.0,
            task_sum: 0.0,
            task_frames: 0,
            d_voicing: vec![0.0; t_len],
            d_head: vec![0.0; width * t_len],
        };
        let mut raw = vec![0.0; width];
        for t in 0..t_len {
            let target = &clip.targets[t];
            if task.trains_voicing() {
                let z = out.voicing.data[(ni * 1) * t_len + t];
                let (l, g) = evidential::bce_with_logits(z, if target.voiced { 1.0 } else { 0.0 });
                b.bce_sum += l;
                b.d_voicing[t] = g;
            }
            let in_task = if task == Task::R1 { true } else { target.voiced };
            if !in_task {
                continue;
            }
            for w in 0..width {
                raw[w] = out.head.data[(ni * width + w) * t_len + t];
            }
            let (loss, grad): (f64, Vec<f64>) = match task {
                Task::M1 => {
                    let (l, g) = evidential::m1_frame_loss_grad(&raw, bin_target(target)?, lambda_t)?;
                    (l, g)
                }
                Task::M2 | Task::R2 => {
                    let y = cents_target(target)? / REGRESSION_TARGET_SCALE;
                    let (l, g) =
                        evidential::m2_frame_loss_grad([raw[0], raw[1], raw[2], raw[3]], y, params.m2_lambda)?;
                    (l, g.to_vec())
                }
                Task::R1 => {
                    let y = target.hz_value / REGRESSION_TARGET_SCALE;
                    let (l, g) =
                        evidential::m2_frame_loss_grad([raw[0], raw[1], raw[2], raw[3]], y, params.m2_lambda)?;
                    (l, g.to_vec())
                }
                Task::BetaNll => {
                    let y = cents_target(target)? / REGRESSION_TARGET_SCALE;
                    let (l, g) = evidential::beta_nll_loss_with_grad(raw[0], raw[1], y, params.beta_coef);
                    (l, g.to_vec())
                }
                Task::Tcp => {
                    let (l, g) = evidential::softmax_ce_with_grad(&raw, bin_target(target)?)?;
                    (l, g)
                }
            };
            b.task_sum += loss;
            b.task_frames += 1;
            for w in 0..width {
                b.d_head[w * t_len + t] = grad[w];
            }
        }
        Ok(b)
    });

    let mut bce_sum = 0.0;
    let mut task_sum = 0.0;
    let mut task_frames = 0usize;
    let mut d_voicing = Batch3::zeros(n, 1, t_len);
    let mut d_head = Batch3::zeros(n, width, t_len);
    let mut all = Vec::with_capacity(n);
    for b in bits {
        all.push(b?);
    }
    for (ni, b) in all.iter().enumerate() {
        bce_sum += b.bce_sum;
        task_sum += b.task_sum;
        task_frames += b.task_frames;
        d_voicing.row_mut(ni, 0).copy_from_slice(&b.d_voicing);
        let o = ni * width * t_len;
        d_head.data[o..o + width * t_len].copy_from_slice(&b.d_head);
    }

    let n_frames = (n * t_len) as f64;
    let bce = if task.trains_voicing() { bce_sum / n_frames } else { 0.0 };
    let task_mean = if task_frames == 0 { 0.0 } else { task_sum / task_frames as f64 };
    let total = evidential::total_loss(bce, task_mean, w_evi);

    let v_scale = if task.trains_voicing() { 1.0 / n_frames } else { 0.0 };
    d_voicing.data.iter_mut().for_each(|g| *g *= v_scale);
    let h_scale = if task_frames == 0 { 0.0 } else { w_evi / task_frames as f64 };
    d_head.data.iter_mut().for_each(|g| *g *= h_scale);

    Ok(BatchLoss {
        total,
        d_voicing,
        d_head,
    })
}

/// Training-mode loss of one batch (no gradients). Dropout must be disabled
/// in the config for this to be a deterministic function of the parameters;
/// used by finite-difference gradient checks.
pub fn batch_loss(
    model: &mut Model,
    clips: &[&LabeledClip],
    lambda_t: f64,
    params: &TrainParams,
) -> Result<f64> {
    let x = make_batch(clips)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = model.forward_train(&x, &mut rng)?;
    Ok(compute_loss(model.config.task, &out, clips, lambda_t, params)?.total)
}

/// Training-mode forward + backward of one batch; gradients accumulate in
/// the model (weight decay not applied). Returns the loss.
pub fn batch_backward(
    model: &mut Model,
    clips: &[&LabeledClip],
    lambda_t: f64,
    params: &TrainParams,
) -> Result<f64> {
    let x = make_batch(clips)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    model.zero_grads();
    let out = model.forward_train(&x, &mut rng)?;
    let bl = compute_loss(model.config.task, &out, clips, lambda_t, params)?;
    model.backward(&bl.d_voicing, &bl.d_head, None)?;
    Ok(bl.total)
}

fn epoch_rng(seed: u64, epoch: usize, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(epoch as u64)
            .wrapping_add(salt << 32),
    )
}

/// Mean loss over clips in evaluation mode (no gradients kept).
fn eval_loss(
    model: &mut Model,
    clips: &[LabeledClip],
    task: Task,
    lambda_t: f64,
    params: &TrainParams,
) -> Result<f64> {
    if clips.is_empty() {
        return Ok(f64::NAN);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for chunk in clips.chunks(params.batch_size.max(1)) {
        let refs: Vec<&LabeledClip> = chunk.iter().collect();
        let x = make_batch(&refs)?;
        let out = model.forward_eval(&x)?;
        let bl = compute_loss(task, &out, &refs, lambda_t, params)?;
        sum += bl.total * refs.len() as f64;
        count += refs.len();
    }
    Ok(sum / count as f64)
}

/// Run the epoch loop on an existing model (shared by training from scratch
/// and fine-tuning).
pub fn train_loop(
    model: &mut Model,
    train_clips: &[LabeledClip],
    val_clips: &[LabeledClip],
    params: &TrainParams,
    grid: &PitchGrid,
    config_digest: &str,
) -> Result<(Vec<EpochLog>, Checkpoint, TrainStatus)> {
    if train_clips.is_empty() {
        return Err(Error::config("empty training split"));
    }
    for c in train_clips.iter().chain(val_clips) {
        c.validate()?;
    }
    let task = model.config.task;
    let mut adam = Adam::new(AdamHyper {
        lr: params.lr,
        ..AdamHyper::default()
    })?;
    let mut log: Vec<EpochLog> = Vec::with_capacity(params.epochs);
    let mut best: Option<(f64, Checkpoint)> = None;
    let mut last_good = Checkpoint::capture(model, Some(&adam), 0, config_digest);

    for epoch in 0..params.epochs {
        let lambda_t = params.anneal.lambda(epoch);
        let mut rng = epoch_rng(params.seed, epoch, 1);
        let mut order: Vec<usize> = (0..train_clips.len()).collect();
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(params.batch_size.max(1)) {
            let refs: Vec<&LabeledClip> = chunk.iter().map(|&i| &train_clips[i]).collect();
            let x = make_batch(&refs)?;
            model.zero_grads();
            let out = model.forward_train(&x, &mut rng)?;
            let bl = compute_loss(task, &out, &refs, lambda_t, params)?;
            if !bl.total.is_finite() {
                return Ok((log, last_good, TrainStatus::Diverged { epoch }));
            }
            model.backward(&bl.d_voicing, &bl.d_head, None)?;
            model.apply_weight_decay();
            adam.step(model);
            epoch_loss += bl.total * refs.len() as f64;
            seen += refs.len();
        }
        let train_loss = epoch_loss / seen as f64;

        let (val_loss, val_oa) = if val_clips.is_empty() {
            (None, None)
        } else {
            let vl = eval_loss(model, val_clips, task, lambda_t, params)?;
            let m = evaluate_model(model, val_clips, grid)?.1;
            (Some(vl), Some(m.oa))
        };
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_oa,
            lambda_t,
        });

        let snapshot = Checkpoint::capture(model, Some(&adam), epoch + 1, config_digest);
        last_good = snapshot.clone();
        match (val_loss, &mut best) {
            (Some(vl), Some((best_vl, _))) if vl.is_finite() && vl < *best_vl => {
                best = Some((vl, snapshot));
            }
            (Some(vl), None) if vl.is_finite() => {
                best = Some((vl, snapshot));
            }
            (None, _) => {
                // no validation split: keep the latest state
                best = Some((f64::INFINITY, snapshot));
            }
            _ => {}
        }
    }

    // TCP phase 2: train the confidence head on frozen features
    if task == Task::Tcp && params.tcp_confidence_epochs > 0 {
        train_tcp_confidence(model, train_clips, params, &mut log)?;
        // the confidence head lives outside the phase-1 snapshots
        let final_ckpt = Checkpoint::capture(model, Some(&adam), params.epochs, config_digest);
        best = Some((f64::NAN, final_ckpt));
    }

    let best_ckpt = best.map(|(_, c)| c).unwrap_or(last_good);
    Ok((log, best_ckpt, TrainStatus::Completed))
}

/// Phase-2 training of the TCP confidence head: MSE between the sigmoid
/// confidence and the normalized true-class probability, on voiced frames,
/// with every other parameter frozen.
fn train_tcp_confidence(
    model: &mut Model,
    clips: &[LabeledClip],
    params: &TrainParams,
    log: &mut Vec<EpochLog>,
) -> Result<()> {
    let mut adam = Adam::new(AdamHyper {
        lr: params.lr,
        ..AdamHyper::default()
    })?;
    for epoch in 0..params.tcp_confidence_epochs {
        let mut rng = epoch_rng(params.seed, epoch, 2);
        let mut order: Vec<usize> = (0..clips.len()).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(params.batch_size.max(1)) {
            let refs: Vec<&LabeledClip> = chunk.iter().map(|&i| &clips[i]).collect();
            let x = make_batch(&refs)?;
            let features = model.eval_features(&x)?;
            let logits = model.forward_eval(&x)?.head;
            let conf = model.confidence_eval(&features)?;
            let t_len = conf.t;
            let width = logits.c;

            let mut d_conf = Batch3::zeros(refs.len(), 1, t_len);
            let mut frames = 0usize;
            let mut batch_loss = 0.0;
            for (ni, clip) in refs.iter().enumerate() {
                for t in 0..t_len {
                    let target = &clip.targets[t];
                    if !target.voiced {
                        continue;
                    }
                    let mut raw = vec![0.0; width];
                    for w in 0..width {
                        raw[w] = logits.data[(ni * width + w) * t_len + t];
                    }
                    let probs = evidential::softmax_probs(&raw);
                    let tcp = evidential::tcp_target(&probs, bin_target(target)?)?;
                    let z = conf.data[ni * t_len + t];
                    let c = sigmoid(z);
                    batch_loss += (c - tcp) * (c - tcp);
                    d_conf.data[ni * t_len + t] = 2.0 * (c - tcp) * c * (1.0 - c);
                    frames += 1;
                }
            }
            if frames == 0 {
                continue;
            }
            batch_loss /= frames as f64;
            let scale = 1.0 / frames as f64;
            d_conf.data.iter_mut().for_each(|g| *g *= scale);
            model.confidence_head_step(&features, &d_conf)?;
            adam.step_confidence(model);
            loss_sum += batch_loss * refs.len() as f64;
            seen += refs.len();
        }
        log.push(EpochLog {
            epoch: params.epochs + epoch,
            train_loss: if seen == 0 { 0.0 } else { loss_sum / seen as f64 },
            val_loss: None,
            val_oa: None,
            lambda_t: 1.0,
        });
    }
    Ok(())
}

/// Train a fresh model from a config.
pub fn train(
    config: super::model::ModelConfig,
    train_clips: &[LabeledClip],
    val_clips: &[LabeledClip],
    params: &TrainParams,
    grid: &PitchGrid,
    config_digest: &str,
) -> Result<TrainOutput> {
    let mut model = Model::new(config)?;
    let (log, best, status) = train_loop(&mut model, train_clips, val_clips, params, grid, config_digest)?;
    Ok(TrainOutput {
        model,
        best,
        log,
        status,
    })
}

/// Uncertainty channel reported per frame, task-dependent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictUncertainty {
    /// Disentangled (aleatoric, epistemic) from an evidential head.
    Evidential(UncertaintyPair),
    /// Conflated predicted variance (β-NLL baseline).
    Variance(f64),
    /// Confidence in (0, 1] (TCP baseline); higher means more certain.
    Confidence(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramePrediction {
    pub voicing_prob: f64,
    /// Estimated f0 in Hz; 0 when the frame is predicted unvoiced.
    pub f0_hz: f64,
    pub uncertainty: PredictUncertainty,
}

fn unscale(u: UncertaintyPair) -> UncertaintyPair {
    let s2 = REGRESSION_TARGET_SCALE * REGRESSION_TARGET_SCALE;
    UncertaintyPair {
        aleatoric: u.aleatoric * s2,
        epistemic: u.epistemic * s2,
    }
}

/// Per-frame inference for one clip.
pub fn predict(model: &Model, clip: &FeatureClip, grid: &PitchGrid) -> Result<Vec<FramePrediction>> {
    let mut x = Batch4::zeros(1, 1, clip.n_frames, clip.n_freq);
    x.plane_slice_mut(0, 0).copy_from_slice(&clip.data);
    let out = model.forward_eval(&x)?;
    let task = model.config.task;
    let t_len = out.head.t;
    let width = out.head.c;
    let mut preds = Vec::with_capacity(t_len);
    let mut raw = vec![0.0; width];
    for t in 0..t_len {
        for w in 0..width {
            raw[w] = out.head.data[w * t_len + t];
        }
        let vp = sigmoid(out.voicing.data[t]);
        let pred = match task {
            Task::M1 => {
                let d = evidential::dirichlet_from_logits(&raw)?;
                let voiced = vp >= 0.5;
                let f0 = if voiced { grid.bin_to_hz(d.argmax())? } else { 0.0 };
                FramePrediction {
                    voicing_prob: vp,
                    f0_hz: f0,
                    uncertainty: PredictUncertainty::Evidential(evidential::dirichlet_uncertainties(&d)),
                }
            }
            Task::M2 => {
                let p = evidential::nig_from_raw([raw[0], raw[1], raw[2], raw[3]])?;
                let voiced = vp >= 0.5;
                let cents = p.gamma * REGRESSION_TARGET_SCALE;
                let f0 = if voiced { grid.cents_to_hz(cents) } else { 0.0 };
                FramePrediction {
                    voicing_prob: vp,
                    f0_hz: f0,
                    uncertainty: PredictUncertainty::Evidential(unscale(evidential::nig_uncertainties(&p))),
                }
            }
            Task::R2 => {
                // no voicing separation: every frame emits a pitch
                let p = evidential::nig_from_raw([raw[0], raw[1], raw[2], raw[3]])?;
                let cents = p.gamma * REGRESSION_TARGET_SCALE;
                FramePrediction {
                    voicing_prob: 1.0,
                    f0_hz: grid.cents_to_hz(cents),
                    uncertainty: PredictUncertainty::Evidential(unscale(evidential::nig_uncertainties(&p))),
                }
            }
            Task::R1 => {
                // pure Hz regression: estimates below the grid floor mean "no melody"
                let p = evidential::nig_from_raw([raw[0], raw[1], raw[2], raw[3]])?;
                let hz = p.gamma * REGRESSION_TARGET_SCALE;
                let voiced = hz >= grid.f_min;
                FramePrediction {
                    voicing_prob: if voiced { 1.0 } else { 0.0 },
                    f0_hz: if voiced { hz } else { 0.0 },
                    uncertainty: PredictUncertainty::Evidential(unscale(evidential::nig_uncertainties(&p))),
                }
            }
            Task::BetaNll => {
                let voiced = vp >= 0.5;
                let cents = raw[0] * REGRESSION_TARGET_SCALE;
                let f0 = if voiced { grid.cents_to_hz(cents) } else { 0.0 };
                FramePrediction {
                    voicing_prob: vp,
                    f0_hz: f0,
                    uncertainty: PredictUncertainty::Variance(
                        raw[1].exp() * REGRESSION_TARGET_SCALE * REGRESSION_TARGET_SCALE,
                    ),
                }
            }
            Task::Tcp => {
                let voiced = vp >= 0.5;
                let probs = evidential::softmax_probs(&raw);
                let argmax = probs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                let f0 = if voiced { grid.bin_to_hz(argmax)? } else { 0.0 };
                let conf_raw = out
                    .confidence
                    .as_ref()
                    .ok_or_else(|| Error::config("TCP model missing confidence head"))?
                    .data[t];
                FramePrediction {
                    voicing_prob: vp,
                    f0_hz: f0,
                    uncertainty: PredictUncertainty::Confidence(sigmoid(conf_raw)),
                }
            }
        };
        preds.push(pred);
    }
    Ok(preds)
}

/// Inference over many clips, parallel across clips.
pub fn predict_batch(
    model: &Model,
    clips: &[FeatureClip],
    grid: &PitchGrid,
) -> Result<Vec<Vec<FramePrediction>>> {
    crate::par::map_slice(clips, |c| predict(model, c, grid))
        .into_iter()
        .collect()
}

/// Evaluate a model on labeled clips: per-clip metrics plus their mean.
pub fn evaluate_model(
    model: &Model,
    clips: &[LabeledClip],
    grid: &PitchGrid,
) -> Result<(Vec<TrackMetrics>, TrackMetrics)> {
    if clips.is_empty() {
        return Err(Error::config("no clips to evaluate"));
    }
    let per_clip: Vec<Result<TrackMetrics>> = crate::par::map_slice(clips, |clip| {
        let preds = predict(model, &clip.features, grid)?;
        let reference: Vec<f64> = clip.targets.iter().map(|t| t.f0_hz(grid)).collect();
        let estimate: Vec<f64> = preds.iter().map(|p| p.f0_hz).collect();
        metrics::evaluate(&reference, &estimate, metrics::DEFAULT_TOLERANCE_CENTS)
    });
    let mut all = Vec::with_capacity(clips.len());
    for m in per_clip {
        all.push(m?);
    }
    let n = all.len() as f64;
    let mean = TrackMetrics {
        rpa: all.iter().map(|m| m.rpa).sum::<f64>() / n,
        rca: all.iter().map(|m| m.rca).sum::<f64>() / n,
        oa: all.iter().map(|m| m.oa).sum::<f64>() / n,
    };
    Ok((all, mean))
}
