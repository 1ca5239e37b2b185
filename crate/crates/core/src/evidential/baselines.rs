//! Baseline objectives: β-NLL heteroscedastic regression and TCP confidence.

use crate::error::{Error, Result};

/// β-NLL loss for one frame: `(σ̂²)^β ((y−μ̂)²/(2σ̂²) + ½ ln σ̂²)` with
/// `σ̂² = exp(log_var)`.
///
/// The `(σ̂²)^β` factor is a constant during differentiation (stop-gradient),
/// which is what distinguishes β-NLL from a reweighted Gaussian NLL.
pub fn beta_nll_loss(mu: f64, log_var: f64, y: f64, beta_coef: f64) -> f64 {
    let var = log_var.exp();
    let weight = var.powf(beta_coef);
    let e = y - mu;
    weight * (e * e / (2.0 * var) + 0.5 * log_var)
}

/// [`beta_nll_loss`] with gradients w.r.t. `(mu, log_var)`, holding the
/// `(σ̂²)^β` weight fixed.
pub fn beta_nll_loss_with_grad(mu: f64, log_var: f64, y: f64, beta_coef: f64) -> (f64, [f64; 2]) {
    let var = log_var.exp();
    let weight = var.powf(beta_coef);
    let e = y - mu;
    let loss = weight * (e * e / (2.0 * var) + 0.5 * log_var);
    let d_mu = weight * (mu - y) / var;
    let d_log_var = weight * (0.5 - e * e / (2.0 * var));
    (loss, [d_mu, d_log_var])
}

/// Normalized true-class probability `p_true / max_k p_k`; 1 iff the
/// prediction is correct.
pub fn tcp_target(probs: &[f64], true_class: usize) -> Result<f64> {
    if true_class >= probs.len() {
        return Err(Error::shape(format!(
            "true class {} out of range K={}",
            true_class,
            probs.len()
        )));
    }
    let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::numeric("degenerate probability vector: no positive mass"));
    }
    Ok(probs[true_class] / max)
}

/// Softmax probabilities of raw logits (numerically stabilized).
pub fn softmax_probs(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Categorical cross-entropy on raw logits with its gradient
/// (`softmax − one_hot`). Used by the TCP classifier.
pub fn softmax_ce_with_grad(raw: &[f64], true_class: usize) -> Result<(f64, Vec<f64>)> {
    if true_class >= raw.len() {
        return Err(Error::shape(format!(
            "true class {} out of range K={}",
            true_class,
            raw.len()
        )));
    }
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum_exp = max + raw.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    let loss = log_sum_exp - raw[true_class];
    let mut grad = softmax_probs(raw);
    grad[true_class] -= 1.0;
    Ok((loss, grad))
}
