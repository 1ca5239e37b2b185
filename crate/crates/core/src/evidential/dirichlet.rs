//! Dirichlet evidence head: parameterization, entropy decomposition, and the
//! Type-II maximum-likelihood classification objective.

use super::special::{digamma, ln_gamma, sigmoid, softplus, trigamma};
use super::UncertaintyPair;
use crate::error::{Error, Result};

/// Dirichlet concentration vector over the K pitch classes.
///
/// Built from raw head outputs via `softplus + 1`, so `α_k ≥ 1` always and
/// the total evidence `S = Σ α_k ≥ K`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    pub alpha: Vec<f64>,
}

impl DirichletParams {
    pub fn total_evidence(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// Mean class probabilities `p̂_k = α_k / S`.
    pub fn mean_probs(&self) -> Vec<f64> {
        let s = self.total_evidence();
        self.alpha.iter().map(|a| a / s).collect()
    }

    /// Index of the highest mean probability.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, a) in self.alpha.iter().enumerate() {
            if *a > self.alpha[best] {
                best = k;
            }
        }
        best
    }
}

/// Map raw head outputs to concentrations: `α_k = softplus(raw_k) + 1`.
pub fn dirichlet_from_logits(raw: &[f64]) -> Result<DirichletParams> {
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("non-finite evidence logits"));
    }
    Ok(DirichletParams {
        alpha: raw.iter().map(|&x| softplus(x) + 1.0).collect(),
    })
}

/// Entropy decomposition of the Dirichlet.
///
/// `u_a = Σ (α_k/S)(ψ(S+1) − ψ(α_k+1))` is the expected categorical entropy,
/// `u_e = H(p̂) − u_a` the epistemic remainder.
pub fn dirichlet_uncertainties(d: &DirichletParams) -> UncertaintyPair {
    let s = d.total_evidence();
    let psi_s1 = digamma(s + 1.0);
    let mut u_a = 0.0;
    let mut mean_entropy = 0.0;
    for &a in &d.alpha {
        let p = a / s;
        u_a += p * (psi_s1 - digamma(a + 1.0));
        if p > 0.0 {
            mean_entropy -= p * p.ln();
        }
    }
    UncertaintyPair::new(u_a, mean_entropy - u_a)
}

fn check_one_hot(y: &[f64], k: usize) -> Result<usize> {
    if y.len() != k {
        return Err(Error::shape(format!("one-hot length {} != K {}", y.len(), k)));
    }
    let mut hot = None;
    for (i, &v) in y.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return Err(Error::config("y is not one-hot: multiple entries set"));
            }
            hot = Some(i);
        } else if v != 0.0 {
            return Err(Error::config(format!("y is not one-hot: entry {i} = {v}")));
        }
    }
    hot.ok_or_else(|| Error::config("y is not one-hot: no entry set"))
}

/// Negative log-likelihood `ψ(S) − ψ(α_true)` for a one-hot target.
pub fn dirichlet_nll(d: &DirichletParams, y: &[f64]) -> Result<f64> {
    let true_class = check_one_hot(y, d.alpha.len())?;
    Ok(nll_at(d, true_class))
}

/// [`dirichlet_nll`] plus its analytic gradient w.r.t. each `α_k`.
pub fn dirichlet_nll_with_grad(d: &DirichletParams, y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let true_class = check_one_hot(y, d.alpha.len())?;
    let (loss, grad) = nll_with_grad_at(d, true_class);
    Ok((loss, grad))
}

pub(crate) fn nll_at(d: &DirichletParams, true_class: usize) -> f64 {
    digamma(d.total_evidence()) - digamma(d.alpha[true_class])
}

pub(crate) fn nll_with_grad_at(d: &DirichletParams, true_class: usize) -> (f64, Vec<f64>) {
    let s = d.total_evidence();
    let loss = digamma(s) - digamma(d.alpha[true_class]);
    let psi1_s = trigamma(s);
    let mut grad = vec![psi1_s; d.alpha.len()];
    grad[true_class] -= trigamma(d.alpha[true_class]);
    (loss, grad)
}

/// KL(Dir(α̃) ‖ Dir(1,…,1)) with evidence removed from the true class:
/// `α̃_k = y_k + (1 − y_k) α_k`.
pub fn dirichlet_kl_uniform(d: &DirichletParams, y: &[f64]) -> Result<f64> {
    let true_class = check_one_hot(y, d.alpha.len())?;
    Ok(kl_at(d, true_class))
}

/// [`dirichlet_kl_uniform`] plus its analytic gradient w.r.t. each `α_k`
/// (already chained through the α̃ construction).
pub fn dirichlet_kl_uniform_with_grad(d: &DirichletParams, y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let true_class = check_one_hot(y, d.alpha.len())?;
    Ok(kl_with_grad_at(d, true_class))
}

fn tilde_alpha(d: &DirichletParams, true_class: usize) -> Vec<f64> {
    d.alpha
        .iter()
        .enumerate()
        .map(|(k, &a)| if k == true_class { 1.0 } else { a })
        .collect()
}

/// Closed-form KL(Dir(a) ‖ Dir(1,…,1)).
pub(crate) fn kl_uniform_closed_form(a: &[f64]) -> f64 {
    let k = a.len() as f64;
    let s: f64 = a.iter().sum();
    let psi_s = digamma(s);
    let mut kl = ln_gamma(s) - ln_gamma(k);
    for &ai in a {
        kl -= ln_gamma(ai);
        kl += (ai - 1.0) * (digamma(ai) - psi_s);
    }
    kl
}

pub(crate) fn kl_at(d: &DirichletParams, true_class: usize) -> f64 {
    kl_uniform_closed_form(&tilde_alpha(d, true_class))
}

pub(crate) fn kl_with_grad_at(d: &DirichletParams, true_class: usize) -> (f64, Vec<f64>) {
    let at = tilde_alpha(d, true_class);
    let kl = kl_uniform_closed_form(&at);
    let s: f64 = at.iter().sum();
    let k = at.len() as f64;
    let psi1_s = trigamma(s);
    // d KL / d α̃_j = (α̃_j − 1) ψ′(α̃_j) − (S̃ − K) ψ′(S̃); the true class
    // contributes nothing since α̃_true is constant 1
    let grad = at
        .iter()
        .enumerate()
        .map(|(j, &aj)| {
            if j == true_class {
                0.0
            } else {
                (aj - 1.0) * trigamma(aj) - (s - k) * psi1_s
            }
        })
        .collect();
    (kl, grad)
}

/// One voiced-maskable frame of the classification batch.
#[derive(Debug, Clone)]
pub struct M1Frame {
    pub params: DirichletParams,
    pub true_bin: usize,
    pub voiced: bool,
}

/// Voiced-masked mean of `NLL + λ_t · KL`; 0 when no frame is voiced.
pub fn loss_m1(frames: &[M1Frame], lambda_t: f64) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for f in frames {
        if !f.voiced {
            continue;
        }
        sum += nll_at(&f.params, f.true_bin) + lambda_t * kl_at(&f.params, f.true_bin);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Per-frame M1 loss on raw head outputs, with the gradient w.r.t. the raw
/// outputs (chained through the `softplus + 1` evidence mapping).
pub fn m1_frame_loss_grad(raw: &[f64], true_bin: usize, lambda_t: f64) -> Result<(f64, Vec<f64>)> {
    let d = dirichlet_from_logits(raw)?;
    if true_bin >= d.alpha.len() {
        return Err(Error::shape(format!("true bin {} out of range K={}", true_bin, d.alpha.len())));
    }
    let (nll, nll_g) = nll_with_grad_at(&d, true_bin);
    let (kl, kl_g) = kl_with_grad_at(&d, true_bin);
    let loss = nll + lambda_t * kl;
    let grad = raw
        .iter()
        .zip(nll_g.iter().zip(kl_g.iter()))
        .map(|(&r, (&gn, &gk))| (gn + lambda_t * gk) * sigmoid(r))
        .collect();
    Ok((loss, grad))
}
