//! Evidential heads, uncertainty decompositions, and training objectives.
//!
//! Classification places a Dirichlet prior over class probabilities; the
//! entropy of the mean splits into an aleatoric expected-entropy term and an
//! epistemic remainder. Regression places a Normal-Inverse-Gamma prior over
//! the Gaussian likelihood parameters; `β/(α−1)` is the aleatoric variance
//! and `β/(ν(α−1))` the epistemic one. All losses come with analytic
//! gradients so the network backward pass composes through them.

pub mod baselines;
pub mod dirichlet;
pub mod nig;
pub mod special;

pub use baselines::{beta_nll_loss, beta_nll_loss_with_grad, softmax_ce_with_grad, softmax_probs, tcp_target};
pub use dirichlet::{
    dirichlet_from_logits, dirichlet_kl_uniform, dirichlet_kl_uniform_with_grad, dirichlet_nll,
    dirichlet_nll_with_grad, dirichlet_uncertainties, loss_m1, m1_frame_loss_grad, DirichletParams, M1Frame,
};
pub use nig::{
    loss_m2, m2_frame_loss_grad, nig_from_raw, nig_nll, nig_nll_with_grad, nig_regularizer,
    nig_regularizer_with_grad, nig_uncertainties, NIGParams, M2Frame,
};

use serde::{Deserialize, Serialize};

/// Disentangled uncertainty at frame or sample granularity.
///
/// Classification: `u_a` / `u_e` in nats. Regression: `σ_a²` / `σ_e²` in the
/// squared target unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyPair {
    pub aleatoric: f64,
    pub epistemic: f64,
}

impl UncertaintyPair {
    /// Clamp tiny negative epistemic values (numerical slack) to zero.
    pub fn new(aleatoric: f64, epistemic: f64) -> Self {
        debug_assert!(epistemic > -1e-9, "epistemic uncertainty {epistemic} below slack");
        UncertaintyPair {
            aleatoric,
            epistemic: epistemic.max(0.0),
        }
    }
}

/// Linear warmup schedule for the KL coefficient λ_t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub warmup_epochs: usize,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule { warmup_epochs: 10 }
    }
}

impl AnnealSchedule {
    /// λ_t = min(1, t / warmup); λ = 1 everywhere when warmup is 0.
    pub fn lambda(&self, epoch: usize) -> f64 {
        if self.warmup_epochs == 0 {
            1.0
        } else {
            (epoch as f64 / self.warmup_epochs as f64).min(1.0)
        }
    }
}

/// Total training objective: voicing BCE plus weighted evidential loss.
pub fn total_loss(bce: f64, evidential_loss: f64, w: f64) -> f64 {
    debug_assert!(w >= 0.0);
    bce + w * evidential_loss
}

/// Binary cross-entropy on a raw logit, with its gradient.
///
/// `L = softplus(z) - v*z`, `dL/dz = sigmoid(z) - v`.
pub fn bce_with_logits(logit: f64, target: f64) -> (f64, f64) {
    let loss = special::softplus(logit) - target * logit;
    let grad = special::sigmoid(logit) - target;
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn anneal_schedule_ramps_and_saturates() {
        let s = AnnealSchedule { warmup_epochs: 10 };
        assert_eq!(s.lambda(0), 0.0);
        assert_relative_eq!(s.lambda(5), 0.5);
        assert_eq!(s.lambda(10), 1.0);
        assert_eq!(s.lambda(100), 1.0);
        let mut prev = -1.0;
        for t in 0..30 {
            let l = s.lambda(t);
            assert!(l >= prev);
            prev = l;
        }
        assert_eq!(AnnealSchedule { warmup_epochs: 0 }.lambda(0), 1.0);
    }

    #[test]
    fn total_loss_is_weighted_sum() {
        assert_relative_eq!(total_loss(0.3, 0.7, 1.0), 1.0);
        assert_relative_eq!(total_loss(0.3, 123.0, 0.0), 0.3);
    }

    #[test]
    fn bce_of_uninformed_guess_is_ln2() {
        let (l, _) = bce_with_logits(0.0, 1.0);
        assert_relative_eq!(l, std::f64::consts::LN_2, epsilon = 1e-15);
        let (l, _) = bce_with_logits(0.0, 0.0);
        assert_relative_eq!(l, std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn bce_gradient_matches_finite_difference() {
        let h = 1e-6;
        for &(z, v) in &[(0.3, 1.0), (-2.0, 0.0), (5.0, 1.0)] {
            let (_, g) = bce_with_logits(z, v);
            let fd = (bce_with_logits(z + h, v).0 - bce_with_logits(z - h, v).0) / (2.0 * h);
            assert_relative_eq!(g, fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn uncertainty_pair_clamps_slack() {
        let u = UncertaintyPair::new(0.1, -1e-13);
        assert_eq!(u.epistemic, 0.0);
        assert_eq!(u.aleatoric, 0.1);
    }
}
