//! Normal-Inverse-Gamma evidence head: parameterization, moment-based
//! uncertainties, and the evidential regression objective.

use super::special::{digamma, ln_gamma, sigmoid, softplus};
use super::UncertaintyPair;
use crate::error::{Error, Result};

const EPS: f64 = 1e-6;

/// NIG prior over the Gaussian likelihood parameters (μ, σ²).
///
/// `gamma` is the estimated target (cents or Hz depending on mode); the
/// output mapping keeps ν > 0, α > 1, β > 0 strictly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NIGParams {
    pub gamma: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NIGParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.alpha > 1.0 && self.beta > 0.0)
            || !self.gamma.is_finite()
            || !self.nu.is_finite()
            || !self.alpha.is_finite()
            || !self.beta.is_finite()
        {
            return Err(Error::numeric(format!("invalid NIG parameters {self:?}")));
        }
        Ok(())
    }
}

/// Map 4 raw head outputs to (γ, ν, α, β):
/// `γ = raw₀`, `ν = softplus(raw₁)+ε`, `α = softplus(raw₂)+1+ε`, `β = softplus(raw₃)+ε`.
pub fn nig_from_raw(raw: [f64; 4]) -> Result<NIGParams> {
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("non-finite NIG head outputs"));
    }
    Ok(NIGParams {
        gamma: raw[0],
        nu: softplus(raw[1]) + EPS,
        alpha: softplus(raw[2]) + 1.0 + EPS,
        beta: softplus(raw[3]) + EPS,
    })
}

/// Diagonal Jacobian d(γ,ν,α,β)/d(raw): `[1, σ(raw₁), σ(raw₂), σ(raw₃)]`.
pub fn nig_raw_jacobian(raw: [f64; 4]) -> [f64; 4] {
    [1.0, sigmoid(raw[1]), sigmoid(raw[2]), sigmoid(raw[3])]
}

/// `σ_a² = β/(α−1)`, `σ_e² = β/(ν(α−1))`.
pub fn nig_uncertainties(p: &NIGParams) -> UncertaintyPair {
    let aleatoric = p.beta / (p.alpha - 1.0);
    UncertaintyPair::new(aleatoric, aleatoric / p.nu)
}

/// Gradient of a scalar loss w.r.t. the four NIG parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NIGGrad {
    pub d_gamma: f64,
    pub d_nu: f64,
    pub d_alpha: f64,
    pub d_beta: f64,
}

/// Negative log marginal likelihood of `y` under the NIG-compounded Student-t:
///
/// with Ω = 2β(1+ν),
/// `L = ½ ln(π/ν) − α ln Ω + (α+½) ln((y−γ)²ν + Ω) + ln Γ(α) − ln Γ(α+½)`.
pub fn nig_nll(p: &NIGParams, y: f64) -> f64 {
    let omega = 2.0 * p.beta * (1.0 + p.nu);
    let e = y - p.gamma;
    let a = e * e * p.nu + omega;
    0.5 * (std::f64::consts::PI / p.nu).ln() - p.alpha * omega.ln()
        + (p.alpha + 0.5) * a.ln()
        + ln_gamma(p.alpha)
        - ln_gamma(p.alpha + 0.5)
}

/// [`nig_nll`] with analytic gradients w.r.t. (γ, ν, α, β).
pub fn nig_nll_with_grad(p: &NIGParams, y: f64) -> (f64, NIGGrad) {
    let omega = 2.0 * p.beta * (1.0 + p.nu);
    let e = y - p.gamma;
    let a = e * e * p.nu + omega;
    let loss = 0.5 * (std::f64::consts::PI / p.nu).ln() - p.alpha * omega.ln()
        + (p.alpha + 0.5) * a.ln()
        + ln_gamma(p.alpha)
        - ln_gamma(p.alpha + 0.5);
    let ap = p.alpha + 0.5;
    let grad = NIGGrad {
        d_gamma: ap * (-2.0 * e * p.nu) / a,
        d_nu: -0.5 / p.nu - p.alpha * (2.0 * p.beta) / omega + ap * (e * e + 2.0 * p.beta) / a,
        d_alpha: -omega.ln() + a.ln() + digamma(p.alpha) - digamma(ap),
        d_beta: 2.0 * (1.0 + p.nu) * (ap / a - p.alpha / omega),
    };
    (loss, grad)
}

/// Evidence-scaled error penalty `|y − γ| (2ν + α)`.
pub fn nig_regularizer(p: &NIGParams, y: f64) -> f64 {
    (y - p.gamma).abs() * (2.0 * p.nu + p.alpha)
}

/// [`nig_regularizer`] with its subgradient (0 taken at `y = γ`).
pub fn nig_regularizer_with_grad(p: &NIGParams, y: f64) -> (f64, NIGGrad) {
    let e = y - p.gamma;
    let scale = 2.0 * p.nu + p.alpha;
    let loss = e.abs() * scale;
    let sign = if e > 0.0 {
        1.0
    } else if e < 0.0 {
        -1.0
    } else {
        0.0
    };
    let grad = NIGGrad {
        d_gamma: -sign * scale,
        d_nu: 2.0 * e.abs(),
        d_alpha: e.abs(),
        d_beta: 0.0,
    };
    (loss, grad)
}

/// One voiced-maskable frame of the regression batch.
#[derive(Debug, Clone)]
pub struct M2Frame {
    pub params: NIGParams,
    pub target: f64,
    pub voiced: bool,
}

/// Voiced-masked mean of `NLL + λ · regularizer`; 0 when no frame is voiced.
pub fn loss_m2(frames: &[M2Frame], lambda: f64) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for f in frames {
        if !f.voiced {
            continue;
        }
        sum += nig_nll(&f.params, f.target) + lambda * nig_regularizer(&f.params, f.target);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Per-frame M2 loss on the 4 raw head outputs, with the gradient w.r.t. the
/// raw outputs (chained through the constraint mapping).
pub fn m2_frame_loss_grad(raw: [f64; 4], y: f64, lambda: f64) -> Result<(f64, [f64; 4])> {
    let p = nig_from_raw(raw)?;
    let (nll, g1) = nig_nll_with_grad(&p, y);
    let (reg, g2) = nig_regularizer_with_grad(&p, y);
    let jac = nig_raw_jacobian(raw);
    let loss = nll + lambda * reg;
    let grad = [
        (g1.d_gamma + lambda * g2.d_gamma) * jac[0],
        (g1.d_nu + lambda * g2.d_nu) * jac[1],
        (g1.d_alpha + lambda * g2.d_alpha) * jac[2],
        (g1.d_beta + lambda * g2.d_beta) * jac[3],
    ];
    Ok((loss, grad))
}
