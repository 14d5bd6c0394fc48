//! Generalized Pareto log-likelihood and its derivatives in `(γ, log σ)`.
//!
//! With `z = x/σ` and `w = γ z` every quantity is written through smooth
//! functions of `w` so the `γ → 0` limit needs no special casing:
//!
//! ```text
//! ℓ      = -log σ - log(1+w) - z B(w)          B(w) = log(1+w)/w
//! ∂ℓ/∂γ  = z² A(w) - z/(1+w)                   A(w) = (log(1+w) - w/(1+w))/w²
//! ∂ℓ/∂τ  = -1 + (1+γ) z/(1+w)                  τ = log σ
//! ∂²ℓ/∂γ² = z³ A'(w) + z²/(1+w)²
//! ∂²ℓ/∂γ∂τ = z(1-z)/(1+w)²
//! ∂²ℓ/∂τ² = -(1+γ) z/(1+w)²
//! ```

use crate::error::{Error, Result};

/// Below this `|w|` the helpers switch to their power series.
const SERIES_CUTOFF: f64 = 0.05;
const SERIES_TERMS: usize = 16;

/// `log(1+w)/w`.
fn log_ratio(w: f64) -> f64 {
    if w.abs() < SERIES_CUTOFF {
        // Σ (-w)^n / (n+1)
        let mut sum = 0.0;
        let mut pow = 1.0;
        for n in 0..SERIES_TERMS {
            sum += pow / (n + 1) as f64;
            pow *= -w;
        }
        sum
    } else {
        w.ln_1p() / w
    }
}

/// `(log(1+w) - w/(1+w)) / w²`.
fn score_kernel(w: f64) -> f64 {
    if w.abs() < SERIES_CUTOFF {
        // Σ_{n>=2} (-1)^n (n-1)/n w^{n-2}
        let mut sum = 0.0;
        let mut pow = 1.0;
        for n in 2..SERIES_TERMS + 2 {
            sum += pow * (n - 1) as f64 / n as f64;
            pow *= -w;
        }
        sum
    } else {
        (w.ln_1p() - w / (1.0 + w)) / (w * w)
    }
}

/// Derivative of [`score_kernel`]:
/// `(2w/(1+w) + w²/(1+w)² - 2 log(1+w)) / w³`.
fn score_kernel_prime(w: f64) -> f64 {
    if w.abs() < SERIES_CUTOFF {
        // Σ_{n>=3} (-1)^n (n-1)(n-2)/n w^{n-3}
        let mut sum = 0.0;
        let mut pow = -1.0;
        for n in 3..SERIES_TERMS + 3 {
            sum += pow * ((n - 1) * (n - 2)) as f64 / n as f64;
            pow *= -w;
        }
        sum
    } else {
        let q = w / (1.0 + w);
        (2.0 * q + q * q - 2.0 * w.ln_1p()) / (w * w * w)
    }
}

/// Log-density of `GP(γ, σ)` at `x`. `None` outside the support.
pub fn gp_logpdf(gamma: f64, sigma: f64, x: f64) -> Option<f64> {
    let z = x / sigma;
    let w = gamma * z;
    if !(sigma > 0.0) || !(x > 0.0) || !(1.0 + w > 0.0) {
        return None;
    }
    Some(-sigma.ln() - w.ln_1p() - z * log_ratio(w))
}

/// Sum of GP log-densities over `excesses`.
pub fn gp_loglik(gamma: f64, sigma: f64, excesses: &[f64]) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("scale {sigma} must be positive")));
    }
    let mut total = 0.0;
    for (idx, &x) in excesses.iter().enumerate() {
        match gp_logpdf(gamma, sigma, x) {
            Some(v) => total += v,
            None => {
                return Err(Error::Domain(format!(
                    "excess #{idx} = {x} outside the GP support for gamma = {gamma}, sigma = {sigma} \
                     (1 + gamma x / sigma = {})",
                    1.0 + gamma * x / sigma
                )))
            }
        }
    }
    Ok(total)
}

/// Log-likelihood with gradient and Hessian in `(γ, τ = log σ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalQuadratic {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

/// Evaluates the summed log-likelihood and derivatives, or `None` when some
/// excess falls outside the support.
pub fn loglik_derivatives(gamma: f64, log_sigma: f64, excesses: &[f64]) -> Option<LocalQuadratic> {
    let inv_sigma = (-log_sigma).exp();
    let g1 = 1.0 + gamma;
    let mut out = LocalQuadratic {
        value: 0.0,
        grad: [0.0; 2],
        hess: [[0.0; 2]; 2],
    };
    for &x in excesses {
        let z = x * inv_sigma;
        let w = gamma * z;
        let opw = 1.0 + w;
        if !(opw > 0.0) {
            return None;
        }
        let inv = 1.0 / opw;
        let inv2 = inv * inv;
        out.value += -log_sigma - w.ln_1p() - z * log_ratio(w);
        out.grad[0] += z * z * score_kernel(w) - z * inv;
        out.grad[1] += -1.0 + g1 * z * inv;
        out.hess[0][0] += z * z * z * score_kernel_prime(w) + z * z * inv2;
        out.hess[0][1] += z * (1.0 - z) * inv2;
        out.hess[1][1] += -g1 * z * inv2;
    }
    out.hess[1][0] = out.hess[0][1];
    Some(out)
}
