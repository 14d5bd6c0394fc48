//! Dependence structures for the simulator and their tail copulas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cross-sectional dependence of the daily uniforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dependence {
    Independent,
    /// Symmetric logistic (Gumbel) copula; `alpha = 1` is independence and
    /// `alpha → 0` comonotonicity.
    Logistic {
        alpha: f64,
    },
    Comonotone,
}

impl Dependence {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Dependence::Logistic { alpha } if !(alpha > 0.0 && alpha <= 1.0) => {
                Err(Error::Spec(format!("logistic alpha = {alpha} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Tail copula `R(x, y)` between two distinct stations.
    pub fn tail_copula(&self, x: f64, y: f64) -> f64 {
        match *self {
            Dependence::Independent => 0.0,
            Dependence::Comonotone => x.min(y).max(0.0),
            Dependence::Logistic { alpha } => logistic_tail_copula(alpha)(x, y),
        }
    }
}

/// `R(x, y) = x + y - (x^(1/α) + y^(1/α))^α`, evaluated without
/// cancellation when one argument is much smaller than the other.
pub fn logistic_tail_copula(alpha: f64) -> impl Fn(f64, f64) -> f64 + Copy + Send + Sync {
    move |x: f64, y: f64| {
        if !(x > 0.0 && y > 0.0) {
            return 0.0;
        }
        let (lo, hi) = if x < y { (x, y) } else { (y, x) };
        let rho = lo / hi;
        // hi (1 + ρ - (1 + ρ^(1/α))^α)
        let grow = (alpha * (rho.powf(1.0 / alpha)).ln_1p()).exp_m1();
        hi * (rho - grow)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_examples() {
        let r = logistic_tail_copula(0.5);
        assert!((r(1.0, 1.0) - (2.0 - 2f64.sqrt())).abs() < 1e-12);
        let ind = logistic_tail_copula(1.0);
        assert!(ind(0.3, 0.7).abs() < 1e-15);
        let near = logistic_tail_copula(0.01);
        assert!((near(0.3, 0.7) - 0.3).abs() < 1e-12);
        assert_eq!(r(0.0, 1.0), 0.0);
    }

    #[test]
    fn stable_for_lopsided_arguments() {
        let r = logistic_tail_copula(0.5);
        let (x, y) = (1e-9f64, 1.0f64);
        let exact = 2.0 * x * y / (x + y + x.hypot(y));
        assert!((r(x, y) / exact - 1.0).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_and_bounded() {
        let r = logistic_tail_copula(0.7);
        for &(x, y) in &[(0.2, 0.9), (1.0, 1.0), (3.0, 0.1)] {
            let v = r(x, y);
            assert!(v >= 0.0 && v <= x.min(y));
            assert!((r(2.5 * x, 2.5 * y) - 2.5 * v).abs() < 1e-12);
        }
    }
}
