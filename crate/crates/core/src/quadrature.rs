//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Nodes never touch the interval ends, so integrable endpoint
//! singularities are handled by repeated bisection of the worst panel.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_panels: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-10,
            rel: 1e-10,
            max_panels: 2000,
        }
    }
}

impl Tolerance {
    pub fn absolute(abs: f64) -> Self {
        Self {
            abs,
            rel: 0.0,
            ..Self::default()
        }
    }
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let sum = f(c - dx) + f(c + dx);
        k += WGK[i] * sum;
        if i % 2 == 1 {
            g += WG[i / 2] * sum;
        }
    }
    Panel {
        a,
        b,
        value: k * h,
        error: ((k - g) * h).abs(),
    }
}

/// `∫_a^b f` with extra panel boundaries at `breaks` (points outside
/// `(a, b)` are ignored).
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Integral> {
    if a == b {
        return Ok(Integral { value: 0.0, error: 0.0 });
    }
    let mut cuts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    cuts.extend(inner);
    cuts.push(b);

    let mut heap = BinaryHeap::new();
    let (mut value, mut error) = (0.0, 0.0);
    for w in cuts.windows(2) {
        let p = kronrod(&mut f, w[0], w[1]);
        value += p.value;
        error += p.error;
        heap.push(p);
    }
    let target = |v: f64| tol.abs.max(tol.rel * v.abs());
    while error > target(value) && heap.len() < tol.max_panels {
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // Panel cannot be split further in floating point.
            heap.push(worst);
            break;
        }
        let left = kronrod(&mut f, worst.a, mid);
        let right = kronrod(&mut f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to shed the drift of the running updates.
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    if !value.is_finite() {
        return Err(Error::Quadrature {
            tolerance: target(0.0),
            achieved: f64::INFINITY,
        });
    }
    if error > target(value) {
        return Err(Error::Quadrature {
            tolerance: target(value),
            achieved: error,
        });
    }
    Ok(Integral { value, error })
}

pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Integral> {
    integrate_with_breaks(f, a, b, &[], tol)
}

/// `∫_0^1 ∫_0^1 f(s, t) dt ds` by iterated adaptive quadrature, with a
/// panel break on the diagonal of the inner integral.
pub fn integrate_unit_square<F: Fn(f64, f64) -> f64>(f: F, tol: Tolerance) -> Result<Integral> {
    let inner_tol = Tolerance {
        abs: tol.abs * 0.1,
        rel: tol.rel * 0.1,
        max_panels: tol.max_panels,
    };
    let mut inner_err: f64 = 0.0;
    let mut failure = None;
    let outer = integrate(
        |s| match integrate_with_breaks(|t| f(s, t), 0.0, 1.0, &[s], inner_tol) {
            Ok(r) => {
                inner_err = inner_err.max(r.error);
                r.value
            }
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        0.0,
        1.0,
        tol,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Integral {
        value: outer.value,
        error: outer.error + inner_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, 0.0, 2.0, Tolerance::default()).unwrap();
        assert!((r.value - (64.0 / 6.0 - 8.0)).abs() < 1e-13);
    }

    #[test]
    fn inverse_sqrt_singularity() {
        let r = integrate(|x| x.powf(-0.5), 0.0, 1.0, Tolerance::absolute(1e-9)).unwrap();
        assert!((r.value - 2.0).abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn log_singularity() {
        let r = integrate(|x| x.ln(), 0.0, 1.0, Tolerance::absolute(1e-10)).unwrap();
        assert!((r.value + 1.0).abs() < 1e-9);
    }

    #[test]
    fn kink_with_break() {
        let r = integrate_with_breaks(|x| (x - 0.3).abs(), 0.0, 1.0, &[0.3], Tolerance::default()).unwrap();
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-14);
    }

    #[test]
    fn square_of_min() {
        // ∫∫ min(s, t) = 1/3.
        let r = integrate_unit_square(|s, t| s.min(t), Tolerance::absolute(1e-10)).unwrap();
        assert!((r.value - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn non_integrable_reports_error() {
        let err = integrate(|x| 1.0 / x, 0.0, 1.0, Tolerance::absolute(1e-8)).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }
}
