//! Fisher information, the score covariance `Σ_γ` and the sandwich
//! `I⁻¹ Σ I⁻¹` of the pooled GP pseudo-MLE.
//!
//! Per station the limiting score is a pair of linear functionals of a
//! Gaussian process `W_j` with `E[W_i(s) W_j(t)] = r_ij(s, t)` and
//! `E[W_j(s) W_j(t)] = C_j(1) min(s, t)`:
//!
//! ```text
//! shape: ∫₀¹ φ(s) W(s) ds - ψ W(1)    φ(s) = (1/s - (1+γ) s^(γ-1)) / γ,  ψ = -γ/((1+γ)(1+2γ))
//! scale: ∫₀¹ χ(s) W(s) ds - κ W(1)    χ(s) = (1+γ) s^(γ-1),               κ = (1+γ)/(1+2γ)
//! ```

use rayon::prelude::*;
use serde::Serialize;

use super::fit::GpFit;
use crate::dependence::TailCopulaGrid;
use crate::error::{Error, Result};
use crate::panel::PanelSample;
use crate::quadrature::{integrate, integrate_unit_square, Tolerance};
use crate::scedasis::scedasis_all;
use crate::tail::IntermediateK;

pub type Matrix2 = [[f64; 2]; 2];

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > -0.5 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("gamma = {gamma} must exceed -1/2")))
    }
}

/// Fisher information of the `GP(γ, 1)` model in `(γ, σ)`.
pub fn fisher_info(gamma: f64) -> Result<Matrix2> {
    check_gamma(gamma)?;
    let d = (1.0 + gamma) * (1.0 + 2.0 * gamma);
    Ok([[2.0 / d, 1.0 / d], [1.0 / d, 1.0 / (1.0 + 2.0 * gamma)]])
}

/// Closed-form inverse of [`fisher_info`].
pub fn fisher_inverse(gamma: f64) -> Result<Matrix2> {
    check_gamma(gamma)?;
    let g1 = 1.0 + gamma;
    Ok([[g1 * g1, -g1], [-g1, 2.0 * g1]])
}

fn mul(a: &Matrix2, b: &Matrix2) -> Matrix2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// `I⁻¹ Σ I⁻¹`.
pub fn sandwich(gamma: f64, sigma: &Matrix2) -> Result<Matrix2> {
    let inv = fisher_inverse(gamma)?;
    let mut out = mul(&mul(&inv, sigma), &inv);
    let off = 0.5 * (out[0][1] + out[1][0]);
    out[0][1] = off;
    out[1][0] = off;
    Ok(out)
}

/// Same-station score covariance per unit of `C_j(1)`.
pub fn same_station_tau(gamma: f64) -> Result<Matrix2> {
    check_gamma(gamma)?;
    let g1 = 1.0 + gamma;
    let g2 = 1.0 + 2.0 * gamma;
    let aa = (2.0 + 6.0 * gamma + 5.0 * gamma * gamma) / (g1 * g1 * g2 * g2);
    let ab = g1 / (g2 * g2);
    let bb = (g1 / g2) * (g1 / g2);
    Ok([[aa, ab], [ab, bb]])
}

/// `e^x - 1` over `x`.
fn exprel(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        1.0 + x * (0.5 + x / 6.0)
    } else {
        x.exp_m1() / x
    }
}

/// `(e^x - 1 - x) / x²`.
fn exprel2(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let mut term = 0.5;
        let mut sum = 0.0;
        for n in 2..12 {
            sum += term;
            term *= x / (n + 1) as f64;
        }
        sum
    } else {
        (x.exp_m1() - x) / (x * x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Shape,
    Scale,
}

const BLOCKS: [Block; 2] = [Block::Shape, Block::Scale];

impl Block {
    fn weight(self, gamma: f64, s: f64) -> f64 {
        let ls = s.ln();
        match self {
            Block::Shape => -((1.0 + gamma) * ls * exprel(gamma * ls) + 1.0) / s,
            Block::Scale => (1.0 + gamma) * ((gamma - 1.0) * ls).exp(),
        }
    }

    fn constant(self, gamma: f64) -> f64 {
        match self {
            Block::Shape => -gamma / ((1.0 + gamma) * (1.0 + 2.0 * gamma)),
            Block::Scale => (1.0 + gamma) / (1.0 + 2.0 * gamma),
        }
    }

    /// `(∫_a^b w, ∫_a^b s w)`; `a = 0` is allowed for the first moment only.
    fn moments(self, gamma: f64, a: f64, b: f64) -> (f64, f64) {
        let lb = b.ln();
        match self {
            Block::Scale => {
                let m1 = ((1.0 + gamma) * lb).exp() - if a > 0.0 { ((1.0 + gamma) * a.ln()).exp() } else { 0.0 };
                let m0 = if a > 0.0 {
                    let la = a.ln();
                    (1.0 + gamma) * (gamma * la).exp() * (lb - la) * exprel(gamma * (lb - la))
                } else {
                    f64::NAN
                };
                (m0, m1)
            }
            Block::Shape => {
                let anti1 = |s: f64, ls: f64| if s > 0.0 { s * ls * exprel(gamma * ls) } else { 0.0 };
                let m1 = -(anti1(b, lb) - anti1(a, if a > 0.0 { a.ln() } else { 0.0 }));
                let m0 = if a > 0.0 {
                    let la = a.ln();
                    let f = |u: f64| u * u * exprel2(gamma * u);
                    -((1.0 + gamma) * (f(lb) - f(la)) + (lb - la))
                } else {
                    f64::NAN
                };
                (m0, m1)
            }
        }
    }
}

/// Integrals of a weight against the piecewise-linear hat functions of the
/// node grid, with the implicit node at zero carrying value zero.
fn hat_moments(block: Block, gamma: f64, nodes: &[f64]) -> Vec<f64> {
    let len = nodes.len();
    let mut h = vec![0.0; len];
    for p in 0..len {
        let hi = nodes[p];
        if p == 0 {
            h[0] += block.moments(gamma, 0.0, hi).1 / hi;
        } else {
            let lo = nodes[p - 1];
            let (m0, m1) = block.moments(gamma, lo, hi);
            let width = hi - lo;
            h[p] += (m1 - lo * m0) / width;
            h[p - 1] += (hi * m0 - m1) / width;
        }
    }
    h
}

/// Source of the cross-station tail dependence `r_ij(s, t)`.
pub enum CrossDependence<'a> {
    /// `r_ij ≡ 0` for `i ≠ j`.
    Independent,
    /// Empirical plug-in on a node grid, extended below its first node by
    /// homogeneity and integrated exactly against the bilinear interpolant.
    Grid(&'a TailCopulaGrid),
    /// Arbitrary `r(i, j, s, t)`, integrated by adaptive quadrature to the
    /// given absolute tolerance per integral.
    Function {
        r: &'a (dyn Fn(usize, usize, f64, f64) -> f64 + Sync),
        tolerance: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreCovariance {
    pub sigma: Matrix2,
    /// Sum of quadrature error estimates over all cross-station integrals.
    pub quadrature_error: f64,
}

/// `Σ_γ` for stations with integrated scedasis `c1` and cross-station
/// dependence `cross`.
pub fn sigma_gamma0(gamma: f64, c1: &[f64], cross: CrossDependence<'_>) -> Result<ScoreCovariance> {
    let tau = same_station_tau(gamma)?;
    if let Some((j, &c)) = c1.iter().enumerate().find(|(_, c)| !(0.0..=1.0 + 1e-12).contains(*c)) {
        return Err(Error::Domain(format!("C_{j}(1) = {c} outside [0, 1]")));
    }
    let m = c1.len();
    let total: f64 = c1.iter().sum();
    let mut sigma = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            sigma[a][b] = tau[a][b] * total;
        }
    }
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let cross_terms: Vec<(Matrix2, f64)> = match cross {
        CrossDependence::Independent => Vec::new(),
        CrossDependence::Grid(grid) => {
            if grid.n_stations() != m {
                return Err(Error::Domain(format!(
                    "dependence grid covers {} stations, expected {m}",
                    grid.n_stations()
                )));
            }
            let mut nodes = extension_nodes(grid.nodes());
            nodes.extend_from_slice(grid.nodes());
            let h = [
                hat_moments(Block::Shape, gamma, &nodes),
                hat_moments(Block::Scale, gamma, &nodes),
            ];
            pairs
                .par_iter()
                .map(|&(i, j)| (grid_pair(grid, &nodes, &h, gamma, i, j), 0.0))
                .collect()
        }
        CrossDependence::Function { r, tolerance } => pairs
            .par_iter()
            .map(|&(i, j)| quadrature_pair(r, tolerance, gamma, i, j))
            .collect::<Result<_>>()?,
    };
    let mut error = 0.0;
    for (x, e) in cross_terms {
        // Pair (i, j) contributes X_ab(i, j) and, through (j, i), X_ba(i, j).
        for a in 0..2 {
            for b in 0..2 {
                sigma[a][b] += x[a][b] + x[b][a];
            }
        }
        error += e;
    }
    Ok(ScoreCovariance {
        sigma,
        quadrature_error: error,
    })
}

/// Nodes below the first grid node, geometric down to its square.
fn extension_nodes(nodes: &[f64]) -> Vec<f64> {
    let x0 = nodes[0];
    if x0 >= 1.0 {
        return Vec::new();
    }
    let count = (nodes.len() / 2).max(1);
    (0..count)
        .map(|i| x0.powf(1.0 + (count - i) as f64 / count as f64))
        .collect()
}

/// `r_ij(s, t)` using the degree-one homogeneity of the tail dependence
/// function to reach below the first grid node.
fn homogeneous_r(grid: &TailCopulaGrid, i: usize, j: usize, s: f64, t: f64) -> f64 {
    let x0 = grid.nodes()[0];
    let lo = s.min(t);
    if lo >= x0 || lo <= 0.0 {
        return grid.r(i, j, s, t);
    }
    let lambda = (x0 / lo).min(1.0 / s.max(t));
    grid.r(i, j, lambda * s, lambda * t) / lambda
}

/// `Cov(block_a at station i, block_b at station j)` for all blocks from the
/// bilinear interpolant on the extended node set.
fn grid_pair(grid: &TailCopulaGrid, all_nodes: &[f64], h: &[Vec<f64>; 2], gamma: f64, i: usize, j: usize) -> Matrix2 {
    let len = all_nodes.len();
    let offset = len - grid.nodes().len();
    let last = len - 1;
    let mut table = vec![0.0; len * len];
    for p in 0..len {
        for q in 0..len {
            table[p * len + q] = if p >= offset && q >= offset {
                grid.node_value(i, j, p - offset, q - offset)
            } else {
                homogeneous_r(grid, i, j, all_nodes[p], all_nodes[q])
            };
        }
    }
    let r = |p: usize, q: usize| table[p * len + q];
    // R h_b for both blocks.
    let mut rh = [vec![0.0; len], vec![0.0; len]];
    for p in 0..len {
        for q in 0..len {
            let v = r(p, q);
            rh[0][p] += v * h[0][q];
            rh[1][p] += v * h[1][q];
        }
    }
    let col_one: Vec<f64> = (0..len).map(|p| r(p, last)).collect();
    let row_one: Vec<f64> = (0..len).map(|q| r(last, q)).collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let mut out = [[0.0; 2]; 2];
    for (a, ba) in BLOCKS.iter().enumerate() {
        for (b, bb) in BLOCKS.iter().enumerate() {
            let (ca, cb) = (ba.constant(gamma), bb.constant(gamma));
            out[a][b] =
                dot(&h[a], &rh[b]) - cb * dot(&h[a], &col_one) - ca * dot(&h[b], &row_one) + ca * cb * r(last, last);
        }
    }
    out
}

fn quadrature_pair(
    r: &(dyn Fn(usize, usize, f64, f64) -> f64 + Sync),
    tolerance: f64,
    gamma: f64,
    i: usize,
    j: usize,
) -> Result<(Matrix2, f64)> {
    // s = u^q keeps the s^(2γ) growth of the double integrals at the
    // origin bounded for γ < 0.
    let q = (1.0 / (1.0 + 2.0 * gamma)).max(1.0);
    let jac = |u: f64| q * u.powf(q - 1.0);
    let tol = Tolerance {
        abs: tolerance,
        rel: 0.0,
        max_panels: 4000,
    };
    let mut error = 0.0;
    let mut out = [[0.0; 2]; 2];
    let mut col = [0.0; 2];
    let mut row = [0.0; 2];
    for (a, ba) in BLOCKS.iter().enumerate() {
        let c = integrate(
            |u| {
                let s = u.powf(q);
                ba.weight(gamma, s) * r(i, j, s, 1.0) * jac(u)
            },
            0.0,
            1.0,
            tol,
        )?;
        let w = integrate(
            |u| {
                let t = u.powf(q);
                ba.weight(gamma, t) * r(i, j, 1.0, t) * jac(u)
            },
            0.0,
            1.0,
            tol,
        )?;
        col[a] = c.value;
        row[a] = w.value;
        error += c.error + w.error;
    }
    let r11 = r(i, j, 1.0, 1.0);
    for (a, ba) in BLOCKS.iter().enumerate() {
        for (b, bb) in BLOCKS.iter().enumerate() {
            let double = integrate_unit_square(
                |u, v| {
                    let (s, t) = (u.powf(q), v.powf(q));
                    ba.weight(gamma, s) * bb.weight(gamma, t) * r(i, j, s, t) * jac(u) * jac(v)
                },
                tol,
            )?;
            error += double.error;
            let (ca, cb) = (ba.constant(gamma), bb.constant(gamma));
            out[a][b] = double.value - cb * col[a] - ca * row[b] + ca * cb * r11;
        }
    }
    Ok((out, error))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticCov {
    /// `I⁻¹ Σ I⁻¹` for `√k (γ̂ - γ, σ̂/σ - 1)`.
    pub matrix: Matrix2,
    pub fisher: Matrix2,
    pub sigma: Matrix2,
    pub quadrature_error: f64,
    pub k: usize,
}

impl AsymptoticCov {
    pub fn se_gamma(&self) -> f64 {
        (self.matrix[0][0] / self.k as f64).sqrt()
    }

    pub fn se_scale_ratio(&self) -> f64 {
        (self.matrix[1][1] / self.k as f64).sqrt()
    }

    /// Two-sided normal interval for `γ` at confidence `level`.
    pub fn gamma_interval(&self, gamma_hat: f64, level: f64) -> Result<(f64, f64)> {
        use statrs::distribution::{ContinuousCDF, Normal};
        if !(level > 0.0 && level < 1.0) {
            return Err(crate::error::range_err("level", level, "(0, 1)"));
        }
        let z = Normal::standard().inverse_cdf(0.5 + 0.5 * level);
        let half = z * self.se_gamma();
        Ok((gamma_hat - half, gamma_hat + half))
    }
}

/// Sandwich at `γ̂` with the given scedasis and dependence plug-ins.
pub fn asymptotic_cov(gamma: f64, k: usize, c1: &[f64], cross: CrossDependence<'_>) -> Result<AsymptoticCov> {
    let fisher = fisher_info(gamma)?;
    let ScoreCovariance {
        sigma,
        quadrature_error,
    } = sigma_gamma0(gamma, c1, cross)?;
    Ok(AsymptoticCov {
        matrix: sandwich(gamma, &sigma)?,
        fisher,
        sigma,
        quadrature_error,
        k,
    })
}

/// Plug-in sandwich for a fit: `Ĉ_j(1)` at the fit's `k` and the empirical
/// tail copula on the default node grid.
pub fn mle_asymptotic_cov(fit: &GpFit, panel: &PanelSample) -> Result<AsymptoticCov> {
    let k = IntermediateK::for_panel(fit.k, panel)?;
    let c1 = scedasis_all(panel, k)?.c1();
    if c1.len() == 1 {
        return asymptotic_cov(fit.gamma_hat, fit.k, &c1, CrossDependence::Independent);
    }
    let grid = TailCopulaGrid::build(panel, k, TailCopulaGrid::DEFAULT_NODES)?;
    asymptotic_cov(fit.gamma_hat, fit.k, &c1, CrossDependence::Grid(&grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAMMAS: [f64; 6] = [-0.4, -0.25, 0.0, 0.25, 0.5, 1.0];

    #[test]
    fn fisher_examples() {
        assert_eq!(fisher_info(0.0).unwrap(), [[2.0, 1.0], [1.0, 1.0]]);
        assert_eq!(fisher_inverse(0.0).unwrap(), [[1.0, -1.0], [-1.0, 2.0]]);
        assert!(fisher_info(-0.5).is_err());
        for i in 0..=100 {
            let g = -0.45 + 2.45 * i as f64 / 100.0;
            let p = mul(&fisher_info(g).unwrap(), &fisher_inverse(g).unwrap());
            for a in 0..2 {
                for b in 0..2 {
                    let id = if a == b { 1.0 } else { 0.0 };
                    assert!((p[a][b] - id).abs() < 1e-12, "{g}");
                }
            }
        }
    }

    #[test]
    fn single_station_closed_forms() {
        let s = sigma_gamma0(0.0, &[1.0], CrossDependence::Independent).unwrap();
        assert_eq!(s.sigma, [[2.0, 1.0], [1.0, 1.0]]);
        let t = same_station_tau(0.25).unwrap();
        assert!((t[0][0] - 3.8125 / 3.515625).abs() < 1e-15);
        for g in GAMMAS {
            let cov = asymptotic_cov(g, 100, &[1.0], CrossDependence::Independent).unwrap();
            let g1 = 1.0 + g;
            assert!((cov.matrix[0][0] - g1 * g1).abs() < 1e-12);
            assert!((cov.matrix[1][1] - (1.0 + g1 * g1)).abs() < 1e-12);
            assert!((cov.matrix[0][1] + g1).abs() < 1e-12);
        }
    }

    #[test]
    fn independent_split_matches_single_station() {
        let one = sigma_gamma0(0.3, &[1.0], CrossDependence::Independent).unwrap();
        let two = sigma_gamma0(0.3, &[0.5, 0.5], CrossDependence::Independent).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert!((one.sigma[a][b] - two.sigma[a][b]).abs() < 1e-15);
            }
        }
    }

    /// Integrating the weights numerically against `min(s, t)` reproduces
    /// the closed-form same-station covariance.
    #[test]
    fn quadrature_reproduces_closed_forms() {
        let r = |_: usize, _: usize, s: f64, t: f64| 0.5 * s.min(t);
        for g in GAMMAS {
            let got = sigma_gamma0(g, &[0.5, 0.5], CrossDependence::Function { r: &r, tolerance: 1e-7 }).unwrap();
            let tau = same_station_tau(g).unwrap();
            for a in 0..2 {
                for b in 0..2 {
                    assert!(
                        (got.sigma[a][b] - 2.0 * tau[a][b]).abs() < 1e-5,
                        "{g} {a}{b}: {:?} vs {tau:?}",
                        got.sigma
                    );
                }
            }
            assert!(got.quadrature_error < 1e-5);
        }
    }

    #[test]
    fn hat_moments_match_quadrature() {
        let nodes = TailCopulaGrid::geometric_nodes(500, 16);
        for g in [-0.3, 0.0, 1e-9, 0.4] {
            for block in BLOCKS {
                let h = hat_moments(block, g, &nodes);
                for p in [0usize, 5, 15] {
                    let hat = |s: f64| {
                        let lo = if p == 0 { 0.0 } else { nodes[p - 1] };
                        let hi = nodes[p];
                        if s >= lo && s <= hi {
                            if p == 0 {
                                s / hi
                            } else {
                                (s - lo) / (hi - lo)
                            }
                        } else if p + 1 < nodes.len() && s > hi && s <= nodes[p + 1] {
                            (nodes[p + 1] - s) / (nodes[p + 1] - hi)
                        } else {
                            0.0
                        }
                    };
                    let q = crate::quadrature::integrate_with_breaks(
                        |s| block.weight(g, s) * hat(s),
                        0.0,
                        1.0,
                        &nodes,
                        Tolerance::absolute(1e-12),
                    )
                    .unwrap();
                    assert!(
                        (h[p] - q.value).abs() < 1e-9 * (1.0 + q.value.abs()),
                        "{g} {block:?} {p}: {} vs {}",
                        h[p],
                        q.value
                    );
                }
            }
        }
    }

    #[test]
    fn grid_route_matches_quadrature_route() {
        // Logistic tail copula with α = 1/2 in a cancellation-free form.
        let tail = |x: f64, y: f64| {
            if x <= 0.0 || y <= 0.0 {
                0.0
            } else {
                2.0 * x * y / (x + y + x.hypot(y))
            }
        };
        let r = move |_: usize, _: usize, s: f64, t: f64| 0.5 * tail(s, t);
        let grid = TailCopulaGrid::from_fn(2, TailCopulaGrid::geometric_nodes(1000, 64), r);
        for g in [-0.25, 0.0, 0.25] {
            let a = sigma_gamma0(g, &[0.5, 0.5], CrossDependence::Grid(&grid)).unwrap();
            let c = sigma_gamma0(g, &[0.5, 0.5], CrossDependence::Function { r: &r, tolerance: 1e-7 }).unwrap();
            for x in 0..2 {
                for y in 0..2 {
                    let rel = (a.sigma[x][y] / c.sigma[x][y] - 1.0).abs();
                    assert!(rel < 5e-3, "{g}: {:?} vs {:?}", a.sigma, c.sigma);
                }
            }
        }
    }

    #[test]
    fn homogeneous_extension_below_first_node() {
        let r = |_: usize, _: usize, s: f64, t: f64| 0.3 * s.min(t);
        let grid = TailCopulaGrid::from_fn(2, TailCopulaGrid::geometric_nodes(100, 32), r);
        for (s, t) in [(1e-4, 1e-3), (1e-5, 0.5), (2e-3, 1e-4)] {
            assert!((homogeneous_r(&grid, 0, 1, s, t) - r(0, 1, s, t)).abs() < 1e-12);
        }
    }
}
