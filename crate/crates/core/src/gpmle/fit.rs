//! Pooled GP pseudo-maximum-likelihood fit over the top `k` excesses.

use serde::Serialize;

use super::likelihood::{loglik_derivatives, LocalQuadratic};
use crate::error::{Error, Result};
use crate::panel::PanelSample;
use crate::tail::{pool, IntermediateK};

pub const GAMMA_MIN: f64 = -0.5 + 1e-6;
pub const GAMMA_MAX: f64 = 10.0;
pub const MIN_EXCESSES: usize = 10;

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Convergence threshold on the Euclidean norm of the summed score.
    pub score_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            score_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpFit {
    pub gamma_hat: f64,
    pub scale_hat: f64,
    pub k: usize,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub score_norm: f64,
    /// Pooled threshold `X_{N-k:N}` (zero when fitted to raw excesses).
    pub threshold: f64,
    /// Excesses entering the likelihood.
    pub excesses_used: usize,
    /// Top-`k` values tied with the threshold, dropped from the likelihood.
    pub ties_dropped: usize,
    /// Observed information `-∇²ℓ` at the optimum in `(γ, log σ)`.
    pub observed_information: [[f64; 2]; 2],
}

/// Positive excesses over `X_{N-k:N}` of the top `k` pooled values, plus
/// the threshold and the number of ties dropped.
pub fn pooled_excesses(panel: &PanelSample, k: IntermediateK) -> Result<(Vec<f64>, f64, usize)> {
    let pooled = pool(panel)?;
    let n = pooled.n_effective();
    let threshold = pooled.upper(k.get());
    let top = &pooled.sorted_values()[n - k.get()..];
    let excesses: Vec<f64> = top.iter().map(|&x| x - threshold).filter(|&e| e > 0.0).collect();
    let ties = top.len() - excesses.len();
    Ok((excesses, threshold, ties))
}

pub fn fit_gp_pml(panel: &PanelSample, k: IntermediateK) -> Result<GpFit> {
    fit_gp_pml_with(panel, k, FitOptions::default())
}

pub fn fit_gp_pml_with(panel: &PanelSample, k: IntermediateK, opts: FitOptions) -> Result<GpFit> {
    if k.get() < MIN_EXCESSES {
        return Err(Error::InsufficientData(format!(
            "k = {} but at least {MIN_EXCESSES} excesses are required",
            k.get()
        )));
    }
    let (excesses, threshold, ties) = pooled_excesses(panel, k)?;
    let mut fit = fit_excesses_with(&excesses, opts).map_err(|e| match e {
        Error::InsufficientData(msg) => {
            Error::InsufficientData(format!("{msg} ({ties} of the top {} tied with the threshold)", k.get()))
        }
        other => other,
    })?;
    fit.k = k.get();
    fit.threshold = threshold;
    fit.ties_dropped = ties;
    Ok(fit)
}

pub fn fit_excesses(excesses: &[f64]) -> Result<GpFit> {
    fit_excesses_with(excesses, FitOptions::default())
}

/// Maximizes the GP log-likelihood of `excesses` over `(γ, log σ)`.
pub fn fit_excesses_with(excesses: &[f64], opts: FitOptions) -> Result<GpFit> {
    if excesses.len() < MIN_EXCESSES {
        return Err(Error::InsufficientData(format!(
            "{} positive excesses, at least {MIN_EXCESSES} required",
            excesses.len()
        )));
    }
    if let Some((i, &x)) = excesses.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::Domain(format!(
            "excess #{i} = {x} is not a positive finite number"
        )));
    }
    let mut trace = Trace::default();
    let start = initial_guess(excesses);
    let mut iterations = 0;
    let first = newton(excesses, start, opts, &mut trace, &mut iterations);
    let (theta, q) = match first {
        Some(found) => found,
        None => {
            let (g, t) = profile_search(excesses);
            trace.push("profile", g, t, None);
            if g <= GAMMA_MIN + 1e-6 || g >= GAMMA_MAX - 1e-6 {
                return Err(Error::NonConvergence {
                    iterations,
                    reason: format!("likelihood maximum lies on the parameter boundary gamma = {g}"),
                    trace: trace.render(),
                });
            }
            newton(excesses, [g, t], opts, &mut trace, &mut iterations).ok_or_else(|| Error::NonConvergence {
                iterations,
                reason: "Newton iterations failed to reach the score tolerance".into(),
                trace: trace.render(),
            })?
        }
    };
    let info = [[-q.hess[0][0], -q.hess[0][1]], [-q.hess[1][0], -q.hess[1][1]]];
    let det = info[0][0] * info[1][1] - info[0][1] * info[1][0];
    if !(info[0][0] > 0.0 && det > 0.0) {
        return Err(Error::NonConvergence {
            iterations,
            reason: "stationary point is not a local maximum".into(),
            trace: trace.render(),
        });
    }
    Ok(GpFit {
        gamma_hat: theta[0],
        scale_hat: theta[1].exp(),
        k: excesses.len(),
        loglik: q.value,
        iterations,
        converged: true,
        score_norm: norm(q.grad),
        threshold: 0.0,
        excesses_used: excesses.len(),
        ties_dropped: 0,
        observed_information: info,
    })
}

fn norm(g: [f64; 2]) -> f64 {
    g[0].hypot(g[1])
}

#[derive(Default)]
struct Trace {
    lines: Vec<String>,
}

impl Trace {
    const KEEP: usize = 12;

    fn push(&mut self, stage: &str, gamma: f64, log_sigma: f64, q: Option<&LocalQuadratic>) {
        let line = match q {
            Some(q) => format!(
                "{stage} gamma={gamma:.6} sigma={:.6} loglik={:.6} |score|={:.3e}",
                log_sigma.exp(),
                q.value,
                norm(q.grad)
            ),
            None => format!("{stage} gamma={gamma:.6} sigma={:.6}", log_sigma.exp()),
        };
        self.lines.push(line);
        if self.lines.len() > Self::KEEP {
            self.lines.remove(0);
        }
    }

    fn render(&self) -> String {
        self.lines.join("; ")
    }
}

/// Log-spacing of the top quartile for `γ`, mean excess for `σ`.
fn initial_guess(excesses: &[f64]) -> [f64; 2] {
    let mut sorted = excesses.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let q = (sorted.len() / 4).max(2).min(sorted.len() - 1);
    let base = sorted[q];
    let gamma = sorted[..q].iter().map(|&x| (x / base).ln()).sum::<f64>() / q as f64;
    let gamma = if gamma.is_finite() { gamma.clamp(-0.4, 2.0) } else { 0.0 };
    let mean = excesses.iter().sum::<f64>() / excesses.len() as f64;
    [gamma, mean.ln()]
}

fn in_bounds(theta: [f64; 2]) -> bool {
    theta[0] >= GAMMA_MIN && theta[0] <= GAMMA_MAX && theta[1].is_finite()
}

/// Damped Newton ascent. `None` when the iterations stall before the score
/// tolerance is met.
fn newton(
    xs: &[f64],
    start: [f64; 2],
    opts: FitOptions,
    trace: &mut Trace,
    iterations: &mut usize,
) -> Option<([f64; 2], LocalQuadratic)> {
    if !in_bounds(start) {
        return None;
    }
    let mut theta = start;
    let mut q = loglik_derivatives(theta[0], theta[1], xs)?;
    trace.push("start", theta[0], theta[1], Some(&q));
    for _ in 0..opts.max_iter {
        let gnorm = norm(q.grad);
        if gnorm < opts.score_tol {
            return Some((theta, q));
        }
        *iterations += 1;
        let a = [[-q.hess[0][0], -q.hess[0][1]], [-q.hess[1][0], -q.hess[1][1]]];
        let scale = a[0][0].abs().max(a[1][1].abs()).max(1e-12);
        let noise = 1e-12 * (1.0 + q.value.abs());
        let mut lambda = 0.0;
        let mut next = None;
        for _ in 0..60 {
            let d = [[a[0][0] + lambda * scale, a[0][1]], [a[1][0], a[1][1] + lambda * scale]];
            let det = d[0][0] * d[1][1] - d[0][1] * d[1][0];
            if d[0][0] > 0.0 && det > 0.0 {
                let step = [
                    (d[1][1] * q.grad[0] - d[0][1] * q.grad[1]) / det,
                    (d[0][0] * q.grad[1] - d[1][0] * q.grad[0]) / det,
                ];
                let cand = [theta[0] + step[0], theta[1] + step[1]];
                if in_bounds(cand) {
                    if let Some(qc) = loglik_derivatives(cand[0], cand[1], xs) {
                        let better =
                            qc.value > q.value + noise || (qc.value >= q.value - noise && norm(qc.grad) < gnorm);
                        if better {
                            next = Some((cand, qc));
                            break;
                        }
                    }
                }
            }
            lambda = if lambda == 0.0 { 1e-6 } else { lambda * 4.0 };
        }
        let (cand, qc) = next?;
        theta = cand;
        q = qc;
        trace.push("newton", theta[0], theta[1], Some(&q));
    }
    (norm(q.grad) < opts.score_tol).then_some((theta, q))
}

/// `log σ` maximizing the likelihood at fixed `γ`: the unique root of the
/// `σ`-score, which is decreasing in `σ`.
fn profile_log_sigma(xs: &[f64], gamma: f64) -> f64 {
    let k = xs.len() as f64;
    let xmax = xs.iter().copied().fold(0.0, f64::max);
    let score = |sigma: f64| -k + (1.0 + gamma) * xs.iter().map(|&x| x / (sigma + gamma * x)).sum::<f64>();
    let mut lo = if gamma < 0.0 { -gamma * xmax } else { 0.0 };
    let mut hi = xmax.max(f64::MIN_POSITIVE) * (1.0 + gamma.abs());
    while score(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).ln()
}

fn profile_value(xs: &[f64], gamma: f64) -> (f64, f64) {
    let t = profile_log_sigma(xs, gamma);
    let v = loglik_derivatives(gamma, t, xs).map_or(f64::NEG_INFINITY, |q| q.value);
    (v, t)
}

/// Coarse scan of the profile likelihood followed by golden-section
/// refinement around the best grid point.
fn profile_search(xs: &[f64]) -> (f64, f64) {
    const GRID: usize = 80;
    let grid: Vec<f64> = (0..=GRID)
        .map(|i| GAMMA_MIN + (GAMMA_MAX - GAMMA_MIN) * (i as f64 / GRID as f64).powi(2))
        .collect();
    let best = (0..=GRID)
        .max_by(|&a, &b| profile_value(xs, grid[a]).0.total_cmp(&profile_value(xs, grid[b]).0))
        .unwrap_or(0);
    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(GRID)];
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - ratio * (hi - lo);
    let mut d = lo + ratio * (hi - lo);
    let mut fc = profile_value(xs, c).0;
    let mut fd = profile_value(xs, d).0;
    for _ in 0..120 {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - ratio * (hi - lo);
            fc = profile_value(xs, c).0;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + ratio * (hi - lo);
            fd = profile_value(xs, d).0;
        }
    }
    let g = 0.5 * (lo + hi);
    (g, profile_value(xs, g).1)
}
