//! Monte Carlo harnesses for test size and power, the tail-process
//! covariance and the sampling variance of the pooled GP fit.

use rayon::prelude::*;
use serde::Serialize;

use super::sim::{simulate_replication, SimSpec};
use crate::dependence::tail_copula_integral;
use crate::error::{Error, Result};
use crate::gpmle::{asymptotic_cov, fit_gp_pml, CrossDependence};
use crate::hypothesis::{space_test, time_test};
use crate::quadrature::{integrate, Tolerance};
use crate::tail::{tail_empirical_process_at, IntermediateK};

/// One summary statistic with its Monte Carlo standard error and, when a
/// band is given, the pass flag.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McMetric {
    pub name: String,
    pub estimate: f64,
    pub monte_carlo_se: f64,
    pub target: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub pass: Option<bool>,
}

impl McMetric {
    fn new(name: impl Into<String>, estimate: f64, se: f64) -> Self {
        Self {
            name: name.into(),
            estimate,
            monte_carlo_se: se,
            target: None,
            lower: None,
            upper: None,
            pass: None,
        }
    }

    fn with_target(mut self, target: f64) -> Self {
        self.target = Some(target);
        self
    }

    fn with_band(mut self, lower: f64, upper: f64) -> Self {
        self.lower = Some(lower);
        self.upper = Some(upper);
        self.pass = Some(self.estimate >= lower && self.estimate <= upper);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub scenario: String,
    pub replications: usize,
    /// Replications whose estimator failed; excluded from every summary.
    pub skipped: usize,
    /// First few failure messages.
    pub failures: Vec<String>,
    /// Fewer than two usable replications: standard errors are reported as 0.
    pub degenerate: bool,
    pub metrics: Vec<McMetric>,
}

impl McReport {
    pub fn metric(&self, name: &str) -> Option<&McMetric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    /// `true` unless some metric with a band falls outside it.
    pub fn passed(&self) -> bool {
        self.metrics.iter().all(|m| m.pass != Some(false))
    }
}

const MAX_FAILURES: usize = 5;

/// Runs `f` on replications `0..reps` in parallel, preserving order.
fn replicate<T: Send>(
    spec: &SimSpec,
    reps: usize,
    f: impl Fn(&crate::panel::PanelSample) -> Result<T> + Sync,
) -> Result<(Vec<T>, usize, Vec<String>)> {
    spec.validate()?;
    if reps == 0 {
        return Err(Error::Spec("reps must be positive".into()));
    }
    let outcomes: Vec<Result<T>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| simulate_replication(spec, rep).and_then(|p| f(&p)))
        .collect();
    let mut ok = Vec::with_capacity(reps);
    let mut failures = Vec::new();
    let mut skipped = 0;
    for (rep, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => ok.push(v),
            Err(e) => {
                skipped += 1;
                if failures.len() < MAX_FAILURES {
                    failures.push(format!("replication {rep}: {e}"));
                }
            }
        }
    }
    Ok((ok, skipped, failures))
}

/// Pairwise summation for order-stable totals.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - mu) * (x - mu)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

/// Which test a rejection-rate run evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum McTest {
    Space,
    /// Temporal test at one station.
    Time(usize),
}

/// Rejection rate of a test at nominal `level` across replications, with the
/// binomial standard error `√(p(1-p)/reps)`.
pub fn mc_rejection_rate(spec: &SimSpec, k: usize, test: McTest, level: f64, reps: usize) -> Result<McReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(crate::error::range_err("level", level, "(0, 1)"));
    }
    let (p_values, skipped, failures) = replicate(spec, reps, |p| {
        let kk = IntermediateK::for_panel(k, p)?;
        let r = match test {
            McTest::Space => space_test(p, kk)?,
            McTest::Time(j) => time_test(p, kk, j)?,
        };
        Ok(r.p_value)
    })?;
    let used = p_values.len();
    let rate = if used == 0 {
        f64::NAN
    } else {
        p_values.iter().filter(|&&p| p < level).count() as f64 / used as f64
    };
    let se = if used < 2 {
        0.0
    } else {
        (rate * (1.0 - rate) / used as f64).sqrt()
    };
    let name = match test {
        McTest::Space => "space_rejection_rate".to_string(),
        McTest::Time(j) => format!("time_rejection_rate_station_{j}"),
    };
    Ok(McReport {
        scenario: "rejection_rate".into(),
        replications: reps,
        skipped,
        failures,
        degenerate: used < 2,
        metrics: vec![McMetric::new(name, rate, se)],
    })
}

/// Size check: rejection rate under a null spec with the 3σ binomial band
/// around the nominal level.
pub fn mc_test_size(spec: &SimSpec, k: usize, test: McTest, level: f64, reps: usize) -> Result<McReport> {
    let mut report = mc_rejection_rate(spec, k, test, level, reps)?;
    let half = 3.0 * (level * (1.0 - level) / reps as f64).sqrt();
    report.scenario = "size".into();
    let m = report.metrics.remove(0);
    report
        .metrics
        .push(m.with_target(level).with_band(level - half, level + half));
    Ok(report)
}

/// Power check: rejection rate with a required minimum.
pub fn mc_test_power(
    spec: &SimSpec,
    k: usize,
    test: McTest,
    level: f64,
    reps: usize,
    min_rate: f64,
) -> Result<McReport> {
    let mut report = mc_rejection_rate(spec, k, test, level, reps)?;
    report.scenario = "power".into();
    let m = report.metrics.remove(0);
    report.metrics.push(m.with_band(min_rate, 1.0));
    Ok(report)
}

/// Evaluation point of the sequential tail empirical process covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovPoint {
    pub j1: usize,
    pub j2: usize,
    pub s1: f64,
    pub s2: f64,
    pub t: f64,
}

/// `(1/m) ∫₀ᵗ R_{j1,j2}(s1 c(u, j1), s2 c(u, j2)) du` for the simulation spec's
/// dependence; on the diagonal `R(x, y) = min(x, y)`.
pub fn analytic_covariance(spec: &SimSpec, pt: CovPoint) -> Result<f64> {
    spec.validate()?;
    let integrand = |u: f64| {
        let x = pt.s1 * spec.c(u, pt.j1);
        let y = pt.s2 * spec.c(u, pt.j2);
        if pt.j1 == pt.j2 {
            x.min(y)
        } else {
            spec.dependence.tail_copula(x, y)
        }
    };
    let v = integrate(integrand, 0.0, pt.t, Tolerance::absolute(1e-12))?;
    Ok(v.value / spec.m as f64)
}

/// Compares the empirical covariance across replications of
/// `√k e_j(s, t)`, the tail empirical process at the baseline thresholds
/// `F₀⁻¹(1 - k s / N)`, with [`analytic_covariance`].
///
/// The report also carries the mean of the rank-based plug-in
/// `tail_copula_integral` for each point.
pub fn mc_covariance_check(spec: &SimSpec, k: usize, points: &[CovPoint], reps: usize) -> Result<McReport> {
    spec.validate()?;
    let big_n = (spec.n * spec.m) as f64;
    for pt in points {
        for (s, j) in [(pt.s1, pt.j1), (pt.s2, pt.j2)] {
            if j >= spec.m {
                return Err(Error::StationIndex {
                    index: j,
                    stations: spec.m,
                });
            }
            let q = k as f64 * s / big_n;
            // c is linear in u, so its maximum sits at an endpoint.
            let hi = spec.c(0.0, j).max(spec.c(1.0, j));
            if !(s > 0.0) || q * hi > super::sim::P0 {
                return Err(Error::Spec(format!(
                    "threshold level k s / N = {q} at station {j} lies below the simulated GP tail"
                )));
            }
        }
    }
    let root_k = (k as f64).sqrt();
    let (samples, skipped, failures) = replicate(spec, reps, |p| {
        let kk = IntermediateK::for_panel(k, p)?;
        let mut out = Vec::with_capacity(points.len());
        for pt in points {
            let u1 = spec.baseline_quantile(k as f64 * pt.s1 / big_n);
            let u2 = spec.baseline_quantile(k as f64 * pt.s2 / big_n);
            let e1 = tail_empirical_process_at(p, kk, pt.j1, &[u1], &[pt.t])?[0][0];
            let e2 = tail_empirical_process_at(p, kk, pt.j2, &[u2], &[pt.t])?[0][0];
            let plug = tail_copula_integral(p, kk, pt.j1, pt.j2, pt.s1, pt.s2, pt.t)?.value;
            out.push((root_k * e1, root_k * e2, plug));
        }
        Ok(out)
    })?;
    let used = samples.len();
    let mut metrics = Vec::new();
    for (idx, pt) in points.iter().enumerate() {
        let tag = format!("j{}_{}_s{}_{}_t{}", pt.j1, pt.j2, pt.s1, pt.s2, pt.t);
        let target = analytic_covariance(spec, *pt)?;
        let y1: Vec<f64> = samples.iter().map(|s| s[idx].0).collect();
        let y2: Vec<f64> = samples.iter().map(|s| s[idx].1).collect();
        let (m1, m2) = (mean(&y1), mean(&y2));
        let prods: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| (a - m1) * (b - m2)).collect();
        let cov = if used < 2 {
            0.0
        } else {
            pairwise_sum(&prods) / (used - 1) as f64
        };
        let se = if used < 2 {
            0.0
        } else {
            (variance(&prods) / used as f64).sqrt()
        };
        metrics.push(
            McMetric::new(format!("covariance_{tag}"), cov, se)
                .with_target(target)
                .with_band(target - 3.0 * se, target + 3.0 * se),
        );
        let plug: Vec<f64> = samples.iter().map(|s| s[idx].2).collect();
        let plug_se = if used < 2 {
            0.0
        } else {
            (variance(&plug) / used as f64).sqrt()
        };
        metrics.push(McMetric::new(format!("plug_in_mean_{tag}"), mean(&plug), plug_se).with_target(target));
    }
    Ok(McReport {
        scenario: "covariance".into(),
        replications: reps,
        skipped,
        failures,
        degenerate: used < 2,
        metrics,
    })
}

/// Sandwich variance of `√k (γ̂ - γ, σ̂/σ - 1)` implied by a constant-scedasis
/// spec.
pub fn predicted_mle_cov(spec: &SimSpec) -> Result<[[f64; 2]; 2]> {
    spec.validate()?;
    if !spec.is_constant() {
        return Err(Error::Spec("the variance prediction needs constant scedasis".into()));
    }
    let m = spec.m;
    let c: Vec<f64> = (0..m).map(|j| spec.c(0.0, j)).collect();
    let c1: Vec<f64> = (0..m).map(|j| spec.integrated(j, 1.0)).collect();
    let dep = spec.dependence;
    let inv_m = 1.0 / m as f64;
    let r = move |i: usize, j: usize, s: f64, t: f64| inv_m * dep.tail_copula(s * c[i], t * c[j]);
    let cross = match dep {
        crate::mc::Dependence::Independent => CrossDependence::Independent,
        _ => CrossDependence::Function { r: &r, tolerance: 1e-7 },
    };
    Ok(asymptotic_cov(spec.gamma, 1, &c1, cross)?.matrix)
}

/// Bias and `k`-scaled variances of the pooled GP fit across replications,
/// against the simulation spec's own sandwich prediction. `rel_tol` sets the pass band
/// for the variance ratios.
pub fn mc_mle_variance(spec: &SimSpec, k: usize, reps: usize, rel_tol: f64) -> Result<McReport> {
    let predicted = predicted_mle_cov(spec)?;
    let big_n = (spec.n * spec.m) as f64;
    // Exact GP tail: the excess scale at level k/N is (N/k)^γ.
    let level = k as f64 / big_n;
    if level > super::sim::P0 {
        return Err(Error::Spec(format!("k / N = {level} lies below the simulated GP tail")));
    }
    let true_scale = (-spec.gamma * level.ln()).exp();
    let (fits, skipped, failures) = replicate(spec, reps, |p| {
        let fit = fit_gp_pml(p, IntermediateK::for_panel(k, p)?)?;
        Ok((fit.gamma_hat, fit.scale_hat / true_scale - 1.0))
    })?;
    let used = fits.len();
    let g: Vec<f64> = fits.iter().map(|f| f.0).collect();
    let a: Vec<f64> = fits.iter().map(|f| f.1).collect();
    let kf = k as f64;
    let var_se = |v: f64| {
        if used < 2 {
            0.0
        } else {
            v * (2.0 / (used - 1) as f64).sqrt()
        }
    };
    let (vg, va) = (kf * variance(&g), kf * variance(&a));
    let bias = mean(&g) - spec.gamma;
    let bias_se = if used < 2 {
        0.0
    } else {
        (variance(&g) / used as f64).sqrt()
    };
    let band = |t: f64| (t * (1.0 - rel_tol), t * (1.0 + rel_tol));
    let (lg, ug) = band(predicted[0][0]);
    let (la, ua) = band(predicted[1][1]);
    Ok(McReport {
        scenario: "mle_variance".into(),
        replications: reps,
        skipped,
        failures,
        degenerate: used < 2,
        metrics: vec![
            McMetric::new("gamma_bias", bias, bias_se).with_target(0.0),
            McMetric::new("k_var_gamma", vg, var_se(vg))
                .with_target(predicted[0][0])
                .with_band(lg, ug),
            McMetric::new("k_var_scale_ratio", va, var_se(va))
                .with_target(predicted[1][1])
                .with_band(la, ua),
        ],
    })
}
