//! Homogeneity tests for extremes.
//!
//! * Spatial: `T_n = D'_{m-1} ((M Σ̂₁ M')_{m-1})^{-1} D_{m-1}` with
//!   `D = √k (Ĉ_1(1) - 1/m, ..., Ĉ_m(1) - 1/m)'` and `M = I - 11'/m`,
//!   compared with `χ²_{m-1}`.
//! * Temporal, per station: `sup_t | √(k Ĉ_j(1)) (Ĉ_j(t)/Ĉ_j(1) - t) |`,
//!   compared with the supremum of a Brownian bridge.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dependence::{sigma1_from_pooled, TailDependenceMatrix};
use crate::error::{range_err, Error, Result};
use crate::panel::PanelSample;
use crate::scedasis::{curve_at_threshold, ScedasisCurve};
use crate::tail::{pool, threshold_info, IntermediateK};

/// Largest admissible condition number of the reduced covariance matrix.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitLaw {
    ChiSquare,
    Kolmogorov,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub law: LimitLaw,
    pub df: Option<usize>,
    pub p_value: f64,
    pub k: usize,
    pub station: Option<usize>,
    /// Strict exceedances of the pooled threshold.
    pub exceedances: usize,
    /// Pooled values equal to the threshold (more than one means a tie).
    pub ties_at_threshold: usize,
}

/// Spatial test from `Ĉ_j(1)` and `Σ̂₁`.
pub fn space_statistic(c1: &[f64], sigma1: &TailDependenceMatrix, k: usize) -> Result<f64> {
    let m = c1.len();
    if m < 2 {
        return Err(range_err("stations", m, ">= 2"));
    }
    if sigma1.m != m {
        return Err(Error::Domain(format!(
            "Σ̂₁ is {}×{} but {} scedasis values were given",
            sigma1.m, sigma1.m, m
        )));
    }
    let sigma = DMatrix::from_row_slice(m, m, &sigma1.entries);
    let centering = DMatrix::identity(m, m) - DMatrix::from_element(m, m, 1.0 / m as f64);
    let full = &centering * sigma * centering.transpose();
    let reduced = full.view((0, 0), (m - 1, m - 1)).into_owned();
    let reduced = (&reduced + reduced.transpose()) * 0.5;

    let eig = SymmetricEigen::new(reduced.clone());
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular {
            condition,
            stations: near_duplicates(sigma1),
        });
    }

    let sqrt_k = (k as f64).sqrt();
    let d = DVector::from_iterator(m - 1, c1[..m - 1].iter().map(|&c| sqrt_k * (c - 1.0 / m as f64)));
    let solved = match reduced.clone().cholesky() {
        Some(ch) => ch.solve(&d),
        None => reduced.lu().solve(&d).ok_or(Error::Singular {
            condition,
            stations: near_duplicates(sigma1),
        })?,
    };
    Ok(d.dot(&solved).max(0.0))
}

/// Station pairs whose joint exceedance frequency (almost) equals both
/// marginal frequencies.
fn near_duplicates(sigma1: &TailDependenceMatrix) -> Vec<(usize, usize)> {
    let m = sigma1.m;
    let mut out = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            let scale = (sigma1.get(a, a) * sigma1.get(b, b)).sqrt();
            if scale == 0.0 || sigma1.get(a, b) >= (1.0 - 1e-6) * scale {
                out.push((a, b));
            }
        }
    }
    out
}

pub fn space_test(panel: &PanelSample, k: IntermediateK) -> Result<TestResult> {
    let m = panel.n_stations();
    if m < 2 {
        return Err(range_err("stations", m, ">= 2"));
    }
    let pooled = pool(panel)?;
    let info = threshold_info(&pooled, k)?;
    let sigma = sigma1_from_pooled(panel, &pooled, k)?;
    // Renormalize by the realised exceedance count when the threshold is
    // tied, keeping diag(Σ̂₁) = Ĉ_j(1).
    let factor = if info.exceedances > 0 {
        k.get() as f64 / info.exceedances as f64
    } else {
        1.0
    };
    let sigma = if info.exceedances == k.get() {
        sigma
    } else {
        sigma.scaled(factor)
    };
    let c1 = sigma.diagonal();
    let statistic = space_statistic(&c1, &sigma, k.get())?;
    let df = m - 1;
    Ok(TestResult {
        statistic,
        law: LimitLaw::ChiSquare,
        df: Some(df),
        p_value: chi_square_sf(statistic, df),
        k: k.get(),
        station: None,
        exceedances: info.exceedances,
        ties_at_threshold: info.ties_at_threshold,
    })
}

/// Upper tail probability of `χ²_df`.
pub fn chi_square_sf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let law = ChiSquared::new(df as f64).expect("df >= 1");
    law.sf(x).clamp(0.0, 1.0)
}

/// Kolmogorov–Smirnov statistic of a scedasis curve against `t ↦ t`,
/// scaled by `√(k Ĉ_j(1))`.
pub fn time_statistic(curve: &ScedasisCurve) -> Result<f64> {
    let big_k = curve.exceedances();
    if big_k == 0 {
        return Err(Error::NoExceedance {
            station: curve.station,
            k: curve.k,
        });
    }
    let kk = big_k as f64;
    let sup = curve
        .jump_times()
        .enumerate()
        .map(|(i, t)| {
            let above = (i + 1) as f64 / kk - t;
            let below = t - i as f64 / kk;
            above.max(below)
        })
        .fold(0.0f64, f64::max);
    Ok((curve.k as f64 * curve.c1()).sqrt() * sup)
}

pub fn time_test(panel: &PanelSample, k: IntermediateK, j: usize) -> Result<TestResult> {
    panel.check_station(j)?;
    let info = threshold_info(&pool(panel)?, k)?;
    let step = if info.exceedances == k.get() || info.exceedances == 0 {
        1.0 / k.get() as f64
    } else {
        1.0 / info.exceedances as f64
    };
    let curve = curve_at_threshold(panel, k.get(), j, info.threshold, step);
    let statistic = time_statistic(&curve)?;
    Ok(TestResult {
        statistic,
        law: LimitLaw::Kolmogorov,
        df: None,
        p_value: kolmogorov_pvalue(statistic),
        k: k.get(),
        station: Some(j),
        exceedances: info.exceedances,
        ties_at_threshold: info.ties_at_threshold,
    })
}

/// `P(sup |B(t)| > d)` for a Brownian bridge `B`.
///
/// Uses `2 Σ (-1)^{i-1} exp(-2 i² d²)` for `d >= 1` and the equivalent
/// theta-function form `1 - √(2π)/d Σ exp(-(2i-1)² π² / (8 d²))` below,
/// where the alternating series converges slowly. Terms are summed until
/// they drop under `1e-12`.
pub fn kolmogorov_pvalue(d: f64) -> f64 {
    if !(d > 0.0) {
        return 1.0;
    }
    let p = if d >= 1.0 {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for i in 1..=100 {
            let term = (-2.0 * (i * i) as f64 * d * d).exp();
            sum += sign * term;
            sign = -sign;
            if term < 1e-12 {
                break;
            }
        }
        2.0 * sum
    } else {
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * d * d);
        let mut sum = 0.0;
        for i in 1..=100 {
            let odd = (2 * i - 1) as f64;
            let term = (-odd * odd * c).exp();
            sum += term;
            if term < 1e-12 * sum.max(1e-300) {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / d * sum
    };
    p.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bonferroni {
    pub alpha: f64,
    pub corrected_level: f64,
    pub reject: Vec<bool>,
}

/// Rejects `p < alpha / m` for `m` simultaneous tests.
pub fn bonferroni(p_values: &[f64], alpha: f64) -> Result<Bonferroni> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(range_err("alpha", alpha, "(0, 1)"));
    }
    let level = alpha / p_values.len().max(1) as f64;
    Ok(Bonferroni {
        alpha,
        corrected_level: level,
        reject: p_values.iter().map(|&p| p < level).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepTarget {
    Space,
    Time(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub outcome: std::result::Result<TestResult, String>,
}

/// Re-runs a test for every `k`; failures are recorded per row.
pub fn k_sweep(panel: &PanelSample, ks: &[usize], target: SweepTarget) -> Vec<SweepRow> {
    ks.par_iter()
        .map(|&k| {
            let outcome = IntermediateK::for_panel(k, panel)
                .and_then(|k| match target {
                    SweepTarget::Space => space_test(panel, k),
                    SweepTarget::Time(j) => time_test(panel, k, j),
                })
                .map_err(|e| e.to_string());
            SweepRow { k, outcome }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scedasis::scedasis_all;
    use crate::testutil::distinct_panel;
    use proptest::prelude::*;

    fn diag(m: usize, v: f64) -> TailDependenceMatrix {
        let mut entries = vec![0.0; m * m];
        for j in 0..m {
            entries[j * m + j] = v;
        }
        TailDependenceMatrix { k: 100, m, entries }
    }

    #[test]
    fn space_worked_example() {
        let t = space_statistic(&[0.55, 0.45], &diag(2, 0.5), 100).unwrap();
        assert!((t - 1.0).abs() < 1e-12, "{t}");
        assert!((chi_square_sf(1.0, 1) - 0.317_310_507_862_914_1).abs() < 1e-12);
    }

    #[test]
    fn space_null_vector() {
        let t = space_statistic(&[0.25; 4], &diag(4, 0.25), 80).unwrap();
        assert_eq!(t, 0.0);
        assert_eq!(chi_square_sf(t, 3), 1.0);
    }

    #[test]
    fn space_duplicated_stations_singular() {
        let base = distinct_panel(4, 60, 2);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![base.row(i)[0], base.row(i)[0], base.row(i)[1]])
            .collect();
        let p = PanelSample::from_rows(&rows).unwrap();
        let err = space_test(&p, IntermediateK::new(30, 180).unwrap()).unwrap_err();
        match err {
            Error::Singular { stations, .. } => assert!(stations.contains(&(0, 1))),
            other => panic!("{other}"),
        }
        let two: Vec<Vec<f64>> = (0..60).map(|i| vec![base.row(i)[0]; 2]).collect();
        let p = PanelSample::from_rows(&two).unwrap();
        assert!(matches!(
            space_test(&p, IntermediateK::new(20, 120).unwrap()),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn space_needs_two_stations() {
        let p = distinct_panel(1, 30, 1);
        assert!(space_test(&p, IntermediateK::new(5, 30).unwrap()).is_err());
    }

    fn curve(rows: &[usize], n: usize, k: usize) -> ScedasisCurve {
        ScedasisCurve {
            station: 0,
            k,
            n_days: n,
            jump_rows: rows.to_vec(),
            step: 1.0 / k as f64,
        }
    }

    #[test]
    fn ks_four_points() {
        let c = curve(&[1, 3, 5, 7], 8, 40);
        assert!((time_statistic(&c).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ks_points_on_lattice() {
        // Jumps exactly at i/K: the step discrepancy 1/K is the minimum.
        let c = curve(&[2, 4, 6, 8], 8, 40);
        let d = time_statistic(&c).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        assert!(kolmogorov_pvalue(d) > 0.96);
    }

    #[test]
    fn ks_no_exceedance() {
        let c = curve(&[], 8, 40);
        assert!(matches!(time_statistic(&c), Err(Error::NoExceedance { .. })));
    }

    #[test]
    fn kolmogorov_series_values() {
        assert_eq!(kolmogorov_pvalue(0.0), 1.0);
        // Alternating series evaluated to convergence in 30-digit arithmetic.
        assert!((kolmogorov_pvalue(1.36) - 0.049_485_876_755_377_91).abs() < 1e-12);
        assert!((kolmogorov_pvalue(0.5) - 0.963_945_243_664_875_1).abs() < 1e-12);
        let tail = kolmogorov_pvalue(10.0);
        assert!((0.0..1e-80).contains(&tail));
    }

    #[test]
    fn kolmogorov_branches_agree_at_switch() {
        let lo = kolmogorov_pvalue(1.0 - 1e-12);
        let hi = kolmogorov_pvalue(1.0);
        assert!((lo - hi).abs() < 1e-11, "{lo} {hi}");
    }

    #[test]
    fn bonferroni_examples() {
        let mut ps = vec![0.5; 49];
        ps[3] = 0.044;
        let b = bonferroni(&ps, 0.05).unwrap();
        assert!((b.corrected_level - 0.05 / 49.0).abs() < 1e-18);
        assert!((b.corrected_level - 0.00102).abs() < 1e-5);
        assert!(!b.reject.iter().any(|&r| r));
        assert!(!bonferroni(&[1.0; 5], 0.05).unwrap().reject.iter().any(|&r| r));
        assert!(bonferroni(&[0.0, 0.9], 1e-9).unwrap().reject[0]);
        assert!(bonferroni(&[0.1], 1.5).is_err());
    }

    #[test]
    fn sweep_singleton_matches_direct() {
        let p = distinct_panel(8, 100, 3);
        let rows = k_sweep(&p, &[30], SweepTarget::Space);
        let direct = space_test(&p, IntermediateK::new(30, 300).unwrap()).unwrap();
        assert_eq!(rows[0].outcome.as_ref().unwrap(), &direct);
        let rows = k_sweep(&p, &[0, 30, 400], SweepTarget::Time(1));
        assert!(rows[0].outcome.is_err());
        assert!(rows[1].outcome.is_ok());
        assert!(rows[2].outcome.is_err());
    }

    proptest! {
        #[test]
        fn space_invariant_under_relabeling(seed in 0u64..300) {
            let p = distinct_panel(seed, 80, 4);
            let k = IntermediateK::new(60, 320).unwrap();
            let Ok(a) = space_test(&p, k) else { return Ok(()); };
            let q = p.permute_stations(&[3, 1, 0, 2]).unwrap();
            let b = space_test(&q, k).unwrap();
            prop_assert!((a.statistic - b.statistic).abs() < 1e-8 * (1.0 + a.statistic));
        }

        #[test]
        fn space_invariant_to_dropped_component(seed in 0u64..300) {
            // Dropping the last station's component is the same as dropping
            // any other: move each station to the end in turn.
            let p = distinct_panel(seed, 80, 3);
            let k = IntermediateK::new(50, 240).unwrap();
            let Ok(a) = space_test(&p, k) else { return Ok(()); };
            for order in [[1, 2, 0], [0, 2, 1], [2, 0, 1]] {
                let b = space_test(&p.permute_stations(&order).unwrap(), k).unwrap();
                prop_assert!((a.statistic - b.statistic).abs() < 1e-8 * (1.0 + a.statistic));
            }
        }

        #[test]
        fn time_invariant_under_monotone_maps(seed in 0u64..300) {
            let p = distinct_panel(seed, 100, 3);
            let q = p.map_values(|x| (x / 1e5).powi(3) + 2.0 * x.sqrt()).unwrap();
            let k = IntermediateK::new(40, 300).unwrap();
            for j in 0..3 {
                let a = time_test(&p, k, j);
                let b = time_test(&q, k, j);
                match (a, b) {
                    (Ok(a), Ok(b)) => prop_assert_eq!(a.statistic, b.statistic),
                    (Err(_), Err(_)) => {}
                    _ => prop_assert!(false),
                }
            }
        }

        #[test]
        fn p_values_in_unit_interval(d in 0.0f64..20.0) {
            let p = kolmogorov_pvalue(d);
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn space_uses_scedasis_values() {
        let p = distinct_panel(2, 50, 3);
        let k = IntermediateK::new(30, 150).unwrap();
        let c = scedasis_all(&p, k).unwrap().c1();
        let s = crate::dependence::sigma1_matrix(&p, k).unwrap();
        let direct = space_statistic(&c, &s, 30).unwrap();
        assert_eq!(space_test(&p, k).unwrap().statistic, direct);
    }
}
