//! Integrated scedasis estimation.
//!
//! `Ĉ_j(t) = (1/k) #{ i <= floor(n t) : X_{i,j} > X_{N-k:N} }`, a
//! right-continuous step function on the grid `i/n` with jumps of `1/k`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::panel::PanelSample;
use crate::tail::{floor_nt, pool, threshold_info, IntermediateK, ThresholdInfo};

/// How exceedance counts are turned into curve heights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Normalization {
    /// Divide by `k`.
    #[default]
    PerK,
    /// Divide by the realised number of strict exceedances, so that the
    /// curves sum to one at `t = 1` even when the threshold is tied.
    ByExceedances,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScedasisCurve {
    pub station: usize,
    pub k: usize,
    /// Number of rows `n` of the panel; jump times are `row / n`.
    pub n_days: usize,
    /// 1-based rows with an exceedance, increasing.
    pub jump_rows: Vec<usize>,
    /// Height of each jump.
    pub step: f64,
}

impl ScedasisCurve {
    pub fn jump_times(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.n_days as f64;
        self.jump_rows.iter().map(move |&i| i as f64 / n)
    }

    pub fn exceedances(&self) -> usize {
        self.jump_rows.len()
    }

    /// `Ĉ_j(t)`, right-continuous.
    pub fn eval(&self, t: f64) -> f64 {
        let cut = floor_nt(self.n_days, t.clamp(0.0, 1.0));
        self.jump_rows.partition_point(|&i| i <= cut) as f64 * self.step
    }

    /// `Ĉ_j(1)`.
    pub fn c1(&self) -> f64 {
        self.jump_rows.len() as f64 * self.step
    }

    /// Curve values on the full grid `i/n`, `i = 0..=n`.
    pub fn on_grid(&self) -> Vec<(f64, f64)> {
        let n = self.n_days;
        let mut out = Vec::with_capacity(n + 1);
        let mut next = 0;
        for i in 0..=n {
            while next < self.jump_rows.len() && self.jump_rows[next] <= i {
                next += 1;
            }
            out.push((i as f64 / n as f64, next as f64 * self.step));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScedasisEstimate {
    pub threshold: ThresholdInfo,
    pub normalization: Normalization,
    pub curves: Vec<ScedasisCurve>,
}

impl ScedasisEstimate {
    pub fn c1(&self) -> Vec<f64> {
        self.curves.iter().map(ScedasisCurve::c1).collect()
    }
}

pub(crate) fn curve_at_threshold(panel: &PanelSample, k: usize, j: usize, threshold: f64, step: f64) -> ScedasisCurve {
    let jump_rows = (0..panel.n_days())
        .filter(|&i| panel.get(i, j).is_some_and(|x| x > threshold))
        .map(|i| i + 1)
        .collect();
    ScedasisCurve {
        station: j,
        k,
        n_days: panel.n_days(),
        jump_rows,
        step,
    }
}

/// `Ĉ_j` for a single station.
pub fn scedasis_curve(panel: &PanelSample, k: IntermediateK, j: usize) -> Result<ScedasisCurve> {
    panel.check_station(j)?;
    let info = threshold_info(&pool(panel)?, k)?;
    Ok(curve_at_threshold(
        panel,
        k.get(),
        j,
        info.threshold,
        1.0 / k.get() as f64,
    ))
}

/// `Ĉ_j` for every station, sharing one pooled threshold.
pub fn scedasis_all(panel: &PanelSample, k: IntermediateK) -> Result<ScedasisEstimate> {
    scedasis_all_with(panel, k, Normalization::PerK)
}

pub fn scedasis_all_with(
    panel: &PanelSample,
    k: IntermediateK,
    normalization: Normalization,
) -> Result<ScedasisEstimate> {
    let info = threshold_info(&pool(panel)?, k)?;
    if info.exceedances != info.k {
        log::debug!(
            "threshold {} tied: {} exceedances for k = {}",
            info.threshold,
            info.exceedances,
            info.k
        );
    }
    let step = match normalization {
        Normalization::PerK => 1.0 / info.k as f64,
        Normalization::ByExceedances if info.exceedances > 0 => 1.0 / info.exceedances as f64,
        Normalization::ByExceedances => 0.0,
    };
    let curves = (0..panel.n_stations())
        .into_par_iter()
        .map(|j| curve_at_threshold(panel, info.k, j, info.threshold, step))
        .collect();
    Ok(ScedasisEstimate {
        threshold: info,
        normalization,
        curves,
    })
}
