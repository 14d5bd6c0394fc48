//! Pooled order statistics and the sequential tail processes built on them.
//!
//! Every observation of every station is pooled into one sample of size
//! `N` (the number of non-missing cells). Thresholds are upper order
//! statistics `X_{N-q:N}` of that pooled sample and exceedances are strict.

use serde::Serialize;

use crate::error::{range_err, Error, Result};
use crate::panel::PanelSample;

/// Number of upper order statistics used, `1 <= k < N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct IntermediateK(usize);

impl IntermediateK {
    pub fn new(k: usize, n_effective: usize) -> Result<Self> {
        if k == 0 || k >= n_effective {
            return Err(range_err("k", k, format!("1..{n_effective}")));
        }
        Ok(Self(k))
    }

    /// Validates `k` against the pooled size of `panel`.
    pub fn for_panel(k: usize, panel: &PanelSample) -> Result<Self> {
        Self::new(k, panel.n_effective())
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// All non-missing observations sorted ascending, with `(day, station)`
/// provenance. Ties are ordered by day, then station.
#[derive(Debug, Clone)]
pub struct PooledOrderStatistics {
    sorted: Vec<f64>,
    provenance: Vec<(usize, usize)>,
}

pub fn pool(panel: &PanelSample) -> Result<PooledOrderStatistics> {
    let mut cells = Vec::with_capacity(panel.n_effective());
    for i in 0..panel.n_days() {
        for j in 0..panel.n_stations() {
            if let Some(x) = panel.get(i, j) {
                cells.push((x, i, j));
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::EmptyPool);
    }
    // Cells are generated in (day, station) order, so a stable sort on the
    // value alone gives the documented tie order.
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(PooledOrderStatistics {
        sorted: cells.iter().map(|c| c.0).collect(),
        provenance: cells.iter().map(|c| (c.1, c.2)).collect(),
    })
}

impl PooledOrderStatistics {
    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn provenance(&self) -> &[(usize, usize)] {
        &self.provenance
    }

    pub fn n_effective(&self) -> usize {
        self.sorted.len()
    }

    /// `X_{N-q:N}` for `0 <= q <= N`; `q = N` gives `-inf` so that every
    /// observation exceeds it.
    pub fn upper(&self, q: usize) -> f64 {
        let n = self.sorted.len();
        debug_assert!(q <= n);
        if q >= n {
            f64::NEG_INFINITY
        } else {
            self.sorted[n - q - 1]
        }
    }

    /// Number of pooled values strictly above `x`.
    pub fn count_above(&self, x: f64) -> usize {
        self.sorted.len() - self.sorted.partition_point(|&v| v <= x)
    }

    /// Threshold at `s`: `X_{N-floor(ks):N}`.
    pub fn upper_at(&self, k: IntermediateK, s: f64) -> Result<f64> {
        let q = floor_ks(k, s);
        if q > self.n_effective() {
            return Err(range_err(
                "s",
                s,
                format!("[0, {}]", self.n_effective() as f64 / k.0 as f64),
            ));
        }
        Ok(self.upper(q))
    }
}

pub(crate) fn floor_ks(k: IntermediateK, s: f64) -> usize {
    // Guard against k*s landing a hair below an integer.
    let ks = k.0 as f64 * s;
    let r = ks.round();
    if (ks - r).abs() <= 1e-9 * ks.abs().max(1.0) {
        r as usize
    } else {
        ks.floor() as usize
    }
}

/// Global threshold `X_{N-k:N}`: the `(N-k)`-th smallest pooled value.
pub fn global_threshold(pooled: &PooledOrderStatistics, k: IntermediateK) -> Result<f64> {
    if k.0 >= pooled.n_effective() {
        return Err(range_err("k", k.0, format!("1..{}", pooled.n_effective())));
    }
    Ok(pooled.upper(k.0))
}

/// Summary of the global threshold with tie diagnostics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ThresholdInfo {
    pub k: usize,
    pub threshold: f64,
    /// Pooled observations strictly above the threshold.
    pub exceedances: usize,
    /// Pooled observations equal to the threshold value.
    pub ties_at_threshold: usize,
}

pub fn threshold_info(pooled: &PooledOrderStatistics, k: IntermediateK) -> Result<ThresholdInfo> {
    let threshold = global_threshold(pooled, k)?;
    let exceedances = pooled.count_above(threshold);
    let lo = pooled.sorted.partition_point(|&v| v < threshold);
    let hi = pooled.sorted.partition_point(|&v| v <= threshold);
    Ok(ThresholdInfo {
        k: k.0,
        threshold,
        exceedances,
        ties_at_threshold: hi - lo,
    })
}

/// `(1/k) sum_{i <= floor(n t)} 1{X_{i,j} > X_{N - floor(ks):N}}` on an
/// `s × t` grid. Rows of the result follow `s_grid`, columns `t_grid`.
pub fn tail_empirical_process(
    panel: &PanelSample,
    k: IntermediateK,
    j: usize,
    s_grid: &[f64],
    t_grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    panel.check_station(j)?;
    let pooled = pool(panel)?;
    let thresholds = s_grid
        .iter()
        .map(|&s| {
            if !(s >= 0.0) {
                return Err(range_err("s", s, "[0, N/k]"));
            }
            pooled.upper_at(k, s)
        })
        .collect::<Result<Vec<_>>>()?;
    tail_empirical_process_at(panel, k, j, &thresholds, t_grid)
}

/// Same counts as [`tail_empirical_process`] at caller-supplied thresholds,
/// e.g. the true marginal quantiles of a simulated panel.
pub fn tail_empirical_process_at(
    panel: &PanelSample,
    k: IntermediateK,
    j: usize,
    thresholds: &[f64],
    t_grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    panel.check_station(j)?;
    let n = panel.n_days();
    let mut cuts = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if !(0.0..=1.0).contains(&t) {
            return Err(range_err("t", t, "[0, 1]"));
        }
        cuts.push(floor_nt(n, t));
    }
    let inv_k = 1.0 / k.0 as f64;
    Ok(thresholds
        .iter()
        .map(|&u| {
            // Running count of exceedances up to each day.
            let mut prefix = Vec::with_capacity(n + 1);
            prefix.push(0usize);
            let mut c = 0;
            for i in 0..n {
                if panel.get(i, j).is_some_and(|x| x > u) {
                    c += 1;
                }
                prefix.push(c);
            }
            cuts.iter().map(|&cut| prefix[cut] as f64 * inv_k).collect()
        })
        .collect())
}

pub(crate) fn floor_nt(n: usize, t: f64) -> usize {
    let nt = n as f64 * t;
    let r = nt.round();
    let cut = if (nt - r).abs() <= 1e-9 * nt.max(1.0) {
        r
    } else {
        nt.floor()
    };
    (cut as usize).min(n)
}

/// Threshold-centred pooled tail quantiles `X_{N-floor(ks):N} - X_{N-k:N}`
/// for `s` in `[1/(2k), N/k)`.
pub fn tail_quantile_process(
    pooled: &PooledOrderStatistics,
    k: IntermediateK,
    s_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let base = global_threshold(pooled, k)?;
    let lo = 0.5 / k.0 as f64;
    let hi = pooled.n_effective() as f64 / k.0 as f64;
    s_grid
        .iter()
        .map(|&s| {
            if !(s >= lo - 1e-15 && s < hi) {
                return Err(range_err("s", s, format!("[{lo}, {hi})")));
            }
            Ok((s, pooled.upper(floor_ks(k, s)) - base))
        })
        .collect()
}
