//! Empirical tail-dependence functionals.
//!
//! The joint exceedance count
//! `(1/k) #{ i <= floor(n t) : X_{i,j1} > X_{N-floor(k s1):N}, X_{i,j2} > X_{N-floor(k s2):N} }`
//! estimates `σ_{j1,j2}(s1, s2, t, t)`. At `s1 = s2 = t = 1` it fills the
//! matrix `Σ̂₁` used by the spatial test; on an `(s, t)` grid with time
//! fixed at one it is the plug-in for the GP covariance cross terms.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{range_err, Result};
use crate::panel::PanelSample;
use crate::tail::{floor_ks, floor_nt, pool, IntermediateK, PooledOrderStatistics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailCopulaEstimate {
    pub j1: usize,
    pub j2: usize,
    pub s1: f64,
    pub s2: f64,
    pub t: f64,
    pub value: f64,
}

pub fn tail_copula_integral(
    panel: &PanelSample,
    k: IntermediateK,
    j1: usize,
    j2: usize,
    s1: f64,
    s2: f64,
    t: f64,
) -> Result<TailCopulaEstimate> {
    panel.check_station(j1)?;
    panel.check_station(j2)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(range_err("t", t, "[0, 1]"));
    }
    let pooled = pool(panel)?;
    let n_eff = pooled.n_effective();
    let threshold = |s: f64| {
        let q = if s.is_finite() { floor_ks(k, s) } else { 0 };
        if q < 1 || q >= n_eff {
            Err(range_err("s", s, format!("floor(k s) in 1..{n_eff}")))
        } else {
            Ok(pooled.upper(q))
        }
    };
    let u1 = threshold(s1)?;
    let u2 = threshold(s2)?;
    let cut = floor_nt(panel.n_days(), t);
    let count = (0..cut)
        .filter(|&i| panel.get(i, j1).is_some_and(|x| x > u1) && panel.get(i, j2).is_some_and(|x| x > u2))
        .count();
    Ok(TailCopulaEstimate {
        j1,
        j2,
        s1,
        s2,
        t,
        value: count as f64 / k.get() as f64,
    })
}

/// `Σ̂₁`: joint exceedance frequencies of the global threshold, symmetric,
/// with `Ĉ_j(1)` on the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailDependenceMatrix {
    pub k: usize,
    pub m: usize,
    /// Row-major `m × m`.
    pub entries: Vec<f64>,
}

impl TailDependenceMatrix {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.entries[a * self.m + b]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.get(j, j)).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            k: self.k,
            m: self.m,
            entries: self.entries.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks(self.m)
    }
}

pub fn sigma1_matrix(panel: &PanelSample, k: IntermediateK) -> Result<TailDependenceMatrix> {
    let pooled = pool(panel)?;
    sigma1_from_pooled(panel, &pooled, k)
}

pub(crate) fn sigma1_from_pooled(
    panel: &PanelSample,
    pooled: &PooledOrderStatistics,
    k: IntermediateK,
) -> Result<TailDependenceMatrix> {
    let u = crate::tail::global_threshold(pooled, k)?;
    let m = panel.n_stations();
    let mut counts = vec![0usize; m * m];
    let mut hits = Vec::with_capacity(m);
    for i in 0..panel.n_days() {
        hits.clear();
        hits.extend((0..m).filter(|&j| panel.get(i, j).is_some_and(|x| x > u)));
        for &a in &hits {
            for &b in &hits {
                counts[a * m + b] += 1;
            }
        }
    }
    let inv_k = 1.0 / k.get() as f64;
    Ok(TailDependenceMatrix {
        k: k.get(),
        m,
        entries: counts.into_iter().map(|c| c as f64 * inv_k).collect(),
    })
}

/// Empirical `r_{ij}(s, t) = σ_{ij}(s, t, 1, 1)` for every station pair on a
/// geometric node grid in `[1/k, 1]`, interpolated bilinearly (and linearly
/// to zero below the first node).
#[derive(Debug, Clone)]
pub struct TailCopulaGrid {
    m: usize,
    nodes: Vec<f64>,
    /// For each ordered pair `i < j`, a `len × len` row-major table of
    /// `r_ij(nodes[a], nodes[b])`.
    tables: Vec<Vec<f64>>,
}

impl TailCopulaGrid {
    pub const DEFAULT_NODES: usize = 64;

    /// Geometric grid from `1/k` to `1`.
    pub fn geometric_nodes(k: usize, len: usize) -> Vec<f64> {
        let lo = (1.0 / k as f64).ln();
        if len == 1 {
            return vec![1.0];
        }
        let mut nodes: Vec<f64> = (0..len)
            .map(|a| (lo * (1.0 - a as f64 / (len - 1) as f64)).exp())
            .collect();
        nodes[len - 1] = 1.0;
        nodes
    }

    pub fn build(panel: &PanelSample, k: IntermediateK, len: usize) -> Result<Self> {
        let pooled = pool(panel)?;
        let nodes = Self::geometric_nodes(k.get(), len);
        let thresholds: Vec<f64> = nodes.iter().map(|&s| pooled.upper(floor_ks(k, s))).collect();
        let m = panel.n_stations();
        let n = panel.n_days();
        // First node index at which each cell exceeds; `len` means never.
        let first_exceed: Vec<usize> = (0..n * m)
            .map(|idx| match panel.get(idx / m, idx % m) {
                Some(x) => thresholds.partition_point(|&u| u >= x),
                None => len,
            })
            .collect();
        let inv_k = 1.0 / k.get() as f64;
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
        let tables = pairs
            .par_iter()
            .map(|&(i, j)| {
                let mut hist = vec![0usize; len * len];
                for row in 0..n {
                    let a = first_exceed[row * m + i];
                    let b = first_exceed[row * m + j];
                    if a < len && b < len {
                        hist[a * len + b] += 1;
                    }
                }
                // 2-D prefix sums.
                for a in 0..len {
                    for b in 0..len {
                        let mut v = hist[a * len + b];
                        if a > 0 {
                            v += hist[(a - 1) * len + b];
                        }
                        if b > 0 {
                            v += hist[a * len + b - 1];
                        }
                        if a > 0 && b > 0 {
                            v -= hist[(a - 1) * len + b - 1];
                        }
                        hist[a * len + b] = v;
                    }
                }
                hist.into_iter().map(|c| c as f64 * inv_k).collect()
            })
            .collect();
        Ok(Self { m, nodes, tables })
    }

    /// Grid whose node values come from a known `r(i, j, s, t)`.
    pub fn from_fn<F: Fn(usize, usize, f64, f64) -> f64>(m: usize, nodes: Vec<f64>, r: F) -> Self {
        let len = nodes.len();
        let mut tables = Vec::with_capacity(m * m.saturating_sub(1) / 2);
        for i in 0..m {
            for j in i + 1..m {
                let mut table = Vec::with_capacity(len * len);
                for &s in &nodes {
                    for &t in &nodes {
                        table.push(r(i, j, s, t));
                    }
                }
                tables.push(table);
            }
        }
        Self { m, nodes, tables }
    }

    pub fn n_stations(&self) -> usize {
        self.m
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    fn table_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        // Pairs are enumerated row by row over the upper triangle.
        i * (2 * self.m - i - 1) / 2 + (j - i - 1)
    }

    /// Node value `r_ij(nodes[a], nodes[b])` for `i != j`.
    pub fn node_value(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        let len = self.nodes.len();
        if i < j {
            self.tables[self.table_index(i, j)][a * len + b]
        } else {
            self.tables[self.table_index(j, i)][b * len + a]
        }
    }

    /// Interpolated `r_ij(s, t)` for `i != j`, `s, t` in `[0, 1]`.
    pub fn r(&self, i: usize, j: usize, s: f64, t: f64) -> f64 {
        let (a, wa) = self.locate(s);
        let (b, wb) = self.locate(t);
        let node = |a: Option<usize>, b: Option<usize>| match (a, b) {
            (Some(a), Some(b)) => self.node_value(i, j, a, b),
            _ => 0.0,
        };
        // `a` is the upper node index (None marks the implicit node at zero).
        let (a0, a1) = (a.checked_sub(1), Some(a));
        let (b0, b1) = (b.checked_sub(1), Some(b));
        (1.0 - wa) * (1.0 - wb) * node(a0, b0)
            + wa * (1.0 - wb) * node(a1, b0)
            + (1.0 - wa) * wb * node(a0, b1)
            + wa * wb * node(a1, b1)
    }

    /// Upper node index of the cell containing `s` and the weight of that
    /// upper node. Index 0 denotes the cell `[0, nodes[0]]`.
    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, 1.0);
        let a = self.nodes.partition_point(|&x| x < s).min(self.nodes.len() - 1);
        let lo = if a == 0 { 0.0 } else { self.nodes[a - 1] };
        let hi = self.nodes[a];
        let w = if hi > lo { (s - lo) / (hi - lo) } else { 1.0 };
        (a, w.clamp(0.0, 1.0))
    }
}
