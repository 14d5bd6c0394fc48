//! Scedasis estimation, tail-dependence-aware tests for trends in extremes
//! across time and space, and the pooled generalized-Pareto pseudo-MLE.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dependence;
pub mod error;
pub mod gpmle;
pub mod hypothesis;
pub mod mc;
pub mod panel;
pub mod quadrature;
pub mod scedasis;
pub mod tail;

#[cfg(test)]
mod testutil;

pub use dependence::{sigma1_matrix, tail_copula_integral, TailCopulaEstimate, TailCopulaGrid, TailDependenceMatrix};
pub use error::{Error, Result};
pub use gpmle::{
    fisher_info, fisher_inverse, fit_gp_pml, gamma_path, gp_loglik, mle_asymptotic_cov, sigma_gamma0, AsymptoticCov,
    CrossDependence, GpFit,
};
pub use hypothesis::{
    bonferroni, k_sweep, kolmogorov_pvalue, space_test, time_test, LimitLaw, SweepRow, SweepTarget, TestResult,
};
pub use mc::{simulate_panel, Dependence, McReport, SimSpec};
pub use panel::{decluster, load_panel, split_season, PanelSample, PanelSchema, SeasonDefinition};
pub use scedasis::{scedasis_all, scedasis_curve, Normalization, ScedasisCurve, ScedasisEstimate};
pub use tail::{pool, tail_empirical_process, tail_quantile_process, IntermediateK, PooledOrderStatistics};
