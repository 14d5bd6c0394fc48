//! Panel simulator and Monte Carlo harnesses.

mod copula;
mod harness;
mod sim;

pub use copula::{logistic_tail_copula, Dependence};
pub use harness::{
    analytic_covariance, mc_covariance_check, mc_mle_variance, mc_rejection_rate, mc_test_power, mc_test_size,
    predicted_mle_cov, CovPoint, McMetric, McReport, McTest,
};
pub use sim::{simulate_panel, simulate_replication, ScedasisShape, SimSpec, P0};
