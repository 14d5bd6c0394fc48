//! Pooled generalized-Pareto pseudo-maximum-likelihood estimation.

mod covariance;
mod fit;
mod likelihood;

pub use covariance::{
    asymptotic_cov, fisher_info, fisher_inverse, mle_asymptotic_cov, same_station_tau, sandwich, sigma_gamma0,
    AsymptoticCov, CrossDependence, Matrix2, ScoreCovariance,
};
pub use fit::{
    fit_excesses, fit_excesses_with, fit_gp_pml, fit_gp_pml_with, pooled_excesses, FitOptions, GpFit, GAMMA_MAX,
    GAMMA_MIN, MIN_EXCESSES,
};
pub use likelihood::{gp_loglik, gp_logpdf, loglik_derivatives, LocalQuadratic};

use rayon::prelude::*;
use serde::Serialize;

use crate::panel::PanelSample;
use crate::tail::IntermediateK;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaPathPoint {
    pub gamma: f64,
    pub scale: f64,
    pub se_gamma: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaPathRow {
    pub k: usize,
    pub outcome: Result<GammaPathPoint, String>,
}

/// Refits the GP model for every `k`; failures are recorded per row.
pub fn gamma_path(panel: &PanelSample, ks: &[usize]) -> Vec<GammaPathRow> {
    ks.par_iter()
        .map(|&k| {
            let outcome = IntermediateK::for_panel(k, panel)
                .and_then(|kk| {
                    let fit = fit_gp_pml(panel, kk)?;
                    let cov = mle_asymptotic_cov(&fit, panel)?;
                    Ok(GammaPathPoint {
                        gamma: fit.gamma_hat,
                        scale: fit.scale_hat,
                        se_gamma: cov.se_gamma(),
                        converged: fit.converged,
                    })
                })
                .map_err(|e| e.to_string());
            GammaPathRow { k, outcome }
        })
        .collect()
}
