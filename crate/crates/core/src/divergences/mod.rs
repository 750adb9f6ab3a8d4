//! Objectives and discrepancies: quantile-form W_p, the closed-form W₂
//! solution, empirical 1D Wasserstein, Gaussian-kernel MMD, the KL pullback
//! objective and map-space norms.

mod kl;
mod mmd;
mod norms;
mod wasserstein;

pub use kl::{kl_estimate, kl_estimate_triangular, KlEstimate, KlPullbackObjective, LikelihoodForm};
pub use mmd::{mmd_gaussian, mmd_gaussian_points, mmd_weighted, MmdFitObjective};
pub use norms::{empirical_nodes, l2_map_error, lp_map_error, reference_nodes, split_uniform_nodes, v_norm_distance};
pub use wasserstein::{
    empirical_wasserstein_1d, w2_closed_form, w2_from_objective, W2Fit, WpQuantileObjective, DEFAULT_SMOOTHING,
};
