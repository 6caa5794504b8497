//! Simulation designs, a seeded Monte Carlo runner, and a Monte Carlo
//! oracle for the information bounds.

pub mod dgp;
pub mod infobound;
pub mod mc;
pub mod quad;

pub use dgp::{gen_dataset, sample_truncated_mvnormal, Dgp, DgpConfig, ErrorLaw, TruncatedMvNormal, X1Form};
pub use infobound::{info_bound_mc, oracle_config, InfoBoundReport};
pub use mc::{
    efficiency_ratio, default_bandwidth_grid, run_mc, run_mc_with_grid, AsamEstimator, McEstimator, McResults,
    PlEstimator, SamEstimator,
};
