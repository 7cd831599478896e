//! Ridge-penalized instrumental-variable (ridge IV) estimation.
//!
//! The crate covers the linear single-instrument IV model
//!
//! ```text
//! Y = b0 + b1 * D + eps
//! D = p0 + p1 * Z + v
//! ```
//!
//! and provides:
//! - [`dgp`]: seeded sample generation, including drifting (local-to-zero) first stages.
//! - [`estimators`]: 2SLS, ridge IV in ratio, matrix and over-identified forms, and the
//!   penalized moment objective with its closed-form minimizer.
//! - [`asymptotics`]: closed-form limiting moments used as Monte Carlo predictions.
//! - [`montecarlo`]: deterministic, parallel repetition experiments and MSE sweeps.

pub mod asymptotics;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod montecarlo;
pub mod rng;
pub mod stats;

pub use asymptotics::{
    cauchy_diagnostics, delta_method_variance, sigma_fixed, sigma_stochastic, sqrtn_bias,
    staiger_stock_moments, summarize, v_ridge, AsymptoticSummary, CauchyDiagnostics,
    SamplingAssumption,
};
pub use dgp::{
    generate_dataset, generate_with_instruments, Dataset, DgpParams, InstrumentDistribution,
};
pub use error::{Error, Result};
pub use estimators::{
    demeaned_cov, first_stage, fit_2sls, fit_ridge_iv, fit_ridge_iv_matrix,
    fit_ridge_iv_overidentified, gmm_minimize, gmm_objective, lagrange_correspondence,
    reduced_form, Estimate, LineFit, PenaltyRate, PenaltySchedule,
};
pub use montecarlo::{
    collect_sampling_distribution, run_sweep, with_workers, GridVariable, SweepCell, SweepConfig,
    SweepResult,
};
