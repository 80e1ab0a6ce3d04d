//! Estimation of averages of strata means when many strata have no observations.
//!
//! Each stratum contributes `(X, K)`: `K` responses, `X` of them successes,
//! with `K` random and often zero. Strata parameters `theta = (theta1, p)` are
//! treated as draws from an unknown mixing distribution `G`, estimated
//! nonparametrically on a grid by EM. The plug-in `E_G[p]` then estimates the
//! population average, including the unobserved strata.
//!
//! * [`model`]: observations, sampling scenarios, support grids, likelihood matrices.
//! * [`em`]: the EM fixed point and its diagnostics.
//! * [`estimators`]: naive, collapsed, GMLE plug-in, and hybrid estimators.
//! * [`bounds`]: likelihood-ratio confidence bounds.
//! * [`general`]: weighted non-binary outcomes by threshold integration.
//! * [`sim`]: simulation designs, replication, and thinning.
//! * [`io`]: CSV/TSV formats.

pub mod bounds;
pub mod em;
pub mod error;
pub mod estimators;
pub mod general;
pub mod io;
pub mod model;
pub mod pmf;
pub mod sim;

pub use bounds::{ci_bounds, deviance, CiConfig, CiResult, ConstraintMode};
pub use em::{em_step, fit_gmle, log_likelihood, EmConfig, EmInit, EmResult};
pub use error::{Error, Result};
pub use estimators::{
    agreement_check, estimate, extreme_collapse, fit_on_grid, gmle_plugin, naive_estimator,
    posterior_mean, psi_star_estimator, EstimateReport, Fit,
};
pub use general::{
    binary_reduce, build_threshold_plan, general_estimate, GeneralEstimate, GeneralStratum,
    ThresholdPlan,
};
pub use model::{
    build_likelihood_matrix, build_outcome_likelihood, component_density, default_grid, GridSpec,
    LikelihoodMatrix, MixingWeights, Observation, OutcomeTable, Scenario, SupportGrid, ThetaPoint,
};
pub use sim::{
    draw_dataset, preset, run_replications, thin_dataset, Law, SimSummary, StrataDesign,
    StrataGroup,
};
