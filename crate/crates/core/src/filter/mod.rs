//! Gaussian approximate filters for scalar signals observed in white noise,
//! benchmarked against a finite-difference solution of the
//! Kushner–Stratonovich equation.
//!
//! The signal is `dX = f dt + σ dW` and the observation `dY = b(X) dt + dV`.
//! Filters evolve the mean and standard deviation `θ = (θ¹, θ²)` of a Gaussian.

mod closed_form;
mod experiment;
mod fd;
mod gaussian;
mod grid;
mod model;
mod run;

pub use closed_form::{closed_form_coefficients, gaussian_moment_b, FilterKind};
pub use experiment::{
    fd_self_convergence, run_filter_comparison, FilterComparison, FilterComparisonConfig, ResidualRow,
    SelfConvergence,
};
pub use fd::{check_fd_stability, ks_fd_step, run_reference, FdScheme};
pub use gaussian::{
    gaussian_family_embedding, gaussian_family_sde, numeric_projection_coefficients, GaussianFamily, Metric,
    DEFAULT_QUADRATURE_NODES, MIN_QUADRATURE_NODES,
};
pub use grid::{hellinger_residual, l2_residual, DensityGrid, GridSpec};
pub use model::{simulate_signal_observation, FilterModel, GaussianParams, ObservationRecord};
pub use run::{run_filter, ClosedForm, CoefficientSource, FilterRun, NumericProjection, DEFAULT_THETA_MIN};
