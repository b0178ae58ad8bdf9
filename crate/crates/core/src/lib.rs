//! Linearly constrained ν-support-vector regression.
//!
//! Fits `f(x) = βᵀx + β₀` under `Aβ ≤ b`, `Γβ = d` by solving the dual with a
//! generalized SMO scheme ([`gsmo`]). Presets cover non-negative, simplex and
//! isotonic coefficients; [`baselines`] holds reference solvers and
//! [`experiments`] the synthetic benchmark harness.

pub mod baselines;
pub mod dual;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod gsmo;
pub mod instances;
pub mod matrix;
pub mod presets;
pub mod problem;

pub use dual::{Block, DualProblem, DualState, ThetaLayout};
pub use error::{
    BaselineError, ExperimentError, FitError, ModelFormatError, ProblemError, SolveError,
};
pub use exec::Execution;
pub use gsmo::{solve, GammaRule, SolveReport, SolverOptions, Termination};
pub use matrix::Matrix;
pub use presets::{
    fit, fit_projected, fit_with_constraints, FittedModel, ModelKind, PresetKind, ProjectionTarget,
};
pub use problem::{
    validate_problem, Hyperparameters, LinearConstraints, PrimalSolution, TrainingSet, Violation,
};
