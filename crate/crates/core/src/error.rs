use thiserror::Error;

use crate::problem::Violation;

/// The problem failed validation; every violation is listed.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid problem: {}", join(.0))]
pub struct ProblemError(pub Vec<Violation>);

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    /// `Q_ii − 2Q_ij + Q_jj = 0`: rows `i` and `j` of X coincide.
    #[error("zero curvature for pair ({i},{j}); duplicate rows in X?")]
    ZeroCurvature { i: usize, j: usize },
    #[error("index pair ({i},{j}) is not a violating pair")]
    NotViolating { i: usize, j: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("dimension mismatch: expected {expected} columns, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("preset needs p >= {min}, got {p}")]
    TooFewFeatures { p: usize, min: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("instance too large for exhaustive enumeration: {total} dual variables (cap {cap})")]
    InstanceTooLarge { total: usize, cap: usize },
    #[error("no candidate active set yields a certified KKT point")]
    NoFeasiblePoint,
    #[error("active-set iteration cap ({0}) reached")]
    IterationCap(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("response has zero variance; SNR undefined")]
    ConstantSignal,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelFormatError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing section [{0}]")]
    MissingSection(&'static str),
}
