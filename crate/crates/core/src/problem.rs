//! Problem model: training data, linear constraints on the coefficient
//! vector, hyperparameters, and the fitted primal solution.
//!
//! All types are plain immutable data. [`validate_problem`] reports every
//! broken invariant at once instead of stopping at the first one, so callers
//! (and the CLI) can show a complete diagnosis.

use std::collections::HashMap;
use std::fmt;

use crate::matrix::Matrix;

/// Regression data: `x` is `n × p` with samples as rows, `y` has length `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl TrainingSet {
    pub fn new(x: Matrix, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    pub fn n_samples(&self) -> usize {
        self.x.rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    /// Subset of samples, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

/// The polyhedron `{β : Aβ ≤ b, Γβ = d}`. Either block may have zero rows.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraints {
    pub a: Matrix,
    pub b: Vec<f64>,
    pub gamma: Matrix,
    pub d: Vec<f64>,
}

impl LinearConstraints {
    /// No constraints on a `p`-dimensional coefficient vector.
    pub fn none(p: usize) -> Self {
        Self {
            a: Matrix::zeros(0, p),
            b: Vec::new(),
            gamma: Matrix::zeros(0, p),
            d: Vec::new(),
        }
    }

    pub fn new(a: Matrix, b: Vec<f64>, gamma: Matrix, d: Vec<f64>) -> Self {
        Self { a, b, gamma, d }
    }

    pub fn n_inequalities(&self) -> usize {
        self.a.rows()
    }

    pub fn n_equalities(&self) -> usize {
        self.gamma.rows()
    }

    /// Largest violation of `Aβ ≤ b` and `Γβ = d` at `beta` (0 when feasible).
    pub fn max_violation(&self, beta: &[f64]) -> f64 {
        let ineq = self
            .a
            .mul_vec(beta)
            .iter()
            .zip(&self.b)
            .fold(0.0_f64, |m, (ab, b)| m.max(ab - b));
        let eq = self
            .gamma
            .mul_vec(beta)
            .iter()
            .zip(&self.d)
            .fold(0.0_f64, |m, (gb, d)| m.max((gb - d).abs()));
        ineq.max(eq)
    }
}

/// Default KKT tolerance.
pub const DEFAULT_TAU: f64 = 1e-3;

/// Solver hyperparameters.
///
/// `max_iter = None` resolves to `100 · (2n + k₁ + k₂)` at solve time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyperparameters {
    pub c: f64,
    pub nu: f64,
    pub tau: f64,
    pub max_iter: Option<usize>,
}

impl Hyperparameters {
    pub fn new(c: f64, nu: f64) -> Self {
        Self {
            c,
            nu,
            tau: DEFAULT_TAU,
            max_iter: None,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = Some(max_iter);
        self
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.c > 0.0 && self.c.is_finite()) {
            out.push(Violation::BadHyperparameter {
                name: "C",
                value: self.c,
            });
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            out.push(Violation::BadHyperparameter {
                name: "nu",
                value: self.nu,
            });
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            out.push(Violation::BadHyperparameter {
                name: "tau",
                value: self.tau,
            });
        }
        if self.max_iter == Some(0) {
            out.push(Violation::BadHyperparameter {
                name: "max_iter",
                value: 0.0,
            });
        }
        out
    }
}

/// Fitted linear model `f(x) = βᵀx + β₀` with tube half-width `ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalSolution {
    pub beta: Vec<f64>,
    pub beta0: f64,
    pub epsilon: f64,
    /// `|α_i − α*_i| > 0` per training sample. Empty for models loaded from disk.
    pub support: Vec<bool>,
    /// Set when no free multiplier was available to pin down `β₀` and `ε`.
    pub degenerate_intercept: bool,
}

/// One broken invariant found by [`validate_problem`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    TooFewSamples(usize),
    NoFeatures,
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    NonFinite {
        what: &'static str,
        index: usize,
    },
    DuplicateRows(usize, usize),
    ZeroRowA(usize),
    ZeroRowGamma(usize),
    BadHyperparameter {
        name: &'static str,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewSamples(n) => write!(f, "need at least 2 samples, got {n}"),
            Violation::NoFeatures => write!(f, "need at least 1 feature"),
            Violation::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(
                f,
                "dimension mismatch in {what}: expected {expected}, found {found}"
            ),
            Violation::NonFinite { what, index } => {
                write!(f, "non-finite value in {what} at index {index}")
            }
            Violation::DuplicateRows(i, j) => write!(f, "duplicate rows ({i},{j})"),
            Violation::ZeroRowA(i) => write!(f, "zero row in A at index {i}"),
            Violation::ZeroRowGamma(i) => write!(f, "zero row in Gamma at index {i}"),
            Violation::BadHyperparameter { name, value } => {
                write!(f, "invalid hyperparameter {name} = {value}")
            }
        }
    }
}

/// Checks every invariant of the problem model. An empty vector means OK.
///
/// Duplicate rows are detected by exact floating-point equality
/// (`0.0 == -0.0`); near-duplicates are accepted.
pub fn validate_problem(
    ts: &TrainingSet,
    lc: &LinearConstraints,
    hp: &Hyperparameters,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = ts.n_samples();
    let p = ts.n_features();

    if n < 2 {
        out.push(Violation::TooFewSamples(n));
    }
    if p == 0 {
        out.push(Violation::NoFeatures);
    }
    if ts.y.len() != n {
        out.push(Violation::DimensionMismatch {
            what: "y",
            expected: n,
            found: ts.y.len(),
        });
    }
    for (what, m) in [("A columns", &lc.a), ("Gamma columns", &lc.gamma)] {
        if m.cols() != p {
            out.push(Violation::DimensionMismatch {
                what,
                expected: p,
                found: m.cols(),
            });
        }
    }
    if lc.b.len() != lc.a.rows() {
        out.push(Violation::DimensionMismatch {
            what: "b",
            expected: lc.a.rows(),
            found: lc.b.len(),
        });
    }
    if lc.d.len() != lc.gamma.rows() {
        out.push(Violation::DimensionMismatch {
            what: "d",
            expected: lc.gamma.rows(),
            found: lc.d.len(),
        });
    }

    let flat_checks: [(&'static str, &[f64]); 6] = [
        ("X", ts.x.as_slice()),
        ("y", &ts.y),
        ("A", lc.a.as_slice()),
        ("b", &lc.b),
        ("Gamma", lc.gamma.as_slice()),
        ("d", &lc.d),
    ];
    for (what, values) in flat_checks {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            out.push(Violation::NonFinite { what, index });
        }
    }

    let mut seen: HashMap<Vec<u64>, usize> = HashMap::with_capacity(n);
    for (i, row) in ts.x.iter_rows().enumerate() {
        // +0.0 normalizes -0.0 so the bit key matches float equality.
        let key: Vec<u64> = row.iter().map(|v| (v + 0.0).to_bits()).collect();
        if let Some(&first) = seen.get(&key) {
            out.push(Violation::DuplicateRows(first, i));
        } else {
            seen.insert(key, i);
        }
    }

    for (i, row) in lc.a.iter_rows().enumerate() {
        if row.iter().all(|&v| v == 0.0) {
            out.push(Violation::ZeroRowA(i));
        }
    }
    for (i, row) in lc.gamma.iter_rows().enumerate() {
        if row.iter().all(|&v| v == 0.0) {
            out.push(Violation::ZeroRowGamma(i));
        }
    }

    out.extend(hp.violations());
    out
}
