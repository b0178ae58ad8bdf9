//! Seeded random problem instances for tests, benchmarks and the acceptance
//! harness.

use rand::Rng;

use crate::dual::DualProblem;
use crate::matrix::Matrix;
use crate::presets::{make_constraints, PresetKind};
use crate::problem::{Hyperparameters, LinearConstraints, TrainingSet};

/// Constraint families used by the randomized checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintFamily {
    None,
    NonNegative,
    Simplex,
    /// One random inequality and one random equality, both satisfied by a
    /// random anchor point so the polyhedron is non-empty.
    RandomMixed,
}

impl ConstraintFamily {
    pub const ALL: [ConstraintFamily; 4] = [
        ConstraintFamily::None,
        ConstraintFamily::NonNegative,
        ConstraintFamily::Simplex,
        ConstraintFamily::RandomMixed,
    ];

    pub fn build<R: Rng + ?Sized>(self, rng: &mut R, p: usize) -> LinearConstraints {
        match self {
            ConstraintFamily::None => make_constraints(PresetKind::Svr, p).unwrap(),
            ConstraintFamily::NonNegative => make_constraints(PresetKind::Nnsvr, p).unwrap(),
            ConstraintFamily::Simplex => make_constraints(PresetKind::Ssvr, p).unwrap(),
            ConstraintFamily::RandomMixed => {
                let anchor: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
                let a_row = nonzero_row(rng, p);
                let g_row = nonzero_row(rng, p);
                let slack = rng.random_range(0.0..0.5);
                let b = crate::matrix::dot(&a_row, &anchor) + slack;
                let d = crate::matrix::dot(&g_row, &anchor);
                LinearConstraints::new(
                    Matrix::from_rows(&[a_row], p).unwrap(),
                    vec![b],
                    Matrix::from_rows(&[g_row], p).unwrap(),
                    vec![d],
                )
            }
        }
    }
}

fn nonzero_row<R: Rng + ?Sized>(rng: &mut R, p: usize) -> Vec<f64> {
    loop {
        let r: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        if r.iter().any(|v| v.abs() > 0.1) {
            return r;
        }
    }
}

/// Uniform `[-1, 1)` design and response of the given size.
pub fn random_training_set<R: Rng + ?Sized>(rng: &mut R, n: usize, p: usize) -> TrainingSet {
    let data: Vec<f64> = (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    TrainingSet::new(Matrix::from_row_major(n, p, data).unwrap(), y)
}

/// Random feasible instance from one of the constraint families.
pub fn random_problem<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    p: usize,
    family: ConstraintFamily,
    hp: Hyperparameters,
) -> DualProblem {
    let ts = random_training_set(rng, n, p);
    let lc = family.build(rng, p);
    DualProblem::new(ts, lc, hp).expect("random instance is valid")
}

/// Random instance with `k1` inequality and `k2` equality rows, for algebra
/// checks that do not need a non-empty polyhedron.
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    p: usize,
    k1: usize,
    k2: usize,
) -> DualProblem {
    let ts = random_training_set(rng, n, p);
    let a: Vec<Vec<f64>> = (0..k1).map(|_| nonzero_row(rng, p)).collect();
    let g: Vec<Vec<f64>> = (0..k2).map(|_| nonzero_row(rng, p)).collect();
    let lc = LinearConstraints::new(
        Matrix::from_rows(&a, p).unwrap(),
        (0..k1).map(|_| rng.random_range(-1.0..1.0)).collect(),
        Matrix::from_rows(&g, p).unwrap(),
        (0..k2).map(|_| rng.random_range(-1.0..1.0)).collect(),
    );
    DualProblem::new(ts, lc, Hyperparameters::new(1.0, 0.5)).expect("random instance is valid")
}

/// Arbitrary (not necessarily feasible) dual point.
pub fn random_theta<R: Rng + ?Sized>(rng: &mut R, total: usize) -> Vec<f64> {
    (0..total).map(|_| rng.random_range(0.0..0.5)).collect()
}
