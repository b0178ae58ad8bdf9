//! Estimator presets (SVR, NNSVR, SSVR, ISVR), projection baselines, and the
//! flat-text model format.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::dual::{DualProblem, DualState};
use crate::error::{FitError, ModelFormatError};
use crate::gsmo::{solve, SolveReport, SolverOptions};
use crate::matrix::{dot, Matrix};
use crate::problem::{Hyperparameters, LinearConstraints, PrimalSolution, TrainingSet};

/// Constraint families with a closed-form builder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PresetKind {
    /// No constraints.
    Svr,
    /// `β ≥ 0`
    Nnsvr,
    /// `β ≥ 0`, `Σβ = 1`
    Ssvr,
    /// `β₁ ≤ β₂ ≤ … ≤ β_p`
    Isvr,
    /// `β₁ ≥ β₂ ≥ … ≥ β_p`
    IsvrDecreasing,
}

/// Label stored with a fitted model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Preset(PresetKind),
    /// SVR projected onto the positive orthant.
    ProjectedOrthant,
    /// SVR projected onto the simplex (Cibersort-style).
    ProjectedSimplex,
    /// User-supplied `(A, b, Γ, d)`.
    Custom,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Preset(PresetKind::Svr) => "svr",
            ModelKind::Preset(PresetKind::Nnsvr) => "nnsvr",
            ModelKind::Preset(PresetKind::Ssvr) => "ssvr",
            ModelKind::Preset(PresetKind::Isvr) => "isvr",
            ModelKind::Preset(PresetKind::IsvrDecreasing) => "isvr-decreasing",
            ModelKind::ProjectedOrthant => "p-svr",
            ModelKind::ProjectedSimplex => "cibersort",
            ModelKind::Custom => "custom",
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "svr" => ModelKind::Preset(PresetKind::Svr),
            "nnsvr" => ModelKind::Preset(PresetKind::Nnsvr),
            "ssvr" => ModelKind::Preset(PresetKind::Ssvr),
            "isvr" => ModelKind::Preset(PresetKind::Isvr),
            "isvr-decreasing" => ModelKind::Preset(PresetKind::IsvrDecreasing),
            "p-svr" => ModelKind::ProjectedOrthant,
            "cibersort" => ModelKind::ProjectedSimplex,
            "custom" => ModelKind::Custom,
            other => return Err(format!("unknown model kind '{other}'")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionTarget {
    PositiveOrthant,
    Simplex,
}

/// Builds `(A, b, Γ, d)` for a preset. Isotonic presets need `p ≥ 2`.
pub fn make_constraints(kind: PresetKind, p: usize) -> Result<LinearConstraints, FitError> {
    let neg_identity = || {
        let mut a = Matrix::identity(p);
        a.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
        a
    };
    Ok(match kind {
        PresetKind::Svr => LinearConstraints::none(p),
        PresetKind::Nnsvr => {
            LinearConstraints::new(neg_identity(), vec![0.0; p], Matrix::zeros(0, p), vec![])
        }
        PresetKind::Ssvr => LinearConstraints::new(
            neg_identity(),
            vec![0.0; p],
            Matrix::from_row_major(1, p, vec![1.0; p]).unwrap(),
            vec![1.0],
        ),
        PresetKind::Isvr | PresetKind::IsvrDecreasing => {
            if p < 2 {
                return Err(FitError::TooFewFeatures { p, min: 2 });
            }
            let sign = if kind == PresetKind::Isvr { 1.0 } else { -1.0 };
            let mut a = Matrix::zeros(p - 1, p);
            for i in 0..p - 1 {
                a[(i, i)] = sign;
                a[(i, i + 1)] = -sign;
            }
            LinearConstraints::new(a, vec![0.0; p - 1], Matrix::zeros(0, p), vec![])
        }
    })
}

/// A fitted linear model.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedModel {
    pub kind: ModelKind,
    pub hyperparameters: Hyperparameters,
    pub solution: PrimalSolution,
    /// Dual objective at the returned point (NaN for loaded models).
    pub dual_objective: f64,
    /// `None` for models read from disk.
    pub report: Option<SolveReport>,
}

impl FittedModel {
    pub fn beta(&self) -> &[f64] {
        &self.solution.beta
    }

    pub fn n_features(&self) -> usize {
        self.solution.beta.len()
    }

    /// `Xβ + β₀` for each row of `x`.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, FitError> {
        if x.cols() != self.n_features() {
            return Err(FitError::Dimension {
                expected: self.n_features(),
                found: x.cols(),
            });
        }
        Ok(x.iter_rows()
            .map(|r| dot(r, &self.solution.beta) + self.solution.beta0)
            .collect())
    }

    /// Flat-text serialization; floats use shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let hp = &self.hyperparameters;
        let mut s = String::new();
        writeln!(s, "[meta]").unwrap();
        writeln!(s, "kind={}", self.kind.as_str()).unwrap();
        writeln!(s, "C={}", hp.c).unwrap();
        writeln!(s, "nu={}", hp.nu).unwrap();
        writeln!(s, "tau={}", hp.tau).unwrap();
        writeln!(s, "[beta]").unwrap();
        for b in &self.solution.beta {
            writeln!(s, "{b}").unwrap();
        }
        writeln!(s, "[intercept]").unwrap();
        writeln!(s, "{}", self.solution.beta0).unwrap();
        writeln!(s, "[epsilon]").unwrap();
        writeln!(s, "{}", self.solution.epsilon).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ModelFormatError> {
        #[derive(PartialEq)]
        enum Sec {
            None,
            Meta,
            Beta,
            Intercept,
            Epsilon,
        }
        let mut sec = Sec::None;
        let mut seen = [false; 4];
        let mut kind = None;
        let (mut c, mut nu, mut tau) = (None, None, None);
        let mut beta = Vec::new();
        let (mut beta0, mut epsilon) = (None, None);

        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let line_no = ln + 1;
            let err = |msg: String| ModelFormatError::Parse { line: line_no, msg };
            if line.is_empty() {
                continue;
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| err(format!("not a number: '{s}'")))
            };
            match line {
                "[meta]" => (sec, seen[0]) = (Sec::Meta, true),
                "[beta]" => (sec, seen[1]) = (Sec::Beta, true),
                "[intercept]" => (sec, seen[2]) = (Sec::Intercept, true),
                "[epsilon]" => (sec, seen[3]) = (Sec::Epsilon, true),
                _ => match sec {
                    Sec::None => return Err(err("content before first section".into())),
                    Sec::Meta => {
                        let (k, v) = line
                            .split_once('=')
                            .ok_or_else(|| err(format!("expected key=value, got '{line}'")))?;
                        match k.trim() {
                            "kind" => kind = Some(v.trim().parse::<ModelKind>().map_err(err)?),
                            "C" => c = Some(num(v)?),
                            "nu" => nu = Some(num(v)?),
                            "tau" => tau = Some(num(v)?),
                            other => return Err(err(format!("unknown key '{other}'"))),
                        }
                    }
                    Sec::Beta => beta.push(num(line)?),
                    Sec::Intercept if beta0.is_none() => beta0 = Some(num(line)?),
                    Sec::Epsilon if epsilon.is_none() => epsilon = Some(num(line)?),
                    _ => return Err(err("extra value in scalar section".into())),
                },
            }
        }
        for (flag, name) in seen.iter().zip(["meta", "beta", "intercept", "epsilon"]) {
            if !flag {
                return Err(ModelFormatError::MissingSection(name));
            }
        }
        let kind = kind.ok_or(ModelFormatError::MissingSection("meta: kind"))?;
        let c = c.ok_or(ModelFormatError::MissingSection("meta: C"))?;
        let nu = nu.ok_or(ModelFormatError::MissingSection("meta: nu"))?;
        let tau = tau.ok_or(ModelFormatError::MissingSection("meta: tau"))?;
        Ok(FittedModel {
            kind,
            hyperparameters: Hyperparameters::new(c, nu).with_tau(tau),
            solution: PrimalSolution {
                beta,
                beta0: beta0.ok_or(ModelFormatError::MissingSection("intercept"))?,
                epsilon: epsilon.ok_or(ModelFormatError::MissingSection("epsilon"))?,
                support: Vec::new(),
                degenerate_intercept: false,
            },
            dual_objective: f64::NAN,
            report: None,
        })
    }
}

/// Primal `(β, β₀, ε)` and support flags from a dual point.
pub fn primal_from_dual(dp: &DualProblem, state: &DualState) -> PrimalSolution {
    let beta = dp.recover_beta(&state.theta);
    let est = dp.recover_intercept_epsilon(&state.theta, &beta);
    let lay = dp.layout();
    let support = lay
        .alpha()
        .zip(lay.alpha_star())
        .map(|(i, j)| state.theta[i] != state.theta[j])
        .collect();
    PrimalSolution {
        beta,
        beta0: est.beta0,
        epsilon: est.epsilon,
        support,
        degenerate_intercept: est.degenerate,
    }
}

/// Fits one of the preset estimators.
pub fn fit(
    ts: TrainingSet,
    kind: PresetKind,
    hp: Hyperparameters,
) -> Result<FittedModel, FitError> {
    let lc = make_constraints(kind, ts.n_features())?;
    fit_with_constraints(
        ts,
        lc,
        hp,
        ModelKind::Preset(kind),
        &SolverOptions::default(),
    )
}

/// Fits with arbitrary constraints. The caller guarantees the polyhedron is
/// non-empty; otherwise the solve ends at the iteration cap with
/// `divergence_suspected` set.
pub fn fit_with_constraints(
    ts: TrainingSet,
    lc: LinearConstraints,
    hp: Hyperparameters,
    kind: ModelKind,
    options: &SolverOptions,
) -> Result<FittedModel, FitError> {
    let dp = DualProblem::new(ts, lc, hp)?;
    let (state, report) = solve(&dp, options)?;
    Ok(FittedModel {
        kind,
        hyperparameters: hp,
        solution: primal_from_dual(&dp, &state),
        dual_objective: state.objective,
        report: Some(report),
    })
}

/// Unconstrained SVR followed by projection of `β`; the intercept is then
/// re-estimated against the projected coefficients.
pub fn fit_projected(
    ts: TrainingSet,
    hp: Hyperparameters,
    target: ProjectionTarget,
) -> Result<FittedModel, FitError> {
    let p = ts.n_features();
    let dp = DualProblem::new(ts, LinearConstraints::none(p), hp)?;
    let (state, report) = solve(&dp, &SolverOptions::default())?;
    let mut solution = primal_from_dual(&dp, &state);
    solution.beta = match target {
        ProjectionTarget::PositiveOrthant => solution.beta.iter().map(|b| b.max(0.0)).collect(),
        ProjectionTarget::Simplex => project_simplex(&solution.beta),
    };
    let est = dp.recover_intercept_epsilon(&state.theta, &solution.beta);
    solution.beta0 = est.beta0;
    solution.epsilon = est.epsilon;
    solution.degenerate_intercept = est.degenerate;
    Ok(FittedModel {
        kind: match target {
            ProjectionTarget::PositiveOrthant => ModelKind::ProjectedOrthant,
            ProjectionTarget::Simplex => ModelKind::ProjectedSimplex,
        },
        hyperparameters: hp,
        solution,
        dual_objective: state.objective,
        report: Some(report),
    })
}

/// Euclidean projection onto `{x ≥ 0, Σx = 1}` (sort and threshold).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}
