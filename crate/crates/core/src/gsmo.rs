//! Generalized SMO for the constrained dual.
//!
//! Each iteration scores the four blocks, picks the block with the largest
//! violation (ties go to the lower block), and applies a closed-form update:
//! a clipped two-variable step inside α or α*, or a one-variable Newton step
//! on γ (clipped at 0) or μ. The gradient `Q̄θ + l` is maintained
//! incrementally and re-validated against a fresh evaluation every
//! `2n + k₁ + k₂` iterations and before convergence is declared.

use crate::dual::{Block, DualProblem, DualState};
use crate::error::SolveError;
use crate::matrix::{axpy, max_abs};

/// How the γ block is scored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GammaRule {
    /// `max_j` of the projected-gradient violation: `−∇_j` when `γ_j = 0`,
    /// `|∇_j|` when `γ_j > 0`. Detects multipliers that should shrink.
    #[default]
    Projected,
    /// `−min_j ∇_j` only. Misses `γ_j > 0` with a positive gradient, so it
    /// can stop at a non-optimal point.
    NegativeGradient,
}

#[derive(Clone, Debug, Default)]
pub struct SolverOptions {
    pub record_trajectory: bool,
    pub gamma_rule: GammaRule,
    /// Iterations between full gradient recomputations (default: `total`).
    pub recheck_interval: Option<usize>,
}

impl SolverOptions {
    pub fn traced() -> Self {
        Self {
            record_trajectory: true,
            ..Self::default()
        }
    }
}

/// Per-block violation scores and their witnesses (block-local indices).
#[derive(Clone, Debug, PartialEq)]
pub struct ViolationScores {
    pub delta: [f64; 4],
    /// `(i, j)`: `i = argmin_{I_up} ∇`, `j = argmax_{I_low} ∇`.
    pub alpha_pair: Option<(usize, usize)>,
    pub alpha_star_pair: Option<(usize, usize)>,
    pub gamma_index: Option<usize>,
    pub mu_index: Option<usize>,
}

impl ViolationScores {
    /// Largest score and its block; ties resolve to the lowest block.
    pub fn best(&self) -> (Block, f64) {
        let mut best = (Block::Alpha, self.delta[0]);
        for (b, &d) in Block::ALL.iter().zip(&self.delta).skip(1) {
            if d > best.1 {
                best = (*b, d);
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.best().1
    }
}

/// Feasible starting point: `α_i = α*_i = Cν/(2n)`, `γ = 0`, `μ = 0`.
pub fn initialize(dp: &DualProblem) -> DualState {
    let lay = dp.layout();
    let hp = dp.hyperparameters();
    let start = hp.c * hp.nu / (2.0 * lay.n as f64);
    let mut theta = vec![0.0; lay.total()];
    theta[..2 * lay.n].fill(start);
    DualState::at(dp, theta)
}

fn pair_scores(vals: &[f64], grad: &[f64], ub: f64) -> (f64, Option<(usize, usize)>) {
    let mut up: Option<usize> = None;
    let mut low: Option<usize> = None;
    for (k, (&a, &g)) in vals.iter().zip(grad).enumerate() {
        if a < ub && up.is_none_or(|i| g < grad[i]) {
            up = Some(k);
        }
        if a > 0.0 && low.is_none_or(|j| g > grad[j]) {
            low = Some(k);
        }
    }
    match (up, low) {
        (Some(i), Some(j)) => (grad[j] - grad[i], Some((i, j))),
        _ => (f64::NEG_INFINITY, None),
    }
}

/// Computes the four block scores from the state's maintained gradient.
pub fn compute_scores(dp: &DualProblem, state: &DualState, rule: GammaRule) -> ViolationScores {
    scores_for(dp, &state.theta, &state.grad, rule)
}

/// Same as [`compute_scores`] for an explicit `(θ, ∇f)`.
pub fn scores_for(
    dp: &DualProblem,
    theta: &[f64],
    grad: &[f64],
    rule: GammaRule,
) -> ViolationScores {
    let lay = dp.layout();
    let ub = dp.upper_bound();
    let (d1, alpha_pair) = pair_scores(&theta[lay.alpha()], &grad[lay.alpha()], ub);
    let (d2, alpha_star_pair) = pair_scores(&theta[lay.alpha_star()], &grad[lay.alpha_star()], ub);

    let mut d3 = f64::NEG_INFINITY;
    let mut gamma_index = None;
    let gr = lay.gamma();
    for (k, (&g, &v)) in grad[gr.clone()].iter().zip(&theta[gr]).enumerate() {
        let score = match rule {
            GammaRule::NegativeGradient => -g,
            GammaRule::Projected if v > 0.0 => g.abs(),
            GammaRule::Projected => -g,
        };
        if score > d3 {
            d3 = score;
            gamma_index = Some(k);
        }
    }

    let mut d4 = f64::NEG_INFINITY;
    let mut mu_index = None;
    for (k, &g) in grad[lay.mu()].iter().enumerate() {
        if g.abs() > d4 {
            d4 = g.abs();
            mu_index = Some(k);
        }
    }

    ViolationScores {
        delta: [d1, d2, d3, d4],
        alpha_pair,
        alpha_star_pair,
        gamma_index,
        mu_index,
    }
}

/// Clipped step on `(α_i, α_j)` (or the starred pair), block-local indices.
///
/// Moves `α_i += t*`, `α_j −= t*` with
/// `t* = min(max(I₁, t_q), I₂)`, `t_q = −(∇_i − ∇_j)/(Q_ii − 2Q_ij + Q_jj)`,
/// `I₁ = max(−α_i, α_j − C/n)`, `I₂ = min(α_j, C/n − α_i)`.
/// Clipped coordinates are written to the exact bound value. Returns the
/// realized step on `α_i`.
pub fn alpha_pair_update(
    dp: &DualProblem,
    state: &mut DualState,
    block: Block,
    i: usize,
    j: usize,
) -> Result<f64, SolveError> {
    let lay = dp.layout();
    let off = match block {
        Block::Alpha => lay.alpha().start,
        Block::AlphaStar => lay.alpha_star().start,
        _ => panic!("alpha_pair_update on {block:?}"),
    };
    let (gi_idx, gj_idx) = (off + i, off + j);
    let ub = dp.upper_bound();
    let ai = state.theta[gi_idx];
    let aj = state.theta[gj_idx];
    let gi = state.grad[gi_idx];
    let gj = state.grad[gj_idx];
    let qij = dp.qbar_entry(gi_idx, gj_idx);
    let curvature = dp.diag()[gi_idx] + dp.diag()[gj_idx] - 2.0 * qij;
    if curvature <= 0.0 {
        return Err(SolveError::ZeroCurvature { i, j });
    }

    let t_q = -(gi - gj) / curvature;
    let lo = (-ai).max(aj - ub);
    let hi = aj.min(ub - ai);
    let t = t_q.max(lo).min(hi);
    if t == 0.0 {
        return Err(SolveError::NotViolating { i, j });
    }

    let (mut new_i, mut new_j) = if t == hi {
        if aj <= ub - ai {
            (ai + aj, 0.0)
        } else {
            (ub, aj - (ub - ai))
        }
    } else if t == lo {
        if -ai >= aj - ub {
            (0.0, aj + ai)
        } else {
            (ai - (ub - aj), ub)
        }
    } else {
        (ai + t, aj - t)
    };
    new_i = new_i.clamp(0.0, ub);
    new_j = new_j.clamp(0.0, ub);

    let di = new_i - ai;
    let dj = new_j - aj;
    state.theta[gi_idx] = new_i;
    state.theta[gj_idx] = new_j;
    state.objective += 0.5
        * (di * di * dp.diag()[gi_idx] + 2.0 * di * dj * qij + dj * dj * dp.diag()[gj_idx])
        + di * gi
        + dj * gj;

    let mut v = vec![0.0; dp.n_features()];
    let (si, ri) = dp.signed_row(gi_idx);
    let (sj, rj) = dp.signed_row(gj_idx);
    axpy(si * di, ri, &mut v);
    axpy(sj * dj, rj, &mut v);
    dp.add_generator_image(&v, 1.0, &mut state.grad);
    Ok(di)
}

fn coordinate_step(dp: &DualProblem, state: &mut DualState, idx: usize, new: f64) {
    let old = state.theta[idx];
    let delta = new - old;
    if delta == 0.0 {
        return;
    }
    let g = state.grad[idx];
    state.theta[idx] = new;
    state.objective += 0.5 * delta * delta * dp.diag()[idx] + delta * g;
    let (s, r) = dp.signed_row(idx);
    let mut v = vec![0.0; dp.n_features()];
    axpy(s * delta, r, &mut v);
    dp.add_generator_image(&v, 1.0, &mut state.grad);
}

/// `γ_u ← max(γ_u − ∇_{γ_u}f/(AAᵀ)_uu, 0)`. Returns the new value.
pub fn gamma_update(dp: &DualProblem, state: &mut DualState, u: usize) -> f64 {
    let idx = dp.layout().gamma().start + u;
    let new = (state.theta[idx] - state.grad[idx] / dp.diag()[idx]).max(0.0);
    coordinate_step(dp, state, idx, new);
    new
}

/// `μ_u ← μ_u − ∇_{μ_u}f/(ΓΓᵀ)_uu`. Returns the new value.
pub fn mu_update(dp: &DualProblem, state: &mut DualState, u: usize) -> f64 {
    let idx = dp.layout().mu().start + u;
    let new = state.theta[idx] - state.grad[idx] / dp.diag()[idx];
    coordinate_step(dp, state, idx, new);
    new
}

/// Whether block-local pair `(i, j)` of an α block is τ-violating.
pub fn pair_is_violating(
    dp: &DualProblem,
    theta: &[f64],
    grad: &[f64],
    block: Block,
    i: usize,
    j: usize,
    tau: f64,
) -> bool {
    let off = dp.layout().range(block).start;
    let ub = dp.upper_bound();
    let (ai, aj) = (theta[off + i], theta[off + j]);
    let (gi, gj) = (grad[off + i], grad[off + j]);
    let up = |a: f64| a < ub;
    let low = |a: f64| a > 0.0;
    (up(ai) && low(aj) && gi < gj - tau) || (low(ai) && up(aj) && gi > gj + tau)
}

/// Whether coordinate `u` of the γ or μ block is τ-violating.
pub fn coordinate_is_violating(
    dp: &DualProblem,
    theta: &[f64],
    grad: &[f64],
    block: Block,
    u: usize,
    tau: f64,
    rule: GammaRule,
) -> bool {
    let idx = dp.layout().range(block).start + u;
    let g = grad[idx];
    match block {
        Block::Gamma => match rule {
            GammaRule::Projected if theta[idx] > 0.0 => g.abs() > tau,
            _ => g + tau < 0.0,
        },
        Block::Mu => g.abs() > tau,
        _ => panic!("coordinate_is_violating on {block:?}"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    IterationCap,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::IterationCap => "iteration_cap",
        }
    }
}

/// One trajectory sample: the state before the update at `iteration`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub iteration: usize,
    pub objective: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub termination: Termination,
    pub final_delta: f64,
    pub final_objective: f64,
    pub trajectory: Option<Vec<TrajectoryPoint>>,
    /// Updates per block, in [`Block::ALL`] order.
    pub block_updates: [usize; 4],
    /// Relative drift `‖∇_maintained − ∇_fresh‖∞ / max(1, ‖∇_fresh‖∞)` at
    /// every scheduled recheck.
    pub drift_checks: Vec<f64>,
    /// Iteration cap hit while the γ/μ multipliers were still growing, the
    /// signature of an empty constraint polyhedron.
    pub divergence_suspected: bool,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    /// `iteration,objective,delta` rows with a header line.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("iteration,objective,delta\n");
        for p in self.trajectory.iter().flatten() {
            out.push_str(&format!("{},{},{}\n", p.iteration, p.objective, p.delta));
        }
        out
    }
}

/// What was updated at one iteration; passed to solve observers.
pub struct IterationEvent<'a> {
    /// 1-based count of completed updates.
    pub iteration: usize,
    pub block: Block,
    /// Block-local index of the updated variable (first of the pair).
    pub first: usize,
    /// Second index for α/α* pair updates.
    pub second: Option<usize>,
    pub delta_before: f64,
    pub objective_before: f64,
    pub state: &'a DualState,
}

/// Runs GSMO to convergence or the iteration cap.
pub fn solve(
    dp: &DualProblem,
    options: &SolverOptions,
) -> Result<(DualState, SolveReport), SolveError> {
    solve_observed(dp, options, |_| {})
}

/// [`solve`] with a callback after every update.
pub fn solve_observed<F>(
    dp: &DualProblem,
    options: &SolverOptions,
    mut observer: F,
) -> Result<(DualState, SolveReport), SolveError>
where
    F: FnMut(&IterationEvent<'_>),
{
    let tau = dp.hyperparameters().tau;
    let max_iter = dp.max_iter();
    let lay = dp.layout();
    let recheck = options.recheck_interval.unwrap_or(lay.total()).max(1);
    let rule = options.gamma_rule;

    let mut state = initialize(dp);
    let mut trajectory = options.record_trajectory.then(Vec::new);
    let mut block_updates = [0usize; 4];
    let mut drift_checks = Vec::new();
    let mut multipliers_at_half = None;
    let mut k = 0usize;

    let (termination, final_delta) = loop {
        let mut scores = compute_scores(dp, &state, rule);
        let (mut block, mut delta) = scores.best();
        if delta <= tau {
            drift_checks.push(refresh(dp, &mut state));
            scores = compute_scores(dp, &state, rule);
            (block, delta) = scores.best();
            if delta <= tau {
                break (Termination::Converged, delta);
            }
        }
        if k >= max_iter {
            break (Termination::IterationCap, delta);
        }
        if k == max_iter / 2 {
            multipliers_at_half = Some(multiplier_norm(dp, &state));
        }
        if let Some(t) = trajectory.as_mut() {
            t.push(TrajectoryPoint {
                iteration: k,
                objective: state.objective,
                delta,
            });
        }

        let objective_before = state.objective;
        let (first, second) = match block {
            Block::Alpha | Block::AlphaStar => {
                let (i, j) = if block == Block::Alpha {
                    scores.alpha_pair
                } else {
                    scores.alpha_star_pair
                }
                .expect("finite pair score has a witness");
                alpha_pair_update(dp, &mut state, block, i, j)?;
                (i, Some(j))
            }
            Block::Gamma => {
                let u = scores
                    .gamma_index
                    .expect("finite gamma score has a witness");
                gamma_update(dp, &mut state, u);
                (u, None)
            }
            Block::Mu => {
                let u = scores.mu_index.expect("finite mu score has a witness");
                mu_update(dp, &mut state, u);
                (u, None)
            }
        };
        k += 1;
        block_updates[block_slot(block)] += 1;
        observer(&IterationEvent {
            iteration: k,
            block,
            first,
            second,
            delta_before: delta,
            objective_before,
            state: &state,
        });
        if k.is_multiple_of(recheck) {
            drift_checks.push(refresh(dp, &mut state));
        }
    };

    if let Some(t) = trajectory.as_mut() {
        t.push(TrajectoryPoint {
            iteration: k,
            objective: state.objective,
            delta: final_delta,
        });
    }
    let divergence_suspected = termination == Termination::IterationCap
        && multipliers_at_half.is_some_and(|half| {
            let end = multiplier_norm(dp, &state);
            end > 1.0 && end > 1.5 * half
        });
    let report = SolveReport {
        iterations: k,
        termination,
        final_delta,
        final_objective: state.objective,
        trajectory,
        block_updates,
        drift_checks,
        divergence_suspected,
    };
    Ok((state, report))
}

fn block_slot(b: Block) -> usize {
    match b {
        Block::Alpha => 0,
        Block::AlphaStar => 1,
        Block::Gamma => 2,
        Block::Mu => 3,
    }
}

fn multiplier_norm(dp: &DualProblem, state: &DualState) -> f64 {
    let lay = dp.layout();
    max_abs(&state.theta[lay.gamma().start..lay.total()])
}

/// Replaces the maintained gradient and objective with fresh values and
/// returns the relative gradient drift.
fn refresh(dp: &DualProblem, state: &mut DualState) -> f64 {
    let fresh = dp.gradient_full(&state.theta);
    let drift = state
        .grad
        .iter()
        .zip(&fresh)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let drift = drift / max_abs(&fresh).max(1.0);
    state.grad = fresh;
    state.objective = dp.objective(&state.theta);
    drift
}
