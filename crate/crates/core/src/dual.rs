//! The dual of the linearly constrained ν-SVR.
//!
//! The dual variable is the stacked vector `θ = [α; α*; γ; μ]` of length
//! `2n + k₁ + k₂`. Its Hessian `Q̄` is the Gram matrix of the signed rows
//!
//! ```text
//! G = [ X ; −X ; A ; −Γ ]      Q̄ = G Gᵀ      l = [ y ; −y ; b ; −d ]
//! ```
//!
//! so every entry of `Q̄` is an inner product of two signed rows and the
//! matrix is never stored. The primal coefficients are `β = −Gᵀθ`, which
//! gives the cheap identities
//!
//! ```text
//! f(θ) = ½ θᵀQ̄θ + lᵀθ = ½‖β‖² + lᵀθ        ∇f(θ) = Q̄θ + l = l − Gβ
//! ```

use std::ops::Range;

use crate::error::ProblemError;
use crate::matrix::{axpy, dot};
use crate::problem::{validate_problem, Hyperparameters, LinearConstraints, TrainingSet};

/// The four variable blocks of `θ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    Alpha,
    AlphaStar,
    Gamma,
    Mu,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::Alpha, Block::AlphaStar, Block::Gamma, Block::Mu];

    pub fn as_str(self) -> &'static str {
        match self {
            Block::Alpha => "alpha",
            Block::AlphaStar => "alpha_star",
            Block::Gamma => "gamma",
            Block::Mu => "mu",
        }
    }
}

/// Index ranges of the blocks inside `θ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ThetaLayout {
    pub n: usize,
    pub k1: usize,
    pub k2: usize,
}

impl ThetaLayout {
    pub fn new(n: usize, k1: usize, k2: usize) -> Self {
        Self { n, k1, k2 }
    }

    #[inline]
    pub fn total(&self) -> usize {
        2 * self.n + self.k1 + self.k2
    }

    pub fn alpha(&self) -> Range<usize> {
        0..self.n
    }

    pub fn alpha_star(&self) -> Range<usize> {
        self.n..2 * self.n
    }

    pub fn gamma(&self) -> Range<usize> {
        2 * self.n..2 * self.n + self.k1
    }

    pub fn mu(&self) -> Range<usize> {
        2 * self.n + self.k1..self.total()
    }

    pub fn range(&self, block: Block) -> Range<usize> {
        match block {
            Block::Alpha => self.alpha(),
            Block::AlphaStar => self.alpha_star(),
            Block::Gamma => self.gamma(),
            Block::Mu => self.mu(),
        }
    }

    /// Block containing global index `i`, and the offset inside it.
    pub fn locate(&self, i: usize) -> (Block, usize) {
        assert!(i < self.total(), "index {i} out of range");
        Block::ALL
            .into_iter()
            .find_map(|b| {
                let r = self.range(b);
                r.contains(&i).then(|| (b, i - r.start))
            })
            .expect("layout ranges partition [0, total)")
    }
}

/// Immutable dual problem: data, constraints, hyperparameters, `l`, and the
/// cached diagonal of `Q̄`.
#[derive(Clone, Debug)]
pub struct DualProblem {
    ts: TrainingSet,
    lc: LinearConstraints,
    hp: Hyperparameters,
    layout: ThetaLayout,
    l: Vec<f64>,
    diag: Vec<f64>,
}

impl DualProblem {
    /// Validates and assembles the dual problem.
    pub fn new(
        ts: TrainingSet,
        lc: LinearConstraints,
        hp: Hyperparameters,
    ) -> Result<Self, ProblemError> {
        let violations = validate_problem(&ts, &lc, &hp);
        if !violations.is_empty() {
            return Err(ProblemError(violations));
        }
        let layout = ThetaLayout::new(ts.n_samples(), lc.n_inequalities(), lc.n_equalities());

        let mut l = Vec::with_capacity(layout.total());
        l.extend_from_slice(&ts.y);
        l.extend(ts.y.iter().map(|v| -v));
        l.extend_from_slice(&lc.b);
        l.extend(lc.d.iter().map(|v| -v));

        let mut dp = Self {
            ts,
            lc,
            hp,
            layout,
            l,
            diag: Vec::new(),
        };
        dp.diag = (0..layout.total())
            .map(|i| {
                let (_, r) = dp.signed_row(i);
                dot(r, r)
            })
            .collect();
        Ok(dp)
    }

    pub fn training_set(&self) -> &TrainingSet {
        &self.ts
    }

    pub fn constraints(&self) -> &LinearConstraints {
        &self.lc
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hp
    }

    pub fn layout(&self) -> ThetaLayout {
        self.layout
    }

    pub fn l(&self) -> &[f64] {
        &self.l
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn n_features(&self) -> usize {
        self.ts.n_features()
    }

    /// Upper bound `C/n` of the α and α* boxes.
    pub fn upper_bound(&self) -> f64 {
        self.hp.c / self.layout.n as f64
    }

    /// Effective iteration cap.
    pub fn max_iter(&self) -> usize {
        self.hp.max_iter.unwrap_or(100 * self.layout.total())
    }

    /// Row `i` of `G` as (sign, unsigned row).
    #[inline]
    pub fn signed_row(&self, i: usize) -> (f64, &[f64]) {
        let n = self.layout.n;
        let k1 = self.layout.k1;
        if i < n {
            (1.0, self.ts.x.row(i))
        } else if i < 2 * n {
            (-1.0, self.ts.x.row(i - n))
        } else if i < 2 * n + k1 {
            (1.0, self.lc.a.row(i - 2 * n))
        } else {
            (-1.0, self.lc.gamma.row(i - 2 * n - k1))
        }
    }

    /// `Q̄_ij` computed on demand.
    pub fn qbar_entry(&self, i: usize, j: usize) -> f64 {
        let (si, ri) = self.signed_row(i);
        let (sj, rj) = self.signed_row(j);
        si * sj * dot(ri, rj)
    }

    /// Column `j` of `Q̄` written into `out`.
    pub fn qbar_column(&self, j: usize, out: &mut [f64]) {
        assert_eq!(out.len(), self.layout.total());
        let (sj, rj) = self.signed_row(j);
        out.fill(0.0);
        let mut v = vec![0.0; self.n_features()];
        axpy(sj, rj, &mut v);
        self.add_generator_image(&v, 1.0, out);
    }

    /// `out += scale · G v` for a vector `v` in coefficient space.
    ///
    /// The α and α* entries share one inner product per sample.
    pub fn add_generator_image(&self, v: &[f64], scale: f64, out: &mut [f64]) {
        let n = self.layout.n;
        for i in 0..n {
            let g = scale * dot(self.ts.x.row(i), v);
            out[i] += g;
            out[n + i] -= g;
        }
        let off = 2 * n;
        for (j, row) in self.lc.a.iter_rows().enumerate() {
            out[off + j] += scale * dot(row, v);
        }
        let off = 2 * n + self.layout.k1;
        for (j, row) in self.lc.gamma.iter_rows().enumerate() {
            out[off + j] -= scale * dot(row, v);
        }
    }

    /// `β = −Σ(α_i − α*_i)X_i − Aᵀγ + Γᵀμ = −Gᵀθ`.
    pub fn recover_beta(&self, theta: &[f64]) -> Vec<f64> {
        assert_eq!(theta.len(), self.layout.total());
        let mut beta = vec![0.0; self.n_features()];
        for (i, &t) in theta.iter().enumerate() {
            if t != 0.0 {
                let (s, r) = self.signed_row(i);
                axpy(-s * t, r, &mut beta);
            }
        }
        beta
    }

    /// `½θᵀQ̄θ + lᵀθ`, evaluated as `½‖β‖² + lᵀθ`.
    pub fn objective(&self, theta: &[f64]) -> f64 {
        let beta = self.recover_beta(theta);
        0.5 * dot(&beta, &beta) + dot(&self.l, theta)
    }

    /// `Q̄θ + l`, evaluated as `l − Gβ`.
    pub fn gradient_full(&self, theta: &[f64]) -> Vec<f64> {
        let beta = self.recover_beta(theta);
        let mut g = self.l.clone();
        self.add_generator_image(&beta, -1.0, &mut g);
        g
    }

    /// Recovers the intercept and tube half-width from a (near-)optimal `θ`.
    ///
    /// The free multipliers pin the active tube constraints: for
    /// `0 < α_i < C/n`, `y_i − βᵀX_i = β₀ − ε`; for `0 < α*_i < C/n`,
    /// `y_i − βᵀX_i = β₀ + ε`. Each side is averaged over its free set; a side
    /// without free indices falls back to the midpoint of the interval its
    /// bounded multipliers allow. With no free index on either side the
    /// result is `β₀ = median(y − Xβ)`, `ε = 0`, flagged degenerate.
    pub fn recover_intercept_epsilon(&self, theta: &[f64], beta: &[f64]) -> InterceptEstimate {
        let n = self.layout.n;
        let ub = self.upper_bound();
        let residuals: Vec<f64> = (0..n)
            .map(|i| self.ts.y[i] - dot(beta, self.ts.x.row(i)))
            .collect();

        let alpha = &theta[self.layout.alpha()];
        let alpha_star = &theta[self.layout.alpha_star()];
        let side_alpha = side_level(alpha, residuals.iter().copied(), ub);
        let side_star = side_level(alpha_star, residuals.iter().map(|r| -r), ub);

        if !side_alpha.from_free && !side_star.from_free {
            return InterceptEstimate {
                beta0: median(&residuals),
                epsilon: 0.0,
                degenerate: true,
            };
        }
        let (ra, rs) = (side_alpha.level, side_star.level);
        InterceptEstimate {
            beta0: 0.5 * (ra - rs),
            epsilon: (-0.5 * (ra + rs)).max(0.0),
            degenerate: false,
        }
    }
}

/// Output of [`DualProblem::recover_intercept_epsilon`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterceptEstimate {
    pub beta0: f64,
    pub epsilon: f64,
    pub degenerate: bool,
}

struct SideLevel {
    level: f64,
    from_free: bool,
}

/// KKT level of one α block, given the gradient entries `grad` of that block.
fn side_level(vals: &[f64], grad: impl Iterator<Item = f64>, ub: f64) -> SideLevel {
    let (mut sum, mut count) = (0.0, 0usize);
    let mut lower = f64::NEG_INFINITY; // at the upper bound: grad ≤ level
    let mut upper = f64::INFINITY; // at zero: grad ≥ level
    for (&a, g) in vals.iter().zip(grad) {
        if a > 0.0 && a < ub {
            sum += g;
            count += 1;
        } else if a >= ub {
            lower = lower.max(g);
        } else {
            upper = upper.min(g);
        }
    }
    if count > 0 {
        return SideLevel {
            level: sum / count as f64,
            from_free: true,
        };
    }
    let level = match (lower.is_finite(), upper.is_finite()) {
        (true, true) => 0.5 * (lower + upper),
        (true, false) => lower,
        (false, true) => upper,
        (false, false) => 0.0,
    };
    SideLevel {
        level,
        from_free: false,
    }
}

pub(crate) fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Mutable solver state. `grad` and `objective` are maintained incrementally
/// and must match `gradient_full(theta)` / `objective(theta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualState {
    pub theta: Vec<f64>,
    pub grad: Vec<f64>,
    pub objective: f64,
}

impl DualState {
    /// State at an arbitrary `θ`, with gradient and objective computed fresh.
    pub fn at(dp: &DualProblem, theta: Vec<f64>) -> Self {
        let grad = dp.gradient_full(&theta);
        let objective = dp.objective(&theta);
        Self {
            theta,
            grad,
            objective,
        }
    }

    /// Maximum violation of the feasible set: box, `γ ≥ 0`, and the two
    /// equalities `eᵀ(α − α*) = 0`, `eᵀ(α + α*) = Cν`.
    pub fn feasibility(&self, dp: &DualProblem) -> Feasibility {
        let lay = dp.layout();
        let ub = dp.upper_bound();
        let mut bound = 0.0_f64;
        let (mut sa, mut ss) = (0.0, 0.0);
        for i in lay.alpha() {
            let a = self.theta[i];
            bound = bound.max(-a).max(a - ub);
            sa += a;
        }
        for i in lay.alpha_star() {
            let a = self.theta[i];
            bound = bound.max(-a).max(a - ub);
            ss += a;
        }
        for i in lay.gamma() {
            bound = bound.max(-self.theta[i]);
        }
        let hp = dp.hyperparameters();
        Feasibility {
            bound_violation: bound,
            balance_residual: (sa - ss).abs(),
            nu_residual: (sa + ss - hp.c * hp.nu).abs(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Feasibility {
    /// Largest excursion outside the box or below `γ ≥ 0` (0 when inside).
    pub bound_violation: f64,
    /// `|eᵀ(α − α*)|`
    pub balance_residual: f64,
    /// `|eᵀ(α + α*) − Cν|`
    pub nu_residual: f64,
}
