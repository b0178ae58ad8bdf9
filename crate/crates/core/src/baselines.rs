//! Reference solvers: an exhaustive active-set oracle for the constrained
//! dual, NNLS, simplex-constrained least squares, and PAVA.

use nalgebra::{DMatrix, DVector};

use crate::dual::DualProblem;
use crate::error::BaselineError;
use crate::matrix::Matrix;

/// Largest `2n + k₁ + k₂` the oracle accepts.
pub const ORACLE_MAX_TOTAL: usize = 24;

const BOUND_TOL: f64 = 1e-10;
const SIGN_TOL: f64 = 1e-9;
const STATIONARITY_TOL: f64 = 1e-8;
const JITTER: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarState {
    AtZero,
    AtUpper,
    Free,
}

/// Evidence that the oracle's point satisfies the KKT conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveSetCertificate {
    /// State of every α, α*, γ entry (μ is always free and omitted).
    pub pattern: Vec<VarState>,
    /// Multipliers of the two sum constraints `Σα = Cν/2`, `Σα* = Cν/2`.
    pub sum_multipliers: [f64; 2],
    /// Smallest multiplier of an active bound; must be ≥ −1e-9.
    pub min_multiplier: f64,
    /// Largest stationarity residual over free variables; must be ≤ 1e-8.
    pub stationarity: f64,
    pub objective: f64,
    /// The reduced system needed Tikhonov jitter.
    pub jittered: bool,
    /// Active sets solved before this one was certified.
    pub candidates_tried: usize,
}

impl ActiveSetCertificate {
    pub fn is_valid(&self) -> bool {
        self.min_multiplier >= -SIGN_TOL && self.stationarity <= STATIONARITY_TOL
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub theta: Vec<f64>,
    pub objective: f64,
    pub certificate: ActiveSetCertificate,
}

/// Exact solution of the dual by enumeration of active sets.
///
/// Every α/α*/γ entry is either at a bound or free; μ is always free. Sets
/// are tried in order of increasing free count, capped at `p + 3` (an
/// optimal vertex never needs more), and the first candidate whose KKT
/// certificate validates is returned. Convexity makes any certified point
/// globally optimal.
pub fn oracle_solve_dual(dp: &DualProblem) -> Result<OracleSolution, BaselineError> {
    let lay = dp.layout();
    if lay.total() > ORACLE_MAX_TOTAL {
        return Err(BaselineError::InstanceTooLarge {
            total: lay.total(),
            cap: ORACLE_MAX_TOTAL,
        });
    }
    let hp = dp.hyperparameters();
    let ub = dp.upper_bound();
    let half = hp.c * hp.nu / 2.0;
    let max_upper = ((half / ub) * (1.0 + 1e-12)).floor() as usize;
    let mut search = Search {
        dp,
        ub,
        half,
        max_upper,
        pattern: vec![VarState::AtZero; 2 * lay.n + lay.k1],
        tried: 0,
    };
    let cap = (dp.n_features() + 3).min(search.pattern.len());
    for free in 0..=cap {
        if let Some(sol) = search.descend(0, free, [0, 0]) {
            return Ok(sol);
        }
    }
    Err(BaselineError::NoFeasiblePoint)
}

struct Search<'a> {
    dp: &'a DualProblem,
    ub: f64,
    half: f64,
    max_upper: usize,
    pattern: Vec<VarState>,
    tried: usize,
}

impl Search<'_> {
    fn block_of(&self, pos: usize) -> Option<usize> {
        let n = self.dp.layout().n;
        (pos < 2 * n).then_some(pos / n)
    }

    fn descend(
        &mut self,
        pos: usize,
        free_left: usize,
        uppers: [usize; 2],
    ) -> Option<OracleSolution> {
        let len = self.pattern.len();
        if len - pos < free_left {
            return None;
        }
        if pos == len {
            return self.evaluate();
        }
        let block = self.block_of(pos);
        if free_left > 0 {
            self.pattern[pos] = VarState::Free;
            if let Some(s) = self.descend(pos + 1, free_left - 1, uppers) {
                return Some(s);
            }
        }
        self.pattern[pos] = VarState::AtZero;
        if let Some(s) = self.descend(pos + 1, free_left, uppers) {
            return Some(s);
        }
        if let Some(b) = block {
            if uppers[b] < self.max_upper {
                let mut u = uppers;
                u[b] += 1;
                self.pattern[pos] = VarState::AtUpper;
                if let Some(s) = self.descend(pos + 1, free_left, u) {
                    return Some(s);
                }
            }
        }
        self.pattern[pos] = VarState::AtZero;
        None
    }

    fn evaluate(&mut self) -> Option<OracleSolution> {
        let dp = self.dp;
        let lay = dp.layout();
        let n = lay.n;
        let total = lay.total();

        // Sum feasibility of each α block before solving anything.
        let mut free_in = [0usize; 2];
        let mut fixed_sum = [0.0; 2];
        for b in 0..2 {
            for s in &self.pattern[b * n..(b + 1) * n] {
                match s {
                    VarState::Free => free_in[b] += 1,
                    VarState::AtUpper => fixed_sum[b] += self.ub,
                    VarState::AtZero => {}
                }
            }
            let slack = self.half - fixed_sum[b];
            let tol = 1e-12 * self.half.max(1.0);
            if free_in[b] == 0 && slack.abs() > tol {
                return None;
            }
            if free_in[b] > 0 && slack <= tol {
                return None;
            }
        }

        let mut theta = vec![0.0; total];
        let mut free: Vec<usize> = Vec::new();
        for (i, s) in self.pattern.iter().enumerate() {
            match s {
                VarState::AtUpper => theta[i] = self.ub,
                VarState::Free => free.push(i),
                VarState::AtZero => {}
            }
        }
        free.extend(lay.mu());
        let grad_fixed = dp.gradient_full(&theta);

        // Unknowns: θ_F, then one sum multiplier per α block with free entries.
        let rho_slot: [Option<usize>; 2] = {
            let mut next = free.len();
            let mut slots = [None, None];
            for b in 0..2 {
                if free_in[b] > 0 {
                    slots[b] = Some(next);
                    next += 1;
                }
            }
            slots
        };
        let m = free.len() + rho_slot.iter().flatten().count();
        let mut k = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        for (r, &a) in free.iter().enumerate() {
            for (c, &b) in free.iter().enumerate().skip(r) {
                let q = dp.qbar_entry(a, b);
                k[(r, c)] = q;
                k[(c, r)] = q;
            }
            rhs[r] = -grad_fixed[a];
            if a < 2 * n {
                let slot = rho_slot[a / n].expect("free α has a multiplier slot");
                k[(r, slot)] = 1.0;
                k[(slot, r)] = 1.0;
            }
        }
        for b in 0..2 {
            if let Some(slot) = rho_slot[b] {
                rhs[slot] = self.half - fixed_sum[b];
            }
        }

        self.tried += 1;
        let mut jittered = false;
        let sol = if m == 0 {
            DVector::zeros(0)
        } else {
            match k
                .clone()
                .lu()
                .solve(&rhs)
                .filter(|s| s.iter().all(|v| v.is_finite()))
            {
                Some(s) => s,
                None => {
                    jittered = true;
                    for r in 0..free.len() {
                        k[(r, r)] += JITTER;
                    }
                    k.lu()
                        .solve(&rhs)
                        .filter(|s| s.iter().all(|v| v.is_finite()))?
                }
            }
        };

        for (r, &a) in free.iter().enumerate() {
            let v = sol[r];
            let ok = if a < 2 * n {
                v >= -BOUND_TOL && v <= self.ub + BOUND_TOL
            } else if a < lay.mu().start {
                v >= -BOUND_TOL
            } else {
                true
            };
            if !ok {
                return None;
            }
            theta[a] = v;
        }

        let grad = dp.gradient_full(&theta);
        let mut rho = [0.0; 2];
        for b in 0..2 {
            rho[b] = match rho_slot[b] {
                Some(slot) => sol[slot],
                None => {
                    // Any ρ in [max_{at 0} −∇, min_{at C/n} −∇] is admissible.
                    let mut lo = f64::NEG_INFINITY;
                    let mut hi = f64::INFINITY;
                    let block = b * n..(b + 1) * n;
                    for (state, &g) in self.pattern[block.clone()].iter().zip(&grad[block]) {
                        match state {
                            VarState::AtZero => lo = lo.max(-g),
                            VarState::AtUpper => hi = hi.min(-g),
                            VarState::Free => {}
                        }
                    }
                    match (lo.is_finite(), hi.is_finite()) {
                        (true, true) => 0.5 * (lo + hi),
                        (true, false) => lo,
                        (false, true) => hi,
                        (false, false) => 0.0,
                    }
                }
            };
        }

        let mut min_multiplier = f64::INFINITY;
        let mut stationarity = 0.0_f64;
        for (i, s) in self.pattern.iter().enumerate() {
            let reduced = if i < 2 * n {
                grad[i] + rho[i / n]
            } else {
                grad[i]
            };
            match s {
                VarState::AtZero => min_multiplier = min_multiplier.min(reduced),
                VarState::AtUpper => min_multiplier = min_multiplier.min(-reduced),
                VarState::Free => stationarity = stationarity.max(reduced.abs()),
            }
        }
        for i in lay.mu() {
            stationarity = stationarity.max(grad[i].abs());
        }
        let objective = dp.objective(&theta);
        let certificate = ActiveSetCertificate {
            pattern: self.pattern.clone(),
            sum_multipliers: rho,
            min_multiplier,
            stationarity,
            objective,
            jittered,
            candidates_tried: self.tried,
        };
        certificate.is_valid().then_some(OracleSolution {
            theta,
            objective,
            certificate,
        })
    }
}

fn to_dmatrix(x: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(x.rows(), x.cols(), x.as_slice())
}

/// Least squares `½‖y − Xβ‖²` subject to `β ≥ 0` (Lawson–Hanson).
pub fn nnls(x: &Matrix, y: &[f64]) -> Result<Vec<f64>, BaselineError> {
    active_set_ls(x, y, false)
}

/// Least squares subject to `β ≥ 0`, `Σβ = 1`.
pub fn sols(x: &Matrix, y: &[f64]) -> Result<Vec<f64>, BaselineError> {
    active_set_ls(x, y, true)
}

/// Primal active-set method on `½βᵀHβ − cᵀβ` with `H = XᵀX`, `c = Xᵀy`,
/// `β ≥ 0`, and optionally `eᵀβ = 1`.
fn active_set_ls(x: &Matrix, y: &[f64], on_simplex: bool) -> Result<Vec<f64>, BaselineError> {
    if x.rows() != y.len() {
        return Err(BaselineError::Dimension(format!(
            "X has {} rows, y has {} entries",
            x.rows(),
            y.len()
        )));
    }
    let p = x.cols();
    let xd = to_dmatrix(x);
    let h = xd.transpose() * &xd;
    let c = xd.transpose() * DVector::from_column_slice(y);
    let scale = h
        .iter()
        .chain(c.iter())
        .fold(1.0_f64, |m, v| m.max(v.abs()));
    let tol = 1e-11 * scale;
    let max_iter = 30 * (p + 1);

    let mut passive = vec![false; p];
    let mut beta = DVector::<f64>::zeros(p);
    if on_simplex {
        // Best vertex e_k as the feasible start.
        let k = (0..p)
            .min_by(|&a, &b| (0.5 * h[(a, a)] - c[a]).total_cmp(&(0.5 * h[(b, b)] - c[b])))
            .ok_or_else(|| BaselineError::Dimension("no columns".into()))?;
        passive[k] = true;
        beta[k] = 1.0;
    }

    for _ in 0..max_iter {
        let w = &c - &h * &beta;
        let lambda = if on_simplex {
            let (s, k) = (0..p)
                .filter(|&i| passive[i])
                .fold((0.0, 0usize), |(s, k), i| (s + w[i], k + 1));
            s / k as f64
        } else {
            0.0
        };
        let candidate = (0..p)
            .filter(|&i| !passive[i])
            .map(|i| (i, w[i] - lambda))
            .filter(|&(_, v)| v > tol)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        let Some((t, _)) = candidate else {
            return Ok(beta.iter().copied().collect());
        };
        passive[t] = true;

        for _ in 0..max_iter {
            let z = subproblem(&h, &c, &passive, on_simplex);
            let blocking = (0..p).filter(|&i| passive[i] && z[i] <= 0.0);
            let step = blocking
                .map(|i| beta[i] / (beta[i] - z[i]))
                .fold(f64::INFINITY, f64::min);
            if step.is_infinite() {
                beta = z;
                break;
            }
            beta += (z - &beta) * step;
            for i in 0..p {
                if passive[i] && beta[i] <= tol.min(1e-14) {
                    passive[i] = false;
                    beta[i] = 0.0;
                }
            }
            if on_simplex {
                // keep Σβ = 1 exact after zeroing tiny entries
                let s: f64 = beta.iter().sum();
                beta /= s;
            }
        }
    }
    Err(BaselineError::IterationCap(max_iter))
}

/// Minimizer of the quadratic on the passive coordinates, others fixed at 0.
fn subproblem(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    passive: &[bool],
    on_simplex: bool,
) -> DVector<f64> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    let m = idx.len() + usize::from(on_simplex);
    let mut k = DMatrix::<f64>::zeros(m, m);
    let mut r = DVector::<f64>::zeros(m);
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            k[(a, b)] = h[(i, j)];
        }
        r[a] = c[i];
        if on_simplex {
            k[(a, m - 1)] = 1.0;
            k[(m - 1, a)] = 1.0;
        }
    }
    if on_simplex {
        r[m - 1] = 1.0;
    }
    let sol = k
        .clone()
        .lu()
        .solve(&r)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| {
            k.svd(true, true)
                .solve(&r, 1e-14)
                .expect("svd with both factors")
        });
    let mut z = DVector::<f64>::zeros(passive.len());
    for (a, &i) in idx.iter().enumerate() {
        z[i] = sol[a];
    }
    z
}

/// Non-decreasing least-squares fit by pool-adjacent-violators.
pub fn pava_isotonic(y: &[f64]) -> Vec<f64> {
    // (sum, count) per pooled block
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (s2, c2) = blocks[blocks.len() - 1];
            let (s1, c1) = blocks[blocks.len() - 2];
            if s1 / c1 as f64 <= s2 / c2 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s1 + s2, c1 + c2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, c)| std::iter::repeat_n(s / c as f64, c))
        .collect()
}
