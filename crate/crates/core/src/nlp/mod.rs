//! Smooth constrained optimization.
//!
//! Problems have the form
//!
//! ```text
//! min f(z)  s.t.  c_E(z) = 0,  c_I(z) ≥ 0,  l ≤ z ≤ u
//! ```
//!
//! and are solved by an augmented-Lagrangian method. Inequalities receive
//! slacks `t ≥ 0` so that every general constraint becomes an equality
//! `c(z, t) = 0`; the bound-constrained subproblems
//!
//! ```text
//! min f(z) + λᵀc(z, t) + ρ/2 ‖c(z, t)‖²  s.t.  l ≤ z ≤ u, t ≥ 0
//! ```
//!
//! are handled by the projected L-BFGS in [`lbfgs`]. Multipliers follow the
//! first-order update `λ ← λ + ρ c`; the penalty grows tenfold whenever the
//! constraint violation fails to shrink by a factor of four.

pub mod dense;
pub mod lbfgs;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use dense::DenseProblem;
pub use lbfgs::{minimize_bounded, LbfgsOptions, LbfgsResult, LbfgsStatus};

/// Coordinate-format sparsity structure of a Jacobian.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparsityPattern {
    pub nrows: usize,
    pub ncols: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

impl SparsityPattern {
    pub fn nnz(&self) -> usize {
        self.rows.len()
    }

    /// `out += Jᵀ v`.
    pub fn add_transpose_product(&self, values: &[f64], v: &[f64], out: &mut [f64]) {
        for ((r, c), val) in self.rows.iter().zip(&self.cols).zip(values) {
            out[*c] += val * v[*r];
        }
    }

    pub fn to_dense(&self, values: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for ((r, c), val) in self.rows.iter().zip(&self.cols).zip(values) {
            m[(*r, *c)] += val;
        }
        m
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.rows.iter().zip(&self.cols).any(|(r, c)| *r == row && *c == col)
    }
}

/// A smooth NLP with sparse constraint Jacobians. Inequalities follow the
/// `c_I(z) ≥ 0` convention. Callbacks must be deterministic.
pub trait NlpProblem {
    fn num_variables(&self) -> usize;
    fn num_equalities(&self) -> usize;
    fn num_inequalities(&self) -> usize;

    /// `(lower, upper)`; infinite entries mean no bound.
    fn variable_bounds(&self) -> (Vec<f64>, Vec<f64>);

    fn objective(&self, z: &[f64]) -> f64;
    fn objective_gradient(&self, z: &[f64], grad: &mut [f64]);

    fn equalities(&self, z: &[f64], out: &mut [f64]);
    fn equality_jacobian_pattern(&self) -> SparsityPattern;
    fn equality_jacobian(&self, z: &[f64], values: &mut [f64]);

    fn inequalities(&self, z: &[f64], out: &mut [f64]);
    fn inequality_jacobian_pattern(&self) -> SparsityPattern;
    fn inequality_jacobian(&self, z: &[f64], values: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NlpOptions {
    pub tol_stat: f64,
    pub tol_feas: f64,
    pub tol_comp: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub memory: usize,
    pub initial_penalty: f64,
    pub penalty_factor: f64,
    /// Required shrink factor of the violation between outer iterations.
    pub feasibility_ratio: f64,
    pub max_penalty: f64,
    /// Inner tolerance used in the first outer iteration.
    pub initial_inner_tol: f64,
}

impl Default for NlpOptions {
    fn default() -> Self {
        Self {
            tol_stat: 1e-6,
            tol_feas: 1e-6,
            tol_comp: 1e-6,
            max_outer: 50,
            max_inner: 500,
            memory: 10,
            initial_penalty: 10.0,
            penalty_factor: 10.0,
            feasibility_ratio: 0.25,
            max_penalty: 1e10,
            initial_inner_tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    InfeasibleDetected,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max-iter",
            SolveStatus::InfeasibleDetected => "infeasible-detected",
        })
    }
}

/// First-order optimality measures, all in the infinity norm.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct KktResiduals {
    /// `‖z − P(z − (∇f + J_Eᵀλ − J_Iᵀν))‖`.
    pub stationarity: f64,
    pub equality_violation: f64,
    /// Largest `max(0, −c_I)` or bound violation.
    pub inequality_violation: f64,
    /// `max |ν_i c_I,i|` together with any negative `ν_i`.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn feasibility(&self) -> f64 {
        self.equality_violation.max(self.inequality_violation)
    }

    pub fn satisfies(&self, options: &NlpOptions) -> bool {
        self.stationarity <= options.tol_stat
            && self.feasibility() <= options.tol_feas
            && self.complementarity <= options.tol_comp
    }
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub z: Vec<f64>,
    pub equality_multipliers: Vec<f64>,
    /// `ν ≥ 0` for `c_I(z) ≥ 0`.
    pub inequality_multipliers: Vec<f64>,
    pub objective: f64,
    pub kkt: KktResiduals,
    pub status: SolveStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub penalty: f64,
}

fn finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteCallback(what))
    }
}

/// KKT residuals of `problem` at `z` for multipliers `(λ, ν)`.
pub fn kkt_residuals<P: NlpProblem + ?Sized>(
    problem: &P,
    z: &[f64],
    equality_multipliers: &[f64],
    inequality_multipliers: &[f64],
) -> Result<KktResiduals> {
    let n = problem.num_variables();
    let (me, mi) = (problem.num_equalities(), problem.num_inequalities());
    for (len, expected, context) in [
        (z.len(), n, "kkt point"),
        (equality_multipliers.len(), me, "equality multipliers"),
        (inequality_multipliers.len(), mi, "inequality multipliers"),
    ] {
        if len != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: len,
                context,
            });
        }
    }
    let (lower, upper) = problem.variable_bounds();
    let mut grad = vec![0.0; n];
    problem.objective_gradient(z, &mut grad);
    let mut ce = vec![0.0; me];
    problem.equalities(z, &mut ce);
    let mut ci = vec![0.0; mi];
    problem.inequalities(z, &mut ci);

    let pe = problem.equality_jacobian_pattern();
    let mut je = vec![0.0; pe.nnz()];
    problem.equality_jacobian(z, &mut je);
    pe.add_transpose_product(&je, equality_multipliers, &mut grad);

    let pi = problem.inequality_jacobian_pattern();
    let mut ji = vec![0.0; pi.nnz()];
    problem.inequality_jacobian(z, &mut ji);
    let neg_nu: Vec<f64> = inequality_multipliers.iter().map(|v| -v).collect();
    pi.add_transpose_product(&ji, &neg_nu, &mut grad);

    let bound_violation = z
        .iter()
        .zip(lower.iter().zip(&upper))
        .map(|(v, (lo, hi))| (lo - v).max(v - hi).max(0.0))
        .fold(0.0, f64::max);
    let mut clipped = z.to_vec();
    for (v, (lo, hi)) in clipped.iter_mut().zip(lower.iter().zip(&upper)) {
        *v = v.clamp(*lo, *hi);
    }

    Ok(KktResiduals {
        stationarity: lbfgs::projected_gradient_norm(&clipped, &grad, &lower, &upper),
        equality_violation: ce.iter().fold(0.0, |m, v| m.max(v.abs())),
        inequality_violation: ci.iter().fold(bound_violation, |m, v| m.max(-v)),
        complementarity: ci
            .iter()
            .zip(inequality_multipliers)
            .fold(0.0, |m, (c, nu)| m.max((c * nu).abs()).max(-nu)),
    })
}

/// Augmented Lagrangian over `w = (z, t)`.
struct Merit<'a, P: NlpProblem + ?Sized> {
    problem: &'a P,
    n: usize,
    me: usize,
    mi: usize,
    eq_pattern: SparsityPattern,
    ineq_pattern: SparsityPattern,
    lambda: Vec<f64>,
    rho: f64,
    // scratch
    ce: Vec<f64>,
    ci: Vec<f64>,
    je: Vec<f64>,
    ji: Vec<f64>,
}

impl<P: NlpProblem + ?Sized> Merit<'_, P> {
    /// Writes `c(w) = (c_E(z), c_I(z) − t)` into `out`.
    fn constraints(&mut self, w: &[f64], out: &mut [f64]) -> Result<()> {
        let z = &w[..self.n];
        self.problem.equalities(z, &mut self.ce);
        finite(&self.ce, "equality constraints")?;
        self.problem.inequalities(z, &mut self.ci);
        finite(&self.ci, "inequality constraints")?;
        out[..self.me].copy_from_slice(&self.ce);
        for i in 0..self.mi {
            out[self.me + i] = self.ci[i] - w[self.n + i];
        }
        Ok(())
    }

    fn value_and_gradient(&mut self, w: &[f64], grad: &mut [f64]) -> Result<f64> {
        let n = self.n;
        let z = &w[..n];
        let f = self.problem.objective(z);
        if !f.is_finite() {
            return Err(Error::NonFiniteCallback("objective"));
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        self.problem.objective_gradient(z, &mut grad[..n]);
        finite(&grad[..n], "objective gradient")?;

        let mut c = vec![0.0; self.me + self.mi];
        self.constraints(w, &mut c)?;
        let mut value = f;
        let shifted: Vec<f64> = c
            .iter()
            .zip(&self.lambda)
            .map(|(ci, li)| {
                value += li * ci + 0.5 * self.rho * ci * ci;
                li + self.rho * ci
            })
            .collect();

        self.problem.equality_jacobian(z, &mut self.je);
        finite(&self.je, "equality jacobian")?;
        self.eq_pattern
            .add_transpose_product(&self.je, &shifted[..self.me], &mut grad[..n]);
        self.problem.inequality_jacobian(z, &mut self.ji);
        finite(&self.ji, "inequality jacobian")?;
        self.ineq_pattern
            .add_transpose_product(&self.ji, &shifted[self.me..], &mut grad[..n]);
        for i in 0..self.mi {
            grad[n + i] = -shifted[self.me + i];
        }
        Ok(value)
    }
}

/// Upper limit of the objective-scaled starting penalty.
const SCALED_PENALTY_CAP: f64 = 1e8;

/// Dual information carried over from a related solve.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub equality_multipliers: Vec<f64>,
    pub inequality_multipliers: Vec<f64>,
    /// Lower limit for the starting penalty.
    pub penalty: f64,
}

/// Solves `problem` from `z0` with zero initial multipliers.
pub fn solve<P: NlpProblem + ?Sized>(problem: &P, z0: &[f64], options: &NlpOptions) -> Result<NlpSolution> {
    solve_warm(problem, z0, None, options)
}

/// Solves `problem` from `z0`, optionally seeding multipliers and penalty.
/// Multipliers of the wrong length are ignored.
pub fn solve_warm<P: NlpProblem + ?Sized>(
    problem: &P,
    z0: &[f64],
    warm: Option<&WarmStart>,
    options: &NlpOptions,
) -> Result<NlpSolution> {
    let n = problem.num_variables();
    let (me, mi) = (problem.num_equalities(), problem.num_inequalities());
    if z0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: z0.len(),
            context: "initial point",
        });
    }
    let (zl, zu) = problem.variable_bounds();
    let mut lower = zl.clone();
    let mut upper = zu.clone();
    lower.extend(std::iter::repeat_n(0.0, mi));
    upper.extend(std::iter::repeat_n(f64::INFINITY, mi));

    let eq_pattern = problem.equality_jacobian_pattern();
    let ineq_pattern = problem.inequality_jacobian_pattern();
    let mut lambda = vec![0.0; me + mi];
    let mut rho = options.initial_penalty;
    if let Some(w) = warm {
        if w.equality_multipliers.len() == me && w.inequality_multipliers.len() == mi {
            lambda[..me].copy_from_slice(&w.equality_multipliers);
            for (l, v) in lambda[me..].iter_mut().zip(&w.inequality_multipliers) {
                *l = -v;
            }
        }
    }
    let mut w: Vec<f64> = z0
        .iter()
        .zip(zl.iter().zip(&zu))
        .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
        .collect();
    let mut ci0 = vec![0.0; mi];
    problem.inequalities(&w, &mut ci0);
    finite(&ci0, "inequality constraints")?;
    // scale the starting penalty to the objective so that a large cost
    // cannot simply buy constraint violation
    {
        let f0 = problem.objective(&w);
        if !f0.is_finite() {
            return Err(Error::NonFiniteCallback("objective"));
        }
        let mut ce0 = vec![0.0; me];
        problem.equalities(&w, &mut ce0);
        finite(&ce0, "equality constraints")?;
        let sq: f64 = ce0.iter().chain(ci0.iter().filter(|v| **v < 0.0)).map(|v| v * v).sum();
        let scaled = (10.0 * f0.abs().max(1.0) / (0.5 * sq).max(1.0)).min(SCALED_PENALTY_CAP);
        rho = rho.max(scaled);
    }
    if let Some(penalty) = warm.map(|w| w.penalty).filter(|p| p.is_finite()) {
        rho = rho.max(penalty);
    }
    rho = rho.min(options.max_penalty);
    let mut merit = Merit {
        problem,
        n,
        me,
        mi,
        je: vec![0.0; eq_pattern.nnz()],
        ji: vec![0.0; ineq_pattern.nnz()],
        eq_pattern,
        ineq_pattern,
        lambda,
        rho,
        ce: vec![0.0; me],
        ci: vec![0.0; mi],
    };

    w.extend(ci0.iter().map(|c| c.max(0.0)));

    let mut c = vec![0.0; me + mi];
    // a warm start point can be nearly feasible; only subproblem results count
    let mut prev_violation = f64::INFINITY;
    let mut inner_tol = options.initial_inner_tol.max(options.tol_stat);
    let mut inner_iterations = 0;
    let mut status = SolveStatus::MaxIterations;
    let mut outer_iterations = 0;
    let mut kkt = KktResiduals::default();

    let equality_multipliers = |lambda: &[f64]| lambda[..me].to_vec();
    let inequality_multipliers = |lambda: &[f64]| lambda[me..].iter().map(|l| -l).collect::<Vec<f64>>();

    for outer in 1..=options.max_outer {
        outer_iterations = outer;
        let inner_options = LbfgsOptions {
            memory: options.memory,
            max_iterations: options.max_inner,
            tolerance: inner_tol,
            ..LbfgsOptions::default()
        };
        let result = minimize_bounded(
            |x: &[f64], g: &mut [f64]| merit.value_and_gradient(x, g),
            &w,
            &lower,
            &upper,
            &inner_options,
        )?;
        inner_iterations += result.iterations;
        w = result.x;

        merit.constraints(&w, &mut c)?;
        let violation = c.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        for (l, ci) in merit.lambda.iter_mut().zip(&c) {
            *l += merit.rho * ci;
        }
        kkt = kkt_residuals(
            problem,
            &w[..n],
            &equality_multipliers(&merit.lambda),
            &inequality_multipliers(&merit.lambda),
        )?;
        if kkt.satisfies(options) {
            status = SolveStatus::Converged;
            break;
        }
        if violation > options.feasibility_ratio * prev_violation && violation > options.tol_feas {
            if merit.rho >= options.max_penalty {
                status = SolveStatus::InfeasibleDetected;
                break;
            }
            merit.rho = (merit.rho * options.penalty_factor).min(options.max_penalty);
        }
        prev_violation = violation;
        inner_tol = (inner_tol * 0.1).max(options.tol_stat * 0.1);
    }

    let z = w[..n].to_vec();
    Ok(NlpSolution {
        objective: problem.objective(&z),
        equality_multipliers: equality_multipliers(&merit.lambda),
        inequality_multipliers: inequality_multipliers(&merit.lambda),
        z,
        kkt,
        status,
        outer_iterations,
        inner_iterations,
        penalty: merit.rho,
    })
}
