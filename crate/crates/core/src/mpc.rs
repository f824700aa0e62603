//! Receding-horizon controller with runtime checks of the closed-loop
//! guarantees.
//!
//! Each step solves the transcribed problem warm-started from the previous
//! solution shifted by one step (the steady pair appended at the end). The
//! shifted vector is itself a feasible candidate whose cost is exactly
//! `V_N(x_k) − ℓ(x_{0|k} − x_s, u_{0|k} − u_s)`, so the controller keeps
//! whichever of the solver output and the candidate is cheaper. A failed
//! solve falls back to the candidate; if the candidate is infeasible as well
//! the controller faults.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::clock::Stopwatch;
use crate::nlp::{
    minimize_bounded, solve_warm, KktResiduals, LbfgsOptions, NlpOptions, NlpProblem, SolveStatus, WarmStart,
};
use crate::ocp::{assemble_nlp, offset_cost, stage_cost, total_cost, CostWeights, OcpProblem, OcpSpec, TerminalMode};
use crate::path::{estimate_lipschitz_gp, lift};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub solver: NlpOptions,
    /// Relative allowance of the decrease checks: `tol = factor · (1 + V_N)`.
    pub monitor_tolerance: f64,
    /// Largest constraint violation for the shifted candidate to count as feasible.
    pub shift_tolerance: f64,
    pub cold_start_grid: usize,
    pub cold_start_relax: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            solver: NlpOptions {
                // solutions are shifted into the next candidate, which must
                // stay within shift_tolerance
                tol_feas: 1e-8,
                max_outer: 15,
                max_inner: 1000,
                ..NlpOptions::default()
            },
            monitor_tolerance: 1e-4,
            shift_tolerance: 1e-6,
            cold_start_grid: 200,
            cold_start_relax: 20,
        }
    }
}

/// Where the applied decision vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolutionSource {
    Solver,
    /// Shifted previous solution (better cost, or the solve failed).
    Shifted,
    /// Relaxed cold-start point at the first step.
    ColdStart,
}

impl std::fmt::Display for SolutionSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolutionSource::Solver => "solver",
            SolutionSource::Shifted => "shifted",
            SolutionSource::ColdStart => "cold-start",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub k: usize,
    pub state: Vec<f64>,
    pub input: Vec<f64>,
    /// `V_N(x_k)`, the cost of the applied decision vector.
    pub value: f64,
    pub s_star: Option<f64>,
    pub artificial_state: Vec<f64>,
    pub artificial_input: Vec<f64>,
    /// `ℓ(x_{0|k} − x_s, u_{0|k} − u_s)`.
    pub first_stage_cost: f64,
    /// `‖x_k − x_s‖`.
    pub tracking_gap: f64,
    /// `V_N − V_o(1 − s*)`; `None` in baseline mode.
    pub value_gap: Option<f64>,
    /// Lower bound on `V_N` from the quartic cost and the path's Lipschitz constant.
    pub value_lower_bound: Option<f64>,
    pub status: SolveStatus,
    pub source: SolutionSource,
    pub solver_objective: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub solve_time: f64,
    pub kkt: KktResiduals,
    /// Constraint violation of the warm-start candidate.
    pub candidate_violation: f64,
    pub candidate_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorVerdict {
    /// `V_N(x_k) − V_N(x_{k+1}) − ℓ(x_{0|k} − x_s*, u_{0|k} − u_s*)`.
    pub lyapunov_slack: f64,
    pub lyapunov_ok: bool,
    pub shift_violation: f64,
    pub shift_feasible_ok: bool,
    /// Change of `V_N − V_o(1 − s*)`; `None` in baseline mode.
    pub value_gap_change: Option<f64>,
    pub gap_trend_ok: bool,
    pub s_delta: Option<f64>,
    pub tracking_gap: f64,
    pub lower_bound_ok: bool,
    pub tolerance: f64,
}

impl MonitorVerdict {
    pub fn all_ok(&self) -> bool {
        self.lyapunov_ok && self.shift_feasible_ok && self.gap_trend_ok && self.lower_bound_ok
    }
}

/// Checks consecutive steps against the decrease conditions.
pub fn evaluate_monitors(prev: &StepDiagnostics, curr: &StepDiagnostics, config: &MpcConfig) -> MonitorVerdict {
    let tolerance = config.monitor_tolerance * (1.0 + prev.value);
    let lyapunov_slack = prev.value - curr.value - prev.first_stage_cost;
    let value_gap_change = prev.value_gap.zip(curr.value_gap).map(|(a, b)| b - a);
    let gap_trend_ok = match value_gap_change {
        Some(d) if curr.tracking_gap < prev.tracking_gap => d <= tolerance,
        _ => true,
    };
    MonitorVerdict {
        lyapunov_slack,
        lyapunov_ok: lyapunov_slack >= -tolerance,
        shift_violation: curr.candidate_violation,
        shift_feasible_ok: curr.candidate_violation <= config.shift_tolerance,
        value_gap_change,
        gap_trend_ok,
        s_delta: prev.s_star.zip(curr.s_star).map(|(a, b)| b - a),
        tracking_gap: curr.tracking_gap,
        lower_bound_ok: curr.value_lower_bound.is_none_or(|lb| curr.value >= lb - tolerance),
        tolerance,
    }
}

/// `α(r/2)` with `α(r) = min(c r⁴, w (r/L)²)`, a lower bound on `V_N` at
/// distance `r` from the target.
///
/// Either `‖x − x_s‖ ≥ r/2`, and the first stage term is at least `c (r/2)⁴`,
/// or `‖x_s − x_T‖ ≥ r/2`, and then `1 − s ≥ r/(2L)` bounds the offset term.
pub fn value_lower_bound(weights: &CostWeights, offset_weight: f64, lipschitz: f64, r: f64) -> f64 {
    let half = 0.5 * r;
    (weights.quartic_bound() * half.powi(4)).min(offset_weight * (half / lipschitz).powi(2))
}

/// Largest violation of equalities, inequalities and variable bounds at `z`.
pub fn constraint_violation<P: NlpProblem + ?Sized>(problem: &P, z: &[f64]) -> f64 {
    let mut ce = vec![0.0; problem.num_equalities()];
    problem.equalities(z, &mut ce);
    let mut ci = vec![0.0; problem.num_inequalities()];
    problem.inequalities(z, &mut ci);
    let (lo, hi) = problem.variable_bounds();
    let bounds = z
        .iter()
        .zip(lo.iter().zip(&hi))
        .fold(0.0f64, |m, (v, (l, h))| m.max(l - v).max(v - h));
    let v = ce
        .iter()
        .map(|c| c.abs())
        .chain(ci.iter().map(|c| -c))
        .fold(bounds, f64::max);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v.max(0.0)
    }
}

fn position(spec: &OcpSpec, x: &[f64]) -> [f64; 2] {
    let g = spec.model.configuration(&DVector::from_column_slice(x));
    [g[0], g[1]]
}

/// Writes the best-face certificate for the position of `x_l` into every `μ_{l,i}`.
fn fill_certificates(spec: &OcpSpec, z: &mut [f64], levels: std::ops::RangeInclusive<usize>) {
    let lay = spec.layout();
    for l in levels {
        let p = position(spec, &z[lay.state(l)..lay.state(l) + lay.n]);
        for (o, obs) in spec.obstacles.iter().enumerate() {
            let values = obs.face_values(p);
            let best = (0..values.len()).fold(0, |b, j| if values[j] > values[b] { j } else { b });
            let start = lay.mu(l, o);
            for j in 0..values.len() {
                z[start + j] = if j == best { 1.0 } else { 0.0 };
            }
        }
    }
}

/// Previous solution shifted by one step with the steady pair `(x_N, u_N)`
/// repeated at the end. `s` is kept; the last certificates are re-derived.
pub fn shift_warm_start(spec: &OcpSpec, prev: &[f64]) -> Vec<f64> {
    let lay = spec.layout();
    let (n, m, big_n) = (lay.n, lay.m, lay.horizon);
    let mut z = prev.to_vec();
    for l in 0..big_n {
        z.copy_within(lay.input(l + 1)..lay.input(l + 1) + m, lay.input(l));
        z.copy_within(lay.state(l + 1)..lay.state(l + 1) + n, lay.state(l));
    }
    if lay.num_obstacles() > 0 {
        for l in 1..big_n {
            let len = lay.mu(l + 1, 0) - lay.mu(l, 0);
            z.copy_within(lay.mu(l + 1, 0)..lay.mu(l + 1, 0) + len, lay.mu(l, 0));
        }
        fill_certificates(spec, &mut z, big_n..=big_n);
    }
    z
}

/// Multipliers of the previous solve moved along with [`shift_warm_start`]:
/// each stage row takes the value of the row one step later, and the last
/// stage repeats the steady-state row.
pub fn shift_multipliers(spec: &OcpSpec, warm: &WarmStart) -> WarmStart {
    let lay = spec.layout();
    let (n, big_n, no) = (lay.n, lay.horizon, lay.num_obstacles());
    let mut eq = warm.equality_multipliers.clone();
    if eq.len() == lay.num_equalities() {
        // n-blocks: initial condition, N dynamics stages, steady state
        eq.copy_within(n..(big_n + 2) * n, 0);
        let norm = lay.num_equalities() - big_n * no;
        eq.copy_within(norm + no.., norm);
    }
    let mut ineq = warm.inequality_multipliers.clone();
    if ineq.len() == lay.num_inequalities() {
        ineq.copy_within(no.., 0);
    }
    WarmStart {
        equality_multipliers: eq,
        inequality_multipliers: ineq,
        penalty: warm.penalty,
    }
}

/// Initial decision vector at `x0`: the path point nearest to `x0` on a grid,
/// the state held at `x0` with zero input, then a few iterations reducing the
/// equality residuals.
pub fn cold_start(spec: &OcpSpec, x0: &[f64], config: &MpcConfig) -> Result<Vec<f64>> {
    let lay = spec.layout();
    if x0.len() != lay.n || !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "cold start needs a finite state of dimension {}",
            lay.n
        )));
    }
    let p = position(spec, x0);
    for (i, obs) in spec.obstacles.iter().enumerate() {
        if obs.certificate_exists(p, spec.delta_sep).is_none() {
            return Err(Error::InitialInfeasible(format!(
                "start ({:.4}, {:.4}) is within the separation margin of obstacle {i}",
                p[0], p[1]
            )));
        }
    }
    let problem = assemble_nlp(spec, x0)?;
    let (lo, hi) = problem.variable_bounds();
    let mut z = vec![0.0; lay.len()];
    for l in 0..=lay.horizon {
        z[lay.state(l)..lay.state(l) + lay.n].copy_from_slice(x0);
        for j in 0..lay.m {
            let k = lay.input(l) + j;
            z[k] = 0.0f64.clamp(lo[k], hi[k]);
        }
    }
    if let Some(si) = lay.s() {
        z[si] = nearest_progress(spec, x0, config.cold_start_grid.max(2));
    }
    fill_certificates(spec, &mut z, 1..=lay.horizon);

    if config.cold_start_relax > 0 {
        let me = problem.num_equalities();
        let pattern = problem.equality_jacobian_pattern();
        let mut c = vec![0.0; me];
        let mut jac = vec![0.0; pattern.nnz()];
        let residual = |w: &[f64], g: &mut [f64]| -> Result<f64> {
            problem.equalities(w, &mut c);
            problem.equality_jacobian(w, &mut jac);
            g.iter_mut().for_each(|v| *v = 0.0);
            pattern.add_transpose_product(&jac, &c, g);
            let f = 0.5 * c.iter().map(|v| v * v).sum::<f64>();
            if f.is_finite() {
                Ok(f)
            } else {
                Err(Error::NonFiniteCallback("cold-start residual"))
            }
        };
        let opts = LbfgsOptions {
            max_iterations: config.cold_start_relax,
            tolerance: 1e-12,
            ..LbfgsOptions::default()
        };
        z = minimize_bounded(residual, &z, &lo, &hi, &opts)?.x;
        fill_certificates(spec, &mut z, 1..=lay.horizon);
    }
    Ok(z)
}

/// Grid argmin of `‖x0 − lift(s)‖` over `grid` equally spaced `s ∈ [0, 1]`.
pub fn nearest_progress(spec: &OcpSpec, x0: &[f64], grid: usize) -> f64 {
    let x = DVector::from_column_slice(x0);
    let mut best = (0.0, f64::INFINITY);
    for i in 0..grid {
        let s = i as f64 / (grid - 1) as f64;
        let d = (&x - lift(spec.model.as_ref(), spec.path.as_ref(), s).0).norm();
        if d < best.1 {
            best = (s, d);
        }
    }
    best.0
}

struct Stored {
    z: Vec<f64>,
    warm: WarmStart,
}

/// Stateful controller for one closed-loop run.
pub struct Controller {
    spec: OcpSpec,
    config: MpcConfig,
    last: Option<Stored>,
    k: usize,
    target_state: DVector<f64>,
    lipschitz: Option<f64>,
}

impl Controller {
    pub fn new(spec: OcpSpec, config: MpcConfig) -> Result<Self> {
        spec.validate()?;
        let model = spec.model.as_ref();
        let (target_state, lipschitz) = match &spec.mode {
            TerminalMode::Proposed => (
                lift(model, spec.path.as_ref(), 1.0).0,
                Some(estimate_lipschitz_gp(model, spec.path.as_ref(), 1000)?),
            ),
            TerminalMode::Baseline { target } => (model.steady_state(target).0, None),
        };
        Ok(Self {
            spec,
            config,
            last: None,
            k: 0,
            target_state,
            lipschitz,
        })
    }

    pub fn spec(&self) -> &OcpSpec {
        &self.spec
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    /// Steady state the controller should converge to.
    pub fn target_state(&self) -> &[f64] {
        self.target_state.as_slice()
    }

    /// Decision vector applied at the most recent step.
    pub fn last_solution(&self) -> Option<&[f64]> {
        self.last.as_ref().map(|s| s.z.as_slice())
    }

    pub fn steps_taken(&self) -> usize {
        self.k
    }

    pub fn reset(&mut self) {
        self.last = None;
        self.k = 0;
    }

    fn diagnostics(&self, problem: &OcpProblem, z: &[f64], x: &[f64], source: SolutionSource) -> StepDiagnostics {
        let lay = problem.layout();
        let (n, m, big_n) = (lay.n, lay.m, lay.horizon);
        let xs = &z[lay.state(big_n)..lay.state(big_n) + n];
        let us = &z[lay.input(big_n)..lay.input(big_n) + m];
        let value = total_cost(z, &self.spec);
        let s_star = lay.s().map(|i| z[i]);
        let tracking_gap = x.iter().zip(xs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let target_dist = x
            .iter()
            .zip(self.target_state.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        StepDiagnostics {
            k: self.k,
            state: x.to_vec(),
            input: z[lay.input(0)..lay.input(0) + m].to_vec(),
            value,
            s_star,
            artificial_state: xs.to_vec(),
            artificial_input: us.to_vec(),
            first_stage_cost: stage_cost(&z[lay.state(0)..lay.state(0) + n], &z[..m], xs, us, &self.spec.weights),
            tracking_gap,
            value_gap: s_star.map(|s| value - offset_cost(s, self.spec.offset_weight)),
            value_lower_bound: self
                .lipschitz
                .map(|l| value_lower_bound(&self.spec.weights, self.spec.offset_weight, l, target_dist)),
            status: SolveStatus::Converged,
            source,
            solver_objective: f64::NAN,
            outer_iterations: 0,
            inner_iterations: 0,
            solve_time: 0.0,
            kkt: KktResiduals::default(),
            candidate_violation: 0.0,
            candidate_cost: f64::NAN,
        }
    }

    /// One controller step at the measured state `x`: returns the input to
    /// apply and the step's diagnostics.
    pub fn step(&mut self, x: &[f64]) -> Result<(Vec<f64>, StepDiagnostics)> {
        let problem = assemble_nlp(&self.spec, x)?;
        let (candidate, source) = match &self.last {
            Some(prev) => (shift_warm_start(&self.spec, &prev.z), SolutionSource::Shifted),
            None => (cold_start(&self.spec, x, &self.config)?, SolutionSource::ColdStart),
        };
        let candidate_violation = constraint_violation(&problem, &candidate);
        let candidate_cost = problem.objective(&candidate);
        let candidate_ok = candidate_violation <= self.config.shift_tolerance;

        let clock = Stopwatch::start();
        let warm = self.last.as_ref().map(|p| shift_multipliers(&self.spec, &p.warm));
        let sol = solve_warm(&problem, &candidate, warm.as_ref(), &self.config.solver)
            .map_err(|e| Error::ControllerFault(format!("step {}: solver error: {e}", self.k)))?;
        let solve_time = clock.elapsed_secs();

        let solver_ok =
            sol.status != SolveStatus::InfeasibleDetected && sol.kkt.feasibility() <= self.config.solver.tol_feas;
        let (z, used) = if solver_ok && (!candidate_ok || sol.objective <= candidate_cost) {
            (sol.z.clone(), SolutionSource::Solver)
        } else if candidate_ok {
            (candidate, source)
        } else if self.last.is_none() {
            return Err(Error::InitialInfeasible(format!(
                "no feasible point at the initial state (solver {}, feasibility {:.3e})",
                sol.status,
                sol.kkt.feasibility()
            )));
        } else {
            return Err(Error::ControllerFault(format!(
                "step {}: solver {} with feasibility {:.3e} and shifted candidate violating constraints by {:.3e}",
                self.k,
                sol.status,
                sol.kkt.feasibility(),
                candidate_violation
            )));
        };

        let mut diag = self.diagnostics(&problem, &z, x, used);
        diag.status = sol.status;
        diag.solver_objective = sol.objective;
        diag.outer_iterations = sol.outer_iterations;
        diag.inner_iterations = sol.inner_iterations;
        diag.solve_time = solve_time;
        diag.kkt = sol.kkt;
        diag.candidate_violation = candidate_violation;
        diag.candidate_cost = candidate_cost;

        let mut u = diag.input.clone();
        self.spec.input_bounds.clamp(&mut u);
        self.last = Some(Stored {
            z,
            warm: WarmStart {
                equality_multipliers: sol.equality_multipliers,
                inequality_multipliers: sol.inequality_multipliers,
                // the penalty restarts: carried-over penalties only ratchet up
                penalty: self.config.solver.initial_penalty,
            },
        });
        self.k += 1;
        Ok((u, diag))
    }
}

/// Proposed controller step; see [`Controller::step`].
pub fn mpc_step(controller: &mut Controller, x: &[f64]) -> Result<(Vec<f64>, StepDiagnostics)> {
    controller.step(x)
}

/// Step of the target-tracking baseline, which replaces path anchoring by an
/// offset cost toward the fixed target.
pub fn baseline_tracking_step(controller: &mut Controller, x: &[f64]) -> Result<(Vec<f64>, StepDiagnostics)> {
    if !matches!(controller.spec.mode, TerminalMode::Baseline { .. }) {
        return Err(Error::InvalidArgument(
            "controller is not configured in baseline mode".into(),
        ));
    }
    controller.step(x)
}
