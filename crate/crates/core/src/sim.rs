//! Closed-loop simulation, horizon sweeps and the Lie-bracket experiment.

use nalgebra::DVector;
use serde::Serialize;

use crate::dynamics::{rk4_step, DynamicsModel, InputBounds};
use crate::geometry::min_clearance;
use crate::mpc::{evaluate_monitors, Controller, MonitorVerdict, SolutionSource, StepDiagnostics};
use crate::nlp::SolveStatus;
use crate::ocp::{stage_cost, CostWeights};
use crate::path::check_path_clearance;
use crate::scenario::{Prepared, Scenario};
use crate::{Error, Result};

pub mod report;

/// Samples used to check the reference path before a run.
const CLEARANCE_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "message")]
pub enum Outcome {
    Success,
    Timeout,
    Fault(String),
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::Success => f.write_str("success"),
            Outcome::Timeout => f.write_str("timeout"),
            Outcome::Fault(m) => write!(f, "fault: {m}"),
        }
    }
}

/// One closed-loop step.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub k: usize,
    pub state: Vec<f64>,
    /// Input applied to the plant.
    pub input: Vec<f64>,
    pub value: f64,
    pub s_star: Option<f64>,
    pub tracking_gap: f64,
    pub value_gap: Option<f64>,
    pub status: SolveStatus,
    pub source: SolutionSource,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub solve_time: f64,
    pub stationarity: f64,
    pub feasibility: f64,
    pub candidate_violation: f64,
    /// Smallest `max_i(A_i p − b_i)` over the (inflated) obstacles at `state`.
    pub margin: f64,
    /// Checks against the previous step; `None` at `k = 0`.
    pub monitors: Option<MonitorVerdict>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MonitorCounts {
    pub lyapunov: usize,
    pub shift_feasibility: usize,
    pub gap_trend: usize,
    pub lower_bound: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub outcome: Outcome,
    pub steps: usize,
    pub steps_to_target: Option<usize>,
    pub path_length: f64,
    pub min_obstacle_margin: f64,
    pub final_distance: f64,
    pub final_heading_error: f64,
    pub final_s: Option<f64>,
    /// `Σ ℓ(x_k − x_T, u_k)` over the run.
    pub closed_loop_cost: f64,
    pub monitor_failures: MonitorCounts,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopLog {
    pub name: String,
    pub rows: Vec<LogRow>,
    /// Decision vector applied at each step.
    pub solutions: Vec<Vec<f64>>,
    /// State after the last applied input.
    pub final_state: Vec<f64>,
    pub target_state: Vec<f64>,
    pub summary: Summary,
}

impl ClosedLoopLog {
    /// Visited positions including the final one.
    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.rows
            .iter()
            .map(|r| [r.state[0], r.state[1]])
            .chain(std::iter::once([self.final_state[0], self.final_state[1]]))
            .collect()
    }
}

fn wrap_angle(a: f64) -> f64 {
    let t = a.rem_euclid(2.0 * std::f64::consts::PI);
    if t > std::f64::consts::PI {
        t - 2.0 * std::f64::consts::PI
    } else {
        t
    }
}

fn distance_and_heading(x: &[f64], target: &[f64]) -> (f64, f64) {
    (
        (x[0] - target[0]).hypot(x[1] - target[1]),
        wrap_angle(x[2] - target[2]).abs(),
    )
}

/// Runs the scenario's controller against the nominal plant.
pub fn run_closed_loop(scenario: &Scenario) -> Result<ClosedLoopLog> {
    let prepared = scenario.prepare()?;
    run_prepared(scenario, &prepared)
}

/// [`run_closed_loop`] for an already prepared scenario.
pub fn run_prepared(scenario: &Scenario, prepared: &Prepared) -> Result<ClosedLoopLog> {
    let spec = &prepared.spec;
    let report = check_path_clearance(
        spec.model.as_ref(),
        spec.path.as_ref(),
        &spec.input_bounds,
        &spec.obstacles,
        spec.delta_sep,
        spec.step,
        CLEARANCE_SAMPLES,
    )?;
    if !report.passed() {
        let first = &report.violations[0];
        return Err(Error::Scenario(format!(
            "reference path fails the clearance check at {} points (first at s = {:.4}: {:?})",
            report.violations.len(),
            first.s,
            first.kind
        )));
    }

    let mut controller = Controller::new(spec.clone(), prepared.config)?;
    let target = prepared.target_state.as_slice().to_vec();
    let term = &scenario.termination;
    let mut x = prepared.initial_state.clone();
    let mut rows: Vec<LogRow> = Vec::new();
    let mut solutions = Vec::new();
    let mut prev: Option<StepDiagnostics> = None;
    let outcome = loop {
        let (dist, heading) = distance_and_heading(x.as_slice(), &target);
        if dist <= term.position_tolerance && heading <= term.heading_tolerance {
            break Outcome::Success;
        }
        if rows.len() >= term.max_steps {
            break Outcome::Timeout;
        }
        let (u, diag) = match controller.step(x.as_slice()) {
            Ok(r) => r,
            Err(e @ (Error::ControllerFault(_) | Error::InitialInfeasible(_))) => break Outcome::Fault(e.to_string()),
            Err(e) => return Err(e),
        };
        let monitors = prev.as_ref().map(|p| evaluate_monitors(p, &diag, controller.config()));
        let p = spec.model.configuration(&x);
        rows.push(LogRow {
            k: diag.k,
            state: x.as_slice().to_vec(),
            input: u.clone(),
            value: diag.value,
            s_star: diag.s_star,
            tracking_gap: diag.tracking_gap,
            value_gap: diag.value_gap,
            status: diag.status,
            source: diag.source,
            outer_iterations: diag.outer_iterations,
            inner_iterations: diag.inner_iterations,
            solve_time: diag.solve_time,
            stationarity: diag.kkt.stationarity,
            feasibility: diag.kkt.feasibility(),
            candidate_violation: diag.candidate_violation,
            margin: min_clearance(&spec.obstacles, [p[0], p[1]]),
            monitors,
        });
        solutions.push(controller.last_solution().map(<[f64]>::to_vec).unwrap_or_default());
        x = rk4_step(spec.model.as_ref(), &x, &DVector::from_vec(u), spec.step)?;
        prev = Some(diag);
    };

    let final_state = x.as_slice().to_vec();
    let summary = summarize(scenario, prepared, &rows, &final_state, outcome);
    Ok(ClosedLoopLog {
        name: scenario.name.clone(),
        rows,
        solutions,
        final_state,
        target_state: target,
        summary,
    })
}

/// Summary statistics, recomputable from the rows and the final state.
pub fn summarize(
    scenario: &Scenario,
    prepared: &Prepared,
    rows: &[LogRow],
    final_state: &[f64],
    outcome: Outcome,
) -> Summary {
    let spec = &prepared.spec;
    let target = prepared.target_state.as_slice();
    let mut positions: Vec<[f64; 2]> = rows.iter().map(|r| [r.state[0], r.state[1]]).collect();
    positions.push([final_state[0], final_state[1]]);
    let path_length = positions
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .sum();
    let min_obstacle_margin = positions
        .iter()
        .map(|p| min_clearance(&spec.obstacles, *p))
        .fold(f64::INFINITY, f64::min);
    let zero_input = vec![0.0; spec.model.input_dim()];
    let closed_loop_cost = rows
        .iter()
        .map(|r| stage_cost(&r.state, &r.input, target, &zero_input, &scenario.weights()))
        .sum();
    let mut counts = MonitorCounts::default();
    for m in rows.iter().filter_map(|r| r.monitors.as_ref()) {
        counts.lyapunov += usize::from(!m.lyapunov_ok);
        counts.shift_feasibility += usize::from(!m.shift_feasible_ok);
        counts.gap_trend += usize::from(!m.gap_trend_ok);
        counts.lower_bound += usize::from(!m.lower_bound_ok);
    }
    let (final_distance, final_heading_error) = distance_and_heading(final_state, target);
    Summary {
        steps_to_target: (outcome == Outcome::Success).then_some(rows.len()),
        outcome,
        steps: rows.len(),
        path_length,
        min_obstacle_margin,
        final_distance,
        final_heading_error,
        final_s: rows.last().and_then(|r| r.s_star),
        closed_loop_cost,
        monitor_failures: counts,
    }
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub horizon: usize,
    pub step: f64,
    /// The run's log, or the error that kept it from starting.
    pub result: std::result::Result<ClosedLoopLog, String>,
}

/// Runs the scenario once per `(N, h)` on separate threads. Entries keep
/// the order of `horizons`; a failing configuration does not stop the rest.
pub fn horizon_sweep(scenario: &Scenario, horizons: &[(usize, f64)]) -> Result<Vec<SweepEntry>> {
    if horizons.is_empty() {
        return Err(Error::InvalidArgument(
            "horizon sweep needs at least one configuration".into(),
        ));
    }
    let configs: Vec<Scenario> = horizons
        .iter()
        .map(|(n, h)| {
            let mut s = scenario.clone();
            s.horizon.steps = *n;
            s.horizon.step = *h;
            s
        })
        .collect();
    let results: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|s| scope.spawn(move || run_closed_loop(s).map_err(|e| e.to_string())))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err("run panicked".to_string())))
            .collect()
    });
    Ok(horizons
        .iter()
        .zip(results)
        .map(|((n, h), result)| SweepEntry {
            horizon: *n,
            step: *h,
            result,
        })
        .collect())
}

/// Default ε list of the Lie-bracket experiment.
pub const DEFAULT_EPSILONS: [f64; 4] = [0.1, 0.05, 0.02, 0.01];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BracketSample {
    pub epsilon: f64,
    /// Lateral offset removed by the maneuver.
    pub displacement: f64,
    /// `Σ ℓ` over the four steps.
    pub cost: f64,
    /// Distance of the end state from the steady state.
    pub end_error: f64,
    pub inputs: [[f64; 2]; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllabilityReport {
    pub samples: Vec<BracketSample>,
    /// Least-squares slope of `log cost` against `log displacement`.
    pub slope: f64,
}

/// Lie-bracket maneuver for a unicycle-type model at the origin: turn by
/// `φ = a_ω h`, drive `a_v`, turn back, then reverse by `a_v cos φ`. The net
/// motion is purely lateral, `d = a_v h sin φ`, so starting at `(0, −d, 0)`
/// the robot ends on the steady state. Magnitudes are
/// `a = 0.9 · limit · √(ε / ε_max)`, which keeps every input inside the bounds.
pub fn lie_bracket_sample(
    model: &dyn DynamicsModel,
    bounds: &InputBounds,
    weights: &CostWeights,
    epsilon: f64,
    epsilon_max: f64,
    h: f64,
) -> Result<BracketSample> {
    if model.state_dim() != 3 || model.input_dim() != 2 {
        return Err(Error::InvalidArgument(
            "the Lie-bracket maneuver needs a (3-state, 2-input) unicycle".into(),
        ));
    }
    if !(epsilon >= 0.0 && epsilon <= epsilon_max && epsilon_max > 0.0 && h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 ≤ ε ≤ ε_max and h > 0, got ε = {epsilon}, ε_max = {epsilon_max}, h = {h}"
        )));
    }
    let scale = 0.9 * (epsilon / epsilon_max).sqrt();
    let limit = |i: usize| bounds.upper()[i].min(-bounds.lower()[i]);
    let (av, aw) = (scale * limit(0), scale * limit(1));
    let phi = aw * h;
    let d = av * h * phi.sin();
    let inputs = [[0.0, aw], [av, 0.0], [0.0, -aw], [-av * phi.cos(), 0.0]];
    let xs = [0.0; 3];
    let us = [0.0; 2];
    let mut x = DVector::from_vec(vec![0.0, -d, 0.0]);
    let mut cost = 0.0;
    for u in &inputs {
        if !bounds.contains(u) {
            return Err(Error::InvalidArgument(format!(
                "maneuver input {u:?} leaves the bounds"
            )));
        }
        cost += stage_cost(x.as_slice(), u, &xs, &us, weights);
        x = rk4_step(model, &x, &DVector::from_column_slice(u), h)?;
    }
    Ok(BracketSample {
        epsilon,
        displacement: d.abs(),
        cost,
        end_error: x.norm(),
        inputs,
    })
}

/// Fits the exponent `σ` in `Σ ℓ ≈ b · d^σ` over the maneuvers for `epsilons`.
/// `ε = 0` entries are reported but not fitted.
pub fn verify_controllability_exponent(
    model: &dyn DynamicsModel,
    bounds: &InputBounds,
    weights: &CostWeights,
    epsilons: &[f64],
    h: f64,
) -> Result<ControllabilityReport> {
    let eps_max = epsilons.iter().copied().fold(0.0, f64::max);
    let samples = epsilons
        .iter()
        .map(|e| lie_bracket_sample(model, bounds, weights, *e, eps_max, h))
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.displacement > 0.0 && s.cost > 0.0)
        .map(|s| (s.displacement.ln(), s.cost.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two positive ε values to fit a slope".into(),
        ));
    }
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("ε values must differ".into()));
    }
    Ok(ControllabilityReport {
        samples,
        slope: sxy / sxx,
    })
}

#[cfg(test)]
mod tests;
