//! Browser bindings. Every export returns a JSON string so the page needs no
//! generated TypeScript types.

use anchored_mpc::dynamics::{rk4_step, DiffDrive, InputBounds};
use anchored_mpc::geometry::{min_clearance, ConvexPolytope};
use anchored_mpc::mpc::Controller;
use anchored_mpc::path::check_path_clearance;
use anchored_mpc::planner::{self, PlannerConfig};
use anchored_mpc::scenario::{Prepared, Scenario};
use anchored_mpc::sim::verify_controllability_exponent;
use nalgebra::DVector;
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub const PRESETS: [(&str, &str); 3] = [
    ("fig1_proposed", include_str!("../../../scenarios/fig1_proposed.toml")),
    ("fig1_baseline", include_str!("../../../scenarios/fig1_baseline.toml")),
    ("fig3", include_str!("../../../scenarios/fig3.toml")),
];

fn fail(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

#[wasm_bindgen]
pub fn preset(name: &str) -> Result<String, JsError> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, src)| src.to_string())
        .ok_or_else(|| fail(format!("no preset named {name}")))
}

#[derive(Serialize)]
struct Scene {
    reference: Vec<[f64; 2]>,
    obstacles: Vec<Vec<[f64; 2]>>,
    inflated: Vec<Vec<[f64; 2]>>,
    target: Vec<f64>,
}

#[derive(Serialize)]
struct StepView {
    k: usize,
    state: Vec<f64>,
    input: Vec<f64>,
    value: f64,
    s_star: Option<f64>,
    margin: f64,
    source: String,
}

#[derive(Serialize)]
struct Status {
    done: bool,
    outcome: Option<String>,
    steps: usize,
}

/// Closed loop advanced one sampling instant per call, so the page can draw
/// between solves.
#[wasm_bindgen]
pub struct Simulation {
    scenario: Scenario,
    prepared: Prepared,
    controller: Controller,
    x: DVector<f64>,
    steps: usize,
    outcome: Option<String>,
}

#[wasm_bindgen]
impl Simulation {
    #[wasm_bindgen(constructor)]
    pub fn new(toml_src: &str) -> Result<Simulation, JsError> {
        let scenario = Scenario::parse(toml_src, "scenario", &[]).map_err(fail)?;
        let prepared = scenario.prepare().map_err(fail)?;
        let spec = &prepared.spec;
        let report = check_path_clearance(
            spec.model.as_ref(),
            spec.path.as_ref(),
            &spec.input_bounds,
            &spec.obstacles,
            spec.delta_sep,
            spec.step,
            1000,
        )
        .map_err(fail)?;
        if !report.passed() {
            return Err(fail(format!(
                "reference path fails the clearance check at {} points",
                report.violations.len()
            )));
        }
        let controller = Controller::new(spec.clone(), prepared.config).map_err(fail)?;
        let x = prepared.initial_state.clone();
        Ok(Simulation {
            scenario,
            prepared,
            controller,
            x,
            steps: 0,
            outcome: None,
        })
    }

    /// Reference samples and obstacle outlines.
    pub fn scene(&self) -> String {
        let path = self.prepared.spec.path.as_ref();
        let reference = (0..=200)
            .map(|i| {
                let y = path.eval(i as f64 / 200.0);
                [y[0], y[1]]
            })
            .collect();
        let outline = |p: &ConvexPolytope| p.vertices();
        json(&Scene {
            reference,
            obstacles: self
                .scenario
                .raw_obstacles()
                .unwrap_or_default()
                .iter()
                .map(outline)
                .collect(),
            inflated: self.prepared.spec.obstacles.iter().map(outline).collect(),
            target: self.prepared.target_state.as_slice().to_vec(),
        })
    }

    pub fn state(&self) -> Vec<f64> {
        self.x.as_slice().to_vec()
    }

    pub fn status(&self) -> String {
        json(&Status {
            done: self.outcome.is_some(),
            outcome: self.outcome.clone(),
            steps: self.steps,
        })
    }

    /// Applies one control move. Returns `null` once the run has ended; the
    /// reason is then in [`Simulation::status`].
    pub fn step(&mut self) -> Result<String, JsError> {
        if self.outcome.is_some() {
            return Ok("null".into());
        }
        let target = self.prepared.target_state.as_slice();
        let term = &self.scenario.termination;
        let dist = (self.x[0] - target[0]).hypot(self.x[1] - target[1]);
        let dth =
            (self.x[2] - target[2] + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
        if dist <= term.position_tolerance && dth.abs() <= term.heading_tolerance {
            self.outcome = Some("success".into());
            return Ok("null".into());
        }
        if self.steps >= term.max_steps {
            self.outcome = Some("timeout".into());
            return Ok("null".into());
        }
        let (u, diag) = match self.controller.step(self.x.as_slice()) {
            Ok(r) => r,
            Err(e) => {
                self.outcome = Some(format!("fault: {e}"));
                return Ok("null".into());
            }
        };
        let spec = &self.prepared.spec;
        let view = StepView {
            k: diag.k,
            state: self.x.as_slice().to_vec(),
            input: u.clone(),
            value: diag.value,
            s_star: diag.s_star,
            margin: min_clearance(&spec.obstacles, [self.x[0], self.x[1]]),
            source: diag.source.to_string(),
        };
        self.x = rk4_step(spec.model.as_ref(), &self.x, &DVector::from_vec(u), spec.step).map_err(fail)?;
        self.steps += 1;
        Ok(json(&view))
    }
}

#[derive(Serialize)]
struct PlanView {
    nodes: Vec<[f64; 2]>,
    parents: Vec<Option<usize>>,
    path: Option<Vec<[f64; 2]>>,
    length: Option<f64>,
    obstacles: Vec<Vec<[f64; 2]>>,
    bounds: [f64; 4],
}

/// RRT* among the scenario's (inflated) obstacles.
#[wasm_bindgen]
pub fn plan(
    toml_src: &str,
    start_x: f64,
    start_y: f64,
    goal_x: f64,
    goal_y: f64,
    iterations: usize,
    seed: u64,
) -> Result<String, JsError> {
    let scenario = Scenario::parse(toml_src, "scenario", &[]).map_err(fail)?;
    let obstacles = scenario.obstacles().map_err(fail)?;
    let config = PlannerConfig {
        max_iterations: iterations,
        rng_seed: seed,
        ..scenario.planner.clone()
    };
    let result = planner::plan([start_x, start_y], [goal_x, goal_y], &obstacles, &config).map_err(fail)?;
    Ok(json(&PlanView {
        length: result.path.as_deref().map(planner::path_length),
        nodes: result.tree.nodes,
        parents: result.tree.parents,
        path: result.path,
        obstacles: obstacles.iter().map(ConvexPolytope::vertices).collect(),
        bounds: config.bounds,
    }))
}

/// Lie-bracket maneuvers for the differential drive and the fitted exponent.
#[wasm_bindgen]
pub fn lie_bracket(epsilons: &[f64], h: f64, v_max: f64, omega_max: f64) -> Result<String, JsError> {
    let bounds = InputBounds::symmetric(&[v_max, omega_max]).map_err(fail)?;
    let scenario = Scenario::default();
    let report =
        verify_controllability_exponent(&DiffDrive, &bounds, &scenario.weights(), epsilons, h).map_err(fail)?;
    Ok(json(&report))
}
