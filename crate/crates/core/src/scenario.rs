//! Scenario files.
//!
//! A scenario is a TOML document. Every table except `path` is optional and
//! is merged key by key over the defaults, so a file only needs to state what
//! differs. Dotted `key=value` overrides are applied the same way before the
//! document is validated.
//!
//! ```toml
//! name = "fig1_proposed"
//! mode = "proposed"            # or "baseline"
//!
//! [path]
//! kind = "sinusoid"            # or "polyline" / "planned"
//! length = 2.5
//! amplitude = 1.1
//!
//! [[obstacles]]
//! box = [1.0, -1.0, 1.5, 1.0]  # or a = [[1, 0], ...], b = [...]
//!
//! [horizon]
//! steps = 10
//! step = 0.2
//! ```

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::dynamics::{DiffDrive, DynamicsModel, InputBounds};
use crate::geometry::{ConvexPolytope, DEFAULT_DELTA_SEP};
use crate::mpc::MpcConfig;
use crate::nlp::NlpOptions;
use crate::ocp::{CostWeights, OcpSpec, TerminalMode, DEFAULT_OFFSET_WEIGHT};
use crate::path::{lift, PolylinePath, ReferencePath, SinusoidPath};
use crate::planner::{rrt_star, PlannerConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Proposed,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    DiffDrive,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
}

/// Symmetric input limits `|v| ≤ v`, `|ω| ≤ omega`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    pub v: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PathSpec {
    Sinusoid {
        length: f64,
        amplitude: f64,
    },
    Polyline {
        waypoints: Vec<[f64; 2]>,
        #[serde(default)]
        corner_radius: f64,
    },
    /// RRT* waypoints from `start` to `goal` using the `[planner]` table.
    Planned {
        start: [f64; 2],
        goal: [f64; 2],
        #[serde(default)]
        corner_radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObstacleSpec {
    Box {
        #[serde(rename = "box")]
        bounds: [f64; 4],
    },
    Halfspaces {
        a: Vec<[f64; 2]>,
        b: Vec<f64>,
    },
}

impl ObstacleSpec {
    pub fn build(&self) -> Result<ConvexPolytope> {
        match self {
            ObstacleSpec::Box {
                bounds: [x0, y0, x1, y1],
            } => ConvexPolytope::from_box(*x0, *y0, *x1, *y1),
            ObstacleSpec::Halfspaces { a, b } => ConvexPolytope::new(a.clone(), b.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub position: f64,
    pub heading: f64,
    pub v: f64,
    pub omega: f64,
    pub offset: f64,
    pub delta_sep: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSpec {
    pub steps: usize,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    /// Obstacles are inflated by this radius.
    pub radius: f64,
    /// Full initial pose; defaults to the start of the path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<[f64; 3]>,
    /// Initial heading when `initial_state` is absent; defaults to the
    /// path heading at its start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_heading: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminationSpec {
    pub max_steps: usize,
    /// Distance to the target position [m].
    pub position_tolerance: f64,
    /// Heading error to the target [rad].
    pub heading_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    pub monitor_tolerance: f64,
    pub shift_tolerance: f64,
    pub cold_start_grid: usize,
    pub cold_start_relax: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// `(N, h)` pairs.
    pub horizons: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    pub rng_seed: u64,
    pub model: ModelSpec,
    pub bounds: BoundsSpec,
    pub path: PathSpec,
    pub obstacles: Vec<ObstacleSpec>,
    pub cost: CostSpec,
    pub horizon: HorizonSpec,
    pub robot: RobotSpec,
    pub termination: TerminationSpec,
    pub solver: NlpOptions,
    pub controller: ControllerSpec,
    pub planner: PlannerConfig,
    pub sweep: SweepSpec,
}

impl Default for Scenario {
    fn default() -> Self {
        let mpc = MpcConfig::default();
        let w = CostWeights::default();
        Self {
            name: "scenario".into(),
            mode: Mode::Proposed,
            rng_seed: 0,
            model: ModelSpec::default(),
            bounds: BoundsSpec { v: 0.31, omega: 1.9 },
            path: PathSpec::Sinusoid {
                length: 2.5,
                amplitude: 1.1,
            },
            obstacles: Vec::new(),
            cost: CostSpec {
                position: w.position,
                heading: w.heading,
                v: w.v,
                omega: w.omega,
                offset: DEFAULT_OFFSET_WEIGHT,
                delta_sep: DEFAULT_DELTA_SEP,
            },
            horizon: HorizonSpec { steps: 10, step: 0.2 },
            robot: RobotSpec {
                radius: 0.0,
                initial_state: None,
                initial_heading: None,
            },
            termination: TerminationSpec {
                max_steps: 300,
                position_tolerance: 0.05,
                heading_tolerance: 0.1,
            },
            solver: mpc.solver,
            controller: ControllerSpec {
                monitor_tolerance: mpc.monitor_tolerance,
                shift_tolerance: mpc.shift_tolerance,
                cold_start_grid: mpc.cold_start_grid,
                cold_start_relax: mpc.cold_start_relax,
            },
            planner: PlannerConfig::default(),
            sweep: SweepSpec::default(),
        }
    }
}

/// Everything needed to run a scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: OcpSpec,
    pub config: MpcConfig,
    pub initial_state: DVector<f64>,
    /// Steady state at the end of the path.
    pub target_state: DVector<f64>,
    /// Planner output for `planned` paths.
    pub waypoints: Option<Vec<[f64; 2]>>,
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn toml_error(origin: &str, src: &str, e: &toml::de::Error) -> Error {
    let msg = e.message().trim().to_string();
    match e.span() {
        Some(span) => {
            let (line, col) = line_col(src, span.start);
            Error::Scenario(format!("{origin}:{line}:{col}: {msg}"))
        }
        None => Error::Scenario(format!("{origin}: {msg}")),
    }
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            // the path table picks a variant, so it replaces rather than merges
            (Some(Value::Table(b)), Value::Table(o)) if k != "path" => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_value(text: &str) -> Value {
    let text = text.trim();
    match toml::from_str::<Table>(&format!("v = {text}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(text.into())),
        Err(_) => Value::String(text.into()),
    }
}

/// Applies `a.b.c=value` to `table`. Values use TOML syntax; anything that
/// does not parse is taken as a string.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Scenario(format!("override '{assignment}' is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Scenario(format!("override key '{key}' is malformed")));
    }
    let mut node = table;
    for p in &parts[..parts.len() - 1] {
        let entry = node.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Scenario(format!("override key '{key}': '{p}' is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), parse_value(value));
    Ok(())
}

impl Scenario {
    /// Parses `src` over the defaults. `origin` labels error messages.
    pub fn parse(src: &str, origin: &str, overrides: &[String]) -> Result<Self> {
        let user: Table = toml::from_str(src).map_err(|e| toml_error(origin, src, &e))?;
        let mut doc = Table::try_from(Scenario::default()).map_err(|e| Error::Scenario(e.to_string()))?;
        merge(&mut doc, user);
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let scenario: Scenario = doc
            .try_into()
            .map_err(|e: toml::de::Error| Error::Scenario(format!("{origin}: {}", e.message().trim())))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_file(path: &std::path::Path, overrides: &[String]) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
        Self::parse(&src, &path.display().to_string(), overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Scenario(what.to_string()));
        if !(self.horizon.steps >= 1) {
            return bad("horizon.steps must be ≥ 1");
        }
        if !(self.horizon.step > 0.0 && self.horizon.step.is_finite()) {
            return bad("horizon.step must be positive");
        }
        if !(self.termination.position_tolerance > 0.0 && self.termination.heading_tolerance > 0.0) {
            return bad("termination tolerances must be positive");
        }
        if !(self.robot.radius >= 0.0) {
            return bad("robot.radius must be ≥ 0");
        }
        if !(self.bounds.v > 0.0 && self.bounds.omega > 0.0) {
            return bad("input bounds must be positive");
        }
        if !(self.cost.offset > 0.0 && self.cost.delta_sep > 0.0) {
            return bad("cost.offset and cost.delta_sep must be positive");
        }
        if !(self.controller.monitor_tolerance >= 0.0 && self.controller.shift_tolerance >= 0.0) {
            return bad("controller tolerances must be ≥ 0");
        }
        for (n, h) in &self.sweep.horizons {
            if *n == 0 || !(*h > 0.0) {
                return bad("sweep horizons need N ≥ 1 and h > 0");
            }
        }
        Ok(())
    }

    pub fn weights(&self) -> CostWeights {
        CostWeights {
            position: self.cost.position,
            heading: self.cost.heading,
            v: self.cost.v,
            omega: self.cost.omega,
        }
    }

    pub fn mpc_config(&self) -> MpcConfig {
        MpcConfig {
            solver: self.solver,
            monitor_tolerance: self.controller.monitor_tolerance,
            shift_tolerance: self.controller.shift_tolerance,
            cold_start_grid: self.controller.cold_start_grid,
            cold_start_relax: self.controller.cold_start_relax,
        }
    }

    /// Obstacles as listed, before inflation.
    pub fn raw_obstacles(&self) -> Result<Vec<ConvexPolytope>> {
        self.obstacles.iter().map(ObstacleSpec::build).collect()
    }

    /// Obstacles inflated by the robot radius.
    pub fn obstacles(&self) -> Result<Vec<ConvexPolytope>> {
        self.raw_obstacles()?
            .iter()
            .map(|o| o.inflate(self.robot.radius))
            .collect()
    }

    /// The reference path and, for planned paths, the planner waypoints.
    pub fn build_path(&self) -> Result<(Arc<dyn ReferencePath>, Option<Vec<[f64; 2]>>)> {
        match &self.path {
            PathSpec::Sinusoid { length, amplitude } => Ok((Arc::new(SinusoidPath::new(*length, *amplitude)?), None)),
            PathSpec::Polyline {
                waypoints,
                corner_radius,
            } => Ok((Arc::new(PolylinePath::new(waypoints, *corner_radius)?), None)),
            PathSpec::Planned {
                start,
                goal,
                corner_radius,
            } => {
                let waypoints = rrt_star(*start, *goal, &self.obstacles()?, &self.planner)?
                    .ok_or_else(|| Error::Scenario("planner found no path".into()))?;
                Ok((
                    Arc::new(PolylinePath::new(&waypoints, *corner_radius)?),
                    Some(waypoints),
                ))
            }
        }
    }

    pub fn prepare(&self) -> Result<Prepared> {
        self.validate()?;
        let model: Arc<dyn DynamicsModel> = match self.model.kind {
            ModelKind::DiffDrive => Arc::new(DiffDrive),
        };
        let (path, waypoints) = self.build_path()?;
        let target_state = lift(model.as_ref(), path.as_ref(), 1.0).0;
        let mode = match self.mode {
            Mode::Proposed => TerminalMode::Proposed,
            Mode::Baseline => TerminalMode::Baseline { target: path.eval(1.0) },
        };
        let spec = OcpSpec {
            horizon: self.horizon.steps,
            step: self.horizon.step,
            model: model.clone(),
            path: path.clone(),
            obstacles: self.obstacles()?,
            input_bounds: InputBounds::symmetric(&[self.bounds.v, self.bounds.omega])?,
            weights: self.weights(),
            offset_weight: self.cost.offset,
            delta_sep: self.cost.delta_sep,
            mode,
        };
        spec.validate()?;
        let initial_state = match (self.robot.initial_state, self.robot.initial_heading) {
            (Some(x), _) => DVector::from_column_slice(&x),
            (None, heading) => {
                let mut x = lift(model.as_ref(), path.as_ref(), 0.0).0;
                if let Some(h) = heading {
                    x[2] = h;
                }
                x
            }
        };
        Ok(Prepared {
            spec,
            config: self.mpc_config(),
            initial_state,
            target_state,
            waypoints,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = r#"
name = "fig1"

[path]
kind = "sinusoid"
length = 2.5
amplitude = 1.1

[[obstacles]]
box = [1.0, -1.0, 1.5, 1.0]
"#;

    #[test]
    fn minimal_file_takes_defaults() {
        let s = Scenario::parse(FIG1, "fig1", &[]).unwrap();
        assert_eq!(s.name, "fig1");
        assert_eq!(s.horizon, HorizonSpec { steps: 10, step: 0.2 });
        assert_eq!(s.termination.max_steps, 300);
        assert_eq!(s.solver, MpcConfig::default().solver);
        assert_eq!(s.obstacles.len(), 1);
    }

    #[test]
    fn partial_tables_merge_over_defaults() {
        let src = format!("{FIG1}\n[solver]\nmax_inner = 42\n");
        let s = Scenario::parse(&src, "x", &[]).unwrap();
        assert_eq!(s.solver.max_inner, 42);
        assert_eq!(s.solver.tol_feas, MpcConfig::default().solver.tol_feas);
    }

    #[test]
    fn overrides_round_trip() {
        let overrides = vec![
            "horizon.steps=20".to_string(),
            "mode=baseline".to_string(),
            "solver.tol_stat = 1e-7".to_string(),
            "path.amplitude=0.5".to_string(),
        ];
        let s = Scenario::parse(FIG1, "x", &overrides).unwrap();
        assert_eq!(s.horizon.steps, 20);
        assert_eq!(s.mode, Mode::Baseline);
        assert_eq!(s.solver.tol_stat, 1e-7);
        assert_eq!(
            s.path,
            PathSpec::Sinusoid {
                length: 2.5,
                amplitude: 0.5
            }
        );
        let again = Scenario::parse(&s.to_toml(), "again", &[]).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Scenario::parse(FIG1, "x", &["horizon.stepz=3".into()]).is_err());
        assert!(Scenario::parse(&format!("{FIG1}\n[cost]\nbogus = 1\n"), "x", &[]).is_err());
        assert!(Scenario::parse(FIG1, "x", &["novalue".into()]).is_err());
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let src = "name = \"a\"\n[horizon]\nsteps = = 3\n";
        let err = Scenario::parse(src, "bad.toml", &[]).unwrap_err().to_string();
        assert!(err.contains("bad.toml:3:"), "{err}");
    }

    #[test]
    fn polyline_and_halfspace_obstacles() {
        let src = r#"
[path]
kind = "polyline"
waypoints = [[0.0, 0.0], [2.0, 0.0], [2.0, 2.0]]
corner_radius = 0.3

[[obstacles]]
a = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
b = [3.5, -3.0, 1.0, 1.0]
"#;
        let s = Scenario::parse(src, "x", &[]).unwrap();
        let p = s.prepare().unwrap();
        assert_eq!(p.spec.obstacles.len(), 1);
        assert!((p.target_state[0] - 2.0).abs() < 1e-12 && (p.target_state[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn initial_heading_defaults_to_path() {
        let s = Scenario::parse(FIG1, "x", &[]).unwrap();
        let p = s.prepare().unwrap();
        assert!((p.initial_state[2] - (1.1f64 * std::f64::consts::PI / 2.5).atan()).abs() < 1e-12);
        let s = Scenario::parse(FIG1, "x", &["robot.initial_heading=0.5".into()]).unwrap();
        assert_eq!(s.prepare().unwrap().initial_state[2], 0.5);
    }

    #[test]
    fn robot_radius_inflates() {
        let s = Scenario::parse(FIG1, "x", &["robot.radius=0.1".into()]).unwrap();
        let o = &s.prepare().unwrap().spec.obstacles[0];
        assert!(o.contains([0.95, 0.0]));
        assert!(!s.raw_obstacles().unwrap()[0].contains([0.95, 0.0]));
    }

    #[test]
    fn baseline_target_is_path_end() {
        let s = Scenario::parse(FIG1, "x", &["mode=baseline".into()]).unwrap();
        match s.prepare().unwrap().spec.mode {
            TerminalMode::Baseline { target } => assert!((target[0] - 2.5).abs() < 1e-12),
            TerminalMode::Proposed => panic!("expected baseline"),
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Scenario::parse(FIG1, "x", &["horizon.steps=0".into()]).is_err());
        assert!(Scenario::parse(FIG1, "x", &["termination.position_tolerance=0".into()]).is_err());
        assert!(Scenario::parse("name = 1", "x", &[]).is_err());
    }
}
