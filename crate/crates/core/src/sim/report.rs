//! CSV, TOML and SVG output for closed-loop runs.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::geometry::ConvexPolytope;
use crate::planner::PlanResult;
use crate::scenario::{Prepared, Scenario};
use crate::sim::{ClosedLoopLog, SweepEntry};
use crate::{Error, Result};

pub const LOG_COLUMNS: [&str; 24] = [
    "k",
    "x",
    "y",
    "theta",
    "v",
    "omega",
    "value",
    "s_star",
    "tracking_gap",
    "value_gap",
    "status",
    "source",
    "outer_iterations",
    "inner_iterations",
    "stationarity",
    "feasibility",
    "candidate_violation",
    "margin",
    "lyapunov_slack",
    "lyapunov_ok",
    "shift_violation",
    "shift_ok",
    "gap_trend_ok",
    "lower_bound_ok",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn flag(v: Option<bool>) -> String {
    v.map(|b| b.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Per-step log. Contains no wall-clock data, so equal runs give equal bytes.
pub fn write_log_csv<W: Write>(log: &ClosedLoopLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LOG_COLUMNS).map_err(csv_err)?;
    for r in &log.rows {
        let m = r.monitors.as_ref();
        let rec = [
            r.k.to_string(),
            format!("{:e}", r.state[0]),
            format!("{:e}", r.state[1]),
            format!("{:e}", r.state[2]),
            format!("{:e}", r.input[0]),
            format!("{:e}", r.input[1]),
            format!("{:e}", r.value),
            opt(r.s_star),
            format!("{:e}", r.tracking_gap),
            opt(r.value_gap),
            r.status.to_string(),
            r.source.to_string(),
            r.outer_iterations.to_string(),
            r.inner_iterations.to_string(),
            format!("{:e}", r.stationarity),
            format!("{:e}", r.feasibility),
            format!("{:e}", r.candidate_violation),
            format!("{:e}", r.margin),
            opt(m.map(|m| m.lyapunov_slack)),
            flag(m.map(|m| m.lyapunov_ok)),
            opt(m.map(|m| m.shift_violation)),
            flag(m.map(|m| m.shift_feasible_ok)),
            flag(m.map(|m| m.gap_trend_ok)),
            flag(m.map(|m| m.lower_bound_ok)),
        ];
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Wall-clock solve time per step.
pub fn write_timing_csv<W: Write>(log: &ClosedLoopLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "solve_time"]).map_err(csv_err)?;
    for r in &log.rows {
        w.write_record([r.k.to_string(), format!("{:e}", r.solve_time)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Summary followed by the effective scenario.
pub fn summary_toml(scenario: &Scenario, log: &ClosedLoopLog) -> Result<String> {
    let ser = |e: toml::ser::Error| Error::Scenario(e.to_string());
    let mut doc = toml::Table::new();
    doc.insert(
        "summary".into(),
        toml::Value::Table(toml::Table::try_from(&log.summary).map_err(ser)?),
    );
    doc.insert(
        "scenario".into(),
        toml::Value::Table(toml::Table::try_from(scenario).map_err(ser)?),
    );
    toml::to_string(&doc).map_err(ser)
}

/// Writes `log.csv`, `timing.csv`, `summary.toml` and `trajectory.svg` into `dir`.
pub fn write_run(dir: &Path, scenario: &Scenario, prepared: &Prepared, log: &ClosedLoopLog) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_log_csv(log, std::fs::File::create(dir.join("log.csv"))?)?;
    write_timing_csv(log, std::fs::File::create(dir.join("timing.csv"))?)?;
    std::fs::write(dir.join("summary.toml"), summary_toml(scenario, log)?)?;
    let positions = log.positions();
    let svg = trajectory_svg(scenario, prepared, &[(log.name.as_str(), positions.as_slice())])?;
    std::fs::write(dir.join("trajectory.svg"), svg)?;
    Ok(())
}

/// One row per sweep configuration.
pub fn write_sweep_csv<W: Write>(entries: &[SweepEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "horizon",
        "step",
        "outcome",
        "steps",
        "path_length",
        "closed_loop_cost",
        "final_distance",
        "min_obstacle_margin",
    ])
    .map_err(csv_err)?;
    for e in entries {
        let rec = match &e.result {
            Ok(log) => {
                let s = &log.summary;
                [
                    e.horizon.to_string(),
                    e.step.to_string(),
                    s.outcome.to_string(),
                    s.steps.to_string(),
                    format!("{:e}", s.path_length),
                    format!("{:e}", s.closed_loop_cost),
                    format!("{:e}", s.final_distance),
                    format!("{:e}", s.min_obstacle_margin),
                ]
            }
            Err(msg) => [
                e.horizon.to_string(),
                e.step.to_string(),
                format!("error: {msg}"),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ],
        };
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const SVG_SIZE: f64 = 640.0;

struct Frame {
    x0: f64,
    y1: f64,
    scale: f64,
}

impl Frame {
    fn pt(&self, p: [f64; 2]) -> (f64, f64) {
        ((p[0] - self.x0) * self.scale, (self.y1 - p[1]) * self.scale)
    }

    fn points(&self, ps: &[[f64; 2]]) -> String {
        ps.iter()
            .map(|p| {
                let (x, y) = self.pt(*p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn polygon(frame: &Frame, obstacle: &ConvexPolytope, style: &str, out: &mut String) {
    let v = obstacle.vertices();
    if v.len() >= 3 {
        let _ = writeln!(out, r#"<polygon points="{}" {style}/>"#, frame.points(&v));
    }
}

/// Plot of obstacles (raw and inflated), the reference path and `traces`.
pub fn trajectory_svg(scenario: &Scenario, prepared: &Prepared, traces: &[(&str, &[[f64; 2]])]) -> Result<String> {
    let reference: Vec<[f64; 2]> = (0..=200)
        .map(|i| {
            let p = prepared.spec.path.eval(i as f64 / 200.0);
            [p[0], p[1]]
        })
        .collect();
    let raw = scenario.raw_obstacles()?;
    let mut pts: Vec<[f64; 2]> = reference.clone();
    for t in traces {
        pts.extend_from_slice(t.1);
    }
    for o in prepared.spec.obstacles.iter() {
        pts.extend(o.vertices());
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts.iter().filter(|p| p[0].is_finite() && p[1].is_finite()) {
        x0 = x0.min(p[0]);
        y0 = y0.min(p[1]);
        x1 = x1.max(p[0]);
        y1 = y1.max(p[1]);
    }
    if !x0.is_finite() {
        (x0, y0, x1, y1) = (-1.0, -1.0, 1.0, 1.0);
    }
    let pad = 0.1 * (x1 - x0).max(y1 - y0).max(0.1);
    let (x0, y0, x1, y1) = (x0 - pad, y0 - pad, x1 + pad, y1 + pad);
    let scale = SVG_SIZE / (x1 - x0).max(y1 - y0);
    let frame = Frame { x0, y1, scale };
    let (w, h) = ((x1 - x0) * scale, (y1 - y0) * scale);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for o in &prepared.spec.obstacles {
        polygon(
            &frame,
            o,
            r##"fill="none" stroke="#888" stroke-dasharray="4 3""##,
            &mut s,
        );
    }
    for o in &raw {
        polygon(&frame, o, r##"fill="#bbb" stroke="#444""##, &mut s);
    }
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#000" stroke-dasharray="6 4" stroke-width="1.5"/>"##,
        frame.points(&reference)
    );
    for (i, (label, trace)) in traces.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            frame.points(trace)
        );
        let _ = writeln!(
            s,
            r#"<text x="10" y="{}" fill="{color}" font-family="sans-serif" font-size="14">{}</text>"#,
            20 + 18 * i,
            escape(label)
        );
    }
    let (sx, sy) = frame.pt([prepared.initial_state[0], prepared.initial_state[1]]);
    let (tx, ty) = frame.pt([prepared.target_state[0], prepared.target_state[1]]);
    let _ = writeln!(s, r#"<circle cx="{sx:.2}" cy="{sy:.2}" r="5" fill="green"/>"#);
    let _ = writeln!(
        s,
        r#"<circle cx="{tx:.2}" cy="{ty:.2}" r="5" fill="none" stroke="red" stroke-width="2"/>"#
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Planner tree, path and obstacles inside the sampling box `[xmin, ymin, xmax, ymax]`.
pub fn plan_svg(raw: &[ConvexPolytope], inflated: &[ConvexPolytope], result: &PlanResult, bounds: [f64; 4]) -> String {
    let [x0, y0, x1, y1] = bounds;
    let scale = SVG_SIZE / (x1 - x0).max(y1 - y0);
    let frame = Frame { x0, y1, scale };
    let (w, h) = ((x1 - x0) * scale, (y1 - y0) * scale);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for o in inflated {
        polygon(
            &frame,
            o,
            r##"fill="none" stroke="#888" stroke-dasharray="4 3""##,
            &mut s,
        );
    }
    for o in raw {
        polygon(&frame, o, r##"fill="#bbb" stroke="#444""##, &mut s);
    }
    let tree = &result.tree;
    for (i, parent) in tree.parents.iter().enumerate() {
        if let Some(p) = parent {
            let (ax, ay) = frame.pt(tree.nodes[*p]);
            let (bx, by) = frame.pt(tree.nodes[i]);
            let _ = writeln!(
                s,
                r##"<line x1="{ax:.2}" y1="{ay:.2}" x2="{bx:.2}" y2="{by:.2}" stroke="#9ab" stroke-width="0.8"/>"##
            );
        }
    }
    if let Some(path) = &result.path {
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#d62728" stroke-width="2.5"/>"##,
            frame.points(path)
        );
    }
    s.push_str("</svg>\n");
    s
}
