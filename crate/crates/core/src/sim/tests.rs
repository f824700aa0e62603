use super::report::{summary_toml, write_log_csv, LOG_COLUMNS};
use super::*;
use crate::dynamics::DiffDrive;
use crate::ocp::total_cost;

fn straight(overrides: &[&str]) -> Scenario {
    let src = r#"
name = "straight"
path = { kind = "polyline", waypoints = [[0.0, 0.0], [0.4, 0.0]] }
horizon = { steps = 6, step = 0.2 }
termination = { max_steps = 40 }
"#;
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    Scenario::parse(src, "test", &o).unwrap()
}

#[test]
fn start_on_target_takes_no_steps() {
    let mut s = straight(&[]);
    s.robot.initial_state = Some([0.4, 0.0, 0.0]);
    let log = run_closed_loop(&s).unwrap();
    assert_eq!(log.summary.outcome, Outcome::Success);
    assert_eq!(log.summary.steps, 0);
    assert_eq!(log.summary.steps_to_target, Some(0));
    assert_eq!(log.summary.path_length, 0.0);
    assert_eq!(log.positions().len(), 1);
}

#[test]
fn straight_run_reaches_target_and_log_replays() {
    let s = straight(&[]);
    let prepared = s.prepare().unwrap();
    let log = run_prepared(&s, &prepared).unwrap();
    assert_eq!(log.summary.outcome, Outcome::Success, "{:?}", log.summary);
    assert!(log.summary.final_distance <= 0.05);
    assert_eq!(log.rows.len(), log.solutions.len());

    // V_N recomputed from the stored decision vectors
    for (row, z) in log.rows.iter().zip(&log.solutions) {
        let v = total_cost(z, &prepared.spec);
        assert!(
            (v - row.value).abs() <= 1e-10 * v.abs().max(1.0),
            "k={} {v} vs {}",
            row.k,
            row.value
        );
    }
    // plant replay: each logged state follows from the previous one
    for w in log.rows.windows(2) {
        let next = rk4_step(
            &DiffDrive,
            &DVector::from_vec(w[0].state.clone()),
            &DVector::from_vec(w[0].input.clone()),
            s.horizon.step,
        )
        .unwrap();
        for i in 0..3 {
            assert_eq!(next[i], w[1].state[i]);
        }
    }
    let pos = log.positions();
    let len: f64 = pos
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .sum();
    assert!((len - log.summary.path_length).abs() < 1e-12);
    assert!(log.summary.path_length >= 0.4 - 0.05);
    for r in &log.rows {
        assert!(r.input[0].abs() <= 0.31 + 1e-9 && r.input[1].abs() <= 1.9 + 1e-9);
    }
    assert_eq!(
        log.summary.monitor_failures,
        MonitorCounts::default(),
        "{:?}",
        log.summary
    );
}

#[test]
fn log_csv_is_deterministic() {
    let s = straight(&["termination.max_steps=4"]);
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_log_csv(&run_closed_loop(&s).unwrap(), &mut a).unwrap();
    write_log_csv(&run_closed_loop(&s).unwrap(), &mut b).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), LOG_COLUMNS.join(","));
    assert_eq!(lines.count(), 4);
}

#[test]
fn step_budget_gives_timeout() {
    let s = straight(&["termination.max_steps=2"]);
    let log = run_closed_loop(&s).unwrap();
    assert_eq!(log.summary.outcome, Outcome::Timeout);
    assert_eq!(log.rows.len(), 2);
    assert_eq!(log.summary.steps_to_target, None);
    assert!(log.rows[0].monitors.is_none());
    assert!(log.rows[1].monitors.is_some());
}

#[test]
fn path_through_obstacle_is_rejected() {
    let s = straight(&["obstacles=[{ box = [0.15, -0.1, 0.25, 0.1] }]"]);
    match run_closed_loop(&s) {
        Err(Error::Scenario(m)) => assert!(m.contains("clearance"), "{m}"),
        other => panic!("expected a scenario error, got {other:?}"),
    }
}

#[test]
fn summary_contains_effective_config() {
    let s = Scenario::parse(
        "path = { kind = \"polyline\", waypoints = [[0.0, 0.0], [0.4, 0.0]] }\n",
        "t",
        &["termination.max_steps=1".into(), "cost.offset=250.0".into()],
    )
    .unwrap();
    let log = run_closed_loop(&s).unwrap();
    let text = summary_toml(&s, &log).unwrap();
    let doc: toml::Table = text.parse().unwrap();
    assert_eq!(doc["scenario"]["cost"]["offset"].as_float(), Some(250.0));
    assert_eq!(doc["summary"]["steps"].as_integer(), Some(1));
    assert_eq!(doc["summary"]["outcome"]["kind"].as_str(), Some("timeout"));
}

#[test]
fn sweep_keeps_order_and_rejects_empty_list() {
    let s = straight(&["termination.max_steps=2"]);
    assert!(horizon_sweep(&s, &[]).is_err());
    let entries = horizon_sweep(&s, &[(4, 0.2), (0, 0.2), (3, 0.25)]).unwrap();
    assert_eq!(
        entries.iter().map(|e| (e.horizon, e.step)).collect::<Vec<_>>(),
        vec![(4, 0.2), (0, 0.2), (3, 0.25)]
    );
    assert!(entries[0].result.is_ok());
    assert!(entries[1].result.is_err());
    assert_eq!(entries[2].result.as_ref().unwrap().rows.len(), 2);
}

fn bracket_cost_by_hand(av: f64, aw: f64, h: f64, w: &CostWeights) -> f64 {
    let phi = aw * h;
    let d = av * h * phi.sin();
    let dx = av * h * phi.cos();
    let q = |a: f64| a.powi(4);
    (w.position * q(d) + w.omega * q(aw))
        + (w.position * q(d) + w.heading * q(phi) + w.v * q(av))
        + (w.position * q(dx) + w.heading * q(phi) + w.omega * q(aw))
        + (w.position * q(dx) + w.v * q(av * phi.cos()))
}

#[test]
fn bracket_returns_to_steady_state_with_hand_computed_cost() {
    let bounds = InputBounds::symmetric(&[0.31, 1.9]).unwrap();
    let w = CostWeights::default();
    let h = 0.2;
    for eps in [0.1, 0.03, 0.001] {
        let s = lie_bracket_sample(&DiffDrive, &bounds, &w, eps, 0.1, h).unwrap();
        let k = 0.9 * (eps / 0.1f64).sqrt();
        let (av, aw) = (k * 0.31, k * 1.9);
        assert!(s.end_error < 1e-14, "{}", s.end_error);
        assert!((s.displacement - av * h * (aw * h).sin()).abs() < 1e-15);
        let oracle = bracket_cost_by_hand(av, aw, h, &w);
        assert!((s.cost - oracle).abs() <= 1e-12 * oracle, "{} vs {oracle}", s.cost);
        assert!(s.inputs.iter().all(|u| bounds.contains(u)));
    }
    let zero = lie_bracket_sample(&DiffDrive, &bounds, &w, 0.0, 0.1, h).unwrap();
    assert_eq!(zero.cost, 0.0);
    assert_eq!(zero.displacement, 0.0);
}

#[test]
fn controllability_exponent_is_two() {
    let bounds = InputBounds::turtlebot();
    let r =
        verify_controllability_exponent(&DiffDrive, &bounds, &CostWeights::default(), &DEFAULT_EPSILONS, 0.2).unwrap();
    assert_eq!(r.samples.len(), 4);
    assert!((r.slope - 2.0).abs() < 0.1, "slope {}", r.slope);
    // the cost grows no faster than b d² for b from the largest sample
    let b = r.samples[0].cost / r.samples[0].displacement.powi(2);
    for s in &r.samples {
        assert!(s.cost <= 1.05 * b * s.displacement.powi(2));
    }
}

#[test]
fn controllability_input_errors() {
    let bounds = InputBounds::turtlebot();
    let w = CostWeights::default();
    assert!(verify_controllability_exponent(&DiffDrive, &bounds, &w, &[0.1], 0.2).is_err());
    assert!(verify_controllability_exponent(&DiffDrive, &bounds, &w, &[0.1, 0.0], 0.2).is_err());
    assert!(verify_controllability_exponent(&DiffDrive, &bounds, &w, &[0.1, -0.05], 0.2).is_err());
    assert!(verify_controllability_exponent(&DiffDrive, &bounds, &w, &[0.1, 0.05], 0.0).is_err());
}

#[test]
fn wrap_angle_range() {
    use std::f64::consts::PI;
    assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    assert!((wrap_angle(-0.1) + 0.1).abs() < 1e-15);
    assert_eq!(wrap_angle(0.0), 0.0);
}

#[test]
fn doubled_weights_double_costs_and_keep_slope() {
    let bounds = InputBounds::turtlebot();
    let w = CostWeights::default();
    let w2 = CostWeights {
        position: 2.0 * w.position,
        heading: 2.0 * w.heading,
        v: 2.0 * w.v,
        omega: 2.0 * w.omega,
    };
    let a = verify_controllability_exponent(&DiffDrive, &bounds, &w, &DEFAULT_EPSILONS, 0.2).unwrap();
    let b = verify_controllability_exponent(&DiffDrive, &bounds, &w2, &DEFAULT_EPSILONS, 0.2).unwrap();
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert!((y.cost - 2.0 * x.cost).abs() <= 1e-14 * y.cost);
    }
    assert!((a.slope - b.slope).abs() < 1e-12);
}

#[test]
fn single_configuration_sweep_matches_run() {
    let s = straight(&["termination.max_steps=3"]);
    let direct = run_closed_loop(&s).unwrap();
    let entries = horizon_sweep(&s, &[(s.horizon.steps, s.horizon.step)]).unwrap();
    assert_eq!(entries.len(), 1);
    let swept = entries[0].result.as_ref().unwrap();
    assert_eq!(swept.summary, direct.summary);
    assert_eq!(
        swept.rows,
        direct
            .rows
            .iter()
            .map(|r| LogRow {
                solve_time: swept.rows[r.k].solve_time,
                ..r.clone()
            })
            .collect::<Vec<_>>()
    );
}

#[test]
fn straight_path_lengths_agree_across_horizons() {
    let s = straight(&["path.waypoints=[[0.0, 0.0], [0.8, 0.0]]", "termination.max_steps=60"]);
    let entries = horizon_sweep(&s, &[(4, 0.2), (8, 0.2)]).unwrap();
    let lengths: Vec<f64> = entries
        .iter()
        .map(|e| {
            let log = e.result.as_ref().unwrap();
            assert_eq!(log.summary.outcome, Outcome::Success);
            log.summary.path_length
        })
        .collect();
    assert!((lengths[0] - lengths[1]).abs() <= 0.02 * lengths[0], "{lengths:?}");
    assert!((lengths[1] - 0.8).abs() <= 0.05 + 0.02 * 0.8, "{lengths:?}");
}
