//! Scenario-level acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any criterion fails.

use std::path::PathBuf;
use std::time::Instant;

use anchored_mpc::dynamics::{rk4_step, DiffDrive, InputBounds};
use anchored_mpc::nlp::{solve, DenseProblem, NlpOptions, NlpProblem};
use anchored_mpc::ocp::{gradient_check, CostWeights};
use anchored_mpc::planner::{path_length, rrt_star, PlannerConfig};
use anchored_mpc::scenario::Scenario;
use anchored_mpc::sim::{
    horizon_sweep, run_closed_loop, run_prepared, verify_controllability_exponent, LogRow, Outcome, DEFAULT_EPSILONS,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    Scenario::from_file(&path, &[]).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn fig1_proposed() -> (Verdict, Verdict, Verdict) {
    let sc = scenario("fig1_proposed.toml");
    let delta = sc.cost.delta_sep;
    let prepared = sc.prepare().expect("fig1 scenario prepares");
    let t = Instant::now();
    let log = match run_prepared(&sc, &prepared) {
        Ok(l) => l,
        Err(e) => {
            let v = || verdict(false, format!("run failed: {e}"));
            return (v(), v(), v());
        }
    };
    let secs = t.elapsed().as_secs_f64();
    let sm = &log.summary;

    let dist = (log.final_state[0] - 2.5).hypot(log.final_state[1]);
    let c1 = verdict(
        sm.outcome == Outcome::Success && sm.steps <= 300 && dist <= 0.05 && sm.min_obstacle_margin >= delta - 1e-8,
        format!(
            "{} after {} steps, distance to (2.5, 0) {dist:.4}, min margin {:.2e}, {secs:.0} s",
            sm.outcome, sm.steps, sm.min_obstacle_margin
        ),
    );

    // decrease of V_N by at least the first stage cost, and a feasible shift, at every step
    let tol = |v: f64| 1e-4 * (1.0 + v);
    let mut worst_slack = f64::INFINITY;
    let mut lyap_fail = 0;
    let mut shift_fail = 0;
    let mut worst_shift = 0.0f64;
    let lay = prepared.spec.layout();
    let w = sc.weights();
    let first_stage = |z: &[f64]| {
        // ℓ(x_{0|k} − x_s, u_{0|k} − u_s) with (x_s, u_s) the last predicted pair
        let (x0, u0) = (&z[lay.state(0)..], &z[lay.input(0)..]);
        let (xs, us) = (&z[lay.state(lay.horizon)..], &z[lay.input(lay.horizon)..]);
        w.position * ((x0[0] - xs[0]).powi(4) + (x0[1] - xs[1]).powi(4))
            + w.heading * (x0[2] - xs[2]).powi(4)
            + w.v * (u0[0] - us[0]).powi(4)
            + w.omega * (u0[1] - us[1]).powi(4)
    };
    for k in 1..log.rows.len() {
        let (prev, curr) = (&log.rows[k - 1], &log.rows[k]);
        let slack = prev.value - curr.value - first_stage(&log.solutions[k - 1]);
        worst_slack = worst_slack.min(slack + tol(prev.value));
        if slack < -tol(prev.value) {
            lyap_fail += 1;
        }
        worst_shift = worst_shift.max(curr.candidate_violation);
        if curr.candidate_violation > 1e-6 {
            shift_fail += 1;
        }
    }
    let final_s = sm.final_s.unwrap_or(f64::NAN);
    let c3 = verdict(
        lyap_fail == 0 && shift_fail == 0 && final_s >= 0.99,
        format!(
            "decrease violations {lyap_fail} (smallest margin {worst_slack:.2e}), shift violations {shift_fail} (largest {worst_shift:.2e}), final s* {final_s:.4}"
        ),
    );

    // last 50 steps: V_N − V_o(1 − s*) must not grow while ‖x_k − x_s*‖ shrinks
    let start = log.rows.len().saturating_sub(50);
    let mut bad = Vec::new();
    for k in start.max(1)..log.rows.len() {
        let (prev, curr) = (&log.rows[k - 1], &log.rows[k]);
        let gap = |r: &LogRow| r.value - sc.cost.offset * (1.0 - r.s_star.unwrap()).powi(2);
        if curr.tracking_gap < prev.tracking_gap && gap(curr) - gap(prev) > tol(prev.value) {
            bad.push(format!("k={} (+{:.1e})", k, gap(curr) - gap(prev)));
        }
    }
    let c4 = verdict(
        bad.is_empty(),
        if bad.is_empty() {
            format!("steps {start}..{} monotone", log.rows.len())
        } else {
            format!("increase while the tracking gap shrinks at {}", bad.join(", "))
        },
    );
    (c1, c3, c4)
}

fn fig1_baseline() -> Verdict {
    let s = scenario("fig1_baseline.toml");
    match run_closed_loop(&s) {
        Ok(log) => {
            let sm = &log.summary;
            verdict(
                sm.outcome == Outcome::Timeout && sm.steps == 200 && sm.final_distance > 0.5,
                format!(
                    "{} after {} steps, final distance {:.3} at ({:.3}, {:.3})",
                    sm.outcome, sm.steps, sm.final_distance, log.final_state[0], log.final_state[1]
                ),
            )
        }
        Err(e) => verdict(false, format!("run failed: {e}")),
    }
}

fn fig2() -> Verdict {
    let s = scenario("fig2.toml");
    let entries = match horizon_sweep(&s, &[(5, 0.2), (10, 0.2), (20, 0.2)]) {
        Ok(e) => e,
        Err(e) => return verdict(false, format!("sweep failed: {e}")),
    };
    let mut lengths = Vec::new();
    for e in &entries {
        match &e.result {
            Ok(log) if log.summary.outcome == Outcome::Success => lengths.push(log.summary.path_length),
            Ok(log) => return verdict(false, format!("N={}: {}", e.horizon, log.summary.outcome)),
            Err(m) => return verdict(false, format!("N={}: {m}", e.horizon)),
        }
    }
    let monotone = lengths.windows(2).all(|w| w[1] <= w[0]);
    let gain = 1.0 - lengths[2] / lengths[0];
    verdict(
        monotone && gain >= 0.02,
        format!(
            "lengths N=5 {:.4}, N=10 {:.4}, N=20 {:.4}; N=20 shorter by {:.1}%",
            lengths[0],
            lengths[1],
            lengths[2],
            100.0 * gain
        ),
    )
}

fn controllability() -> Verdict {
    match verify_controllability_exponent(
        &DiffDrive,
        &InputBounds::turtlebot(),
        &CostWeights::default(),
        &DEFAULT_EPSILONS,
        0.2,
    ) {
        Ok(r) => verdict((1.7..=2.3).contains(&r.slope), format!("fitted slope {:.4}", r.slope)),
        Err(e) => verdict(false, e.to_string()),
    }
}

/// Classical RK4 with `substeps` steps over plain arrays.
fn fine_rk4(x: [f64; 3], u: [f64; 2], h: f64, substeps: usize) -> [f64; 3] {
    let f = |s: [f64; 3]| [u[0] * s[2].cos(), u[0] * s[2].sin(), u[1]];
    let dt = h / substeps as f64;
    let mut s = x;
    for _ in 0..substeps {
        let k1 = f(s);
        let k2 = f([
            s[0] + dt / 2.0 * k1[0],
            s[1] + dt / 2.0 * k1[1],
            s[2] + dt / 2.0 * k1[2],
        ]);
        let k3 = f([
            s[0] + dt / 2.0 * k2[0],
            s[1] + dt / 2.0 * k2[1],
            s[2] + dt / 2.0 * k2[2],
        ]);
        let k4 = f([s[0] + dt * k3[0], s[1] + dt * k3[1], s[2] + dt * k3[2]]);
        for i in 0..3 {
            s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    s
}

fn kernels() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_rk4 = 0.0f64;
    for _ in 0..100 {
        let x = [
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.2..3.2),
        ];
        let u = [rng.gen_range(-0.31..0.31), rng.gen_range(-1.9..1.9)];
        let step = rk4_step(
            &DiffDrive,
            &DVector::from_column_slice(&x),
            &DVector::from_column_slice(&u),
            0.2,
        )
        .unwrap();
        let o = fine_rk4(x, u, 0.2, 10_000);
        for i in 0..3 {
            worst_rk4 = worst_rk4.max((step[i] - o[i]).abs());
        }
    }

    let mut worst_grad = 0.0f64;
    for name in ["fig1_proposed.toml", "fig1_baseline.toml", "fig2.toml", "fig3.toml"] {
        let s = scenario(name);
        let p = match s.prepare() {
            Ok(p) => p,
            Err(e) => return verdict(false, format!("{name}: {e}")),
        };
        match gradient_check(&p.spec, p.initial_state.as_slice(), 20, s.rng_seed) {
            Ok(reports) => {
                for r in reports {
                    worst_grad = worst_grad.max(r.max());
                }
            }
            Err(e) => return verdict(false, format!("{name}: {e}")),
        }
    }
    verdict(
        worst_rk4 <= 1e-8 && worst_grad <= 1e-5,
        format!(
            "RK4 vs 10,000-substep oracle {worst_rk4:.2e} (need 1e-8); derivative gap {worst_grad:.2e} (need 1e-5)"
        ),
    )
}

fn farkas() -> Verdict {
    let mut disagreements = 0;
    let mut outside = 0;
    let mut points = 0;
    let mut on_face = 0;
    for name in ["fig1_proposed.toml", "fig3.toml"] {
        let sc = scenario(name);
        let prepared = match sc.prepare() {
            Ok(p) => p,
            Err(e) => return verdict(false, format!("{name}: {e}")),
        };
        // the scenario's workspace box
        let [x0, y0, x1, y1] = sc.planner.bounds;
        for o in &prepared.spec.obstacles {
            let (a, b) = (o.normals().to_vec(), o.offsets().to_vec());
            for i in 0..200 {
                for j in 0..200 {
                    let p = [x0 + (x1 - x0) * i as f64 / 199.0, y0 + (y1 - y0) * j as f64 / 199.0];
                    points += 1;
                    // inside iff A p ≤ b row by row
                    let sign_outside = a.iter().zip(&b).any(|(n, off)| n[0] * p[0] + n[1] * p[1] > *off);
                    outside += usize::from(sign_outside);
                    let cert = o.certificate_exists(p, 0.0);
                    let sound = cert.as_ref().is_none_or(|c| {
                        let mu = c.mu();
                        let sum: f64 = mu.iter().sum();
                        let margin: f64 = mu
                            .iter()
                            .zip(a.iter().zip(&b))
                            .map(|(m, (n, off))| m * (n[0] * p[0] + n[1] * p[1] - off))
                            .sum();
                        mu.iter().all(|m| *m >= 0.0) && (sum - 1.0).abs() < 1e-12 && margin > 0.0
                    });
                    if cert.is_some() != sign_outside || !sound {
                        disagreements += 1;
                        on_face += usize::from(o.max_face_value(p) == 0.0);
                    }
                }
            }
        }
    }
    verdict(
        disagreements == 0,
        format!(
            "{disagreements} disagreements ({on_face} exactly on a face) over {points} grid points ({outside} outside)"
        ),
    )
}

struct Known {
    name: &'static str,
    problem: DenseProblem,
    z0: Vec<f64>,
    z_star: Vec<f64>,
    f_star: f64,
}

fn regression_problems() -> Vec<Known> {
    let inf = f64::INFINITY;
    vec![
        Known {
            name: "bound via inequality",
            problem: DenseProblem::new(1, |z| (z[0] - 1.0).powi(2), |z, g| g[0] = 2.0 * (z[0] - 1.0))
                .inequality(|z| z[0] - 2.0, |_, g| g[0] = 1.0),
            z0: vec![0.0],
            z_star: vec![2.0],
            f_star: 1.0,
        },
        Known {
            name: "projection onto a line",
            problem: DenseProblem::new(
                2,
                |z| z[0] * z[0] + z[1] * z[1],
                |z, g| {
                    g[0] = 2.0 * z[0];
                    g[1] = 2.0 * z[1];
                },
            )
            .equality(
                |z| z[0] + z[1] - 1.0,
                |_, g| {
                    g[0] = 1.0;
                    g[1] = 1.0;
                },
            ),
            z0: vec![3.0, -1.0],
            z_star: vec![0.5, 0.5],
            f_star: 0.5,
        },
        Known {
            name: "Rosenbrock in a box",
            problem: DenseProblem::new(
                2,
                |z| (1.0 - z[0]).powi(2) + 100.0 * (z[1] - z[0] * z[0]).powi(2),
                |z, g| {
                    g[0] = -2.0 * (1.0 - z[0]) - 400.0 * z[0] * (z[1] - z[0] * z[0]);
                    g[1] = 200.0 * (z[1] - z[0] * z[0]);
                },
            )
            .with_bounds(vec![-2.0; 2], vec![2.0; 2]),
            z0: vec![-1.2, 1.0],
            z_star: vec![1.0, 1.0],
            f_star: 0.0,
        },
        Known {
            name: "Rosenbrock as equality",
            problem: DenseProblem::new(
                2,
                |z| (1.0 - z[0]).powi(2),
                |z, g| {
                    g[0] = -2.0 * (1.0 - z[0]);
                    g[1] = 0.0;
                },
            )
            .equality(
                |z| 10.0 * (z[1] - z[0] * z[0]),
                |z, g| {
                    g[0] = -20.0 * z[0];
                    g[1] = 10.0;
                },
            ),
            z0: vec![-1.2, 1.0],
            z_star: vec![1.0, 1.0],
            f_star: 0.0,
        },
        Known {
            name: "linear objective on a circle",
            problem: DenseProblem::new(
                2,
                |z| z[0] + z[1],
                |_, g| {
                    g[0] = 1.0;
                    g[1] = 1.0;
                },
            )
            .equality(
                |z| z[0] * z[0] + z[1] * z[1] - 2.0,
                |z, g| {
                    g[0] = 2.0 * z[0];
                    g[1] = 2.0 * z[1];
                },
            ),
            z0: vec![-0.5, -1.5],
            z_star: vec![-1.0, -1.0],
            f_star: -2.0,
        },
        Known {
            name: "bilinear with budget",
            problem: DenseProblem::new(
                2,
                |z| -z[0] * z[1],
                |z, g| {
                    g[0] = -z[1];
                    g[1] = -z[0];
                },
            )
            .inequality(
                |z| 2.0 - z[0] - z[1],
                |_, g| {
                    g[0] = -1.0;
                    g[1] = -1.0;
                },
            )
            .with_bounds(vec![0.0; 2], vec![inf; 2]),
            z0: vec![0.2, 0.5],
            z_star: vec![1.0, 1.0],
            f_star: -1.0,
        },
        Known {
            name: "distance to a parabola region",
            problem: DenseProblem::new(
                2,
                |z| (z[0] - 2.0).powi(2) + (z[1] - 1.0).powi(2),
                |z, g| {
                    g[0] = 2.0 * (z[0] - 2.0);
                    g[1] = 2.0 * (z[1] - 1.0);
                },
            )
            .inequality(
                |z| z[1] - z[0] * z[0],
                |z, g| {
                    g[0] = -2.0 * z[0];
                    g[1] = 1.0;
                },
            )
            .inequality(
                |z| 2.0 - z[0] - z[1],
                |_, g| {
                    g[0] = -1.0;
                    g[1] = -1.0;
                },
            ),
            z0: vec![0.0, 0.0],
            z_star: vec![1.0, 1.0],
            f_star: 1.0,
        },
        Known {
            name: "box-only quadratic",
            problem: DenseProblem::new(
                2,
                |z| (z[0] - 3.0).powi(2) + (z[1] + 3.0).powi(2),
                |z, g| {
                    g[0] = 2.0 * (z[0] - 3.0);
                    g[1] = 2.0 * (z[1] + 3.0);
                },
            )
            .with_bounds(vec![0.0; 2], vec![1.0; 2]),
            z0: vec![0.5, 0.5],
            z_star: vec![1.0, 0.0],
            f_star: 13.0,
        },
        Known {
            name: "minimum norm on a plane",
            problem: DenseProblem::new(
                3,
                |z| z.iter().map(|v| v * v).sum(),
                |z, g| {
                    for i in 0..3 {
                        g[i] = 2.0 * z[i];
                    }
                },
            )
            .equality(
                |z| z[0] + 2.0 * z[1] + 3.0 * z[2] - 6.0,
                |_, g| {
                    g[0] = 1.0;
                    g[1] = 2.0;
                    g[2] = 3.0;
                },
            ),
            z0: vec![0.0; 3],
            z_star: vec![3.0 / 7.0, 6.0 / 7.0, 9.0 / 7.0],
            f_star: 18.0 / 7.0,
        },
        Known {
            name: "Hock-Schittkowski 35",
            problem: DenseProblem::new(
                3,
                |z| {
                    9.0 - 8.0 * z[0] - 6.0 * z[1] - 4.0 * z[2]
                        + 2.0 * z[0] * z[0]
                        + 2.0 * z[1] * z[1]
                        + z[2] * z[2]
                        + 2.0 * z[0] * z[1]
                        + 2.0 * z[0] * z[2]
                },
                |z, g| {
                    g[0] = -8.0 + 4.0 * z[0] + 2.0 * z[1] + 2.0 * z[2];
                    g[1] = -6.0 + 4.0 * z[1] + 2.0 * z[0];
                    g[2] = -4.0 + 2.0 * z[2] + 2.0 * z[0];
                },
            )
            .inequality(
                |z| 3.0 - z[0] - z[1] - 2.0 * z[2],
                |_, g| {
                    g[0] = -1.0;
                    g[1] = -1.0;
                    g[2] = -2.0;
                },
            )
            .with_bounds(vec![0.0; 3], vec![inf; 3]),
            z0: vec![0.5; 3],
            z_star: vec![4.0 / 3.0, 7.0 / 9.0, 4.0 / 9.0],
            f_star: 1.0 / 9.0,
        },
        Known {
            name: "Hock-Schittkowski 71",
            problem: DenseProblem::new(
                4,
                |z| z[0] * z[3] * (z[0] + z[1] + z[2]) + z[2],
                |z, g| {
                    let s = z[0] + z[1] + z[2];
                    g[0] = z[3] * s + z[0] * z[3];
                    g[1] = z[0] * z[3];
                    g[2] = z[0] * z[3] + 1.0;
                    g[3] = z[0] * s;
                },
            )
            .inequality(
                |z| z[0] * z[1] * z[2] * z[3] - 25.0,
                |z, g| {
                    g[0] = z[1] * z[2] * z[3];
                    g[1] = z[0] * z[2] * z[3];
                    g[2] = z[0] * z[1] * z[3];
                    g[3] = z[0] * z[1] * z[2];
                },
            )
            .equality(
                |z| z.iter().map(|v| v * v).sum::<f64>() - 40.0,
                |z, g| {
                    for i in 0..4 {
                        g[i] = 2.0 * z[i];
                    }
                },
            )
            .with_bounds(vec![1.0; 4], vec![5.0; 4]),
            z0: vec![1.0, 5.0, 5.0, 1.0],
            z_star: vec![1.0, 4.742_999_637, 3.821_149_984, 1.379_408_291],
            f_star: 17.014_017_289,
        },
        Known {
            name: "separable quadratic",
            problem: DenseProblem::new(
                5,
                |z| (0..5).map(|i| (i + 1) as f64 * (z[i] - i as f64).powi(2)).sum(),
                |z, g| {
                    for i in 0..5 {
                        g[i] = 2.0 * (i + 1) as f64 * (z[i] - i as f64);
                    }
                },
            ),
            z0: vec![10.0; 5],
            z_star: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            f_star: 0.0,
        },
    ]
}

fn nlp_suite() -> Verdict {
    let opts = NlpOptions::default();
    let problems = regression_problems();
    let mut failures = Vec::new();
    for k in &problems {
        let a = solve(&k.problem, &k.z0, &opts);
        let b = solve(&k.problem, &k.z0, &opts);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                let dz =
                    a.z.iter()
                        .zip(&k.z_star)
                        .map(|(x, y)| (x - y).abs())
                        .fold(0.0, f64::max);
                let df = (k.problem.objective(&a.z) - k.f_star).abs();
                let same = a.z.iter().zip(&b.z).all(|(x, y)| x.to_bits() == y.to_bits());
                if dz > 1e-5 || df > 1e-5 || !same {
                    failures.push(format!("{} (|Δz| {dz:.1e}, |Δf| {df:.1e}, repeatable {same})", k.name));
                }
            }
            (Err(e), _) | (_, Err(e)) => failures.push(format!("{}: {e}", k.name)),
        }
    }
    verdict(
        problems.len() >= 10 && failures.is_empty(),
        if failures.is_empty() {
            format!("{} problems solved to 1e-5, bit-identical on repeat", problems.len())
        } else {
            failures.join("; ")
        },
    )
}

fn planner() -> Verdict {
    let config = PlannerConfig {
        max_iterations: 1000,
        ..PlannerConfig::default()
    };
    let (start, goal) = ([0.0, 0.0], [2.5, 0.0]);
    match rrt_star(start, goal, &[], &config) {
        Ok(Some(path)) => {
            let len = path_length(&path);
            let ratio = len / 2.5;
            let ends = path.first() == Some(&start) && path.last() == Some(&goal);
            verdict(
                ends && ratio <= 1.2,
                format!("length {len:.4}, {ratio:.3} × straight line"),
            )
        }
        Ok(None) => verdict(false, "no path found"),
        Err(e) => verdict(false, e.to_string()),
    }
}

fn main() {
    // `cargo test --test acceptance -- 4 8` runs only the listed criteria
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| only.is_empty() || only.contains(&n);

    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    if wanted(1) || wanted(3) || wanted(4) {
        let (c1, c3, c4) = fig1_proposed();
        results.push((1, "obstacle scenario reaches the target (proposed)", c1));
        results.push((3, "value decrease, shift feasibility, s* → 1", c3));
        results.push((4, "tracking part of the value shrinks with the tracking gap", c4));
    }
    let rest: [(u32, &str, fn() -> Verdict); 7] = [
        (2, "obstacle scenario gets stuck (baseline)", fig1_baseline),
        (5, "longer horizons shorten the L-shaped route", fig2),
        (6, "controllability exponent", controllability),
        (7, "integrator and derivative accuracy", kernels),
        (8, "Farkas certificates agree with the sign test", farkas),
        (9, "NLP regression problems", nlp_suite),
        (10, "RRT* on the empty map", planner),
    ];
    for (n, title, run) in rest {
        if wanted(n) {
            results.push((n, title, run()));
        }
    }
    results.retain(|r| wanted(r.0));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (n, title, v) in &results {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {n:>2}: {title}: {}", v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
