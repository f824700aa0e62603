use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anchored_mpc::dynamics::DiffDrive;
use anchored_mpc::ocp::gradient_check;
use anchored_mpc::path::{check_path_clearance, estimate_lipschitz_gp, ViolationKind};
use anchored_mpc::planner::plan;
use anchored_mpc::scenario::{PathSpec, Scenario};
use anchored_mpc::sim::report::{plan_svg, summary_toml, trajectory_svg, write_run, write_sweep_csv};
use anchored_mpc::sim::{horizon_sweep, run_prepared, verify_controllability_exponent, Outcome, DEFAULT_EPSILONS};
use anchored_mpc::Error;
use clap::{Args, Parser, Subcommand};

const EXIT_INPUT: u8 = 1;
const EXIT_TIMEOUT: u8 = 2;
const EXIT_FAULT: u8 = 3;

const CLEARANCE_SAMPLES: usize = 1000;
const LIPSCHITZ_GRID: usize = 1000;
const SLOPE_RANGE: (f64, f64) = (1.7, 2.3);
const GRADIENT_TOLERANCE: f64 = 1e-5;

#[derive(Parser)]
#[command(
    name = "anchored-mpc",
    version,
    about = "Path-anchored MPC for a differential-drive robot"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Override a scenario value, e.g. `--set horizon.steps=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct Output {
    /// Output directory; defaults to `out/<scenario name>`.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed loop; exit 0 on success, 2 on timeout, 3 on a controller fault.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
    },
    /// Plan waypoints with RRT* and print them as a polyline path table.
    Plan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
        /// Start position `x,y`; defaults to the scenario's planned path.
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        start: Option<[f64; 2]>,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        goal: Option<[f64; 2]>,
    },
    /// Run the closed loop for several `(N, h)` pairs.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
        /// Comma-separated `N:h` pairs, e.g. `5:0.2,10:0.2`; defaults to `[sweep]`.
        #[arg(long, value_parser = parse_horizons)]
        horizons: Option<Horizons>,
    },
    /// Check path clearance, the path Lipschitz estimate and the controllability exponent.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Compare analytic derivatives of the control problem with finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [x, y] => Ok([
            x.trim().parse().map_err(|e| format!("bad x in {s:?}: {e}"))?,
            y.trim().parse().map_err(|e| format!("bad y in {s:?}: {e}"))?,
        ]),
        _ => Err(format!("expected `x,y`, got {s:?}")),
    }
}

#[derive(Clone)]
struct Horizons(Vec<(usize, f64)>);

fn parse_horizons(s: &str) -> Result<Horizons, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (n, h) = p.split_once(':').ok_or_else(|| format!("expected `N:h`, got {p:?}"))?;
            Ok((
                n.parse().map_err(|e| format!("bad N in {p:?}: {e}"))?,
                h.parse().map_err(|e| format!("bad h in {p:?}: {e}"))?,
            ))
        })
        .collect::<Result<_, _>>()
        .map(Horizons)
}

enum Failure {
    Input(Error),
    Exit(u8),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e)
    }
}

type Run = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate { common, output } => simulate(&common, &output),
        Command::Plan {
            common,
            output,
            start,
            goal,
        } => plan_cmd(&common, &output, start, goal),
        Command::Sweep {
            common,
            output,
            horizons,
        } => sweep(&common, &output, horizons),
        Command::Verify { common } => verify(&common),
        Command::Gradcheck { common, samples } => gradcheck(&common, samples),
    };
    match result {
        Ok(code) | Err(Failure::Exit(code)) => ExitCode::from(code),
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn load(common: &Common) -> Result<Scenario, Failure> {
    Ok(Scenario::from_file(&common.scenario, &common.overrides)?)
}

fn out_dir(output: &Output, scenario: &Scenario) -> PathBuf {
    output
        .out
        .clone()
        .unwrap_or_else(|| Path::new("out").join(&scenario.name))
}

fn outcome_code(outcome: &Outcome) -> u8 {
    match outcome {
        Outcome::Success => 0,
        Outcome::Timeout => EXIT_TIMEOUT,
        Outcome::Fault(_) => EXIT_FAULT,
    }
}

fn simulate(common: &Common, output: &Output) -> Run {
    let scenario = load(common)?;
    let prepared = scenario.prepare()?;
    let log = run_prepared(&scenario, &prepared)?;
    let dir = out_dir(output, &scenario);
    write_run(&dir, &scenario, &prepared, &log)?;
    let s = &log.summary;
    println!("{}: {}", scenario.name, s.outcome);
    println!("  steps               {}", s.steps);
    println!("  path length         {:.4}", s.path_length);
    println!("  final distance      {:.4}", s.final_distance);
    println!("  min obstacle margin {:.4}", s.min_obstacle_margin);
    if let Some(fs) = s.final_s {
        println!("  final s*            {fs:.4}");
    }
    println!("  output              {}", dir.display());
    Ok(outcome_code(&s.outcome))
}

fn plan_cmd(common: &Common, output: &Output, start: Option<[f64; 2]>, goal: Option<[f64; 2]>) -> Run {
    let scenario = load(common)?;
    let (default_start, default_goal) = match &scenario.path {
        PathSpec::Planned { start, goal, .. } => (Some(*start), Some(*goal)),
        _ => (None, None),
    };
    let (Some(start), Some(goal)) = (start.or(default_start), goal.or(default_goal)) else {
        return Err(Error::InvalidArgument("give --start and --goal or use a planned path".into()).into());
    };
    let raw = scenario.raw_obstacles()?;
    let inflated = scenario.obstacles()?;
    let result = plan(start, goal, &inflated, &scenario.planner)?;
    let dir = out_dir(output, &scenario);
    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    std::fs::write(
        dir.join("plan.svg"),
        plan_svg(&raw, &inflated, &result, scenario.planner.bounds),
    )
    .map_err(Error::from)?;
    let Some(path) = result.path else {
        eprintln!("no path found after {} iterations", scenario.planner.max_iterations);
        return Err(Failure::Exit(EXIT_TIMEOUT));
    };
    let mut csv = String::from("x,y\n");
    for p in &path {
        csv.push_str(&format!("{:e},{:e}\n", p[0], p[1]));
    }
    std::fs::write(dir.join("waypoints.csv"), csv).map_err(Error::from)?;
    let pts: Vec<String> = path.iter().map(|p| format!("[{}, {}]", p[0], p[1])).collect();
    println!("[path]\nkind = \"polyline\"\nwaypoints = [{}]", pts.join(", "));
    Ok(0)
}

fn sweep(common: &Common, output: &Output, horizons: Option<Horizons>) -> Run {
    let scenario = load(common)?;
    let horizons = horizons.map_or_else(|| scenario.sweep.horizons.clone(), |h| h.0);
    let entries = horizon_sweep(&scenario, &horizons)?;
    let dir = out_dir(output, &scenario);
    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    write_sweep_csv(
        &entries,
        std::fs::File::create(dir.join("sweep.csv")).map_err(Error::from)?,
    )?;

    let mut traces = Vec::new();
    let mut code = 0;
    for e in &entries {
        let label = format!("N={} h={}", e.horizon, e.step);
        match &e.result {
            Ok(log) => {
                println!(
                    "{label}: {} steps={} length={:.4} cost={:.4e}",
                    log.summary.outcome, log.summary.steps, log.summary.path_length, log.summary.closed_loop_cost
                );
                let mut s = scenario.clone();
                s.horizon.steps = e.horizon;
                s.horizon.step = e.step;
                let run_dir = dir.join(format!("n{}_h{}", e.horizon, e.step));
                write_run(&run_dir, &s, &s.prepare()?, log)?;
                traces.push((label, log.positions()));
                code = code.max(outcome_code(&log.summary.outcome));
            }
            Err(msg) => {
                println!("{label}: error: {msg}");
                code = EXIT_FAULT;
            }
        }
    }
    let prepared = scenario.prepare()?;
    let refs: Vec<(&str, &[[f64; 2]])> = traces.iter().map(|(l, p)| (l.as_str(), p.as_slice())).collect();
    std::fs::write(dir.join("sweep.svg"), trajectory_svg(&scenario, &prepared, &refs)?).map_err(Error::from)?;
    if let Some(Ok(first)) = entries.first().map(|e| &e.result) {
        std::fs::write(dir.join("summary.toml"), summary_toml(&scenario, first)?).map_err(Error::from)?;
    }
    Ok(code)
}

fn verify(common: &Common) -> Run {
    let scenario = load(common)?;
    let prepared = scenario.prepare()?;
    let spec = &prepared.spec;
    let mut ok = true;

    let clearance = check_path_clearance(
        spec.model.as_ref(),
        spec.path.as_ref(),
        &spec.input_bounds,
        &spec.obstacles,
        spec.delta_sep,
        spec.step,
        CLEARANCE_SAMPLES,
    )?;
    if clearance.passed() {
        println!(
            "clearance: pass ({} samples, min margin {:.4})",
            clearance.samples, clearance.min_margin
        );
    } else {
        ok = false;
        println!("clearance: FAIL at {} samples", clearance.violations.len());
        for v in &clearance.violations {
            let what = match v.kind {
                ViolationKind::Collision => format!("obstacle {}", v.obstacle.unwrap_or(0)),
                _ => format!("{:?}", v.kind),
            };
            println!("  s = {:.4}: {what}", v.s);
        }
    }

    let lipschitz = estimate_lipschitz_gp(spec.model.as_ref(), spec.path.as_ref(), LIPSCHITZ_GRID)?;
    if lipschitz.is_finite() {
        println!("lipschitz: pass (L_g ≈ {lipschitz:.4})");
    } else {
        ok = false;
        println!("lipschitz: FAIL (estimate is not finite)");
    }

    let report = verify_controllability_exponent(
        &DiffDrive,
        &spec.input_bounds,
        &spec.weights,
        &DEFAULT_EPSILONS,
        spec.step,
    )?;
    let slope_ok = (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&report.slope);
    ok &= slope_ok;
    println!(
        "controllability exponent: {} (slope {:.4}, expected in [{}, {}])",
        if slope_ok { "pass" } else { "FAIL" },
        report.slope,
        SLOPE_RANGE.0,
        SLOPE_RANGE.1
    );
    for s in &report.samples {
        println!("  ε = {:<6} d = {:.3e}  Σℓ = {:.3e}", s.epsilon, s.displacement, s.cost);
    }
    Ok(if ok { 0 } else { EXIT_TIMEOUT })
}

fn gradcheck(common: &Common, samples: usize) -> Run {
    let scenario = load(common)?;
    let prepared = scenario.prepare()?;
    let reports = gradient_check(
        &prepared.spec,
        prepared.initial_state.as_slice(),
        samples,
        scenario.rng_seed,
    )?;
    let worst = reports.iter().map(|r| r.max()).fold(0.0, f64::max);
    for (i, r) in reports.iter().enumerate() {
        println!(
            "sample {i:>3}: objective {:.2e}  equality {:.2e}  inequality {:.2e}",
            r.objective, r.equality, r.inequality
        );
    }
    let ok = worst <= GRADIENT_TOLERANCE;
    println!(
        "gradcheck: {} (largest gap {worst:.2e}, tolerance {GRADIENT_TOLERANCE:e})",
        if ok { "pass" } else { "FAIL" }
    );
    Ok(if ok { 0 } else { EXIT_TIMEOUT })
}
