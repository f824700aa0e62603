//! Reference paths `p: [0, 1] → configuration` and their steady-state lift.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::dynamics::{rk4_step, DynamicsModel, InputBounds};
use crate::geometry::ConvexPolytope;
use crate::{Error, Result};

/// Default corner blend radius [m].
pub const DEFAULT_CORNER_RADIUS: f64 = 0.1;

/// Safety factor applied to grid-estimated Lipschitz constants.
pub const LIPSCHITZ_SAFETY: f64 = 1.2;

/// Continuous planar path parametrized by progress `s ∈ [0, 1]`.
///
/// Configurations are poses `(px, py, θ)` with the heading along the curve
/// tangent. Callers must keep `s` inside `[0, 1]`; [`ReferencePath::checked_eval`]
/// validates it.
pub trait ReferencePath: Send + Sync {
    fn eval(&self, s: f64) -> DVector<f64>;

    /// `dp/ds`.
    fn derivative(&self, s: f64) -> DVector<f64>;

    fn checked_eval(&self, s: f64) -> Result<DVector<f64>> {
        check_progress(s)?;
        Ok(self.eval(s))
    }
}

fn check_progress(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("path progress {s} outside [0, 1]")))
    }
}

/// Steady pair `g_p(s)` for `model` along `path`.
pub fn lift<M: DynamicsModel + ?Sized, P: ReferencePath + ?Sized>(
    model: &M,
    path: &P,
    s: f64,
) -> (DVector<f64>, DVector<f64>) {
    model.steady_state(&path.eval(s))
}

/// `(L s, A sin(π s), atan(A π cos(π s) / L))`: a half sine arc from the
/// origin to `(L, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidPath {
    pub length: f64,
    pub amplitude: f64,
}

impl Default for SinusoidPath {
    fn default() -> Self {
        Self {
            length: 2.5,
            amplitude: 1.1,
        }
    }
}

impl SinusoidPath {
    pub fn new(length: f64, amplitude: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite() && amplitude.is_finite()) {
            return Err(Error::InvalidPath(format!(
                "sinusoid needs positive length and finite amplitude, got ({length}, {amplitude})"
            )));
        }
        Ok(Self { length, amplitude })
    }

    fn slope(&self, s: f64) -> f64 {
        self.amplitude * PI * (PI * s).cos() / self.length
    }
}

/// The sinusoid path with default parameters evaluated at `s`.
pub fn sinusoid_path(s: f64) -> Result<[f64; 3]> {
    let p = SinusoidPath::default().checked_eval(s)?;
    Ok([p[0], p[1], p[2]])
}

impl ReferencePath for SinusoidPath {
    fn eval(&self, s: f64) -> DVector<f64> {
        DVector::from_vec(vec![
            self.length * s,
            self.amplitude * (PI * s).sin(),
            self.slope(s).atan(),
        ])
    }

    fn derivative(&self, s: f64) -> DVector<f64> {
        let q = self.slope(s);
        let dq = -self.amplitude * PI * PI * (PI * s).sin() / self.length;
        DVector::from_vec(vec![
            self.length,
            self.amplitude * PI * (PI * s).cos(),
            dq / (1.0 + q * q),
        ])
    }
}

/// Degenerate path that stays at one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPath(pub DVector<f64>);

impl ReferencePath for ConstantPath {
    fn eval(&self, _s: f64) -> DVector<f64> {
        self.0.clone()
    }

    fn derivative(&self, _s: f64) -> DVector<f64> {
        DVector::zeros(self.0.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Line {
        start: [f64; 2],
        dir: [f64; 2],
        heading: f64,
        length: f64,
    },
    Arc {
        center: [f64; 2],
        radius: f64,
        // polar angle of the start point about the center
        start_angle: f64,
        // +1 counter-clockwise, −1 clockwise
        turn: f64,
        start_heading: f64,
        length: f64,
    },
}

impl Piece {
    fn length(&self) -> f64 {
        match self {
            Piece::Line { length, .. } | Piece::Arc { length, .. } => *length,
        }
    }

    /// Pose and its derivative with respect to arc length at local offset `l`.
    fn eval(&self, l: f64) -> ([f64; 3], [f64; 3]) {
        match *self {
            Piece::Line {
                start, dir, heading, ..
            } => (
                [start[0] + l * dir[0], start[1] + l * dir[1], heading],
                [dir[0], dir[1], 0.0],
            ),
            Piece::Arc {
                center,
                radius,
                start_angle,
                turn,
                start_heading,
                ..
            } => {
                let phi = start_angle + turn * l / radius;
                let (sin, cos) = phi.sin_cos();
                (
                    [
                        center[0] + radius * cos,
                        center[1] + radius * sin,
                        start_heading + turn * l / radius,
                    ],
                    [-turn * sin, turn * cos, turn / radius],
                )
            }
        }
    }
}

/// Arc-length parametrized polyline whose corners are replaced by circular
/// blends so that the heading is continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct PolylinePath {
    waypoints: Vec<[f64; 2]>,
    corner_radius: f64,
    pieces: Vec<Piece>,
    // cumulative arc length at the start of each piece
    starts: Vec<f64>,
    total: f64,
}

impl PolylinePath {
    pub fn new(waypoints: &[[f64; 2]], corner_radius: f64) -> Result<Self> {
        if !(corner_radius >= 0.0 && corner_radius.is_finite()) {
            return Err(Error::InvalidPath(format!(
                "corner radius must be ≥ 0, got {corner_radius}"
            )));
        }
        let mut pts: Vec<[f64; 2]> = Vec::with_capacity(waypoints.len());
        for w in waypoints {
            if !(w[0].is_finite() && w[1].is_finite()) {
                return Err(Error::InvalidPath("waypoints must be finite".into()));
            }
            if pts
                .last()
                .is_none_or(|q: &[f64; 2]| (q[0] - w[0]).hypot(q[1] - w[1]) > 1e-12)
            {
                pts.push(*w);
            }
        }
        if pts.len() < 2 {
            return Err(Error::InvalidPath("need at least two distinct waypoints".into()));
        }

        let nseg = pts.len() - 1;
        let mut dirs = Vec::with_capacity(nseg);
        let mut lens = Vec::with_capacity(nseg);
        for w in pts.windows(2) {
            let (dx, dy) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
            let len = dx.hypot(dy);
            dirs.push([dx / len, dy / len]);
            lens.push(len);
        }
        // signed turn at each interior waypoint and the resulting unwrapped headings
        let mut turns = Vec::with_capacity(nseg.saturating_sub(1));
        let mut headings = vec![dirs[0][1].atan2(dirs[0][0])];
        for i in 1..nseg {
            let (a, b) = (dirs[i - 1], dirs[i]);
            let turn = (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1]);
            if (turn.abs() - PI).abs() < 1e-9 {
                return Err(Error::InvalidPath(format!("waypoint {i} reverses direction")));
            }
            turns.push(turn);
            headings.push(headings[i - 1] + turn);
        }
        let setback: Vec<f64> = turns.iter().map(|t| corner_radius * (t.abs() / 2.0).tan()).collect();
        for i in 0..nseg {
            let before = if i > 0 { setback[i - 1] } else { 0.0 };
            let after = if i < nseg - 1 { setback[i] } else { 0.0 };
            if before + after > lens[i] + 1e-12 {
                return Err(Error::InvalidPath(format!(
                    "corner radius {corner_radius} too large for segment {i} of length {:.4}",
                    lens[i]
                )));
            }
        }

        let mut pieces = Vec::new();
        for i in 0..nseg {
            let before = if i > 0 { setback[i - 1] } else { 0.0 };
            let after = if i < nseg - 1 { setback[i] } else { 0.0 };
            let d = dirs[i];
            let start = [pts[i][0] + before * d[0], pts[i][1] + before * d[1]];
            let line_len = (lens[i] - before - after).max(0.0);
            if line_len > 0.0 {
                pieces.push(Piece::Line {
                    start,
                    dir: d,
                    heading: headings[i],
                    length: line_len,
                });
            }
            if i < nseg - 1 && turns[i] != 0.0 && corner_radius > 0.0 {
                let turn = turns[i].signum();
                let arc_start = [pts[i + 1][0] - after * d[0], pts[i + 1][1] - after * d[1]];
                // center lies on the left normal for left turns
                let normal = [-d[1] * turn, d[0] * turn];
                let center = [
                    arc_start[0] + corner_radius * normal[0],
                    arc_start[1] + corner_radius * normal[1],
                ];
                let start_angle = (arc_start[1] - center[1]).atan2(arc_start[0] - center[0]);
                pieces.push(Piece::Arc {
                    center,
                    radius: corner_radius,
                    start_angle,
                    turn,
                    start_heading: headings[i],
                    length: corner_radius * turns[i].abs(),
                });
            }
        }
        if corner_radius == 0.0 && nseg > 1 {
            return Err(Error::InvalidPath(
                "a zero corner radius leaves heading jumps at corners".into(),
            ));
        }

        let mut starts = Vec::with_capacity(pieces.len());
        let mut total = 0.0;
        for p in &pieces {
            starts.push(total);
            total += p.length();
        }
        Ok(Self {
            waypoints: pts,
            corner_radius,
            pieces,
            starts,
            total,
        })
    }

    pub fn waypoints(&self) -> &[[f64; 2]] {
        &self.waypoints
    }

    pub fn corner_radius(&self) -> f64 {
        self.corner_radius
    }

    /// Arc length of the blended curve.
    pub fn length(&self) -> f64 {
        self.total
    }

    fn locate(&self, s: f64) -> (&Piece, f64) {
        let l = s.clamp(0.0, 1.0) * self.total;
        let idx = match self.starts.binary_search_by(|x| x.total_cmp(&l)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        let idx = idx.min(self.pieces.len() - 1);
        let piece = &self.pieces[idx];
        (piece, (l - self.starts[idx]).min(piece.length()))
    }
}

impl ReferencePath for PolylinePath {
    fn eval(&self, s: f64) -> DVector<f64> {
        let (piece, l) = self.locate(s);
        DVector::from_column_slice(&piece.eval(l).0)
    }

    fn derivative(&self, s: f64) -> DVector<f64> {
        let (piece, l) = self.locate(s);
        DVector::from_column_slice(&piece.eval(l).1) * self.total
    }
}

/// Grid estimate of the Lipschitz constant of `s ↦ g_p(s)`, inflated by
/// [`LIPSCHITZ_SAFETY`].
pub fn estimate_lipschitz_gp<M: DynamicsModel + ?Sized, P: ReferencePath + ?Sized>(
    model: &M,
    path: &P,
    grid: usize,
) -> Result<f64> {
    if grid < 100 {
        return Err(Error::InvalidArgument(format!(
            "lipschitz grid must have ≥ 100 points, got {grid}"
        )));
    }
    let mut prev = lift(model, path, 0.0).0;
    let mut best = 0.0f64;
    for i in 1..=grid {
        let s = i as f64 / grid as f64;
        let curr = lift(model, path, s).0;
        best = best.max((&curr - &prev).norm() * grid as f64);
        prev = curr;
    }
    Ok(best * LIPSCHITZ_SAFETY)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NotSteady,
    InputNotInterior,
    Collision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClearanceViolation {
    pub s: f64,
    pub kind: ViolationKind,
    /// Obstacle index for collisions.
    pub obstacle: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClearanceReport {
    pub samples: usize,
    pub violations: Vec<ClearanceViolation>,
    /// Smallest `max_i(A_i p − b_i)` seen over all samples and obstacles.
    pub min_margin: f64,
}

impl ClearanceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that every sampled lifted state is a steady state with inputs in
/// the interior of the bounds and clears every obstacle by `delta_sep`.
pub fn check_path_clearance<M: DynamicsModel + ?Sized, P: ReferencePath + ?Sized>(
    model: &M,
    path: &P,
    bounds: &InputBounds,
    obstacles: &[ConvexPolytope],
    delta_sep: f64,
    step: f64,
    samples: usize,
) -> Result<ClearanceReport> {
    if samples < 100 {
        return Err(Error::InvalidArgument(format!(
            "clearance check needs ≥ 100 samples, got {samples}"
        )));
    }
    let mut report = ClearanceReport {
        samples,
        violations: Vec::new(),
        min_margin: f64::INFINITY,
    };
    for i in 0..samples {
        let s = i as f64 / (samples - 1) as f64;
        let (xs, us) = lift(model, path, s);
        let next = rk4_step(model, &xs, &us, step)?;
        if (&next - &xs).amax() > 1e-12 {
            report.violations.push(ClearanceViolation {
                s,
                kind: ViolationKind::NotSteady,
                obstacle: None,
            });
        }
        if !bounds.contains_strictly(us.as_slice()) {
            report.violations.push(ClearanceViolation {
                s,
                kind: ViolationKind::InputNotInterior,
                obstacle: None,
            });
        }
        let pos = [xs[0], xs[1]];
        for (j, o) in obstacles.iter().enumerate() {
            report.min_margin = report.min_margin.min(o.max_face_value(pos));
            if o.certificate_exists(pos, delta_sep).is_none() {
                report.violations.push(ClearanceViolation {
                    s,
                    kind: ViolationKind::Collision,
                    obstacle: Some(j),
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DiffDrive;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn sinusoid_examples() {
        let p = sinusoid_path(0.0).unwrap();
        assert_eq!(p[0], 0.0);
        assert_eq!(p[1], 0.0);
        assert!((p[2] - 0.944_517).abs() < 1e-6);
        let p = sinusoid_path(0.5).unwrap();
        assert!((p[0] - 1.25).abs() < 1e-15 && (p[1] - 1.1).abs() < 1e-15 && p[2].abs() < 1e-15);
        let p = sinusoid_path(1.0).unwrap();
        assert!((p[0] - 2.5).abs() < 1e-15 && p[1].abs() < 1e-15 && (p[2] + 0.944_517).abs() < 1e-6);
        assert!(sinusoid_path(1.01).is_err());
        assert!(sinusoid_path(-0.01).is_err());
    }

    #[test]
    fn sinusoid_derivative_matches_differences() {
        let path = SinusoidPath::default();
        for i in 0..=50 {
            let s = 0.01 + 0.98 * i as f64 / 50.0;
            let fd = (path.eval(s + 1e-6) - path.eval(s - 1e-6)) / 2e-6;
            assert!((fd - path.derivative(s)).amax() < 1e-6);
        }
    }

    #[test]
    fn polyline_examples() {
        let p = PolylinePath::new(&[[0.0, 0.0], [1.0, 0.0]], 0.1).unwrap();
        assert_eq!(p.eval(0.5).as_slice(), &[0.5, 0.0, 0.0]);
        let p = PolylinePath::new(&[[1.0, 0.0], [0.0, 0.0]], 0.1).unwrap();
        let e = p.eval(0.5);
        assert!((e[0] - 0.5).abs() < 1e-15 && e[1].abs() < 1e-15 && (e[2] - PI).abs() < 1e-15);
    }

    #[test]
    fn polyline_corner_blend_is_continuous() {
        let r = 0.1;
        let p = PolylinePath::new(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]], r).unwrap();
        let expected_len = 2.0 - 2.0 * r + r * FRAC_PI_2;
        assert!((p.length() - expected_len).abs() < 1e-12);
        // blend endpoints: (0.9, 0) with heading 0 and (1, 0.1) with heading π/2
        let s_in = (1.0 - r) / expected_len;
        let s_out = (1.0 - r + r * FRAC_PI_2) / expected_len;
        let a = p.eval(s_in);
        let b = p.eval(s_out);
        assert!((a[0] - 0.9).abs() < 1e-12 && a[1].abs() < 1e-12 && a[2].abs() < 1e-12);
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 0.1).abs() < 1e-12 && (b[2] - FRAC_PI_2).abs() < 1e-12);
        // heading Lipschitz with constant L / r
        let lip = expected_len / r * 1.0001;
        let n = 20_000;
        for i in 0..n {
            let (s0, s1) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
            assert!((p.eval(s1)[2] - p.eval(s0)[2]).abs() <= lip * (s1 - s0));
        }
    }

    #[test]
    fn polyline_right_turn_and_unwrapping() {
        // right turn then another right turn: headings 0, −π/2, −π
        let p = PolylinePath::new(&[[0.0, 0.0], [1.0, 0.0], [1.0, -1.0], [0.0, -1.0]], 0.2).unwrap();
        assert!((p.eval(1.0)[2] + PI).abs() < 1e-12);
        let end = p.eval(1.0);
        assert!(end[0].abs() < 1e-12 && (end[1] + 1.0).abs() < 1e-12);
        for i in 1..100 {
            let s = i as f64 / 100.0;
            let fd = (p.eval(s + 1e-7) - p.eval(s - 1e-7)) / 2e-7;
            assert!((fd - p.derivative(s)).amax() < 1e-5, "s = {s}");
        }
    }

    #[test]
    fn polyline_errors() {
        assert!(PolylinePath::new(&[[0.0, 0.0]], 0.1).is_err());
        assert!(PolylinePath::new(&[[0.0, 0.0], [0.0, 0.0]], 0.1).is_err());
        assert!(PolylinePath::new(&[[0.0, 0.0], [0.1, 0.0], [0.1, 0.1]], 0.5).is_err());
        assert!(PolylinePath::new(&[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]], 0.1).is_err());
    }

    #[test]
    fn lipschitz_examples() {
        let straight = PolylinePath::new(&[[0.0, 0.0], [1.0, 0.0]], 0.1).unwrap();
        let l = estimate_lipschitz_gp(&DiffDrive, &straight, 1000).unwrap();
        assert!((l - 1.2).abs() < 1e-9);
        let c = ConstantPath(DVector::from_vec(vec![1.0, 2.0, 0.5]));
        assert_eq!(estimate_lipschitz_gp(&DiffDrive, &c, 100).unwrap(), 0.0);
        let l = estimate_lipschitz_gp(&DiffDrive, &SinusoidPath::default(), 10_000).unwrap();
        assert!(l.is_finite() && l > 2.5 * 1.2);
        assert!(estimate_lipschitz_gp(&DiffDrive, &c, 10).is_err());
    }

    #[test]
    fn lift_composes_with_configuration_map() {
        let path = SinusoidPath::default();
        for i in 0..1000 {
            let s = i as f64 / 999.0;
            let (xs, us) = lift(&DiffDrive, &path, s);
            let g = DiffDrive.configuration(&xs);
            assert!((g - path.eval(s)).amax() <= 1e-12);
            assert_eq!(us.as_slice(), &[0.0, 0.0]);
        }
    }

    #[test]
    fn polyline_lipschitz_rechecked_on_finer_grid() {
        let p = PolylinePath::new(&[[0.0, 0.0], [2.0, 0.0], [2.0, 2.0]], 0.3).unwrap();
        let l = estimate_lipschitz_gp(&DiffDrive, &p, 1000).unwrap();
        let n = 50_000;
        for i in 0..n {
            let (s0, s1) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
            assert!((p.eval(s1) - p.eval(s0)).norm() <= l * (s1 - s0));
        }
    }

    #[test]
    fn clearance_examples() {
        let bounds = InputBounds::turtlebot();
        let obstacle = ConvexPolytope::from_box(1.0, -1.0, 1.5, 1.0).unwrap();
        let r = check_path_clearance(
            &DiffDrive,
            &SinusoidPath::default(),
            &bounds,
            std::slice::from_ref(&obstacle),
            1e-3,
            0.2,
            1000,
        )
        .unwrap();
        assert!(r.passed(), "{:?}", r.violations.first());
        // independent fine scan of the box's face values along the curve
        let expected = (0..=200_000)
            .map(|i| {
                let t = i as f64 / 200_000.0;
                let (x, y) = (2.5 * t, 1.1 * (std::f64::consts::PI * t).sin());
                (1.0 - x).max(x - 1.5).max(-1.0 - y).max(y - 1.0)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(expected > 0.0);
        assert!(
            r.min_margin >= expected - 1e-12 && r.min_margin - expected < 1e-3,
            "{}",
            r.min_margin
        );

        let straight = PolylinePath::new(&[[0.0, 0.0], [2.5, 0.0]], 0.1).unwrap();
        let r = check_path_clearance(&DiffDrive, &straight, &bounds, &[obstacle], 1e-3, 0.2, 1000).unwrap();
        assert!(!r.passed());
        for v in &r.violations {
            assert_eq!(v.kind, ViolationKind::Collision);
            let x = 2.5 * v.s;
            assert!((1.0 - 1e-3 - 1e-9..=1.5 + 1e-3 + 1e-9).contains(&x));
        }

        let r = check_path_clearance(&DiffDrive, &straight, &bounds, &[], 1e-3, 0.2, 100).unwrap();
        assert!(r.passed());
    }
}
