//! Discrete-time robot models.
//!
//! Continuous-time models implement [`DynamicsModel`]; the discrete map used by
//! the controller and by the simulated plant is one classical RK4 step with
//! the input held constant over the step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Planar pose of a differential-drive robot. The heading is kept unwrapped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub px: f64,
    pub py: f64,
    pub theta: f64,
}

impl RobotState {
    pub const fn new(px: f64, py: f64, theta: f64) -> Self {
        Self { px, py, theta }
    }

    pub fn is_finite(&self) -> bool {
        self.px.is_finite() && self.py.is_finite() && self.theta.is_finite()
    }

    pub fn to_vector(self) -> DVector<f64> {
        DVector::from_vec(vec![self.px, self.py, self.theta])
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        if x.len() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: x.len(),
                context: "robot state",
            });
        }
        Ok(Self::new(x[0], x[1], x[2]))
    }
}

/// Velocity command: linear velocity `v` [m/s] and turn rate `omega` [rad/s].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotInput {
    pub v: f64,
    pub omega: f64,
}

impl RobotInput {
    pub const fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.omega.is_finite()
    }

    pub fn to_vector(self) -> DVector<f64> {
        DVector::from_vec(vec![self.v, self.omega])
    }
}

/// Compact input box `lower ≤ u ≤ upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl InputBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
                context: "input bounds",
            });
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "input bound {i} is not finite; the input box must be compact"
                )));
            }
            if lo > hi {
                return Err(Error::InvalidArgument(format!(
                    "input bound {i}: lower {lo} exceeds upper {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Symmetric box `|u_i| ≤ limit_i`.
    pub fn symmetric(limits: &[f64]) -> Result<Self> {
        Self::new(limits.iter().map(|l| -l).collect(), limits.to_vec())
    }

    /// Velocity limits close to those of a Turtlebot 4.
    pub fn turtlebot() -> Self {
        Self::symmetric(&[0.31, 1.9]).expect("static bounds are valid")
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    /// Strict interior membership.
    pub fn contains_strictly(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo < *v && *v < *hi)
    }

    pub fn clamp(&self, u: &mut [f64]) {
        for (v, (lo, hi)) in u.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// Continuous-time model `ẋ = F(x, u)` together with its configuration map
/// `g` and the steady state associated with each configuration.
pub trait DynamicsModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn config_dim(&self) -> usize;

    /// Vector field `F(x, u)`.
    fn ode(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// Jacobians `(∂F/∂x, ∂F/∂u)`.
    fn ode_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>);

    /// Configuration `g(x)`.
    fn configuration(&self, x: &DVector<f64>) -> DVector<f64>;

    /// `∂g/∂x`.
    fn configuration_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// The steady pair `(x_s, u_s)` with `g(x_s) = config`.
    fn steady_state(&self, config: &DVector<f64>) -> (DVector<f64>, DVector<f64>);

    /// Unchecked RK4 step; see [`rk4_step`]. Overrides must evaluate the same
    /// stages.
    fn rk4(&self, x: &DVector<f64>, u: &DVector<f64>, h: f64) -> DVector<f64> {
        rk4_stages(self, x, u, h)
    }

    /// Jacobians `(∂x⁺/∂x, ∂x⁺/∂u)` of the RK4 step [`rk4_step`]. The
    /// default differentiates through the four stages.
    fn step_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>, h: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        rk4_jacobians(self, x, u, h).map(|(_, jx, ju)| (jx, ju))
    }
}

/// Kinematic unicycle: `ṗx = v cos θ`, `ṗy = v sin θ`, `θ̇ = ω`.
///
/// The configuration is the full pose, and every pose is a steady state under
/// zero input.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DiffDrive;

/// Right-hand side of the differential-drive kinematics.
pub fn diff_drive_ode(state: RobotState, input: RobotInput) -> [f64; 3] {
    let (sin, cos) = state.theta.sin_cos();
    [input.v * cos, input.v * sin, input.omega]
}

impl DynamicsModel for DiffDrive {
    fn state_dim(&self) -> usize {
        3
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn config_dim(&self) -> usize {
        3
    }

    fn ode(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let d = diff_drive_ode(RobotState::new(x[0], x[1], x[2]), RobotInput::new(u[0], u[1]));
        DVector::from_column_slice(&d)
    }

    fn ode_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (sin, cos) = x[2].sin_cos();
        let v = u[0];
        let mut jx = DMatrix::zeros(3, 3);
        jx[(0, 2)] = -v * sin;
        jx[(1, 2)] = v * cos;
        let mut ju = DMatrix::zeros(3, 2);
        ju[(0, 0)] = cos;
        ju[(1, 0)] = sin;
        ju[(2, 1)] = 1.0;
        (jx, ju)
    }

    fn configuration(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }

    fn configuration_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(3, 3)
    }

    fn steady_state(&self, config: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (config.clone(), DVector::zeros(2))
    }

    fn rk4(&self, x: &DVector<f64>, u: &DVector<f64>, h: f64) -> DVector<f64> {
        let f = |th: f64| {
            let (sin, cos) = th.sin_cos();
            [u[0] * cos, u[0] * sin, u[1]]
        };
        let k1 = f(x[2]);
        let k2 = f(x[2] + k1[2] * (0.5 * h));
        let k3 = f(x[2] + k2[2] * (0.5 * h));
        let k4 = f(x[2] + k3[2] * h);
        DVector::from_fn(3, |i, _| x[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0))
    }

    // The heading is affine in time, so stage i sees θ + cᵢ h ω and the chain
    // rule through the stages collapses to sums over the four headings.
    fn step_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>, h: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        check_step(h)?;
        let (theta, v, omega) = (x[2], u[0], u[1]);
        let mut sum_sin = 0.0;
        let mut sum_cos = 0.0;
        let mut sum_sin_c = 0.0;
        let mut sum_cos_c = 0.0;
        for (w, c) in [(1.0, 0.0), (2.0, 0.5), (2.0, 0.5), (1.0, 1.0)] {
            let (sin, cos) = (theta + c * h * omega).sin_cos();
            sum_sin += w * sin;
            sum_cos += w * cos;
            sum_sin_c += w * c * sin;
            sum_cos_c += w * c * cos;
        }
        let k = h / 6.0;
        let mut jx = DMatrix::identity(3, 3);
        jx[(0, 2)] = -k * v * sum_sin;
        jx[(1, 2)] = k * v * sum_cos;
        let mut ju = DMatrix::zeros(3, 2);
        ju[(0, 0)] = k * sum_cos;
        ju[(1, 0)] = k * sum_sin;
        ju[(0, 1)] = -k * v * h * sum_sin_c;
        ju[(1, 1)] = k * v * h * sum_cos_c;
        ju[(2, 1)] = h;
        if jx.iter().chain(ju.iter()).all(|v| v.is_finite()) {
            Ok((jx, ju))
        } else {
            Err(Error::NonFiniteIntegration)
        }
    }
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step size must be positive, got {h}")))
    }
}

fn ensure_finite(v: &DVector<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteIntegration)
    }
}

/// One classical RK4 step of length `h` with `u` held constant.
pub fn rk4_step<M: DynamicsModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    check_step(h)?;
    let next = model.rk4(x, u, h);
    ensure_finite(&next)?;
    Ok(next)
}

/// The four RK4 stages through [`DynamicsModel::ode`]; non-finite
/// intermediate values propagate into the result.
pub fn rk4_stages<M: DynamicsModel + ?Sized>(model: &M, x: &DVector<f64>, u: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = model.ode(x, u);
    let k2 = model.ode(&(x + &k1 * (0.5 * h)), u);
    let k3 = model.ode(&(x + &k2 * (0.5 * h)), u);
    let k4 = model.ode(&(x + &k3 * h), u);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// RK4 step together with the exact Jacobians of the discrete map,
/// obtained by differentiating through all four stages.
pub fn rk4_jacobians<M: DynamicsModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    check_step(h)?;
    let n = model.state_dim();
    let eye = DMatrix::<f64>::identity(n, n);

    let k1 = model.ode(x, u);
    let (a1, b1) = model.ode_jacobians(x, u);
    let dk1_dx = a1;
    let dk1_du = b1;

    let x2 = x + &k1 * (0.5 * h);
    let k2 = model.ode(&x2, u);
    let (a2, b2) = model.ode_jacobians(&x2, u);
    let dk2_dx = &a2 * (&eye + &dk1_dx * (0.5 * h));
    let dk2_du = &a2 * (&dk1_du * (0.5 * h)) + b2;

    let x3 = x + &k2 * (0.5 * h);
    let k3 = model.ode(&x3, u);
    let (a3, b3) = model.ode_jacobians(&x3, u);
    let dk3_dx = &a3 * (&eye + &dk2_dx * (0.5 * h));
    let dk3_du = &a3 * (&dk2_du * (0.5 * h)) + b3;

    let x4 = x + &k3 * h;
    let k4 = model.ode(&x4, u);
    let (a4, b4) = model.ode_jacobians(&x4, u);
    let dk4_dx = &a4 * (&eye + &dk3_dx * h);
    let dk4_du = &a4 * (&dk3_du * h) + b4;

    let w = h / 6.0;
    let next = x + (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * w;
    ensure_finite(&next)?;
    let jx = eye + (dk1_dx + dk2_dx * 2.0 + dk3_dx * 2.0 + dk4_dx) * w;
    let ju = (dk1_du + dk2_du * 2.0 + dk3_du * 2.0 + dk4_du) * w;
    Ok((next, jx, ju))
}
