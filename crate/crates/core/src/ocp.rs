//! Transcription of the finite-horizon path-anchored tracking problem into
//! an [`NlpProblem`].
//!
//! The artificial steady pair `(x_s, u_s)` is identified with the last
//! predicted pair `(x_N, u_N)`, so it needs no storage of its own.
//!
//! # Decision vector
//!
//! ```text
//! [ u_0 … u_N | x_0 … x_N | s | μ_{1,1} … μ_{1,N_o} | … | μ_{N,1} … μ_{N,N_o} ]
//! ```
//!
//! `s` is present only in [`TerminalMode::Proposed`]. Each `μ_{l,i}` has one
//! entry per face of obstacle `i`.
//!
//! # Constraints
//!
//! Equalities, in order:
//!
//! 1. `x_0 − x_current` (n)
//! 2. `x_{l+1} − f(x_l, u_l)` for `l = 0..N−1` (N·n)
//! 3. `x_N − f(x_N, u_N)` (n)
//! 4. `g(x_N) − p(s)` (n_p, proposed mode only)
//! 5. `Σ μ_{l,i} − 1` for `l = 1..N`, `i = 1..N_o` (N·N_o)
//!
//! Inequalities (`≥ 0`): `(A_i p_l − b_i)ᵀ μ_{l,i} − δ_sep` in the same
//! `(l, i)` order. The input box, `μ ≥ 0` and `0 ≤ s ≤ 1` are variable bounds.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{rk4_step, DynamicsModel, InputBounds};
use crate::geometry::ConvexPolytope;
use crate::nlp::{NlpProblem, SparsityPattern};
use crate::path::ReferencePath;
use crate::{Error, Result};

pub const DEFAULT_OFFSET_WEIGHT: f64 = 1000.0;

/// Weights of the quartic stage cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub position: f64,
    pub heading: f64,
    pub v: f64,
    pub omega: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            position: 1.0,
            heading: 0.1,
            v: 1.0,
            omega: 1.0,
        }
    }
}

impl CostWeights {
    fn validate(&self) -> Result<()> {
        let w = [self.position, self.heading, self.v, self.omega];
        if w.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "cost weights must be positive, got {w:?}"
            )))
        }
    }

    fn state(&self) -> [f64; 3] {
        [self.position, self.position, self.heading]
    }

    fn input(&self) -> [f64; 2] {
        [self.v, self.omega]
    }

    /// `c` such that `ℓ(Δx, Δu) ≥ c ‖Δx‖⁴`.
    pub fn quartic_bound(&self) -> f64 {
        // Σ wᵢ aᵢ⁴ ≥ w_min Σ aᵢ⁴ ≥ w_min ‖a‖⁴ / n
        self.position.min(self.heading) / 3.0
    }
}

/// Quartic stage cost `ℓ(x − x_s, u − u_s)`.
pub fn stage_cost(x: &[f64], u: &[f64], xs: &[f64], us: &[f64], weights: &CostWeights) -> f64 {
    let wx = weights.state();
    let wu = weights.input();
    let sx: f64 = (0..3).map(|i| wx[i] * (x[i] - xs[i]).powi(4)).sum();
    let su: f64 = (0..2).map(|j| wu[j] * (u[j] - us[j]).powi(4)).sum();
    sx + su
}

/// `weight · (1 − s)²`.
pub fn offset_cost(s: f64, weight: f64) -> f64 {
    weight * (1.0 - s).powi(2)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TerminalMode {
    /// Artificial reference anchored to the path at progress `s`.
    Proposed,
    /// Artificial reference pulled toward a fixed target configuration.
    Baseline { target: DVector<f64> },
}

#[derive(Clone)]
pub struct OcpSpec {
    pub horizon: usize,
    pub step: f64,
    pub model: Arc<dyn DynamicsModel>,
    pub path: Arc<dyn ReferencePath>,
    /// Already inflated by the robot radius.
    pub obstacles: Vec<ConvexPolytope>,
    pub input_bounds: InputBounds,
    pub weights: CostWeights,
    pub offset_weight: f64,
    pub delta_sep: f64,
    pub mode: TerminalMode,
}

impl std::fmt::Debug for OcpSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OcpSpec")
            .field("horizon", &self.horizon)
            .field("step", &self.step)
            .field("obstacles", &self.obstacles.len())
            .field("weights", &self.weights)
            .field("offset_weight", &self.offset_weight)
            .field("mode", &self.mode)
            .finish_non_exhaustive()
    }
}

impl OcpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if !(self.offset_weight.is_finite() && self.offset_weight > 0.0) {
            return Err(Error::InvalidArgument("offset weight must be positive".into()));
        }
        if !(self.delta_sep.is_finite() && self.delta_sep > 0.0) {
            return Err(Error::InvalidArgument("separation margin must be positive".into()));
        }
        self.weights.validate()?;
        let m = self.model.as_ref();
        if m.state_dim() != 3 || m.input_dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: m.state_dim(),
                context: "stage cost expects a planar pose model",
            });
        }
        if self.input_bounds.dim() != m.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: m.input_dim(),
                got: self.input_bounds.dim(),
                context: "input bounds",
            });
        }
        let p0 = self.path.eval(0.0);
        if p0.len() != m.config_dim() || m.config_dim() < 2 {
            return Err(Error::DimensionMismatch {
                expected: m.config_dim(),
                got: p0.len(),
                context: "path configuration",
            });
        }
        if let TerminalMode::Baseline { target } = &self.mode {
            if target.len() != m.config_dim() {
                return Err(Error::DimensionMismatch {
                    expected: m.config_dim(),
                    got: target.len(),
                    context: "baseline target",
                });
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout {
            n: self.model.state_dim(),
            m: self.model.input_dim(),
            np: self.model.config_dim(),
            horizon: self.horizon,
            faces: self.obstacles.iter().map(|o| o.num_faces()).collect(),
            has_s: matches!(self.mode, TerminalMode::Proposed),
        }
    }
}

/// Offsets into the flat decision vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub m: usize,
    pub np: usize,
    pub horizon: usize,
    /// Face count per obstacle.
    pub faces: Vec<usize>,
    pub has_s: bool,
}

impl Layout {
    pub fn input(&self, l: usize) -> usize {
        l * self.m
    }

    pub fn state(&self, l: usize) -> usize {
        (self.horizon + 1) * self.m + l * self.n
    }

    pub fn s(&self) -> Option<usize> {
        self.has_s.then(|| (self.horizon + 1) * (self.m + self.n))
    }

    pub fn mu_start(&self) -> usize {
        (self.horizon + 1) * (self.m + self.n) + usize::from(self.has_s)
    }

    fn faces_per_step(&self) -> usize {
        self.faces.iter().sum()
    }

    /// Start of `μ_{l,i}`, `l ∈ 1..=N`.
    pub fn mu(&self, l: usize, obstacle: usize) -> usize {
        debug_assert!(l >= 1 && l <= self.horizon);
        self.mu_start() + (l - 1) * self.faces_per_step() + self.faces[..obstacle].iter().sum::<usize>()
    }

    pub fn mu_len(&self) -> usize {
        self.horizon * self.faces_per_step()
    }

    pub fn len(&self) -> usize {
        self.mu_start() + self.mu_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_obstacles(&self) -> usize {
        self.faces.len()
    }

    pub fn num_equalities(&self) -> usize {
        let anchor = if self.has_s { self.np } else { 0 };
        (self.horizon + 1) * self.n + self.n + anchor + self.horizon * self.num_obstacles()
    }

    pub fn num_inequalities(&self) -> usize {
        self.horizon * self.num_obstacles()
    }
}

/// Cost of `z`: stage terms toward `(x_N, u_N)` plus the terminal offset.
pub fn total_cost(z: &[f64], spec: &OcpSpec) -> f64 {
    let lay = spec.layout();
    let (n, m, big_n) = (lay.n, lay.m, lay.horizon);
    let xs = &z[lay.state(big_n)..lay.state(big_n) + n];
    let us = &z[lay.input(big_n)..lay.input(big_n) + m];
    let stage: f64 = (0..big_n)
        .map(|l| {
            stage_cost(
                &z[lay.state(l)..lay.state(l) + n],
                &z[lay.input(l)..lay.input(l) + m],
                xs,
                us,
                &spec.weights,
            )
        })
        .sum();
    stage + terminal_cost(z, spec, &lay)
}

fn terminal_cost(z: &[f64], spec: &OcpSpec, lay: &Layout) -> f64 {
    match &spec.mode {
        TerminalMode::Proposed => offset_cost(z[lay.s().expect("proposed layout has s")], spec.offset_weight),
        TerminalMode::Baseline { target } => {
            let xn = DVector::from_column_slice(&z[lay.state(lay.horizon)..lay.state(lay.horizon) + lay.n]);
            spec.offset_weight * (spec.model.configuration(&xn) - target).norm_squared()
        }
    }
}

/// The assembled NLP for one controller step.
pub struct OcpProblem {
    spec: OcpSpec,
    layout: Layout,
    x_current: DVector<f64>,
    eq_pattern: SparsityPattern,
    ineq_pattern: SparsityPattern,
}

/// Builds the NLP at the measured state `x_current`.
pub fn assemble_nlp(spec: &OcpSpec, x_current: &[f64]) -> Result<OcpProblem> {
    spec.validate()?;
    let layout = spec.layout();
    if x_current.len() != layout.n {
        return Err(Error::DimensionMismatch {
            expected: layout.n,
            got: x_current.len(),
            context: "current state",
        });
    }
    if !x_current.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("current state is not finite".into()));
    }
    let (eq_pattern, ineq_pattern) = patterns(&layout);
    Ok(OcpProblem {
        spec: spec.clone(),
        layout,
        x_current: DVector::from_column_slice(x_current),
        eq_pattern,
        ineq_pattern,
    })
}

/// Triplet order here must match the value order in the Jacobian callbacks.
fn patterns(lay: &Layout) -> (SparsityPattern, SparsityPattern) {
    let (n, m, np, big_n) = (lay.n, lay.m, lay.np, lay.horizon);
    let mut eq = SparsityPattern {
        nrows: lay.num_equalities(),
        ncols: lay.len(),
        ..Default::default()
    };
    let push = |p: &mut SparsityPattern, r: usize, c: usize| {
        p.rows.push(r);
        p.cols.push(c);
    };
    let mut row = 0;
    for i in 0..n {
        push(&mut eq, row + i, lay.state(0) + i);
    }
    row += n;
    for l in 0..big_n {
        for i in 0..n {
            push(&mut eq, row + i, lay.state(l + 1) + i);
            for j in 0..n {
                push(&mut eq, row + i, lay.state(l) + j);
            }
            for j in 0..m {
                push(&mut eq, row + i, lay.input(l) + j);
            }
        }
        row += n;
    }
    for i in 0..n {
        for j in 0..n {
            push(&mut eq, row + i, lay.state(big_n) + j);
        }
        for j in 0..m {
            push(&mut eq, row + i, lay.input(big_n) + j);
        }
    }
    row += n;
    if let Some(si) = lay.s() {
        for i in 0..np {
            for j in 0..n {
                push(&mut eq, row + i, lay.state(big_n) + j);
            }
            push(&mut eq, row + i, si);
        }
        row += np;
    }
    for l in 1..=big_n {
        for (o, r) in lay.faces.iter().enumerate() {
            for j in 0..*r {
                push(&mut eq, row, lay.mu(l, o) + j);
            }
            row += 1;
        }
    }
    debug_assert_eq!(row, eq.nrows);

    let mut ineq = SparsityPattern {
        nrows: lay.num_inequalities(),
        ncols: lay.len(),
        ..Default::default()
    };
    let mut row = 0;
    for l in 1..=big_n {
        for (o, r) in lay.faces.iter().enumerate() {
            for j in 0..n {
                push(&mut ineq, row, lay.state(l) + j);
            }
            for j in 0..*r {
                push(&mut ineq, row, lay.mu(l, o) + j);
            }
            row += 1;
        }
    }
    (eq, ineq)
}

impl OcpProblem {
    pub fn spec(&self) -> &OcpSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn x_current(&self) -> &[f64] {
        self.x_current.as_slice()
    }

    fn state(&self, z: &[f64], l: usize) -> DVector<f64> {
        let o = self.layout.state(l);
        DVector::from_column_slice(&z[o..o + self.layout.n])
    }

    fn input(&self, z: &[f64], l: usize) -> DVector<f64> {
        let o = self.layout.input(l);
        DVector::from_column_slice(&z[o..o + self.layout.m])
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        rk4_step(self.spec.model.as_ref(), x, u, self.spec.step)
            .unwrap_or_else(|_| DVector::from_element(self.layout.n, f64::NAN))
    }

    fn position(&self, x: &DVector<f64>) -> [f64; 2] {
        let g = self.spec.model.configuration(x);
        [g[0], g[1]]
    }

    /// Position rows of `∂g/∂x`.
    fn position_jacobian(&self, x: &DVector<f64>) -> [Vec<f64>; 2] {
        let jg = self.spec.model.configuration_jacobian(x);
        let row = |r: usize| (0..self.layout.n).map(|j| jg[(r, j)]).collect();
        [row(0), row(1)]
    }
}

impl NlpProblem for OcpProblem {
    fn num_variables(&self) -> usize {
        self.layout.len()
    }

    fn num_equalities(&self) -> usize {
        self.layout.num_equalities()
    }

    fn num_inequalities(&self) -> usize {
        self.layout.num_inequalities()
    }

    fn variable_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let lay = &self.layout;
        let mut lower = vec![f64::NEG_INFINITY; lay.len()];
        let mut upper = vec![f64::INFINITY; lay.len()];
        for l in 0..=lay.horizon {
            for j in 0..lay.m {
                lower[lay.input(l) + j] = self.spec.input_bounds.lower()[j];
                upper[lay.input(l) + j] = self.spec.input_bounds.upper()[j];
            }
        }
        if let Some(si) = lay.s() {
            lower[si] = 0.0;
            upper[si] = 1.0;
        }
        let mu0 = lay.mu_start();
        lower[mu0..].iter_mut().for_each(|v| *v = 0.0);
        (lower, upper)
    }

    fn objective(&self, z: &[f64]) -> f64 {
        total_cost(z, &self.spec)
    }

    fn objective_gradient(&self, z: &[f64], grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let lay = &self.layout;
        let big_n = lay.horizon;
        let wx = self.spec.weights.state();
        let wu = self.spec.weights.input();
        let (xn, un) = (lay.state(big_n), lay.input(big_n));
        for l in 0..big_n {
            for i in 0..lay.n {
                let d = 4.0 * wx[i] * (z[lay.state(l) + i] - z[xn + i]).powi(3);
                grad[lay.state(l) + i] += d;
                grad[xn + i] -= d;
            }
            for j in 0..lay.m {
                let d = 4.0 * wu[j] * (z[lay.input(l) + j] - z[un + j]).powi(3);
                grad[lay.input(l) + j] += d;
                grad[un + j] -= d;
            }
        }
        match &self.spec.mode {
            TerminalMode::Proposed => {
                let si = lay.s().expect("proposed layout has s");
                grad[si] += -2.0 * self.spec.offset_weight * (1.0 - z[si]);
            }
            TerminalMode::Baseline { target } => {
                let x = self.state(z, big_n);
                let r = self.spec.model.configuration(&x) - target;
                let jg = self.spec.model.configuration_jacobian(&x);
                let g = jg.transpose() * r * (2.0 * self.spec.offset_weight);
                for i in 0..lay.n {
                    grad[xn + i] += g[i];
                }
            }
        }
    }

    fn equalities(&self, z: &[f64], out: &mut [f64]) {
        let lay = &self.layout;
        let (n, big_n) = (lay.n, lay.horizon);
        let mut row = 0;
        for i in 0..n {
            out[i] = z[lay.state(0) + i] - self.x_current[i];
        }
        row += n;
        for l in 0..big_n {
            let next = self.step(&self.state(z, l), &self.input(z, l));
            for i in 0..n {
                out[row + i] = z[lay.state(l + 1) + i] - next[i];
            }
            row += n;
        }
        let xn = self.state(z, big_n);
        let steady = self.step(&xn, &self.input(z, big_n));
        for i in 0..n {
            out[row + i] = xn[i] - steady[i];
        }
        row += n;
        if let Some(si) = lay.s() {
            let r = self.spec.model.configuration(&xn) - self.spec.path.eval(z[si]);
            out[row..row + lay.np].copy_from_slice(r.as_slice());
            row += lay.np;
        }
        for l in 1..=big_n {
            for (o, r) in lay.faces.iter().enumerate() {
                let start = lay.mu(l, o);
                out[row] = z[start..start + r].iter().sum::<f64>() - 1.0;
                row += 1;
            }
        }
    }

    fn equality_jacobian_pattern(&self) -> SparsityPattern {
        self.eq_pattern.clone()
    }

    fn equality_jacobian(&self, z: &[f64], values: &mut [f64]) {
        let lay = &self.layout;
        let (n, m, big_n) = (lay.n, lay.m, lay.horizon);
        let model = self.spec.model.as_ref();
        let h = self.spec.step;
        let mut k = 0;
        let mut put = |v: f64| {
            values[k] = v;
            k += 1;
        };
        for _ in 0..n {
            put(1.0);
        }
        for l in 0..big_n {
            let jac = model.step_jacobians(&self.state(z, l), &self.input(z, l), h);
            for i in 0..n {
                put(1.0);
                match &jac {
                    Ok((jx, ju)) => {
                        (0..n).for_each(|j| put(-jx[(i, j)]));
                        (0..m).for_each(|j| put(-ju[(i, j)]));
                    }
                    Err(_) => (0..n + m).for_each(|_| put(f64::NAN)),
                }
            }
        }
        let xn = self.state(z, big_n);
        let jac = model.step_jacobians(&xn, &self.input(z, big_n), h);
        for i in 0..n {
            match &jac {
                Ok((jx, ju)) => {
                    (0..n).for_each(|j| put(f64::from(u8::from(i == j)) - jx[(i, j)]));
                    (0..m).for_each(|j| put(-ju[(i, j)]));
                }
                Err(_) => (0..n + m).for_each(|_| put(f64::NAN)),
            }
        }
        if let Some(si) = lay.s() {
            let jg = model.configuration_jacobian(&xn);
            let dp = self.spec.path.derivative(z[si]);
            for i in 0..lay.np {
                (0..n).for_each(|j| put(jg[(i, j)]));
                put(-dp[i]);
            }
        }
        for _ in 1..=big_n {
            for r in &lay.faces {
                (0..*r).for_each(|_| put(1.0));
            }
        }
        debug_assert_eq!(k, self.eq_pattern.nnz());
    }

    fn inequalities(&self, z: &[f64], out: &mut [f64]) {
        let lay = &self.layout;
        let mut row = 0;
        for l in 1..=lay.horizon {
            let p = self.position(&self.state(z, l));
            for (o, obs) in self.spec.obstacles.iter().enumerate() {
                let mu = &z[lay.mu(l, o)..lay.mu(l, o) + obs.num_faces()];
                let margin: f64 = obs.face_values(p).iter().zip(mu).map(|(f, mu)| f * mu).sum();
                out[row] = margin - self.spec.delta_sep;
                row += 1;
            }
        }
    }

    fn inequality_jacobian_pattern(&self) -> SparsityPattern {
        self.ineq_pattern.clone()
    }

    fn inequality_jacobian(&self, z: &[f64], values: &mut [f64]) {
        let lay = &self.layout;
        let mut k = 0;
        for l in 1..=lay.horizon {
            let x = self.state(z, l);
            let (p, jp) = (self.position(&x), self.position_jacobian(&x));
            for (o, obs) in self.spec.obstacles.iter().enumerate() {
                let mu = &z[lay.mu(l, o)..lay.mu(l, o) + obs.num_faces()];
                // ∂/∂p of Σ μ_j (a_jᵀp − b_j) = Σ μ_j a_j
                let mut dp = [0.0; 2];
                for (a, w) in obs.normals().iter().zip(mu) {
                    dp[0] += w * a[0];
                    dp[1] += w * a[1];
                }
                for j in 0..lay.n {
                    values[k] = dp[0] * jp[0][j] + dp[1] * jp[1][j];
                    k += 1;
                }
                for f in obs.face_values(p) {
                    values[k] = f;
                    k += 1;
                }
            }
        }
        debug_assert_eq!(k, self.ineq_pattern.nnz());
    }
}

/// Largest absolute gaps between analytic derivatives and central differences.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct GradientReport {
    pub objective: f64,
    pub equality: f64,
    pub inequality: f64,
}

impl GradientReport {
    pub fn max(&self) -> f64 {
        self.objective.max(self.equality).max(self.inequality)
    }
}

pub const GRADIENT_CHECK_STEP: f64 = 1e-6;

/// Compares the analytic gradient and Jacobians of `problem` at `z` with
/// central differences of step [`GRADIENT_CHECK_STEP`].
pub fn check_gradients<P: NlpProblem + ?Sized>(problem: &P, z: &[f64]) -> GradientReport {
    let nv = problem.num_variables();
    let (me, mi) = (problem.num_equalities(), problem.num_inequalities());
    let h = GRADIENT_CHECK_STEP;

    let mut grad = vec![0.0; nv];
    problem.objective_gradient(z, &mut grad);
    let pe = problem.equality_jacobian_pattern();
    let mut je = vec![0.0; pe.nnz()];
    problem.equality_jacobian(z, &mut je);
    let je = pe.to_dense(&je);
    let pi = problem.inequality_jacobian_pattern();
    let mut ji = vec![0.0; pi.nnz()];
    problem.inequality_jacobian(z, &mut ji);
    let ji = pi.to_dense(&ji);

    let mut report = GradientReport::default();
    let mut zp = z.to_vec();
    let (mut cp, mut cm) = (vec![0.0; me.max(mi)], vec![0.0; me.max(mi)]);
    for j in 0..nv {
        zp[j] = z[j] + h;
        let fp = problem.objective(&zp);
        problem.equalities(&zp, &mut cp[..me]);
        let mut ip = vec![0.0; mi];
        problem.inequalities(&zp, &mut ip);
        zp[j] = z[j] - h;
        let fm = problem.objective(&zp);
        problem.equalities(&zp, &mut cm[..me]);
        let mut im = vec![0.0; mi];
        problem.inequalities(&zp, &mut im);
        zp[j] = z[j];

        report.objective = report.objective.max(((fp - fm) / (2.0 * h) - grad[j]).abs());
        for r in 0..me {
            report.equality = report.equality.max(((cp[r] - cm[r]) / (2.0 * h) - je[(r, j)]).abs());
        }
        for r in 0..mi {
            report.inequality = report.inequality.max(((ip[r] - im[r]) / (2.0 * h) - ji[(r, j)]).abs());
        }
    }
    report
}

/// [`check_gradients`] at `samples` random decision vectors drawn inside the
/// variable bounds (unbounded entries from `[−1.5, 1.5]`).
pub fn gradient_check(spec: &OcpSpec, x_current: &[f64], samples: usize, seed: u64) -> Result<Vec<GradientReport>> {
    use rand::{Rng, SeedableRng};
    let problem = assemble_nlp(spec, x_current)?;
    let (lower, upper) = problem.variable_bounds();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Ok((0..samples)
        .map(|_| {
            let z: Vec<f64> = lower
                .iter()
                .zip(&upper)
                .map(|(lo, hi)| rng.gen_range(lo.max(-1.5)..=hi.min(1.5)))
                .collect();
            check_gradients(&problem, &z)
        })
        .collect())
}
