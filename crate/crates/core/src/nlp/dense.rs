//! Small dense problems assembled from closures.

use super::{NlpProblem, SparsityPattern};

type Scalar = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type Vector = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Problem with dense Jacobians, convenient for tests and small models.
pub struct DenseProblem {
    n: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    objective: Scalar,
    gradient: Vector,
    equalities: Vec<(Scalar, Vector)>,
    inequalities: Vec<(Scalar, Vector)>,
}

impl DenseProblem {
    /// Unbounded problem with objective `f` and gradient `grad`.
    pub fn new(
        n: usize,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            objective: Box::new(f),
            gradient: Box::new(grad),
            equalities: Vec::new(),
            inequalities: Vec::new(),
        }
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    /// Adds `c(z) = 0`; `grad` writes `∇c`.
    pub fn equality(
        mut self,
        c: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.equalities.push((Box::new(c), Box::new(grad)));
        self
    }

    /// Adds `c(z) ≥ 0`; `grad` writes `∇c`.
    pub fn inequality(
        mut self,
        c: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.inequalities.push((Box::new(c), Box::new(grad)));
        self
    }

    fn pattern(&self, rows: usize) -> SparsityPattern {
        let mut p = SparsityPattern {
            nrows: rows,
            ncols: self.n,
            ..Default::default()
        };
        for r in 0..rows {
            for c in 0..self.n {
                p.rows.push(r);
                p.cols.push(c);
            }
        }
        p
    }

    fn jacobian(rows: &[(Scalar, Vector)], n: usize, z: &[f64], values: &mut [f64]) {
        let mut g = vec![0.0; n];
        for (r, (_, grad)) in rows.iter().enumerate() {
            g.iter_mut().for_each(|v| *v = 0.0);
            grad(z, &mut g);
            values[r * n..(r + 1) * n].copy_from_slice(&g);
        }
    }
}

impl NlpProblem for DenseProblem {
    fn num_variables(&self) -> usize {
        self.n
    }

    fn num_equalities(&self) -> usize {
        self.equalities.len()
    }

    fn num_inequalities(&self) -> usize {
        self.inequalities.len()
    }

    fn variable_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lower.clone(), self.upper.clone())
    }

    fn objective(&self, z: &[f64]) -> f64 {
        (self.objective)(z)
    }

    fn objective_gradient(&self, z: &[f64], grad: &mut [f64]) {
        grad.iter_mut().for_each(|v| *v = 0.0);
        (self.gradient)(z, grad)
    }

    fn equalities(&self, z: &[f64], out: &mut [f64]) {
        for (o, (c, _)) in out.iter_mut().zip(&self.equalities) {
            *o = c(z);
        }
    }

    fn equality_jacobian_pattern(&self) -> SparsityPattern {
        self.pattern(self.equalities.len())
    }

    fn equality_jacobian(&self, z: &[f64], values: &mut [f64]) {
        Self::jacobian(&self.equalities, self.n, z, values)
    }

    fn inequalities(&self, z: &[f64], out: &mut [f64]) {
        for (o, (c, _)) in out.iter_mut().zip(&self.inequalities) {
            *o = c(z);
        }
    }

    fn inequality_jacobian_pattern(&self) -> SparsityPattern {
        self.pattern(self.inequalities.len())
    }

    fn inequality_jacobian(&self, z: &[f64], values: &mut [f64]) {
        Self::jacobian(&self.inequalities, self.n, z, values)
    }
}
