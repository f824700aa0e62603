//! Convex polytope obstacles and the dual (Farkas) collision certificate.
//!
//! An obstacle is `O = {p ∈ R² : A p ≤ b}`. A point `p` lies outside `O` iff
//! some `μ ≥ 0` with `Σ μ = 1` gives `(A p − b)ᵀ μ > 0`. The controller
//! enforces the margin form `(A p − b)ᵀ μ ≥ δ_sep` with `μ` normalized, since
//! the un-normalized constraint is satisfied trivially by `μ = 0`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default separation threshold [m].
pub const DEFAULT_DELTA_SEP: f64 = 1e-3;

/// Bounded, non-empty polytope in halfspace form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolytope", into = "RawPolytope")]
pub struct ConvexPolytope {
    normals: Vec<[f64; 2]>,
    offsets: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPolytope {
    a: Vec<[f64; 2]>,
    b: Vec<f64>,
}

impl TryFrom<RawPolytope> for ConvexPolytope {
    type Error = Error;

    fn try_from(raw: RawPolytope) -> Result<Self> {
        Self::new(raw.a, raw.b)
    }
}

impl From<ConvexPolytope> for RawPolytope {
    fn from(p: ConvexPolytope) -> Self {
        Self {
            a: p.normals,
            b: p.offsets,
        }
    }
}

/// Normalized dual certificate `μ ≥ 0`, `Σ μ = 1`, one entry per face.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionCertificate(Vec<f64>);

impl CollisionCertificate {
    /// Unit vector on `face` of an `r`-faced polytope.
    pub fn face(r: usize, face: usize) -> Self {
        let mut mu = vec![0.0; r];
        mu[face] = 1.0;
        Self(mu)
    }

    pub fn mu(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl ConvexPolytope {
    pub fn new(normals: Vec<[f64; 2]>, offsets: Vec<f64>) -> Result<Self> {
        if normals.len() != offsets.len() {
            return Err(Error::DimensionMismatch {
                expected: normals.len(),
                got: offsets.len(),
                context: "polytope offsets",
            });
        }
        if normals.len() < 3 {
            return Err(Error::InvalidPolytope(format!(
                "need at least 3 halfspaces, got {}",
                normals.len()
            )));
        }
        for (i, (a, b)) in normals.iter().zip(&offsets).enumerate() {
            if !(a[0].is_finite() && a[1].is_finite() && b.is_finite()) {
                return Err(Error::InvalidPolytope(format!("row {i} is not finite")));
            }
            if a[0] == 0.0 && a[1] == 0.0 {
                return Err(Error::InvalidPolytope(format!("row {i} has a zero normal")));
            }
        }
        let poly = Self { normals, offsets };
        if !poly.is_bounded() {
            return Err(Error::InvalidPolytope("halfspaces do not bound a region".into()));
        }
        if poly.vertices().is_empty() {
            return Err(Error::InvalidPolytope("polytope is empty".into()));
        }
        Ok(poly)
    }

    /// Axis-aligned box `[xmin, xmax] × [ymin, ymax]`.
    pub fn from_box(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        Self::new(
            vec![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
            vec![xmax, -xmin, ymax, -ymin],
        )
    }

    pub fn num_faces(&self) -> usize {
        self.normals.len()
    }

    pub fn normals(&self) -> &[[f64; 2]] {
        &self.normals
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// `A_i p − b_i` for every face.
    pub fn face_values(&self, p: [f64; 2]) -> Vec<f64> {
        self.normals
            .iter()
            .zip(&self.offsets)
            .map(|(a, b)| a[0] * p[0] + a[1] * p[1] - b)
            .collect()
    }

    /// `max_i (A_i p − b_i)`: positive outside, non-positive inside.
    pub fn max_face_value(&self, p: [f64; 2]) -> f64 {
        self.face_values(p).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.face_values(p).iter().all(|v| *v <= 0.0)
    }

    /// Bilinear Farkas form `(A p − b)ᵀ μ`.
    pub fn farkas_margin(&self, p: [f64; 2], mu: &[f64]) -> Result<f64> {
        if mu.len() != self.num_faces() {
            return Err(Error::DimensionMismatch {
                expected: self.num_faces(),
                got: mu.len(),
                context: "farkas multipliers",
            });
        }
        if mu.iter().any(|m| *m < 0.0) {
            return Err(Error::InvalidArgument("farkas multipliers must be non-negative".into()));
        }
        Ok(self.face_values(p).iter().zip(mu).map(|(v, m)| v * m).sum())
    }

    /// A normalized certificate with margin at least `delta`, if one exists.
    ///
    /// Over the simplex the bilinear form is maximized at a vertex, so the
    /// best face is exact.
    pub fn certificate_exists(&self, p: [f64; 2], delta: f64) -> Option<CollisionCertificate> {
        let values = self.face_values(p);
        let (face, best) =
            values.iter().copied().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
            );
        (best >= delta).then(|| CollisionCertificate::face(self.num_faces(), face))
    }

    /// Minkowski sum with a disc of `radius`, in outer halfspace form.
    pub fn inflate(&self, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "inflation radius must be ≥ 0, got {radius}"
            )));
        }
        let offsets = self
            .normals
            .iter()
            .zip(&self.offsets)
            .map(|(a, b)| b + radius * a[0].hypot(a[1]))
            .collect();
        Ok(Self {
            normals: self.normals.clone(),
            offsets,
        })
    }

    /// Vertices by pairwise intersection of face lines, deduplicated and
    /// sorted counter-clockwise.
    pub fn vertices(&self) -> Vec<[f64; 2]> {
        let r = self.num_faces();
        let scale = self.offsets.iter().fold(1.0f64, |m, b| m.max(b.abs()));
        let tol = 1e-9 * scale;
        let mut verts: Vec<[f64; 2]> = Vec::new();
        for i in 0..r {
            for j in (i + 1)..r {
                let [a1, a2] = self.normals[i];
                let [c1, c2] = self.normals[j];
                let det = a1 * c2 - a2 * c1;
                if det.abs() < 1e-12 {
                    continue;
                }
                let (bi, bj) = (self.offsets[i], self.offsets[j]);
                let p = [(bi * c2 - a2 * bj) / det, (a1 * bj - bi * c1) / det];
                if self.face_values(p).iter().all(|v| *v <= tol)
                    && !verts
                        .iter()
                        .any(|q| (q[0] - p[0]).abs() <= tol && (q[1] - p[1]).abs() <= tol)
                {
                    verts.push(p);
                }
            }
        }
        if verts.is_empty() {
            return verts;
        }
        let cx = verts.iter().map(|p| p[0]).sum::<f64>() / verts.len() as f64;
        let cy = verts.iter().map(|p| p[1]).sum::<f64>() / verts.len() as f64;
        verts.sort_by(|p, q| {
            let ap = (p[1] - cy).atan2(p[0] - cx);
            let aq = (q[1] - cy).atan2(q[0] - cx);
            ap.total_cmp(&aq)
        });
        verts
    }

    /// Axis-aligned bounding box `(xmin, ymin, xmax, ymax)`.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        self.vertices().iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(x0, y0, x1, y1), p| (x0.min(p[0]), y0.min(p[1]), x1.max(p[0]), y1.max(p[1])),
        )
    }

    // Bounded iff the outward normals leave no angular gap of π or more.
    fn is_bounded(&self) -> bool {
        let mut angles: Vec<f64> = self.normals.iter().map(|a| a[1].atan2(a[0])).collect();
        angles.sort_by(f64::total_cmp);
        let mut max_gap = angles[0] + std::f64::consts::TAU - angles[angles.len() - 1];
        for w in angles.windows(2) {
            max_gap = max_gap.max(w[1] - w[0]);
        }
        max_gap < std::f64::consts::PI - 1e-12
    }
}

/// Smallest `max_i (A_i p − b_i)` over a set of obstacles, `+∞` when empty.
pub fn min_clearance(obstacles: &[ConvexPolytope], p: [f64; 2]) -> f64 {
    obstacles
        .iter()
        .map(|o| o.max_face_value(p))
        .fold(f64::INFINITY, f64::min)
}
