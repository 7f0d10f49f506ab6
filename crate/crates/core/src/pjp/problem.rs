//! Constraint families for `PL + z ⊂ K`, each normalised to `f(P, z) ≤ 1`
//! with `f` convex and positively 1-homogeneous in `(P, z)`.

use serde::{Deserialize, Serialize};

use crate::bodies::{direction_net, Body, Shape};
use crate::linalg::{AffineMap, OrthogonalMatrix};
use crate::{Error, Matrix, Result, Vector};

/// Default number of support points used when a body is replaced by an
/// inscribed polytope.
pub const DEFAULT_APPROXIMATION_SIZE: usize = 256;

/// How containment was encoded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintFamily {
    /// `⟨a_j/b_j, P w_i + z⟩ ≤ 1` for facets of `K` and vertices of `L`.
    VertexFacet,
    /// `g_K(P w_i + z) ≤ 1` for vertices of `L`, `K` smooth.
    Gauge,
    /// `h_L(P y_j) + ⟨y_j, z⟩ ≤ 1` for facets of `K`, `L` smooth.
    Support,
}

/// User-facing constraint selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintMode {
    #[default]
    Auto,
    /// Replace the inner body by the convex hull of `size` support points.
    Approximate { size: usize },
}

#[derive(Clone, Debug)]
pub(crate) enum Constraint {
    Linear { normal: Vector, point: Vector },
    Gauge { point: Vector },
    Support { normal: Vector },
}

/// Coordinates `θ = (P_ij for i ≤ j, z)`; `z` is absent in symmetric mode.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub n: usize,
    pub entries: Vec<(usize, usize)>,
    pub translation: bool,
}

impl Layout {
    fn new(n: usize, translation: bool) -> Self {
        let mut entries: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        for i in 0..n {
            for j in i + 1..n {
                entries.push((i, j));
            }
        }
        Self { n, entries, translation }
    }

    pub fn dim(&self) -> usize {
        self.entries.len() + if self.translation { self.n } else { 0 }
    }

    pub fn unpack(&self, theta: &Vector) -> (Matrix, Vector) {
        let mut p = Matrix::zeros(self.n, self.n);
        for (k, &(i, j)) in self.entries.iter().enumerate() {
            p[(i, j)] = theta[k];
            p[(j, i)] = theta[k];
        }
        let z =
            if self.translation { theta.rows(self.entries.len(), self.n).into_owned() } else { Vector::zeros(self.n) };
        (p, z)
    }

    pub fn pack(&self, p: &Matrix, z: &Vector) -> Vector {
        let mut theta = Vector::zeros(self.dim());
        for (k, &(i, j)) in self.entries.iter().enumerate() {
            theta[k] = p[(i, j)];
        }
        if self.translation {
            theta.rows_mut(self.entries.len(), self.n).copy_from(z);
        }
        theta
    }

    /// Jacobian of `θ ↦ P a (+ z)`.
    fn point_jacobian(&self, a: &Vector, with_shift: bool) -> Matrix {
        let mut jac = Matrix::zeros(self.n, self.dim());
        for (k, &(i, j)) in self.entries.iter().enumerate() {
            if i == j {
                jac[(i, k)] = a[i];
            } else {
                jac[(i, k)] = a[j];
                jac[(j, k)] = a[i];
            }
        }
        if with_shift && self.translation {
            let base = self.entries.len();
            for i in 0..self.n {
                jac[(i, base + i)] = 1.0;
            }
        }
        jac
    }

    /// `∂/∂θ ⟨y, P a⟩` including the shift block `y` when present.
    fn bilinear_gradient(&self, y: &Vector, a: &Vector, with_shift: bool) -> Vector {
        let mut g = Vector::zeros(self.dim());
        for (k, &(i, j)) in self.entries.iter().enumerate() {
            g[k] = if i == j { y[i] * a[i] } else { y[i] * a[j] + y[j] * a[i] };
        }
        if with_shift && self.translation {
            g.rows_mut(self.entries.len(), self.n).copy_from(y);
        }
        g
    }
}

/// `max log det P` subject to `P U L + z ⊂ K`, encoded as finitely many
/// convex constraints.
#[derive(Clone, Debug)]
pub struct PjpProblem {
    pub(crate) outer: Body,
    pub(crate) inner: Body,
    pub(crate) rotation: Matrix,
    /// `U L` when it has a closed representation.
    pub(crate) rotated_inner: Option<Body>,
    pub(crate) family: ConstraintFamily,
    pub(crate) approximation: Option<usize>,
    pub(crate) constraints: Vec<Constraint>,
    pub(crate) layout: Layout,
    /// Constraints were halved using central symmetry.
    pub(crate) mirrored: bool,
}

impl PjpProblem {
    /// Builds the problem for `K ⊃ P U L + z`. `symmetric = None` enables
    /// symmetric mode exactly when both bodies are centrally symmetric.
    pub fn new(
        outer: &Body,
        inner: &Body,
        rotation: Option<&OrthogonalMatrix>,
        symmetric: Option<bool>,
        mode: ConstraintMode,
    ) -> Result<Self> {
        let n = outer.dim();
        if inner.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: inner.dim() });
        }
        if !outer.origin_interior() {
            return Err(Error::InfeasibleStart("outer body must contain the origin in its interior".into()));
        }
        let rotation = match rotation {
            Some(u) if u.dim() != n => return Err(Error::DimensionMismatch { expected: n, found: u.dim() }),
            Some(u) => u.matrix().clone(),
            None => Matrix::identity(n, n),
        };
        let symmetric = symmetric.unwrap_or(outer.is_symmetric() && inner.is_symmetric());
        let layout = Layout::new(n, !symmetric);
        let rotated_inner = inner.apply_affine(&AffineMap::linear(rotation.clone())).ok();

        let outer_smooth = outer.polytope().is_none();
        let inner_support_smooth = rotated_inner.as_ref().is_some_and(|b| {
            matches!(b.shape(), Shape::Ellipsoid { .. })
                || b.support_derivatives(&Vector::from_element(n, 1.0)).is_some()
        });
        let forced = match mode {
            ConstraintMode::Approximate { size } => Some(size),
            ConstraintMode::Auto => None,
        };

        let (points, approximation): (Option<Vec<Vector>>, Option<usize>) = match (inner.polytope(), forced) {
            (Some(p), None) => (Some(p.vertices().iter().map(|v| &rotation * v).collect()), None),
            (None, None) if !outer_smooth && inner_support_smooth => (None, None),
            (_, size) => {
                let size = size.unwrap_or(DEFAULT_APPROXIMATION_SIZE);
                let pts = direction_net(n, size).iter().map(|u| &rotation * inner.support_point(u)).collect();
                (Some(pts), Some(size))
            }
        };

        let (constraints, mirrored): (Vec<Constraint>, bool) = match (points, outer.polytope()) {
            (Some(points), outer_poly) => {
                let (points, halved) = if symmetric { halve(points) } else { (points, false) };
                match outer_poly {
                    Some(poly) => {
                        let mut out = Vec::with_capacity(points.len() * poly.facets().len());
                        for w in &points {
                            for f in poly.facets() {
                                out.push(Constraint::Linear { normal: &f.normal / f.offset, point: w.clone() });
                            }
                        }
                        (out, halved)
                    }
                    None => {
                        if outer.gauge_derivatives(&Vector::from_element(n, 1.0)).is_none() {
                            return Err(Error::Unsupported(format!("no smooth gauge for {}", outer.describe())));
                        }
                        (points.into_iter().map(|point| Constraint::Gauge { point }).collect(), halved)
                    }
                }
            }
            (None, Some(poly)) => {
                let normals: Vec<Vector> = poly.facets().iter().map(|f| &f.normal / f.offset).collect();
                let (normals, halved) = if symmetric { halve(normals) } else { (normals, false) };
                (normals.into_iter().map(|normal| Constraint::Support { normal }).collect(), halved)
            }
            (None, None) => unreachable!("smooth pairs are approximated"),
        };
        let family = match constraints.first() {
            Some(Constraint::Linear { .. }) => ConstraintFamily::VertexFacet,
            Some(Constraint::Gauge { .. }) => ConstraintFamily::Gauge,
            Some(Constraint::Support { .. }) => ConstraintFamily::Support,
            None => return Err(Error::InvalidBody("no constraints".into())),
        };
        Ok(Self {
            outer: outer.clone(),
            inner: inner.clone(),
            rotation,
            rotated_inner,
            family,
            approximation,
            constraints,
            layout,
            mirrored,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.n
    }

    pub fn family(&self) -> ConstraintFamily {
        self.family
    }

    pub fn approximation(&self) -> Option<usize> {
        self.approximation
    }

    pub fn symmetric(&self) -> bool {
        !self.layout.translation
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    pub fn rotation(&self) -> &Matrix {
        &self.rotation
    }

    pub(crate) fn value(&self, c: &Constraint, p: &Matrix, z: &Vector) -> f64 {
        match c {
            Constraint::Linear { normal, point, .. } => normal.dot(&(p * point + z)),
            Constraint::Gauge { point, .. } => self.outer.gauge(&(p * point + z)),
            Constraint::Support { normal, .. } => self.inner_body().support(&(p * normal)) + normal.dot(z),
        }
    }

    /// Value, gradient and (when nonzero) Hessian in `θ` coordinates.
    pub(crate) fn derivatives(&self, c: &Constraint, p: &Matrix, z: &Vector) -> (f64, Vector, Option<Matrix>) {
        let layout = &self.layout;
        match c {
            Constraint::Linear { normal, point, .. } => {
                (normal.dot(&(p * point + z)), layout.bilinear_gradient(normal, point, true), None)
            }
            Constraint::Gauge { point, .. } => {
                let x = p * point + z;
                let (g, grad, hess) = self.outer.gauge_derivatives(&x).expect("smooth outer body");
                let jac = layout.point_jacobian(point, true);
                let jt = jac.transpose();
                (g, &jt * grad, Some(&jt * hess * jac))
            }
            Constraint::Support { normal, .. } => {
                let v = p * normal;
                let (h, grad, hess) = self.inner_body().support_derivatives(&v).expect("smooth inner body");
                let jac = layout.point_jacobian(normal, false);
                let jt = jac.transpose();
                let mut g = &jt * grad;
                if layout.translation {
                    let base = layout.entries.len();
                    for i in 0..layout.n {
                        g[base + i] += normal[i];
                    }
                }
                (h + normal.dot(z), g, Some(&jt * hess * jac))
            }
        }
    }

    /// [`Self::contact`] for every constraint.
    pub(crate) fn constraint_contacts(&self, p: &Matrix, z: &Vector) -> Vec<(Vector, Vector, Vector)> {
        self.constraints.iter().map(|c| self.contact(c, p, z)).collect()
    }

    /// `h_{UL}(v) = h_L(Uᵀ v)`.
    pub(crate) fn rotated_inner_support(&self, v: &Vector) -> f64 {
        self.inner.support(&(self.rotation.transpose() * v))
    }

    pub fn outer(&self) -> &Body {
        &self.outer
    }

    pub fn inner(&self) -> &Body {
        &self.inner
    }

    pub(crate) fn inner_body(&self) -> &Body {
        self.rotated_inner.as_ref().expect("support constraints need a closed inner body")
    }

    /// Contact point in `∂K ∩ ∂(P U L + z)`, its polar normal with
    /// `⟨x, y⟩ = 1`, and the inner point `w ∈ ∂(U L)` with `x = P w + z`.
    pub(crate) fn contact(&self, c: &Constraint, p: &Matrix, z: &Vector) -> (Vector, Vector, Vector) {
        match c {
            Constraint::Linear { normal, point, .. } => (p * point + z, normal.clone(), point.clone()),
            Constraint::Gauge { point, .. } => {
                let x = p * point + z;
                let (_, grad, _) = self.outer.gauge_derivatives(&x).expect("smooth outer body");
                (x, grad, point.clone())
            }
            Constraint::Support { normal, .. } => {
                let w = self.inner_body().support_point(&(p * normal));
                (p * &w + z, normal.clone(), w)
            }
        }
    }
}

/// Keeps one representative of every `±v` pair; reports whether the set was
/// centrally symmetric.
fn halve(points: Vec<Vector>) -> (Vec<Vector>, bool) {
    let scale = points.iter().map(|p| p.norm()).fold(1.0, f64::max);
    let tol = 1e-9 * scale;
    let symmetric = points.iter().all(|p| points.iter().any(|q| (p + q).norm() <= tol));
    if !symmetric {
        return (points, false);
    }
    let mut kept: Vec<Vector> = Vec::with_capacity(points.len() / 2 + 1);
    for p in points {
        if !kept.iter().any(|q| (&p + q).norm() <= tol) {
            kept.push(p);
        }
    }
    (kept, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::haar_orthogonal;

    #[test]
    fn layout_round_trip() {
        let layout = Layout::new(3, true);
        let p = Matrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let z = Vector::from_vec(vec![7.0, 8.0, 9.0]);
        let (p2, z2) = layout.unpack(&layout.pack(&p, &z));
        assert_eq!(p, p2);
        assert_eq!(z, z2);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let n = 3;
        let u = haar_orthogonal(n, 5);
        let cases = [
            (Body::cube(n), Body::cross_polytope(n)),
            (Body::euclidean_ball(n), Body::cube(n)),
            (Body::cross_polytope(n), Body::euclidean_ball(n)),
        ];
        for (outer, inner) in cases {
            for symmetric in [Some(true), Some(false)] {
                let prob = PjpProblem::new(&outer, &inner, Some(&u), symmetric, ConstraintMode::Auto).unwrap();
                let p0 = Matrix::from_row_slice(3, 3, &[0.4, 0.05, 0.0, 0.05, 0.3, 0.02, 0.0, 0.02, 0.35]);
                let z0 = Vector::from_vec(vec![0.01, -0.02, 0.03]);
                let theta = prob.layout.pack(&p0, &z0);
                let (p0, z0) = prob.layout.unpack(&theta);
                for c in prob.constraints.iter().take(12) {
                    let (f, g, hess) = prob.derivatives(c, &p0, &z0);
                    assert!((f - prob.value(c, &p0, &z0)).abs() < 1e-14);
                    let h = 1e-6;
                    for k in 0..theta.len() {
                        let mut tp = theta.clone();
                        tp[k] += h;
                        let mut tm = theta.clone();
                        tm[k] -= h;
                        let (pp, zp) = prob.layout.unpack(&tp);
                        let (pm, zm) = prob.layout.unpack(&tm);
                        let fd = (prob.value(c, &pp, &zp) - prob.value(c, &pm, &zm)) / (2.0 * h);
                        assert!((fd - g[k]).abs() < 1e-7, "{:?} {symmetric:?} k={k} fd={fd} g={}", prob.family, g[k]);
                        if let Some(hess) = &hess {
                            let gp = prob.derivatives(c, &pp, &zp).1;
                            let gm = prob.derivatives(c, &pm, &zm).1;
                            assert!(((gp - gm) / (2.0 * h) - hess.column(k)).norm() < 1e-6);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn family_selection_and_halving() {
        let prob = PjpProblem::new(&Body::cross_polytope(3), &Body::cube(3), None, None, ConstraintMode::Auto).unwrap();
        assert_eq!(prob.family(), ConstraintFamily::VertexFacet);
        assert!(prob.symmetric() && prob.mirrored);
        assert_eq!(prob.constraint_count(), 4 * 8);
        let ball = Body::euclidean_ball(2);
        let prob = PjpProblem::new(&ball, &ball, None, None, ConstraintMode::Auto).unwrap();
        assert_eq!(prob.family(), ConstraintFamily::Gauge);
        assert_eq!(prob.approximation(), Some(DEFAULT_APPROXIMATION_SIZE));
        let prob = PjpProblem::new(&Body::cube(2), &ball, None, Some(false), ConstraintMode::Auto).unwrap();
        assert_eq!(prob.family(), ConstraintFamily::Support);
        assert_eq!(prob.constraint_count(), 4);
    }
}
