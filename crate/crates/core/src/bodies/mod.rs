//! Convex bodies and their oracles: support function, gauge, membership,
//! affine images, polarity, containment and Hausdorff distance.

mod hull;
mod net;
mod spec;

pub(crate) use hull::{affine_rank, enumerate_vertices, face_measure};
pub use net::{direction_net, DEFAULT_NET_SIZE};
pub use spec::{load_body, parse_body, BodySpec, PValue};

use serde::{Deserialize, Serialize};

use crate::linalg::{spectral_map, sym, AffineMap, SpdMatrix};
use crate::{Error, Matrix, Result, Vector};

/// Relative tolerance for incidence of vertices on facets.
const INCIDENCE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpExponent {
    One,
    Two,
    Four,
    Infinity,
}

impl LpExponent {
    pub fn value(self) -> f64 {
        match self {
            Self::One => 1.0,
            Self::Two => 2.0,
            Self::Four => 4.0,
            Self::Infinity => f64::INFINITY,
        }
    }

    /// Conjugate exponent `q` with `1/p + 1/q = 1`.
    pub fn conjugate(self) -> f64 {
        match self {
            Self::One => f64::INFINITY,
            Self::Two => 2.0,
            Self::Four => 4.0 / 3.0,
            Self::Infinity => 1.0,
        }
    }
}

fn lp_norm(x: &Vector, p: f64) -> f64 {
    if p.is_infinite() {
        x.amax()
    } else if p == 1.0 {
        x.lp_norm(1)
    } else if p == 2.0 {
        x.norm()
    } else {
        x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Which representation a polytope was given in; kept for serialisation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolytopeSource {
    Halfspaces,
    Vertices,
}

/// `{x : ⟨normal, x⟩ ≤ offset}` with a unit normal.
#[derive(Clone, Debug, PartialEq)]
pub struct Facet {
    pub normal: Vector,
    pub offset: f64,
}

/// A full-dimensional polytope with both representations and the
/// vertex–facet incidence.
#[derive(Clone, Debug)]
pub struct Polytope {
    source: PolytopeSource,
    vertices: Vec<Vector>,
    facets: Vec<Facet>,
    /// Sorted vertex indices on each facet.
    incidence: Vec<Vec<usize>>,
}

impl Polytope {
    pub fn from_halfspaces(normals: &[Vector], offsets: &[f64]) -> Result<Self> {
        if normals.len() != offsets.len() {
            return Err(Error::DimensionMismatch { expected: normals.len(), found: offsets.len() });
        }
        let vertices = enumerate_vertices(normals, offsets)?;
        if vertices.is_empty() {
            return Err(Error::InvalidBody("halfspaces have empty intersection".into()));
        }
        let facets = normals
            .iter()
            .zip(offsets)
            .map(|(a, &b)| {
                let norm = a.norm();
                Facet { normal: a / norm, offset: b / norm }
            })
            .collect();
        Self::assemble(PolytopeSource::Halfspaces, vertices, facets)
    }

    pub fn from_vertices(points: &[Vector]) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::InvalidBody("no vertices".into()));
        };
        let n = first.len();
        if points.iter().any(|p| p.len() != n) {
            return Err(Error::InvalidBody("vertices have inconsistent dimensions".into()));
        }
        let idx: Vec<usize> = (0..points.len()).collect();
        let scale = points.iter().map(|p| p.norm()).fold(1.0, f64::max);
        if affine_rank(points, &idx, INCIDENCE_TOL * scale) < n {
            return Err(Error::InvalidBody("vertices are not full-dimensional".into()));
        }
        let center = points.iter().fold(Vector::zeros(n), |a, p| a + p) / points.len() as f64;
        let rows: Vec<Vector> = points.iter().map(|p| p - &center).collect();
        let polar = enumerate_vertices(&rows, &vec![1.0; rows.len()])?;
        let facets = polar
            .iter()
            .map(|y| {
                let norm = y.norm();
                Facet { normal: y / norm, offset: (1.0 + y.dot(&center)) / norm }
            })
            .collect();
        Self::assemble(PolytopeSource::Vertices, points.to_vec(), facets)
    }

    /// Keeps genuine facets and vertices of `conv(candidates) = ∩ facets`.
    fn assemble(source: PolytopeSource, candidates: Vec<Vector>, facets: Vec<Facet>) -> Result<Self> {
        let n = facets[0].normal.len();
        let scale = candidates.iter().map(|p| p.norm()).fold(1.0, f64::max);
        let tol = INCIDENCE_TOL * scale;
        let tight = |f: &Facet, p: &Vector| (f.normal.dot(p) - f.offset).abs() <= tol;

        let mut vertices: Vec<Vector> = Vec::new();
        for p in candidates {
            if vertices.iter().any(|v| (v - &p).norm() <= tol) {
                continue;
            }
            let normals: Vec<Vector> = facets.iter().filter(|f| tight(f, &p)).map(|f| f.normal.clone()).collect();
            let mut zero = normals.clone();
            zero.push(Vector::zeros(n));
            let all: Vec<usize> = (0..zero.len()).collect();
            if affine_rank(&zero, &all, 1e-9) == n {
                vertices.push(p);
            }
        }
        let all: Vec<usize> = (0..vertices.len()).collect();
        if affine_rank(&vertices, &all, tol) < n {
            return Err(Error::InvalidBody("polytope is not full-dimensional".into()));
        }

        let mut kept: Vec<Facet> = Vec::new();
        let mut incidence: Vec<Vec<usize>> = Vec::new();
        for f in facets {
            let on: Vec<usize> = (0..vertices.len()).filter(|&i| tight(&f, &vertices[i])).collect();
            if affine_rank(&vertices, &on, tol) + 1 != n || on.len() < n || incidence.contains(&on) {
                continue;
            }
            kept.push(f);
            incidence.push(on);
        }
        Ok(Self { source, vertices, facets: kept, incidence })
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn source(&self) -> PolytopeSource {
        self.source
    }

    pub fn vertices(&self) -> &[Vector] {
        &self.vertices
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn incidence(&self) -> &[Vec<usize>] {
        &self.incidence
    }

    fn tol(&self) -> f64 {
        INCIDENCE_TOL * self.vertices.iter().map(|p| p.norm()).fold(1.0, f64::max)
    }

    pub fn volume(&self) -> f64 {
        self.volume_and_centroid().0
    }

    pub fn volume_and_centroid(&self) -> (f64, Vector) {
        let all: Vec<usize> = (0..self.vertices.len()).collect();
        face_measure(&self.vertices, &self.incidence, &all, self.dim(), self.tol())
    }

    /// `(n−1)`-measure and centroid of facet `j`.
    pub fn facet_measure(&self, j: usize) -> (f64, Vector) {
        face_measure(&self.vertices, &self.incidence, &self.incidence[j], self.dim() - 1, self.tol())
    }

    fn level(&self, x: &Vector) -> f64 {
        self.facets.iter().map(|f| f.normal.dot(x) - f.offset).fold(f64::NEG_INFINITY, f64::max)
    }

    fn support(&self, u: &Vector) -> (f64, usize) {
        self.vertices.iter().enumerate().map(|(i, v)| (v.dot(u), i)).fold((f64::NEG_INFINITY, 0), |a, b| {
            if b.0 > a.0 {
                b
            } else {
                a
            }
        })
    }

    fn transform(&self, map: &AffineMap) -> Result<Polytope> {
        let inv_t = map
            .linear
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("affine map is not invertible".into()))?
            .transpose();
        let vertices = self.vertices.iter().map(|v| map.apply(v)).collect();
        let facets = self
            .facets
            .iter()
            .map(|f| {
                let a = &inv_t * &f.normal;
                let b = f.offset + a.dot(&map.shift);
                let norm = a.norm();
                Facet { normal: a / norm, offset: b / norm }
            })
            .collect();
        Ok(Polytope { source: self.source, vertices, facets, incidence: self.incidence.clone() })
    }

    fn polar(&self) -> Polytope {
        let vertices = self.facets.iter().map(|f| &f.normal / f.offset).collect();
        let facets = self
            .vertices
            .iter()
            .map(|v| {
                let norm = v.norm();
                Facet { normal: v / norm, offset: 1.0 / norm }
            })
            .collect();
        let mut incidence = vec![Vec::new(); self.vertices.len()];
        for (j, on) in self.incidence.iter().enumerate() {
            for &i in on {
                incidence[i].push(j);
            }
        }
        let source = match self.source {
            PolytopeSource::Halfspaces => PolytopeSource::Vertices,
            PolytopeSource::Vertices => PolytopeSource::Halfspaces,
        };
        Polytope { source, vertices, facets, incidence }
    }

    fn is_symmetric(&self) -> bool {
        let tol = self.tol();
        self.vertices.iter().all(|v| self.vertices.iter().any(|w| (v + w).norm() <= tol))
    }

    fn cube(n: usize, r: f64) -> Polytope {
        let vertices: Vec<Vector> =
            (0..1usize << n).map(|mask| Vector::from_fn(n, |i, _| if mask & (1 << i) != 0 { -r } else { r })).collect();
        let mut facets = Vec::new();
        let mut incidence = Vec::new();
        for i in 0..n {
            for negative in [false, true] {
                let mut a = Vector::zeros(n);
                a[i] = if negative { -1.0 } else { 1.0 };
                facets.push(Facet { normal: a, offset: r });
                incidence.push((0..vertices.len()).filter(|m| ((m >> i) & 1 == 1) == negative).collect());
            }
        }
        Polytope { source: PolytopeSource::Halfspaces, vertices, facets, incidence }
    }

    fn cross(n: usize, r: f64) -> Polytope {
        let vertices: Vec<Vector> = (0..2 * n)
            .map(|k| {
                let mut v = Vector::zeros(n);
                v[k / 2] = if k % 2 == 0 { r } else { -r };
                v
            })
            .collect();
        let scale = (n as f64).sqrt();
        let mut facets = Vec::new();
        let mut incidence = Vec::new();
        for mask in 0..1usize << n {
            let normal = Vector::from_fn(n, |i, _| if mask & (1 << i) != 0 { -1.0 } else { 1.0 }) / scale;
            facets.push(Facet { normal, offset: r / scale });
            incidence.push((0..n).map(|i| 2 * i + ((mask >> i) & 1)).collect());
        }
        Polytope { source: PolytopeSource::Vertices, vertices, facets, incidence }
    }
}

/// Geometric description of a body.
#[derive(Clone, Debug)]
pub enum Shape {
    Polytope(Polytope),
    /// `shape · B₂ⁿ + center`.
    Ellipsoid {
        shape: SpdMatrix,
        center: Vector,
    },
    /// `radius · Bₚⁿ`; the polytope is present for `p ∈ {1, ∞}`.
    LpBall {
        p: LpExponent,
        radius: f64,
        polytope: Option<Polytope>,
    },
}

/// A convex body in `Rⁿ`. Bodies built through the public constructors
/// contain the origin in their interior; affine images need not.
#[derive(Clone, Debug)]
pub struct Body {
    shape: Shape,
    dim: usize,
    symmetric: bool,
}

impl Body {
    pub fn h_polytope(normals: &[Vector], offsets: &[f64]) -> Result<Body> {
        Self::with_origin(Self::from_polytope(Polytope::from_halfspaces(normals, offsets)?))
    }

    pub fn v_polytope(vertices: &[Vector]) -> Result<Body> {
        Self::with_origin(Self::from_polytope(Polytope::from_vertices(vertices)?))
    }

    pub fn ellipsoid(shape: SpdMatrix, center: Vector) -> Result<Body> {
        if center.len() != shape.dim() {
            return Err(Error::DimensionMismatch { expected: shape.dim(), found: center.len() });
        }
        let dim = center.len();
        let symmetric = center.norm() <= 1e-12 * shape.matrix().norm();
        Self::with_origin(Body { shape: Shape::Ellipsoid { shape, center }, dim, symmetric })
    }

    pub fn lp_ball(p: LpExponent, n: usize, radius: f64) -> Result<Body> {
        if n == 0 {
            return Err(Error::InvalidBody("dimension must be positive".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidBody(format!("radius must be positive, got {radius}")));
        }
        let polytope = match p {
            LpExponent::One => Some(Polytope::cross(n, radius)),
            LpExponent::Infinity => Some(Polytope::cube(n, radius)),
            _ => None,
        };
        Ok(Body { shape: Shape::LpBall { p, radius, polytope }, dim: n, symmetric: true })
    }

    /// `B∞ⁿ`.
    pub fn cube(n: usize) -> Body {
        Self::lp_ball(LpExponent::Infinity, n, 1.0).expect("valid parameters")
    }

    /// `B₁ⁿ`.
    pub fn cross_polytope(n: usize) -> Body {
        Self::lp_ball(LpExponent::One, n, 1.0).expect("valid parameters")
    }

    /// `B₂ⁿ`.
    pub fn euclidean_ball(n: usize) -> Body {
        Self::lp_ball(LpExponent::Two, n, 1.0).expect("valid parameters")
    }

    fn from_polytope(p: Polytope) -> Body {
        let dim = p.dim();
        let symmetric = p.is_symmetric();
        Body { shape: Shape::Polytope(p), dim, symmetric }
    }

    fn with_origin(body: Body) -> Result<Body> {
        if body.origin_interior() {
            Ok(body)
        } else {
            Err(Error::InvalidBody("origin is not an interior point".into()))
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn polytope(&self) -> Option<&Polytope> {
        match &self.shape {
            Shape::Polytope(p) => Some(p),
            Shape::LpBall { polytope, .. } => polytope.as_ref(),
            Shape::Ellipsoid { .. } => None,
        }
    }

    pub fn is_polytope(&self) -> bool {
        self.polytope().is_some()
    }

    /// Short human-readable description.
    pub fn describe(&self) -> String {
        match &self.shape {
            Shape::Polytope(p) => format!(
                "{}-polytope in R^{} ({} vertices, {} facets)",
                match p.source {
                    PolytopeSource::Halfspaces => "h",
                    PolytopeSource::Vertices => "v",
                },
                self.dim,
                p.vertices.len(),
                p.facets.len()
            ),
            Shape::Ellipsoid { .. } => format!("ellipsoid in R^{}", self.dim),
            Shape::LpBall { p, radius, .. } => {
                let p = if *p == LpExponent::Infinity { "inf".to_string() } else { p.value().to_string() };
                format!("{radius}·B_{p}^{}", self.dim)
            }
        }
    }

    pub fn origin_interior(&self) -> bool {
        match &self.shape {
            Shape::Polytope(p) => p.facets.iter().all(|f| f.offset > 0.0),
            Shape::Ellipsoid { shape, center } => {
                let w = shape.inverse().matrix() * center;
                w.norm() < 1.0
            }
            Shape::LpBall { .. } => true,
        }
    }

    /// `h(u) = max_{x ∈ K} ⟨x, u⟩`.
    pub fn support(&self, u: &Vector) -> f64 {
        match &self.shape {
            Shape::Polytope(p) => p.support(u).0,
            Shape::Ellipsoid { shape, center } => (shape.matrix() * u).norm() + center.dot(u),
            Shape::LpBall { p, radius, .. } => radius * lp_norm(u, p.conjugate()),
        }
    }

    /// A maximiser of `⟨x, u⟩` over the body.
    pub fn support_point(&self, u: &Vector) -> Vector {
        match &self.shape {
            Shape::Polytope(p) => p.vertices[p.support(u).1].clone(),
            Shape::Ellipsoid { shape, center } => {
                let su = shape.matrix() * u;
                let norm = su.norm();
                if norm == 0.0 {
                    center.clone()
                } else {
                    shape.matrix() * su / norm + center
                }
            }
            Shape::LpBall { p, radius, .. } => {
                let n = u.len();
                match p {
                    LpExponent::One => {
                        let k = u.iamax();
                        let mut x = Vector::zeros(n);
                        x[k] = radius * u[k].signum();
                        x
                    }
                    LpExponent::Infinity => u.map(|v| if v < 0.0 { -radius } else { *radius }),
                    LpExponent::Two => {
                        let norm = u.norm();
                        if norm == 0.0 {
                            Vector::zeros(n)
                        } else {
                            u * (radius / norm)
                        }
                    }
                    LpExponent::Four => {
                        let q = p.conjugate();
                        let norm = lp_norm(u, q);
                        if norm == 0.0 {
                            Vector::zeros(n)
                        } else {
                            u.map(|v| radius * v.signum() * (v.abs() / norm).powf(q - 1.0))
                        }
                    }
                }
            }
        }
    }

    /// Minkowski functional `inf{λ > 0 : x ∈ λK}`. Meaningful only when the
    /// origin is interior.
    pub fn gauge(&self, x: &Vector) -> f64 {
        match &self.shape {
            Shape::Polytope(p) => p.facets.iter().map(|f| f.normal.dot(x) / f.offset).fold(0.0, f64::max),
            Shape::Ellipsoid { shape, center } => {
                let inv = shape.inverse();
                let p = inv.matrix() * x;
                let q = inv.matrix() * center;
                let pq = p.dot(&q);
                let a = 1.0 - q.norm_squared();
                (-pq + (pq * pq + a * p.norm_squared()).sqrt()) / a
            }
            Shape::LpBall { p, radius, .. } => lp_norm(x, p.value()) / radius,
        }
    }

    /// Gauge with gradient and Hessian for bodies with a smooth boundary.
    pub fn gauge_derivatives(&self, x: &Vector) -> Option<(f64, Vector, Matrix)> {
        let n = self.dim;
        let g = self.gauge(x);
        if !(g > 0.0) {
            return None;
        }
        let q = x / g;
        let (grad_f, hess_f) = match &self.shape {
            Shape::Ellipsoid { shape, center } => {
                let inv2 = shape.inverse().matrix().pow(2);
                (&inv2 * (&q - center) * 2.0, inv2 * 2.0)
            }
            Shape::LpBall { p: LpExponent::Two, radius, .. } => {
                let r2 = radius * radius;
                (&q * (2.0 / r2), Matrix::identity(n, n) * (2.0 / r2))
            }
            Shape::LpBall { p: LpExponent::Four, radius, .. } => {
                let r4 = radius.powi(4);
                (q.map(|v| 4.0 * v.powi(3) / r4), Matrix::from_diagonal(&q.map(|v| 12.0 * v * v / r4)))
            }
            _ => return None,
        };
        let s = grad_f.dot(&q);
        let grad = &grad_f / s;
        let dphi = &hess_f / s - &grad_f * (&hess_f * &q + &grad_f).transpose() / (s * s);
        let hess = dphi * (Matrix::identity(n, n) - &q * grad.transpose()) / g;
        Some((g, grad, sym(&hess)))
    }

    /// Support function with gradient and Hessian for bodies whose support
    /// function is twice differentiable away from the origin.
    pub fn support_derivatives(&self, u: &Vector) -> Option<(f64, Vector, Matrix)> {
        let n = self.dim;
        match &self.shape {
            Shape::Ellipsoid { shape, center } => {
                let s2 = shape.matrix().pow(2);
                let su = shape.matrix() * u;
                let r = su.norm();
                if r == 0.0 {
                    return None;
                }
                let s2u = &s2 * u;
                let h = r + center.dot(u);
                let grad = &s2u / r + center;
                let hess = (s2 - &s2u * s2u.transpose() / (r * r)) / r;
                Some((h, grad, sym(&hess)))
            }
            Shape::LpBall { p: LpExponent::Two, radius, .. } => {
                let r = u.norm();
                if r == 0.0 {
                    return None;
                }
                let unit = u / r;
                let hess = (Matrix::identity(n, n) - &unit * unit.transpose()) * (radius / r);
                Some((radius * r, unit * *radius, hess))
            }
            _ => None,
        }
    }

    /// Signed membership level: non-positive exactly on the body. Comparable
    /// to the distance to the boundary near it.
    pub fn level(&self, x: &Vector) -> f64 {
        match &self.shape {
            Shape::Polytope(p) => p.level(x),
            Shape::Ellipsoid { shape, center } => {
                let w = shape.inverse().matrix() * (x - center);
                (w.norm() - 1.0) * shape.eigenvalues().min()
            }
            Shape::LpBall { p, radius, .. } => lp_norm(x, p.value()) - radius,
        }
    }

    pub fn contains_point(&self, x: &Vector, tol: f64) -> bool {
        self.level(x) <= tol
    }

    /// Upper bound on `max_{x ∈ K} |x|`.
    pub fn circumradius(&self) -> f64 {
        match &self.shape {
            Shape::Polytope(p) => p.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max),
            Shape::Ellipsoid { shape, center } => center.norm() + shape.eigenvalues().max(),
            Shape::LpBall { p, radius, .. } => {
                let n = self.dim as f64;
                match p {
                    LpExponent::One | LpExponent::Two => *radius,
                    LpExponent::Four => radius * n.powf(0.25),
                    LpExponent::Infinity => radius * n.sqrt(),
                }
            }
        }
    }

    pub fn volume(&self) -> f64 {
        let n = self.dim as f64;
        match &self.shape {
            Shape::Polytope(p) => p.volume(),
            Shape::Ellipsoid { shape, .. } => unit_ball_volume(self.dim) * shape.eigenvalues().product(),
            Shape::LpBall { p, radius, .. } => {
                let unit = match p {
                    LpExponent::One => 2f64.powf(n) / libm::tgamma(n + 1.0),
                    LpExponent::Two => unit_ball_volume(self.dim),
                    LpExponent::Four => (2.0 * libm::tgamma(1.25)).powf(n) / libm::tgamma(1.0 + n / 4.0),
                    LpExponent::Infinity => 2f64.powf(n),
                };
                unit * radius.powf(n)
            }
        }
    }

    /// Image of the body under an invertible affine map.
    pub fn apply_affine(&self, map: &AffineMap) -> Result<Body> {
        if map.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: map.dim() });
        }
        let translate_only = map.shift.norm() == 0.0;
        match &self.shape {
            Shape::Polytope(p) => Ok(Self::from_polytope(p.transform(map)?)),
            Shape::Ellipsoid { shape, center } => {
                let s2 = &map.linear * shape.matrix().pow(2) * map.linear.transpose();
                let shape = SpdMatrix::new(spectral_map(&s2, |l| l.max(0.0).sqrt()))?;
                let center = map.apply(center);
                let symmetric = center.norm() <= 1e-12 * shape.matrix().norm();
                Ok(Body { shape: Shape::Ellipsoid { shape, center }, dim: self.dim, symmetric })
            }
            Shape::LpBall { p, radius, polytope } => {
                if let (Some(s), true) = (map.positive_scalar(), translate_only) {
                    return Self::lp_ball(*p, self.dim, radius * s);
                }
                match (p, polytope) {
                    (_, Some(poly)) => Ok(Self::from_polytope(poly.transform(map)?)),
                    (LpExponent::Two, None) => {
                        let n = self.dim;
                        let ball = SpdMatrix::scaled_identity(n, *radius)?;
                        Body {
                            shape: Shape::Ellipsoid { shape: ball, center: Vector::zeros(n) },
                            dim: n,
                            symmetric: true,
                        }
                        .apply_affine(map)
                    }
                    _ => Err(Error::Unsupported(
                        "non-scalar affine image of an l4 ball has no closed representation".into(),
                    )),
                }
            }
        }
    }

    pub fn translate(&self, shift: &Vector) -> Result<Body> {
        self.apply_affine(&AffineMap::translation(shift.clone()))
    }

    /// `K° = {y : ⟨x, y⟩ ≤ 1 for all x ∈ K}`.
    pub fn polar_dual(&self) -> Result<Body> {
        if !self.origin_interior() {
            return Err(Error::InvalidBody("polar requires the origin in the interior".into()));
        }
        match &self.shape {
            Shape::Polytope(p) => Ok(Self::from_polytope(p.polar())),
            Shape::Ellipsoid { shape, center } => {
                let n = self.dim;
                let q = shape.matrix().pow(2) - center * center.transpose();
                let q_inv = q.try_inverse().ok_or_else(|| Error::Singular("S² − ccᵀ".into()))?;
                let kappa = center.dot(&(&q_inv * center));
                let shape = SpdMatrix::new(spectral_map(&(&q_inv * (1.0 + kappa)), f64::sqrt))?;
                let center = -(&q_inv * center);
                let symmetric = center.norm() <= 1e-12 * n as f64;
                Ok(Body { shape: Shape::Ellipsoid { shape, center }, dim: n, symmetric })
            }
            Shape::LpBall { p, radius, .. } => {
                let dual = match p {
                    LpExponent::One => LpExponent::Infinity,
                    LpExponent::Infinity => LpExponent::One,
                    LpExponent::Two => LpExponent::Two,
                    LpExponent::Four => {
                        return Err(Error::Unsupported("the polar of an l4 ball is an l4/3 ball".into()))
                    }
                };
                Self::lp_ball(dual, self.dim, 1.0 / radius)
            }
        }
    }

    /// Directions at which support functions must be compared: a net plus
    /// facet normals and vertex directions.
    pub fn critical_directions(&self) -> Vec<Vector> {
        let mut out = Vec::new();
        if let Some(p) = self.polytope() {
            out.extend(p.facets.iter().map(|f| f.normal.clone()));
            out.extend(p.vertices.iter().filter(|v| v.norm() > 0.0).map(|v| v.normalize()));
        }
        out
    }
}

fn unit_ball_volume(n: usize) -> f64 {
    let n = n as f64;
    std::f64::consts::PI.powf(n / 2.0) / libm::tgamma(n / 2.0 + 1.0)
}

/// How a containment check was decided.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckMethod {
    Exact,
    DirectionNet { size: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Containment {
    pub holds: bool,
    /// Largest amount by which the inner body pokes out; negative if strict.
    pub worst_violation: f64,
    pub method: CheckMethod,
}

/// Whether `inner ⊂ outer` up to `tol`.
pub fn contains(outer: &Body, inner: &Body, tol: f64) -> Result<Containment> {
    if outer.dim != inner.dim {
        return Err(Error::DimensionMismatch { expected: outer.dim, found: inner.dim });
    }
    let (worst, method) = if let Some(p) = inner.polytope() {
        let worst = p.vertices.iter().map(|v| outer.level(v)).fold(f64::NEG_INFINITY, f64::max);
        (worst, CheckMethod::Exact)
    } else if let Some(p) = outer.polytope() {
        let worst = p.facets.iter().map(|f| inner.support(&f.normal) - f.offset).fold(f64::NEG_INFINITY, f64::max);
        (worst, CheckMethod::Exact)
    } else {
        let net = direction_net(outer.dim, DEFAULT_NET_SIZE);
        let worst = net.iter().map(|u| inner.support(u) - outer.support(u)).fold(f64::NEG_INFINITY, f64::max);
        (worst, CheckMethod::DirectionNet { size: net.len() })
    };
    Ok(Containment { holds: worst <= tol, worst_violation: worst, method })
}

/// Hausdorff distance `max_u |h_A(u) − h_B(u)|` over a direction net
/// augmented with the critical directions of both bodies.
pub fn hausdorff_distance(a: &Body, b: &Body, net_size: usize) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, found: b.dim });
    }
    let mut dirs = direction_net(a.dim, net_size);
    dirs.extend(a.critical_directions());
    dirs.extend(b.critical_directions());
    Ok(dirs.iter().map(|u| (a.support(u) - b.support(u)).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{haar_orthogonal, stream_rng};
    use proptest::prelude::*;
    use rand::Rng;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn spd(rows: usize, entries: &[f64]) -> SpdMatrix {
        SpdMatrix::new(Matrix::from_row_slice(rows, rows, entries)).unwrap()
    }

    fn random_polytope(n: usize, k: usize, seed: u64) -> Body {
        let mut rng = stream_rng(seed, 0);
        let pts: Vec<Vector> = (0..k).map(|_| Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))).collect();
        let mut pts = pts;
        // Guarantee the origin is interior.
        for i in 0..n {
            let mut e = Vector::zeros(n);
            e[i] = 0.3;
            pts.push(e.clone());
            pts.push(-e);
        }
        Body::v_polytope(&pts).unwrap()
    }

    fn bodies(n: usize) -> Vec<Body> {
        let mut shape = Matrix::identity(n, n);
        shape[(0, 0)] = 2.0;
        let center = Vector::from_fn(n, |i, _| 0.1 * (i as f64 + 1.0));
        vec![
            Body::cube(n),
            Body::cross_polytope(n),
            Body::euclidean_ball(n),
            Body::lp_ball(LpExponent::Four, n, 1.5).unwrap(),
            Body::ellipsoid(SpdMatrix::new(shape).unwrap(), center).unwrap(),
            random_polytope(n, 12, 3),
        ]
    }

    #[test]
    fn support_point_attains_support() {
        for n in 2..5 {
            for body in bodies(n) {
                for u in direction_net(n, 64) {
                    let x = body.support_point(&u);
                    assert!((x.dot(&u) - body.support(&u)).abs() < 1e-12, "{}", body.describe());
                    assert!(body.level(&x) < 1e-9, "{}", body.describe());
                }
            }
        }
    }

    #[test]
    fn gauge_is_one_on_boundary_points() {
        for n in 2..5 {
            for body in bodies(n) {
                for u in direction_net(n, 50) {
                    let x = body.support_point(&u);
                    assert!((body.gauge(&x) - 1.0).abs() < 1e-9, "{}", body.describe());
                }
            }
        }
    }

    #[test]
    fn gauge_of_polar_is_support() {
        for n in 2..5 {
            for body in bodies(n) {
                let Ok(polar) = body.polar_dual() else {
                    assert!(matches!(body.shape(), Shape::LpBall { p: LpExponent::Four, .. }));
                    continue;
                };
                for u in direction_net(n, 40) {
                    assert!((polar.gauge(&u) - body.support(&u)).abs() < 1e-9, "{}", body.describe());
                    assert!((body.gauge(&u) - polar.support(&u)).abs() < 1e-9, "{}", body.describe());
                }
            }
        }
    }

    #[test]
    fn smooth_derivatives_match_finite_differences() {
        let h = 1e-6;
        for n in 2..5 {
            for body in bodies(n) {
                for x in direction_net(n, 7) {
                    let x = x * 0.8 + Vector::from_element(n, 0.05);
                    for (what, oracle) in [
                        ("gauge", Box::new(|y: &Vector| body.gauge_derivatives(y)) as Box<dyn Fn(&Vector) -> _>),
                        ("support", Box::new(|y: &Vector| body.support_derivatives(y))),
                    ] {
                        let Some((f, g, hess)) = oracle(&x) else { continue };
                        for i in 0..n {
                            let mut e = Vector::zeros(n);
                            e[i] = h;
                            let (fp, gp, _) = oracle(&(&x + &e)).unwrap();
                            let (fm, gm, _) = oracle(&(&x - &e)).unwrap();
                            assert!(((fp - fm) / (2.0 * h) - g[i]).abs() < 1e-6, "{what} {}", body.describe());
                            let col = (gp - gm) / (2.0 * h);
                            assert!((col - hess.column(i)).norm() < 1e-5, "{what} {}", body.describe());
                        }
                        assert!((g.dot(&x) - f).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn closed_form_volumes() {
        assert!((Body::cube(3).volume() - 8.0).abs() < 1e-12);
        assert!((Body::cross_polytope(4).volume() - 16.0 / 24.0).abs() < 1e-12);
        assert!((Body::euclidean_ball(2).volume() - std::f64::consts::PI).abs() < 1e-12);
        // vol(B₄²) = 4Γ(5/4)² / Γ(3/2).
        let l4 = Body::lp_ball(LpExponent::Four, 2, 1.0).unwrap().volume();
        assert!((l4 - 3.708149354602744).abs() < 1e-12);
        // Polytope route agrees with the closed form.
        let cube = Body::h_polytope(
            &[v(&[1.0, 0.0]), v(&[-1.0, 0.0]), v(&[0.0, 1.0]), v(&[0.0, -1.0])],
            &[1.0, 1.0, 2.0, 2.0],
        )
        .unwrap();
        assert!((cube.volume() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn affine_images() {
        let t = AffineMap::new(Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]), v(&[0.5, -0.25])).unwrap();
        for body in bodies(2) {
            let Ok(image) = body.apply_affine(&t) else {
                assert!(matches!(body.shape(), Shape::LpBall { p: LpExponent::Four, .. }));
                continue;
            };
            assert!((image.volume() - body.volume() * 2.0).abs() < 1e-9, "{}", body.describe());
            for u in direction_net(2, 32) {
                // h_{TK+s}(u) = h_K(Tᵀu) + ⟨s, u⟩.
                let expected = body.support(&(t.linear.transpose() * &u)) + t.shift.dot(&u);
                assert!((image.support(&u) - expected).abs() < 1e-12, "{}", body.describe());
            }
        }
        let half = Body::cross_polytope(3).apply_affine(&AffineMap::linear(Matrix::identity(3, 3) * 0.5)).unwrap();
        assert!(matches!(half.shape(), Shape::LpBall { radius, .. } if (*radius - 0.5).abs() < 1e-15));
    }

    #[test]
    fn constructors_validate() {
        let not_interior = Body::h_polytope(&[v(&[1.0]), v(&[-1.0])], &[1.0, -0.5]);
        assert!(not_interior.is_err());
        let flat = Body::v_polytope(&[v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[2.0, 0.0])]);
        assert!(flat.is_err());
        let unbounded = Body::h_polytope(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])], &[1.0, 1.0]);
        assert!(matches!(unbounded, Err(Error::Unbounded)));
        let off = Body::ellipsoid(SpdMatrix::identity(2), v(&[1.5, 0.0]));
        assert!(off.is_err());
    }

    #[test]
    fn v_polytope_drops_interior_points() {
        let body = Body::v_polytope(&[
            v(&[1.0, 1.0]),
            v(&[-1.0, 1.0]),
            v(&[-1.0, -1.0]),
            v(&[1.0, -1.0]),
            v(&[0.2, 0.1]),
            v(&[1.0, 0.0]),
        ])
        .unwrap();
        let p = body.polytope().unwrap();
        assert_eq!(p.vertices().len(), 4);
        assert_eq!(p.facets().len(), 4);
        assert!(body.is_symmetric());
    }

    #[test]
    fn containment_and_hausdorff() {
        let cube = Body::cube(3);
        let cross = Body::cross_polytope(3);
        let ball = Body::euclidean_ball(3);
        assert!(contains(&cube, &cross, 1e-12).unwrap().holds);
        assert!(!contains(&cross, &cube, 1e-12).unwrap().holds);
        assert!(contains(&cube, &ball, 1e-12).unwrap().holds);
        assert!(contains(&ball, &cross, 1e-12).unwrap().holds);
        let big = Body::lp_ball(LpExponent::Two, 3, 1.2).unwrap();
        let c = contains(&big, &ball, 1e-12).unwrap();
        assert!(c.holds && matches!(c.method, CheckMethod::DirectionNet { .. }));
        let d = hausdorff_distance(&cube, &cross, 256).unwrap();
        assert!((d - (3f64.sqrt() - 1.0 / 3f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn ellipsoid_polar_is_involutive() {
        let e = Body::ellipsoid(spd(2, &[2.0, 0.3, 0.3, 1.0]), v(&[0.4, -0.2])).unwrap();
        let back = e.polar_dual().unwrap().polar_dual().unwrap();
        for u in direction_net(2, 64) {
            assert!((e.support(&u) - back.support(&u)).abs() < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn rotation_preserves_volume_and_symmetry(seed in any::<u64>(), n in 2usize..5) {
            let u = haar_orthogonal(n, seed);
            for body in bodies(n) {
                if let Ok(image) = body.apply_affine(&AffineMap::linear(u.matrix().clone())) {
                    prop_assert!((image.volume() - body.volume()).abs() < 1e-9 * body.volume());
                    prop_assert_eq!(image.is_symmetric(), body.is_symmetric());
                }
            }
        }

        #[test]
        fn polytope_gauge_is_sublinear(seed in any::<u64>(), a in 0.0f64..3.0) {
            let body = random_polytope(3, 10, seed);
            let mut rng = stream_rng(seed, 1);
            let x = Vector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let y = Vector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            prop_assert!((body.gauge(&(&x * a)) - a * body.gauge(&x)).abs() < 1e-12);
            prop_assert!(body.gauge(&(&x + &y)) <= body.gauge(&x) + body.gauge(&y) + 1e-12);
        }
    }
}
