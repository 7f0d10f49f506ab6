//! Exact intersection geometry for convex polygons and ellipses in the plane.
//!
//! The boundary of `K ∩ L` is assembled from pieces of `∂L` lying in `K` and
//! pieces of `∂K` lying strictly inside `L`. Each piece is split at its exact
//! crossings with the other boundary and classified at its midpoint; area
//! and first moments then follow from Green's theorem. Pieces where the two
//! boundaries coincide with the same orientation are attributed to `∂L`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{Complex, Matrix2, Matrix4, Vector2};

use crate::bodies::{Body, LpExponent, Shape};
use crate::{Matrix, Vector};

type P = Vector2<f64>;
type M2 = Matrix2<f64>;

/// Relative margin separating "on the other boundary" from "strictly in/out".
pub(crate) const COINCIDENCE_MARGIN: f64 = 1e-9;

/// Outward normal times arclength for a tangent `d` of a counter-clockwise curve.
fn rot(d: &P) -> P {
    P::new(d.y, -d.x)
}

fn cross(a: &P, b: &P) -> f64 {
    a.x * b.y - a.y * b.x
}

#[derive(Clone, Debug)]
pub(crate) enum Region {
    /// Edges are stored in facet order, each counter-clockwise.
    Polygon {
        edges: Vec<(P, P)>,
        normals: Vec<P>,
        offsets: Vec<f64>,
        scale: f64,
    },
    Ellipse {
        shape: M2,
        inverse: M2,
        center: P,
        min_axis: f64,
    },
}

impl Region {
    /// `None` for bodies without a closed planar description (the ℓ4 ball).
    pub(crate) fn from_body(body: &Body) -> Option<Region> {
        if body.dim() != 2 {
            return None;
        }
        if let Some(poly) = body.polytope() {
            let verts = poly.vertices();
            let mut edges = Vec::new();
            let mut normals = Vec::new();
            let mut offsets = Vec::new();
            for (facet, on) in poly.facets().iter().zip(poly.incidence()) {
                let n = P::new(facet.normal[0], facet.normal[1]);
                let (mut a, mut b) = (to_p(&verts[on[0]]), to_p(&verts[on[on.len() - 1]]));
                if cross(&n, &(b - a)) < 0.0 {
                    std::mem::swap(&mut a, &mut b);
                }
                edges.push((a, b));
                normals.push(n);
                offsets.push(facet.offset);
            }
            let scale = verts.iter().map(|v| v.norm()).fold(1.0, f64::max);
            return Some(Region::Polygon { edges, normals, offsets, scale });
        }
        match body.shape() {
            Shape::Ellipsoid { shape, center } => Some(Region::ellipse(to_m(shape.matrix()), to_p(center))),
            Shape::LpBall { p: LpExponent::Two, radius, .. } => {
                Some(Region::ellipse(M2::identity() * *radius, P::zeros()))
            }
            _ => None,
        }
    }

    pub(crate) fn ellipse(shape: M2, center: P) -> Region {
        let inverse = shape.try_inverse().expect("ellipse shape is positive-definite");
        let min_axis = shape.symmetric_eigenvalues().min();
        Region::Ellipse { shape, inverse, center, min_axis }
    }

    /// Counter-clockwise polygon from its vertices in order.
    pub(crate) fn polygon(vertices: &[P]) -> Region {
        let m = vertices.len();
        let mut edges = Vec::with_capacity(m);
        let mut normals = Vec::with_capacity(m);
        let mut offsets = Vec::with_capacity(m);
        for i in 0..m {
            let (a, b) = (vertices[i], vertices[(i + 1) % m]);
            let n = rot(&(b - a)).normalize();
            edges.push((a, b));
            offsets.push(n.dot(&a));
            normals.push(n);
        }
        let scale = vertices.iter().map(|v| v.norm()).fold(1.0, f64::max);
        Region::Polygon { edges, normals, offsets, scale }
    }

    pub(crate) fn scale(&self) -> f64 {
        match self {
            Region::Polygon { scale, .. } => *scale,
            Region::Ellipse { shape, center, .. } => 1f64.max(center.norm() + shape.norm()),
        }
    }

    /// Signed level, non-positive exactly on the region and comparable to the
    /// distance to the boundary near it.
    pub(crate) fn level(&self, x: &P) -> f64 {
        match self {
            Region::Polygon { normals, offsets, .. } => {
                normals.iter().zip(offsets).map(|(n, b)| n.dot(x) - b).fold(f64::NEG_INFINITY, f64::max)
            }
            Region::Ellipse { inverse, center, min_axis, .. } => ((inverse * (x - center)).norm() - 1.0) * min_axis,
        }
    }

    /// Outward normal direction at a boundary point (unnormalised).
    fn outward(&self, x: &P) -> P {
        match self {
            Region::Polygon { normals, offsets, .. } => {
                let mut best = (f64::NEG_INFINITY, P::zeros());
                for (n, b) in normals.iter().zip(offsets) {
                    let v = n.dot(x) - b;
                    if v > best.0 {
                        best = (v, *n);
                    }
                }
                best.1
            }
            Region::Ellipse { inverse, center, .. } => inverse.transpose() * inverse * (x - center),
        }
    }

    fn pieces(&self) -> Vec<Piece> {
        match self {
            Region::Polygon { edges, .. } => edges.iter().map(|&(a, b)| Piece::Segment { a, b }).collect(),
            Region::Ellipse { shape, center, .. } => {
                vec![Piece::Arc { shape: *shape, center: *center, from: 0.0, to: 2.0 * PI }]
            }
        }
    }
}

fn to_p(v: &Vector) -> P {
    P::new(v[0], v[1])
}

fn to_m(m: &Matrix) -> M2 {
    M2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

#[derive(Clone, Copy, Debug)]
enum Piece {
    /// `a + t(b − a)` for `t ∈ [0, 1]`.
    Segment { a: P, b: P },
    /// `center + shape·(cos θ, sin θ)` for `θ ∈ [from, to]`.
    Arc { shape: M2, center: P, from: f64, to: f64 },
}

/// Green's-theorem integrals along one oriented piece.
#[derive(Clone, Copy, Debug, Default)]
struct PieceIntegrals {
    /// `∮ x × dx`, twice the signed area contribution.
    cross: f64,
    /// Contribution to `∫∫ x dA`.
    first: P,
    /// `∫ n̂ ds`.
    flux: P,
    /// `∫ n̂ ⊗ x ds`.
    moment: M2,
    length: f64,
}

impl std::ops::AddAssign for PieceIntegrals {
    fn add_assign(&mut self, o: Self) {
        self.cross += o.cross;
        self.first += o.first;
        self.flux += o.flux;
        self.moment += o.moment;
        self.length += o.length;
    }
}

impl Piece {
    fn range(&self) -> (f64, f64) {
        match self {
            Piece::Segment { .. } => (0.0, 1.0),
            Piece::Arc { from, to, .. } => (*from, *to),
        }
    }

    fn point(&self, t: f64) -> P {
        match self {
            Piece::Segment { a, b } => a + (b - a) * t,
            Piece::Arc { shape, center, .. } => center + shape * P::new(t.cos(), t.sin()),
        }
    }

    fn tangent(&self, t: f64) -> P {
        match self {
            Piece::Segment { a, b } => b - a,
            Piece::Arc { shape, .. } => shape * P::new(-t.sin(), t.cos()),
        }
    }

    fn sub(&self, t0: f64, t1: f64) -> Piece {
        match self {
            Piece::Segment { .. } => Piece::Segment { a: self.point(t0), b: self.point(t1) },
            Piece::Arc { shape, center, .. } => Piece::Arc { shape: *shape, center: *center, from: t0, to: t1 },
        }
    }

    /// Parameters in the open range where the piece meets `∂other` (or the
    /// supporting lines of its edges; extra splits are harmless).
    fn crossings(&self, other: &Region) -> Vec<f64> {
        let (lo, hi) = self.range();
        let mut out = Vec::new();
        match (self, other) {
            (Piece::Segment { a, b }, Region::Polygon { normals, offsets, .. }) => {
                for (n, off) in normals.iter().zip(offsets) {
                    let denom = n.dot(&(b - a));
                    if denom != 0.0 {
                        out.push((off - n.dot(a)) / denom);
                    }
                }
            }
            (Piece::Segment { a, b }, Region::Ellipse { inverse, center, .. }) => {
                let p = inverse * (a - center);
                let q = inverse * (b - a);
                out.extend(quadratic_roots(q.norm_squared(), 2.0 * p.dot(&q), p.norm_squared() - 1.0));
            }
            (Piece::Arc { shape, center, .. }, Region::Polygon { normals, offsets, .. }) => {
                for (n, off) in normals.iter().zip(offsets) {
                    let g = shape.transpose() * n;
                    let d = off - n.dot(center);
                    let r = g.norm();
                    if r > 0.0 && d.abs() < r {
                        let phi = g.y.atan2(g.x);
                        let spread = (d / r).acos();
                        out.extend([phi + spread, phi - spread]);
                    }
                }
            }
            (Piece::Arc { shape, center, .. }, Region::Ellipse { inverse, center: ck, .. }) => {
                let m = inverse * (center - ck);
                let map = inverse * shape;
                let g = map.transpose() * map;
                let h = map.transpose() * m;
                let coeffs = TrigQuadratic {
                    cos2: 0.5 * (g[(0, 0)] - g[(1, 1)]),
                    sin2: g[(0, 1)],
                    cos1: 2.0 * h.x,
                    sin1: 2.0 * h.y,
                    constant: 0.5 * (g[(0, 0)] + g[(1, 1)]) + m.norm_squared() - 1.0,
                };
                out.extend(coeffs.roots());
            }
        }
        if let Piece::Arc { .. } = self {
            for t in &mut out {
                *t = lo + (*t - lo).rem_euclid(2.0 * PI);
            }
        }
        out.retain(|t| t.is_finite() && *t > lo && *t < hi);
        out.sort_by(f64::total_cmp);
        out
    }

    fn integrals(&self) -> PieceIntegrals {
        match self {
            Piece::Segment { a, b } => {
                let d = b - a;
                let n = rot(&d);
                PieceIntegrals {
                    cross: cross(a, b),
                    first: P::new(
                        d.y / 6.0 * (a.x * a.x + a.x * b.x + b.x * b.x),
                        -d.x / 6.0 * (a.y * a.y + a.y * b.y + b.y * b.y),
                    ),
                    flux: n,
                    moment: n * ((a + b) * 0.5).transpose(),
                    length: d.norm(),
                }
            }
            Piece::Arc { from, to, .. } => {
                let (nodes, weights) = gauss_legendre();
                let panels = ((to - from) / (PI / 4.0)).ceil().max(1.0) as usize;
                let h = (to - from) / panels as f64;
                let mut acc = PieceIntegrals::default();
                for k in 0..panels {
                    let mid = from + h * (k as f64 + 0.5);
                    for (s, w) in nodes.iter().zip(weights) {
                        let t = mid + 0.5 * h * s;
                        let wt = 0.5 * h * w;
                        let x = self.point(t);
                        let dx = self.tangent(t);
                        let n = rot(&dx);
                        acc += PieceIntegrals {
                            cross: wt * cross(&x, &dx),
                            first: P::new(wt * 0.5 * x.x * x.x * dx.y, -wt * 0.5 * x.y * x.y * dx.x),
                            flux: n * wt,
                            moment: n * x.transpose() * wt,
                            length: wt * dx.norm(),
                        };
                    }
                }
                acc
            }
        }
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        return if b != 0.0 { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

/// `cos2·cos 2θ + sin2·sin 2θ + cos1·cos θ + sin1·sin θ + constant`.
struct TrigQuadratic {
    cos2: f64,
    sin2: f64,
    cos1: f64,
    sin1: f64,
    constant: f64,
}

impl TrigQuadratic {
    fn eval(&self, t: f64) -> (f64, f64) {
        let (s1, c1) = t.sin_cos();
        let (s2, c2) = (2.0 * t).sin_cos();
        let f = self.cos2 * c2 + self.sin2 * s2 + self.cos1 * c1 + self.sin1 * s1 + self.constant;
        let df = -2.0 * self.cos2 * s2 + 2.0 * self.sin2 * c2 - self.cos1 * s1 + self.sin1 * c1;
        (f, df)
    }

    /// Real roots in `[0, 2π)`. With `z = e^{iθ}`, `z²f` is a quartic whose
    /// unit-modulus roots are the crossings.
    fn roots(&self) -> Vec<f64> {
        let scale =
            [self.cos2, self.sin2, self.cos1, self.sin1, self.constant].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Vec::new();
        }
        let c = [
            Complex::new(self.cos2, self.sin2) * 0.5,
            Complex::new(self.cos1, self.sin1) * 0.5,
            Complex::new(self.constant, 0.0),
            Complex::new(self.cos1, -self.sin1) * 0.5,
            Complex::new(self.cos2, -self.sin2) * 0.5,
        ];
        let mut candidates = Vec::new();
        if c[4].norm() > 1e-12 * scale {
            let mut companion = Matrix4::<Complex<f64>>::zeros();
            for j in 0..4 {
                companion[(0, j)] = -c[3 - j] / c[4];
            }
            for i in 1..4 {
                companion[(i, i - 1)] = Complex::new(1.0, 0.0);
            }
            if let Some(eigs) = companion.schur().eigenvalues() {
                for z in eigs.iter() {
                    if (z.norm() - 1.0).abs() < 1e-4 {
                        candidates.push(z.im.atan2(z.re));
                    }
                }
            }
        } else {
            let r = self.cos1.hypot(self.sin1);
            if r > 0.0 && self.constant.abs() <= r {
                let phi = self.sin1.atan2(self.cos1);
                let spread = (-self.constant / r).acos();
                candidates.extend([phi + spread, phi - spread]);
            }
        }
        let mut out = Vec::new();
        for mut t in candidates {
            for _ in 0..8 {
                let (f, df) = self.eval(t);
                if df.abs() <= 1e-14 * scale {
                    break;
                }
                let step = f / df;
                t -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            if self.eval(t).0.abs() <= 1e-8 * scale {
                out.push(t.rem_euclid(2.0 * PI));
            }
        }
        out
    }
}

/// 16-point Gauss–Legendre nodes and weights on `[−1, 1]`.
fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        const M: usize = 16;
        let mut nodes = Vec::with_capacity(M);
        let mut weights = Vec::with_capacity(M);
        for i in 0..M {
            let mut x = (PI * (i as f64 + 0.75) / (M as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=M {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = M as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes.push(x);
            weights.push(2.0 / ((1.0 - x * x) * dp * dp));
        }
        (nodes, weights)
    })
}

/// Everything the intersection of two planar regions yields at once.
#[derive(Clone, Debug)]
pub(crate) struct PlanarIntersection {
    pub area: f64,
    /// `∫∫_{K∩L} x dA`.
    pub first_moment: P,
    /// `∫_{K∩∂L} n̂_L ds`.
    pub flux: P,
    /// `∫_{K∩∂L} n̂_L ⊗ x ds`.
    pub moment: M2,
    /// Per original piece of `∂L`: `(length, flux, moment)`.
    pub per_piece: Vec<(f64, P, M2)>,
    /// Some part of `∂L` of positive length lies on `∂K`.
    pub overlap: bool,
}

pub(crate) fn intersect(k: &Region, l: &Region) -> PlanarIntersection {
    let eps = COINCIDENCE_MARGIN * k.scale().max(l.scale());
    let mut total = PieceIntegrals::default();
    let mut boundary = PieceIntegrals::default();
    let mut per_piece = Vec::new();
    let mut overlap = false;

    for piece in l.pieces() {
        let mut own = PieceIntegrals::default();
        for sub in split(&piece, k) {
            let (t0, t1) = sub.range();
            let mid = sub.point(0.5 * (t0 + t1));
            let lk = k.level(&mid);
            let keep = if lk < -eps {
                true
            } else if lk <= eps {
                let same = rot(&sub.tangent(0.5 * (t0 + t1))).dot(&k.outward(&mid)) > 0.0;
                let ints = sub.integrals();
                if same && ints.length > eps {
                    overlap = true;
                }
                same
            } else {
                false
            };
            if keep {
                own += sub.integrals();
            }
        }
        per_piece.push((own.length, own.flux, own.moment));
        boundary += own;
    }
    total += boundary;
    for piece in k.pieces() {
        for sub in split(&piece, l) {
            let (t0, t1) = sub.range();
            if l.level(&sub.point(0.5 * (t0 + t1))) < -eps {
                total += sub.integrals();
            }
        }
    }
    PlanarIntersection {
        area: (0.5 * total.cross).max(0.0),
        first_moment: total.first,
        flux: boundary.flux,
        moment: boundary.moment,
        per_piece,
        overlap,
    }
}

fn split(piece: &Piece, other: &Region) -> Vec<Piece> {
    let (lo, hi) = piece.range();
    let mut cuts = vec![lo];
    cuts.extend(piece.crossings(other));
    cuts.push(hi);
    let min_gap = 1e-14 * (hi - lo);
    cuts.dedup_by(|b, a| *b - *a <= min_gap);
    cuts.windows(2).map(|w| piece.sub(w[0], w[1])).collect()
}

/// `(∫ n̂ ds, ∫ n̂ ⊗ x ds)` over `∂L ∩ K` through the radial function of `L`
/// about `center`, an interior point of `K ∩ L`: the pushforward of `n̂ ds`
/// to the circle is `−∇r_L dθ`. Midpoint rule with `samples` angles; gradients
/// by central differences. An independent check of [`intersect`].
pub(crate) fn radial_boundary_integrals(k: &Body, l: &Body, center: &Vector, samples: usize) -> (Vector, Matrix) {
    let shift = -center;
    let k = k.translate(&shift).expect("translation of a valid body");
    let l = l.translate(&shift).expect("translation of a valid body");
    let radial = |b: &Body, u: &Vector| 1.0 / b.gauge(u);
    let mut flux = Vector::zeros(2);
    let mut moment = Matrix::zeros(2, 2);
    let dt = 2.0 * PI / samples as f64;
    let h = 1e-6;
    for i in 0..samples {
        let t = (i as f64 + 0.5) * dt;
        let u = Vector::from_vec(vec![t.cos(), t.sin()]);
        let rl = radial(&l, &u);
        if rl >= radial(&k, &u) {
            continue;
        }
        let grad = Vector::from_fn(2, |j, _| {
            let mut e = Vector::zeros(2);
            e[j] = h;
            (radial(&l, &(&u + &e)) - radial(&l, &(&u - &e))) / (2.0 * h)
        });
        let push = -&grad * dt;
        moment += &push * (&u * rl).transpose();
        flux += push;
    }
    moment += &flux * center.transpose();
    (flux, moment)
}

impl PlanarIntersection {
    pub(crate) fn flux_vector(&self) -> Vector {
        Vector::from_column_slice(self.flux.as_slice())
    }

    pub(crate) fn moment_matrix(&self) -> Matrix {
        Matrix::from_row_slice(
            2,
            2,
            &[self.moment[(0, 0)], self.moment[(0, 1)], self.moment[(1, 0)], self.moment[(1, 1)]],
        )
    }

    pub(crate) fn centroid(&self) -> Option<Vector> {
        (self.area > 0.0)
            .then(|| Vector::from_vec(vec![self.first_moment.x / self.area, self.first_moment.y / self.area]))
    }
}

pub(crate) fn point(x: f64, y: f64) -> P {
    P::new(x, y)
}

pub(crate) fn matrix2(m: &Matrix) -> M2 {
    to_m(m)
}

pub(crate) fn from_m2(m: &M2) -> Matrix {
    Matrix::from_row_slice(2, 2, &[m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]])
}

pub(crate) fn from_p(p: &P) -> Vector {
    Vector::from_vec(vec![p.x, p.y])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bodies::Body;
    use crate::linalg::{stream_rng, SpdMatrix};
    use rand::Rng;

    fn square(lo: (f64, f64), hi: (f64, f64)) -> Region {
        Region::polygon(&[point(lo.0, lo.1), point(hi.0, lo.1), point(hi.0, hi.1), point(lo.0, hi.1)])
    }

    #[test]
    fn offset_rectangle_clipping() {
        let k = square((0.0, 0.0), (1.0, 1.0));
        let l = square((0.25, -0.5), (0.75, 0.5));
        let r = intersect(&k, &l);
        assert!((r.area - 0.25).abs() < 1e-15);
        assert!((r.flux - point(0.0, 0.5)).norm() < 1e-15);
        // x = 3/4: n = e1, length 1/2, centroid (3/4, 1/4); x = 1/4 mirrored;
        // y = 1/2: n = e2, length 1/2, centroid (1/2, 1/2).
        let expected = M2::new(0.375 - 0.125, 0.125 - 0.125, 0.25, 0.25);
        assert!((r.moment - expected).norm() < 1e-15, "{}", r.moment);
        assert!(!r.overlap);
    }

    #[test]
    fn unit_disks_lens() {
        let k = Region::ellipse(M2::identity(), P::zeros());
        let l = Region::ellipse(M2::identity(), point(1.0, 0.0));
        let r = intersect(&k, &l);
        // Lens of two unit circles at distance d: 2 acos(d/2) − (d/2)√(4 − d²).
        let expected = 2.0 * (0.5f64).acos() - 0.5 * 3f64.sqrt();
        assert!((r.area - expected).abs() < 1e-13, "{} vs {expected}", r.area);
        assert!((r.first_moment.x / r.area - 0.5).abs() < 1e-12);
        // The arc of ∂L inside K spans 2π/3 about (−1, 0): flux = −√3 e1.
        assert!((r.flux - point(-3f64.sqrt(), 0.0)).norm() < 1e-13, "{}", r.flux);
    }

    #[test]
    fn coincident_bodies_count_once() {
        let k = square((-1.0, -1.0), (1.0, 1.0));
        let r = intersect(&k, &k.clone());
        assert!((r.area - 4.0).abs() < 1e-14);
        assert!(r.flux.norm() < 1e-14);
        assert!((r.moment - M2::identity() * 4.0).norm() < 1e-14);
        assert!(r.overlap);

        let disk = Region::ellipse(M2::new(2.0, 0.5, 0.5, 1.0), point(0.3, -0.2));
        let r = intersect(&disk, &disk.clone());
        let area = PI * (2.0 - 0.25);
        assert!((r.area - area).abs() < 1e-12);
        assert!(r.flux.norm() < 1e-13);
        assert!((r.moment - M2::identity() * area).norm() < 1e-12);
    }

    #[test]
    fn touching_along_an_edge_has_no_area() {
        let k = square((0.0, 0.0), (1.0, 1.0));
        let l = square((1.0, 0.0), (2.0, 1.0));
        let r = intersect(&k, &l);
        assert!(r.area.abs() < 1e-15 && r.flux.norm() < 1e-15);
    }

    #[test]
    fn ellipse_in_polygon_and_polygon_in_ellipse() {
        let big = square((-3.0, -3.0), (3.0, 3.0));
        let e = Region::ellipse(M2::new(1.5, 0.2, 0.2, 0.7), point(0.4, 0.1));
        let area = PI * (1.5 * 0.7 - 0.04);
        let r = intersect(&big, &e);
        assert!((r.area - area).abs() < 1e-12);
        assert!(r.flux.norm() < 1e-12);
        assert!((r.moment - M2::identity() * area).norm() < 1e-12);
        let r = intersect(&e, &square((0.0, 0.0), (0.1, 0.1)));
        assert!((r.area - 0.01).abs() < 1e-15);
        let swapped = intersect(&e, &big);
        assert!((swapped.area - area).abs() < 1e-12);
        assert!(swapped.flux.norm() < 1e-15 && swapped.moment.norm() < 1e-15);
    }

    #[test]
    fn radial_route_agrees_for_polygon_pairs() {
        let mut rng = stream_rng(11, 0);
        for _ in 0..5 {
            let k = Body::v_polytope(&random_polygon(&mut rng, 7)).unwrap();
            let l = Body::v_polytope(&random_polygon(&mut rng, 6))
                .unwrap()
                .translate(&Vector::from_vec(vec![rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)]))
                .unwrap();
            let r = intersect(&Region::from_body(&k).unwrap(), &Region::from_body(&l).unwrap());
            let center = r.centroid().unwrap();
            let (flux, moment) = radial_boundary_integrals(&k, &l, &center, 200_000);
            assert!((flux - r.flux_vector()).norm() < 1e-4);
            assert!((moment - r.moment_matrix()).norm() < 1e-4);
        }
    }

    #[test]
    fn radial_route_agrees_for_an_ellipse_pair() {
        let k = Body::ellipsoid(
            SpdMatrix::new(Matrix::from_row_slice(2, 2, &[1.2, 0.3, 0.3, 0.8])).unwrap(),
            Vector::zeros(2),
        )
        .unwrap();
        let l = Body::euclidean_ball(2).translate(&Vector::from_vec(vec![0.5, 0.2])).unwrap();
        let r = intersect(&Region::from_body(&k).unwrap(), &Region::from_body(&l).unwrap());
        let (flux, moment) = radial_boundary_integrals(&k, &l, &r.centroid().unwrap(), 200_000);
        assert!((flux - r.flux_vector()).norm() < 1e-4);
        assert!((moment - r.moment_matrix()).norm() < 1e-4);
    }

    pub(crate) fn random_polygon(rng: &mut impl Rng, m: usize) -> Vec<Vector> {
        let mut angles: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        angles.sort_by(f64::total_cmp);
        angles
            .iter()
            .map(|t| {
                let r = rng.random_range(0.7..1.3);
                Vector::from_vec(vec![r * t.cos(), r * t.sin()])
            })
            .chain([
                Vector::from_vec(vec![1.0, 0.0]),
                Vector::from_vec(vec![-0.5, 0.9]),
                Vector::from_vec(vec![-0.5, -0.9]),
            ])
            .collect()
    }

    #[test]
    fn trig_roots_are_found() {
        let q = TrigQuadratic { cos2: 0.3, sin2: -0.2, cos1: 0.5, sin1: 0.1, constant: 0.05 };
        let roots = q.roots();
        let mut sign_changes = 0;
        let m = 100_000;
        for i in 0..m {
            let a = q.eval(2.0 * PI * i as f64 / m as f64).0;
            let b = q.eval(2.0 * PI * (i + 1) as f64 / m as f64).0;
            if a.signum() != b.signum() {
                sign_changes += 1;
            }
        }
        assert_eq!(roots.len(), sign_changes);
        for t in roots {
            assert!(q.eval(t).0.abs() < 1e-14);
        }
    }
}
