//! Double-description vertex enumeration and face-lattice measures.

use std::collections::BTreeSet;

use crate::{Error, Result, Vector};

/// Relative tolerance for sign decisions on normalised rows and rays.
const SIGN_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
struct BitSet(Vec<u64>);

impl BitSet {
    fn new(len: usize) -> Self {
        Self(vec![0; len.div_ceil(64)])
    }
    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn and(&self, other: &BitSet) -> BitSet {
        BitSet(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }
    fn count(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }
    fn is_superset(&self, other: &BitSet) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a & b == *b)
    }
}

struct Ray {
    v: Vector,
    zeros: BitSet,
}

/// Vertices of `{x : ⟨a_j, x⟩ ≤ b_j}`. Returns an empty list for an empty
/// polyhedron and [`Error::Unbounded`] when the polyhedron has a recession
/// direction or a lineality space.
pub(crate) fn enumerate_vertices(normals: &[Vector], offsets: &[f64]) -> Result<Vec<Vector>> {
    let Some(first) = normals.first() else { return Err(Error::Unbounded) };
    let n = first.len();
    let d = n + 1;
    // Homogenised cone {(x, t) : ⟨a, x⟩ − b t ≤ 0, t ≥ 0}; the last row is −t ≤ 0.
    let mut rows: Vec<Vector> = normals
        .iter()
        .zip(offsets)
        .map(|(a, &b)| {
            let mut r = Vector::zeros(d);
            r.rows_mut(0, n).copy_from(a);
            r[n] = -b;
            let norm = r.norm();
            r / norm
        })
        .collect();
    let mut t_row = Vector::zeros(d);
    t_row[n] = -1.0;
    rows.push(t_row);
    let m = rows.len();

    // Greedy independent initial basis, starting from t ≥ 0.
    let order: Vec<usize> = std::iter::once(m - 1).chain(0..m - 1).collect();
    let mut basis: Vec<usize> = Vec::with_capacity(d);
    let mut ortho: Vec<Vector> = Vec::with_capacity(d);
    for &i in &order {
        if basis.len() == d {
            break;
        }
        let mut r = rows[i].clone();
        for q in &ortho {
            r -= q * q.dot(&r);
        }
        let norm = r.norm();
        if norm > 1e-9 {
            ortho.push(r / norm);
            basis.push(i);
        }
    }
    if basis.len() < d {
        return Err(Error::Unbounded);
    }
    let rb = nalgebra::DMatrix::from_fn(d, d, |i, j| rows[basis[i]][j]);
    let inv = rb.try_inverse().ok_or(Error::Unbounded)?;
    let mut rays: Vec<Ray> = (0..d)
        .map(|k| {
            let v = -inv.column(k).into_owned();
            let mut zeros = BitSet::new(m);
            for (pos, &i) in basis.iter().enumerate() {
                if pos != k {
                    zeros.insert(i);
                }
            }
            let norm = v.norm();
            Ray { v: v / norm, zeros }
        })
        .collect();

    let in_basis: BTreeSet<usize> = basis.iter().copied().collect();
    for i in (0..m).filter(|i| !in_basis.contains(i)) {
        let row = &rows[i];
        let vals: Vec<f64> = rays.iter().map(|r| row.dot(&r.v)).collect();
        let plus: Vec<usize> = (0..rays.len()).filter(|&k| vals[k] > SIGN_TOL).collect();
        let minus: Vec<usize> = (0..rays.len()).filter(|&k| vals[k] < -SIGN_TOL).collect();
        if plus.is_empty() {
            for (k, r) in rays.iter_mut().enumerate() {
                if vals[k].abs() <= SIGN_TOL {
                    r.zeros.insert(i);
                }
            }
            continue;
        }
        let mut fresh = Vec::new();
        for &p in &plus {
            for &q in &minus {
                let common = rays[p].zeros.and(&rays[q].zeros);
                if (common.count() as usize) + 2 < d {
                    continue;
                }
                let adjacent = rays.iter().enumerate().all(|(k, r)| k == p || k == q || !r.zeros.is_superset(&common));
                if !adjacent {
                    continue;
                }
                let v = &rays[q].v * vals[p] - &rays[p].v * vals[q];
                let norm = v.norm();
                let mut zeros = common;
                zeros.insert(i);
                fresh.push(Ray { v: v / norm, zeros });
            }
        }
        let mut kept = Vec::with_capacity(rays.len() + fresh.len());
        for (k, mut r) in rays.into_iter().enumerate() {
            if vals[k] > SIGN_TOL {
                continue;
            }
            if vals[k] >= -SIGN_TOL {
                r.zeros.insert(i);
            }
            kept.push(r);
        }
        kept.extend(fresh);
        rays = kept;
    }

    let mut vertices: Vec<Vector> = Vec::with_capacity(rays.len());
    for r in &rays {
        let t = r.v[n];
        if t <= SIGN_TOL {
            return Err(Error::Unbounded);
        }
        let x = r.v.rows(0, n) / t;
        let scale = 1.0 + x.norm();
        if !vertices.iter().any(|v| (v - &x).norm() <= 1e-9 * scale) {
            vertices.push(x);
        }
    }
    Ok(vertices)
}

/// Dimension of the affine hull of `points[idx]`.
pub(crate) fn affine_rank(points: &[Vector], idx: &[usize], tol: f64) -> usize {
    affine_basis(points, idx, tol).len()
}

fn affine_basis(points: &[Vector], idx: &[usize], tol: f64) -> Vec<Vector> {
    let Some(&first) = idx.first() else { return Vec::new() };
    let p0 = &points[first];
    let mut basis: Vec<Vector> = Vec::new();
    for &i in &idx[1..] {
        let mut r = &points[i] - p0;
        for _ in 0..2 {
            for q in &basis {
                r -= q * q.dot(&r);
            }
        }
        let norm = r.norm();
        if norm > tol {
            basis.push(r / norm);
        }
    }
    basis
}

/// `dim`-dimensional measure and centroid of the face spanned by
/// `points[face]`, by recursive cone decomposition from the vertex mean.
///
/// `planes` lists, for every supporting hyperplane of the polytope, the
/// sorted indices of the points lying on it; faces of the face are read off
/// these incidences.
pub(crate) fn face_measure(
    points: &[Vector],
    planes: &[Vec<usize>],
    face: &[usize],
    dim: usize,
    tol: f64,
) -> (f64, Vector) {
    let n = points[face[0]].len();
    if dim == 0 {
        return (1.0, points[face[0]].clone());
    }
    if dim == 1 {
        let mut best = (0.0, face[0], face[0]);
        for (a, &i) in face.iter().enumerate() {
            for &j in &face[a + 1..] {
                let dist = (&points[i] - &points[j]).norm();
                if dist > best.0 {
                    best = (dist, i, j);
                }
            }
        }
        return (best.0, (&points[best.1] + &points[best.2]) * 0.5);
    }
    let apex = face.iter().fold(Vector::zeros(n), |acc, &i| acc + &points[i]) / face.len() as f64;
    let mut subfaces: BTreeSet<Vec<usize>> = BTreeSet::new();
    for plane in planes {
        let sub: Vec<usize> = face.iter().copied().filter(|i| plane.binary_search(i).is_ok()).collect();
        if sub.len() >= dim && sub.len() < face.len() && affine_rank(points, &sub, tol) == dim - 1 {
            subfaces.insert(sub);
        }
    }
    let mut measure = 0.0;
    let mut moment = Vector::zeros(n);
    for sub in &subfaces {
        let (base, base_centroid) = face_measure(points, planes, sub, dim - 1, tol);
        let basis = affine_basis(points, sub, tol);
        let mut r = &apex - &points[sub[0]];
        for q in &basis {
            r -= q * q.dot(&r);
        }
        let cone = r.norm() * base / dim as f64;
        let centroid = &apex + (base_centroid - &apex) * (dim as f64 / (dim as f64 + 1.0));
        measure += cone;
        moment += centroid * cone;
    }
    if measure > 0.0 {
        (measure, moment / measure)
    } else {
        (0.0, apex)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn cube(n: usize) -> (Vec<Vector>, Vec<f64>) {
        let mut normals = Vec::new();
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut a = Vector::zeros(n);
                a[i] = s;
                normals.push(a);
            }
        }
        (normals, vec![1.0; 2 * n])
    }

    fn incidence(points: &[Vector], normals: &[Vector], offsets: &[f64]) -> Vec<Vec<usize>> {
        normals
            .iter()
            .zip(offsets)
            .map(|(a, b)| (0..points.len()).filter(|&i| (a.dot(&points[i]) - b).abs() < 1e-9).collect())
            .collect()
    }

    #[test]
    fn cube_vertices_and_volume() {
        for n in 1..=4 {
            let (a, b) = cube(n);
            let verts = enumerate_vertices(&a, &b).unwrap();
            assert_eq!(verts.len(), 1 << n);
            let planes = incidence(&verts, &a, &b);
            let all: Vec<usize> = (0..verts.len()).collect();
            let (vol, c) = face_measure(&verts, &planes, &all, n, 1e-9);
            assert!((vol - 2f64.powi(n as i32)).abs() < 1e-12, "n={n} vol={vol}");
            assert!(c.norm() < 1e-12);
        }
    }

    #[test]
    fn cross_polytope_is_degenerate_but_exact() {
        // 2^n facets through n vertices each: highly degenerate for DD.
        for n in 2..=4 {
            let mut normals = Vec::new();
            for mask in 0..(1u32 << n) {
                normals.push(Vector::from_fn(n, |i, _| if mask & (1 << i) != 0 { -1.0 } else { 1.0 }));
            }
            let b = vec![1.0; normals.len()];
            let verts = enumerate_vertices(&normals, &b).unwrap();
            assert_eq!(verts.len(), 2 * n);
            let planes = incidence(&verts, &normals, &b);
            let all: Vec<usize> = (0..verts.len()).collect();
            let (vol, _) = face_measure(&verts, &planes, &all, n, 1e-9);
            let expected = 2f64.powi(n as i32) / (1..=n).map(|k| k as f64).product::<f64>();
            assert!((vol - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn shifted_triangle_centroid() {
        // Triangle (1,1), (3,1), (1,4): origin outside.
        let normals = vec![v(&[0.0, -1.0]), v(&[-1.0, 0.0]), v(&[3.0, 2.0])];
        let offsets = vec![-1.0, -1.0, 11.0];
        let verts = enumerate_vertices(&normals, &offsets).unwrap();
        assert_eq!(verts.len(), 3);
        let planes = incidence(&verts, &normals, &offsets);
        let (area, c) = face_measure(&verts, &planes, &[0, 1, 2], 2, 1e-9);
        assert!((area - 3.0).abs() < 1e-12);
        assert!((c - v(&[5.0 / 3.0, 2.0])).norm() < 1e-12);
    }

    #[test]
    fn redundant_rows_are_harmless() {
        let (mut a, mut b) = cube(3);
        a.push(v(&[1.0, 1.0, 1.0]));
        b.push(10.0);
        a.push(v(&[1.0, 0.0, 0.0]));
        b.push(1.0);
        assert_eq!(enumerate_vertices(&a, &b).unwrap().len(), 8);
    }

    #[test]
    fn unbounded_and_empty() {
        let a = vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        assert!(matches!(enumerate_vertices(&a, &[1.0, 1.0]), Err(Error::Unbounded)));
        let a = vec![v(&[1.0, 0.0]), v(&[-1.0, 0.0]), v(&[0.0, 1.0]), v(&[0.0, -1.0])];
        assert!(enumerate_vertices(&a, &[-1.0, -1.0, 1.0, 1.0]).unwrap().is_empty());
    }

    #[test]
    fn simplex_pyramid_centroid() {
        // Standard 3-simplex: volume 1/6, centroid (1/4, 1/4, 1/4).
        let normals = vec![v(&[-1.0, 0.0, 0.0]), v(&[0.0, -1.0, 0.0]), v(&[0.0, 0.0, -1.0]), v(&[1.0, 1.0, 1.0])];
        let offsets = vec![0.0, 0.0, 0.0, 1.0];
        let verts = enumerate_vertices(&normals, &offsets).unwrap();
        let planes = incidence(&verts, &normals, &offsets);
        let (vol, c) = face_measure(&verts, &planes, &[0, 1, 2, 3], 3, 1e-9);
        assert!((vol - 1.0 / 6.0).abs() < 1e-14);
        assert!((c - v(&[0.25, 0.25, 0.25])).norm() < 1e-14);
    }
}
