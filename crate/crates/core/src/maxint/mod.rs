//! Maximal intersection position: `vol(K ∩ (AL + z))` over `A ∈ SL_n`.
//!
//! Volumes are exact in the plane (polygons and ellipses) and for polytope
//! pairs up to dimension four; Monte Carlo otherwise. Boundary integrals over
//! `K ∩ ∂L` come from exact facet clipping and give the first variation of
//! the volume under translations and linear flows. A gradient flow on
//! `SL_n ⋉ Rⁿ` climbs to a stationary position, where the isotropy
//! certificate (vanishing flux, moment proportional to the identity) holds.

mod flow;
mod planar;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bodies::{Body, Polytope, Shape};
use crate::linalg::{frobenius_dot, stream_rng, sym};
use crate::{Error, Matrix, Result, Vector};

pub use flow::{maxint_flow, FlowMode, FlowOptions, FlowStatus, FlowStep, FlowTrace};
use planar::{intersect, Region, COINCIDENCE_MARGIN};

/// Largest dimension for exact polytope intersection volumes.
pub const MAX_EXACT_DIM: usize = 4;
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;
const MC_BLOCK: usize = 1 << 16;
/// Grid cells per facet for the quadrature fallback.
const QUADRATURE_CELLS: f64 = 65_536.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum VolumeMethod {
    /// Exact where supported, otherwise Monte Carlo with default settings.
    Auto,
    Exact,
    MonteCarlo {
        samples: usize,
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntersectionMethod {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntersectionResult {
    pub volume: f64,
    pub method: IntersectionMethod,
    /// Standard error of a Monte Carlo estimate; zero for exact volumes.
    pub stderr: f64,
}

fn check_dims(k: &Body, l: &Body) -> Result<()> {
    if k.dim() != l.dim() {
        return Err(Error::DimensionMismatch { expected: k.dim(), found: l.dim() });
    }
    Ok(())
}

/// Whether `vol(K ∩ L)` has an exact route.
pub fn exact_volume_supported(k: &Body, l: &Body) -> bool {
    planar_pair(k, l).is_some() || (k.is_polytope() && l.is_polytope() && k.dim() <= MAX_EXACT_DIM)
}

fn planar_pair(k: &Body, l: &Body) -> Option<(Region, Region)> {
    Some((Region::from_body(k)?, Region::from_body(l)?))
}

/// `vol(K ∩ L)`.
pub fn intersection_volume(k: &Body, l: &Body, method: VolumeMethod) -> Result<IntersectionResult> {
    check_dims(k, l)?;
    let exact = |volume| IntersectionResult { volume, method: IntersectionMethod::Exact, stderr: 0.0 };
    match method {
        VolumeMethod::MonteCarlo { samples, seed } => monte_carlo_volume(k, l, samples, seed),
        VolumeMethod::Auto | VolumeMethod::Exact => {
            if let Some((kr, lr)) = planar_pair(k, l) {
                return Ok(exact(intersect(&kr, &lr).area));
            }
            if let (Some(kp), Some(lp), true) = (k.polytope(), l.polytope(), k.dim() <= MAX_EXACT_DIM) {
                return Ok(exact(intersection_polytope(kp, lp)?.map_or(0.0, |m| m.volume())));
            }
            if method == VolumeMethod::Exact {
                return Err(Error::Unsupported(format!(
                    "exact intersection volume needs two polytopes in dimension at most {MAX_EXACT_DIM} \
                     (or planar polygons and ellipses); use the Monte Carlo method for {} and {}",
                    k.describe(),
                    l.describe()
                )));
            }
            monte_carlo_volume(k, l, DEFAULT_MC_SAMPLES, 0)
        }
    }
}

/// `K ∩ L` as a polytope with the facets of `L` listed first, so that a
/// facet shared by both is attributed to `L`. `None` when the intersection
/// is empty or lower-dimensional.
fn intersection_polytope(k: &Polytope, l: &Polytope) -> Result<Option<Polytope>> {
    let (normals, offsets): (Vec<Vector>, Vec<f64>) =
        l.facets().iter().chain(k.facets()).map(|f| (f.normal.clone(), f.offset)).unzip();
    match Polytope::from_halfspaces(&normals, &offsets) {
        Ok(m) => Ok(Some(m)),
        Err(Error::InvalidBody(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Axis-aligned box containing the body.
fn bounding_box(b: &Body) -> (Vector, Vector) {
    let n = b.dim();
    let e = |i: usize, s: f64| {
        let mut v = Vector::zeros(n);
        v[i] = s;
        v
    };
    (Vector::from_fn(n, |i, _| -b.support(&e(i, -1.0))), Vector::from_fn(n, |i, _| b.support(&e(i, 1.0))))
}

/// Hit counting in the common bounding box; blocks of samples run in
/// parallel on their own streams, so the estimate depends only on the seed.
fn monte_carlo_volume(k: &Body, l: &Body, samples: usize, seed: u64) -> Result<IntersectionResult> {
    use rand::Rng;
    if samples == 0 {
        return Err(Error::InvalidBody("Monte Carlo needs at least one sample".into()));
    }
    let (klo, khi) = bounding_box(k);
    let (llo, lhi) = bounding_box(l);
    let lo = klo.zip_map(&llo, f64::max);
    let hi = khi.zip_map(&lhi, f64::min);
    let result = |volume, stderr| IntersectionResult { volume, method: IntersectionMethod::MonteCarlo, stderr };
    if lo.iter().zip(hi.iter()).any(|(a, b)| a >= b) {
        return Ok(result(0.0, 0.0));
    }
    let box_volume: f64 = hi.iter().zip(lo.iter()).map(|(b, a)| b - a).product();
    let blocks = samples.div_ceil(MC_BLOCK);
    let hits: usize = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = stream_rng(seed, block as u64);
            let count = MC_BLOCK.min(samples - block * MC_BLOCK);
            let mut x = Vector::zeros(lo.len());
            (0..count)
                .filter(|_| {
                    for i in 0..x.len() {
                        x[i] = rng.random_range(lo[i]..hi[i]);
                    }
                    k.level(&x) <= 0.0 && l.level(&x) <= 0.0
                })
                .count()
        })
        .sum();
    let p = hits as f64 / samples as f64;
    Ok(result(box_volume * p, box_volume * (p * (1.0 - p) / samples as f64).sqrt()))
}

/// Contribution of one facet (or, for a smooth `L`, the whole boundary).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FacetContribution {
    pub facet: usize,
    /// `(n−1)`-measure of the facet part inside `K`.
    pub measure: f64,
    pub flux: Vector,
    pub moment: Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum IntegralMethod {
    Exact,
    /// Midpoint quadrature on each facet with the given cell diameter.
    Quadrature {
        resolution: f64,
    },
}

/// First-variation data of `vol(K ∩ L)` with respect to `L`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurfaceIntegrals {
    /// `∫_{K∩∂L} n̂_L dH`.
    pub flux: Vector,
    /// `∫_{K∩∂L} n̂_L ⊗ x dH`; `⟨moment, A⟩ = ∫⟨n̂_L, Ax⟩`.
    pub moment: Matrix,
    pub per_facet: Vec<FacetContribution>,
    /// Part of `∂L` of positive measure lies on `∂K` (within the coincidence
    /// margin). Such parts are counted, and derivatives are then one-sided.
    pub overlap: bool,
    pub method: IntegralMethod,
}

/// Boundary integrals over `K ∩ ∂L`.
pub fn boundary_integrals(k: &Body, l: &Body) -> Result<SurfaceIntegrals> {
    check_dims(k, l)?;
    let n = k.dim();
    if let Some((kr, lr)) = planar_pair(k, l) {
        let r = intersect(&kr, &lr);
        let per_facet = r
            .per_piece
            .iter()
            .enumerate()
            .map(|(facet, (len, f, m))| FacetContribution {
                facet,
                measure: *len,
                flux: planar::from_p(f),
                moment: planar::from_m2(m),
            })
            .collect();
        return Ok(SurfaceIntegrals {
            flux: r.flux_vector(),
            moment: r.moment_matrix(),
            per_facet,
            overlap: r.overlap,
            method: IntegralMethod::Exact,
        });
    }
    let Some(lp) = l.polytope() else {
        return Err(Error::Unsupported(format!(
            "boundary integrals need a polytope L above the plane, got {}",
            l.describe()
        )));
    };
    let mut out = SurfaceIntegrals {
        flux: Vector::zeros(n),
        moment: Matrix::zeros(n, n),
        per_facet: Vec::with_capacity(lp.facets().len()),
        overlap: false,
        method: IntegralMethod::Exact,
    };
    let add = |out: &mut SurfaceIntegrals, facet: usize, measure: f64, first: Vector| {
        let normal = &lp.facets()[facet].normal;
        let flux = normal * measure;
        let moment = normal * first.transpose();
        out.flux += &flux;
        out.moment += &moment;
        out.per_facet.push(FacetContribution { facet, measure, flux, moment });
    };
    if let Some(kp) = k.polytope() {
        let m = intersection_polytope(kp, lp)?;
        let scale = lp.vertices().iter().chain(kp.vertices()).map(|v| v.norm()).fold(1.0, f64::max);
        let tol = COINCIDENCE_MARGIN * scale;
        let matches = |f: &crate::bodies::Facet, g: &crate::bodies::Facet| {
            (&f.normal - &g.normal).norm() <= COINCIDENCE_MARGIN && (f.offset - g.offset).abs() <= tol
        };
        for (j, lf) in lp.facets().iter().enumerate() {
            let found = m.as_ref().and_then(|m| m.facets().iter().position(|f| matches(f, lf)).map(|i| (m, i)));
            match found {
                Some((m, i)) => {
                    let (measure, centroid) = m.facet_measure(i);
                    if kp.facets().iter().any(|kf| matches(kf, lf)) {
                        out.overlap = true;
                    }
                    add(&mut out, j, measure, centroid * measure);
                }
                None => add(&mut out, j, 0.0, Vector::zeros(n)),
            }
        }
        return Ok(out);
    }
    if let (3, Shape::Ellipsoid { shape, center }) = (n, k.shape()) {
        for j in 0..lp.facets().len() {
            let (measure, first) = ellipsoid_facet_section(shape.matrix(), center, lp, j);
            add(&mut out, j, measure, first);
        }
        return Ok(out);
    }
    let mut resolution: f64 = 0.0;
    for j in 0..lp.facets().len() {
        let (measure, first, h) = facet_quadrature(k, lp, j);
        resolution = resolution.max(h);
        add(&mut out, j, measure, first);
    }
    out.method = IntegralMethod::Quadrature { resolution };
    Ok(out)
}

/// Integrals over all of `∂L`, as if `K` were large enough to contain it.
pub fn full_boundary_integrals(l: &Polytope) -> SurfaceIntegrals {
    let n = l.dim();
    let mut out = SurfaceIntegrals {
        flux: Vector::zeros(n),
        moment: Matrix::zeros(n, n),
        per_facet: Vec::new(),
        overlap: false,
        method: IntegralMethod::Exact,
    };
    for (j, f) in l.facets().iter().enumerate() {
        let (measure, centroid) = l.facet_measure(j);
        let flux = &f.normal * measure;
        let moment = &f.normal * (centroid * measure).transpose();
        out.flux += &flux;
        out.moment += &moment;
        out.per_facet.push(FacetContribution { facet: j, measure, flux, moment });
    }
    out
}

/// Orthonormal basis of the plane `⟨normal, x⟩ = 0`, as columns.
fn plane_basis(normal: &Vector) -> Matrix {
    let n = normal.len();
    let mut basis: Vec<Vector> = vec![normal.normalize()];
    for i in 0..n {
        let mut v = Vector::zeros(n);
        v[i] = 1.0;
        for b in &basis {
            v -= b * b.dot(&v);
        }
        if v.norm() > 0.5 {
            basis.push(v.normalize());
        }
        if basis.len() == n {
            break;
        }
    }
    Matrix::from_columns(&basis[1..])
}

/// Facet `j` of `L` in local coordinates: origin, basis and the vertices.
fn facet_frame(lp: &Polytope, j: usize) -> (Vector, Matrix, Vec<Vector>) {
    let on = &lp.incidence()[j];
    let verts: Vec<&Vector> = on.iter().map(|&i| &lp.vertices()[i]).collect();
    let origin = verts.iter().fold(Vector::zeros(lp.dim()), |a, v| a + *v) / verts.len() as f64;
    let basis = plane_basis(&lp.facets()[j].normal);
    let local = verts.iter().map(|v| basis.transpose() * (*v - &origin)).collect();
    (origin, basis, local)
}

/// Measure and first moment of `F_j ∩ K` for an ellipsoid `K = S·B + c` in
/// three dimensions: the plane section of `K` is an ellipse, clipped exactly
/// against the facet polygon.
fn ellipsoid_facet_section(s: &Matrix, c: &Vector, lp: &Polytope, j: usize) -> (f64, Vector) {
    let (origin, basis, local) = facet_frame(lp, j);
    let s_inv = s.clone().try_inverse().expect("ellipsoid shape is invertible");
    // x = o + E w lies in K iff |d + B w| ≤ 1.
    let b = &s_inv * &basis;
    let d = &s_inv * (&origin - c);
    let q = b.transpose() * &b;
    let q_inv = q.clone().try_inverse().expect("section form is positive-definite");
    let w0 = -(&q_inv * (b.transpose() * &d));
    let rho2 = 1.0 - d.norm_squared() + w0.dot(&(&q * &w0));
    if rho2 <= 0.0 {
        return (0.0, Vector::zeros(3));
    }
    let shape = crate::linalg::spectral_map(&q_inv, |v| (v * rho2).sqrt());
    let section = Region::ellipse(planar::matrix2(&shape), planar::point(w0[0], w0[1]));
    let mut polygon: Vec<_> = local.iter().map(|w| planar::point(w[0], w[1])).collect();
    polygon.sort_by(|a, b| a.y.atan2(a.x).total_cmp(&b.y.atan2(b.x)));
    let r = intersect(&section, &Region::polygon(&polygon));
    let first = &origin * r.area + &basis * planar::from_p(&r.first_moment);
    (r.area, first)
}

/// Midpoint-rule estimate of the measure and first moment of `F_j ∩ K`,
/// scaled to the exact facet measure. Returns the cell diameter as well.
fn facet_quadrature(k: &Body, lp: &Polytope, j: usize) -> (f64, Vector, f64) {
    let n = lp.dim();
    let (origin, basis, local) = facet_frame(lp, j);
    let (area, _) = lp.facet_measure(j);
    let m = n - 1;
    let lo = local.iter().fold(Vector::from_element(m, f64::INFINITY), |a, v| a.zip_map(v, f64::min));
    let hi = local.iter().fold(Vector::from_element(m, f64::NEG_INFINITY), |a, v| a.zip_map(v, f64::max));
    let per_side = QUADRATURE_CELLS.powf(1.0 / m as f64).floor().max(1.0) as usize;
    let cell = (&hi - &lo) / per_side as f64;
    let eps = COINCIDENCE_MARGIN * lp.vertices().iter().map(|v| v.norm()).fold(1.0, f64::max);
    let others: Vec<(Vector, f64)> = lp
        .facets()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != j)
        .map(|(_, f)| (basis.transpose() * &f.normal, f.offset - f.normal.dot(&origin)))
        .collect();
    let (mut in_facet, mut in_k) = (0usize, 0usize);
    let mut sum = Vector::zeros(n);
    let mut index = vec![0usize; m];
    loop {
        let w = Vector::from_fn(m, |i, _| lo[i] + cell[i] * (index[i] as f64 + 0.5));
        if others.iter().all(|(a, b)| a.dot(&w) <= *b) {
            in_facet += 1;
            let x = &origin + &basis * &w;
            if k.level(&x) <= eps {
                in_k += 1;
                sum += x;
            }
        }
        let mut i = 0;
        while i < m {
            index[i] += 1;
            if index[i] < per_side {
                break;
            }
            index[i] = 0;
            i += 1;
        }
        if i == m {
            break;
        }
    }
    let diameter = cell.norm();
    if in_k == 0 || in_facet == 0 {
        return (0.0, Vector::zeros(n), diameter);
    }
    let measure = area * in_k as f64 / in_facet as f64;
    (measure, sum / in_k as f64 * measure, diameter)
}

/// Perturbation of `L` whose volume derivative is requested.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    /// `L + t u`.
    Translation(Vector),
    /// `e^{tA} L`.
    Linear(Matrix),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Derivative {
    pub value: f64,
    /// Set when part of `∂L` lies on `∂K`: the two one-sided derivatives may
    /// then differ and `value` counts the shared part in full.
    pub one_sided: bool,
}

/// `d/dt vol(K ∩ L_t)` at `t = 0`.
pub fn volume_derivative(k: &Body, l: &Body, perturbation: &Perturbation) -> Result<Derivative> {
    let ints = boundary_integrals(k, l)?;
    let n = k.dim();
    let value = match perturbation {
        Perturbation::Translation(u) => {
            if u.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: u.len() });
            }
            ints.flux.dot(u)
        }
        Perturbation::Linear(a) => {
            if a.shape() != (n, n) {
                return Err(Error::DimensionMismatch { expected: n, found: a.nrows() });
            }
            frobenius_dot(&ints.moment, a)
        }
    };
    Ok(Derivative { value, one_sided: ints.overlap })
}

/// Planar boundary integrals by the radial pushforward route, about the
/// centroid of `K ∩ L`, with `samples` angles. An independent check of
/// [`boundary_integrals`] accurate to about `1e-4` at `10⁵` samples.
pub fn radial_boundary_integrals(k: &Body, l: &Body, samples: usize) -> Result<(Vector, Matrix)> {
    if k.dim() != 2 || l.dim() != 2 {
        return Err(Error::UnsupportedDimension { dim: k.dim(), reason: "the radial route is planar".into() });
    }
    let (Some(kr), Some(lr)) = (Region::from_body(k), Region::from_body(l)) else {
        return Err(Error::Unsupported("radial route needs polygons or ellipses".into()));
    };
    let Some(center) = intersect(&kr, &lr).centroid() else {
        return Err(Error::InfeasibleStart("the bodies do not overlap".into()));
    };
    Ok(planar::radial_boundary_integrals(k, l, &center, samples))
}

/// `‖n·M/tr M − I‖_F`; zero for a vanishing moment.
pub fn anisotropy(moment: &Matrix) -> f64 {
    let n = moment.nrows();
    if moment.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    let tr = moment.trace();
    if tr == 0.0 {
        return f64::INFINITY;
    }
    (moment * (n as f64 / tr) - Matrix::identity(n, n)).norm()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IsotropySide {
    pub flux_norm: f64,
    /// Distance of the trace-normalised moment from the identity.
    pub anisotropy_full: f64,
    /// The same for the symmetrised moment, the positive-mode certificate.
    pub anisotropy_sym: f64,
    pub trace: f64,
    pub overlap: bool,
}

impl IsotropySide {
    fn from_integrals(ints: &SurfaceIntegrals) -> IsotropySide {
        IsotropySide {
            flux_norm: ints.flux.norm(),
            anisotropy_full: anisotropy(&ints.moment),
            anisotropy_sym: anisotropy(&sym(&ints.moment)),
            trace: ints.moment.trace(),
            overlap: ints.overlap,
        }
    }

    pub fn passes(&self, flux_tol: f64, anisotropy_tol: f64, symmetric_only: bool) -> bool {
        let aniso = if symmetric_only { self.anisotropy_sym } else { self.anisotropy_full };
        self.flux_norm <= flux_tol && aniso <= anisotropy_tol
    }
}

/// First-order isotropy certificate in both orientations: over `K ∩ ∂L`
/// (`forward`) and over `L ∩ ∂K` (`swapped`). Passing it is necessary for a
/// maximal intersection position, not sufficient.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IsotropyReport {
    pub forward: IsotropySide,
    pub swapped: IsotropySide,
    pub certification: String,
}

impl IsotropyReport {
    pub fn passes(&self, flux_tol: f64, anisotropy_tol: f64, symmetric_only: bool) -> bool {
        self.forward.passes(flux_tol, anisotropy_tol, symmetric_only)
            && self.swapped.passes(flux_tol, anisotropy_tol, symmetric_only)
    }
}

pub fn isotropy_report(k: &Body, l: &Body) -> Result<IsotropyReport> {
    Ok(IsotropyReport {
        forward: IsotropySide::from_integrals(&boundary_integrals(k, l)?),
        swapped: IsotropySide::from_integrals(&boundary_integrals(l, k)?),
        certification: "first-order".into(),
    })
}
