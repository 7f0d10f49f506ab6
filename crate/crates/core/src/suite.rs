//! The regression suite: the ten acceptance criteria, each run against exact
//! small-dimension values or property checks. Shared by the `acceptance`
//! test target and the `paper-suite` subcommand.

use std::fmt::Write as _;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bodies::{hausdorff_distance, Body};
use crate::family::{
    check_dilation_inclusion, ellipsoid_family_transport, extremize_over_rotations, genuine_certificate, sweep_family,
    DilationReport, Direction, ExtremalPosition, FamilyOptions,
};
use crate::linalg::{generalized_polar_decompose, matrix_exp, stream_rng, AffineMap, SpdMatrix};
use crate::maxint::{
    full_boundary_integrals, intersection_volume, isotropy_report, maxint_flow, volume_derivative, FlowMode,
    FlowOptions, Perturbation, VolumeMethod,
};
use crate::pjp::{positive_john, BarrierOptions, PjpOptions, PositiveJohn};
use crate::report::{DerivativeCase, Report};
use crate::{Error, Matrix, Result, Vector};

pub const CRITERIA: [(usize, &str); 10] = [
    (1, "positive John exactness"),
    (2, "saddle value for Hadamard dimensions"),
    (3, "maximal-volume rotation value"),
    (4, "generalized polar decomposition"),
    (5, "ellipsoid constant volume and transport"),
    (6, "dilation inclusion at certified points"),
    (7, "volume derivative formulas"),
    (8, "closed-surface identities"),
    (9, "maximal intersection flow"),
    (10, "uniqueness and continuity"),
];

/// Central-difference step of the derivative check.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: usize,
    pub title: String,
    pub passed: bool,
    /// Measured quantities and, on failure, what was violated.
    pub details: Vec<String>,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        let summary = self.details.first().map(String::as_str).unwrap_or("");
        format!("[{}] {:>2} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.id, self.title, summary)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub outcomes: Vec<CriterionOutcome>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }
}

impl Report for SuiteReport {
    fn render_text(&self) -> String {
        let mut out = format!("acceptance suite (seed {})\n", self.seed);
        for o in &self.outcomes {
            let _ = writeln!(out, "{}", o.line());
            for d in o.details.iter().skip(1) {
                let _ = writeln!(out, "       {d}");
            }
        }
        let passed = self.outcomes.iter().filter(|o| o.passed).count();
        let _ = writeln!(out, "{passed}/{} criteria passed", self.outcomes.len());
        out
    }
}

/// Shared state: criterion 6 reuses the positions found by criteria 1 to 3.
pub struct Suite {
    seed: u64,
    cross_positions: OnceLock<Vec<Result<PositiveJohn>>>,
    saddles: OnceLock<Vec<Result<ExtremalPosition>>>,
    maximum: OnceLock<Result<ExtremalPosition>>,
}

impl Suite {
    pub fn new(seed: u64) -> Self {
        Suite { seed, cross_positions: OnceLock::new(), saddles: OnceLock::new(), maximum: OnceLock::new() }
    }

    /// Runs the selected criteria (all when `ids` is empty) in parallel and
    /// returns them in id order.
    pub fn run(&self, ids: &[usize]) -> SuiteReport {
        let selected: Vec<(usize, &str)> =
            CRITERIA.iter().copied().filter(|(id, _)| ids.is_empty() || ids.contains(id)).collect();
        let outcomes = selected.par_iter().map(|&(id, _)| self.criterion(id)).collect();
        SuiteReport { seed: self.seed, outcomes }
    }

    pub fn criterion(&self, id: usize) -> CriterionOutcome {
        let title = CRITERIA.iter().find(|(i, _)| *i == id).map_or("unknown criterion", |(_, t)| t).to_string();
        let result = match id {
            1 => self.positive_john_exactness(),
            2 => self.hadamard_saddle(),
            3 => self.maximal_volume(),
            4 => self.polar_decomposition(),
            5 => self.ellipsoid_family(),
            6 => self.dilation(),
            7 => self.derivatives().map(|(check, _)| check),
            8 => self.closed_surfaces(),
            9 => self.flows(),
            10 => self.continuity(),
            _ => Err(Error::Unsupported(format!("no criterion {id}"))),
        };
        let (passed, details) = match result {
            Ok(c) => (c.passed, c.details),
            Err(e) => (false, vec![format!("error: {e}")]),
        };
        CriterionOutcome { id, title, passed, details }
    }

    fn cross_positions(&self) -> &[Result<PositiveJohn>] {
        self.cross_positions.get_or_init(|| {
            (2..=6)
                .into_par_iter()
                .map(|n| positive_john(&Body::cross_polytope(n), &Body::cube(n), &PjpOptions::default()))
                .collect()
        })
    }

    fn saddles(&self) -> &[Result<ExtremalPosition>] {
        self.saddles.get_or_init(|| {
            [2, 4]
                .into_par_iter()
                .map(|n| {
                    let cube = Body::cube(n);
                    extremize_over_rotations(&cube, &cube, Direction::Min, self.seed, &FamilyOptions::default())
                })
                .collect()
        })
    }

    fn maximum(&self) -> &Result<ExtremalPosition> {
        self.maximum.get_or_init(|| {
            extremize_over_rotations(
                &Body::cube(2),
                &Body::cross_polytope(2),
                Direction::Max,
                self.seed,
                &FamilyOptions::default(),
            )
        })
    }

    fn positive_john_exactness(&self) -> Result<Check> {
        let mut check = Check::default();
        let (mut p_err, mut z_err, mut resid, mut sum_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for (n, pj) in (2..=6).zip(self.cross_positions()) {
            let pj = pj.as_ref().map_err(clone_error)?;
            let target = Matrix::identity(n, n) / n as f64;
            let dp = (pj.solution.p.matrix() - target).amax();
            let dz = pj.solution.z.amax();
            let d = &pj.decomposition;
            let ds = (d.weight_sum - n as f64).abs();
            check.require(dp <= 1e-6, format!("n = {n}: max |P - I/n| = {dp:.2e}"));
            check.require(dz <= 1e-6, format!("n = {n}: max |z| = {dz:.2e}"));
            check.require(d.residual() <= 1e-6, format!("n = {n}: decomposition residual {:.2e}", d.residual()));
            check.require(ds <= 1e-5, format!("n = {n}: |sum c - n| = {ds:.2e}"));
            p_err = p_err.max(dp);
            z_err = z_err.max(dz);
            resid = resid.max(d.residual());
            sum_err = sum_err.max(ds);
        }
        check.headline(format!(
            "n = 2..6: max |P - I/n| {p_err:.1e}, max |z| {z_err:.1e}, residual {resid:.1e}, |sum c - n| {sum_err:.1e}"
        ));
        Ok(check)
    }

    fn hadamard_saddle(&self) -> Result<Check> {
        let mut check = Check::default();
        let mut parts = Vec::new();
        for (n, ext) in [2usize, 4].into_iter().zip(self.saddles()) {
            let ext = ext.as_ref().map_err(clone_error)?;
            let expected = -(n as f64) / 2.0 * (n as f64).ln();
            let err = (ext.position.solution.log_det - expected).abs();
            let genuine = ext.decomposition.residual();
            check.require(err <= 1e-4, format!("n = {n}: |logdet + (n/2) log n| = {err:.2e}"));
            check.require(genuine <= 1e-4, format!("n = {n}: genuine residual {genuine:.2e}"));
            parts.push(format!("n = {n}: logdet error {err:.1e}, genuine residual {genuine:.1e}"));
        }
        check.headline(parts.join("; "));
        Ok(check)
    }

    fn maximal_volume(&self) -> Result<Check> {
        let mut check = Check::default();
        let ext = self.maximum().as_ref().map_err(clone_error)?;
        let det = ext.position.solution.log_det.exp();
        check.require((det - 2.0).abs() <= 1e-5, format!("max det {det:.9} (expected 2)"));
        let sweep = sweep_family(&Body::cube(2), &Body::cross_polytope(2), 200, self.seed, &FamilyOptions::default())?;
        let dets: Vec<f64> = sweep.samples.iter().filter_map(|s| s.log_det).map(f64::exp).collect();
        check.require(dets.len() == 200, format!("{} of 200 sweep samples solved", dets.len()));
        let lo = dets.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = dets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        check.require(lo >= 1.0 - 1e-9 && hi <= 2.0 + 1e-5, format!("sweep det range [{lo:.9}, {hi:.9}]"));
        check.headline(format!("max det {det:.9}; 200-sample sweep in [{lo:.6}, {hi:.6}]"));
        Ok(check)
    }

    fn polar_decomposition(&self) -> Result<Check> {
        let mut check = Check::default();
        let cases: Vec<(f64, f64)> = (0..1000u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(self.seed ^ 0x504f_4c41, i);
                let n = rng.random_range(1..=8);
                let a = gaussian(&mut rng, n);
                let m = gaussian(&mut rng, n);
                let recon = match generalized_polar_decompose(&a, &m) {
                    Ok((p, u)) => (p.matrix() * &m * u.matrix() - &a).norm() / a.norm(),
                    Err(_) => f64::INFINITY,
                };
                // Classical factors from the SVD A = W Σ Vᵀ: U = W Vᵀ, P = W Σ Wᵀ.
                let svd = a.clone().svd(true, true);
                let (w, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
                let u_ref = &w * &vt;
                let p_ref = &w * Matrix::from_diagonal(&svd.singular_values) * w.transpose();
                let classical = match generalized_polar_decompose(&a, &Matrix::identity(n, n)) {
                    Ok((p, u)) => ((p.matrix() - &p_ref).norm() / p_ref.norm())
                        .max((u.matrix() - &u_ref).norm() / (n as f64).sqrt()),
                    Err(_) => f64::INFINITY,
                };
                (recon, classical)
            })
            .collect();
        let recon = cases.iter().map(|c| c.0).fold(0.0, f64::max);
        let classical = cases.iter().map(|c| c.1).fold(0.0, f64::max);
        check.require(recon <= 1e-9, format!("worst reconstruction {recon:.2e}"));
        check.require(classical <= 1e-10, format!("worst deviation from classical polar factors {classical:.2e}"));
        check.headline(format!("1000 cases: reconstruction {recon:.1e}, classical factors {classical:.1e}"));
        Ok(check)
    }

    fn ellipsoid_family(&self) -> Result<Check> {
        let mut check = Check::default();
        let setups: Vec<(Vec<f64>, bool)> = vec![
            (vec![2.0, 1.0], true),
            (vec![2.0, 1.0], false),
            (vec![3.0, 1.0, 0.5], true),
            (vec![3.0, 1.0, 0.5], false),
        ];
        let mut worst_std = 0.0f64;
        let mut worst_transport = 0.0f64;
        for (axes, cube) in setups {
            let n = axes.len();
            let shape = SpdMatrix::new(Matrix::from_diagonal(&Vector::from_vec(axes.clone())))?;
            let e = Body::ellipsoid(shape, Vector::zeros(n))?;
            let l = if cube { Body::cube(n) } else { Body::cross_polytope(n) };
            let label = format!("E{axes:?} with {}", l.describe());
            let opts = FamilyOptions::default();
            let sweep = sweep_family(&e, &l, 50, self.seed, &opts)?;
            let values: Vec<f64> = sweep.samples.iter().filter_map(|s| s.log_det).collect();
            check.require(values.len() == 50, format!("{label}: {} of 50 samples solved", values.len()));
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt();
            check.require(std <= 1e-6, format!("{label}: logdet standard deviation {std:.2e}"));
            worst_std = worst_std.max(std);

            let base = positive_john(&e, &l, &PjpOptions::default())?.solution.p;
            for s in sweep.samples.iter().take(10) {
                let t = ellipsoid_family_transport(&e, &l, &base, &s.rotation, &opts)?;
                let r = match t.orientation {
                    crate::family::TransportOrientation::Statement => t.statement_residual,
                    crate::family::TransportOrientation::Transposed => t.transposed_residual,
                };
                check.require(r <= 1e-5, format!("{label}: transport residual {r:.2e} at sample {}", s.index));
                worst_transport = worst_transport.max(r);
            }
        }
        check.headline(format!("4 sweeps of 50: logdet std {worst_std:.1e}; transport residual {worst_transport:.1e}"));
        Ok(check)
    }

    fn dilation(&self) -> Result<Check> {
        let mut check = Check::default();
        let mut reports: Vec<(String, DilationReport)> = Vec::new();
        for (n, pj) in (2..=6).zip(self.cross_positions()) {
            let pj = pj.as_ref().map_err(clone_error)?;
            let (d, pairs) = genuine_certificate(pj)?;
            check.require(d.residual() <= 1e-6, format!("B1/Binf n = {n}: genuine residual {:.2e}", d.residual()));
            let placed = pj.problem.inner().apply_affine(&pj.placement())?;
            let outer = pj.problem.outer();
            reports.push((
                format!("B1/Binf n = {n}"),
                check_dilation_inclusion(outer, &placed, &pj.solution.p, &pairs, &d.weights)?,
            ));
        }
        let extremes = self.saddles().iter().map(|e| (e, "saddle")).chain([(self.maximum(), "maximum")]);
        for (ext, kind) in extremes {
            let ext = ext.as_ref().map_err(clone_error)?;
            let pj = &ext.position;
            let n = pj.problem.dim();
            let label = format!("{kind} n = {n}");
            check.require(
                ext.decomposition.residual() <= 1e-4,
                format!("{label}: genuine residual {:.2e}", ext.decomposition.residual()),
            );
            let placed = pj.problem.inner().apply_affine(&pj.placement())?;
            let r = check_dilation_inclusion(
                pj.problem.outer(),
                &placed,
                &pj.solution.p,
                &ext.certificate_pairs,
                &ext.decomposition.weights,
            )?;
            reports.push((label, r));
        }
        let mut worst = f64::INFINITY;
        for (label, r) in &reports {
            check.require(r.worst_margin >= -1e-6, format!("{label}: margin {:.2e}", r.worst_margin));
            worst = worst.min(r.worst_margin);
        }
        check.headline(format!("{} certified points, worst margin {worst:.2e}", reports.len()));
        Ok(check)
    }

    /// Criterion 7; also returns the individual cases for reporting.
    pub fn derivatives(&self) -> Result<(Check, Vec<DerivativeCase>)> {
        let mut check = Check::default();
        let mut jobs = Vec::new();
        for n in [2usize, 3] {
            for i in 0..50 {
                jobs.push((n, i));
            }
        }
        let results: Vec<Result<Vec<DerivativeCase>>> = jobs
            .into_par_iter()
            .map(|(n, i)| {
                let mut rng = stream_rng(self.seed ^ 0x4445_5249, (n * 1000 + i) as u64);
                let k = random_polytope(&mut rng, n, 10, 0.0);
                let l = random_polytope(&mut rng, n, 10, 0.5);
                let (u, a) = random_directions(&mut rng, n);
                Ok(compare_derivatives(&k, &l, &u, &a, i, VolumeMethod::Exact)?.to_vec())
            })
            .collect();
        let mut cases = Vec::new();
        for r in results {
            cases.extend(r?);
        }
        let clean: Vec<&DerivativeCase> = cases.iter().filter(|c| !c.one_sided).collect();
        let worst = clean.iter().map(|c| c.error).fold(0.0, f64::max);
        check.require(
            clean.len() == cases.len(),
            format!("{} of {} cases had a one-sided flag", cases.len() - clean.len(), cases.len()),
        );
        for c in &clean {
            check.require(c.error <= 1e-6, format!("n = {} case {} {}: error {:.2e}", c.dim, c.index, c.kind, c.error));
        }

        // K = [0,1]², L = [1/4,3/4] × [−1/2,1/2], u = e₂: V(t) = (1/2)(1/2 + t).
        let k = axis_box(&[0.0, 0.0], &[1.0, 1.0])?;
        let l = axis_box(&[0.25, -0.5], &[0.75, 0.5])?;
        let rect = volume_derivative(&k, &l, &Perturbation::Translation(Vector::from_vec(vec![0.0, 1.0])))?;
        check
            .require(rect.value == 0.5, format!("offset rectangle derivative {:e} (expected exactly 0.5)", rect.value));
        check.headline(format!(
            "{} cases in n = 2, 3: worst error {worst:.1e}; offset rectangle {}",
            clean.len(),
            rect.value
        ));
        Ok((check, cases))
    }

    fn closed_surfaces(&self) -> Result<Check> {
        let mut check = Check::default();
        let (mut flux, mut trace) = (0.0f64, 0.0f64);
        for i in 0..20u64 {
            let mut rng = stream_rng(self.seed ^ 0x434c_4f53, i);
            let n = 2 + (i % 3) as usize;
            let body = random_polytope(&mut rng, n, 8 + 2 * n, 0.3);
            let poly = body.polytope().expect("random bodies are polytopes");
            let ints = full_boundary_integrals(poly);
            let f = ints.flux.norm();
            let t = (ints.moment.trace() - n as f64 * poly.volume()).abs();
            check.require(f <= 1e-12, format!("polytope {i} (n = {n}): flux {f:.2e}"));
            check.require(t <= 1e-9, format!("polytope {i} (n = {n}): |trace - n vol| {t:.2e}"));
            flux = flux.max(f);
            trace = trace.max(t);
        }
        check.headline(format!("20 polytopes in n = 2..4: flux {flux:.1e}, |trace - n vol| {trace:.1e}"));
        Ok(check)
    }

    fn flows(&self) -> Result<Check> {
        let mut check = Check::default();
        let opts = FlowOptions::default();
        let cases = [
            ("offset squares", Body::cube(2), Body::cube(2).translate(&Vector::from_vec(vec![0.3, 0.0]))?),
            (
                "offset disks",
                Body::euclidean_ball(2),
                Body::euclidean_ball(2).translate(&Vector::from_vec(vec![0.4, -0.2]))?,
            ),
        ];
        let mut parts = Vec::new();
        for (name, k, l) in &cases {
            for mode in [FlowMode::FullAffine, FlowMode::Positive] {
                let label = format!("{name}, {mode:?}");
                let trace = maxint_flow(k, l, mode, &opts)?;
                let steps = trace.steps.len() - 1;
                check.require(trace.converged(), format!("{label}: status {:?} after {steps} steps", trace.status));
                check.require(steps <= 500, format!("{label}: {steps} steps"));
                check.require(trace.monotone(), format!("{label}: volume decreased"));
                let placed = l.apply_affine(&trace.final_map())?;
                let rep = isotropy_report(k, &placed)?;
                let symmetric_only = mode == FlowMode::Positive;
                for (side, s) in [("K ∩ ∂L", &rep.forward), ("L ∩ ∂K", &rep.swapped)] {
                    let aniso = if symmetric_only { s.anisotropy_sym } else { s.anisotropy_full };
                    check.require(
                        s.passes(1e-6, 1e-5, symmetric_only),
                        format!("{label} on {side}: flux {:.2e}, anisotropy {aniso:.2e}", s.flux_norm),
                    );
                }
                parts.push(format!("{name} {mode:?} {steps} steps"));
            }
        }
        check.headline(parts.join(", "));
        Ok(check)
    }

    fn continuity(&self) -> Result<Check> {
        let mut check = Check::default();
        let mut rng = stream_rng(self.seed ^ 0x434f_4e54, 0);
        let ellipse = Body::ellipsoid(
            SpdMatrix::new(Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0])))?,
            Vector::zeros(2),
        )?;
        let instances = vec![
            ("B1^3 around Binf^3", Body::cross_polytope(3), Body::cube(3)),
            ("ellipse around B1^2", ellipse, Body::cross_polytope(2)),
            ("Binf^2 around a random polygon", Body::cube(2), random_polytope(&mut rng, 2, 9, 0.2)),
            ("Binf^3 around a random polytope", Body::cube(3), random_polytope(&mut rng, 3, 12, 0.2)),
        ];
        let schedule = BarrierOptions { mu_start: 10.0, mu_factor: 12.0, ..BarrierOptions::default() };
        let mut worst = 0.0f64;
        for (label, k, l) in &instances {
            let a = positive_john(k, l, &PjpOptions::default())?;
            let b = positive_john(k, l, &PjpOptions { barrier: schedule.clone(), ..PjpOptions::default() })?;
            let d = (a.solution.p.matrix() - b.solution.p.matrix()).norm() + (&a.solution.z - &b.solution.z).norm();
            check.require(d <= 1e-5, format!("{label}: schedules differ by {d:.2e}"));
            worst = worst.max(d);
        }

        // Perturb the vertices of K = B²∞ and track P against the unperturbed solve.
        let inner = random_polytope(&mut rng, 2, 9, 0.1);
        let k0 = Body::cube(2);
        let base = positive_john(&k0, &inner, &PjpOptions::default())?;
        let corners = k0.polytope().expect("cube").vertices().to_vec();
        let directions: Vec<Vector> = corners
            .iter()
            .map(|_| Vector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize())
            .collect();
        let mut changes = Vec::new();
        for eps in [1e-2, 1e-3, 1e-4] {
            let moved: Vec<Vector> = corners.iter().zip(&directions).map(|(c, d)| c + d * eps).collect();
            let k = Body::v_polytope(&moved)?;
            let h = hausdorff_distance(&k, &k0, 512)?;
            let pj = positive_john(&k, &inner, &PjpOptions::default())?;
            let dp = (pj.solution.p.matrix() - base.solution.p.matrix()).norm();
            changes.push((eps, h, dp));
        }
        check.require(
            changes.windows(2).all(|w| w[1].2 < w[0].2),
            format!("|dP| not decreasing: {:?}", changes.iter().map(|c| c.2).collect::<Vec<_>>()),
        );
        for &(eps, h, dp) in &changes {
            check.require(dp <= 10.0 * eps, format!("eps {eps:e} (Hausdorff {h:.2e}): |dP| {dp:.2e}"));
        }
        let trail: Vec<String> = changes.iter().map(|(e, _, dp)| format!("{e:e}: {dp:.1e}")).collect();
        check.headline(format!("schedule change {worst:.1e}; |dP| by eps {}", trail.join(", ")));
        Ok(check)
    }
}

/// Accumulates requirements; the first detail line is a summary.
#[derive(Default)]
pub struct Check {
    pub passed: bool,
    pub details: Vec<String>,
    failures: Vec<String>,
    evaluated: bool,
}

impl Check {
    fn require(&mut self, ok: bool, what: String) {
        self.evaluated = true;
        if !ok {
            self.failures.push(what);
        }
    }

    fn headline(&mut self, text: String) {
        self.passed = self.evaluated && self.failures.is_empty();
        self.details = std::iter::once(text).chain(self.failures.iter().cloned()).collect();
    }
}

/// A unit translation and a unit traceless matrix, Gaussian directions.
pub fn random_directions(rng: &mut impl Rng, n: usize) -> (Vector, Matrix) {
    let u = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
    let mut a = gaussian(rng, n);
    a -= Matrix::identity(n, n) * (a.trace() / n as f64);
    a /= a.norm();
    (u, a)
}

/// Analytic volume derivatives along `u` and `a` against central differences
/// with step [`FD_STEP`].
pub fn compare_derivatives(
    k: &Body,
    l: &Body,
    u: &Vector,
    a: &Matrix,
    index: usize,
    method: VolumeMethod,
) -> Result<[DerivativeCase; 2]> {
    let n = k.dim();
    let vol = |body: &Body| intersection_volume(k, body, method).map(|r| r.volume);
    let case = |kind: &str, analytic: f64, fd: f64, one_sided: bool| DerivativeCase {
        index,
        dim: n,
        kind: kind.to_string(),
        analytic,
        finite_difference: fd,
        error: (analytic - fd).abs(),
        one_sided,
    };
    let d = volume_derivative(k, l, &Perturbation::Translation(u.clone()))?;
    let fd = (vol(&l.translate(&(u * FD_STEP))?)? - vol(&l.translate(&(u * -FD_STEP))?)?) / (2.0 * FD_STEP);
    let translation = case("translation", d.value, fd, d.one_sided);
    let d = volume_derivative(k, l, &Perturbation::Linear(a.clone()))?;
    let plus = l.apply_affine(&AffineMap::linear(matrix_exp(&(a * FD_STEP))))?;
    let minus = l.apply_affine(&AffineMap::linear(matrix_exp(&(a * -FD_STEP))))?;
    let fd = (vol(&plus)? - vol(&minus)?) / (2.0 * FD_STEP);
    Ok([translation, case("linear", d.value, fd, d.one_sided)])
}

fn clone_error(e: &Error) -> Error {
    Error::NonConvergence { message: e.to_string(), residual: f64::NAN }
}

fn gaussian(rng: &mut impl Rng, n: usize) -> Matrix {
    Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `[lo, hi]` as an H-polytope.
pub fn axis_box(lo: &[f64], hi: &[f64]) -> Result<Body> {
    let n = lo.len();
    let mut normals = Vec::with_capacity(2 * n);
    let mut offsets = Vec::with_capacity(2 * n);
    for i in 0..n {
        let half = (hi[i] - lo[i]) / 2.0;
        let mut e = Vector::zeros(n);
        e[i] = 1.0;
        normals.push(e.clone());
        normals.push(-e);
        offsets.extend([half, half]);
    }
    // Built around the origin first: constructors need an interior origin.
    let center = Vector::from_fn(n, |i, _| (lo[i] + hi[i]) / 2.0);
    Body::h_polytope(&normals, &offsets)?.translate(&center)
}

/// Hull of points near the unit sphere plus a small cross-polytope, which
/// keeps the origin interior, shifted by a uniform vector in `[−spread, spread]ⁿ`.
pub fn random_polytope(rng: &mut impl Rng, n: usize, points: usize, spread: f64) -> Body {
    let pts: Vec<Vector> = (0..points)
        .map(|_| {
            let g = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            g.normalize() * rng.random_range(0.8..1.2)
        })
        .chain((0..n).flat_map(|i| {
            let mut e = Vector::zeros(n);
            e[i] = 0.6;
            [e.clone(), -e]
        }))
        .collect();
    let shift = Vector::from_fn(n, |_, _| if spread > 0.0 { rng.random_range(-spread..spread) } else { 0.0 });
    Body::v_polytope(&pts)
        .and_then(|b| b.translate(&shift))
        .expect("the hull contains a cross-polytope around the origin")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_criterion_fails_cleanly() {
        let o = Suite::new(0).criterion(11);
        assert!(!o.passed);
        assert!(o.details[0].contains("no criterion 11"));
    }

    #[test]
    fn cheap_criteria_pass_and_render() {
        let report = Suite::new(0).run(&[4, 8]);
        assert_eq!(report.outcomes.iter().map(|o| o.id).collect::<Vec<_>>(), vec![4, 8]);
        assert!(report.all_passed(), "{}", report.render_text());
        assert!(report.render_text().contains("[PASS]  8 closed-surface identities"));
    }

    #[test]
    fn failed_requirements_are_listed() {
        let mut c = Check::default();
        c.require(true, "fine".into());
        c.require(false, "broken".into());
        c.headline("summary".into());
        assert!(!c.passed);
        assert_eq!(c.details, vec!["summary".to_string(), "broken".to_string()]);
    }
}
