//! The positive John family `U ↦ (P*(U), z*(U))` over the orthogonal group:
//! Haar sweeps, extremal (saddle and maximal-volume) rotations, the
//! dilation inclusion at saddle points and the ellipsoid transport formula.

mod gradient;

pub use gradient::{envelope_gradient, EnvelopeGradient};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bodies::{direction_net, Body, Shape, DEFAULT_NET_SIZE};
use crate::linalg::{
    generalized_polar_decompose, haar_orthogonal_from, matrix_exp, skew, stream_rng, OrthogonalMatrix, SpdMatrix,
};
use crate::pjp::{
    extract_contact_pairs, positive_john, recenter_contact_pairs, solve_decomposition_weights, BarrierOptions,
    ConstraintMode, ContactPair, Decomposition, DecompositionMode, PjpOptions, PositiveJohn,
};
use crate::{Error, Matrix, Result, Vector};

use gradient::{constraint_terms, min_norm_gradient, multiplier_gradient};

/// Solver settings shared by every family operation.
#[derive(Clone, Debug)]
pub struct FamilyOptions {
    pub symmetric: Option<bool>,
    pub mode: ConstraintMode,
    pub barrier: BarrierOptions,
    /// Multi-start count for extremal searches.
    pub starts: usize,
    /// Gradient steps per start.
    pub max_iterations: usize,
    /// Bound on the stationarity measure at a returned extremum.
    pub stationarity_tol: f64,
    /// Armijo sufficient-increase constant.
    pub armijo: f64,
    /// Random restarts of a start whose line search stalls.
    pub max_perturbations: usize,
}

impl Default for FamilyOptions {
    fn default() -> Self {
        Self {
            symmetric: None,
            mode: ConstraintMode::Auto,
            barrier: BarrierOptions::default(),
            starts: 16,
            max_iterations: 300,
            stationarity_tol: 1e-5,
            armijo: 1e-4,
            max_perturbations: 5,
        }
    }
}

impl FamilyOptions {
    fn pjp(&self, rotation: &Matrix) -> PjpOptions {
        PjpOptions {
            rotation: Some(OrthogonalMatrix::new(rotation.clone()).unwrap_or_else(|_| reorthonormalize(rotation))),
            symmetric: self.symmetric,
            mode: self.mode,
            barrier: self.barrier.clone(),
        }
    }
}

/// Nearest orthogonal matrix; keeps long products of exponentials on O(n).
fn reorthonormalize(u: &Matrix) -> OrthogonalMatrix {
    let svd = u.clone().svd(true, true);
    let q = svd.u.expect("computed") * svd.v_t.expect("computed");
    OrthogonalMatrix::new(q).expect("polar factor is orthogonal")
}

fn solve_at(outer: &Body, inner: &Body, rotation: &Matrix, options: &FamilyOptions) -> Result<PositiveJohn> {
    positive_john(outer, inner, &options.pjp(rotation))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSample {
    pub index: usize,
    pub rotation: OrthogonalMatrix,
    pub log_det: Option<f64>,
    pub det_nth_root: Option<f64>,
    /// Stationarity measure from the barrier multipliers.
    pub grad_norm: Option<f64>,
    pub solver_iters: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSummary {
    pub solved: usize,
    pub failed: usize,
    /// Statistics of `log det P* / n`.
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std_dev: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilySweep {
    pub seed: u64,
    pub dim: usize,
    pub samples: Vec<SweepSample>,
    pub summary: SweepSummary,
}

/// Solves the positive John problem at `m` Haar rotations; sample `i` uses
/// stream `i` of `seed`. Failures are recorded per sample.
pub fn sweep_family(outer: &Body, inner: &Body, m: usize, seed: u64, options: &FamilyOptions) -> Result<FamilySweep> {
    if m == 0 {
        return Err(Error::InvalidBody("sample count must be positive".into()));
    }
    let n = outer.dim();
    let samples: Vec<SweepSample> = (0..m)
        .into_par_iter()
        .map(|index| {
            let rotation = haar_orthogonal_from(n, &mut stream_rng(seed, index as u64));
            match solve_at(outer, inner, rotation.matrix(), options) {
                Ok(pj) => {
                    let g = multiplier_gradient(&pj.problem, &pj.solution);
                    let ld = pj.solution.log_det;
                    SweepSample {
                        index,
                        rotation,
                        log_det: Some(ld),
                        det_nth_root: Some((ld / n as f64).exp()),
                        grad_norm: Some(g.stationarity),
                        solver_iters: pj.solution.report.newton_steps,
                        error: None,
                    }
                }
                Err(e) => SweepSample {
                    index,
                    rotation,
                    log_det: None,
                    det_nth_root: None,
                    grad_norm: None,
                    solver_iters: 0,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let values: Vec<f64> = samples.iter().filter_map(|s| s.log_det).map(|v| v / n as f64).collect();
    let solved = values.len();
    let mean = values.iter().sum::<f64>() / solved.max(1) as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / solved.max(1) as f64;
    let summary = SweepSummary {
        solved,
        failed: m - solved,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        std_dev: var.sqrt(),
    };
    Ok(FamilySweep { seed, dim: n, samples, summary })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Min,
    Max,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Min => -1.0,
            Direction::Max => 1.0,
        }
    }

    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Min => a < b,
            Direction::Max => a > b,
        }
    }
}

/// Best stationary rotation found by the multi-start search. Labelled "best
/// found": the search is local.
#[derive(Clone, Debug)]
pub struct ExtremalPosition {
    pub direction: Direction,
    pub rotation: OrthogonalMatrix,
    pub position: PositiveJohn,
    pub envelope_gradient_norm: f64,
    /// Genuine decomposition `Σ c_i x_i ⊗ y_i = I` of the normalised pairs.
    pub decomposition: Decomposition,
    /// Contact pairs used by `decomposition` (normalised coordinates).
    pub certificate_pairs: Vec<ContactPair>,
    pub starts_used: usize,
    pub converged_starts: usize,
    pub iterations: usize,
}

struct StartOutcome {
    rotation: Matrix,
    value: f64,
    stationarity: f64,
    converged: bool,
    iterations: usize,
}

/// Largest/smallest-slack set used for bundle directions.
const EPS_START: f64 = 1e-3;
const EPS_FLOOR: f64 = 1e-6;
const EPS_CEIL: f64 = 1e-1;

fn local_search(
    outer: &Body,
    inner: &Body,
    direction: Direction,
    seed: u64,
    start: usize,
    options: &FamilyOptions,
) -> Result<StartOutcome> {
    let n = outer.dim();
    let mut rng = stream_rng(seed, start as u64);
    let mut u = haar_orthogonal_from(n, &mut rng).into_matrix();
    let mut current = solve_at(outer, inner, &u, options)?;
    let mut eps = EPS_START;
    let mut step: f64 = 0.25;
    let mut perturbations = 0;
    let mut iterations = 0;
    let mut last_stationarity = f64::INFINITY;
    let translation = !current.problem.symmetric();

    while iterations < options.max_iterations {
        iterations += 1;
        let (g, stationarity) = match direction {
            Direction::Min => {
                let g = multiplier_gradient(&current.problem, &current.solution);
                let s = g.stationarity;
                (g.gradient, s)
            }
            Direction::Max => {
                let terms = constraint_terms(&current.problem, &current.solution);
                match min_norm_gradient(&terms, eps, translation) {
                    Some((g, _)) if g.decomposition_residual <= 1e-4 => {
                        let s = g.stationarity;
                        (g.gradient, s)
                    }
                    _ => {
                        eps = (eps * 10.0).min(EPS_CEIL);
                        continue;
                    }
                }
            }
        };
        last_stationarity = stationarity;
        if stationarity <= options.stationarity_tol {
            if direction == Direction::Min || eps <= EPS_FLOOR {
                return Ok(StartOutcome {
                    rotation: u,
                    value: current.solution.log_det,
                    stationarity,
                    converged: true,
                    iterations,
                });
            }
            eps = (eps / 10.0).max(EPS_FLOOR);
            continue;
        }
        let ascent = &g * direction.sign();
        let slope = ascent.norm_squared();
        let mut t = step.min(0.5 / ascent.norm());
        let mut accepted = None;
        for _ in 0..40 {
            let trial = matrix_exp(&(&ascent * t)) * &u;
            if let Ok(next) = solve_at(outer, inner, &trial, options) {
                let gain = direction.sign() * (next.solution.log_det - current.solution.log_det);
                if gain >= options.armijo * t * slope {
                    accepted = Some((trial, next));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, next)) => {
                u = reorthonormalize(&trial).into_matrix();
                current = next;
                step = (2.0 * t).min(1.0);
            }
            None if direction == Direction::Max && eps < EPS_CEIL => {
                eps = (eps * 10.0).min(EPS_CEIL);
            }
            None if perturbations < options.max_perturbations => {
                perturbations += 1;
                let s = skew(&Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal))) * 1e-3;
                u = reorthonormalize(&(matrix_exp(&s) * &u)).into_matrix();
                current = solve_at(outer, inner, &u, options)?;
                step = 0.25;
            }
            None => break,
        }
    }
    Ok(StartOutcome {
        rotation: u,
        value: current.solution.log_det,
        stationarity: last_stationarity,
        converged: false,
        iterations,
    })
}

/// Genuine decomposition of the normalised contact pairs, widening the
/// contact tolerance until the residual is acceptable.
pub fn genuine_certificate(position: &PositiveJohn) -> Result<(Decomposition, Vec<ContactPair>)> {
    let mut best: Option<(Decomposition, Vec<ContactPair>)> = None;
    for tol in [1e-7, 1e-6, 1e-5, 1e-4] {
        let contacts = extract_contact_pairs(&position.problem, &position.solution, tol);
        if contacts.is_empty() {
            continue;
        }
        let pairs: Vec<ContactPair> = contacts.iter().map(|c| c.pair.normalized(&position.solution.p)).collect();
        let d = solve_decomposition_weights(&pairs, DecompositionMode::Genuine, true)?;
        let done = d.residual() <= 1e-6;
        if best.as_ref().is_none_or(|(b, _)| d.residual() < b.residual()) {
            best = Some((d, pairs));
        }
        if done {
            break;
        }
    }
    best.ok_or(Error::NoContactPairs)
}

/// Multi-start Riemannian search for the rotation minimising (saddle-John)
/// or maximising (maximal volume) `det P*(U)`.
pub fn extremize_over_rotations(
    outer: &Body,
    inner: &Body,
    direction: Direction,
    seed: u64,
    options: &FamilyOptions,
) -> Result<ExtremalPosition> {
    let starts = options.starts.max(1);
    let outcomes: Vec<Result<StartOutcome>> =
        (0..starts).into_par_iter().map(|s| local_search(outer, inner, direction, seed, s, options)).collect();
    let mut best: Option<StartOutcome> = None;
    let mut best_any: Option<(f64, f64)> = None;
    let mut converged_starts = 0;
    let mut iterations = 0;
    for outcome in outcomes.into_iter().flatten() {
        iterations += outcome.iterations;
        if best_any.is_none_or(|(v, _)| direction.better(outcome.value, v)) {
            best_any = Some((outcome.value, outcome.stationarity));
        }
        if !outcome.converged {
            continue;
        }
        converged_starts += 1;
        if best.as_ref().is_none_or(|b| direction.better(outcome.value, b.value)) {
            best = Some(outcome);
        }
    }
    let Some(best) = best else {
        let (value, stationarity) = best_any.unwrap_or((f64::NAN, f64::INFINITY));
        return Err(Error::NonConvergence {
            message: format!("no start reached stationarity; best log det {value}"),
            residual: stationarity,
        });
    };
    let rotation = reorthonormalize(&best.rotation);
    let position = solve_at(outer, inner, rotation.matrix(), options)?;
    let (decomposition, certificate_pairs) = genuine_certificate(&position)?;
    Ok(ExtremalPosition {
        direction,
        rotation,
        position,
        envelope_gradient_norm: best.stationarity,
        decomposition,
        certificate_pairs,
        starts_used: starts,
        converged_starts,
        iterations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DilationReport {
    /// Centre `a` of the inclusion `K − a ⊂ −n(L_s − a)`.
    pub center: Vector,
    pub holds: bool,
    /// `min_u n·h_{−(L_s − a)}(u) − h_{K − a}(u)` over the checked directions.
    pub worst_margin: f64,
    pub directions: usize,
}

/// Checks `K − a ⊂ −n (L_s − a)` at a saddle position `L_s = P U L + z`,
/// where `a` is the recentering shift of the normalised genuine
/// decomposition mapped back by `P^{1/2}`.
pub fn check_dilation_inclusion(
    outer: &Body,
    placed_inner: &Body,
    p: &SpdMatrix,
    normalized_pairs: &[ContactPair],
    weights: &[f64],
) -> Result<DilationReport> {
    let n = outer.dim();
    let recentred = recenter_contact_pairs(normalized_pairs, weights)?;
    let a = p.sqrt().matrix() * &recentred.shift;
    let mut dirs = direction_net(n, DEFAULT_NET_SIZE);
    dirs.extend(outer.critical_directions());
    dirs.extend(placed_inner.critical_directions().into_iter().map(|u| -u));
    let margin = dirs
        .iter()
        .map(|u| {
            let lhs = outer.support(u) - a.dot(u);
            let rhs = n as f64 * (placed_inner.support(&-u) + a.dot(u));
            rhs - lhs
        })
        .fold(f64::INFINITY, f64::min);
    Ok(DilationReport { center: a, holds: margin >= -1e-6, worst_margin: margin, directions: dirs.len() })
}

/// Outcome of the ellipsoid transport formula at one rotation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransportResult {
    pub p: SpdMatrix,
    /// `‖P_statement − P_direct‖_F` for `A = U P₀ P_e⁻¹`.
    pub statement_residual: f64,
    /// `‖P_transposed − P_direct‖_F` for `A = Uᵀ P₀ P_e⁻¹`.
    pub transposed_residual: f64,
    pub orientation: TransportOrientation,
    pub direct_log_det: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportOrientation {
    Statement,
    Transposed,
}

/// Predicts `P*(U)` for an ellipsoid container `E = P_e B` from the base
/// solution `P₀ = P*(I)`: the positive factor of the generalised polar
/// decomposition `A = P (P_e⁻¹) V` with `A = U P₀ P_e⁻¹`. The transposed
/// orientation `A = Uᵀ P₀ P_e⁻¹` is evaluated too, both are compared with a
/// direct solve, and the matching one is returned.
pub fn ellipsoid_family_transport(
    container: &Body,
    inner: &Body,
    base: &SpdMatrix,
    rotation: &OrthogonalMatrix,
    options: &FamilyOptions,
) -> Result<TransportResult> {
    let Shape::Ellipsoid { shape, center } = container.shape() else {
        return Err(Error::InvalidBody("transport requires an ellipsoid container".into()));
    };
    if center.norm() > 1e-12 {
        return Err(Error::InvalidBody("transport requires a centred ellipsoid".into()));
    }
    let pe_inv = shape.inverse().into_matrix();
    let u = rotation.matrix();
    let (statement, _) = generalized_polar_decompose(&(u * base.matrix() * &pe_inv), &pe_inv)?;
    let (transposed, _) = generalized_polar_decompose(&(u.transpose() * base.matrix() * &pe_inv), &pe_inv)?;
    let direct = solve_at(container, inner, u, options)?;
    let statement_residual = (statement.matrix() - direct.solution.p.matrix()).norm();
    let transposed_residual = (transposed.matrix() - direct.solution.p.matrix()).norm();
    let tol = 1e-4;
    if statement_residual.min(transposed_residual) > tol {
        return Err(Error::NonConvergence {
            message: format!(
                "neither orientation matches the direct solve (statement {statement_residual:e}, transposed {transposed_residual:e})"
            ),
            residual: statement_residual.min(transposed_residual),
        });
    }
    // The orientations coincide when P₀ P_e⁻² P₀ is scalar; prefer the statement.
    let (p, orientation) = if statement_residual <= tol {
        (statement, TransportOrientation::Statement)
    } else {
        (transposed, TransportOrientation::Transposed)
    };
    Ok(TransportResult {
        p,
        statement_residual,
        transposed_residual,
        orientation,
        direct_log_det: direct.solution.log_det,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuantileRow {
    pub quantile: f64,
    pub log_det_over_n: f64,
    pub det_nth_root: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RotationStatistics {
    pub samples: usize,
    pub failed: usize,
    pub rows: Vec<QuantileRow>,
}

/// Empirical quantiles of `det P*(U)^{1/n}` over `m` Haar rotations.
pub fn random_rotation_statistics(
    outer: &Body,
    inner: &Body,
    m: usize,
    seed: u64,
    options: &FamilyOptions,
) -> Result<RotationStatistics> {
    if m < 10 {
        return Err(Error::InvalidBody("at least 10 samples are required".into()));
    }
    let sweep = sweep_family(outer, inner, m, seed, options)?;
    let mut values: Vec<f64> = sweep.samples.iter().filter_map(|s| s.log_det).map(|v| v / sweep.dim as f64).collect();
    values.sort_by(f64::total_cmp);
    let rows = [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0]
        .into_iter()
        .filter(|_| !values.is_empty())
        .map(|q| {
            let pos = q * (values.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let v = values[lo] + (values[hi] - values[lo]) * (pos - lo as f64);
            QuantileRow { quantile: q, log_det_over_n: v, det_nth_root: v.exp() }
        })
        .collect();
    Ok(RotationStatistics { samples: m, failed: sweep.summary.failed, rows })
}

#[cfg(test)]
mod tests;
