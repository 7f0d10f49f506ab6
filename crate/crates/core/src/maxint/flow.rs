//! Gradient flow of `vol(K ∩ (AL + z))` on `SL_n ⋉ Rⁿ`.

use serde::{Deserialize, Serialize};

use super::{
    anisotropy, boundary_integrals, intersection_volume, IntersectionMethod, IntersectionResult, VolumeMethod,
};
use crate::bodies::{Body, LpExponent, Shape};
use crate::linalg::{matrix_exp, spectral_map, sym, traceless, AffineMap};
use crate::{Error, Matrix, Result, Vector};

/// Maximal distance, relative to the body scale, at which the flow tries to
/// map `L` exactly onto `K`.
const POLISH_RADIUS: f64 = 0.05;
const POLISH_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowMode {
    /// Steps `e^{ηA}` with `A` traceless.
    FullAffine,
    /// Steps `e^{ηA}` with `A` symmetric traceless: positive-definite with
    /// unit determinant.
    Positive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowOptions {
    /// Bound on the flux norm at convergence.
    pub tol: f64,
    pub anisotropy_tol: f64,
    pub max_iter: usize,
    /// Sufficient-increase constant of the line search.
    pub armijo: f64,
    pub backtrack: f64,
    /// Abort once the accumulated map has condition number above this.
    pub cond_max: f64,
    pub method: VolumeMethod,
    /// Try the exact map onto `K` once `L` is close to a congruent copy.
    pub polish: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            tol: 1e-6,
            anisotropy_tol: 1e-5,
            max_iter: 500,
            armijo: 1e-4,
            backtrack: 0.5,
            cond_max: 1e6,
            method: VolumeMethod::Auto,
            polish: true,
        }
    }
}

/// One iterate; `L_k = linear·L + shift`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowStep {
    pub step: usize,
    pub volume: f64,
    pub flux_norm: f64,
    pub anisotropy: f64,
    /// Step length that produced this iterate; zero for the start.
    pub step_size: f64,
    /// `|det − 1|` of the accumulated map before renormalisation.
    pub det_drift: f64,
    pub linear: Matrix,
    pub shift: Vector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowStatus {
    Converged,
    MaxIterations,
    /// No step length gave sufficient increase.
    Stalled,
    /// Monte Carlo noise exceeds the attainable improvement.
    NoiseLimited,
    IllConditioned,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowTrace {
    pub mode: FlowMode,
    pub method: IntersectionMethod,
    pub steps: Vec<FlowStep>,
    pub status: FlowStatus,
    /// Iterate produced by mapping `L` exactly onto `K`, if any.
    pub polished_at: Option<usize>,
}

impl FlowTrace {
    pub fn last(&self) -> &FlowStep {
        self.steps.last().expect("a trace holds the starting point")
    }

    pub fn final_map(&self) -> AffineMap {
        let s = self.last();
        AffineMap { linear: s.linear.clone(), shift: s.shift.clone() }
    }

    pub fn converged(&self) -> bool {
        self.status == FlowStatus::Converged
    }

    /// Volumes of accepted iterates never decrease.
    pub fn monotone(&self) -> bool {
        self.steps.windows(2).all(|w| w[1].volume >= w[0].volume)
    }
}

struct State {
    map: AffineMap,
    volume: IntersectionResult,
}

fn evaluate(k: &Body, l0: &Body, map: AffineMap, method: VolumeMethod) -> Result<State> {
    let volume = intersection_volume(k, &l0.apply_affine(&map)?, method)?;
    Ok(State { map, volume })
}

/// Divides out the determinant; returns the drift it corrected.
fn renormalize(linear: &mut Matrix) -> Result<f64> {
    let n = linear.nrows();
    let det = linear.determinant();
    if !(det > 0.0) {
        return Err(Error::Singular("flow map lost orientation".into()));
    }
    *linear /= det.powf(1.0 / n as f64);
    Ok((det - 1.0).abs())
}

fn condition(linear: &Matrix) -> f64 {
    let sv = linear.clone().svd(false, false).singular_values;
    sv.max() / sv.min()
}

/// Ascends `vol(K ∩ (AL + z))` from `A = I, z = 0`.
///
/// Each step moves along `u = flux` and `A* = traceless(moment)` (or its
/// symmetric part in positive mode): `L ← e^{ηA*}L + ηu` with Armijo
/// backtracking from `η = 1/(1 + ‖A*‖)`. The volume has a kink where the
/// boundaries coincide, so an equal-volume maximiser is approached but
/// not reached by gradient steps; once `L` is within a small distance of an
/// affine copy of `K` in the admissible group, the flow tries that copy,
/// which attains the bound `vol(K ∩ L) ≤ min(vol K, vol L)`.
pub fn maxint_flow(k: &Body, l: &Body, mode: FlowMode, opts: &FlowOptions) -> Result<FlowTrace> {
    if k.dim() != l.dim() {
        return Err(Error::DimensionMismatch { expected: k.dim(), found: l.dim() });
    }
    let n = k.dim();
    let mut state = evaluate(k, l, AffineMap::identity(n), opts.method)?;
    if !(state.volume.volume > 0.0) {
        return Err(Error::InfeasibleStart("initial intersection volume is zero".into()));
    }
    let mc = state.volume.method == IntersectionMethod::MonteCarlo;
    let mut trace = FlowTrace {
        mode,
        method: state.volume.method,
        steps: Vec::new(),
        status: FlowStatus::MaxIterations,
        polished_at: None,
    };
    let (mut step_size, mut det_drift) = (0.0, 0.0);
    for step in 0..=opts.max_iter {
        let current = l.apply_affine(&state.map)?;
        let ints = boundary_integrals(k, &current)?;
        let direction = match mode {
            FlowMode::FullAffine => traceless(&ints.moment),
            FlowMode::Positive => traceless(&sym(&ints.moment)),
        };
        let aniso = match mode {
            FlowMode::FullAffine => anisotropy(&ints.moment),
            FlowMode::Positive => anisotropy(&sym(&ints.moment)),
        };
        let flux_norm = ints.flux.norm();
        trace.steps.push(FlowStep {
            step,
            volume: state.volume.volume,
            flux_norm,
            anisotropy: aniso,
            step_size,
            det_drift,
            linear: state.map.linear.clone(),
            shift: state.map.shift.clone(),
        });
        if flux_norm <= opts.tol && aniso <= opts.anisotropy_tol {
            trace.status = FlowStatus::Converged;
            return Ok(trace);
        }
        if step == opts.max_iter {
            break;
        }

        if opts.polish && trace.polished_at.is_none() {
            if let Some(onto) = congruence_polish(k, &current, mode) {
                let mut linear = &onto.linear * &state.map.linear;
                let drift = renormalize(&mut linear)?;
                let shift = onto.apply(&state.map.shift);
                let candidate = evaluate(k, l, AffineMap { linear, shift }, opts.method)?;
                if candidate.volume.volume >= state.volume.volume {
                    step_size = 0.0;
                    det_drift = drift;
                    state = candidate;
                    trace.polished_at = Some(step + 1);
                    continue;
                }
            }
        }

        let rate = direction.norm_squared() + flux_norm * flux_norm;
        let mut eta = 1.0 / (1.0 + direction.norm());
        let accepted = loop {
            if eta < 1e-14 {
                break None;
            }
            let exp = matrix_exp(&(&direction * eta));
            let mut linear = &exp * &state.map.linear;
            let drift = renormalize(&mut linear)?;
            let shift = &exp * &state.map.shift + &ints.flux * eta;
            let candidate = evaluate(k, l, AffineMap { linear, shift }, opts.method)?;
            let gain = candidate.volume.volume - state.volume.volume;
            let noise = 2.0 * (candidate.volume.stderr + state.volume.stderr);
            if gain >= opts.armijo * eta * rate && gain > noise {
                break Some((candidate, drift));
            }
            eta *= opts.backtrack;
        };
        match accepted {
            Some((candidate, drift)) => {
                if condition(&candidate.map.linear) > opts.cond_max {
                    trace.status = FlowStatus::IllConditioned;
                    return Ok(trace);
                }
                state = candidate;
                step_size = eta;
                det_drift = drift;
            }
            None => {
                trace.status = if mc { FlowStatus::NoiseLimited } else { FlowStatus::Stalled };
                return Ok(trace);
            }
        }
    }
    trace.status = FlowStatus::MaxIterations;
    Ok(trace)
}

/// `(shape, center)` of an ellipsoid or Euclidean ball.
fn ellipsoid_parts(b: &Body) -> Option<(Matrix, Vector)> {
    match b.shape() {
        Shape::Ellipsoid { shape, center } => Some((shape.matrix().clone(), center.clone())),
        Shape::LpBall { p: LpExponent::Two, radius, .. } => {
            Some((Matrix::identity(b.dim(), b.dim()) * *radius, Vector::zeros(b.dim())))
        }
        _ => None,
    }
}

/// An admissible map `T` close to the identity with `T(L) = K`, if one exists.
fn congruence_polish(k: &Body, l: &Body, mode: FlowMode) -> Option<AffineMap> {
    let n = k.dim();
    let scale = k.circumradius().max(1.0);
    let map = if let (Some(kp), Some(lp)) = (k.polytope(), l.polytope()) {
        let (kv, lv) = (kp.vertices(), lp.vertices());
        if kv.len() != lv.len() {
            return None;
        }
        let mut used = vec![false; kv.len()];
        let mut pairs = Vec::with_capacity(lv.len());
        for v in lv {
            let (j, dist) =
                kv.iter().enumerate().map(|(j, w)| (j, (v - w).norm())).min_by(|a, b| a.1.total_cmp(&b.1))?;
            if used[j] || dist > POLISH_RADIUS * scale {
                return None;
            }
            used[j] = true;
            pairs.push((v, &kv[j]));
        }
        let x = Matrix::from_fn(pairs.len(), n + 1, |i, j| if j < n { pairs[i].0[j] } else { 1.0 });
        let y = Matrix::from_fn(pairs.len(), n, |i, j| pairs[i].1[j]);
        let beta = x.svd(true, true).solve(&y, 1e-12).ok()?;
        let linear = beta.rows(0, n).transpose();
        let shift = beta.row(n).transpose();
        let map = AffineMap { linear, shift };
        let residual = pairs.iter().map(|(v, w)| (map.apply(v) - *w).norm()).fold(0.0, f64::max);
        if residual > POLISH_TOL * scale {
            return None;
        }
        map
    } else {
        let (sk, ck) = ellipsoid_parts(k)?;
        let (sl, cl) = ellipsoid_parts(l)?;
        // The positive-definite M with M S_L² M = S_K².
        let sl_inv = sl.clone().try_inverse()?;
        let middle = spectral_map(&(&sl * &sk * &sk * &sl), f64::sqrt);
        let linear = &sl_inv * middle * &sl_inv;
        let shift = &ck - &linear * &cl;
        if (&linear - Matrix::identity(n, n)).norm() > POLISH_RADIUS || shift.norm() > POLISH_RADIUS * scale {
            return None;
        }
        AffineMap { linear, shift }
    };
    if (map.linear.determinant() - 1.0).abs() > POLISH_TOL {
        return None;
    }
    if mode == FlowMode::Positive {
        let asym = (&map.linear - map.linear.transpose()).norm();
        if asym > POLISH_TOL || sym(&map.linear).symmetric_eigenvalues().min() <= 0.0 {
            return None;
        }
    }
    Some(map)
}
