//! Positive John position: the largest-volume `P L + z ⊂ K` with `P`
//! symmetric positive-definite, and its contact-pair certificate.

mod barrier;
mod contact;
mod problem;

pub use barrier::{BarrierOptions, PositionSolution, SolverReport};
pub use contact::{
    decomposition_from_weights, extract_contact_pairs, recenter_contact_pairs, solve_decomposition_weights,
    weighted_sum, Contact, ContactPair, Decomposition, DecompositionMode, Recentering, BOUNDARY_TOL,
};
pub use problem::{ConstraintFamily, ConstraintMode, PjpProblem, DEFAULT_APPROXIMATION_SIZE};

use serde::{Deserialize, Serialize};

use crate::bodies::{contains, Body, Containment};
use crate::linalg::{AffineMap, OrthogonalMatrix};
use crate::{Error, Matrix, Result, Vector};

#[derive(Clone, Debug, Default)]
pub struct PjpOptions {
    /// Rotation `U` applied to the inner body; identity when absent.
    pub rotation: Option<OrthogonalMatrix>,
    /// Force or forbid `z = 0`; automatic when absent.
    pub symmetric: Option<bool>,
    pub mode: ConstraintMode,
    pub barrier: BarrierOptions,
}

/// A solved positive John problem with its certificate in normalised
/// coordinates (`P = I`).
#[derive(Clone, Debug)]
pub struct PositiveJohn {
    pub problem: PjpProblem,
    pub solution: PositionSolution,
    pub contacts: Vec<Contact>,
    /// Contact pairs mapped by `x ↦ P^{-1/2} x`, `y ↦ P^{1/2} y`.
    pub normalized_pairs: Vec<ContactPair>,
    /// Symmetrized decomposition of the normalised pairs.
    pub decomposition: Decomposition,
}

/// Solves for the positive John position of `inner` in `outer`.
pub fn positive_john(outer: &Body, inner: &Body, options: &PjpOptions) -> Result<PositiveJohn> {
    let problem = PjpProblem::new(outer, inner, options.rotation.as_ref(), options.symmetric, options.mode)?;
    let solution = problem.solve(&options.barrier)?;
    certify(problem, solution, options.barrier.active_tol)
}

fn certify(problem: PjpProblem, solution: PositionSolution, tol: f64) -> Result<PositiveJohn> {
    let contacts = extract_contact_pairs(&problem, &solution, tol);
    let normalized_pairs: Vec<ContactPair> = contacts.iter().map(|c| c.pair.normalized(&solution.p)).collect();
    let decomposition = solve_decomposition_weights(&normalized_pairs, DecompositionMode::Symmetrized, true)?;
    Ok(PositiveJohn { problem, solution, contacts, normalized_pairs, decomposition })
}

impl PositiveJohn {
    pub fn pairs(&self) -> Vec<ContactPair> {
        self.contacts.iter().map(|c| c.pair.clone()).collect()
    }

    /// The affine map `x ↦ P U x + z` placing the inner body.
    pub fn placement(&self) -> AffineMap {
        AffineMap { linear: self.solution.p.matrix() * self.problem.rotation(), shift: self.solution.z.clone() }
    }
}

/// `(P^{-1/2} K, P^{1/2} U L + P^{-1/2} z)`: the same configuration with the
/// inner body in positive John position.
pub fn normalize_position(
    outer: &Body,
    inner: &Body,
    rotation: &Matrix,
    solution: &PositionSolution,
) -> Result<(Body, Body)> {
    let inv_half = solution.p.inv_sqrt().into_matrix();
    let half = solution.p.sqrt().into_matrix();
    let k = outer.apply_affine(&AffineMap::linear(inv_half.clone()))?;
    let l = inner.apply_affine(&AffineMap { linear: half * rotation, shift: inv_half * &solution.z })?;
    Ok((k, l))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verification {
    pub holds: bool,
    pub containment: Containment,
    pub contact_count: usize,
    pub decomposition: Option<Decomposition>,
    pub reason: Option<String>,
}

/// Checks that `inner` is already in positive John position inside `outer`:
/// containment plus a symmetrized decomposition of the identity over the
/// contact pairs at `(P, z) = (I, 0)`.
pub fn verify_positive_john(outer: &Body, inner: &Body, tol: f64) -> Result<Verification> {
    let containment = contains(outer, inner, tol)?;
    let fail = |containment: Containment, count, decomposition, reason: &str| Verification {
        holds: false,
        containment,
        contact_count: count,
        decomposition,
        reason: Some(reason.to_string()),
    };
    if !containment.holds {
        return Ok(fail(containment, 0, None, "inner body is not contained in the outer body"));
    }
    let problem = PjpProblem::new(outer, inner, None, Some(false), ConstraintMode::Auto)?;
    let n = outer.dim();
    let p = Matrix::identity(n, n);
    let z = Vector::zeros(n);
    let slacks: Vec<f64> = problem.constraints.iter().map(|c| 1.0 - problem.value(c, &p, &z)).collect();
    let solution = PositionSolution {
        p: crate::linalg::SpdMatrix::identity(n),
        z,
        log_det: 0.0,
        multipliers: vec![0.0; slacks.len()],
        active: (0..slacks.len()).filter(|&i| slacks[i] <= tol).collect(),
        slacks,
        report: SolverReport { newton_steps: 0, stages: 0, final_mu: 0.0, duality_gap: 0.0, kkt_residual: 0.0 },
    };
    let contacts = extract_contact_pairs(&problem, &solution, tol);
    if contacts.is_empty() {
        return Ok(fail(containment, 0, None, &Error::NoContactPairs.to_string()));
    }
    let pairs: Vec<ContactPair> = contacts.iter().map(|c| c.pair.clone()).collect();
    let d = solve_decomposition_weights(&pairs, DecompositionMode::Symmetrized, true)?;
    if d.residual() > tol {
        let count = contacts.len();
        return Ok(fail(containment, count, Some(d), "contact pairs do not decompose the identity"));
    }
    Ok(Verification { holds: true, containment, contact_count: contacts.len(), decomposition: Some(d), reason: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bodies::LpExponent;
    use crate::linalg::{haar_orthogonal, SpdMatrix};

    fn scaled(body: &Body, s: f64) -> Body {
        let n = body.dim();
        body.apply_affine(&AffineMap::linear(Matrix::identity(n, n) * s)).unwrap()
    }

    #[test]
    fn cube_in_cross_polytope() {
        for n in 2..=4 {
            let res = positive_john(&Body::cross_polytope(n), &Body::cube(n), &PjpOptions::default()).unwrap();
            let expected = Matrix::identity(n, n) / n as f64;
            assert!((res.solution.p.matrix() - &expected).norm() < 1e-6, "n={n} P={}", res.solution.p.matrix());
            assert!(res.solution.z.norm() < 1e-6);
            assert!(res.decomposition.residual() < 1e-6);
            assert!((res.decomposition.weight_sum - n as f64).abs() < 1e-5);
            assert!(res.contacts.iter().all(|c| c.on_boundary()));
        }
    }

    #[test]
    fn barrier_multipliers_are_a_second_certificate() {
        // Multipliers μ/slack, read off the solver independently of the
        // least-squares weights, decompose the identity up to O(μ).
        let res = positive_john(
            &Body::cube(3),
            &Body::euclidean_ball(3),
            &PjpOptions { symmetric: Some(false), ..Default::default() },
        )
        .unwrap();
        let p = &res.solution.p;
        let mut pairs = Vec::new();
        let mut weights = Vec::new();
        for c in res.problem.constraints.iter().zip(&res.solution.multipliers).enumerate() {
            let (i, (constraint, &lambda)) = c;
            let _ = i;
            let (x, y, _) = res.problem.contact(constraint, p.matrix(), &res.solution.z);
            pairs.push(ContactPair::new(x, y).normalized(p));
            weights.push(lambda);
        }
        let d = decomposition_from_weights(&pairs, weights, DecompositionMode::Symmetrized, true);
        assert!(d.residual() < 1e-6, "{d:?}");
        assert!((res.solution.p.matrix() - Matrix::identity(3, 3)).norm() < 1e-6);
    }

    #[test]
    fn ball_in_ellipsoid_is_the_ellipsoid() {
        let shape = SpdMatrix::new(Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let e = Body::ellipsoid(shape.clone(), Vector::zeros(2)).unwrap();
        let cube = Body::cube(2);
        // P·cube ⊂ E is maximised by a P with det P = det S / 2 (the John
        // ellipsoid of the square is the inscribed disk scaled by √2).
        let res = positive_john(&e, &cube, &PjpOptions::default()).unwrap();
        assert!((res.solution.log_det - (shape.log_det() - 2f64.ln())).abs() < 1e-6);
    }

    #[test]
    fn translation_is_found() {
        // K = [-1, 3] × [-1, 1] contains the square [-1, 1]² shifted by (1, 0).
        let a = [
            Vector::from_vec(vec![1.0, 0.0]),
            Vector::from_vec(vec![-1.0, 0.0]),
            Vector::from_vec(vec![0.0, 1.0]),
            Vector::from_vec(vec![0.0, -1.0]),
        ];
        let k = Body::h_polytope(&a, &[3.0, 1.0, 1.0, 1.0]).unwrap();
        let l = scaled(&Body::cube(2), 0.5);
        let res = positive_john(&k, &l, &PjpOptions::default()).unwrap();
        assert!((res.solution.log_det - (4.0f64 * 2.0).ln()).abs() < 1e-6);
        assert!((res.solution.z[1]).abs() < 1e-6);
        assert!(res.decomposition.residual() < 1e-6);
    }

    #[test]
    fn verification() {
        let n = 3;
        let k = Body::cross_polytope(n);
        let l = scaled(&Body::cube(n), 1.0 / n as f64);
        let v = verify_positive_john(&k, &l, 1e-9).unwrap();
        assert!(v.holds, "{v:?}");
        let small = scaled(&Body::cube(n), 0.5 / n as f64);
        let v = verify_positive_john(&k, &small, 1e-9).unwrap();
        assert!(!v.holds);
        assert_eq!(v.reason.as_deref(), Some("no contact pairs found"));
        let big = scaled(&Body::cube(n), 2.0 / n as f64);
        assert!(!verify_positive_john(&k, &big, 1e-9).unwrap().holds);
    }

    #[test]
    fn positions_are_rotation_equivariant_for_balls() {
        let ball = Body::euclidean_ball(3);
        let l4 = Body::lp_ball(LpExponent::Four, 3, 1.0).unwrap();
        let u = haar_orthogonal(3, 11);
        let a = positive_john(&ball, &Body::cube(3), &PjpOptions::default()).unwrap();
        let b = positive_john(&ball, &Body::cube(3), &PjpOptions { rotation: Some(u), ..Default::default() }).unwrap();
        assert!((a.solution.log_det - b.solution.log_det).abs() < 1e-6);
        assert!((a.solution.log_det - 3.0 * (1.0 / 3f64.sqrt()).ln()).abs() < 1e-6);
        let c = positive_john(&Body::cube(3), &l4, &PjpOptions::default()).unwrap();
        assert!(c.problem.approximation().is_some());
        assert!(c.solution.log_det > -1e-6);
    }

    #[test]
    fn normalized_position_is_in_positive_john_position() {
        let shape = SpdMatrix::new(Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0]))).unwrap();
        let e = Body::ellipsoid(shape, Vector::zeros(2)).unwrap();
        let u = haar_orthogonal(2, 3);
        let res = positive_john(&e, &Body::cross_polytope(2), &PjpOptions { rotation: Some(u), ..Default::default() })
            .unwrap();
        let (k, l) = normalize_position(&e, &Body::cross_polytope(2), res.problem.rotation(), &res.solution).unwrap();
        let v = verify_positive_john(&k, &l, 1e-6).unwrap();
        assert!(v.holds, "{v:?}");
    }
}
