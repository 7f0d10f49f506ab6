//! Derivative of `U ↦ log det P*(U)` along left-translated geodesics.

use serde::{Deserialize, Serialize};

use crate::linalg::{nonneg_least_squares, outer, skew, skew_coordinates, sym, sym_coordinates, SpdMatrix};
use crate::pjp::{Contact, ContactPair, PjpProblem, PositionSolution};
use crate::{Error, Matrix, Result, Vector};

/// One constraint's contribution: normalised pair and `(P y) ⊗ w`.
#[derive(Clone, Debug)]
pub(crate) struct Term {
    pub pair: ContactPair,
    pub rotation_term: Matrix,
    pub slack: f64,
}

impl Term {
    fn new(x: &Vector, y: &Vector, w: &Vector, p: &SpdMatrix, slack: f64) -> Self {
        let pair = ContactPair::new(x.clone(), y.clone()).normalized(p);
        Term { pair, rotation_term: outer(&(p.matrix() * y), w), slack }
    }
}

/// Terms for every constraint of a solved problem, in constraint order.
pub(crate) fn constraint_terms(problem: &PjpProblem, solution: &PositionSolution) -> Vec<Term> {
    let p = &solution.p;
    problem
        .constraint_contacts(p.matrix(), &solution.z)
        .into_iter()
        .zip(&solution.slacks)
        .map(|((x, y, w), &s)| Term::new(&x, &y, &w, p, s))
        .collect()
}

pub(crate) fn contact_terms(contacts: &[Contact], p: &SpdMatrix) -> Vec<Term> {
    contacts.iter().map(|c| Term::new(&c.pair.x, &c.pair.y, &c.inner_point, p, 0.0)).collect()
}

/// Riemannian gradient of `log det P*` at a solved rotation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeGradient {
    /// Antisymmetric `G` with `d/dt log det P*(e^{tA} U) = ⟨A, G⟩` at `t = 0`.
    pub gradient: Matrix,
    /// `‖skew(n M / tr M)‖_F` for `M = Σ c_i x_i ⊗ y_i` in normalised
    /// coordinates; zero exactly at stationary points.
    pub stationarity: f64,
    /// Residual of the weights in the symmetrized identity equations.
    pub decomposition_residual: f64,
}

pub(crate) fn gradient_from_terms(terms: &[Term], weights: &[f64], translation: bool) -> EnvelopeGradient {
    let n = terms[0].pair.x.len();
    let mut d = Matrix::zeros(n, n);
    let mut m = Matrix::zeros(n, n);
    let mut v = Vector::zeros(n);
    for (t, &c) in terms.iter().zip(weights) {
        d += &t.rotation_term * c;
        m += outer(&t.pair.x, &t.pair.y) * c;
        v += &t.pair.y * c;
    }
    let mut residual = (sym(&m) - Matrix::identity(n, n)).norm();
    if translation {
        residual = residual.max(v.norm());
    }
    let trace = m.trace();
    let stationarity = if trace > 0.0 { skew(&(&m * (n as f64 / trace))).norm() } else { f64::INFINITY };
    EnvelopeGradient { gradient: -skew(&d), stationarity, decomposition_residual: residual }
}

/// Envelope gradient from a set of contacts and decomposition weights
/// (symmetrized residual at most `1e-5`).
pub fn envelope_gradient(
    solution: &PositionSolution,
    contacts: &[Contact],
    weights: &[f64],
) -> Result<EnvelopeGradient> {
    if contacts.is_empty() {
        return Err(Error::NoContactPairs);
    }
    if contacts.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: contacts.len(), found: weights.len() });
    }
    let g = gradient_from_terms(&contact_terms(contacts, &solution.p), weights, true);
    if g.decomposition_residual > 1e-5 {
        return Err(Error::DecompositionResidual(g.decomposition_residual));
    }
    Ok(g)
}

/// Gradient using the barrier multipliers of every constraint.
pub(crate) fn multiplier_gradient(problem: &PjpProblem, solution: &PositionSolution) -> EnvelopeGradient {
    let terms = constraint_terms(problem, solution);
    gradient_from_terms(&terms, &solution.multipliers, !problem.symmetric())
}

/// Weight on the identity equations relative to the gradient rows.
const EQUATION_WEIGHT: f64 = 1e3;

/// Smallest-norm gradient over multipliers supported on constraints with
/// slack at most `eps`: a bundle estimate of the subdifferential's least
/// element.
pub(crate) fn min_norm_gradient(terms: &[Term], eps: f64, translation: bool) -> Option<(EnvelopeGradient, Vec<f64>)> {
    let chosen: Vec<usize> = (0..terms.len()).filter(|&i| terms[i].slack <= eps).collect();
    if chosen.is_empty() {
        return None;
    }
    let n = terms[0].pair.x.len();
    let head = n * (n + 1) / 2;
    let vec_rows = if translation { n } else { 0 };
    let skew_rows = n * (n - 1) / 2;
    let rows = head + vec_rows + skew_rows;
    let mut a = Matrix::zeros(rows, chosen.len());
    for (k, &i) in chosen.iter().enumerate() {
        let t = &terms[i];
        a.view_mut((0, k), (head, 1)).copy_from(&(sym_coordinates(&outer(&t.pair.x, &t.pair.y)) * EQUATION_WEIGHT));
        if translation {
            a.view_mut((head, k), (n, 1)).copy_from(&(&t.pair.y * EQUATION_WEIGHT));
        }
        a.view_mut((head + vec_rows, k), (skew_rows, 1)).copy_from(&skew_coordinates(&t.rotation_term));
    }
    let mut b = Vector::zeros(rows);
    b.rows_mut(0, head).copy_from(&(sym_coordinates(&Matrix::identity(n, n)) * EQUATION_WEIGHT));
    let sol = nonneg_least_squares(&a, &b);
    let mut weights = vec![0.0; terms.len()];
    for (k, &i) in chosen.iter().enumerate() {
        weights[i] = sol.weights[k];
    }
    Some((gradient_from_terms(terms, &weights, translation), weights))
}
