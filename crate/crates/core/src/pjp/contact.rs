//! Contact pairs, identity decompositions and recentering.

use serde::{Deserialize, Serialize};

use super::barrier::PositionSolution;
use super::problem::PjpProblem;
use crate::linalg::{nonneg_least_squares, outer, sym, sym_coordinates, SpdMatrix};
use crate::{Error, Matrix, Result, Vector};

/// `x ∈ ∂K ∩ ∂L'` with `y` in the common boundary of the polars and
/// `⟨x, y⟩ = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactPair {
    pub x: Vector,
    pub y: Vector,
}

impl ContactPair {
    pub fn new(x: Vector, y: Vector) -> Self {
        Self { x, y }
    }

    /// Image under `x ↦ P^{-1/2} x`, `y ↦ P^{1/2} y`; preserves `⟨x, y⟩`.
    pub fn normalized(&self, p: &SpdMatrix) -> ContactPair {
        ContactPair { x: p.inv_sqrt().matrix() * &self.x, y: p.sqrt().matrix() * &self.y }
    }
}

/// A contact pair located by the solver, with its provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Contact {
    pub pair: ContactPair,
    /// `w ∈ ∂(U L)` with `x = P w + z`.
    pub inner_point: Vector,
    pub constraint: usize,
    /// Added as the negative of a halved constraint.
    pub mirrored: bool,
    /// Largest deviation among the boundary conditions
    /// `⟨x,y⟩ = 1`, `x ∈ ∂K`, `h_K(y) = 1`, `h_{L'}(y) = 1`.
    pub boundary_defect: f64,
}

/// Tolerance on [`Contact::boundary_defect`].
pub const BOUNDARY_TOL: f64 = 1e-6;

impl Contact {
    pub fn on_boundary(&self) -> bool {
        self.boundary_defect <= BOUNDARY_TOL
    }
}

/// Contacts of constraints whose slack is at most `tol`; halved symmetric
/// problems are completed with the mirrored pairs.
pub fn extract_contact_pairs(problem: &PjpProblem, solution: &PositionSolution, tol: f64) -> Vec<Contact> {
    let p = solution.p.matrix();
    let z = &solution.z;
    let mut out = Vec::new();
    for (i, c) in problem.constraints.iter().enumerate() {
        if solution.slacks[i] > tol {
            continue;
        }
        let (x, y, w) = problem.contact(c, p, z);
        let defect = [
            (x.dot(&y) - 1.0).abs(),
            problem.outer.level(&x).abs(),
            (problem.outer.support(&y) - 1.0).abs(),
            (problem.rotated_inner_support(&(p * &y)) + y.dot(z) - 1.0).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        if problem.mirrored {
            out.push(Contact {
                pair: ContactPair::new(-&x, -&y),
                inner_point: -&w,
                constraint: i,
                mirrored: true,
                boundary_defect: defect,
            });
        }
        out.push(Contact {
            pair: ContactPair::new(x, y),
            inner_point: w,
            constraint: i,
            mirrored: false,
            boundary_defect: defect,
        });
    }
    out
}

/// Which identity is being decomposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecompositionMode {
    /// `Σ c_i (x_i ⊗ y_i)_sym = I`.
    Symmetrized,
    /// `Σ c_i x_i ⊗ y_i = I`.
    Genuine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub mode: DecompositionMode,
    pub weights: Vec<f64>,
    /// `‖Σ c_i x_i ⊗ y_i − I‖_F`, symmetrised in symmetrized mode.
    pub matrix_residual: f64,
    /// `‖Σ c_i y_i‖`, or zero when the translation rows were not imposed.
    pub vector_residual: f64,
    pub weight_sum: f64,
}

impl Decomposition {
    pub fn residual(&self) -> f64 {
        self.matrix_residual.max(self.vector_residual)
    }
}

/// `Σ c_i x_i ⊗ y_i`.
pub fn weighted_sum(pairs: &[ContactPair], weights: &[f64]) -> Matrix {
    let n = pairs.first().map_or(0, |p| p.x.len());
    pairs.iter().zip(weights).fold(Matrix::zeros(n, n), |acc, (p, &c)| acc + outer(&p.x, &p.y) * c)
}

/// Nonnegative weights for the identity decomposition, by nonnegative least
/// squares. With `translation`, `Σ c_i y_i = 0` is imposed as well.
pub fn solve_decomposition_weights(
    pairs: &[ContactPair],
    mode: DecompositionMode,
    translation: bool,
) -> Result<Decomposition> {
    let Some(first) = pairs.first() else { return Err(Error::NoContactPairs) };
    let n = first.x.len();
    let identity = Matrix::identity(n, n);
    let encode = |m: &Matrix| -> Vector {
        match mode {
            DecompositionMode::Symmetrized => sym_coordinates(m),
            DecompositionMode::Genuine => Vector::from_column_slice(m.as_slice()),
        }
    };
    let head = encode(&identity).len();
    let rows = head + if translation { n } else { 0 };
    let mut a = Matrix::zeros(rows, pairs.len());
    for (k, pair) in pairs.iter().enumerate() {
        a.view_mut((0, k), (head, 1)).copy_from(&encode(&outer(&pair.x, &pair.y)));
        if translation {
            a.view_mut((head, k), (n, 1)).copy_from(&pair.y);
        }
    }
    let mut b = Vector::zeros(rows);
    b.rows_mut(0, head).copy_from(&encode(&identity));
    let sol = nonneg_least_squares(&a, &b);
    Ok(decomposition_from_weights(pairs, sol.weights.as_slice().to_vec(), mode, translation))
}

/// Residuals of given weights.
pub fn decomposition_from_weights(
    pairs: &[ContactPair],
    weights: Vec<f64>,
    mode: DecompositionMode,
    translation: bool,
) -> Decomposition {
    let n = pairs.first().map_or(0, |p| p.x.len());
    let m = weighted_sum(pairs, &weights);
    let m = match mode {
        DecompositionMode::Symmetrized => sym(&m),
        DecompositionMode::Genuine => m,
    };
    let matrix_residual = (m - Matrix::identity(n, n)).norm();
    let vector_residual = if translation {
        pairs.iter().zip(&weights).fold(Vector::zeros(n), |acc, (p, &c)| acc + &p.y * c).norm()
    } else {
        0.0
    };
    let weight_sum = weights.iter().sum();
    Decomposition { mode, weights, matrix_residual, vector_residual, weight_sum }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Recentering {
    /// The shift `a`; the recentred pairs are `(x_i − a, y_i / (1 − ⟨y_i, a⟩))`.
    pub shift: Vector,
    pub pairs: Vec<ContactPair>,
    pub weights: Vec<f64>,
}

/// Moves a genuine decomposition `Σ c x ⊗ y = I`, `Σ c y = 0` to one that also
/// satisfies `Σ c' x' = 0`, using `a = Σ c_i x_i / (n + 1)`.
pub fn recenter_contact_pairs(pairs: &[ContactPair], weights: &[f64]) -> Result<Recentering> {
    let Some(first) = pairs.first() else { return Err(Error::NoContactPairs) };
    let n = first.x.len();
    if weights.len() != pairs.len() {
        return Err(Error::DimensionMismatch { expected: pairs.len(), found: weights.len() });
    }
    let shift = pairs.iter().zip(weights).fold(Vector::zeros(n), |acc, (p, &c)| acc + &p.x * c) / (n as f64 + 1.0);
    let mut out_pairs = Vec::with_capacity(pairs.len());
    let mut out_weights = Vec::with_capacity(pairs.len());
    for (i, (p, &c)) in pairs.iter().zip(weights).enumerate() {
        let denom = 1.0 - p.y.dot(&shift);
        if !(denom > 0.0) {
            return Err(Error::Recentering(format!("pair {i} has ⟨y, a⟩ = {} ≥ 1", 1.0 - denom)));
        }
        out_pairs.push(ContactPair::new(&p.x - &shift, &p.y / denom));
        out_weights.push(c * denom);
    }
    Ok(Recentering { shift, pairs: out_pairs, weights: out_weights })
}
