//! Dense linear algebra shared by every other module: positive-definite and
//! orthogonal newtypes, affine maps, matrix functions, Haar sampling and the
//! generalised polar decomposition.

mod nnls;

pub use nnls::{nonneg_least_squares, NnlsSolution};

use nalgebra::linalg::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result, Vector};

/// Relative asymmetry accepted when wrapping a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Frobenius bound on `UᵀU − I` for [`OrthogonalMatrix::new`].
pub const ORTHOGONALITY_TOL: f64 = 1e-10;
/// Looser bound used for factors returned by decompositions.
const FACTOR_ORTHOGONALITY_TOL: f64 = 1e-8;

/// A symmetric positive-definite matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct SpdMatrix(Matrix);

impl SpdMatrix {
    /// Wraps `m` after checking symmetry and positive-definiteness. The stored
    /// matrix is the exact symmetrisation of `m`.
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        let asym = (&m - m.transpose()).norm() / m.norm().max(f64::MIN_POSITIVE);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        let s = sym(&m);
        let min = SymmetricEigen::new(s.clone()).eigenvalues.min();
        if !(min > 0.0) {
            return Err(Error::NotPositiveDefinite { eigenvalue: min });
        }
        Ok(Self(s))
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n, n))
    }

    pub fn scaled_identity(n: usize, scale: f64) -> Result<Self> {
        Self::new(Matrix::identity(n, n) * scale)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn eigenvalues(&self) -> Vector {
        SymmetricEigen::new(self.0.clone()).eigenvalues
    }

    pub fn log_det(&self) -> f64 {
        self.eigenvalues().iter().map(|l| l.ln()).sum()
    }

    pub fn sqrt(&self) -> SpdMatrix {
        SpdMatrix(spectral_map(&self.0, f64::sqrt))
    }

    pub fn inv_sqrt(&self) -> SpdMatrix {
        SpdMatrix(spectral_map(&self.0, |l| 1.0 / l.sqrt()))
    }

    pub fn inverse(&self) -> SpdMatrix {
        SpdMatrix(spectral_map(&self.0, |l| 1.0 / l))
    }

    /// Spectral condition number.
    pub fn condition(&self) -> f64 {
        let ev = self.eigenvalues();
        ev.max() / ev.min()
    }
}

impl TryFrom<Matrix> for SpdMatrix {
    type Error = Error;
    fn try_from(m: Matrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<SpdMatrix> for Matrix {
    fn from(s: SpdMatrix) -> Matrix {
        s.0
    }
}

/// An orthogonal matrix, `UᵀU = I` up to a recorded residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct OrthogonalMatrix(Matrix);

impl OrthogonalMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        Self::with_tolerance(m, ORTHOGONALITY_TOL)
    }

    fn with_tolerance(m: Matrix, tol: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        let r = orthogonality_residual(&m);
        if r > tol {
            return Err(Error::NotOrthogonal(r));
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn transpose(&self) -> OrthogonalMatrix {
        Self(self.0.transpose())
    }

    pub fn residual(&self) -> f64 {
        orthogonality_residual(&self.0)
    }
}

impl TryFrom<Matrix> for OrthogonalMatrix {
    type Error = Error;
    fn try_from(m: Matrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<OrthogonalMatrix> for Matrix {
    fn from(u: OrthogonalMatrix) -> Matrix {
        u.0
    }
}

/// `x ↦ linear · x + shift`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub linear: Matrix,
    pub shift: Vector,
}

impl AffineMap {
    pub fn new(linear: Matrix, shift: Vector) -> Result<Self> {
        if !linear.is_square() || linear.nrows() != shift.len() {
            return Err(Error::DimensionMismatch { expected: linear.nrows(), found: shift.len() });
        }
        Ok(Self { linear, shift })
    }

    pub fn linear(linear: Matrix) -> Self {
        let n = linear.nrows();
        Self { linear, shift: Vector::zeros(n) }
    }

    pub fn translation(shift: Vector) -> Self {
        let n = shift.len();
        Self { linear: Matrix::identity(n, n), shift }
    }

    pub fn identity(n: usize) -> Self {
        Self::translation(Vector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        &self.linear * x + &self.shift
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        AffineMap { linear: &self.linear * &inner.linear, shift: &self.linear * &inner.shift + &self.shift }
    }

    pub fn inverse(&self) -> Result<AffineMap> {
        let inv =
            self.linear.clone().try_inverse().ok_or_else(|| Error::Singular("affine map is not invertible".into()))?;
        let shift = -(&inv * &self.shift);
        Ok(AffineMap { linear: inv, shift })
    }

    pub fn det(&self) -> f64 {
        self.linear.determinant()
    }

    /// Some `s` with `linear = s·I`, if the linear part is a positive scalar.
    pub fn positive_scalar(&self) -> Option<f64> {
        let n = self.dim();
        let s = self.linear[(0, 0)];
        let off = (&self.linear - Matrix::identity(n, n) * s).norm();
        (s > 0.0 && off <= 1e-14 * s * n as f64).then_some(s)
    }
}

/// `Q f(Λ) Qᵀ` for the symmetric part of `m`.
pub fn spectral_map(m: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let eig = SymmetricEigen::new(sym(m));
    let d = Matrix::from_diagonal(&eig.eigenvalues.map(f));
    sym(&(&eig.eigenvectors * d * eig.eigenvectors.transpose()))
}

/// Unique positive-definite square root.
pub fn spd_sqrt(s: &SpdMatrix) -> SpdMatrix {
    s.sqrt()
}

pub fn sym(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn skew(m: &Matrix) -> Matrix {
    (m - m.transpose()) * 0.5
}

/// `m − (tr m / n) I`.
pub fn traceless(m: &Matrix) -> Matrix {
    let n = m.nrows();
    m - Matrix::identity(n, n) * (m.trace() / n as f64)
}

/// `x ⊗ y = x yᵀ`.
pub fn outer(x: &Vector, y: &Vector) -> Matrix {
    x * y.transpose()
}

/// Frobenius inner product `tr(aᵀ b)`.
pub fn frobenius_dot(a: &Matrix, b: &Matrix) -> f64 {
    a.component_mul(b).sum()
}

/// `‖UᵀU − I‖_F`.
pub fn orthogonality_residual(u: &Matrix) -> f64 {
    let n = u.ncols();
    (u.transpose() * u - Matrix::identity(n, n)).norm()
}

/// Isometric coordinates of a symmetric matrix: the diagonal followed by
/// `√2 · m_ij` for `i < j`.
pub fn sym_coordinates(m: &Matrix) -> Vector {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    out.extend((0..n).map(|i| m[(i, i)]));
    for i in 0..n {
        for j in i + 1..n {
            out.push(std::f64::consts::SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)]));
        }
    }
    Vector::from_vec(out)
}

/// Isometric coordinates of the skew part: `√2 · skew(m)_ij` for `i < j`.
pub fn skew_coordinates(m: &Matrix) -> Vector {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(std::f64::consts::SQRT_2 * 0.5 * (m[(i, j)] - m[(j, i)]));
        }
    }
    Vector::from_vec(out)
}

/// Matrix exponential by scaling and squaring with a diagonal Padé [6/6]
/// approximant.
pub fn matrix_exp(a: &Matrix) -> Matrix {
    const C: [f64; 7] = [1.0, 0.5, 5.0 / 44.0, 1.0 / 66.0, 1.0 / 792.0, 1.0 / 15840.0, 1.0 / 665280.0];
    let n = a.nrows();
    let norm = a.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);
    let id = Matrix::identity(n, n);
    let mut even = &id * C[0];
    let mut odd = Matrix::zeros(n, n);
    let mut power = id.clone();
    for (k, c) in C.iter().enumerate().skip(1) {
        power = &power * &scaled;
        if k % 2 == 0 {
            even += &power * *c;
        } else {
            odd += &power * *c;
        }
    }
    let num = &even + &odd;
    let den = &even - &odd;
    let mut r = den.lu().solve(&num).expect("Padé denominator is invertible for ‖A‖ ≤ 1/2");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Haar-distributed orthogonal matrix from a seed.
pub fn haar_orthogonal(n: usize, seed: u64) -> OrthogonalMatrix {
    haar_orthogonal_from(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs
/// of `diag(R)` fixed positive.
pub fn haar_orthogonal_from<R: Rng + ?Sized>(n: usize, rng: &mut R) -> OrthogonalMatrix {
    let g = Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    OrthogonalMatrix(q)
}

/// Deterministic generator for the `stream`-th draw of a seeded experiment.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sylvester–Hadamard basis: an orthogonal matrix with all entries `±1/√n`.
/// Exists in this construction exactly for powers of two.
pub fn sylvester_hadamard_basis(n: usize) -> Result<OrthogonalMatrix> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::UnsupportedDimension {
            dim: n,
            reason: "Sylvester–Hadamard bases exist only for powers of two".into(),
        });
    }
    let mut h = Matrix::from_element(1, 1, 1.0);
    while h.nrows() < n {
        let k = h.nrows();
        let mut next = Matrix::zeros(2 * k, 2 * k);
        next.view_mut((0, 0), (k, k)).copy_from(&h);
        next.view_mut((0, k), (k, k)).copy_from(&h);
        next.view_mut((k, 0), (k, k)).copy_from(&h);
        next.view_mut((k, k), (k, k)).copy_from(&(-&h));
        h = next;
    }
    Ok(OrthogonalMatrix(h / (n as f64).sqrt()))
}

/// Generalised polar decomposition `A = P M U` with `P` positive-definite and
/// `U` orthogonal. With the polar factors `M = S V` and `S A = Q W`:
/// `P = S⁻¹ Q S⁻¹` (which equals `Y^{-1/2} (Y^{1/2} A Aᵀ Y^{1/2})^{1/2} Y^{-1/2}`
/// for `Y = M Mᵀ`) and `U = Vᵀ W`. Both factorizations go through SVDs, so
/// no Gram matrix squares the condition number.
pub fn generalized_polar_decompose(a: &Matrix, m: &Matrix) -> Result<(SpdMatrix, OrthogonalMatrix)> {
    let n = a.nrows();
    for x in [a, m] {
        if !x.is_square() || x.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, found: x.ncols() });
        }
    }
    for (name, x) in [("A", a), ("M", m)] {
        let sv = x.clone().singular_values();
        if !(sv.min() > 1e-14 * sv.max()) {
            return Err(Error::Singular(format!("{name} is singular (σ_min/σ_max = {:e})", sv.min() / sv.max())));
        }
    }
    let (s, s_inv, v) = svd_polar(m);
    let (q, _, w) = svd_polar(&(&s * a));
    let p = sym(&(&s_inv * q * &s_inv));
    let u = v.transpose() * w;
    let residual = orthogonality_residual(&u);
    if residual > FACTOR_ORTHOGONALITY_TOL {
        return Err(Error::Conditioning { residual });
    }
    Ok((SpdMatrix::new(p)?, OrthogonalMatrix::with_tolerance(u, FACTOR_ORTHOGONALITY_TOL)?))
}

/// `X = S V` from `X = W Σ Rᵀ`: `(S, S⁻¹, V) = (W Σ Wᵀ, W Σ⁻¹ Wᵀ, W Rᵀ)`.
fn svd_polar(x: &Matrix) -> (Matrix, Matrix, Matrix) {
    let svd = x.clone().svd(true, true);
    let (w, rt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let sigma = &svd.singular_values;
    let s = sym(&(&w * Matrix::from_diagonal(sigma) * w.transpose()));
    let s_inv = sym(&(&w * Matrix::from_diagonal(&sigma.map(|x| 1.0 / x)) * w.transpose()));
    (s, s_inv, &w * rt)
}

/// Classical right polar decomposition `A = P U`.
pub fn polar_decompose(a: &Matrix) -> Result<(SpdMatrix, OrthogonalMatrix)> {
    generalized_polar_decompose(a, &Matrix::identity(a.nrows(), a.nrows()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn gaussian(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn spd_rejects_indefinite_and_asymmetric() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(SpdMatrix::new(m), Err(Error::NotPositiveDefinite { .. })));
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(SpdMatrix::new(m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn sqrt_squares_back() {
        let g = gaussian(5, 1);
        let s = SpdMatrix::new(sym(&(&g * g.transpose())) + Matrix::identity(5, 5)).unwrap();
        let r = spd_sqrt(&s);
        assert!((r.matrix() * r.matrix() - s.matrix()).norm() < 1e-12 * s.matrix().norm());
        assert!(r.eigenvalues().min() > 0.0);
    }

    #[test]
    fn exp_of_rotation_generator() {
        let t = 0.7;
        let a = Matrix::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
        let e = matrix_exp(&a);
        let expected = Matrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        assert!((e - expected).norm() < 1e-14);
    }

    #[test]
    fn exp_of_large_diagonal() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, -2.0, 10.0]));
        let e = matrix_exp(&a);
        for (i, v) in [3.0f64, -2.0, 10.0].iter().enumerate() {
            assert_relative_eq!(e[(i, i)], v.exp(), max_relative = 1e-13);
        }
    }

    #[test]
    fn exp_matches_taylor_series() {
        let a = gaussian(4, 2) * 0.9;
        let mut term = Matrix::identity(4, 4);
        let mut sum = term.clone();
        for k in 1..60 {
            term = &term * &a / k as f64;
            sum += &term;
        }
        assert!((matrix_exp(&a) - sum.clone()).norm() < 1e-12 * sum.norm());
    }

    #[test]
    fn hadamard_entries_and_orthogonality() {
        for n in [1, 2, 4, 8, 16] {
            let h = sylvester_hadamard_basis(n).unwrap();
            assert!(h.residual() < 1e-12);
            let e = 1.0 / (n as f64).sqrt();
            assert!(h.matrix().iter().all(|x| (x.abs() - e).abs() < 1e-15));
        }
        assert!(sylvester_hadamard_basis(3).is_err());
        assert!(sylvester_hadamard_basis(12).is_err());
    }

    #[test]
    fn haar_is_orthogonal_and_seeded() {
        let a = haar_orthogonal(6, 42);
        let b = haar_orthogonal(6, 42);
        assert_eq!(a, b);
        assert!(a.residual() < 1e-12);
        assert_ne!(haar_orthogonal(6, 43), a);
    }

    #[test]
    fn haar_first_column_is_isotropic() {
        // E[u_11²] = 1/n for the Haar measure.
        let n = 3;
        let m = 4000;
        let mean: f64 =
            (0..m).map(|i| haar_orthogonal_from(n, &mut stream_rng(9, i)).matrix()[(0, 0)].powi(2)).sum::<f64>()
                / m as f64;
        assert!((mean - 1.0 / n as f64).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn polar_of_spd_times_rotation() {
        let g = gaussian(3, 3);
        let p = sym(&(&g * g.transpose())) + Matrix::identity(3, 3);
        let u = haar_orthogonal(3, 4);
        let a = &p * u.matrix();
        let (pp, uu) = polar_decompose(&a).unwrap();
        assert!((pp.matrix() - &p).norm() < 1e-11);
        assert!((uu.matrix() - u.matrix()).norm() < 1e-11);
    }

    #[test]
    fn generalized_polar_rejects_singular() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let m = Matrix::identity(2, 2);
        assert!(matches!(generalized_polar_decompose(&a, &m), Err(Error::Singular(_))));
        assert!(matches!(generalized_polar_decompose(&m, &a), Err(Error::Singular(_))));
    }

    #[test]
    fn coordinates_are_isometric() {
        let a = sym(&gaussian(4, 5));
        let b = sym(&gaussian(4, 6));
        assert_relative_eq!(sym_coordinates(&a).dot(&sym_coordinates(&b)), frobenius_dot(&a, &b), epsilon = 1e-12);
        let c = skew(&gaussian(4, 7));
        let d = skew(&gaussian(4, 8));
        assert_relative_eq!(skew_coordinates(&c).dot(&skew_coordinates(&d)), frobenius_dot(&c, &d), epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn generalized_polar_reconstructs(n in 1usize..6, seed in any::<u64>()) {
            let a = gaussian(n, seed) + Matrix::identity(n, n) * 0.5;
            let m = gaussian(n, seed ^ 0xabcdef) + Matrix::identity(n, n) * 0.5;
            if let Ok((p, u)) = generalized_polar_decompose(&a, &m) {
                let rec = p.matrix() * &m * u.matrix();
                prop_assert!((rec - &a).norm() <= 1e-9 * a.norm().max(1.0));
                prop_assert!(u.residual() <= 1e-8);
            }
        }

        #[test]
        fn exp_of_skew_is_orthogonal(n in 2usize..7, seed in any::<u64>(), scale in 0.0f64..20.0) {
            let a = skew(&gaussian(n, seed)) * scale;
            let e = matrix_exp(&a);
            prop_assert!(orthogonality_residual(&e) < 1e-10);
            prop_assert!((e.determinant() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn exp_trace_identity(n in 1usize..6, seed in any::<u64>()) {
            let a = gaussian(n, seed) * 0.5;
            let det = matrix_exp(&a).determinant();
            prop_assert!((det.ln() - a.trace()).abs() < 1e-10);
        }
    }
}
