use crate::{Matrix, Vector};

/// Result of [`nonneg_least_squares`].
#[derive(Clone, Debug)]
pub struct NnlsSolution {
    pub weights: Vector,
    /// `‖A x − b‖₂`.
    pub residual: f64,
    pub iterations: usize,
}

/// Lawson–Hanson active-set solver for `min ‖A x − b‖₂` subject to `x ≥ 0`.
///
/// Terminates when every inactive dual component `Aᵀ(b − Ax)` is at most
/// `1e-12 · (1 + ‖A‖_F ‖b‖)`.
pub fn nonneg_least_squares(a: &Matrix, b: &Vector) -> NnlsSolution {
    let k = a.ncols();
    let tol = 1e-12 * (1.0 + a.norm() * b.norm());
    let mut x = Vector::zeros(k);
    let mut passive = vec![false; k];
    let max_outer = 3 * k + 10;
    let mut iterations = 0;

    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..k).filter(|&j| !passive[j]).max_by(|&i, &j| w[i].total_cmp(&w[j])).filter(|&j| w[j] > tol);
        let Some(j) = candidate else { break };
        passive[j] = true;
        iterations += 1;

        loop {
            let s = passive_solve(a, b, &passive);
            let blocked = (0..k).filter(|&i| passive[i] && s[i] <= 0.0);
            let alpha = blocked.map(|i| x[i] / (x[i] - s[i])).fold(f64::INFINITY, f64::min);
            if !alpha.is_finite() {
                x = s;
                break;
            }
            x += (s - &x) * alpha;
            for i in 0..k {
                if passive[i] && x[i] <= tol * 1e-3 {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    let residual = (a * &x - b).norm();
    NnlsSolution { weights: x, residual, iterations }
}

/// Unconstrained least squares on the passive columns, zero elsewhere.
fn passive_solve(a: &Matrix, b: &Vector, passive: &[bool]) -> Vector {
    let idx: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    let mut out = Vector::zeros(passive.len());
    if idx.is_empty() {
        return out;
    }
    let sub = a.select_columns(&idx);
    let svd = sub.svd(true, true);
    let eps = 1e-13 * svd.singular_values.max();
    let sol = svd.solve(b, eps).expect("U and Vᵀ were computed");
    for (pos, &i) in idx.iter().enumerate() {
        out[i] = sol[pos];
    }
    out
}
