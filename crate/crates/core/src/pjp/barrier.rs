//! Log-barrier interior-point method for `min −log det P` subject to
//! `f_i(P, z) ≤ 1`.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use super::problem::PjpProblem;
use crate::linalg::SpdMatrix;
use crate::{Error, Matrix, Result, Vector};

/// Barrier schedule: `μ` starts at `mu_start` and is divided by `mu_factor`
/// until it falls below `mu_final`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierOptions {
    pub mu_start: f64,
    pub mu_factor: f64,
    pub mu_final: f64,
    /// Newton decrement `λ²/(2μ)` at which an intermediate stage stops.
    pub centering_tol: f64,
    /// Newton decrement `λ²/(2μ)` at which the final stage stops.
    pub final_tol: f64,
    pub max_newton_steps: usize,
    /// Slack below which a constraint counts as active.
    pub active_tol: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            mu_start: 1.0,
            mu_factor: 5.0,
            mu_final: 1e-9,
            centering_tol: 1e-4,
            final_tol: 1e-14,
            max_newton_steps: 5000,
            active_tol: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub newton_steps: usize,
    pub stages: usize,
    pub final_mu: f64,
    /// `m μ` bound on the gap to the optimal log-determinant.
    pub duality_gap: f64,
    /// Norm of the Lagrangian gradient with multipliers `μ / slack`.
    pub kkt_residual: f64,
}

/// An optimal `(P, z)` with its barrier multipliers.
#[derive(Clone, Debug)]
pub struct PositionSolution {
    pub p: SpdMatrix,
    pub z: Vector,
    pub log_det: f64,
    /// `1 − f_i` per constraint.
    pub slacks: Vec<f64>,
    /// Barrier multipliers `μ / slack_i`.
    pub multipliers: Vec<f64>,
    /// Constraints with slack at most the active tolerance.
    pub active: Vec<usize>,
    pub report: SolverReport,
}

/// Newton steps after which a stage is abandoned at the round-off floor.
const MAX_STAGE_STEPS: usize = 100;

struct Evaluation {
    value: f64,
    gradient: Vector,
    hessian: Matrix,
}

fn log_det(p: &Matrix) -> Option<f64> {
    let chol = Cholesky::new(p.clone())?;
    Some(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

impl PjpProblem {
    fn barrier_value(&self, theta: &Vector, mu: f64) -> Option<f64> {
        let (p, z) = self.layout.unpack(theta);
        let ld = log_det(&p)?;
        let mut total = -ld;
        for c in &self.constraints {
            let s = 1.0 - self.value(c, &p, &z);
            if !(s > 0.0) {
                return None;
            }
            total -= mu * s.ln();
        }
        Some(total)
    }

    fn barrier_derivatives(&self, theta: &Vector, mu: f64) -> Evaluation {
        let layout = &self.layout;
        let d = layout.dim();
        let (p, z) = layout.unpack(theta);
        let q = p.clone().try_inverse().expect("iterate is positive-definite");
        let mut gradient = Vector::zeros(d);
        let mut hessian = Matrix::zeros(d, d);
        let terms = |k: usize| -> Vec<(usize, usize)> {
            let (i, j) = layout.entries[k];
            if i == j {
                vec![(i, i)]
            } else {
                vec![(i, j), (j, i)]
            }
        };
        let blocks: Vec<Vec<(usize, usize)>> = (0..layout.entries.len()).map(terms).collect();
        for (k, tk) in blocks.iter().enumerate() {
            gradient[k] = -tk.iter().map(|&(a, b)| q[(b, a)]).sum::<f64>();
            for (l, tl) in blocks.iter().enumerate().skip(k) {
                // tr(Q E_k Q E_l) with E = Σ e_a e_bᵀ.
                let mut h = 0.0;
                for &(a, b) in tk {
                    for &(c, e) in tl {
                        h += q[(e, a)] * q[(b, c)];
                    }
                }
                hessian[(k, l)] = h;
                hessian[(l, k)] = h;
            }
        }
        let mut value = -log_det(&p).unwrap_or(f64::NAN);
        for c in &self.constraints {
            let (f, g, hc) = self.derivatives(c, &p, &z);
            let s = 1.0 - f;
            value -= mu * s.ln();
            gradient.axpy(mu / s, &g, 1.0);
            hessian.ger(mu / (s * s), &g, &g, 1.0);
            if let Some(hc) = hc {
                hessian += hc * (mu / s);
            }
        }
        Evaluation { value, gradient, hessian }
    }

    /// Solves the positive John problem.
    pub fn solve(&self, options: &BarrierOptions) -> Result<PositionSolution> {
        let n = self.layout.n;
        let ones = Matrix::identity(n, n);
        let zero = Vector::zeros(n);
        let worst = self.constraints.iter().map(|c| self.value(c, &ones, &zero)).fold(f64::NEG_INFINITY, f64::max);
        if !(worst > 0.0 && worst.is_finite()) {
            return Err(Error::InfeasibleStart(format!("constraint scale at the identity is {worst}")));
        }
        let mut theta = self.layout.pack(&(ones * (0.5 / worst)), &zero);

        let mut mu = options.mu_start;
        let mut steps = 0;
        let mut stages = 0;
        let mut last_decrement = f64::INFINITY;
        loop {
            stages += 1;
            let final_stage = mu <= options.mu_final;
            let tol = if final_stage { options.final_tol } else { options.centering_tol };
            let mut stage_steps = 0;
            loop {
                if steps >= options.max_newton_steps {
                    return Err(Error::NonConvergence {
                        message: format!(
                            "barrier method exceeded {} Newton steps at μ = {mu:e}",
                            options.max_newton_steps
                        ),
                        residual: last_decrement,
                    });
                }
                let eval = self.barrier_derivatives(&theta, mu);
                let step = newton_step(&eval.hessian, &eval.gradient);
                let slope = eval.gradient.dot(&step);
                // Φ/μ is self-concordant, so its decrement sets the scale.
                let decrement = -slope / (2.0 * mu);
                last_decrement = decrement;
                if decrement <= tol || stage_steps >= MAX_STAGE_STEPS {
                    break;
                }
                steps += 1;
                stage_steps += 1;
                if decrement < 1e-2 {
                    let trial = &theta + &step;
                    if self.barrier_value(&trial, mu).is_some() {
                        theta = trial;
                        continue;
                    }
                }
                let mut t = 1.0;
                let mut accepted = false;
                while t > 1e-20 {
                    let trial = &theta + &step * t;
                    if let Some(v) = self.barrier_value(&trial, mu) {
                        if v <= eval.value + 0.25 * t * slope {
                            theta = trial;
                            accepted = true;
                            break;
                        }
                    }
                    t *= 0.5;
                }
                if !accepted {
                    return Err(Error::NonConvergence {
                        message: format!("line search failed at μ = {mu:e}"),
                        residual: decrement,
                    });
                }
            }
            if final_stage {
                break;
            }
            mu = (mu / options.mu_factor).max(options.mu_final);
        }

        let (p, z) = self.layout.unpack(&theta);
        let eval = self.barrier_derivatives(&theta, mu);
        let slacks: Vec<f64> = self.constraints.iter().map(|c| 1.0 - self.value(c, &p, &z)).collect();
        let multipliers: Vec<f64> = slacks.iter().map(|s| mu / s).collect();
        let active = (0..slacks.len()).filter(|&i| slacks[i] <= options.active_tol).collect();
        let p = SpdMatrix::new(p)?;
        let log_det = p.log_det();
        Ok(PositionSolution {
            p,
            z,
            log_det,
            slacks,
            multipliers,
            active,
            report: SolverReport {
                newton_steps: steps,
                stages,
                final_mu: mu,
                duality_gap: mu * self.constraints.len() as f64,
                kkt_residual: eval.gradient.norm(),
            },
        })
    }
}

fn newton_step(hessian: &Matrix, gradient: &Vector) -> Vector {
    if let Some(chol) = Cholesky::new(hessian.clone()) {
        return -chol.solve(gradient);
    }
    let ridge = 1e-12 * hessian.diagonal().amax().max(1.0);
    let d = hessian.nrows();
    let chol =
        Cholesky::new(hessian + Matrix::identity(d, d) * ridge).expect("regularised Hessian is positive-definite");
    -chol.solve(gradient)
}
