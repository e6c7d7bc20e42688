//! Centralized Newton oracle for the aggregate objective.
//!
//! Minimizes `f(x) = Σ_i f_i(x)` with damped Newton steps to produce the
//! reference optimum `x*` that the error metric and the Lyapunov
//! diagnostics measure against.

use super::EngineError;
use crate::objectives::{aggregate_constants, LocalObjective, ObjectiveError};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct CentralizedSolution {
    pub x_star: DVector<f64>,
    pub f_star: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// False when the aggregate objective is not strongly convex
    /// (unregularized logistic); the solve then rests on the gradient-norm
    /// stopping rule alone and the optimum may be non-unique.
    pub strongly_convex: bool,
}

const MAX_NEWTON_ITER: usize = 200;

fn aggregate(
    objectives: &[LocalObjective],
    x: &DVector<f64>,
) -> Result<(f64, DVector<f64>, DMatrix<f64>), ObjectiveError> {
    let d = x.len();
    let mut value = 0.0;
    let mut grad = DVector::zeros(d);
    let mut hess = DMatrix::zeros(d, d);
    for obj in objectives {
        let (v, g, h) = obj.value_grad_hess(x)?;
        value += v;
        grad += g;
        hess += h;
    }
    Ok((value, grad, hess))
}

fn aggregate_value(objectives: &[LocalObjective], x: &DVector<f64>) -> Result<f64, ObjectiveError> {
    let mut value = 0.0;
    for obj in objectives {
        value += obj.value(x)?;
    }
    Ok(value)
}

/// Newton's method with Armijo backtracking, stopping at `‖∇f‖ ≤ tol`.
pub fn centralized_solve(
    objectives: &[LocalObjective],
    tol: f64,
) -> Result<CentralizedSolution, EngineError> {
    if objectives.is_empty() {
        return Err(EngineError::Dimension("no objectives".into()));
    }
    let d = objectives[0].dimension();
    if objectives.iter().any(|o| o.dimension() != d) {
        return Err(EngineError::Dimension("objectives disagree on dimension".into()));
    }
    let strongly_convex = match aggregate_constants(objectives) {
        Ok(k) => k.v > 0.0,
        Err(ObjectiveError::NotStronglyConvex) => false,
        Err(e) => return Err(e.into()),
    };

    let mut x = DVector::zeros(d);
    let mut grad_norm = f64::INFINITY;
    for it in 0..MAX_NEWTON_ITER {
        let (value, grad, hess) = aggregate(objectives, &x)?;
        grad_norm = grad.norm();
        if grad_norm <= tol {
            return Ok(CentralizedSolution {
                x_star: x,
                f_star: value,
                grad_norm,
                iterations: it,
                strongly_convex,
            });
        }
        // a singular Hessian can only arise without strong convexity;
        // nudge the diagonal until the factorization goes through
        let mut ridge = 0.0;
        let factor = loop {
            let mut h = hess.clone();
            if ridge > 0.0 {
                for i in 0..d {
                    h[(i, i)] += ridge;
                }
            }
            match h.cholesky() {
                Some(f) => break f,
                None if ridge < 1e-3 => ridge = (ridge * 10.0).max(1e-10),
                None => return Err(EngineError::FactorizationFailed { agent: 0, iter: it }),
            }
        };
        let direction = factor.solve(&grad);
        let slope = grad.dot(&direction);
        let mut t = 1.0;
        loop {
            let candidate = &x - &direction * t;
            if aggregate_value(objectives, &candidate)? <= value - 1e-4 * t * slope || t < 1e-14 {
                x = candidate;
                break;
            }
            t *= 0.5;
        }
    }
    Err(EngineError::NewtonDidNotConverge { iterations: MAX_NEWTON_ITER, grad_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::gen_synthetic_logistic;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scalar_quadratics_solve_to_the_mean_in_one_step() {
        // f_i = ½x² − a_i x differs from ½(x − a_i)² by a constant
        let anchors = [1.0, 2.0, 6.0];
        let objectives: Vec<LocalObjective> = anchors
            .iter()
            .map(|&a| {
                LocalObjective::quadratic(
                    DMatrix::from_element(1, 1, 1.0),
                    DVector::from_element(1, a),
                )
                .unwrap()
            })
            .collect();
        let sol = centralized_solve(&objectives, 1e-12).unwrap();
        assert_abs_diff_eq!(sol.x_star[0], 3.0, epsilon = 1e-12);
        assert!(sol.iterations <= 1);
    }

    #[test]
    fn regularized_logistic_reaches_tight_gradient_norm() {
        let objectives = gen_synthetic_logistic(5, 8, 6, 0.05, 17);
        let sol = centralized_solve(&objectives, 1e-12).unwrap();
        assert!(sol.grad_norm <= 1e-12, "gradient norm {}", sol.grad_norm);
        assert!(sol.strongly_convex);
    }

    #[test]
    fn unregularized_logistic_degrades_to_gradient_stopping() {
        let objectives = gen_synthetic_logistic(3, 20, 2, 0.0, 23);
        let sol = centralized_solve(&objectives, 1e-8).unwrap();
        assert!(!sol.strongly_convex);
        assert!(sol.grad_norm <= 1e-8);
    }
}
