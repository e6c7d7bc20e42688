//! Shared test fixtures: an independent matrix-form implementation of the
//! algorithm used as an oracle, plus closed-form quadratic optima.
//!
//! The oracle works on stacked `nd`-vectors with explicit Kronecker
//! matrices and a dense LU solve — deliberately a different computational
//! route from the engine's per-agent Cholesky steps.

use ccdqm::netgraph::Graph;
use ccdqm::objectives::LocalObjective;
use nalgebra::{DMatrix, DVector};

/// `A ⊗ I_d`.
pub fn kron_identity(a: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(n * d, n * d);
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)];
            if v != 0.0 {
                for p in 0..d {
                    out[(i * d + p, j * d + p)] = v;
                }
            }
        }
    }
    out
}

/// Stack agent rows into one `nd`-vector (agent-major).
pub fn stack_rows(rows: &DMatrix<f64>) -> DVector<f64> {
    let (n, d) = rows.shape();
    DVector::from_fn(n * d, |i, _| rows[(i / d, i % d)])
}

fn stacked_grad(objectives: &[LocalObjective], x: &DVector<f64>, d: usize) -> DVector<f64> {
    let n = objectives.len();
    let mut g = DVector::zeros(n * d);
    for (i, obj) in objectives.iter().enumerate() {
        let gi = obj.grad(&x.rows(i * d, d).into_owned()).unwrap();
        g.rows_mut(i * d, d).copy_from(&gi);
    }
    g
}

/// Matrix-form trajectory with zero threshold and identity compression:
///
/// ```text
/// X_{k+1} = X_k − D̃⁻¹(∇f(X_k) + Φ_k + cL·Y_k),  D̃ = 2cD + ∇²f(Y_k)
/// Y_{k+1} = X_{k+1},  Φ_{k+1} = Φ_k + cL·Y_{k+1}
/// ```
///
/// starting from `Y_0 = 0`, `Φ_0 = 0`. Returns the stacked `x` iterates
/// `X_1, …, X_iters`.
pub fn matrix_form_trajectory(
    graph: &Graph,
    objectives: &[LocalObjective],
    c: f64,
    x0_rows: &DMatrix<f64>,
    iters: usize,
) -> Vec<DVector<f64>> {
    let n = graph.n();
    let d = objectives[0].dimension();
    let lap = kron_identity(&graph.laplacian(), d);
    let deg = kron_identity(&graph.degree_matrix(), d);
    let mut x = stack_rows(x0_rows);
    let mut y = DVector::zeros(n * d);
    let mut phi = DVector::zeros(n * d);
    let mut out = Vec::with_capacity(iters);
    for _ in 0..iters {
        let mut d_tilde = &deg * (2.0 * c);
        for (i, obj) in objectives.iter().enumerate() {
            let h = obj.hessian(&y.rows(i * d, d).into_owned()).unwrap();
            for p in 0..d {
                for q in 0..d {
                    d_tilde[(i * d + p, i * d + q)] += h[(p, q)];
                }
            }
        }
        let rhs = stacked_grad(objectives, &x, d) + &phi + &lap * &y * c;
        let step = d_tilde.lu().solve(&rhs).expect("oracle solve");
        x -= step;
        y = x.clone();
        phi += &lap * &y * c;
        out.push(x.clone());
    }
    out
}

/// Closed-form optimum of `Σ_i (½xᵀA_ix − b_iᵀx)`: solves
/// `(ΣA_i)x = Σb_i` directly.
pub fn quadratic_x_star(objectives: &[LocalObjective]) -> DVector<f64> {
    let d = objectives[0].dimension();
    let mut a_sum = DMatrix::zeros(d, d);
    let mut b_sum = DVector::zeros(d);
    for obj in objectives {
        match obj {
            LocalObjective::Quadratic { a, b } => {
                a_sum += a;
                b_sum += b;
            }
            _ => panic!("quadratic_x_star needs quadratic objectives"),
        }
    }
    a_sum.lu().solve(&b_sum).expect("sum of SPD matrices is invertible")
}
