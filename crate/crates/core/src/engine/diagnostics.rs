//! Trajectory diagnostics built on the dual/edge-variable decomposition.
//!
//! The dual update `φ_{k+1} = φ_k + cLy_{k+1}` factors through the
//! incidence operator: with `L = ½MᵀM` and `r_{k+1} = r_k + ¼My_{k+1}`,
//! the identity `φ_k = 2cMᵀr_k` holds along the whole trajectory. The
//! tracker maintains `r_k`, verifies that identity every iteration, and
//! evaluates the Lyapunov function
//!
//! ```text
//! V_k = (c/2)‖x_k − x*‖²_{L_s} + 4c‖r_k − r*‖² + r·‖e_k‖²,  e_k = y_k − x_k
//! ```
//!
//! whose geometric decay is what the convergence theory actually proves.
//! `r*` is the unique column-space solution of `2cMᵀr* = φ*`, obtained
//! here as the minimum-norm least-squares solution.

use super::{EngineError, RunRecord};
use nalgebra::{DMatrix, DVector, SVD};

/// Absolute tolerance for the `φ_k = 2cMᵀr_k` identity.
pub const PHI_CONSISTENCY_TOL: f64 = 1e-8;

/// The three weighted terms of `V_k`.
#[derive(Debug, Clone, Copy)]
pub struct VComponents {
    /// `(c/2)‖x_k − x*‖²_{L_s}`.
    pub primal: f64,
    /// `4c‖r_k − r*‖²`.
    pub dual: f64,
    /// `r_weight·‖e_k‖²`.
    pub error: f64,
}

impl VComponents {
    pub fn total(&self) -> f64 {
        self.primal + self.dual + self.error
    }
}

/// Minimum-norm least-squares solution of `A·Z = B`.
fn min_norm_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = SVD::new(a.clone(), true, true);
    let eps = svd.singular_values.max() * 1e-12;
    svd.solve(b, eps).expect("SVD solve cannot fail with computed factors")
}

pub struct LyapunovTracker {
    /// `2|E| × n` signed incidence operator.
    m: DMatrix<f64>,
    l_s: DMatrix<f64>,
    x_star_rows: DMatrix<f64>,
    r: DMatrix<f64>,
    r_star: DMatrix<f64>,
    c: f64,
    pub r_weight: f64,
}

impl LyapunovTracker {
    pub fn new(
        edge: crate::netgraph::EdgeOperator,
        l_s: DMatrix<f64>,
        c: f64,
        r_weight: f64,
        x_star: &DVector<f64>,
        phi_star_rows: &DMatrix<f64>,
        phi0_rows: &DMatrix<f64>,
    ) -> Self {
        let n = l_s.nrows();
        let d = x_star.len();
        let m_t = edge.m.transpose();
        let r_star = min_norm_solve(&m_t, &(phi_star_rows / (2.0 * c)));
        let x_star_rows = DMatrix::from_fn(n, d, |_, j| x_star[j]);
        let mut tracker = Self {
            m: edge.m,
            l_s,
            x_star_rows,
            r: DMatrix::zeros(0, 0),
            r_star,
            c,
            r_weight,
        };
        tracker.reset_from_phi(phi0_rows);
        tracker
    }

    /// Re-seed `r_0` as the minimum-norm solution of `2cMᵀr_0 = φ_0`
    /// (zero for the standard `φ_0 = 0` start).
    pub fn reset_from_phi(&mut self, phi_rows: &DMatrix<f64>) {
        self.r = if phi_rows.amax() == 0.0 {
            DMatrix::zeros(self.m.nrows(), phi_rows.ncols())
        } else {
            min_norm_solve(&self.m.transpose(), &(phi_rows / (2.0 * self.c)))
        };
    }

    /// Apply `r ← r + ¼My` for the just-published `y` and return the
    /// residual `‖2cMᵀr − φ‖` of the consistency identity.
    pub fn advance_and_check(&mut self, y_rows: &DMatrix<f64>, phi_rows: &DMatrix<f64>) -> f64 {
        self.r += &self.m * y_rows * 0.25;
        let reconstructed = self.m.transpose() * &self.r * (2.0 * self.c);
        (reconstructed - phi_rows).norm()
    }

    /// Evaluate the three Lyapunov terms at the current `r`.
    pub fn components(&self, x_rows: &DMatrix<f64>, e_rows: &DMatrix<f64>) -> VComponents {
        let xd = x_rows - &self.x_star_rows;
        let quad = (&self.l_s * &xd).component_mul(&xd).sum();
        VComponents {
            primal: 0.5 * self.c * quad,
            dual: 4.0 * self.c * (&self.r - &self.r_star).norm_squared(),
            error: self.r_weight * e_rows.norm_squared(),
        }
    }
}

/// Per-transition slack of the compression-error recursion.
#[derive(Debug, Clone)]
pub struct RecursionCheck {
    /// `slack_k` for each recorded transition `k → k+1`.
    pub slacks: Vec<f64>,
    pub min_slack: f64,
}

/// Verify the error recursion
/// `E‖e_{k+1}‖² ≤ √δ·E‖e_k‖² + δ/(1−√δ)·E‖x_{k+1}−x_k‖² + nμ²_{k+1}`
/// along recorded trajectories, averaging expectations over the supplied
/// replicas (use ≥ 20 replicas for stochastic compressors; one trajectory
/// suffices for deterministic ones). The slack of each transition is the
/// right side minus the left; a sound compressor declaration keeps every
/// slack nonnegative up to sampling noise.
pub fn error_recursion_check(
    records: &[&RunRecord],
    delta: f64,
    n_agents: usize,
) -> Result<RecursionCheck, EngineError> {
    let len = records.iter().map(|r| r.rows.len()).min().unwrap_or(0);
    if len < 2 {
        return Err(EngineError::RecursionTooShort);
    }
    let replicas = records.len() as f64;
    let avg = |f: &dyn Fn(&RunRecord) -> f64| -> f64 {
        records.iter().map(|r| f(r)).sum::<f64>() / replicas
    };
    let sqrt_delta = delta.sqrt();
    let amplification = if delta > 0.0 { delta / (1.0 - sqrt_delta) } else { 0.0 };
    let mut slacks = Vec::with_capacity(len - 1);
    for k in 0..len - 1 {
        let e_k = avg(&|r: &RunRecord| r.rows[k].e_norm_sq);
        let e_next = avg(&|r: &RunRecord| r.rows[k + 1].e_norm_sq);
        let dx_next = avg(&|r: &RunRecord| r.rows[k + 1].dx_norm_sq);
        let mu_next = records[0].rows[k + 1].mu;
        let slack =
            sqrt_delta * e_k + amplification * dx_next + n_agents as f64 * mu_next * mu_next
                - e_next;
        slacks.push(slack);
    }
    let min_slack = slacks.iter().copied().fold(f64::INFINITY, f64::min);
    if delta == 0.0 && min_slack < -1e-9 {
        return Err(EngineError::MisdeclaredCompressor { min_slack });
    }
    Ok(RecursionCheck { slacks, min_slack })
}
