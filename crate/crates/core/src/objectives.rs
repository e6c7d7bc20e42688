//! Per-agent objective functions.
//!
//! Each agent owns a smooth, strongly convex local objective exposing
//! exact values, gradients, and Hessians:
//!
//! - quadratic: `f_i(x) = ½ xᵀA_i x − b_iᵀx` with `A_i ≻ 0`;
//! - logistic:  `f_i(x) = (1/m_i) Σ_j log(1 + e^{−b_ij xᵀa_ij})
//!   + (λ_reg/2)‖x‖²` over `m_i` labelled feature rows.
//!
//! Unregularized logistic loss is not strongly convex, so runs that need
//! the convergence theory add a ridge term `λ_reg > 0`; experiment
//! metadata records when that deviation from the plain loss is active.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("dimension mismatch: objective has d = {expected}, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("not strongly convex: logistic objective requires lambda_reg > 0")]
    NotStronglyConvex,

    #[error("quadratic matrix must be symmetric positive definite")]
    NotPositiveDefinite,

    #[error("labels must lie in {{-1, +1}}")]
    BadLabel,

    #[error("need at least one sample per agent ({samples} samples for {agents} agents)")]
    TooFewSamples { samples: usize, agents: usize },

    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One agent's objective function. Immutable after construction;
/// evaluation is pure.
#[derive(Debug, Clone)]
pub enum LocalObjective {
    Quadratic {
        a: DMatrix<f64>,
        b: DVector<f64>,
    },
    Logistic {
        /// `m × d`, one feature row per sample.
        features: DMatrix<f64>,
        /// `m` labels in `{−1, +1}`.
        labels: DVector<f64>,
        /// Ridge weight; the loss gains `(λ/2)‖x‖²` and the Hessian `λI`.
        lambda_reg: f64,
    },
}

/// Strong-convexity modulus `v` and gradient Lipschitz constant `ell`
/// for one objective, or the aggregate `v = min_i v_i`, `ell = max_i ell_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityConstants {
    pub v: f64,
    pub ell: f64,
}

/// Numerically stable `log(1 + e^{−z})`.
fn logistic_loss(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// Numerically stable `σ(z) = 1/(1 + e^{−z})`.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LocalObjective {
    pub fn quadratic(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, ObjectiveError> {
        if a.nrows() != a.ncols() || a.nrows() != b.len() {
            return Err(ObjectiveError::DimensionMismatch { expected: a.nrows(), got: b.len() });
        }
        if (a.transpose() - &a).amax() > 1e-12 || a.clone().cholesky().is_none() {
            return Err(ObjectiveError::NotPositiveDefinite);
        }
        Ok(Self::Quadratic { a, b })
    }

    pub fn logistic(
        features: DMatrix<f64>,
        labels: DVector<f64>,
        lambda_reg: f64,
    ) -> Result<Self, ObjectiveError> {
        if features.nrows() != labels.len() || features.nrows() == 0 {
            return Err(ObjectiveError::DimensionMismatch {
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        if labels.iter().any(|&b| b != 1.0 && b != -1.0) {
            return Err(ObjectiveError::BadLabel);
        }
        Ok(Self::Logistic { features, labels, lambda_reg })
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::Quadratic { a, .. } => a.nrows(),
            Self::Logistic { features, .. } => features.ncols(),
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<(), ObjectiveError> {
        if x.len() != self.dimension() {
            return Err(ObjectiveError::DimensionMismatch { expected: self.dimension(), got: x.len() });
        }
        Ok(())
    }

    /// Objective value at `x`.
    pub fn value(&self, x: &DVector<f64>) -> Result<f64, ObjectiveError> {
        self.check_dim(x)?;
        match self {
            Self::Quadratic { a, b } => Ok(0.5 * x.dot(&(a * x)) - b.dot(x)),
            Self::Logistic { features, labels, lambda_reg } => {
                let m = features.nrows();
                let margins = features * x;
                let mut total = 0.0;
                for j in 0..m {
                    total += logistic_loss(labels[j] * margins[j]);
                }
                Ok(total / m as f64 + 0.5 * lambda_reg * x.norm_squared())
            }
        }
    }

    /// Gradient at `x` (skips the Hessian accumulation).
    pub fn grad(&self, x: &DVector<f64>) -> Result<DVector<f64>, ObjectiveError> {
        self.check_dim(x)?;
        match self {
            Self::Quadratic { a, b } => Ok(a * x - b),
            Self::Logistic { features, labels, lambda_reg } => {
                let m = features.nrows();
                let margins = features * x;
                let inv_m = 1.0 / m as f64;
                let mut grad = x * *lambda_reg;
                for j in 0..m {
                    let z = labels[j] * margins[j];
                    let gw = -labels[j] * (1.0 - sigmoid(z)) * inv_m;
                    grad.axpy(gw, &features.row(j).transpose(), 1.0);
                }
                Ok(grad)
            }
        }
    }

    /// Hessian at `x`.
    pub fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, ObjectiveError> {
        Ok(self.value_grad_hess(x)?.2)
    }

    /// Exact value, gradient, and Hessian at `x`.
    pub fn value_grad_hess(
        &self,
        x: &DVector<f64>,
    ) -> Result<(f64, DVector<f64>, DMatrix<f64>), ObjectiveError> {
        self.check_dim(x)?;
        match self {
            Self::Quadratic { a, b } => {
                let ax = a * x;
                let value = 0.5 * x.dot(&ax) - b.dot(x);
                Ok((value, ax - b, a.clone()))
            }
            Self::Logistic { features, labels, lambda_reg } => {
                let (m, d) = features.shape();
                let margins = features * x;
                let mut value = 0.0;
                let mut grad = x * *lambda_reg;
                let mut hess = DMatrix::from_diagonal_element(d, d, *lambda_reg);
                let inv_m = 1.0 / m as f64;
                for j in 0..m {
                    let z = labels[j] * margins[j];
                    value += logistic_loss(z);
                    let s = sigmoid(z);
                    let row = features.row(j);
                    // ∂/∂x log(1+e^{−z}) = −b(1−σ(z))·a
                    let gw = -labels[j] * (1.0 - s) * inv_m;
                    let hw = s * (1.0 - s) * inv_m;
                    for p in 0..d {
                        grad[p] += gw * row[p];
                        for q in p..d {
                            let contrib = hw * row[p] * row[q];
                            hess[(p, q)] += contrib;
                            if p != q {
                                hess[(q, p)] += contrib;
                            }
                        }
                    }
                }
                value = value * inv_m + 0.5 * lambda_reg * x.norm_squared();
                Ok((value, grad, hess))
            }
        }
    }

    /// Strong-convexity and smoothness constants.
    ///
    /// Quadratic: extremal eigenvalues of `A_i`. Logistic: `v = λ_reg`
    /// (an error when zero) and `ell = λ_reg + λ_max((1/m)Σ a aᵀ)/4`
    /// from the ¼ bound on the sigmoid curvature.
    pub fn convexity_constants(&self) -> Result<ConvexityConstants, ObjectiveError> {
        match self {
            Self::Quadratic { a, .. } => {
                let eig = SymmetricEigen::new(a.clone());
                let v = eig.eigenvalues.min();
                let ell = eig.eigenvalues.max();
                Ok(ConvexityConstants { v, ell })
            }
            Self::Logistic { features, lambda_reg, .. } => {
                if *lambda_reg <= 0.0 {
                    return Err(ObjectiveError::NotStronglyConvex);
                }
                let m = features.nrows() as f64;
                let gram = features.transpose() * features / m;
                let ell = lambda_reg + SymmetricEigen::new(gram).eigenvalues.max() / 4.0;
                Ok(ConvexityConstants { v: *lambda_reg, ell })
            }
        }
    }
}

/// Aggregate `v = min_i v_i`, `ell = max_i ell_i` over a set of agents.
pub fn aggregate_constants(objs: &[LocalObjective]) -> Result<ConvexityConstants, ObjectiveError> {
    let mut v = f64::INFINITY;
    let mut ell = 0.0f64;
    for obj in objs {
        let c = obj.convexity_constants()?;
        v = v.min(c.v);
        ell = ell.max(c.ell);
    }
    Ok(ConvexityConstants { v, ell })
}

/// Synthetic logistic data: standard-normal features, labels from a
/// planted normal parameter with 10% flipped. Deterministic in `seed`.
pub fn gen_synthetic_logistic(
    n: usize,
    m: usize,
    d: usize,
    lambda_reg: f64,
    seed: u64,
) -> Vec<LocalObjective> {
    assert!(n > 0 && m > 0 && d > 0, "counts must be positive");
    let mut rng = crate::rngstream::tagged(seed, 0x6c6f_6769_7374); // "logist"
    let planted = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    (0..n)
        .map(|_| {
            let features =
                DMatrix::from_fn(m, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let labels = DVector::from_fn(m, |j, _| {
                let margin = features.row(j).transpose().dot(&planted);
                let label = if margin >= 0.0 { 1.0 } else { -1.0 };
                if rng.random::<f64>() < 0.10 {
                    -label
                } else {
                    label
                }
            });
            LocalObjective::logistic(features, labels, lambda_reg)
                .expect("synthetic labels are valid")
        })
        .collect()
}

/// Synthetic quadratic objectives `½xᵀA_i x − b_iᵀx` with
/// `A_i = GᵀG/d + ½I` (Gaussian `G`), so every `A_i` is comfortably
/// positive definite. Deterministic in `seed`.
pub fn gen_synthetic_quadratic(n: usize, d: usize, seed: u64) -> Vec<LocalObjective> {
    assert!(n > 0 && d > 0, "counts must be positive");
    let mut rng = crate::rngstream::tagged(seed, 0x7175_6164); // "quad"
    (0..n)
        .map(|_| {
            let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let a = g.transpose() * &g / d as f64 + DMatrix::from_diagonal_element(d, d, 0.5);
            let b = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            LocalObjective::quadratic(a, b).expect("construction is positive definite")
        })
        .collect()
}

/// Parse a `label,f1,...,fd` CSV into `(label, features)` rows.
///
/// Labels must be −1, 0, or +1; 0 is coerced to −1. The feature dimension
/// of the first row is enforced on all later rows.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<(f64, Vec<f64>)>, ObjectiveError> {
    parse_csv_str(&std::fs::read_to_string(path)?)
}

/// String-input version of [`load_csv`].
pub fn parse_csv_str(text: &str) -> Result<Vec<(f64, Vec<f64>)>, ObjectiveError> {
    let mut rows = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(ObjectiveError::Csv {
                line: line_no,
                msg: "need a label and at least one feature".into(),
            });
        }
        let label: f64 = fields[0].trim().parse().map_err(|e| ObjectiveError::Csv {
            line: line_no,
            msg: format!("bad label `{}`: {e}", fields[0]),
        })?;
        let label = match label {
            l if l == 1.0 || l == -1.0 => l,
            l if l == 0.0 => -1.0,
            l => {
                return Err(ObjectiveError::Csv {
                    line: line_no,
                    msg: format!("label {l} outside {{-1, 0, +1}}"),
                })
            }
        };
        let features = fields[1..]
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| ObjectiveError::Csv {
                    line: line_no,
                    msg: format!("bad feature `{f}`: {e}"),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        match dim {
            None => dim = Some(features.len()),
            Some(d) if d != features.len() => {
                return Err(ObjectiveError::Csv {
                    line: line_no,
                    msg: format!("dimension {} does not match earlier rows ({d})", features.len()),
                })
            }
            _ => {}
        }
        rows.push((label, features));
    }
    if rows.is_empty() {
        return Err(ObjectiveError::Csv { line: 1, msg: "no data rows".into() });
    }
    Ok(rows)
}

/// Deal samples to agents round-robin (`sample k → agent k mod n`) and
/// build logistic objectives. Every agent must receive at least one row.
pub fn partition_round_robin(
    samples: &[(f64, Vec<f64>)],
    n: usize,
    lambda_reg: f64,
) -> Result<Vec<LocalObjective>, ObjectiveError> {
    if samples.len() < n {
        return Err(ObjectiveError::TooFewSamples { samples: samples.len(), agents: n });
    }
    let d = samples[0].1.len();
    (0..n)
        .map(|agent| {
            let mine: Vec<&(f64, Vec<f64>)> =
                samples.iter().skip(agent).step_by(n).collect();
            let features = DMatrix::from_fn(mine.len(), d, |r, c| mine[r].1[c]);
            let labels = DVector::from_fn(mine.len(), |r, _| mine[r].0);
            LocalObjective::logistic(features, labels, lambda_reg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn central_fd_grad(obj: &LocalObjective, x: &DVector<f64>, h: f64) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            (obj.value(&xp).unwrap() - obj.value(&xm).unwrap()) / (2.0 * h)
        })
    }

    fn random_vec(d: usize, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn quadratic_identity_hand_values() {
        let obj = LocalObjective::quadratic(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let (v, g, h) = obj.value_grad_hess(&x).unwrap();
        assert_abs_diff_eq!(v, 2.5);
        assert_eq!(g, x);
        assert_eq!(h, DMatrix::identity(2, 2));
    }

    #[test]
    fn logistic_single_sample_hand_values() {
        let obj = LocalObjective::logistic(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![1.0]),
            0.0,
        )
        .unwrap();
        let x = DVector::zeros(1);
        let (v, g, h) = obj.value_grad_hess(&x).unwrap();
        assert_abs_diff_eq!(v, std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(g[0], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(0, 0)], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let obj = LocalObjective::quadratic(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        assert!(matches!(
            obj.value(&DVector::zeros(3)),
            Err(ObjectiveError::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = crate::rngstream::tagged(11, 1);
        let objs = vec![
            gen_synthetic_quadratic(1, 4, 5).remove(0),
            gen_synthetic_logistic(1, 6, 4, 0.05, 5).remove(0),
        ];
        for obj in &objs {
            for _ in 0..10 {
                let x = random_vec(4, &mut rng);
                let (_, g, _) = obj.value_grad_hess(&x).unwrap();
                let fd = central_fd_grad(obj, &x, 1e-5);
                let rel = (&g - &fd).norm() / g.norm().max(1.0);
                assert!(rel <= 1e-5, "fd mismatch: rel = {rel}");
            }
        }
    }

    #[test]
    fn hessian_vector_product_matches_gradient_differences() {
        let mut rng = crate::rngstream::tagged(12, 1);
        let obj = gen_synthetic_logistic(1, 8, 5, 0.1, 9).remove(0);
        for _ in 0..10 {
            let x = random_vec(5, &mut rng);
            let v = random_vec(5, &mut rng);
            let (_, _, h) = obj.value_grad_hess(&x).unwrap();
            let hv = &h * &v;
            let step = 1e-5;
            let gp = obj.value_grad_hess(&(&x + &v * step)).unwrap().1;
            let gm = obj.value_grad_hess(&(&x - &v * step)).unwrap().1;
            let fd = (gp - gm) / (2.0 * step);
            let rel = (&hv - &fd).norm() / hv.norm().max(1.0);
            assert!(rel <= 1e-4, "hvp mismatch: rel = {rel}");
        }
    }

    #[test]
    fn convexity_constants_hand_values() {
        let diag = LocalObjective::quadratic(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])),
            DVector::zeros(2),
        )
        .unwrap();
        let c = diag.convexity_constants().unwrap();
        assert_abs_diff_eq!(c.v, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.ell, 4.0, epsilon = 1e-12);

        let logit = LocalObjective::logistic(
            DMatrix::from_row_slice(1, 1, &[2.0]),
            DVector::from_vec(vec![1.0]),
            0.1,
        )
        .unwrap();
        let c = logit.convexity_constants().unwrap();
        assert_abs_diff_eq!(c.v, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(c.ell, 1.1, epsilon = 1e-12);
    }

    #[test]
    fn unregularized_logistic_not_strongly_convex() {
        let obj = LocalObjective::logistic(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![1.0]),
            0.0,
        )
        .unwrap();
        assert!(matches!(obj.convexity_constants(), Err(ObjectiveError::NotStronglyConvex)));
    }

    #[test]
    fn assumption_inequalities_hold_on_random_pairs() {
        let mut rng = crate::rngstream::tagged(13, 1);
        let objs = vec![
            gen_synthetic_quadratic(1, 3, 21).remove(0),
            gen_synthetic_logistic(1, 10, 3, 0.2, 21).remove(0),
        ];
        for obj in &objs {
            let c = obj.convexity_constants().unwrap();
            for _ in 0..120 {
                let x = random_vec(3, &mut rng);
                let xp = random_vec(3, &mut rng);
                let gx = obj.value_grad_hess(&x).unwrap().1;
                let gxp = obj.value_grad_hess(&xp).unwrap().1;
                let diff = &xp - &x;
                let inner = (&gxp - &gx).dot(&diff);
                let dist_sq = diff.norm_squared();
                assert!(inner >= c.v * dist_sq - 1e-9 * dist_sq.max(1.0));
                assert!((gxp - gx).norm() <= c.ell * diff.norm() * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn hessian_eigenvalues_within_convexity_bounds() {
        let mut rng = crate::rngstream::tagged(14, 1);
        let obj = gen_synthetic_logistic(1, 12, 4, 0.15, 33).remove(0);
        let c = obj.convexity_constants().unwrap();
        for _ in 0..20 {
            let x = random_vec(4, &mut rng);
            let (_, _, h) = obj.value_grad_hess(&x).unwrap();
            assert!((h.transpose() - &h).amax() <= 1e-12);
            let eig = SymmetricEigen::new(h);
            assert!(eig.eigenvalues.min() >= c.v - 1e-9);
            assert!(eig.eigenvalues.max() <= c.ell + 1e-9);
        }
    }

    #[test]
    fn synthetic_logistic_shapes_and_determinism() {
        let a = gen_synthetic_logistic(2, 3, 2, 0.01, 99);
        assert_eq!(a.len(), 2);
        for obj in &a {
            if let LocalObjective::Logistic { features, labels, .. } = obj {
                assert_eq!(features.shape(), (3, 2));
                assert!(labels.iter().all(|&b| b == 1.0 || b == -1.0));
            } else {
                panic!("expected logistic");
            }
        }
        let b = gen_synthetic_logistic(2, 3, 2, 0.01, 99);
        for (x, y) in a.iter().zip(&b) {
            if let (
                LocalObjective::Logistic { features: fx, labels: lx, .. },
                LocalObjective::Logistic { features: fy, labels: ly, .. },
            ) = (x, y)
            {
                assert_eq!(fx, fy);
                assert_eq!(lx, ly);
            }
        }
    }

    #[test]
    fn paper_scale_synthetic_data() {
        let objs = gen_synthetic_logistic(100, 10, 24, 0.01, 1);
        assert_eq!(objs.len(), 100);
        assert!(objs.iter().all(|o| o.dimension() == 24));
    }

    #[test]
    fn csv_parses_and_coerces() {
        let rows = parse_csv_str("1,0.5,0.2\n-1,0.1,0.9\n").unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], (1.0, vec![0.5, 0.2]));
        let rows = parse_csv_str("0,1.5\n").unwrap();
        assert_eq!(rows[0].0, -1.0);
    }

    #[test]
    fn csv_rejects_bad_rows() {
        let err = parse_csv_str("1,0.5,0.2\n-1,0.1,0.9,0.3\n").unwrap_err();
        match err {
            ObjectiveError::Csv { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(matches!(parse_csv_str("2,0.5\n"), Err(ObjectiveError::Csv { line: 1, .. })));
        assert!(matches!(parse_csv_str("1;0.5\n"), Err(ObjectiveError::Csv { .. })));
    }

    #[test]
    fn round_robin_partition() {
        let samples = vec![
            (1.0, vec![1.0, 0.0]),
            (-1.0, vec![0.0, 1.0]),
            (1.0, vec![1.0, 1.0]),
        ];
        let objs = partition_round_robin(&samples, 2, 0.01).unwrap();
        assert_eq!(objs.len(), 2);
        if let LocalObjective::Logistic { features, .. } = &objs[0] {
            assert_eq!(features.nrows(), 2); // samples 0 and 2
        }
        if let LocalObjective::Logistic { features, .. } = &objs[1] {
            assert_eq!(features.nrows(), 1);
        }
        assert!(matches!(
            partition_round_robin(&samples, 4, 0.01),
            Err(ObjectiveError::TooFewSamples { .. })
        ));
    }
}
