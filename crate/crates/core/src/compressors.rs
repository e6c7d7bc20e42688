//! δ-contractive compressors with bit-cost accounting.
//!
//! A compressor `𝒞 : ℝ^d → ℝ^d` is δ-contractive when
//! `𝔼‖x − 𝒞(x)‖² ≤ δ‖x‖²` with `0 ≤ δ < 1`. Four operators are provided:
//!
//! - `Identity` — no-op baseline, δ = 0, 32d wire bits;
//! - `DetQuant` — deterministic b-bit lattice quantizer, 32 + bd bits,
//!   analytic bound δ ≤ d/(2^b−1)² (useful only when < 1);
//! - `StochQuant` — unbiased stochastic b-bit quantizer, 32 + (b+1)d bits;
//! - `TopK` — keep the k largest-magnitude coordinates, 32k + ⌈log₂d⌉k
//!   bits, δ ≤ 1 − k/d. Not one of the quantizers the convergence theory
//!   was stated for, but it satisfies the same contraction definition.
//!
//! The wire encoding is simulated: payloads travel in memory as exact
//! reconstructions while the `bits` counter charges what the encoded form
//! would cost, including 32 bits for the transmitted `‖x‖∞` scalar.

use nalgebra::DVector;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CompressorError {
    #[error("quantizer bits must lie in 1..=30, got {0}")]
    BadBits(u32),

    #[error("top-k size must be at least 1, got {0}")]
    BadK(usize),

    #[error("top-k size {k} exceeds input dimension {d}")]
    KExceedsDimension { k: usize, d: usize },

    #[error("input contains a non-finite coordinate")]
    NonFinite,

    #[error("need at least {need} trials, got {got}")]
    TooFewTrials { need: usize, got: usize },

    #[error("estimator consumed only zero vectors; contraction ratio undefined")]
    AllZeroSamples,
}

/// A δ-contractive compression operator. Immutable; `compress` is pure
/// given an explicit RNG stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compressor {
    Identity,
    DetQuant { bits: u32 },
    StochQuant { bits: u32 },
    TopK { k: usize },
}

/// Reconstruction plus the simulated wire cost of its encoded form.
#[derive(Debug, Clone)]
pub struct CompressedMessage {
    pub payload: DVector<f64>,
    pub bits: u64,
}

fn ceil_log2(d: usize) -> u64 {
    if d <= 1 {
        0
    } else {
        (usize::BITS - (d - 1).leading_zeros()) as u64
    }
}

impl Compressor {
    pub fn det_quant(bits: u32) -> Result<Self, CompressorError> {
        if !(1..=30).contains(&bits) {
            return Err(CompressorError::BadBits(bits));
        }
        Ok(Self::DetQuant { bits })
    }

    pub fn stoch_quant(bits: u32) -> Result<Self, CompressorError> {
        if !(1..=30).contains(&bits) {
            return Err(CompressorError::BadBits(bits));
        }
        Ok(Self::StochQuant { bits })
    }

    pub fn top_k(k: usize) -> Result<Self, CompressorError> {
        if k == 0 {
            return Err(CompressorError::BadK(k));
        }
        Ok(Self::TopK { k })
    }

    /// Wire cost in bits for a d-dimensional input.
    pub fn bit_cost(&self, d: usize) -> u64 {
        match *self {
            Self::Identity => 32 * d as u64,
            Self::DetQuant { bits } => 32 + bits as u64 * d as u64,
            Self::StochQuant { bits } => 32 + (bits as u64 + 1) * d as u64,
            Self::TopK { k } => (32 + ceil_log2(d)) * k as u64,
        }
    }

    /// Analytic contraction bound where one is known and below 1.
    pub fn delta_bound(&self, d: usize) -> Option<f64> {
        match *self {
            Self::Identity => Some(0.0),
            Self::DetQuant { bits } => {
                let levels = (1u64 << bits) as f64 - 1.0;
                let bound = d as f64 / (levels * levels);
                (bound < 1.0).then_some(bound)
            }
            Self::StochQuant { .. } => None,
            Self::TopK { k } => (k <= d).then(|| 1.0 - k as f64 / d as f64),
        }
    }

    /// Whether `𝔼(𝒞(x)) = x` holds by construction (the stochastic
    /// quantizer only).
    pub fn is_unbiased(&self) -> bool {
        matches!(self, Self::StochQuant { .. })
    }

    /// Whether compression consumes randomness.
    pub fn is_stochastic(&self) -> bool {
        matches!(self, Self::StochQuant { .. })
    }

    /// Compress `x`. The RNG is consumed only by the stochastic quantizer
    /// (exactly `d` uniform draws), so deterministic kinds are
    /// bit-reproducible regardless of the stream handed in.
    pub fn compress(
        &self,
        x: &DVector<f64>,
        rng: &mut impl Rng,
    ) -> Result<CompressedMessage, CompressorError> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CompressorError::NonFinite);
        }
        let d = x.len();
        let bits = self.bit_cost(d);
        let payload = match *self {
            Self::Identity => x.clone(),
            Self::DetQuant { bits } => {
                let xinf = x.amax();
                if xinf == 0.0 {
                    DVector::zeros(d)
                } else {
                    // q_i = ⌊(x_i + ‖x‖∞)/τ + ½⌋ with τ = 2‖x‖∞/(2^b − 1);
                    // reconstruction written as ‖x‖∞(2q_i − m)/m so the
                    // extreme levels reproduce ±‖x‖∞ exactly.
                    let m = (1u64 << bits) as f64 - 1.0;
                    DVector::from_fn(d, |i, _| {
                        let q = ((x[i] + xinf) * m / (2.0 * xinf) + 0.5).floor();
                        xinf * ((2.0 * q - m) / m)
                    })
                }
            }
            Self::StochQuant { bits } => {
                let xinf = x.amax();
                if xinf == 0.0 {
                    DVector::zeros(d)
                } else {
                    let half_levels = (1u64 << (bits - 1)) as f64;
                    let scale = xinf / half_levels;
                    DVector::from_fn(d, |i, _| {
                        let u: f64 = rng.random();
                        let level = (half_levels * x[i].abs() / xinf + u).floor();
                        x[i].signum() * scale * level
                    })
                }
            }
            Self::TopK { k } => {
                if k > d {
                    return Err(CompressorError::KExceedsDimension { k, d });
                }
                let mut order: Vec<usize> = (0..d).collect();
                // ties broken by lowest index
                order.sort_by(|&a, &b| {
                    x[b].abs().partial_cmp(&x[a].abs()).unwrap().then(a.cmp(&b))
                });
                let mut payload = DVector::zeros(d);
                for &i in order.iter().take(k) {
                    payload[i] = x[i];
                }
                payload
            }
        };
        Ok(CompressedMessage { payload, bits })
    }
}

/// Result of the Monte-Carlo contraction estimate.
#[derive(Debug, Clone, Copy)]
pub struct DeltaEstimate {
    /// Worst sampled ratio `𝔼‖x − 𝒞(x)‖²/‖x‖²`.
    pub max_ratio: f64,
    /// Mean sampled ratio.
    pub mean_ratio: f64,
    /// 3σ half-width of the inner Monte-Carlo mean at the worst sample
    /// (zero for deterministic compressors).
    pub half_width: f64,
    /// Samples actually used (zero-vector draws are skipped).
    pub samples: usize,
}

/// Estimate the contraction factor empirically: draw `trials` inputs from
/// `sampler`, average `‖x − 𝒞(x)‖²/‖x‖²` over 100 inner draws for
/// stochastic compressors (one otherwise), and report the worst and mean
/// ratios.
pub fn empirical_delta<R: Rng>(
    compressor: &Compressor,
    mut sampler: impl FnMut(&mut R) -> DVector<f64>,
    trials: usize,
    rng: &mut R,
) -> Result<DeltaEstimate, CompressorError> {
    if trials < 100 {
        return Err(CompressorError::TooFewTrials { need: 100, got: trials });
    }
    let inner = if compressor.is_stochastic() { 100 } else { 1 };
    let mut max_ratio = f64::NEG_INFINITY;
    let mut half_width = 0.0;
    let mut ratio_sum = 0.0;
    let mut used = 0usize;
    for _ in 0..trials {
        let x = sampler(rng);
        let norm_sq = x.norm_squared();
        if norm_sq == 0.0 {
            continue;
        }
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..inner {
            let msg = compressor.compress(&x, rng)?;
            let r = (&x - &msg.payload).norm_squared() / norm_sq;
            sum += r;
            sum_sq += r * r;
        }
        let mean = sum / inner as f64;
        ratio_sum += mean;
        used += 1;
        if mean > max_ratio {
            max_ratio = mean;
            half_width = if inner > 1 {
                let var = (sum_sq - sum * sum / inner as f64) / (inner as f64 - 1.0);
                3.0 * (var.max(0.0) / inner as f64).sqrt()
            } else {
                0.0
            };
        }
    }
    if used == 0 {
        return Err(CompressorError::AllZeroSamples);
    }
    Ok(DeltaEstimate { max_ratio, mean_ratio: ratio_sum / used as f64, half_width, samples: used })
}

/// Result of the unbiasedness check at a fixed input.
#[derive(Debug, Clone, Copy)]
pub struct BiasEstimate {
    /// `‖mean(𝒞(x)) − x‖` over the trials.
    pub bias_norm: f64,
    /// 3σ statistical band for the mean estimate.
    pub band: f64,
    /// Within the band for the stochastic quantizer; exactly zero for the
    /// deterministic kinds.
    pub pass: bool,
}

/// Estimate `‖𝔼(𝒞(x)) − x‖` by Monte Carlo with a 3σ band.
pub fn check_unbiased(
    compressor: &Compressor,
    x: &DVector<f64>,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<BiasEstimate, CompressorError> {
    if trials < 1000 {
        return Err(CompressorError::TooFewTrials { need: 1000, got: trials });
    }
    let d = x.len();
    let mut mean = DVector::<f64>::zeros(d);
    let mut m2 = DVector::<f64>::zeros(d);
    for t in 0..trials {
        let msg = compressor.compress(x, rng)?;
        // Welford update per coordinate
        for i in 0..d {
            let delta = msg.payload[i] - mean[i];
            mean[i] += delta / (t as f64 + 1.0);
            m2[i] += delta * (msg.payload[i] - mean[i]);
        }
    }
    let var_sum: f64 = m2.iter().map(|v| v / (trials as f64 - 1.0)).sum();
    let band = 3.0 * (var_sum / trials as f64).sqrt();
    let bias_norm = (mean - x).norm();
    let pass = if compressor.is_stochastic() { bias_norm <= band } else { bias_norm == 0.0 };
    Ok(BiasEstimate { bias_norm, band, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngstream;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand_distr::StandardNormal;

    fn normal_vec(d: usize, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn det_quant_worked_example() {
        let c = Compressor::det_quant(2).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.5]);
        let msg = c.compress(&x, &mut rngstream::tagged(0, 0)).unwrap();
        assert_abs_diff_eq!(msg.payload[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(msg.payload[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!((x - msg.payload).norm_squared(), 1.0 / 36.0, epsilon = 1e-15);
        assert_eq!(msg.bits, 32 + 2 * 2);
    }

    #[test]
    fn zero_vector_maps_to_zero() {
        let zero = DVector::zeros(4);
        for c in [
            Compressor::det_quant(3).unwrap(),
            Compressor::stoch_quant(3).unwrap(),
            Compressor::top_k(2).unwrap(),
            Compressor::Identity,
        ] {
            let msg = c.compress(&zero, &mut rngstream::tagged(1, 1)).unwrap();
            assert_eq!(msg.payload, zero);
            assert_eq!(msg.bits, c.bit_cost(4));
        }
    }

    #[test]
    fn det_quant_scalar_inputs_are_exact() {
        for bits in 1..=8 {
            let c = Compressor::det_quant(bits).unwrap();
            for &s in &[0.3, -0.7, 1.0, -2.5e-3, 11.0] {
                let x = DVector::from_vec(vec![s]);
                let msg = c.compress(&x, &mut rngstream::tagged(2, 2)).unwrap();
                assert_eq!(msg.payload[0], s, "bits {bits}, s {s}");
            }
        }
    }

    #[test]
    fn stoch_quant_expectation_matches_bernoulli() {
        let c = Compressor::stoch_quant(1).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.3]);
        let mut rng = rngstream::tagged(3, 3);
        let trials = 100_000;
        let mut sum = 0.0;
        for _ in 0..trials {
            let msg = c.compress(&x, &mut rng).unwrap();
            assert!(msg.payload[1] == 0.0 || msg.payload[1] == 1.0);
            assert_eq!(msg.payload[0], 1.0);
            sum += msg.payload[1];
        }
        let mean = sum / trials as f64;
        // Bernoulli(0.3): 3σ ≈ 3·sqrt(0.21/1e5) ≈ 0.0043
        assert!((mean - 0.3).abs() < 3.0 * (0.3f64 * 0.7 / trials as f64).sqrt() + 1e-6);
    }

    #[test]
    fn stoch_quant_output_lies_on_lattice() {
        let mut rng = rngstream::tagged(4, 4);
        for bits in [1u32, 2, 4] {
            let c = Compressor::stoch_quant(bits).unwrap();
            for _ in 0..200 {
                let x = normal_vec(6, &mut rng);
                let xinf = x.amax();
                let scale = xinf / (1u64 << (bits - 1)) as f64;
                let msg = c.compress(&x, &mut rng).unwrap();
                for i in 0..6 {
                    let m = msg.payload[i] / scale;
                    assert!((m - m.round()).abs() < 1e-9, "off-lattice output {}", msg.payload[i]);
                    assert!(msg.payload[i] * x[i] >= 0.0, "sign flipped");
                }
            }
        }
    }

    #[test]
    fn top_k_keeps_largest_and_breaks_ties_low_index() {
        let c = Compressor::top_k(2).unwrap();
        let x = DVector::from_vec(vec![1.0, -3.0, 2.0, -1.0]);
        let msg = c.compress(&x, &mut rngstream::tagged(5, 5)).unwrap();
        assert_eq!(msg.payload, DVector::from_vec(vec![0.0, -3.0, 2.0, 0.0]));
        // tie between |x_0| and |x_3|: lowest index wins
        let x = DVector::from_vec(vec![1.0, -3.0, 0.5, -1.0]);
        let msg = c.compress(&x, &mut rngstream::tagged(5, 5)).unwrap();
        assert_eq!(msg.payload, DVector::from_vec(vec![1.0, -3.0, 0.0, 0.0]));
        assert_eq!(msg.bits, (32 + 2) * 2);
    }

    #[test]
    fn top_k_rejects_oversized_k() {
        let c = Compressor::top_k(5).unwrap();
        let x = DVector::zeros(3);
        assert!(matches!(
            c.compress(&x, &mut rngstream::tagged(6, 6)),
            Err(CompressorError::KExceedsDimension { k: 5, d: 3 })
        ));
        assert_eq!(c.delta_bound(3), None);
    }

    #[test]
    fn bit_costs_follow_the_counting_model() {
        assert_eq!(Compressor::Identity.bit_cost(24), 32 * 24);
        assert_eq!(Compressor::det_quant(2).unwrap().bit_cost(24), 32 + 2 * 24);
        assert_eq!(Compressor::stoch_quant(2).unwrap().bit_cost(24), 32 + 3 * 24);
        assert_eq!(Compressor::top_k(3).unwrap().bit_cost(24), (32 + 5) * 3);
        assert_eq!(Compressor::top_k(1).unwrap().bit_cost(1), 32);
    }

    #[test]
    fn delta_bounds() {
        assert_eq!(Compressor::Identity.delta_bound(10), Some(0.0));
        assert_abs_diff_eq!(
            Compressor::det_quant(4).unwrap().delta_bound(8).unwrap(),
            8.0 / 225.0,
            epsilon = 1e-15
        );
        // bound ≥ 1 is useless and therefore absent
        assert_eq!(Compressor::det_quant(1).unwrap().delta_bound(8), None);
        assert_eq!(Compressor::stoch_quant(4).unwrap().delta_bound(8), None);
        assert_abs_diff_eq!(
            Compressor::top_k(2).unwrap().delta_bound(8).unwrap(),
            0.75,
            epsilon = 1e-15
        );
    }

    #[test]
    fn rejects_non_finite_input() {
        let x = DVector::from_vec(vec![1.0, f64::NAN]);
        assert!(matches!(
            Compressor::Identity.compress(&x, &mut rngstream::tagged(7, 7)),
            Err(CompressorError::NonFinite)
        ));
    }

    #[test]
    fn compression_is_bit_reproducible() {
        let x = DVector::from_vec(vec![0.3, -1.7, 0.05, 2.4]);
        for c in [
            Compressor::det_quant(3).unwrap(),
            Compressor::stoch_quant(3).unwrap(),
            Compressor::top_k(2).unwrap(),
        ] {
            let a = c.compress(&x, &mut rngstream::stream(9, 0, 1, 2)).unwrap();
            let b = c.compress(&x, &mut rngstream::stream(9, 0, 1, 2)).unwrap();
            assert_eq!(a.payload, b.payload);
            assert_eq!(a.bits, b.bits);
        }
    }

    #[test]
    fn empirical_delta_identity_and_full_top_k_are_zero() {
        let mut rng = rngstream::tagged(8, 8);
        let est = empirical_delta(&Compressor::Identity, |r| normal_vec(6, r), 200, &mut rng)
            .unwrap();
        assert_eq!(est.max_ratio, 0.0);
        let est = empirical_delta(
            &Compressor::top_k(6).unwrap(),
            |r| normal_vec(6, r),
            200,
            &mut rng,
        )
        .unwrap();
        assert_eq!(est.max_ratio, 0.0);
    }

    #[test]
    fn empirical_delta_det_quant_respects_analytic_bound() {
        let mut rng = rngstream::tagged(9, 9);
        let c = Compressor::det_quant(4).unwrap();
        let est = empirical_delta(&c, |r| normal_vec(8, r), 2000, &mut rng).unwrap();
        assert!(est.max_ratio <= c.delta_bound(8).unwrap() + 1e-12);
        assert!(est.mean_ratio <= est.max_ratio);
    }

    #[test]
    fn empirical_delta_enforces_trial_floor_and_skips_zeros() {
        let mut rng = rngstream::tagged(10, 10);
        assert!(matches!(
            empirical_delta(&Compressor::Identity, |r| normal_vec(3, r), 50, &mut rng),
            Err(CompressorError::TooFewTrials { .. })
        ));
        assert!(matches!(
            empirical_delta(&Compressor::Identity, |_| DVector::zeros(3), 100, &mut rng),
            Err(CompressorError::AllZeroSamples)
        ));
    }

    #[test]
    fn unbiasedness_estimates() {
        let mut rng = rngstream::tagged(11, 11);
        let x = DVector::from_vec(vec![1.0, 0.3]);

        let est = check_unbiased(&Compressor::stoch_quant(1).unwrap(), &x, 100_000, &mut rng)
            .unwrap();
        assert!(est.pass, "bias {} exceeds band {}", est.bias_norm, est.band);

        let est = check_unbiased(&Compressor::Identity, &x, 1000, &mut rng).unwrap();
        assert_eq!(est.bias_norm, 0.0);
        assert!(est.pass);

        // deterministic quantizer at b = 1: output (1, 1), bias (0, 0.7)
        let x = DVector::from_vec(vec![1.0, 0.5]);
        let est = check_unbiased(&Compressor::det_quant(1).unwrap(), &x, 1000, &mut rng).unwrap();
        assert_abs_diff_eq!(est.bias_norm, 0.5, epsilon = 1e-12);
        assert!(!est.pass);
    }

    proptest! {
        #[test]
        fn det_quant_error_bounded_by_half_tau(
            coords in proptest::collection::vec(-100.0f64..100.0, 1..16),
            bits in 1u32..7,
        ) {
            let x = DVector::from_vec(coords);
            prop_assume!(x.amax() > 0.0);
            let c = Compressor::det_quant(bits).unwrap();
            let msg = c.compress(&x, &mut rngstream::tagged(12, 12)).unwrap();
            let tau = 2.0 * x.amax() / ((1u64 << bits) as f64 - 1.0);
            let err = (&x - &msg.payload).amax();
            prop_assert!(err <= 0.5 * tau * (1.0 + 1e-12));
        }

        #[test]
        fn contraction_holds_pointwise_for_deterministic_kinds(
            coords in proptest::collection::vec(-10.0f64..10.0, 1..32),
            bits in 2u32..8,
        ) {
            let x = DVector::from_vec(coords.clone());
            prop_assume!(x.norm_squared() > 0.0);
            let d = x.len();
            let mut rng = rngstream::tagged(13, 13);
            for c in [Compressor::det_quant(bits).unwrap(), Compressor::top_k(1 + d / 2).unwrap()] {
                if let Some(bound) = c.delta_bound(d) {
                    let msg = c.compress(&x, &mut rng).unwrap();
                    let ratio = (&x - &msg.payload).norm_squared() / x.norm_squared();
                    prop_assert!(ratio <= bound + 1e-12, "ratio {ratio} > bound {bound}");
                }
            }
        }
    }
}
