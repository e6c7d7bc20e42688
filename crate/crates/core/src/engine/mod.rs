//! The iteration-synchronous multi-agent state machine.
//!
//! One iteration `k → k+1` runs three phases in lockstep across all
//! agents:
//!
//! 1. **primal** — each agent takes a damped-Newton step using its cached
//!    factorization of `2c·d_i·I + ∇²f_i(y_i)`:
//!    `x_i ← x_i − (2c·d_i·I + ∇²f_i(y_i))⁻¹(∇f_i(x_i) + c·Σ_j(y_i − y_j) + φ_i)`;
//! 2. **communicate** — an agent transmits iff its innovation
//!    `‖x_i − y_i‖` reaches the threshold `μ(k)`; what travels is the
//!    compressed innovation, applied to `y_i` at the sender *and* at every
//!    neighbor's copy, keeping all views consistent. A transmitting agent
//!    also schedules a Hessian refresh, since its `y_i` moved;
//! 3. **dual** — `φ_i ← φ_i + c·Σ_j(y_i − y_j)` on the fresh `y` values.
//!
//! Variants fall out of the `(schedule, compressor)` pair: zero threshold
//! plus identity compressor is the always-communicating base method; a
//! geometric threshold censors communication; a non-identity compressor
//! shrinks payloads; combining both gives the full algorithm.
//!
//! All randomness is drawn from per-`(replica, agent, iteration)` counter
//! streams, so trajectories are byte-stable under any execution order.

pub mod diagnostics;
pub mod newton;

pub use diagnostics::{error_recursion_check, LyapunovTracker, RecursionCheck, VComponents};
pub use newton::{centralized_solve, CentralizedSolution};

use crate::compressors::{Compressor, CompressorError};
use crate::netgraph::{incidence, spectra, validate_assumptions, Graph};
use crate::objectives::{LocalObjective, ObjectiveError};
use crate::rngstream;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::StandardNormal;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("communication graph failed assumptions: {0}")]
    AssumptionsFailed(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),

    #[error("positive-definite factorization failed for agent {agent} at iteration {iter} (internal error: the matrix 2c d_i I + hessian must be PD)")]
    FactorizationFailed { agent: usize, iter: usize },

    #[error("centralized Newton solve did not converge in {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NewtonDidNotConverge { iterations: usize, grad_norm: f64 },

    #[error("dual/edge-variable consistency check failed at iteration {iter}: residual {residual:.3e} (implementation bug)")]
    LyapunovInconsistent { iter: usize, residual: f64 },

    #[error("compressor declared delta = 0 but the error recursion shows compression error (min slack {min_slack:.3e})")]
    MisdeclaredCompressor { min_slack: f64 },

    #[error("error-recursion check needs at least 2 recorded iterations")]
    RecursionTooShort,

    #[error(transparent)]
    Objective(#[from] ObjectiveError),

    #[error(transparent)]
    Compressor(#[from] CompressorError),
}

/// Trigger threshold for the step `k → k+1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    /// `μ ≡ 0`: every agent transmits every iteration.
    Zero,
    /// `μ(k) = α·ρ^k` with `α > 0`, `0 < ρ < 1`.
    Geometric { alpha: f64, rho: f64 },
}

impl Schedule {
    pub fn threshold(&self, k: usize) -> f64 {
        match *self {
            Schedule::Zero => 0.0,
            Schedule::Geometric { alpha, rho } => alpha * rho.powi(k as i32),
        }
    }
}

/// What one unit of `bits_cum` counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitAccounting {
    /// One encoded message per directed neighbor link: a broadcast by
    /// agent `i` costs `d_i × bits`.
    PerLink,
    /// One encoded message per transmitting agent.
    PerBroadcast,
}

/// Algorithm variant implied by `(schedule, compressor)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Dqm,
    CDqm,
    QDqm,
    CcDqm,
}

impl Variant {
    pub fn of(schedule: &Schedule, compressor: &Compressor) -> Self {
        let censored = matches!(schedule, Schedule::Geometric { .. });
        let compressed = !matches!(compressor, Compressor::Identity);
        match (censored, compressed) {
            (false, false) => Variant::Dqm,
            (true, false) => Variant::CDqm,
            (false, true) => Variant::QDqm,
            (true, true) => Variant::CcDqm,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Dqm => "dqm",
            Variant::CDqm => "cdqm",
            Variant::QDqm => "qdqm",
            Variant::CcDqm => "ccdqm",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Penalty parameter, `> 0`.
    pub c: f64,
    pub schedule: Schedule,
    pub compressor: Compressor,
    pub max_iter: usize,
    /// Stop once the normalized error reaches this value.
    pub tol: f64,
    pub seed: u64,
    /// Replica index, folded into every RNG stream.
    pub replica: u64,
    pub bit_accounting: BitAccounting,
    /// When false, refactorize every agent every iteration (reference
    /// behavior for validating the refresh scheduling).
    pub hessian_caching: bool,
    /// Maintain the Lyapunov tracker and its consistency check.
    pub lyapunov: bool,
    /// Weight of the compression-error term in `V_k`; `None` picks the
    /// descent-lemma lower bound at `β*`.
    pub r_weight: Option<f64>,
}

impl RunConfig {
    pub fn new(c: f64, schedule: Schedule, compressor: Compressor) -> Self {
        Self {
            c,
            schedule,
            compressor,
            max_iter: 500,
            tol: 1e-12,
            seed: 0,
            replica: 0,
            bit_accounting: BitAccounting::PerLink,
            hessian_caching: true,
            lyapunov: true,
            r_weight: None,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(EngineError::InvalidConfig(format!("c must be positive, got {}", self.c)));
        }
        if let Schedule::Geometric { alpha, rho } = self.schedule {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(EngineError::InvalidConfig(format!(
                    "schedule alpha must be positive, got {alpha}"
                )));
            }
            if !(rho > 0.0 && rho < 1.0) {
                return Err(EngineError::InvalidConfig(format!(
                    "schedule rho must lie in (0, 1), got {rho}"
                )));
            }
        }
        if self.max_iter == 0 {
            return Err(EngineError::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(EngineError::InvalidConfig(format!("tol must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }

    pub fn variant(&self) -> Variant {
        Variant::of(&self.schedule, &self.compressor)
    }
}

/// Per-agent state.
#[derive(Debug, Clone)]
pub struct AgentState {
    /// Primal iterate `x_i`.
    pub x: DVector<f64>,
    /// Own state variable `y_i` (last value the network knows).
    pub y_self: DVector<f64>,
    /// Neighbor state variables `y_j`, kept in lockstep with each
    /// neighbor's `y_self` by the communication phase.
    pub y_neighbors: BTreeMap<usize, DVector<f64>>,
    /// Dual variable `φ_i`.
    pub phi: DVector<f64>,
    /// Iteration at which `y_self` last changed (factorization version).
    pub hess_version: usize,
    factor: Cholesky<f64, Dyn>,
}

/// Metrics of one recorded iteration. Row 0 is the initial state.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    /// `‖x_k − x*‖²/‖x_0 − x*‖²` (absolute squared distance when the run
    /// starts exactly at `x*`).
    pub err: f64,
    /// `‖(I − 11ᵀ/n)x_k‖`.
    pub consensus_err: f64,
    /// `‖∇f(x_k) + φ_k‖`.
    pub dual_residual: f64,
    pub bits_cum: u64,
    /// Cumulative agent-transmissions.
    pub rounds_cum: u64,
    /// Transmissions this iteration.
    pub triggers: usize,
    /// Factorizations performed this iteration.
    pub hess_refresh: usize,
    /// Lyapunov components, when tracking is enabled.
    pub v: Option<VComponents>,
    /// `‖y_k − x_k‖²` (compression/censoring error energy).
    pub e_norm_sq: f64,
    /// `‖x_k − x_{k−1}‖²`; zero on row 0.
    pub dx_norm_sq: f64,
    /// Threshold used by the step that produced this row; NaN on row 0.
    pub mu: f64,
}

/// Full trajectory of one run plus summary counters.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub variant: Variant,
    pub rows: Vec<IterationRecord>,
    pub converged: bool,
    pub bits_link_total: u64,
    pub bits_broadcast_total: u64,
    pub n_agents: usize,
    pub dimension: usize,
    /// Final primal iterates, one agent per row.
    pub final_x: DMatrix<f64>,
}

/// Canonical float formatting for metrics files: 17 significant digits.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub const METRICS_HEADER: &str =
    "iter,err,consensus_err,dual_residual,bits_cum,rounds_cum,triggers,hess_refresh,V_total,V_primal,V_dual,V_error";

impl RunRecord {
    pub fn final_err(&self) -> f64 {
        self.rows.last().map(|r| r.err).unwrap_or(f64::NAN)
    }

    pub fn err_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.err).collect()
    }

    /// First row whose error is at or below `tol`.
    pub fn first_row_reaching(&self, tol: f64) -> Option<&IterationRecord> {
        self.rows.iter().find(|r| r.err <= tol)
    }

    /// Metrics CSV: one row per iteration, floats at 17 significant digits.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 160);
        out.push_str(METRICS_HEADER);
        out.push('\n');
        for r in &self.rows {
            let (vt, vp, vd, ve) = match r.v {
                Some(v) => (v.total(), v.primal, v.dual, v.error),
                None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.iter,
                format_float(r.err),
                format_float(r.consensus_err),
                format_float(r.dual_residual),
                r.bits_cum,
                r.rounds_cum,
                r.triggers,
                r.hess_refresh,
                format_float(vt),
                format_float(vp),
                format_float(vd),
                format_float(ve),
            ));
        }
        out
    }
}

/// The multi-agent simulator. Owns all agent state; the run loop is the
/// only mutator, so records come out identical regardless of how the
/// per-agent work would be scheduled.
pub struct Simulator {
    graph: Graph,
    objectives: Vec<LocalObjective>,
    config: RunConfig,
    x_star: DVector<f64>,
    agents: Vec<AgentState>,
    grads: Vec<DVector<f64>>,
    k: usize,
    x0_dist_sq: f64,
    bits_link: u64,
    bits_broadcast: u64,
    rounds: u64,
    lyap: Option<LyapunovTracker>,
    rows: Vec<IterationRecord>,
    d: usize,
}

impl Simulator {
    /// Initialize a run: `x_{i,0}` seeded standard normal, `φ = y = 0`,
    /// Hessian factorizations taken at `y = 0`.
    pub fn new(
        graph: Graph,
        objectives: Vec<LocalObjective>,
        config: RunConfig,
        x_star: DVector<f64>,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let n = graph.n();
        if objectives.len() != n {
            return Err(EngineError::Dimension(format!(
                "{} objectives for {} agents",
                objectives.len(),
                n
            )));
        }
        let d = objectives[0].dimension();
        if objectives.iter().any(|o| o.dimension() != d) {
            return Err(EngineError::Dimension("objectives disagree on dimension".into()));
        }
        if x_star.len() != d {
            return Err(EngineError::Dimension(format!(
                "x_star has dimension {}, objectives have {}",
                x_star.len(),
                d
            )));
        }
        let summary = spectra(&graph);
        let report = validate_assumptions(&summary);
        if !report.pass {
            return Err(EngineError::AssumptionsFailed(report.failures.join("; ")));
        }

        let mut agents = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = rngstream::stream(config.seed, config.replica, i as u64, u64::MAX);
            let x = DVector::from_fn(d, |_, _| {
                rand::Rng::sample::<f64, _>(&mut rng, StandardNormal)
            });
            let y_self = DVector::zeros(d);
            let y_neighbors =
                graph.neighbors(i).iter().map(|&j| (j, DVector::zeros(d))).collect();
            let factor = factorize(&objectives[i], &y_self, config.c, graph.degree(i))
                .ok_or(EngineError::FactorizationFailed { agent: i, iter: 0 })?;
            agents.push(AgentState {
                x,
                y_self,
                y_neighbors,
                phi: DVector::zeros(d),
                hess_version: 0,
                factor,
            });
        }

        let lyap = if config.lyapunov {
            let r_weight = config.r_weight.unwrap_or_else(|| {
                let delta = config.compressor.delta_bound(d).unwrap_or(0.0);
                crate::analysis::default_r_weight(&summary, config.c, delta)
            });
            let phi_star_rows = phi_star_rows(&objectives, &x_star)?;
            let edge = incidence(&graph);
            let phi0 = DMatrix::zeros(n, d);
            Some(LyapunovTracker::new(
                edge,
                graph.signless_laplacian(),
                config.c,
                r_weight,
                &x_star,
                &phi_star_rows,
                &phi0,
            ))
        } else {
            None
        };

        let grads = agents
            .iter()
            .zip(&objectives)
            .map(|(a, o)| o.grad(&a.x))
            .collect::<Result<Vec<_>, _>>()?;
        let x0_dist_sq: f64 = agents.iter().map(|a| (&a.x - &x_star).norm_squared()).sum();

        let mut sim = Self {
            graph,
            objectives,
            config,
            x_star,
            agents,
            grads,
            k: 0,
            x0_dist_sq,
            bits_link: 0,
            bits_broadcast: 0,
            rounds: 0,
            lyap,
            rows: Vec::new(),
            d,
        };
        let n_factorizations = sim.agents.len();
        sim.record_row(0, n_factorizations, 0.0, f64::NAN);
        Ok(sim)
    }

    /// Overwrite the full state (used for fixed-point and warm-start
    /// runs). Counters and records reset; `y_neighbors` copies, Hessian
    /// factorizations, gradients, and the dual/edge tracker are rebuilt
    /// consistently.
    pub fn set_state(
        &mut self,
        x: &[DVector<f64>],
        phi: &[DVector<f64>],
        y: &[DVector<f64>],
    ) -> Result<(), EngineError> {
        let n = self.graph.n();
        if x.len() != n || phi.len() != n || y.len() != n {
            return Err(EngineError::Dimension("state vectors must cover every agent".into()));
        }
        if x.iter().chain(phi).chain(y).any(|v| v.len() != self.d) {
            return Err(EngineError::Dimension("state vector has wrong dimension".into()));
        }
        for i in 0..n {
            self.agents[i].x = x[i].clone();
            self.agents[i].y_self = y[i].clone();
            self.agents[i].phi = phi[i].clone();
            self.agents[i].hess_version = 0;
            let neighbor_ids: Vec<usize> = self.agents[i].y_neighbors.keys().copied().collect();
            for j in neighbor_ids {
                self.agents[i].y_neighbors.insert(j, y[j].clone());
            }
            self.agents[i].factor =
                factorize(&self.objectives[i], &self.agents[i].y_self, self.config.c, self.graph.degree(i))
                    .ok_or(EngineError::FactorizationFailed { agent: i, iter: 0 })?;
        }
        self.grads = self
            .agents
            .iter()
            .zip(&self.objectives)
            .map(|(a, o)| o.grad(&a.x))
            .collect::<Result<Vec<_>, _>>()?;
        self.x0_dist_sq = self.agents.iter().map(|a| (&a.x - &self.x_star).norm_squared()).sum();
        self.k = 0;
        self.bits_link = 0;
        self.bits_broadcast = 0;
        self.rounds = 0;
        self.rows.clear();
        let phi_rows = self.phi_rows();
        if let Some(lyap) = &mut self.lyap {
            lyap.reset_from_phi(&phi_rows);
        }
        self.record_row(0, n, 0.0, f64::NAN);
        Ok(())
    }

    pub fn iteration(&self) -> usize {
        self.k
    }

    pub fn agent(&self, i: usize) -> &AgentState {
        &self.agents[i]
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.rows
    }

    pub fn x_rows(&self) -> DMatrix<f64> {
        rows_from(&self.agents, |a| &a.x)
    }

    pub fn y_rows(&self) -> DMatrix<f64> {
        rows_from(&self.agents, |a| &a.y_self)
    }

    pub fn phi_rows(&self) -> DMatrix<f64> {
        rows_from(&self.agents, |a| &a.phi)
    }

    /// Advance one iteration (primal, communicate, dual) and record
    /// metrics.
    pub fn iterate(&mut self) -> Result<&IterationRecord, EngineError> {
        let n = self.graph.n();
        let k = self.k;
        let mu = self.config.schedule.threshold(k);
        let c = self.config.c;

        // primal: barrier semantics, all steps from the pre-iteration state
        let mut dx_sq = 0.0;
        for i in 0..n {
            let agent = &self.agents[i];
            let deg = self.graph.degree(i) as f64;
            let mut rhs = self.grads[i].clone();
            rhs += &agent.phi;
            let mut lap = &agent.y_self * deg;
            for y_j in agent.y_neighbors.values() {
                lap -= y_j;
            }
            rhs.axpy(c, &lap, 1.0);
            let step = agent.factor.solve(&rhs);
            if step.iter().any(|v| !v.is_finite()) {
                return Err(EngineError::FactorizationFailed { agent: i, iter: k });
            }
            dx_sq += step.norm_squared();
            let agent = &mut self.agents[i];
            agent.x -= step;
        }

        // communicate: trigger decisions against the fresh x, then apply
        let mut messages: Vec<Option<DVector<f64>>> = vec![None; n];
        let mut triggers = 0usize;
        for i in 0..n {
            let innovation = &self.agents[i].x - &self.agents[i].y_self;
            if innovation.norm() >= mu {
                let mut rng =
                    rngstream::stream(self.config.seed, self.config.replica, i as u64, k as u64);
                let msg = self.config.compressor.compress(&innovation, &mut rng)?;
                self.bits_link += msg.bits * self.graph.degree(i) as u64;
                self.bits_broadcast += msg.bits;
                self.rounds += 1;
                triggers += 1;
                messages[i] = Some(msg.payload);
            }
        }
        for i in 0..n {
            if let Some(payload) = &messages[i] {
                self.agents[i].y_self += payload;
                self.agents[i].hess_version = k + 1;
                for j in 0..self.graph.neighbors(i).len() {
                    let j = self.graph.neighbors(i)[j];
                    let entry = self.agents[j]
                        .y_neighbors
                        .get_mut(&i)
                        .expect("neighbor map covers all neighbors");
                    *entry += payload;
                }
            }
        }

        // Hessian refresh: transmitting agents moved their y_self
        let mut refreshes = 0usize;
        for i in 0..n {
            let due = if self.config.hessian_caching { messages[i].is_some() } else { true };
            if due {
                self.agents[i].factor =
                    factorize(&self.objectives[i], &self.agents[i].y_self, c, self.graph.degree(i))
                        .ok_or(EngineError::FactorizationFailed { agent: i, iter: k })?;
                refreshes += 1;
            }
        }

        // dual ascent on the post-communication y
        for i in 0..n {
            let deg = self.graph.degree(i) as f64;
            let agent = &self.agents[i];
            let mut lap = &agent.y_self * deg;
            for y_j in agent.y_neighbors.values() {
                lap -= y_j;
            }
            let agent = &mut self.agents[i];
            agent.phi += lap * c;
        }

        self.k = k + 1;
        for i in 0..n {
            self.grads[i] = self.objectives[i].grad(&self.agents[i].x)?;
        }
        if let Some(lyap) = &mut self.lyap {
            let y_rows = rows_from(&self.agents, |a| &a.y_self);
            let phi_rows = rows_from(&self.agents, |a| &a.phi);
            let residual = lyap.advance_and_check(&y_rows, &phi_rows);
            if residual > diagnostics::PHI_CONSISTENCY_TOL {
                return Err(EngineError::LyapunovInconsistent { iter: self.k, residual });
            }
        }
        self.record_row(triggers, refreshes, dx_sq, mu);
        Ok(self.rows.last().unwrap())
    }

    /// Iterate until the error tolerance or the iteration cap is reached,
    /// then consume the simulator into a [`RunRecord`].
    pub fn run(mut self) -> Result<RunRecord, EngineError> {
        while self.k < self.config.max_iter
            && self.rows.last().map(|r| r.err > self.config.tol).unwrap_or(true)
        {
            self.iterate()?;
        }
        let converged = self.rows.last().map(|r| r.err <= self.config.tol).unwrap_or(false);
        Ok(RunRecord {
            variant: self.config.variant(),
            converged,
            bits_link_total: self.bits_link,
            bits_broadcast_total: self.bits_broadcast,
            n_agents: self.graph.n(),
            dimension: self.d,
            final_x: self.x_rows(),
            rows: self.rows,
        })
    }

    fn record_row(&mut self, triggers: usize, refreshes: usize, dx_sq: f64, mu: f64) {
        let dist_sq: f64 =
            self.agents.iter().map(|a| (&a.x - &self.x_star).norm_squared()).sum();
        // normalized err; absolute when the run starts exactly at x*
        let err = if self.x0_dist_sq > 0.0 { dist_sq / self.x0_dist_sq } else { dist_sq };

        let n = self.graph.n() as f64;
        let mut mean = DVector::zeros(self.d);
        for a in &self.agents {
            mean += &a.x;
        }
        mean /= n;
        let consensus_err: f64 = self
            .agents
            .iter()
            .map(|a| (&a.x - &mean).norm_squared())
            .sum::<f64>()
            .sqrt();

        let dual_residual: f64 = self
            .agents
            .iter()
            .zip(&self.grads)
            .map(|(a, g)| (g + &a.phi).norm_squared())
            .sum::<f64>()
            .sqrt();

        let e_norm_sq: f64 =
            self.agents.iter().map(|a| (&a.y_self - &a.x).norm_squared()).sum();

        let v = self.lyap.as_ref().map(|l| {
            let x_rows = rows_from(&self.agents, |a| &a.x);
            let e_rows = rows_from(&self.agents, |a| &a.y_self) - &x_rows;
            l.components(&x_rows, &e_rows)
        });

        let bits_cum = match self.config.bit_accounting {
            BitAccounting::PerLink => self.bits_link,
            BitAccounting::PerBroadcast => self.bits_broadcast,
        };
        self.rows.push(IterationRecord {
            iter: self.k,
            err,
            consensus_err,
            dual_residual,
            bits_cum,
            rounds_cum: self.rounds,
            triggers,
            hess_refresh: refreshes,
            v,
            e_norm_sq,
            dx_norm_sq: dx_sq,
            mu,
        });
    }
}

fn rows_from<'a>(
    agents: &'a [AgentState],
    field: impl Fn(&'a AgentState) -> &'a DVector<f64>,
) -> DMatrix<f64> {
    let n = agents.len();
    let d = field(&agents[0]).len();
    DMatrix::from_fn(n, d, |i, j| field(&agents[i])[j])
}

fn factorize(
    obj: &LocalObjective,
    y: &DVector<f64>,
    c: f64,
    degree: usize,
) -> Option<Cholesky<f64, Dyn>> {
    let mut m = obj.hessian(y).ok()?;
    let shift = 2.0 * c * degree as f64;
    for i in 0..m.nrows() {
        m[(i, i)] += shift;
    }
    m.cholesky()
}

/// Stacked dual optimum `φ*` with rows `φ_i* = −∇f_i(x*)`.
pub fn phi_star_rows(
    objectives: &[LocalObjective],
    x_star: &DVector<f64>,
) -> Result<DMatrix<f64>, ObjectiveError> {
    let n = objectives.len();
    let d = x_star.len();
    let mut rows = DMatrix::zeros(n, d);
    for (i, obj) in objectives.iter().enumerate() {
        let g = obj.grad(x_star)?;
        for j in 0..d {
            rows[(i, j)] = -g[j];
        }
    }
    Ok(rows)
}
