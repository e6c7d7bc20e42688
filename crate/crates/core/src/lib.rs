//! Decentralized second-order consensus optimization with communication
//! censoring and compression.
//!
//! `n` agents on an undirected graph cooperatively minimize `Σ_i f_i(x)`
//! by exchanging messages with their neighbors. The iteration implemented
//! here is an ADMM-derived quadratically-approximated method in which each
//! agent keeps a primal iterate `x_i`, a dual variable `φ_i`, and public
//! state variables `y_j` tracking the last broadcast estimate of every
//! neighbor (and of itself). Communication is *censored*: an agent
//! transmits only when its innovation `‖x_i − y_i‖` exceeds a decaying
//! threshold, and what it transmits is a *compressed* innovation produced
//! by a δ-contractive compressor. Hessian factorizations are refreshed
//! only on transmission, so quiet iterations also skip the matrix solve
//! setup.
//!
//! Crate layout:
//!
//! - [`netgraph`] — communication graphs, signed/unsigned Laplacians and
//!   their spectra, edge-incidence operators.
//! - [`objectives`] — per-agent objective functions (quadratic, logistic)
//!   with exact gradients/Hessians and convexity constants.
//! - [`compressors`] — the δ-contractive compressor family with bit-cost
//!   accounting and empirical contractivity/bias estimators.
//! - [`engine`] — the iteration-synchronous multi-agent state machine,
//!   the centralized Newton oracle, and Lyapunov/error-recursion
//!   diagnostics.
//! - [`analysis`] — parameter-feasibility checks derived from the graph
//!   spectrum and objective constants, plus empirical rate fitting.
//! - [`config`] / [`experiment`] — the key/value experiment configuration
//!   format and the runners that wire everything together (used by the
//!   `ccdqm` CLI).

pub mod analysis;
pub mod compressors;
pub mod config;
pub mod engine;
pub mod experiment;
pub mod netgraph;
pub mod objectives;
pub mod rngstream;
