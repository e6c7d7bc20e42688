//! Communication graphs and their spectral quantities.
//!
//! Agents sit on an undirected simple graph. Two Laplacians drive
//! everything downstream: the signed Laplacian `L = D − W` and the
//! signless Laplacian `L_s = D + W`. The algorithm's admissibility
//! assumption is that the graph is connected (`λ_2(L) > 0`) and `L_s` is
//! positive definite (`λ̂_1 > 0`, equivalently: the graph is
//! non-bipartite). The edge-incidence operators `M` and `M_s` satisfy
//! `L = ½MᵀM` and `L_s = ½M_sᵀM_s` and are consumed by the Lyapunov
//! diagnostics.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

/// Zero test tolerance for eigenvalues (connectivity, bipartiteness).
pub const ZERO_EIG_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("need at least 2 agents, got {0}")]
    TooFewAgents(usize),

    #[error("edge probability must lie in (0, 1], got {0}")]
    EdgeProbabilityOutOfRange(f64),

    #[error("edge ({0}, {1}) is a self-loop")]
    SelfLoop(usize, usize),

    #[error("edge endpoint {0} out of range for {1} agents")]
    EndpointOutOfRange(usize, usize),

    #[error("no graph satisfying the connectivity assumptions found in {attempts} attempts (n = {n}, tau = {tau})")]
    NoAdmissibleGraph { n: usize, tau: f64, attempts: usize },

    #[error("graph file line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Undirected simple graph on agents `0..n`.
///
/// Edges are stored as ordered pairs `(i, j)` with `i < j`; neighbor lists
/// are precomputed. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Build a graph from an edge list. Pairs may come in either
    /// orientation; duplicates collapse. Self-loops are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooFewAgents(n));
        }
        let mut set = std::collections::BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(GraphError::SelfLoop(a, b));
            }
            let e = (a.min(b), a.max(b));
            if e.1 >= n {
                return Err(GraphError::EndpointOutOfRange(e.1, n));
            }
            set.insert(e);
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self { n, edges, neighbors })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as `(i, j)` with `i < j`, sorted lexicographically.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.degree(i)).collect()
    }

    /// 0/1 adjacency matrix `W`.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            w[(i, j)] = 1.0;
            w[(j, i)] = 1.0;
        }
        w
    }

    /// Diagonal degree matrix `D`.
    pub fn degree_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| if i == j { self.degree(i) as f64 } else { 0.0 })
    }

    /// Signed Laplacian `L = D − W`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        self.degree_matrix() - self.adjacency()
    }

    /// Signless Laplacian `L_s = D + W`.
    pub fn signless_laplacian(&self) -> DMatrix<f64> {
        self.degree_matrix() + self.adjacency()
    }

    /// Serialize to the plain-text edge-list format (1-indexed, `i < j`).
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "n {}", self.n).unwrap();
        for &(i, j) in &self.edges {
            writeln!(out, "{} {}", i + 1, j + 1).unwrap();
        }
        out
    }

    /// Parse the plain-text edge-list format: first line `n <count>`,
    /// then one `i j` pair per line, 1-indexed with `i < j`. Duplicate
    /// and self-loop lines are rejected.
    pub fn from_file_str(text: &str) -> Result<Self, GraphError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| GraphError::Parse { line: 1, msg: "empty file".into() })?;
        let mut parts = header.split_whitespace();
        let n = match (parts.next(), parts.next(), parts.next()) {
            (Some("n"), Some(cnt), None) => cnt.parse::<usize>().map_err(|e| GraphError::Parse {
                line: 1,
                msg: format!("bad agent count: {e}"),
            })?,
            _ => {
                return Err(GraphError::Parse {
                    line: 1,
                    msg: format!("expected `n <count>`, got `{header}`"),
                })
            }
        };
        if n < 2 {
            return Err(GraphError::TooFewAgents(n));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (idx, raw) in lines {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(GraphError::Parse {
                    line: line_no,
                    msg: format!("expected `i j`, got `{line}`"),
                });
            }
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|e| GraphError::Parse {
                    line: line_no,
                    msg: format!("bad endpoint `{s}`: {e}"),
                })
            };
            let (i, j) = (parse(fields[0])?, parse(fields[1])?);
            if i == 0 || j == 0 || i > n || j > n {
                return Err(GraphError::Parse {
                    line: line_no,
                    msg: format!("endpoints must lie in 1..={n}"),
                });
            }
            if i == j {
                return Err(GraphError::Parse { line: line_no, msg: format!("self-loop {i} {j}") });
            }
            if i >= j {
                return Err(GraphError::Parse {
                    line: line_no,
                    msg: format!("endpoints must satisfy i < j, got {i} {j}"),
                });
            }
            if !seen.insert((i - 1, j - 1)) {
                return Err(GraphError::Parse { line: line_no, msg: format!("duplicate edge {i} {j}") });
            }
        }
        Self::new(n, seen)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        Self::from_file_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        Ok(std::fs::write(path, self.to_file_string())?)
    }
}

/// Eigenvalues of both Laplacians plus the derived admissibility flags.
#[derive(Debug, Clone)]
pub struct SpectralSummary {
    /// Eigenvalues of `L = D − W`, ascending.
    pub lambda: Vec<f64>,
    /// Eigenvalues of `L_s = D + W`, ascending.
    pub lambda_hat: Vec<f64>,
    /// `λ_2 > ZERO_EIG_TOL`.
    pub connected: bool,
    /// `λ̂_1 > ZERO_EIG_TOL`; for a connected graph this means non-bipartite.
    pub non_bipartite: bool,
}

impl SpectralSummary {
    pub fn lambda_2(&self) -> f64 {
        self.lambda[1]
    }

    pub fn lambda_n(&self) -> f64 {
        *self.lambda.last().unwrap()
    }

    pub fn lambda_hat_1(&self) -> f64 {
        self.lambda_hat[0]
    }

    pub fn lambda_hat_n(&self) -> f64 {
        *self.lambda_hat.last().unwrap()
    }
}

/// Eigendecompose both Laplacians and set the admissibility flags.
pub fn spectra(g: &Graph) -> SpectralSummary {
    let lambda = sorted_eigenvalues(g.laplacian());
    let lambda_hat = sorted_eigenvalues(g.signless_laplacian());
    SpectralSummary {
        connected: lambda[1] > ZERO_EIG_TOL,
        non_bipartite: lambda_hat[0] > ZERO_EIG_TOL,
        lambda,
        lambda_hat,
    }
}

fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Outcome of checking the communication-graph assumptions.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub pass: bool,
    /// Names of failed assumptions, empty on pass.
    pub failures: Vec<String>,
}

/// The graph must be connected and `L_s` positive definite.
pub fn validate_assumptions(s: &SpectralSummary) -> AssumptionReport {
    let mut failures = Vec::new();
    if !s.connected {
        failures.push("graph not connected".to_string());
    }
    if !s.non_bipartite {
        failures.push("L_s not positive definite".to_string());
    }
    AssumptionReport { pass: failures.is_empty(), failures }
}

/// Edge-incidence operators: `M` is `2|E| × n` with rows `e_i − e_j` for
/// both orientations of every edge, so that `L = ½MᵀM`; `M_s` uses
/// `e_i + e_j` rows, so that `L_s = ½M_sᵀM_s`.
#[derive(Debug, Clone)]
pub struct EdgeOperator {
    pub m: DMatrix<f64>,
    pub m_s: DMatrix<f64>,
}

/// Build the incidence operators. Row order: for each edge `(i, j)` with
/// `i < j` in sorted order, first the `i→j` row then the `j→i` row.
pub fn incidence(g: &Graph) -> EdgeOperator {
    let rows = 2 * g.edge_count();
    let mut m = DMatrix::zeros(rows, g.n());
    let mut m_s = DMatrix::zeros(rows, g.n());
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        m[(2 * e, i)] = 1.0;
        m[(2 * e, j)] = -1.0;
        m[(2 * e + 1, j)] = 1.0;
        m[(2 * e + 1, i)] = -1.0;
        m_s[(2 * e, i)] = 1.0;
        m_s[(2 * e, j)] = 1.0;
        m_s[(2 * e + 1, j)] = 1.0;
        m_s[(2 * e + 1, i)] = 1.0;
    }
    EdgeOperator { m, m_s }
}

/// Sample an Erdős–Rényi graph: each of the `n(n−1)/2` pairs is an edge
/// independently with probability `tau`. Deterministic in `(n, tau, seed)`.
pub fn gen_random_graph(n: usize, tau: f64, seed: u64) -> Result<Graph, GraphError> {
    if n < 2 {
        return Err(GraphError::TooFewAgents(n));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(GraphError::EdgeProbabilityOutOfRange(tau));
    }
    let mut rng = crate::rngstream::tagged(seed, 0x6772_6170_68); // "graph"
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < tau {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, edges)
}

/// Sample graphs at seeds `seed, seed+1, …` until one passes
/// [`validate_assumptions`], giving up after 100 attempts.
pub fn gen_admissible_graph(n: usize, tau: f64, seed: u64) -> Result<(Graph, SpectralSummary), GraphError> {
    const MAX_ATTEMPTS: usize = 100;
    for attempt in 0..MAX_ATTEMPTS as u64 {
        let g = gen_random_graph(n, tau, seed.wrapping_add(attempt))?;
        let s = spectra(&g);
        if validate_assumptions(&s).pass {
            return Ok((g, s));
        }
    }
    Err(GraphError::NoAdmissibleGraph { n, tau, attempts: MAX_ATTEMPTS })
}

/// Complete graph on `n` vertices; `complete_graph(3)` is the smallest
/// admissible topology.
pub fn complete_graph(n: usize) -> Result<Graph, GraphError> {
    let edges = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j)));
    Graph::new(n, edges)
}
