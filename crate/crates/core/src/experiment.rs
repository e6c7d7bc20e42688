//! Configuration-driven experiment runners.
//!
//! [`run_experiment`] builds the problem instance (graph, per-agent data,
//! centralized optimum), optionally enforces the parameter-feasibility
//! check, runs the configured variant (replicated for stochastic
//! compressors), and writes metrics CSVs plus a metadata sidecar.
//! [`compare_variants`] runs several algorithm variants on one shared
//! problem instance and tabulates communication costs to a target error.

use crate::analysis::{self, AnalysisError, FeasibilityReport};
use crate::compressors::{empirical_delta, Compressor, CompressorError};
use crate::config::{
    ConfigError, DataSourceKind, ExperimentConfig, GraphSourceKind, ObjectiveKind,
};
use crate::engine::{
    centralized_solve, CentralizedSolution, EngineError, RunConfig, RunRecord, Schedule,
    Simulator, Variant, METRICS_HEADER,
};
use crate::netgraph::{
    gen_admissible_graph, spectra, validate_assumptions, Graph, GraphError, SpectralSummary,
};
use crate::objectives::{
    aggregate_constants, gen_synthetic_logistic, gen_synthetic_quadratic, load_csv,
    partition_round_robin, ConvexityConstants, LocalObjective, ObjectiveError,
};
use nalgebra::DVector;
use rand_distr::StandardNormal;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Graph(#[from] GraphError),

    #[error(transparent)]
    Objective(#[from] ObjectiveError),

    #[error(transparent)]
    Engine(#[from] EngineError),

    #[error(transparent)]
    Analysis(#[from] AnalysisError),

    #[error(transparent)]
    Compressor(#[from] CompressorError),

    #[error("feasibility check failed under --strict: {0}")]
    Infeasible(String),

    #[error("io error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    std::fs::write(path, contents)
        .map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })
}

/// A fully built problem instance shared by all variants/replicas of an
/// experiment.
pub struct Problem {
    pub graph: Graph,
    pub spectra: SpectralSummary,
    pub objectives: Vec<LocalObjective>,
    /// `None` when the objective is not strongly convex (λ_reg = 0).
    pub constants: Option<ConvexityConstants>,
    pub solution: CentralizedSolution,
}

/// Build graph, objectives, and the centralized optimum from a config.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem, ExperimentError> {
    let (graph, summary) = match cfg.graph.source {
        GraphSourceKind::Generate => {
            gen_admissible_graph(cfg.graph.n, cfg.graph.tau, cfg.graph.seed)?
        }
        GraphSourceKind::File => {
            let graph = Graph::read_file(&cfg.graph.path)?;
            let summary = spectra(&graph);
            let report = validate_assumptions(&summary);
            if !report.pass {
                return Err(EngineError::AssumptionsFailed(report.failures.join("; ")).into());
            }
            (graph, summary)
        }
    };
    let n = graph.n();
    let objectives = match (cfg.data.source, cfg.objective.kind) {
        (DataSourceKind::Synthetic, ObjectiveKind::Logistic) => gen_synthetic_logistic(
            n,
            cfg.data.m,
            cfg.data.d,
            cfg.objective.lambda_reg,
            cfg.data.seed,
        ),
        (DataSourceKind::Synthetic, ObjectiveKind::Quadratic) => {
            gen_synthetic_quadratic(n, cfg.data.d, cfg.data.seed)
        }
        (DataSourceKind::Csv, ObjectiveKind::Logistic) => {
            let samples = load_csv(&cfg.data.path)?;
            partition_round_robin(&samples, n, cfg.objective.lambda_reg)?
        }
        (DataSourceKind::Csv, ObjectiveKind::Quadratic) => {
            return Err(ConfigError::InvalidValue {
                key: "objective.kind".into(),
                msg: "csv data requires a logistic objective".into(),
            }
            .into())
        }
    };
    let constants = match aggregate_constants(&objectives) {
        Ok(k) => Some(k),
        Err(ObjectiveError::NotStronglyConvex) => None,
        Err(e) => return Err(e.into()),
    };
    let solution = centralized_solve(&objectives, 1e-12)?;
    Ok(Problem { graph, spectra: summary, objectives, constants, solution })
}

/// Feasibility report plus how the compression factor δ was obtained.
pub struct FeasibilitySummary {
    pub report: FeasibilityReport,
    pub delta_used: f64,
    /// `"analytic"` when the compressor declares a bound, `"empirical"`
    /// when estimated by Monte Carlo.
    pub delta_source: &'static str,
    pub beta_used: f64,
}

/// Evaluate the compression-feasibility condition for a configured run.
///
/// δ comes from the compressor's analytic bound when available, otherwise
/// from a seeded 1000-sample empirical estimate. β defaults to the
/// closed-form maximizer β*.
pub fn feasibility_check(
    cfg: &ExperimentConfig,
    problem: &Problem,
) -> Result<FeasibilitySummary, ExperimentError> {
    let constants = problem.constants.ok_or_else(|| {
        ExperimentError::Infeasible(
            "objective is not strongly convex (set objective.lambda_reg > 0)".into(),
        )
    })?;
    let compressor = cfg.compressor()?;
    let d = cfg.data.d;
    let (delta_used, delta_source) = match compressor.delta_bound(d) {
        Some(b) => (b, "analytic"),
        None => {
            let mut rng = crate::rngstream::tagged(cfg.run.seed, 0x64656c7461); // "delta"
            let est = empirical_delta(
                &compressor,
                |r| DVector::from_fn(d, |_, _| rand::Rng::sample::<f64, _>(r, StandardNormal)),
                1000,
                &mut rng,
            )?;
            (est.max_ratio.min(1.0 - 1e-12), "empirical")
        }
    };
    let beta_used = cfg.algorithm.beta.unwrap_or_else(|| analysis::beta_star(&problem.spectra));
    let c = cfg.algorithm.c.ok_or(ConfigError::MissingKey("algorithm.c"))?;
    let mut report =
        analysis::theorem1_check(&problem.spectra, constants, c, beta_used, delta_used)?;
    if compressor.is_unbiased() {
        report.corollary1 =
            Some(analysis::corollary1_check(&problem.spectra, constants, delta_used)?);
    }
    Ok(FeasibilitySummary { report, delta_used, delta_source, beta_used })
}

/// Translate the config (plus an optional variant override) into an
/// engine [`RunConfig`].
pub fn run_config_for(
    cfg: &ExperimentConfig,
    variant: Option<Variant>,
    replica: u64,
) -> Result<RunConfig, ExperimentError> {
    let c = cfg.algorithm.c.ok_or(ConfigError::MissingKey("algorithm.c"))?;
    let geometric =
        Schedule::Geometric { alpha: cfg.algorithm.alpha, rho: cfg.algorithm.rho };
    let (schedule, compressor) = match variant {
        None => (cfg.schedule(), cfg.compressor()?),
        Some(Variant::Dqm) => (Schedule::Zero, Compressor::Identity),
        Some(Variant::CDqm) => (geometric, Compressor::Identity),
        Some(Variant::QDqm) => (Schedule::Zero, cfg.compressor()?),
        Some(Variant::CcDqm) => (geometric, cfg.compressor()?),
    };
    let mut run = RunConfig::new(c, schedule, compressor);
    run.max_iter = cfg.run.max_iter;
    run.tol = cfg.run.tol;
    run.seed = cfg.run.seed;
    run.replica = replica;
    run.bit_accounting = cfg.run.bit_accounting;
    run.hessian_caching = cfg.run.hessian_caching;
    run.lyapunov = cfg.run.lyapunov;
    run.r_weight = cfg.run.r_weight;
    Ok(run)
}

/// Run one variant/replica of an already-built problem.
pub fn run_once(
    cfg: &ExperimentConfig,
    problem: &Problem,
    variant: Option<Variant>,
    replica: u64,
) -> Result<RunRecord, ExperimentError> {
    let run = run_config_for(cfg, variant, replica)?;
    let sim = Simulator::new(
        problem.graph.clone(),
        problem.objectives.clone(),
        run,
        problem.solution.x_star.clone(),
    )?;
    Ok(sim.run()?)
}

/// Column-wise arithmetic mean of per-replica metrics over the common
/// row prefix, in the same CSV layout.
pub fn aggregate_mean_csv(records: &[RunRecord]) -> String {
    let len = records.iter().map(|r| r.rows.len()).min().unwrap_or(0);
    let reps = records.len() as f64;
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for k in 0..len {
        let mean = |f: &dyn Fn(&RunRecord) -> f64| -> f64 {
            records.iter().map(|r| f(r)).sum::<f64>() / reps
        };
        let vfield = |pick: &dyn Fn(&crate::engine::VComponents) -> f64| -> f64 {
            mean(&|r: &RunRecord| r.rows[k].v.as_ref().map(pick).unwrap_or(f64::NAN))
        };
        let cells = [
            mean(&|r: &RunRecord| r.rows[k].err),
            mean(&|r: &RunRecord| r.rows[k].consensus_err),
            mean(&|r: &RunRecord| r.rows[k].dual_residual),
            mean(&|r: &RunRecord| r.rows[k].bits_cum as f64),
            mean(&|r: &RunRecord| r.rows[k].rounds_cum as f64),
            mean(&|r: &RunRecord| r.rows[k].triggers as f64),
            mean(&|r: &RunRecord| r.rows[k].hess_refresh as f64),
            vfield(&|v| v.total()),
            vfield(&|v| v.primal),
            vfield(&|v| v.dual),
            vfield(&|v| v.error),
        ];
        let _ = write!(out, "{k}");
        for cell in cells {
            let _ = write!(out, ",{}", crate::engine::format_float(cell));
        }
        out.push('\n');
    }
    out
}

/// Everything a finished experiment produced.
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub feasibility: Option<FeasibilitySummary>,
    /// Present when the feasibility check could not run or did not pass
    /// (warn-only mode).
    pub feasibility_note: Option<String>,
    pub metrics_paths: Vec<PathBuf>,
    pub metadata_path: PathBuf,
}

/// Build the problem, run the configured variant (all replicas), and
/// write metrics plus metadata under `output.dir`.
///
/// With `strict`, a failing or unevaluable feasibility check aborts
/// before any iteration runs.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    strict: bool,
) -> Result<ExperimentOutput, ExperimentError> {
    cfg.validate()?;
    let problem = build_problem(cfg)?;

    let (feasibility, feasibility_note) = match feasibility_check(cfg, &problem) {
        Ok(s) if s.report.pass => (Some(s), None),
        Ok(s) => {
            let note = format!(
                "feasibility condition not met: delta/(1-sqrt(delta))^2 = {:.6e} >= rhs = {:.6e}",
                s.report.lhs, s.report.rhs
            );
            if strict {
                return Err(ExperimentError::Infeasible(note));
            }
            (Some(s), Some(note))
        }
        Err(e) => {
            let note = format!("feasibility check unavailable: {e}");
            if strict {
                return Err(ExperimentError::Infeasible(note));
            }
            (None, Some(note))
        }
    };

    let replicas = cfg.run.replicas;
    let mut records = Vec::with_capacity(replicas);
    for r in 0..replicas {
        records.push(run_once(cfg, &problem, None, r as u64)?);
    }

    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|source| ExperimentError::Io { path: cfg.output_dir.clone(), source })?;
    let mut metrics_paths = Vec::new();
    if replicas == 1 {
        let path = cfg.output_dir.join("metrics.csv");
        write_file(&path, &records[0].to_csv_string())?;
        metrics_paths.push(path);
    } else {
        for (r, rec) in records.iter().enumerate() {
            let path = cfg.output_dir.join(format!("metrics_rep{r}.csv"));
            write_file(&path, &rec.to_csv_string())?;
            metrics_paths.push(path);
        }
        let path = cfg.output_dir.join("metrics_mean.csv");
        write_file(&path, &aggregate_mean_csv(&records))?;
        metrics_paths.push(path);
    }

    let metadata_path = cfg.output_dir.join("metadata.txt");
    write_file(
        &metadata_path,
        &metadata_text(cfg, &problem, &records, feasibility.as_ref(), feasibility_note.as_deref()),
    )?;

    Ok(ExperimentOutput { records, feasibility, feasibility_note, metrics_paths, metadata_path })
}

fn metadata_text(
    cfg: &ExperimentConfig,
    problem: &Problem,
    records: &[RunRecord],
    feasibility: Option<&FeasibilitySummary>,
    note: Option<&str>,
) -> String {
    let mut s = String::from("# resolved configuration\n");
    s.push_str(&cfg.to_config_string());
    s.push_str("# run metadata\n");
    let rec = &records[0];
    let _ = writeln!(s, "meta.variant = {}", rec.variant);
    let _ = writeln!(s, "meta.agents = {}", problem.graph.n());
    let _ = writeln!(s, "meta.edges = {}", problem.graph.edge_count());
    let _ = writeln!(s, "meta.dimension = {}", rec.dimension);
    let _ = writeln!(s, "meta.lambda_2 = {}", problem.spectra.lambda_2());
    let _ = writeln!(s, "meta.lambda_n = {}", problem.spectra.lambda_n());
    let _ = writeln!(s, "meta.lambda_hat_1 = {}", problem.spectra.lambda_hat_1());
    let _ = writeln!(s, "meta.lambda_hat_n = {}", problem.spectra.lambda_hat_n());
    if let Some(k) = problem.constants {
        let _ = writeln!(s, "meta.v = {}", k.v);
        let _ = writeln!(s, "meta.ell = {}", k.ell);
    }
    let _ = writeln!(s, "meta.x_star_grad_norm = {:e}", problem.solution.grad_norm);
    let _ = writeln!(s, "meta.x_star_newton_iterations = {}", problem.solution.iterations);
    let _ = writeln!(s, "meta.strongly_convex = {}", problem.solution.strongly_convex);
    if cfg.objective.kind == ObjectiveKind::Logistic && cfg.objective.lambda_reg > 0.0 {
        let _ = writeln!(
            s,
            "meta.note = logistic loss augmented with ridge lambda_reg = {} so the strong-convexity assumption holds",
            cfg.objective.lambda_reg
        );
    }
    if let Some(f) = feasibility {
        let _ = writeln!(s, "feasibility.delta_used = {}", f.delta_used);
        let _ = writeln!(s, "feasibility.delta_source = {}", f.delta_source);
        let _ = writeln!(s, "feasibility.beta = {}", f.beta_used);
        let _ = writeln!(s, "feasibility.lhs = {:e}", f.report.lhs);
        let _ = writeln!(s, "feasibility.rhs = {:e}", f.report.rhs);
        let _ = writeln!(s, "feasibility.pass = {}", f.report.pass);
    }
    if let Some(n) = note {
        let _ = writeln!(s, "feasibility.note = {n}");
    }
    let _ = writeln!(s, "result.replicas = {}", records.len());
    let _ = writeln!(s, "result.converged = {}", rec.converged);
    let _ = writeln!(s, "result.iterations = {}", rec.rows.len() - 1);
    let _ = writeln!(s, "result.final_err = {:e}", rec.final_err());
    let _ = writeln!(s, "result.bits_link_total = {}", rec.bits_link_total);
    let _ = writeln!(s, "result.bits_broadcast_total = {}", rec.bits_broadcast_total);
    s
}

/// One line of the variant-comparison table.
#[derive(Debug, Clone)]
pub struct CompareRow {
    pub variant: Variant,
    pub converged: bool,
    pub iters_to_tol: Option<usize>,
    pub transmissions_to_tol: Option<u64>,
    pub bits_to_tol: Option<u64>,
    /// Smallest error seen (reported for variants that missed the
    /// tolerance too).
    pub best_err: f64,
    pub fitted_rate: Option<f64>,
    pub fit_r2: Option<f64>,
}

pub struct CompareSummary {
    pub rows: Vec<CompareRow>,
    pub csv_path: PathBuf,
}

impl CompareSummary {
    pub fn row(&self, variant: Variant) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out =
        String::from("variant,converged,iters_to_tol,transmissions_to_tol,bits_to_tol,best_err,fitted_rate,fit_r2\n");
    for r in rows {
        let opt_u = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_f =
            |v: Option<f64>| v.map(crate::engine::format_float).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.variant,
            r.converged,
            r.iters_to_tol.map(|x| x.to_string()).unwrap_or_default(),
            opt_u(r.transmissions_to_tol),
            opt_u(r.bits_to_tol),
            crate::engine::format_float(r.best_err),
            opt_f(r.fitted_rate),
            opt_f(r.fit_r2),
        );
    }
    out
}

/// Run the listed variants on one shared problem instance (same graph,
/// data, seeds) and tabulate cost-to-tolerance; writes `compare.csv`
/// under `output.dir`.
pub fn compare_variants(
    cfg: &ExperimentConfig,
    variants: &[Variant],
) -> Result<CompareSummary, ExperimentError> {
    cfg.validate()?;
    let problem = build_problem(cfg)?;
    let tol = cfg.run.tol;
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let record = run_once(cfg, &problem, Some(variant), 0)?;
        let hit = record.first_row_reaching(tol);
        let best_err =
            record.rows.iter().map(|r| r.err).fold(f64::INFINITY, f64::min);
        let fit = analysis::fit_rate(&record.err_series(), 0.5).ok();
        rows.push(CompareRow {
            variant,
            converged: hit.is_some(),
            iters_to_tol: hit.map(|r| r.iter),
            transmissions_to_tol: hit.map(|r| r.rounds_cum),
            bits_to_tol: hit.map(|r| r.bits_cum),
            best_err,
            fitted_rate: fit.map(|f| f.sigma_hat),
            fit_r2: fit.map(|f| f.r2),
        });
    }
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|source| ExperimentError::Io { path: cfg.output_dir.clone(), source })?;
    let csv_path = cfg.output_dir.join("compare.csv");
    write_file(&csv_path, &compare_csv(&rows))?;
    Ok(CompareSummary { rows, csv_path })
}

/// One line of a parameter-sweep summary.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    pub converged: bool,
    pub iters_to_tol: Option<usize>,
    pub bits_to_tol: Option<u64>,
    pub final_err: f64,
    pub fitted_rate: Option<f64>,
}

pub struct SweepSummary {
    pub key: String,
    pub rows: Vec<SweepRow>,
    pub csv_path: PathBuf,
}

/// Re-run the experiment once per value of `key`, collecting summary
/// rows; writes `sweep.csv` under `output.dir`.
pub fn sweep(
    cfg: &ExperimentConfig,
    key: &str,
    values: &[String],
) -> Result<SweepSummary, ExperimentError> {
    let mut rows = Vec::with_capacity(values.len());
    for value in values {
        let mut swept = cfg.clone();
        swept.apply(key, value)?;
        swept.validate()?;
        let problem = build_problem(&swept)?;
        let record = run_once(&swept, &problem, None, 0)?;
        let hit = record.first_row_reaching(swept.run.tol);
        let fit = analysis::fit_rate(&record.err_series(), 0.5).ok();
        rows.push(SweepRow {
            value: value.clone(),
            converged: hit.is_some(),
            iters_to_tol: hit.map(|r| r.iter),
            bits_to_tol: hit.map(|r| r.bits_cum),
            final_err: record.final_err(),
            fitted_rate: fit.map(|f| f.sigma_hat),
        });
    }
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|source| ExperimentError::Io { path: cfg.output_dir.clone(), source })?;
    let csv_path = cfg.output_dir.join("sweep.csv");
    let mut csv = String::from("value,converged,iters_to_tol,bits_to_tol,final_err,fitted_rate\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.value,
            r.converged,
            r.iters_to_tol.map(|x| x.to_string()).unwrap_or_default(),
            r.bits_to_tol.map(|x| x.to_string()).unwrap_or_default(),
            crate::engine::format_float(r.final_err),
            r.fitted_rate.map(crate::engine::format_float).unwrap_or_default(),
        );
    }
    write_file(&csv_path, &csv)?;
    Ok(SweepSummary { key: key.to_string(), rows, csv_path })
}

/// Synthetic logistic dataset rendered in the `label,f1,...,fd` schema
/// (the `gen-data` CLI subcommand's payload).
pub fn synthetic_data_csv(n: usize, m: usize, d: usize, seed: u64) -> String {
    let objectives = gen_synthetic_logistic(n, m, d, 0.0, seed);
    let mut out = String::new();
    for obj in &objectives {
        if let LocalObjective::Logistic { features, labels, .. } = obj {
            for j in 0..features.nrows() {
                let _ = write!(out, "{}", labels[j]);
                for p in 0..features.ncols() {
                    let _ = write!(out, ",{}", features[(j, p)]);
                }
                out.push('\n');
            }
        }
    }
    out
}
