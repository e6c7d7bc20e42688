//! Experiment configuration: flat `key = value` text with `#` comments
//! and dotted section prefixes (`algorithm.c = 0.5`).
//!
//! Every key has a default except `algorithm.c`, which must be stated.
//! Parsing then re-serializing a resolved configuration is idempotent;
//! [`ExperimentConfig::to_config_string`] emits the canonical key order.

use crate::compressors::{Compressor, CompressorError};
use crate::engine::{BitAccounting, Schedule};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("config key `{key}`: {msg}")]
    InvalidValue { key: String, msg: String },

    #[error("missing required config key `{0}`")]
    MissingKey(&'static str),

    #[error("config key `{key}` references missing path `{path}`")]
    MissingPath { key: &'static str, path: PathBuf },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Compressor(#[from] CompressorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphSourceKind {
    Generate,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSourceKind {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Logistic,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Zero,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompressorKind {
    Identity,
    DetQuant,
    StochQuant,
    TopK,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphConfig {
    pub source: GraphSourceKind,
    pub n: usize,
    pub tau: f64,
    pub seed: u64,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSourceKind,
    pub m: usize,
    pub d: usize,
    pub seed: u64,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    pub lambda_reg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmConfig {
    pub c: Option<f64>,
    pub schedule: ScheduleKind,
    pub alpha: f64,
    pub rho: f64,
    pub compressor: CompressorKind,
    pub bits: u32,
    pub top_k: usize,
    /// Coupling weight for the feasibility check; `None` means `β*`.
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub replicas: usize,
    pub bit_accounting: BitAccounting,
    pub lyapunov: bool,
    pub r_weight: Option<f64>,
    pub hessian_caching: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub graph: GraphConfig,
    pub data: DataConfig,
    pub objective: ObjectiveConfig,
    pub algorithm: AlgorithmConfig,
    pub run: RunSettings,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    /// Desk-scale defaults: a 20-agent τ = 0.4 graph with 10 samples per
    /// agent of 24-dimensional logistic data.
    fn default() -> Self {
        Self {
            graph: GraphConfig {
                source: GraphSourceKind::Generate,
                n: 20,
                tau: 0.4,
                seed: 1,
                path: PathBuf::new(),
            },
            data: DataConfig {
                source: DataSourceKind::Synthetic,
                m: 10,
                d: 24,
                seed: 2,
                path: PathBuf::new(),
            },
            objective: ObjectiveConfig { kind: ObjectiveKind::Logistic, lambda_reg: 0.01 },
            algorithm: AlgorithmConfig {
                c: None,
                schedule: ScheduleKind::Zero,
                alpha: 1.0,
                rho: 0.98,
                compressor: CompressorKind::Identity,
                bits: 2,
                top_k: 1,
                beta: None,
            },
            run: RunSettings {
                max_iter: 500,
                tol: 1e-12,
                seed: 3,
                replicas: 1,
                bit_accounting: BitAccounting::PerLink,
                lyapunov: true,
                r_weight: None,
                hessian_caching: true,
            },
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| ConfigError::InvalidValue {
        key: key.to_string(),
        msg: format!("cannot parse `{value}`: {e}"),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(ConfigError::InvalidValue {
            key: key.to_string(),
            msg: format!("expected true|false, got `{other}`"),
        }),
    }
}

impl ExperimentConfig {
    /// Parse configuration text. Later assignments override earlier ones.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.apply(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Assign one `key = value` pair (also the mechanism behind sweep
    /// overrides).
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "graph.source" => {
                self.graph.source = match value {
                    "generate" => GraphSourceKind::Generate,
                    "file" => GraphSourceKind::File,
                    other => {
                        return Err(ConfigError::InvalidValue {
                            key: key.into(),
                            msg: format!("expected generate|file, got `{other}`"),
                        })
                    }
                }
            }
            "graph.n" => self.graph.n = parse_num(key, value)?,
            "graph.tau" => self.graph.tau = parse_num(key, value)?,
            "graph.seed" => self.graph.seed = parse_num(key, value)?,
            "graph.path" => self.graph.path = PathBuf::from(value),
            "data.source" => {
                self.data.source = match value {
                    "synthetic" => DataSourceKind::Synthetic,
                    "csv" => DataSourceKind::Csv,
                    other => {
                        return Err(ConfigError::InvalidValue {
                            key: key.into(),
                            msg: format!("expected synthetic|csv, got `{other}`"),
                        })
                    }
                }
            }
            "data.m" => self.data.m = parse_num(key, value)?,
            "data.d" => self.data.d = parse_num(key, value)?,
            "data.seed" => self.data.seed = parse_num(key, value)?,
            "data.path" => self.data.path = PathBuf::from(value),
            "objective.kind" => {
                self.objective.kind = match value {
                    "logistic" => ObjectiveKind::Logistic,
                    "quadratic" => ObjectiveKind::Quadratic,
                    other => {
                        return Err(ConfigError::InvalidValue {
                            key: key.into(),
                            msg: format!("expected logistic|quadratic, got `{other}`"),
                        })
                    }
                }
            }
            "objective.lambda_reg" => self.objective.lambda_reg = parse_num(key, value)?,
            "algorithm.c" => self.algorithm.c = Some(parse_num(key, value)?),
            "algorithm.schedule" => {
                self.algorithm.schedule = match value {
                    "zero" => ScheduleKind::Zero,
                    "geometric" => ScheduleKind::Geometric,
                    other => {
                        return Err(ConfigError::InvalidValue {
                            key: key.into(),
                            msg: format!("expected zero|geometric, got `{other}`"),
                        })
                    }
                }
            }
            "algorithm.alpha" => self.algorithm.alpha = parse_num(key, value)?,
            "algorithm.rho" => self.algorithm.rho = parse_num(key, value)?,
            "algorithm.compressor" => {
                self.algorithm.compressor = match value {
                    "identity" => CompressorKind::Identity,
                    "det_quant" => CompressorKind::DetQuant,
                    "stoch_quant" => CompressorKind::StochQuant,
                    "top_k" => CompressorKind::TopK,
                    other => {
                        return Err(ConfigError::InvalidValue {
                            key: key.into(),
                            msg: format!(
                                "expected identity|det_quant|stoch_quant|top_k, got `{other}`"
                            ),
                        })
                    }
                }
            }
            "algorithm.bits" => self.algorithm.bits = parse_num(key, value)?,
            "algorithm.top_k" => self.algorithm.top_k = parse_num(key, value)?,
            "algorithm.beta" => {
                self.algorithm.beta =
                    if value == "auto" { None } else { Some(parse_num(key, value)?) }
            }
            "run.max_iter" => self.run.max_iter = parse_num(key, value)?,
            "run.tol" => self.run.tol = parse_num(key, value)?,
            "run.seed" => self.run.seed = parse_num(key, value)?,
            "run.replicas" => self.run.replicas = parse_num(key, value)?,
            "run.bit_accounting" => {
                self.run.bit_accounting = match value {
                    "per_link" => BitAccounting::PerLink,
                    "per_broadcast" => BitAccounting::PerBroadcast,
                    other => {
                        return Err(ConfigError::InvalidValue {
                            key: key.into(),
                            msg: format!("expected per_link|per_broadcast, got `{other}`"),
                        })
                    }
                }
            }
            "run.lyapunov" => self.run.lyapunov = parse_bool(key, value)?,
            "run.r_weight" => {
                self.run.r_weight =
                    if value == "auto" { None } else { Some(parse_num(key, value)?) }
            }
            "run.hessian_caching" => self.run.hessian_caching = parse_bool(key, value)?,
            "output.dir" => self.output_dir = PathBuf::from(value),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Structural validation: required keys present, ranges sane,
    /// referenced paths exist.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.algorithm.c.is_none() {
            return Err(ConfigError::MissingKey("algorithm.c"));
        }
        if self.run.replicas == 0 {
            return Err(ConfigError::InvalidValue {
                key: "run.replicas".into(),
                msg: "must be at least 1".into(),
            });
        }
        if self.objective.lambda_reg < 0.0 {
            return Err(ConfigError::InvalidValue {
                key: "objective.lambda_reg".into(),
                msg: "must be nonnegative".into(),
            });
        }
        if self.graph.source == GraphSourceKind::File {
            if self.graph.path.as_os_str().is_empty() {
                return Err(ConfigError::MissingKey("graph.path"));
            }
            if !self.graph.path.exists() {
                return Err(ConfigError::MissingPath {
                    key: "graph.path",
                    path: self.graph.path.clone(),
                });
            }
        }
        if self.data.source == DataSourceKind::Csv {
            if self.data.path.as_os_str().is_empty() {
                return Err(ConfigError::MissingKey("data.path"));
            }
            if !self.data.path.exists() {
                return Err(ConfigError::MissingPath {
                    key: "data.path",
                    path: self.data.path.clone(),
                });
            }
        }
        self.compressor()?;
        Ok(())
    }

    /// Build the compressor described by the algorithm block.
    pub fn compressor(&self) -> Result<Compressor, ConfigError> {
        Ok(match self.algorithm.compressor {
            CompressorKind::Identity => Compressor::Identity,
            CompressorKind::DetQuant => Compressor::det_quant(self.algorithm.bits)?,
            CompressorKind::StochQuant => Compressor::stoch_quant(self.algorithm.bits)?,
            CompressorKind::TopK => Compressor::top_k(self.algorithm.top_k)?,
        })
    }

    pub fn schedule(&self) -> Schedule {
        match self.algorithm.schedule {
            ScheduleKind::Zero => Schedule::Zero,
            ScheduleKind::Geometric => {
                Schedule::Geometric { alpha: self.algorithm.alpha, rho: self.algorithm.rho }
            }
        }
    }

    /// Canonical serialization: every resolved key in a fixed order.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "graph.source = {}",
            match self.graph.source {
                GraphSourceKind::Generate => "generate",
                GraphSourceKind::File => "file",
            }
        );
        let _ = writeln!(s, "graph.n = {}", self.graph.n);
        let _ = writeln!(s, "graph.tau = {}", self.graph.tau);
        let _ = writeln!(s, "graph.seed = {}", self.graph.seed);
        if !self.graph.path.as_os_str().is_empty() {
            let _ = writeln!(s, "graph.path = {}", self.graph.path.display());
        }
        let _ = writeln!(
            s,
            "data.source = {}",
            match self.data.source {
                DataSourceKind::Synthetic => "synthetic",
                DataSourceKind::Csv => "csv",
            }
        );
        let _ = writeln!(s, "data.m = {}", self.data.m);
        let _ = writeln!(s, "data.d = {}", self.data.d);
        let _ = writeln!(s, "data.seed = {}", self.data.seed);
        if !self.data.path.as_os_str().is_empty() {
            let _ = writeln!(s, "data.path = {}", self.data.path.display());
        }
        let _ = writeln!(
            s,
            "objective.kind = {}",
            match self.objective.kind {
                ObjectiveKind::Logistic => "logistic",
                ObjectiveKind::Quadratic => "quadratic",
            }
        );
        let _ = writeln!(s, "objective.lambda_reg = {}", self.objective.lambda_reg);
        if let Some(c) = self.algorithm.c {
            let _ = writeln!(s, "algorithm.c = {c}");
        }
        let _ = writeln!(
            s,
            "algorithm.schedule = {}",
            match self.algorithm.schedule {
                ScheduleKind::Zero => "zero",
                ScheduleKind::Geometric => "geometric",
            }
        );
        let _ = writeln!(s, "algorithm.alpha = {}", self.algorithm.alpha);
        let _ = writeln!(s, "algorithm.rho = {}", self.algorithm.rho);
        let _ = writeln!(
            s,
            "algorithm.compressor = {}",
            match self.algorithm.compressor {
                CompressorKind::Identity => "identity",
                CompressorKind::DetQuant => "det_quant",
                CompressorKind::StochQuant => "stoch_quant",
                CompressorKind::TopK => "top_k",
            }
        );
        let _ = writeln!(s, "algorithm.bits = {}", self.algorithm.bits);
        let _ = writeln!(s, "algorithm.top_k = {}", self.algorithm.top_k);
        let _ = writeln!(
            s,
            "algorithm.beta = {}",
            self.algorithm.beta.map(|b| b.to_string()).unwrap_or_else(|| "auto".into())
        );
        let _ = writeln!(s, "run.max_iter = {}", self.run.max_iter);
        let _ = writeln!(s, "run.tol = {}", self.run.tol);
        let _ = writeln!(s, "run.seed = {}", self.run.seed);
        let _ = writeln!(s, "run.replicas = {}", self.run.replicas);
        let _ = writeln!(
            s,
            "run.bit_accounting = {}",
            match self.run.bit_accounting {
                BitAccounting::PerLink => "per_link",
                BitAccounting::PerBroadcast => "per_broadcast",
            }
        );
        let _ = writeln!(s, "run.lyapunov = {}", self.run.lyapunov);
        let _ = writeln!(
            s,
            "run.r_weight = {}",
            self.run.r_weight.map(|r| r.to_string()).unwrap_or_else(|| "auto".into())
        );
        let _ = writeln!(s, "run.hessian_caching = {}", self.run.hessian_caching);
        let _ = writeln!(s, "output.dir = {}", self.output_dir.display());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "algorithm.c = 0.7\n";

    #[test]
    fn defaults_plus_required_key() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.algorithm.c, Some(0.7));
        assert_eq!(cfg.graph.n, 20);
        assert_eq!(cfg.data.d, 24);
    }

    #[test]
    fn missing_c_is_rejected() {
        let cfg = ExperimentConfig::parse("graph.n = 5\n").unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::MissingKey("algorithm.c"))));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let text = "# header\nalgorithm.c = 0.5  # inline\n\n  graph.n = 7\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.algorithm.c, Some(0.5));
        assert_eq!(cfg.graph.n, 7);
    }

    #[test]
    fn unknown_key_and_bad_values_rejected() {
        assert!(matches!(
            ExperimentConfig::parse("bogus.key = 1\n"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("graph.n = many\n"),
            Err(ConfigError::InvalidValue { .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("algorithm.c 0.5\n"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn round_trip_is_idempotent() {
        let text = "algorithm.c = 0.7\nalgorithm.schedule = geometric\nalgorithm.alpha = 2.5\n\
                    algorithm.rho = 0.97\nalgorithm.compressor = det_quant\nalgorithm.bits = 2\n\
                    run.tol = 1e-9\nrun.replicas = 3\nobjective.lambda_reg = 0.02\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        let serialized = cfg.to_config_string();
        let cfg2 = ExperimentConfig::parse(&serialized).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(serialized, cfg2.to_config_string());
    }

    #[test]
    fn missing_referenced_paths_fail_validation() {
        let cfg = ExperimentConfig::parse(
            "algorithm.c = 1\ngraph.source = file\ngraph.path = /nonexistent/g.txt\n",
        )
        .unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::MissingPath { key: "graph.path", .. })));
    }

    #[test]
    fn compressor_construction_follows_keys() {
        let cfg = ExperimentConfig::parse(
            "algorithm.c = 1\nalgorithm.compressor = top_k\nalgorithm.top_k = 4\n",
        )
        .unwrap();
        assert_eq!(cfg.compressor().unwrap(), Compressor::TopK { k: 4 });
    }
}
