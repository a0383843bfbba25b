//! Experiment configuration.
//!
//! Configs are TOML documents with flat top-level keys and one `[[learner]]`
//! table per algorithm:
//!
//! ```toml
//! graph = "grid:6"          # clique:N | cycle:N | grid:M | lattice:M | two_cliques:HALF:BRIDGES
//! p_uniform = 0.5           # or: p = [0.2, 0.4, ...] (one entry per node)
//! q = 1.0                   # edge survival probability, default 1
//! schedule = "cycle(0.2,0.8,100)"   # optional, overrides p over time
//! b = 0.05                  # optional gossip step, default 1 / lambda1
//! env = "regression"        # or "adversary"
//! data_seed = 7             # regression data
//! M = 2                     # adversary block length (graph must have 4M nodes)
//! L = 1.0                   # adversary loss scale
//! radius = 2.0              # decision ball radius, default 2
//! dim = 10                  # decision dimension, default 10
//! T = 1000
//! reps = 20
//! master_seed = 1
//! out = "results/grid"      # output directory
//! series = true             # also write per-round regret curves, default false
//! delta = 0.05              # confidence of the high-probability bound
//! rho_draws = 1000          # draws for empirical rho when no closed form applies
//!
//! [[learner]]
//! algorithm = "dftrl"       # dftrl | dftrl_known_st | dogd
//! eta_rule = "experiment_dftrl"   # or: eta = 0.01
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::activation::{ActivationModel, Schedule};
use crate::error::{Error, Result};
use crate::graph::GraphSpec;
use crate::learners::{Algorithm, EtaChoice, EtaRule, LearnerConfig};

const TOP_KEYS: &[&str] = &[
    "graph",
    "p_uniform",
    "p",
    "q",
    "schedule",
    "b",
    "env",
    "data_seed",
    "M",
    "L",
    "radius",
    "dim",
    "T",
    "reps",
    "master_seed",
    "out",
    "series",
    "delta",
    "rho_draws",
    "learner",
];
const LEARNER_KEYS: &[&str] = &["algorithm", "eta", "eta_rule"];

#[derive(Debug, Deserialize)]
struct RawLearner {
    algorithm: String,
    eta: Option<f64>,
    eta_rule: Option<String>,
}

#[derive(Debug, Deserialize)]
#[allow(non_snake_case)]
struct RawConfig {
    graph: String,
    p_uniform: Option<f64>,
    p: Option<Vec<f64>>,
    q: Option<f64>,
    schedule: Option<String>,
    b: Option<f64>,
    env: Option<String>,
    data_seed: Option<u64>,
    M: Option<usize>,
    L: Option<f64>,
    radius: Option<f64>,
    dim: Option<usize>,
    T: usize,
    reps: Option<usize>,
    master_seed: Option<u64>,
    out: Option<PathBuf>,
    series: Option<bool>,
    delta: Option<f64>,
    rho_draws: Option<usize>,
    learner: Vec<RawLearner>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProbabilitySpec {
    Uniform(f64),
    PerNode(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSpec {
    pub p: ProbabilitySpec,
    pub q: f64,
    pub schedule: Option<Schedule>,
}

impl ActivationSpec {
    pub fn model(&self, n: usize) -> Result<ActivationModel> {
        let model = match &self.p {
            ProbabilitySpec::Uniform(p) => ActivationModel::uniform(n, *p, self.q)?,
            ProbabilitySpec::PerNode(p) => {
                if p.len() != n {
                    return Err(Error::Config(format!(
                        "p has {} entries but the graph has {n} nodes",
                        p.len()
                    )));
                }
                ActivationModel::new(p.clone(), self.q)?
            }
        };
        match self.schedule {
            Some(s) => model.with_schedule(s),
            None => Ok(model),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvSpec {
    Regression { data_seed: u64 },
    /// Signs are redrawn for every repetition.
    Adversary { block: usize, scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    pub activation: ActivationSpec,
    pub b: Option<f64>,
    pub env: EnvSpec,
    pub radius: f64,
    pub dim: usize,
    pub learners: Vec<LearnerConfig>,
    pub horizon: usize,
    pub reps: usize,
    pub master_seed: u64,
    pub out: Option<PathBuf>,
    pub series: bool,
    pub delta: f64,
    pub rho_draws: usize,
}

fn unknown_keys(table: &toml::Table) -> Vec<String> {
    let mut bad = Vec::new();
    for key in table.keys() {
        if !TOP_KEYS.contains(&key.as_str()) {
            bad.push(key.clone());
        }
    }
    if let Some(toml::Value::Array(learners)) = table.get("learner") {
        for (i, l) in learners.iter().enumerate() {
            if let toml::Value::Table(t) = l {
                for key in t.keys() {
                    if !LEARNER_KEYS.contains(&key.as_str()) {
                        bad.push(format!("learner[{i}].{key}"));
                    }
                }
            }
        }
    }
    bad
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let bad = unknown_keys(&table);
        if !bad.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", bad.join(", "))));
        }
        let raw: RawConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        Self::from_raw(raw)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        let mut problems = Vec::new();
        let graph: GraphSpec = raw.graph.parse()?;
        let p = match (raw.p_uniform, raw.p) {
            (Some(p), None) => ProbabilitySpec::Uniform(p),
            (None, Some(v)) => ProbabilitySpec::PerNode(v),
            (None, None) => {
                problems.push("one of p_uniform / p is required".to_string());
                ProbabilitySpec::Uniform(1.0)
            }
            (Some(_), Some(_)) => {
                problems.push("p_uniform and p are mutually exclusive".to_string());
                ProbabilitySpec::Uniform(1.0)
            }
        };
        let schedule = raw.schedule.as_deref().map(str::parse).transpose()?;
        let env = match raw.env.as_deref().unwrap_or("regression") {
            "regression" => EnvSpec::Regression {
                data_seed: raw.data_seed.unwrap_or(0),
            },
            "adversary" => {
                let block = raw.M.unwrap_or(0);
                if block == 0 || graph.num_nodes() != 4 * block {
                    problems.push(format!(
                        "M: adversary needs M >= 1 and a graph with 4M nodes (graph has {})",
                        graph.num_nodes()
                    ));
                }
                EnvSpec::Adversary {
                    block,
                    scale: raw.L.unwrap_or(1.0),
                }
            }
            other => {
                problems.push(format!("env: unknown environment {other:?}"));
                EnvSpec::Regression { data_seed: 0 }
            }
        };
        let mut learners = Vec::new();
        for (i, l) in raw.learner.iter().enumerate() {
            let algorithm: Algorithm = match l.algorithm.parse() {
                Ok(a) => a,
                Err(e) => {
                    problems.push(format!("learner[{i}].algorithm: {e}"));
                    continue;
                }
            };
            let eta = match (l.eta, l.eta_rule.as_deref()) {
                (Some(e), None) => EtaChoice::Fixed(e),
                (None, Some(rule)) => match rule.parse::<EtaRule>() {
                    Ok(r) => EtaChoice::Rule(r),
                    Err(e) => {
                        problems.push(format!("learner[{i}].eta_rule: {e}"));
                        continue;
                    }
                },
                _ => {
                    problems.push(format!("learner[{i}]: exactly one of eta / eta_rule is required"));
                    continue;
                }
            };
            match LearnerConfig::new(algorithm, eta) {
                Ok(c) => learners.push(c),
                Err(e) => problems.push(format!("learner[{i}].eta: {e}")),
            }
        }
        if raw.learner.is_empty() {
            problems.push("learner: at least one [[learner]] table is required".into());
        }
        let reps = raw.reps.unwrap_or(1);
        if reps == 0 {
            problems.push("reps: must be >= 1".into());
        }
        if raw.T == 0 {
            problems.push("T: must be >= 1".into());
        }
        let radius = raw.radius.unwrap_or(2.0);
        if !(radius > 0.0) {
            problems.push("radius: must be positive".into());
        }
        let dim = raw.dim.unwrap_or(10);
        if dim == 0 {
            problems.push("dim: must be >= 1".into());
        }
        let delta = raw.delta.unwrap_or(0.05);
        if !(delta > 0.0 && delta <= 1.0) {
            problems.push("delta: must lie in (0, 1]".into());
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        let cfg = ExperimentConfig {
            graph,
            activation: ActivationSpec {
                p,
                q: raw.q.unwrap_or(1.0),
                schedule,
            },
            b: raw.b,
            env,
            radius,
            dim,
            learners,
            horizon: raw.T,
            reps,
            master_seed: raw.master_seed.unwrap_or(0),
            out: raw.out,
            series: raw.series.unwrap_or(false),
            delta,
            rho_draws: raw.rho_draws.unwrap_or(1000).max(1),
        };
        // surface model errors (p range, q range) at load time
        cfg.activation.model(graph.num_nodes())?;
        Ok(cfg)
    }
}

/// Parses `a:b:step` (inclusive) or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("bad grid {s:?}, expected a:b:step or a,b,c"));
    let s = s.trim();
    let values = if s.contains(':') {
        let parts: Vec<f64> = s
            .split(':')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let [a, b, step] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0) || b < a {
            return Err(bad());
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| {
                let v = a + i as f64 * step;
                (v * 1e12).round() / 1e12
            })
            .collect()
    } else {
        s.split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad())?
    };
    if values.is_empty() {
        return Err(bad());
    }
    Ok(values)
}
