use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::activation::ActivationModel;
use crate::environment::{AdversaryEnv, Environment, LossOracle, RegressionEnv};
use crate::error::{Error, Result};
use crate::gossip::{self, max_b};
use crate::graph::{build_cycle, Graph, GraphSpec};
use crate::harness::config::{EnvSpec, ExperimentConfig, ProbabilitySpec};
use crate::harness::output::write_csv;
use crate::learners::{Algorithm, EtaInputs, EtaRule, RegularizerSpec};
use crate::regret::{
    decomposition_diagnostic, eval_bounds, network_regret, regret_series, BoundParams, Bounds,
    SimulationTrace,
};
use crate::rng::{self, StreamTag};
use crate::simulation::{simulate, LearnerSpec};

/// One row of `regret.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretRow {
    pub rep: usize,
    pub algo: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub graph: String,
    pub eta: f64,
    pub regret: f64,
    pub comparator_value: f64,
    #[serde(rename = "termA")]
    pub term_a: f64,
    #[serde(rename = "termB")]
    pub term_b: f64,
    pub second_bound: f64,
    pub third_bound: f64,
}

/// One row of `series.csv`: network regret after round `t` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRow {
    pub rep: usize,
    pub algo: String,
    pub t: usize,
    pub regret: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<RegretRow>,
    pub series: Vec<SeriesRow>,
}

impl ExperimentOutput {
    pub fn regrets(&self, algorithm: Algorithm) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.algo == algorithm.name())
            .map(|r| r.regret)
            .collect()
    }

    pub fn mean_regret(&self, algorithm: Algorithm) -> f64 {
        mean_sem(&self.regrets(algorithm)).0
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_csv(&dir.join("regret.csv"), &self.rows)?;
        if !self.series.is_empty() {
            write_csv(&dir.join("series.csv"), &self.series)?;
        }
        Ok(())
    }
}

/// Mean and standard error of the mean (zero for a single value).
pub fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Everything one repetition needs besides the learners.
struct RepContext {
    graph: Graph,
    model: ActivationModel,
    env: Environment,
    b: f64,
    rho: f64,
}

fn build_graph(spec: &GraphSpec, master_seed: u64, rep: u64) -> Result<Graph> {
    spec.build(rng::seed_for(master_seed, rep, StreamTag::Graph, 0))
}

fn mixing_rho(cfg: &ExperimentConfig, g: &Graph, model: &ActivationModel, b: f64, rep: u64) -> Result<f64> {
    let default_b = (b - max_b(g)?).abs() <= 1e-12 * max_b(g)?;
    let rho_sq = match model.uniform_p() {
        Some(p) if default_b => gossip::rho_closed_form(g, p, model.q())?,
        _ => gossip::rho_empirical(
            g,
            model,
            b,
            cfg.rho_draws,
            rng::seed_for(cfg.master_seed, rep, StreamTag::Gossip, 0),
        )?,
    };
    Ok(rho_sq.sqrt())
}

fn rep_context(
    cfg: &ExperimentConfig,
    rep: u64,
    shared_graph: Option<&Graph>,
    shared_env: Option<&Environment>,
) -> Result<RepContext> {
    let graph = match shared_graph {
        Some(g) => g.clone(),
        None => build_graph(&cfg.graph, cfg.master_seed, rep)?,
    };
    let n = graph.n();
    let model = cfg.activation.model(n)?;
    let b = match cfg.b {
        Some(b) => b,
        None => max_b(&graph)?,
    };
    let env = match (shared_env, cfg.env) {
        (Some(e), _) => e.clone(),
        (None, EnvSpec::Adversary { block, scale }) => Environment::Adversary(AdversaryEnv::new(
            block,
            cfg.horizon,
            scale,
            cfg.radius,
            cfg.dim,
            rng::seed_for(cfg.master_seed, rep, StreamTag::Adversary, 0),
        )?),
        (None, EnvSpec::Regression { data_seed }) => Environment::Regression(
            RegressionEnv::with_shape(n, cfg.horizon, cfg.dim, cfg.radius, data_seed)?,
        ),
    };
    let rho = mixing_rho(cfg, &graph, &model, b, rep)?;
    Ok(RepContext {
        graph,
        model,
        env,
        b,
        rho,
    })
}

fn p_label(cfg: &ExperimentConfig, model: &ActivationModel) -> f64 {
    match &cfg.activation.p {
        ProbabilitySpec::Uniform(p) => *p,
        ProbabilitySpec::PerNode(_) => model.stats().pbar,
    }
}

/// Runs all repetitions, pairing every learner on the same activations.
/// Output rows are ordered by repetition, then by learner order in the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let shared_graph = if cfg.graph.is_random() {
        None
    } else {
        Some(build_graph(&cfg.graph, cfg.master_seed, 0)?)
    };
    let shared_env = match cfg.env {
        EnvSpec::Regression { data_seed } => Some(Environment::Regression(RegressionEnv::with_shape(
            cfg.graph.num_nodes(),
            cfg.horizon,
            cfg.dim,
            cfg.radius,
            data_seed,
        )?)),
        EnvSpec::Adversary { .. } => None,
    };
    let per_rep: Vec<ExperimentOutput> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_rep(cfg, rep, shared_graph.as_ref(), shared_env.as_ref()))
        .collect::<Result<_>>()?;
    let mut out = ExperimentOutput::default();
    for part in per_rep {
        out.rows.extend(part.rows);
        out.series.extend(part.series);
    }
    if let Some(dir) = &cfg.out {
        out.write(dir)?;
    }
    Ok(out)
}

fn run_rep(
    cfg: &ExperimentConfig,
    rep: usize,
    shared_graph: Option<&Graph>,
    shared_env: Option<&Environment>,
) -> Result<ExperimentOutput> {
    let ctx = rep_context(cfg, rep as u64, shared_graph, shared_env)?;
    let reg = RegularizerSpec::quadratic(cfg.radius);
    let stats = ctx.model.stats();
    let n = ctx.graph.n();
    let d_const = reg.diameter_sq().sqrt();
    let eta_inputs = EtaInputs {
        p: stats.pbar,
        n,
        horizon: cfg.horizon,
        d: d_const,
        l: ctx.env.lipschitz(),
        mu: reg.mu,
        pmin: stats.pmin,
    };
    let specs: Vec<LearnerSpec> = cfg
        .learners
        .iter()
        .map(|l| {
            Ok(LearnerSpec {
                algorithm: l.algorithm,
                eta: l.resolve_eta(&eta_inputs)?,
            })
        })
        .collect::<Result<_>>()?;
    let traces = simulate(
        &ctx.graph,
        &ctx.model,
        &ctx.env,
        ctx.b,
        reg,
        &specs,
        cfg.master_seed,
        rep as u64,
    )?;
    let kappa = ctx.graph.spectrum()?.kappa;
    let mut out = ExperimentOutput::default();
    for trace in &traces {
        let bounds = eval_bounds(&BoundParams {
            n,
            horizon: cfg.horizon,
            eta: trace.eta,
            d: d_const,
            l: ctx.env.lipschitz(),
            mu: reg.mu,
            pbar: stats.pbar,
            sigma_sq: stats.sigma_sq,
            pmin: stats.pmin,
            p: stats.pbar,
            q: ctx.model.q(),
            rho: ctx.rho,
            kappa,
            delta: cfg.delta,
        })
        .ok();
        let row = evaluate_trace(cfg, rep, &ctx, trace, bounds)?;
        out.rows.push(row);
        if cfg.series {
            for (t, regret) in regret_series(trace, &ctx.env).into_iter().enumerate() {
                out.series.push(SeriesRow {
                    rep,
                    algo: trace.algorithm.name().to_string(),
                    t: t + 1,
                    regret,
                });
            }
        }
    }
    Ok(out)
}

fn evaluate_trace(
    cfg: &ExperimentConfig,
    rep: usize,
    ctx: &RepContext,
    trace: &SimulationTrace,
    bounds: Option<Bounds>,
) -> Result<RegretRow> {
    let (regret, comparator_value, term_a, term_b) = if trace.rounds.is_empty() {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        let report = network_regret(trace, &ctx.env)?;
        let dec = decomposition_diagnostic(trace, &ctx.env)?;
        (report.realized_regret, report.comparator_value, dec.term_a, dec.term_b)
    };
    Ok(RegretRow {
        rep,
        algo: trace.algorithm.name().to_string(),
        horizon: cfg.horizon,
        n: ctx.graph.n(),
        p: p_label(cfg, &ctx.model),
        q: ctx.model.q(),
        graph: cfg.graph.to_string(),
        eta: trace.eta,
        regret,
        comparator_value,
        term_a,
        term_b,
        second_bound: bounds.map_or(f64::NAN, |b| b.second),
        third_bound: bounds.map_or(f64::NAN, |b| b.third),
    })
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub p: f64,
    pub q: f64,
    pub algo: String,
    pub reps: usize,
    pub mean_regret: f64,
    pub sem_regret: f64,
}

/// Runs the experiment at every `(p, q)` pair (uniform activation) and aggregates over reps.
pub fn run_sweep(cfg: &ExperimentConfig, p_grid: &[f64], q_grid: &[f64]) -> Result<Vec<SweepRow>> {
    if p_grid.is_empty() || q_grid.is_empty() {
        return Err(Error::Config("sweep grids must be non-empty".into()));
    }
    let mut rows = Vec::new();
    for &p in p_grid {
        for &q in q_grid {
            let mut point = cfg.clone();
            point.activation.p = ProbabilitySpec::Uniform(p);
            point.activation.q = q;
            point.out = None;
            point.series = false;
            let out = run_experiment(&point)?;
            for l in &cfg.learners {
                let values = out.regrets(l.algorithm);
                let (mean, sem) = mean_sem(&values);
                rows.push(SweepRow {
                    p,
                    q,
                    algo: l.algorithm.name().to_string(),
                    reps: values.len(),
                    mean_regret: mean,
                    sem_regret: sem,
                });
            }
        }
    }
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_csv(&dir.join("sweep.csv"), &rows)?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundConfig {
    /// Block length `M`; the cycle has `N = 4M` nodes.
    pub block: usize,
    pub horizon: usize,
    pub reps: usize,
    pub seed: u64,
    /// Loss scale `L`.
    pub scale: f64,
    pub radius: f64,
    pub dim: usize,
    pub eta_rule: EtaRule,
}

impl LowerBoundConfig {
    pub fn new(block: usize, horizon: usize, reps: usize, seed: u64) -> Self {
        LowerBoundConfig {
            block,
            horizon,
            reps,
            seed,
            scale: 1.0,
            radius: 1.0,
            dim: 1,
            eta_rule: EtaRule::ExperimentDftrl,
        }
    }
}

/// One row of `lowerbound.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundRow {
    pub draw: usize,
    #[serde(rename = "M")]
    pub block: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub eta: f64,
    pub sign_sum: i64,
    pub regret: f64,
    pub floor: f64,
}

/// DFTRL with everyone active on the `4M`-cycle adversary, one fresh sign draw per rep.
pub fn run_lowerbound(cfg: &LowerBoundConfig) -> Result<Vec<LowerBoundRow>> {
    if cfg.block == 0 {
        return Err(Error::InvalidSize {
            what: "adversary block length",
            got: 0,
            min: 1,
        });
    }
    let n = 4 * cfg.block;
    let g = build_cycle(n)?;
    let b = max_b(&g)?;
    (0..cfg.reps)
        .into_par_iter()
        .map(|draw| {
            let env = AdversaryEnv::new(
                cfg.block,
                cfg.horizon,
                cfg.scale,
                cfg.radius,
                cfg.dim,
                rng::seed_for(cfg.seed, draw as u64, StreamTag::Adversary, 0),
            )?;
            lowerbound_draw(&g, b, &env, cfg, draw)
        })
        .collect()
}

pub(crate) fn lowerbound_draw(
    g: &Graph,
    b: f64,
    env: &AdversaryEnv,
    cfg: &LowerBoundConfig,
    draw: usize,
) -> Result<LowerBoundRow> {
    let n = g.n();
    let reg = RegularizerSpec::quadratic(cfg.radius);
    let eta = crate::learners::tune_eta(
        cfg.eta_rule,
        &EtaInputs {
            p: 1.0,
            n,
            horizon: cfg.horizon,
            d: reg.diameter_sq().sqrt(),
            l: env.lipschitz(),
            mu: reg.mu,
            pmin: 1.0,
        },
    )?;
    let model = ActivationModel::uniform(n, 1.0, 1.0)?;
    let traces = simulate(
        g,
        &model,
        env,
        b,
        reg,
        &[LearnerSpec {
            algorithm: Algorithm::Dftrl,
            eta,
        }],
        cfg.seed,
        draw as u64,
    )?;
    let report = network_regret(&traces[0], env)?;
    Ok(LowerBoundRow {
        draw,
        block: cfg.block,
        n,
        horizon: cfg.horizon,
        eta,
        sign_sum: env.signs().iter().map(|&s| s as i64).sum(),
        regret: report.realized_regret,
        floor: env.regret_floor(),
    })
}

/// One row of the `rho-scan` CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoScanRow {
    pub graph: String,
    pub p: f64,
    pub q: f64,
    pub rho_sq_exact: f64,
    pub rho_sq_upper: f64,
    pub rho_sq_empirical: f64,
    pub draws: usize,
}

/// `rho^2` three ways over a grid of uniform activation probabilities, `b = 1 / lambda1`.
pub fn rho_scan(
    spec: &GraphSpec,
    p_grid: &[f64],
    q: f64,
    draws: usize,
    seed: u64,
) -> Result<Vec<RhoScanRow>> {
    let g = build_graph(spec, seed, 0)?;
    let b = max_b(&g)?;
    p_grid
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let model = ActivationModel::uniform(g.n(), p, q)?;
            let report = gossip::rho_report(
                &g,
                &model,
                b,
                draws,
                rng::seed_for(seed, i as u64, StreamTag::Gossip, 0),
            )?;
            Ok(RhoScanRow {
                graph: spec.to_string(),
                p,
                q,
                rho_sq_exact: report.rho_sq_exact.unwrap_or(f64::NAN),
                rho_sq_upper: report.rho_sq_upper,
                rho_sq_empirical: report.rho_sq_empirical,
                draws,
            })
        })
        .collect()
}
