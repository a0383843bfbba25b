//! Round loop shared by every experiment.
//!
//! All learners of one repetition see the same sequence of active sets and
//! gossip matrices. Round `t` of repetition `rep` draws its activation from
//! the stream `seed_for(master_seed, rep, Activation, t)`.

use nalgebra::DMatrix;

use crate::activation::{ActivationModel, RoundActivation};
use crate::environment::LossOracle;
use crate::error::{Error, Result};
use crate::gossip::build_gossip;
use crate::graph::Graph;
use crate::learners::{Algorithm, Learner, RegularizerSpec};
use crate::regret::{RoundRecord, SimulationTrace};
use crate::rng::{self, StreamTag};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerSpec {
    pub algorithm: Algorithm,
    pub eta: f64,
}

/// Runs every learner on the rounds produced by `next_round`.
pub fn simulate_rounds<E, F>(
    g: &Graph,
    env: &E,
    b: f64,
    reg: RegularizerSpec,
    learners: &[LearnerSpec],
    mut next_round: F,
) -> Result<Vec<SimulationTrace>>
where
    E: LossOracle + ?Sized,
    F: FnMut(usize) -> Result<RoundActivation>,
{
    let n = g.n();
    if env.num_agents() != n {
        return Err(Error::Shape(format!(
            "environment has {} agents, graph has {n} nodes",
            env.num_agents()
        )));
    }
    let d = env.dim();
    let horizon = env.horizon();
    let mut states: Vec<Learner> = learners
        .iter()
        .map(|s| Learner::new(s.algorithm, s.eta, reg, n, d))
        .collect();
    let mut traces: Vec<SimulationTrace> = learners
        .iter()
        .map(|s| SimulationTrace {
            n,
            horizon,
            dim: d,
            algorithm: s.algorithm,
            eta: s.eta,
            reg,
            rounds: Vec::new(),
        })
        .collect();
    let mut grads = DMatrix::zeros(n, d);
    for t in 0..horizon {
        let round = next_round(t)?;
        if round.is_empty() {
            continue;
        }
        let w = build_gossip(g, &round, b)?;
        for (learner, trace) in states.iter_mut().zip(traces.iter_mut()) {
            grads.fill(0.0);
            let mut record = RoundRecord {
                t,
                active: round.nodes().to_vec(),
                edges: round.edges().to_vec(),
                predictions: Vec::with_capacity(round.len()),
                losses: Vec::with_capacity(round.len()),
                grads: Vec::with_capacity(round.len()),
                grad_scale: learner.gradient_scale(&round),
            };
            for &v in round.nodes() {
                let x = learner.prediction(v);
                let gv = env.grad(t, v, &x);
                for (j, gj) in gv.iter().enumerate() {
                    grads[(v, j)] = *gj;
                }
                record.losses.push(env.eval(t, v, &x));
                record.predictions.push(x);
                record.grads.push(gv);
            }
            learner.step(&round, &w, &grads)?;
            trace.rounds.push(record);
        }
    }
    Ok(traces)
}

/// Runs one repetition with activations sampled from `model`.
pub fn simulate<E: LossOracle + ?Sized>(
    g: &Graph,
    model: &ActivationModel,
    env: &E,
    b: f64,
    reg: RegularizerSpec,
    learners: &[LearnerSpec],
    master_seed: u64,
    rep: u64,
) -> Result<Vec<SimulationTrace>> {
    simulate_rounds(g, env, b, reg, learners, |t| {
        let mut rng = rng::stream(master_seed, rep, StreamTag::Activation, t as u64);
        model.sample_round(g, t, &mut rng)
    })
}
