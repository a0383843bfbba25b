//! Random availability of agents and edges.
//!
//! Each round every agent `v` is active independently with probability
//! `p_v`; every base edge whose two endpoints are active then survives
//! independently with probability `q`. Draws are taken from a single stream
//! in a fixed order: node coins in ascending node order, then edge coins in
//! canonical edge order (only for edges with both endpoints active).

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Time-varying activation probabilities, shared by all agents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    /// `p(t) = pmin + (pmax - pmin) (1 - cos(2 pi t / period)) / 2`.
    Cycle { pmin: f64, pmax: f64, period: usize },
}

impl Schedule {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Schedule::Cycle { pmin, pmax, .. } => (pmin, pmax),
        }
    }

    pub fn value(&self, t: usize) -> f64 {
        match *self {
            Schedule::Cycle { pmin, pmax, period } => {
                let phase = 2.0 * std::f64::consts::PI * (t % period) as f64 / period as f64;
                let p = pmin + (pmax - pmin) * (1.0 - phase.cos()) / 2.0;
                p.clamp(pmin, pmax)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Cycle { pmin, pmax, period } => {
                if !(pmin > 0.0 && pmin <= pmax && pmax <= 1.0) || period == 0 {
                    return Err(Error::InvalidModel(format!(
                        "schedule needs 0 < pmin <= pmax <= 1 and period >= 1, got {self}"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Cycle { pmin, pmax, period } => write!(f, "cycle({pmin},{pmax},{period})"),
        }
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad schedule {s:?}, expected cycle(pmin,pmax,period)"));
        let inner = s
            .trim()
            .strip_prefix("cycle(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(bad)?;
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let sched = Schedule::Cycle {
            pmin: parts[0].parse().map_err(|_| bad())?,
            pmax: parts[1].parse().map_err(|_| bad())?,
            period: parts[2].parse().map_err(|_| bad())?,
        };
        sched.validate()?;
        Ok(sched)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationModel {
    p: Vec<f64>,
    q: f64,
    schedule: Option<Schedule>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationStats {
    pub pbar: f64,
    pub sigma_sq: f64,
    pub pmin: f64,
    pub pmax: f64,
    /// Expected fraction of rounds with at least one active agent, `1 - prod(1 - p_v)`.
    pub nonempty_fraction: f64,
}

impl ActivationModel {
    pub fn new(p: Vec<f64>, q: f64) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidModel("empty probability vector".into()));
        }
        if let Some((v, pv)) = p.iter().enumerate().find(|(_, &pv)| !(pv > 0.0 && pv <= 1.0)) {
            return Err(Error::InvalidModel(format!("p[{v}] = {pv} outside (0, 1]")));
        }
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidModel(format!("q = {q} outside (0, 1]")));
        }
        let total: f64 = p.iter().sum();
        if total < 1.0 {
            log::warn!("sum of activation probabilities is {total} < 1; empty rounds will be frequent");
        }
        Ok(ActivationModel { p, q, schedule: None })
    }

    pub fn uniform(n: usize, p: f64, q: f64) -> Result<Self> {
        Self::new(vec![p; n], q)
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Result<Self> {
        schedule.validate()?;
        self.schedule = Some(schedule);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn schedule(&self) -> Option<&Schedule> {
        self.schedule.as_ref()
    }

    /// Common probability when all agents share one and no schedule is set.
    pub fn uniform_p(&self) -> Option<f64> {
        let first = self.p[0];
        (self.schedule.is_none() && self.p.iter().all(|&pv| pv == first)).then_some(first)
    }

    /// Activation probabilities in force at round `t`.
    pub fn p_at(&self, t: usize) -> Cow<'_, [f64]> {
        match &self.schedule {
            None => Cow::Borrowed(&self.p),
            Some(s) => Cow::Owned(vec![s.value(t); self.p.len()]),
        }
    }

    pub fn stats(&self) -> ActivationStats {
        activation_stats(&self.p)
    }

    pub fn sample_round<R: Rng + ?Sized>(
        &self,
        g: &Graph,
        t: usize,
        rng: &mut R,
    ) -> Result<RoundActivation> {
        if g.n() != self.p.len() {
            return Err(Error::InvalidModel(format!(
                "model has {} agents but graph has {} nodes",
                self.p.len(),
                g.n()
            )));
        }
        let p = self.p_at(t);
        let mut mask = vec![false; g.n()];
        let mut nodes = Vec::new();
        for (v, &pv) in p.iter().enumerate() {
            if rng.gen::<f64>() < pv {
                mask[v] = true;
                nodes.push(v);
            }
        }
        let mut edges = Vec::new();
        for &(u, v) in g.edges() {
            if mask[u] && mask[v] && rng.gen::<f64>() < self.q {
                edges.push((u, v));
            }
        }
        Ok(RoundActivation {
            mask,
            nodes,
            edges,
        })
    }
}

pub fn activation_stats(p: &[f64]) -> ActivationStats {
    let n = p.len() as f64;
    let pbar = p.iter().sum::<f64>() / n;
    let second = p.iter().map(|x| x * x).sum::<f64>() / n;
    ActivationStats {
        pbar,
        sigma_sq: (second - pbar * pbar).max(0.0),
        pmin: p.iter().copied().fold(f64::INFINITY, f64::min),
        pmax: p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        nonempty_fraction: 1.0 - p.iter().map(|x| 1.0 - x).product::<f64>(),
    }
}

/// Active agents `S_t` and active edges `E_t` of one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundActivation {
    mask: Vec<bool>,
    nodes: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

impl RoundActivation {
    /// Builds a round from explicit sets, checking it against the base graph.
    pub fn new(g: &Graph, nodes: Vec<usize>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut mask = vec![false; g.n()];
        for &v in &nodes {
            if v >= g.n() || mask[v] {
                return Err(Error::InvalidModel(format!("bad active node {v}")));
            }
            mask[v] = true;
        }
        let mut nodes = nodes;
        nodes.sort_unstable();
        let mut edges: Vec<_> = edges
            .into_iter()
            .map(|(u, v)| if u < v { (u, v) } else { (v, u) })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        for &(u, v) in &edges {
            if !g.has_edge(u, v) || !mask[u] || !mask[v] {
                return Err(Error::InvalidModel(format!(
                    "edge ({u}, {v}) is not an edge between active nodes"
                )));
            }
        }
        Ok(RoundActivation { mask, nodes, edges })
    }

    /// Everyone active, every edge usable.
    pub fn full(g: &Graph) -> Self {
        RoundActivation {
            mask: vec![true; g.n()],
            nodes: (0..g.n()).collect(),
            edges: g.edges().to_vec(),
        }
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn is_active(&self, v: usize) -> bool {
        self.mask[v]
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }
}
