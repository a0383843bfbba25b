//! Distributed learners: gossip-based FTRL (plus its known-`|S_t|` variant)
//! and the distributed projected online gradient descent baseline.
//!
//! Agent states are stored as the rows of an `N x d` matrix, so one gossip
//! step is a single product `W * Z`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::activation::RoundActivation;
use crate::error::{Error, Result};
use crate::gossip::GossipMatrix;

/// Quadratic regularizer `psi(x) = mu/2 ||x||^2` over the Euclidean ball of radius `radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerSpec {
    pub radius: f64,
    pub mu: f64,
}

impl RegularizerSpec {
    pub fn quadratic(radius: f64) -> Self {
        RegularizerSpec { radius, mu: 1.0 }
    }

    /// `max psi - min psi` over the ball.
    pub fn diameter_sq(&self) -> f64 {
        0.5 * self.mu * self.radius * self.radius
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn project_ball(x: &mut [f64], radius: f64) {
    let n = norm(x);
    if n > radius {
        let s = radius / n;
        x.iter_mut().for_each(|v| *v *= s);
    }
}

/// `argmin_{||x|| <= R} <z, x> + psi(x) / eta`, i.e. `-eta z / mu` clipped to the ball.
pub fn ftrl_predict(z: &[f64], eta: f64, reg: &RegularizerSpec) -> Vec<f64> {
    let mut x: Vec<f64> = z.iter().map(|zi| -eta * zi / reg.mu).collect();
    project_ball(&mut x, reg.radius);
    x
}

fn check_shapes(state: &DMatrix<f64>, w: &GossipMatrix, grads: &DMatrix<f64>) -> Result<()> {
    if w.n() != state.nrows() || grads.shape() != state.shape() {
        return Err(Error::Shape(format!(
            "state {:?}, gossip {}x{}, gradients {:?}",
            state.shape(),
            w.n(),
            w.n(),
            grads.shape()
        )));
    }
    Ok(())
}

/// `Z <- W Z + G`. Rows of `G` must be zero for inactive agents.
pub fn dftrl_round(z: &mut DMatrix<f64>, w: &GossipMatrix, grads: &DMatrix<f64>) -> Result<()> {
    check_shapes(z, w, grads)?;
    *z = w.matrix() * &*z + grads;
    Ok(())
}

/// Same as [`dftrl_round`] with gradients rescaled by `N / |S_t|`. Empty rounds are skipped.
pub fn dftrl_known_st_round(
    z: &mut DMatrix<f64>,
    round: &RoundActivation,
    w: &GossipMatrix,
    grads: &DMatrix<f64>,
) -> Result<()> {
    check_shapes(z, w, grads)?;
    if round.is_empty() {
        return Ok(());
    }
    let scale = z.nrows() as f64 / round.len() as f64;
    *z = w.matrix() * &*z + grads * scale;
    Ok(())
}

/// `X <- Proj(W X - eta G)`, row by row.
pub fn dogd_round(
    x: &mut DMatrix<f64>,
    w: &GossipMatrix,
    grads: &DMatrix<f64>,
    eta: f64,
    radius: f64,
) -> Result<()> {
    check_shapes(x, w, grads)?;
    *x = w.matrix() * &*x - grads * eta;
    let d = x.ncols();
    let mut row = vec![0.0; d];
    for v in 0..x.nrows() {
        for (j, r) in row.iter_mut().enumerate() {
            *r = x[(v, j)];
        }
        if norm(&row) > radius {
            project_ball(&mut row, radius);
            for (j, r) in row.iter().enumerate() {
                x[(v, j)] = *r;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Dftrl,
    DftrlKnownSt,
    Dogd,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Dftrl => "dftrl",
            Algorithm::DftrlKnownSt => "dftrl_known_st",
            Algorithm::Dogd => "dogd",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dftrl" => Ok(Algorithm::Dftrl),
            "dftrl_known_st" => Ok(Algorithm::DftrlKnownSt),
            "dogd" => Ok(Algorithm::Dogd),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtaRule {
    /// `(p min(pN, sqrt N) T)^{-1/2}`
    ExperimentDftrl,
    /// `N^{-1/4} T^{-1/2}`
    ExperimentDogd,
    /// `(D/L) sqrt(mu) / (2 sqrt(2 p min(pN, sqrt N) T))`
    TheoryThirdBound,
    /// `D sqrt(mu) pmin / (L sqrt T)`
    TheoryGeneralPmin,
}

impl EtaRule {
    pub fn name(&self) -> &'static str {
        match self {
            EtaRule::ExperimentDftrl => "experiment_dftrl",
            EtaRule::ExperimentDogd => "experiment_dogd",
            EtaRule::TheoryThirdBound => "theory_third_bound",
            EtaRule::TheoryGeneralPmin => "theory_general_pmin",
        }
    }
}

impl FromStr for EtaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "experiment_dftrl" => Ok(EtaRule::ExperimentDftrl),
            "experiment_dogd" => Ok(EtaRule::ExperimentDogd),
            "theory_third_bound" => Ok(EtaRule::TheoryThirdBound),
            "theory_general_pmin" => Ok(EtaRule::TheoryGeneralPmin),
            other => Err(Error::Config(format!("unknown eta_rule {other:?}"))),
        }
    }
}

/// Quantities the learning-rate formulas may depend on. `d` is `sqrt(D^2)` of the regularizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaInputs {
    pub p: f64,
    pub n: usize,
    pub horizon: usize,
    pub d: f64,
    pub l: f64,
    pub mu: f64,
    pub pmin: f64,
}

pub fn tune_eta(rule: EtaRule, inp: &EtaInputs) -> Result<f64> {
    let n = inp.n as f64;
    let t = inp.horizon as f64;
    let positive = [inp.p, n, t, inp.d, inp.l, inp.mu, inp.pmin];
    if positive.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "learning-rate inputs must be positive: {inp:?}"
        )));
    }
    let eff = (inp.p * n).min(n.sqrt());
    let eta = match rule {
        EtaRule::ExperimentDftrl => (inp.p * eff * t).powf(-0.5),
        EtaRule::ExperimentDogd => n.powf(-0.25) / t.sqrt(),
        EtaRule::TheoryThirdBound => {
            (inp.d / inp.l) * inp.mu.sqrt() / (2.0 * (2.0 * inp.p * eff * t).sqrt())
        }
        EtaRule::TheoryGeneralPmin => inp.d * inp.mu.sqrt() * inp.pmin / (inp.l * t.sqrt()),
    };
    Ok(eta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaChoice {
    Fixed(f64),
    Rule(EtaRule),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub eta: EtaChoice,
}

impl LearnerConfig {
    pub fn new(algorithm: Algorithm, eta: EtaChoice) -> Result<Self> {
        if let EtaChoice::Fixed(e) = eta {
            if !(e > 0.0) {
                return Err(Error::Config(format!("eta = {e} must be positive")));
            }
        }
        Ok(LearnerConfig { algorithm, eta })
    }

    pub fn resolve_eta(&self, inputs: &EtaInputs) -> Result<f64> {
        match self.eta {
            EtaChoice::Fixed(e) => Ok(e),
            EtaChoice::Rule(rule) => tune_eta(rule, inputs),
        }
    }
}

/// One learner instance for all agents: dual accumulators for the FTRL
/// variants, primal iterates for DOGD.
#[derive(Debug, Clone)]
pub struct Learner {
    algorithm: Algorithm,
    eta: f64,
    reg: RegularizerSpec,
    state: DMatrix<f64>,
}

impl Learner {
    pub fn new(algorithm: Algorithm, eta: f64, reg: RegularizerSpec, n: usize, d: usize) -> Self {
        Learner {
            algorithm,
            eta,
            reg,
            state: DMatrix::zeros(n, d),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn regularizer(&self) -> &RegularizerSpec {
        &self.reg
    }

    pub fn state(&self) -> &DMatrix<f64> {
        &self.state
    }

    pub fn prediction(&self, v: usize) -> Vec<f64> {
        let row: Vec<f64> = self.state.row(v).iter().copied().collect();
        match self.algorithm {
            Algorithm::Dftrl | Algorithm::DftrlKnownSt => ftrl_predict(&row, self.eta, &self.reg),
            Algorithm::Dogd => row,
        }
    }

    /// Scale applied to raw gradients before they enter the dual state.
    pub fn gradient_scale(&self, round: &RoundActivation) -> f64 {
        match self.algorithm {
            Algorithm::DftrlKnownSt if !round.is_empty() => {
                self.state.nrows() as f64 / round.len() as f64
            }
            _ => 1.0,
        }
    }

    pub fn step(
        &mut self,
        round: &RoundActivation,
        w: &GossipMatrix,
        grads: &DMatrix<f64>,
    ) -> Result<()> {
        match self.algorithm {
            Algorithm::Dftrl => dftrl_round(&mut self.state, w, grads),
            Algorithm::DftrlKnownSt => dftrl_known_st_round(&mut self.state, round, w, grads),
            Algorithm::Dogd => dogd_round(&mut self.state, w, grads, self.eta, self.reg.radius),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gossip::build_gossip;
    use crate::graph::{build_clique, build_grid2d};
    use approx::assert_abs_diff_eq;

    #[test]
    fn ftrl_prediction_geometry() {
        let reg = RegularizerSpec::quadratic(2.0);
        assert_eq!(ftrl_predict(&[0.0; 4], 0.5, &reg), vec![0.0; 4]);
        // eta |z| = 2R puts x on the boundary, opposite to z
        let z = [3.0, 4.0];
        let x = ftrl_predict(&z, 0.8, &reg);
        assert_abs_diff_eq!(norm(&x), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[0], -1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], -1.6, epsilon = 1e-12);
        let x = ftrl_predict(&[0.1, 0.2], 1.0, &reg);
        assert_eq!(x, vec![-0.1, -0.2]);
    }

    #[test]
    fn diameter_of_quadratic_regularizer() {
        assert_eq!(RegularizerSpec::quadratic(2.0).diameter_sq(), 2.0);
    }

    #[test]
    fn empty_round_freezes_state() {
        let g = build_grid2d(2).unwrap();
        let r = RoundActivation::new(&g, vec![], vec![]).unwrap();
        let w = build_gossip(&g, &r, 0.25).unwrap();
        let z0 = DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64);
        let mut z = z0.clone();
        dftrl_round(&mut z, &w, &DMatrix::zeros(4, 3)).unwrap();
        assert_eq!(z, z0);
        dftrl_known_st_round(&mut z, &r, &w, &DMatrix::zeros(4, 3)).unwrap();
        assert_eq!(z, z0);
        dogd_round(&mut z, &w, &DMatrix::zeros(4, 3), 0.1, 100.0).unwrap();
        assert_eq!(z, z0);
    }

    #[test]
    fn clique_averaging_on_three_nodes() {
        let g = build_clique(3).unwrap();
        let w = build_gossip(&g, &RoundActivation::full(&g), 1.0 / 3.0).unwrap();
        let mut z = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 3.0, 3.0, -3.0]);
        dftrl_round(&mut z, &w, &DMatrix::zeros(3, 2)).unwrap();
        for v in 0..3 {
            assert_abs_diff_eq!(z[(v, 0)], 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(z[(v, 1)], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn isolated_agent_adds_its_gradient() {
        let g = build_grid2d(2).unwrap();
        let r = RoundActivation::new(&g, vec![1], vec![]).unwrap();
        let w = build_gossip(&g, &r, 0.25).unwrap();
        let mut z = DMatrix::from_element(4, 2, 1.0);
        let mut grads = DMatrix::zeros(4, 2);
        grads[(1, 0)] = 0.5;
        dftrl_round(&mut z, &w, &grads).unwrap();
        assert_eq!(z[(1, 0)], 1.5);
        assert_eq!(z[(1, 1)], 1.0);
        assert_eq!(z[(0, 0)], 1.0);

        let mut z = DMatrix::zeros(4, 2);
        dftrl_known_st_round(&mut z, &r, &w, &grads).unwrap();
        assert_eq!(z[(1, 0)], 2.0);
    }

    #[test]
    fn known_st_full_round_matches_base() {
        let g = build_clique(4).unwrap();
        let r = RoundActivation::full(&g);
        let w = build_gossip(&g, &r, 0.25).unwrap();
        let grads = DMatrix::from_fn(4, 2, |i, j| (i as f64) - (j as f64) * 0.5);
        let mut a = DMatrix::from_element(4, 2, 0.3);
        let mut b = a.clone();
        dftrl_round(&mut a, &w, &grads).unwrap();
        dftrl_known_st_round(&mut b, &r, &w, &grads).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dogd_single_agent_is_projected_ogd() {
        let g = build_grid2d(2).unwrap();
        let r = RoundActivation::new(&g, vec![2], vec![]).unwrap();
        let w = build_gossip(&g, &r, 0.25).unwrap();
        let mut x = DMatrix::zeros(4, 2);
        x[(2, 0)] = 0.9;
        let mut grads = DMatrix::zeros(4, 2);
        grads[(2, 0)] = -3.0;
        dogd_round(&mut x, &w, &grads, 0.1, 1.0).unwrap();
        assert_abs_diff_eq!(x[(2, 0)], 1.0, epsilon = 1e-12);
        grads[(2, 0)] = 2.0;
        dogd_round(&mut x, &w, &grads, 0.1, 1.0).unwrap();
        assert_abs_diff_eq!(x[(2, 0)], 0.8, epsilon = 1e-12);
    }

    #[test]
    fn shape_errors() {
        let g = build_clique(3).unwrap();
        let w = build_gossip(&g, &RoundActivation::full(&g), 0.2).unwrap();
        let mut z = DMatrix::zeros(4, 2);
        assert!(matches!(
            dftrl_round(&mut z, &w, &DMatrix::zeros(4, 2)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn learning_rate_rules() {
        let inp = EtaInputs {
            p: 0.5,
            n: 36,
            horizon: 1000,
            d: 1.0,
            l: 1.0,
            mu: 1.0,
            pmin: 0.5,
        };
        assert_abs_diff_eq!(
            tune_eta(EtaRule::ExperimentDftrl, &inp).unwrap(),
            3000f64.powf(-0.5),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(tune_eta(EtaRule::ExperimentDftrl, &inp).unwrap(), 0.018257, epsilon = 1e-6);
        assert_abs_diff_eq!(tune_eta(EtaRule::ExperimentDogd, &inp).unwrap(), 0.012910, epsilon = 1e-6);
        let inp2 = EtaInputs {
            p: 1.0,
            n: 4,
            horizon: 100,
            d: 1.0,
            l: 1.0,
            mu: 1.0,
            pmin: 1.0,
        };
        assert_abs_diff_eq!(tune_eta(EtaRule::TheoryGeneralPmin, &inp2).unwrap(), 0.1, epsilon = 1e-15);
        // min(pN, sqrt N) = 2: (1/1) / (2 sqrt(2 * 2 * 100)) = 1/40
        assert_abs_diff_eq!(tune_eta(EtaRule::TheoryThirdBound, &inp2).unwrap(), 0.025, epsilon = 1e-15);
        assert!("adagrad".parse::<EtaRule>().is_err());
        assert!(tune_eta(EtaRule::ExperimentDftrl, &EtaInputs { p: 0.0, ..inp }).is_err());
    }
}
