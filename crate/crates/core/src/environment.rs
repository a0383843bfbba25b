//! Per-round, per-agent convex losses.
//!
//! Two environments are provided: a synthetic distributed linear regression
//! (squared loss, half of the agents see pure noise) and the block-Rademacher
//! linear adversary placed on a cycle. Both expose their cumulative loss as a
//! [`QuadraticForm`] so the comparator can be solved exactly.

use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

/// `f(x) = 1/2 x^T A x - b^T x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

impl QuadraticForm {
    pub fn zeros(d: usize) -> Self {
        QuadraticForm {
            a: DMatrix::zeros(d, d),
            b: DVector::zeros(d),
            c: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Adds `weight * 1/2 (<w, x> - y)^2`.
    pub fn add_squared_residual(&mut self, weight: f64, w: &[f64], y: f64) {
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                self.a[(i, j)] += weight * w[i] * w[j];
            }
            self.b[i] += weight * y * w[i];
        }
        self.c += 0.5 * weight * y * y;
    }

    /// Adds `weight * <coef, x>`.
    pub fn add_linear(&mut self, weight: f64, coef: &[f64]) {
        for (bi, ci) in self.b.iter_mut().zip(coef) {
            *bi -= weight * ci;
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.a * &x)) - self.b.dot(&x) + self.c
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        (&self.a * x - &self.b).iter().copied().collect()
    }
}

pub trait LossOracle: Send + Sync {
    fn dim(&self) -> usize;
    fn radius(&self) -> f64;
    fn num_agents(&self) -> usize;
    fn horizon(&self) -> usize;
    /// Bound on the gradient norm over the ball, measured on the realized instance.
    fn lipschitz(&self) -> f64;
    fn eval(&self, t: usize, v: usize, x: &[f64]) -> f64;
    fn grad_into(&self, t: usize, v: usize, x: &[f64], out: &mut [f64]);
    /// Adds `weight * loss_t(v, .)` to `form`.
    fn accumulate(&self, t: usize, v: usize, weight: f64, form: &mut QuadraticForm);

    fn grad(&self, t: usize, v: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.grad_into(t, v, x, &mut out);
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub const REGRESSION_DIM: usize = 10;
pub const REGRESSION_RADIUS: f64 = 2.0;

/// Distributed linear regression: `loss_t(v, x) = 1/2 (<w_t(v), x> - y_t(v))^2`
/// with features uniform on `[-1, 1]^d`. Agents `v < ceil(N/2)` get pure
/// Gaussian noise labels; the others get `<w, 1> + noise`.
#[derive(Debug, Clone)]
pub struct RegressionEnv {
    n: usize,
    horizon: usize,
    dim: usize,
    radius: f64,
    features: Vec<f64>,
    labels: Vec<f64>,
    lipschitz: f64,
}

impl RegressionEnv {
    pub fn new(n: usize, horizon: usize, data_seed: u64) -> Result<Self> {
        Self::with_shape(n, horizon, REGRESSION_DIM, REGRESSION_RADIUS, data_seed)
    }

    pub fn with_shape(
        n: usize,
        horizon: usize,
        dim: usize,
        radius: f64,
        data_seed: u64,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSize {
                what: "regression agents",
                got: n,
                min: 2,
            });
        }
        if horizon == 0 || dim == 0 {
            return Err(Error::InvalidParameter("horizon and dimension must be >= 1".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!("radius {radius} must be positive")));
        }
        let mut rng = rng::stream(data_seed, 0, rng::StreamTag::Data, 0);
        let unif = Uniform::new_inclusive(-1.0, 1.0);
        let noisy = n.div_ceil(2);
        let mut features = Vec::with_capacity(horizon * n * dim);
        let mut labels = Vec::with_capacity(horizon * n);
        let mut lipschitz = 0.0_f64;
        for _t in 0..horizon {
            for v in 0..n {
                let start = features.len();
                features.extend((0..dim).map(|_| unif.sample(&mut rng)));
                let noise: f64 = rng.sample(StandardNormal);
                let w = &features[start..];
                let y = if v < noisy {
                    noise
                } else {
                    w.iter().sum::<f64>() + noise
                };
                labels.push(y);
                let wn = norm(w);
                lipschitz = lipschitz.max((wn * radius + y.abs()) * wn);
            }
        }
        Ok(RegressionEnv {
            n,
            horizon,
            dim,
            radius,
            features,
            labels,
            lipschitz,
        })
    }

    pub fn features(&self, t: usize, v: usize) -> &[f64] {
        let start = (t * self.n + v) * self.dim;
        &self.features[start..start + self.dim]
    }

    pub fn label(&self, t: usize, v: usize) -> f64 {
        self.labels[t * self.n + v]
    }

    fn residual(&self, t: usize, v: usize, x: &[f64]) -> f64 {
        dot(self.features(t, v), x) - self.label(t, v)
    }
}

impl LossOracle for RegressionEnv {
    fn dim(&self) -> usize {
        self.dim
    }

    fn radius(&self) -> f64 {
        self.radius
    }

    fn num_agents(&self) -> usize {
        self.n
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn eval(&self, t: usize, v: usize, x: &[f64]) -> f64 {
        0.5 * self.residual(t, v, x).powi(2)
    }

    fn grad_into(&self, t: usize, v: usize, x: &[f64], out: &mut [f64]) {
        let r = self.residual(t, v, x);
        for (o, w) in out.iter_mut().zip(self.features(t, v)) {
            *o = r * w;
        }
    }

    fn accumulate(&self, t: usize, v: usize, weight: f64, form: &mut QuadraticForm) {
        form.add_squared_residual(weight, self.features(t, v), self.label(t, v));
    }
}

/// Linear adversary on the `4M`-cycle. Agents `0..3M` have zero loss; agents
/// `3M..4M` suffer `(N - M + 1) eps_k L <w, x>` during block `k = t / M`
/// (rounds 0-indexed), with `w = e_1` and i.i.d. Rademacher signs `eps_k`.
#[derive(Debug, Clone)]
pub struct AdversaryEnv {
    block: usize,
    horizon: usize,
    dim: usize,
    radius: f64,
    scale: f64,
    signs: Vec<i8>,
}

impl AdversaryEnv {
    pub fn new(
        block: usize,
        horizon: usize,
        scale: f64,
        radius: f64,
        dim: usize,
        eps_seed: u64,
    ) -> Result<Self> {
        let blocks = Self::check(block, horizon, scale, radius, dim)?;
        let mut rng = rng::from_seed(eps_seed);
        let signs = (0..blocks)
            .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
            .collect();
        Ok(AdversaryEnv {
            block,
            horizon,
            dim,
            radius,
            scale,
            signs,
        })
    }

    /// Adversary with explicitly chosen block signs.
    pub fn with_signs(
        block: usize,
        horizon: usize,
        scale: f64,
        radius: f64,
        dim: usize,
        signs: Vec<i8>,
    ) -> Result<Self> {
        let blocks = Self::check(block, horizon, scale, radius, dim)?;
        if signs.len() != blocks || signs.iter().any(|s| s.abs() != 1) {
            return Err(Error::InvalidParameter(format!(
                "need {blocks} signs in {{-1, +1}}, got {signs:?}"
            )));
        }
        Ok(AdversaryEnv {
            block,
            horizon,
            dim,
            radius,
            scale,
            signs,
        })
    }

    fn check(block: usize, horizon: usize, scale: f64, radius: f64, dim: usize) -> Result<usize> {
        if block == 0 {
            return Err(Error::InvalidSize {
                what: "adversary block length",
                got: 0,
                min: 1,
            });
        }
        if horizon == 0 || dim == 0 || !(scale > 0.0) || !(radius > 0.0) {
            return Err(Error::InvalidParameter(
                "adversary needs T >= 1, d >= 1, L > 0 and R > 0".into(),
            ));
        }
        Ok(horizon.div_ceil(block))
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn num_blocks(&self) -> usize {
        self.signs.len()
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn block_index(&self, t: usize) -> usize {
        t / self.block
    }

    pub fn sign_at(&self, t: usize) -> f64 {
        self.signs[self.block_index(t)] as f64
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Diameter of the decision set, `2R`.
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    /// `N - M + 1`, the loss multiplier of the loss-bearing agents.
    pub fn multiplier(&self) -> f64 {
        (3 * self.block + 1) as f64
    }

    pub fn bears_loss(&self, v: usize) -> bool {
        v >= 3 * self.block
    }

    /// Coefficient `c` such that `loss_t(v, x) = c * x_1`.
    fn coefficient(&self, t: usize, v: usize) -> f64 {
        if self.bears_loss(v) {
            self.multiplier() * self.sign_at(t) * self.scale
        } else {
            0.0
        }
    }

    /// Expected-regret floor `((N - M + 1) D L / (2N)) sqrt(M T)` with `D = 2R`.
    pub fn regret_floor(&self) -> f64 {
        let n = (4 * self.block) as f64;
        self.multiplier() * self.diameter() * self.scale / (2.0 * n)
            * ((self.block * self.horizon) as f64).sqrt()
    }
}

impl LossOracle for AdversaryEnv {
    fn dim(&self) -> usize {
        self.dim
    }

    fn radius(&self) -> f64 {
        self.radius
    }

    fn num_agents(&self) -> usize {
        4 * self.block
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn lipschitz(&self) -> f64 {
        self.multiplier() * self.scale
    }

    fn eval(&self, t: usize, v: usize, x: &[f64]) -> f64 {
        self.coefficient(t, v) * x[0]
    }

    fn grad_into(&self, t: usize, v: usize, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[0] = self.coefficient(t, v);
    }

    fn accumulate(&self, t: usize, v: usize, weight: f64, form: &mut QuadraticForm) {
        let c = self.coefficient(t, v);
        if c != 0.0 {
            let mut coef = vec![0.0; self.dim];
            coef[0] = c;
            form.add_linear(weight, &coef);
        }
    }
}

#[derive(Debug, Clone)]
pub enum Environment {
    Regression(RegressionEnv),
    Adversary(AdversaryEnv),
}

macro_rules! delegate {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            Environment::Regression($e) => $body,
            Environment::Adversary($e) => $body,
        }
    };
}

impl LossOracle for Environment {
    fn dim(&self) -> usize {
        delegate!(self, e => e.dim())
    }

    fn radius(&self) -> f64 {
        delegate!(self, e => e.radius())
    }

    fn num_agents(&self) -> usize {
        delegate!(self, e => e.num_agents())
    }

    fn horizon(&self) -> usize {
        delegate!(self, e => e.horizon())
    }

    fn lipschitz(&self) -> f64 {
        delegate!(self, e => e.lipschitz())
    }

    fn eval(&self, t: usize, v: usize, x: &[f64]) -> f64 {
        delegate!(self, e => e.eval(t, v, x))
    }

    fn grad_into(&self, t: usize, v: usize, x: &[f64], out: &mut [f64]) {
        delegate!(self, e => e.grad_into(t, v, x, out))
    }

    fn accumulate(&self, t: usize, v: usize, weight: f64, form: &mut QuadraticForm) {
        delegate!(self, e => e.accumulate(t, v, weight, form))
    }
}
