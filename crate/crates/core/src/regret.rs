//! Network regret, its comparator, theory bounds and the regret decomposition.
//!
//! The network loss of round `t` is the average of the active agents' local
//! losses, and the network regret sums, over non-empty rounds, the average
//! network loss of the active agents' predictions minus the loss of the best
//! fixed point in hindsight. Rounds with no active agent are skipped.

use std::collections::BTreeMap;

use nalgebra::{DVector, SymmetricEigen};

use crate::environment::{LossOracle, QuadraticForm};
use crate::error::{Error, Result};
use crate::learners::{ftrl_predict, norm, Algorithm, RegularizerSpec};

/// One non-empty round of a simulation, from the point of view of one learner.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    /// Active agents, ascending.
    pub active: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    /// Predictions of the active agents, aligned with `active`.
    pub predictions: Vec<Vec<f64>>,
    /// `loss_t(v, x_t(v))` for the active agents.
    pub losses: Vec<f64>,
    /// Raw local gradients of the active agents.
    pub grads: Vec<Vec<f64>>,
    /// Factor the learner applied to the gradients before mixing them into its state.
    pub grad_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub n: usize,
    pub horizon: usize,
    pub dim: usize,
    pub algorithm: Algorithm,
    pub eta: f64,
    pub reg: RegularizerSpec,
    /// Non-empty rounds only, in time order.
    pub rounds: Vec<RoundRecord>,
}

/// Cumulative network loss `sum_t (1/|S_t|) sum_{v in S_t} loss_t(v, .)` over the
/// first `upto` recorded rounds.
pub fn cumulative_form<E: LossOracle + ?Sized>(
    trace: &SimulationTrace,
    env: &E,
    upto: usize,
) -> QuadraticForm {
    let mut form = QuadraticForm::zeros(trace.dim);
    for r in &trace.rounds[..upto] {
        let w = 1.0 / r.active.len() as f64;
        for &v in &r.active {
            env.accumulate(r.t, v, w, &mut form);
        }
    }
    form
}

/// Residual tolerance on `||x|| = R` for boundary solutions.
pub const TRUST_REGION_TOL: f64 = 1e-10;

/// Exact minimizer of `1/2 x^T A x - b^T x + c` over `||x|| <= radius`.
///
/// Works in the eigenbasis of `A`: if the (minimum-norm) stationary point is
/// feasible it is returned, otherwise a safeguarded Newton iteration on the
/// multiplier `nu` solves `||(A + nu I)^{-1} b|| = radius`; when `b` has no
/// component along the bottom eigenspace the hard-case completion is used.
pub fn solve_ball_quadratic(form: &QuadraticForm, radius: f64) -> Vec<f64> {
    let d = form.dim();
    let eig = SymmetricEigen::new(form.a.clone());
    let lam: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let q = &eig.eigenvectors;
    let beta: Vec<f64> = (q.transpose() * &form.b).iter().copied().collect();
    let scale = lam.iter().fold(1.0_f64, |m, l| m.max(l.abs()));
    let zero_tol = 1e-12 * scale;
    let b_tol = 1e-12 * beta.iter().fold(1e-300_f64, |m, x| m.max(x.abs()));
    let lam_min = lam.iter().copied().fold(f64::INFINITY, f64::min);

    let to_x = |coeffs: &[f64]| -> Vec<f64> {
        let c = DVector::from_column_slice(coeffs);
        (q * c).iter().copied().collect()
    };

    // interior candidate
    if lam_min > -zero_tol {
        let mut coeffs = vec![0.0; d];
        let mut consistent = true;
        for i in 0..d {
            if lam[i] > zero_tol {
                coeffs[i] = beta[i] / lam[i];
            } else if beta[i].abs() > b_tol {
                consistent = false;
            }
        }
        if consistent && norm(&coeffs) <= radius {
            return to_x(&coeffs);
        }
    }

    let coeff_at = |nu: f64| -> Vec<f64> {
        (0..d)
            .map(|i| {
                let den = lam[i] + nu;
                if den.abs() <= zero_tol {
                    0.0
                } else {
                    beta[i] / den
                }
            })
            .collect()
    };

    let nu_lo0 = (-lam_min).max(0.0);
    let bottom_has_mass = (0..d).any(|i| (lam[i] - lam_min).abs() <= zero_tol && beta[i].abs() > b_tol);
    if !bottom_has_mass {
        // hard case: b orthogonal to the bottom eigenspace
        let base = coeff_at(nu_lo0);
        let base_norm = norm(&base);
        if base_norm <= radius {
            let i_min = (0..d)
                .min_by(|&a, &b| lam[a].total_cmp(&lam[b]))
                .expect("dimension >= 1");
            let mut coeffs = base;
            coeffs[i_min] = (radius * radius - base_norm * base_norm).max(0.0).sqrt();
            return to_x(&coeffs);
        }
    }

    // boundary solutions lie on the sphere; remove the residual of the root solve
    let on_sphere = |mut c: Vec<f64>| -> Vec<f64> {
        let cn = norm(&c);
        if cn > 0.0 {
            c.iter_mut().for_each(|v| *v *= radius / cn);
        }
        to_x(&c)
    };

    let bnorm = beta.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut lo = nu_lo0;
    let mut hi = nu_lo0 + bnorm / radius + zero_tol;
    let mut nu = hi;
    for _ in 0..200 {
        let c = coeff_at(nu);
        let xn = norm(&c);
        if (xn - radius).abs() <= TRUST_REGION_TOL * radius.max(1.0) {
            return on_sphere(c);
        }
        if xn > radius {
            lo = nu;
        } else {
            hi = nu;
        }
        let s: f64 = (0..d)
            .map(|i| beta[i] * beta[i] / (lam[i] + nu).powi(3))
            .filter(|v| v.is_finite())
            .sum();
        let mut next = nu + (xn / radius - 1.0) * xn * xn / s;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            return on_sphere(coeff_at(hi));
        }
        nu = next;
    }
    on_sphere(coeff_at(nu))
}

pub fn comparator_solve<E: LossOracle + ?Sized>(
    trace: &SimulationTrace,
    env: &E,
) -> Result<(Vec<f64>, f64)> {
    if trace.rounds.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let form = cumulative_form(trace, env, trace.rounds.len());
    let x = solve_ball_quadratic(&form, trace.reg.radius);
    let value = form.eval(&x);
    Ok((x, value))
}

/// `(1/|S_t|) sum_{u in S_t} lbar_t(S_t, x_t(u))` for one recorded round.
pub fn round_network_loss<E: LossOracle + ?Sized>(r: &RoundRecord, env: &E) -> f64 {
    let s = r.active.len() as f64;
    let mut total = 0.0;
    for x in &r.predictions {
        for &v in &r.active {
            total += env.eval(r.t, v, x);
        }
    }
    total / (s * s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub realized_regret: f64,
    pub comparator_x: Vec<f64>,
    pub comparator_value: f64,
    pub cumulative_alg_loss: f64,
    pub bounds: Option<Bounds>,
    pub decomposition: Option<Decomposition>,
}

pub fn network_regret<E: LossOracle + ?Sized>(
    trace: &SimulationTrace,
    env: &E,
) -> Result<RegretReport> {
    let (comparator_x, comparator_value) = comparator_solve(trace, env)?;
    let cumulative_alg_loss: f64 = trace.rounds.iter().map(|r| round_network_loss(r, env)).sum();
    Ok(RegretReport {
        realized_regret: cumulative_alg_loss - comparator_value,
        comparator_x,
        comparator_value,
        cumulative_alg_loss,
        bounds: None,
        decomposition: None,
    })
}

/// Network regret after each round `t = 1..=horizon` (empty rounds repeat the previous value).
pub fn regret_series<E: LossOracle + ?Sized>(trace: &SimulationTrace, env: &E) -> Vec<f64> {
    let mut out = Vec::with_capacity(trace.horizon);
    let mut form = QuadraticForm::zeros(trace.dim);
    let mut alg = 0.0;
    let mut current = 0.0;
    let mut rounds = trace.rounds.iter().peekable();
    for t in 0..trace.horizon {
        if let Some(r) = rounds.next_if(|r| r.t == t) {
            let w = 1.0 / r.active.len() as f64;
            for &v in &r.active {
                env.accumulate(t, v, w, &mut form);
            }
            alg += round_network_loss(r, env);
            let x = solve_ball_quadratic(&form, trace.reg.radius);
            current = alg - form.eval(&x);
        }
        out.push(current);
    }
    out
}

/// Terms of the regret decomposition with the omniscient FTRL iterate as reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub term_a: f64,
    pub term_b: f64,
    pub regret: f64,
}

/// Replays the trace with the network-averaged dual `zbar_{t+1} = zbar_t + gbar_t`,
/// `y_t = ftrl_predict(zbar_t)`, and accumulates
/// `A = 3 L sum_t (1/|S_t|) sum_u ||x_t(u) - y_t||` and
/// `B = sum_t (1/|S_t|) sum_v <g_t(v), y_t - x*>`, with `L` the environment's
/// measured Lipschitz bound.
pub fn decomposition_diagnostic<E: LossOracle + ?Sized>(
    trace: &SimulationTrace,
    env: &E,
) -> Result<Decomposition> {
    let report = network_regret(trace, env)?;
    let lip = env.lipschitz();
    let xstar = &report.comparator_x;
    let n = trace.n as f64;
    let mut zbar = vec![0.0; trace.dim];
    let mut term_a = 0.0;
    let mut term_b = 0.0;
    for r in &trace.rounds {
        let y = ftrl_predict(&zbar, trace.eta, &trace.reg);
        let inv = 1.0 / r.active.len() as f64;
        for x in &r.predictions {
            let dist = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            term_a += 3.0 * lip * inv * dist;
        }
        for g in &r.grads {
            let inner: f64 = g.iter().zip(y.iter().zip(xstar)).map(|(gi, (yi, xi))| gi * (yi - xi)).sum();
            term_b += inv * inner;
            for (zb, gi) in zbar.iter_mut().zip(g) {
                *zb += r.grad_scale * gi / n;
            }
        }
    }
    Ok(Decomposition {
        term_a,
        term_b,
        regret: report.realized_regret,
    })
}

/// Inputs of the theory bounds. `d` is `sqrt(D^2)` of the regularizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub n: usize,
    pub horizon: usize,
    pub eta: f64,
    pub d: f64,
    pub l: f64,
    pub mu: f64,
    pub pbar: f64,
    pub sigma_sq: f64,
    pub pmin: f64,
    pub p: f64,
    pub q: f64,
    pub rho: f64,
    pub kappa: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    /// Expected regret, arbitrary activation probabilities.
    pub first: f64,
    /// Expected regret, uniform activation probability `p`.
    pub second: f64,
    /// Expected regret with the tuned learning rate.
    pub third: f64,
    /// High-probability bound at confidence `1 - delta`.
    pub high_probability: f64,
    /// `12 D L kappa / pmin N^{3/4} sqrt(T / mu)`.
    pub rate_diffp: f64,
    /// Order of the random-edges bound, `kappa/(pq) min(sqrt N, N^{1/4}/sqrt p) sqrt T`, constants dropped.
    pub erdos: f64,
}

impl Bounds {
    pub fn to_map(&self) -> BTreeMap<&'static str, f64> {
        BTreeMap::from([
            ("first_bound", self.first),
            ("second_bound", self.second),
            ("third_bound", self.third),
            ("hp_bound", self.high_probability),
            ("rate_diffp", self.rate_diffp),
            ("erdos_bound", self.erdos),
        ])
    }
}

pub fn third_bound_factor(n: usize, p: f64) -> f64 {
    let nf = n as f64;
    if p >= 1.0 / nf && p <= 1.0 / nf.sqrt() {
        nf.sqrt()
    } else {
        nf.powf(0.25) / p.sqrt()
    }
}

pub fn eval_bounds(bp: &BoundParams) -> Result<Bounds> {
    if !(0.0..1.0).contains(&bp.rho) {
        return Err(Error::SpectralGap(bp.rho));
    }
    let n = bp.n as f64;
    let t = bp.horizon as f64;
    let (d, l, mu, eta, rho) = (bp.d, bp.l, bp.mu, bp.eta, bp.rho);
    let gap_ratio = rho / (1.0 - rho);
    let l2mu = l * l / mu;

    let first = n * d * d / eta
        + l2mu
            * eta
            * (bp.pbar * n + bp.pbar * (1.0 - bp.pbar) - bp.sigma_sq
                + 6.0
                + 3.0 * (bp.pbar * n).min(n.sqrt()) * gap_ratio)
            * t;
    let second = d * d / (bp.p * eta) + l2mu * eta * (8.0 + 3.0 * (bp.p * n).min(n.sqrt()) * gap_ratio) * t;
    let third = 2.0 * 2f64.sqrt() * d * l / mu.sqrt() / (1.0 - rho) * t.sqrt() * third_bound_factor(bp.n, bp.p);
    let high_probability = n * (d * d / eta + l2mu * eta * t)
        + 3.0 * eta * t * n * l2mu * (3.0 / (1.0 - rho * rho) * (n * t * t / bp.delta).ln() + 3.0);
    let rate_diffp = 12.0 * d * l * bp.kappa / bp.pmin * n.powf(0.75) * (t / mu).sqrt();
    let erdos = bp.kappa / (bp.p * bp.q) * n.sqrt().min(n.powf(0.25) / bp.p.sqrt()) * t.sqrt();
    Ok(Bounds {
        first,
        second,
        third,
        high_probability,
        rate_diffp,
        erdos,
    })
}
