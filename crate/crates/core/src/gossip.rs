//! Gossip matrices `W_t = I - b Lap(G_t)` and the mixing rate `rho`.
//!
//! `rho^2` is the second largest eigenvalue of `E[W_t^2]`. It is available
//! three ways: the closed form for uniform activation probabilities (with
//! edge survival `q`), the Fiedler-value upper bound, and a Monte-Carlo
//! estimate that averages sampled `W^2`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::activation::{ActivationModel, RoundActivation};
use crate::error::{Error, Result};
use crate::graph::{symmetric_eigenvalues, Graph};
use crate::rng::{self, StreamTag};

/// Slack when checking `b <= 1 / lambda1`.
const B_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GossipMatrix {
    w: DMatrix<f64>,
}

impl GossipMatrix {
    pub fn identity(n: usize) -> Self {
        GossipMatrix {
            w: DMatrix::identity(n, n),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    /// Largest violation of row or column sums equal to one.
    pub fn stochasticity_error(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0_f64;
        for i in 0..n {
            worst = worst.max((self.w.row(i).sum() - 1.0).abs());
            worst = worst.max((self.w.column(i).sum() - 1.0).abs());
        }
        worst
    }

    pub fn asymmetry(&self) -> f64 {
        (&self.w - self.w.transpose()).amax()
    }

    pub fn min_entry(&self) -> f64 {
        self.w.min()
    }
}

/// Largest admissible `b` for a base graph.
pub fn max_b(g: &Graph) -> Result<f64> {
    Ok(1.0 / g.lambda1()?)
}

pub fn default_b(g: &Graph) -> Result<f64> {
    max_b(g)
}

/// `W = I - b Lap(G_t)` on the active subgraph; inactive agents get identity rows.
pub fn build_gossip(g: &Graph, round: &RoundActivation, b: f64) -> Result<GossipMatrix> {
    let max = max_b(g)?;
    if !(b > 0.0 && b <= max * (1.0 + B_TOL)) {
        return Err(Error::InvalidB { b, max });
    }
    Ok(build_gossip_unchecked(g.n(), round.edges(), b))
}

pub(crate) fn build_gossip_unchecked(n: usize, edges: &[(usize, usize)], b: f64) -> GossipMatrix {
    let mut w = DMatrix::identity(n, n);
    for &(u, v) in edges {
        w[(u, v)] = b;
        w[(v, u)] = b;
        w[(u, u)] -= b;
        w[(v, v)] -= b;
    }
    GossipMatrix { w }
}

/// `rho^2` for uniform `p`, edge survival `q` and `b = 1 / lambda1`.
pub fn rho_closed_form(g: &Graph, p: f64, q: f64) -> Result<f64> {
    let s = g.spectrum()?;
    Ok(rho_sq_from_spectrum(s.lambda1, s.kappa, p, q))
}

pub fn rho_sq_from_spectrum(lambda1: f64, kappa: f64, p: f64, q: f64) -> f64 {
    let pq = p * q;
    let rho_sq = 1.0 - 2.0 * p * p * q / kappa * (1.0 - (1.0 - pq) / lambda1 - pq / (2.0 * kappa));
    rho_sq.clamp(0.0, 1.0)
}

/// Exact `E[W^2]` for uniform `p`, edge survival `q` and step `b`:
/// `I - 2 b p^2 q L + b^2 (p^3 q^2 (L^2 - 2L) + 2 p^2 q L)`.
pub fn expected_w_squared(g: &Graph, p: f64, q: f64, b: f64) -> DMatrix<f64> {
    let n = g.n();
    let lap = g.laplacian();
    let lap_sq = &lap * &lap;
    let p2q = p * p * q;
    let p3q2 = p2q * p * q;
    DMatrix::identity(n, n) - &lap * (2.0 * b * p2q)
        + (&lap_sq - &lap * 2.0) * (b * b * p3q2)
        + &lap * (2.0 * b * b * p2q)
}

/// `1 - b pmin^2 fiedler`; equals `1 - pmin^2 / kappa` when `b = 1 / lambda1`.
pub fn rho_upper_bound(g: &Graph, pmin: f64, b: f64) -> Result<f64> {
    let max = max_b(g)?;
    if !(b > 0.0 && b <= max * (1.0 + B_TOL)) {
        return Err(Error::InvalidB { b, max });
    }
    let fiedler = g.spectrum()?.fiedler;
    Ok((1.0 - b * pmin * pmin * fiedler).clamp(0.0, 1.0))
}

/// Second largest eigenvalue of a symmetric matrix.
pub fn second_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    symmetric_eigenvalues(sym)[1]
}

/// Sum of `W^2` over `draws` sampled rounds, drawn from one stream.
fn sum_w_squared<R: Rng>(
    g: &Graph,
    model: &ActivationModel,
    b: f64,
    draws: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let n = g.n();
    let mut acc = DMatrix::zeros(n, n);
    for i in 0..draws {
        let round = model.sample_round(g, i, rng)?;
        let w = build_gossip(g, &round, b)?;
        acc += w.matrix() * w.matrix();
    }
    Ok(acc)
}

/// Monte-Carlo `rho^2`: `lambda_2` of the average of `draws` sampled `W^2`.
///
/// Draws are split into fixed chunks, each with its own derived stream, so
/// the result does not depend on the number of worker threads.
pub fn rho_empirical(
    g: &Graph,
    model: &ActivationModel,
    b: f64,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    Ok(second_eigenvalue(&mean_w_squared(g, model, b, draws, seed)?).clamp(0.0, 1.0))
}

const DRAW_CHUNK: usize = 128;

pub fn mean_w_squared(
    g: &Graph,
    model: &ActivationModel,
    b: f64,
    draws: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if draws == 0 {
        return Err(Error::InvalidParameter("draws must be >= 1".into()));
    }
    g.spectrum()?;
    let chunks: Vec<(usize, usize)> = (0..draws)
        .step_by(DRAW_CHUNK)
        .map(|start| (start, DRAW_CHUNK.min(draws - start)))
        .collect();
    let partial: Vec<DMatrix<f64>> = chunks
        .par_iter()
        .map(|&(start, len)| {
            let mut rng = rng::stream(seed, start as u64, StreamTag::Gossip, 0);
            sum_w_squared(g, model, b, len, &mut rng)
        })
        .collect::<Result<_>>()?;
    let n = g.n();
    let total = partial.into_iter().fold(DMatrix::zeros(n, n), |acc, m| acc + m);
    Ok(total / draws as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoReport {
    pub rho_sq_exact: Option<f64>,
    pub rho_sq_upper: f64,
    pub rho_sq_empirical: f64,
    pub draws: usize,
    pub b: f64,
    /// `rho / (1 - rho)` from the exact value when known, the estimate otherwise.
    pub rho_over_gap: f64,
}

/// All three `rho^2` routes for one activation model.
pub fn rho_report(
    g: &Graph,
    model: &ActivationModel,
    b: f64,
    draws: usize,
    seed: u64,
) -> Result<RhoReport> {
    let stats = model.stats();
    let b_is_default = (b - max_b(g)?).abs() <= B_TOL * max_b(g)?;
    let rho_sq_exact = match model.uniform_p() {
        Some(p) if b_is_default => Some(rho_closed_form(g, p, model.q())?),
        _ => None,
    };
    let rho_sq_upper = rho_upper_bound(g, stats.pmin, b)?;
    let rho_sq_empirical = rho_empirical(g, model, b, draws, seed)?;
    let rho = rho_sq_exact.unwrap_or(rho_sq_empirical).sqrt();
    Ok(RhoReport {
        rho_sq_exact,
        rho_sq_upper,
        rho_sq_empirical,
        draws,
        b,
        rho_over_gap: rho / (1.0 - rho),
    })
}

/// Per-lag Monte-Carlo estimate of `E || W_l ... W_1 e_v - 1/N ||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionPoint {
    pub lag: usize,
    pub mean_sq_deviation: f64,
}

/// Each sample draws one chain of `horizon` independent gossip matrices and
/// records the deviation after every prefix, so every lag is averaged over
/// `samples` independent products.
pub fn contraction_check(
    g: &Graph,
    model: &ActivationModel,
    b: f64,
    v: usize,
    horizon: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<ContractionPoint>> {
    if horizon == 0 || samples == 0 {
        return Err(Error::InvalidParameter(
            "horizon and samples must be >= 1".into(),
        ));
    }
    let n = g.n();
    if v >= n {
        return Err(Error::InvalidParameter(format!("node {v} out of range")));
    }
    let max = max_b(g)?;
    if !(b > 0.0 && b <= max * (1.0 + B_TOL)) {
        return Err(Error::InvalidB { b, max });
    }
    let sums: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = rng::stream(seed, s as u64, StreamTag::Gossip, 1);
            let mut x = DVector::zeros(n);
            x[v] = 1.0;
            let mut out = Vec::with_capacity(horizon);
            for step in 0..horizon {
                let round = model.sample_round(g, step, &mut rng)?;
                let w = build_gossip_unchecked(n, round.edges(), b);
                x = w.matrix() * x;
                out.push(x.iter().map(|xi| (xi - 1.0 / n as f64).powi(2)).sum());
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok((0..horizon)
        .map(|l| ContractionPoint {
            lag: l + 1,
            mean_sq_deviation: sums.iter().map(|s| s[l]).sum::<f64>() / samples as f64,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_clique, build_cycle, build_grid2d, build_lattice};
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_node_average() {
        let g = build_clique(2).unwrap();
        let w = build_gossip(&g, &RoundActivation::full(&g), 0.5).unwrap();
        assert_eq!(w.matrix(), &DMatrix::from_element(2, 2, 0.5));
    }

    #[test]
    fn empty_round_is_identity() {
        let g = build_grid2d(3).unwrap();
        let r = RoundActivation::new(&g, vec![], vec![]).unwrap();
        let b = max_b(&g).unwrap();
        assert_eq!(build_gossip(&g, &r, b).unwrap(), GossipMatrix::identity(9));
    }

    #[test]
    fn b_out_of_range() {
        let g = build_clique(4).unwrap();
        let r = RoundActivation::full(&g);
        assert!(matches!(build_gossip(&g, &r, 0.0), Err(Error::InvalidB { .. })));
        assert!(matches!(build_gossip(&g, &r, 0.3), Err(Error::InvalidB { .. })));
        assert!(build_gossip(&g, &r, 0.25).is_ok());
    }

    #[test]
    fn closed_form_values() {
        for n in [2, 5, 36] {
            let g = build_clique(n).unwrap();
            assert_abs_diff_eq!(rho_closed_form(&g, 1.0, 1.0).unwrap(), 0.0, epsilon = 1e-12);
            for p in [0.1, 0.3, 0.7] {
                let expected = 1.0 - 2.0 * p * p + p * p * (2.0 * (1.0 - p) / n as f64 + p);
                assert_abs_diff_eq!(rho_closed_form(&g, p, 1.0).unwrap(), expected, epsilon = 1e-12);
            }
        }
        let g = build_grid2d(4).unwrap();
        assert!(rho_closed_form(&g, 1e-9, 1.0).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn closed_form_matches_exact_expectation() {
        for g in [build_grid2d(4).unwrap(), build_cycle(7).unwrap(), build_lattice(3).unwrap()] {
            let b = max_b(&g).unwrap();
            for (p, q) in [(0.3, 1.0), (0.8, 0.5), (1.0, 1.0)] {
                let ew2 = expected_w_squared(&g, p, q, b);
                assert_abs_diff_eq!(
                    second_eigenvalue(&ew2),
                    rho_closed_form(&g, p, q).unwrap(),
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn upper_bound_values() {
        let g = build_clique(36).unwrap();
        assert_abs_diff_eq!(rho_upper_bound(&g, 1.0, 1.0 / 36.0).unwrap(), 0.0, epsilon = 1e-12);
        let g = build_lattice(6).unwrap();
        let b = max_b(&g).unwrap();
        for p in [0.2, 0.9] {
            assert_abs_diff_eq!(
                rho_upper_bound(&g, p, b).unwrap(),
                1.0 - p * p / 2.0,
                epsilon = 1e-10
            );
        }
        assert!(rho_upper_bound(&g, 1e-9, b).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn clique_full_activation_has_zero_rho() {
        let g = build_clique(36).unwrap();
        let m = ActivationModel::uniform(36, 1.0, 1.0).unwrap();
        let r = rho_empirical(&g, &m, max_b(&g).unwrap(), 10, 1).unwrap();
        assert!(r <= 1e-10);
    }

    #[test]
    fn empirical_is_thread_count_independent() {
        let g = build_cycle(6).unwrap();
        let m = ActivationModel::uniform(6, 0.6, 0.8).unwrap();
        let b = max_b(&g).unwrap();
        let a = rho_empirical(&g, &m, b, 300, 5).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| rho_empirical(&g, &m, b, 300, 5).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn contraction_edge_cases() {
        let g = build_clique(5).unwrap();
        let m = ActivationModel::uniform(5, 1.0, 1.0).unwrap();
        let pts = contraction_check(&g, &m, 0.2, 0, 3, 4, 0).unwrap();
        for p in pts {
            assert!(p.mean_sq_deviation < 1e-20);
        }
        // with no activity nothing moves: deviation stays at 1 - 1/N
        let m = ActivationModel::uniform(5, 1e-300, 1.0).unwrap();
        let pts = contraction_check(&g, &m, 0.2, 2, 2, 3, 0).unwrap();
        assert_abs_diff_eq!(pts[1].mean_sq_deviation, 1.0 - 1.0 / 5.0, epsilon = 1e-12);
        assert!(contraction_check(&g, &m, 0.2, 0, 0, 3, 0).is_err());
    }
}
