//! Fast internal consistency checks run by `netregret selftest`.

use nalgebra::DMatrix;

use crate::activation::ActivationModel;
use crate::environment::QuadraticForm;
use crate::error::Result;
use crate::gossip::{self, build_gossip, max_b};
use crate::graph::{build_clique, build_cycle, build_grid2d, build_lattice, Graph};
use crate::harness::config::ExperimentConfig;
use crate::harness::experiment::run_experiment;
use crate::learners::{norm, project_ball};
use crate::regret::solve_ball_quadratic;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn graphs() -> Result<Vec<(&'static str, Graph)>> {
    Ok(vec![
        ("clique:6", build_clique(6)?),
        ("cycle:8", build_cycle(8)?),
        ("grid:3", build_grid2d(3)?),
        ("lattice:3", build_lattice(3)?),
    ])
}

fn closed_form_matches_matrix() -> Result<Check> {
    let mut worst = 0.0_f64;
    for (_, g) in graphs()? {
        let b = max_b(&g)?;
        for &(p, q) in &[(0.3, 1.0), (0.6, 0.5), (1.0, 0.8)] {
            let exact = gossip::second_eigenvalue(&gossip::expected_w_squared(&g, p, q, b));
            let closed = gossip::rho_closed_form(&g, p, q)?;
            worst = worst.max((exact - closed).abs());
        }
    }
    Ok(check(
        "rho closed form equals lambda_2(E[W^2])",
        worst < 1e-9,
        format!("max abs diff {worst:.2e}"),
    ))
}

fn gossip_doubly_stochastic() -> Result<Check> {
    let mut worst = 0.0_f64;
    let mut min_entry = f64::INFINITY;
    let mut rng = rng::from_seed(11);
    for (_, g) in graphs()? {
        let model = ActivationModel::uniform(g.n(), 0.5, 0.6)?;
        let b = max_b(&g)?;
        for t in 0..50 {
            let round = model.sample_round(&g, t, &mut rng)?;
            let w = build_gossip(&g, &round, b)?;
            worst = worst.max(w.stochasticity_error()).max(w.asymmetry());
            min_entry = min_entry.min(w.min_entry());
        }
    }
    Ok(check(
        "sampled W symmetric, doubly stochastic, nonnegative",
        worst < 1e-12 && min_entry >= -1e-12,
        format!("max row/col/sym error {worst:.2e}, min entry {min_entry:.2e}"),
    ))
}

fn empirical_rho_close() -> Result<Check> {
    let g = build_grid2d(3)?;
    let model = ActivationModel::uniform(9, 0.5, 0.8)?;
    let b = max_b(&g)?;
    let exact = gossip::rho_closed_form(&g, 0.5, 0.8)?;
    let est = gossip::rho_empirical(&g, &model, b, 4000, 5)?;
    Ok(check(
        "empirical rho^2 near closed form",
        (est - exact).abs() < 0.02,
        format!("exact {exact:.4}, empirical {est:.4}"),
    ))
}

fn comparator_vs_projected_gradient() -> Result<Check> {
    let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, -0.2, 0.0, -0.2, 0.5]);
    let form = QuadraticForm {
        a,
        b: nalgebra::DVector::from_column_slice(&[4.0, -3.0, 1.0]),
        c: 0.0,
    };
    let radius = 1.5;
    let exact = solve_ball_quadratic(&form, radius);
    let mut x = vec![0.0; 3];
    for _ in 0..20_000 {
        let g = form.gradient(&x);
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= 0.2 * gi;
        }
        project_ball(&mut x, radius);
    }
    let gap = form.eval(&exact) - form.eval(&x);
    Ok(check(
        "comparator not beaten by projected gradient",
        gap <= 1e-9 && norm(&exact) <= radius + 1e-9,
        format!("objective gap {gap:.2e}"),
    ))
}

fn experiment_replays() -> Result<Check> {
    let cfg = ExperimentConfig::from_toml_str(
        r#"
graph = "grid:3"
p_uniform = 0.5
q = 0.8
T = 40
reps = 3
master_seed = 9
[[learner]]
algorithm = "dftrl"
eta_rule = "experiment_dftrl"
[[learner]]
algorithm = "dogd"
eta_rule = "experiment_dogd"
"#,
    )?;
    let a = run_experiment(&cfg)?;
    let b = run_experiment(&cfg)?;
    Ok(check(
        "experiments replay bit-for-bit",
        a == b,
        format!("{} rows", a.rows.len()),
    ))
}

pub fn run_selftest() -> Result<Vec<Check>> {
    Ok(vec![
        closed_form_matches_matrix()?,
        gossip_doubly_stochastic()?,
        empirical_rho_close()?,
        comparator_vs_projected_gradient()?,
        experiment_replays()?,
    ])
}
