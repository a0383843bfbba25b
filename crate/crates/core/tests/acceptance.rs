//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --release --test acceptance`. The process exits
//! non-zero on any FAIL only when `NETREGRET_STRICT_ACCEPTANCE=1`.

use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use netregret::activation::ActivationModel;
use netregret::environment::QuadraticForm;
use netregret::gossip::{self, build_gossip, max_b};
use netregret::graph::{
    build_clique, build_cycle, build_grid2d, build_lattice, build_two_cliques, Graph,
};
use netregret::harness::{
    mean_sem, run_experiment, run_lowerbound, ExperimentConfig, ExperimentOutput, LowerBoundConfig,
};
use netregret::learners::{ftrl_predict, project_ball, Algorithm, RegularizerSpec};
use netregret::regret::solve_ball_quadratic;
use netregret::rng;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, passed: bool, what: &str, detail: String, started: Instant) {
        if !passed {
            self.failures += 1;
        }
        println!(
            "criterion {id:>2} [{}] {what}: {detail} ({:.1}s)",
            if passed { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
    }
}

fn config(graph: &str, p: f64, horizon: usize, learners: &[(&str, &str)]) -> ExperimentConfig {
    let mut text = format!(
        "graph = \"{graph}\"\np_uniform = {p}\nq = 1.0\nT = {horizon}\nreps = 20\nmaster_seed = 1\n"
    );
    for (algo, rule) in learners {
        text.push_str(&format!("[[learner]]\nalgorithm = \"{algo}\"\neta_rule = \"{rule}\"\n"));
    }
    ExperimentConfig::from_toml_str(&text).expect("valid config")
}

fn p_grid(lo: usize, hi: usize) -> Vec<f64> {
    (lo..=hi).map(|i| i as f64 / 10.0).collect()
}

/// Checks `values` is non-increasing, allowing at most one inversion no larger
/// than the summed sems of the two points. Returns (ok, inversion count, worst excess).
fn non_increasing(points: &[(f64, f64)]) -> (bool, usize, f64) {
    let mut inversions = 0;
    let mut within_sem = true;
    let mut worst = 0.0_f64;
    for pair in points.windows(2) {
        let ((m0, s0), (m1, s1)) = (pair[0], pair[1]);
        if m1 > m0 {
            inversions += 1;
            let excess = (m1 - m0) / (s0 + s1);
            worst = worst.max(excess);
            within_sem &= m1 - m0 <= s0 + s1;
        }
    }
    (inversions <= 1 && within_sem, inversions, worst)
}

fn fig1_graphs() -> Vec<(&'static str, Graph)> {
    vec![
        ("clique(36)", build_clique(36).unwrap()),
        ("lattice(6)", build_lattice(6).unwrap()),
        ("grid2d(6)", build_grid2d(6).unwrap()),
    ]
}

fn criterion_1(r: &mut Report) {
    let t0 = Instant::now();
    let mut worst_exact = 0.0_f64;
    let mut worst_upper = f64::NEG_INFINITY;
    let mut per_graph = Vec::new();
    for (gi, (name, g)) in fig1_graphs().into_iter().enumerate() {
        let b = max_b(&g).unwrap();
        let mut graph_worst = (0.0_f64, 0.0);
        for (pi, p) in p_grid(1, 10).into_iter().enumerate() {
            let model = ActivationModel::uniform(g.n(), p, 1.0).unwrap();
            let rep = gossip::rho_report(&g, &model, b, 1000, (gi * 100 + pi) as u64).unwrap();
            let err = (rep.rho_sq_empirical - rep.rho_sq_exact.unwrap()).abs();
            if err > graph_worst.0 {
                graph_worst = (err, p);
            }
            worst_upper = worst_upper.max(rep.rho_sq_empirical - rep.rho_sq_upper);
        }
        worst_exact = worst_exact.max(graph_worst.0);
        per_graph.push(format!("{name} {:.4} at p={}", graph_worst.0, graph_worst.1));
    }
    r.line(
        1,
        worst_exact <= 0.02 && worst_upper <= 0.01 && t0.elapsed().as_secs() < 120,
        "rho^2 Monte-Carlo vs closed form and upper bound",
        format!(
            "max |emp-exact| per graph: {} (<= 0.02); max emp-upper {worst_upper:.4} (<= 0.01)",
            per_graph.join(", ")
        ),
        t0,
    );
}

fn criterion_2(r: &mut Report) {
    let t0 = Instant::now();
    let g = build_clique(36).unwrap();
    let model = ActivationModel::uniform(36, 1.0, 1.0).unwrap();
    let rho = gossip::rho_empirical(&g, &model, max_b(&g).unwrap(), 1000, 3).unwrap();
    r.line(2, rho <= 1e-8, "clique all-active rho^2", format!("{rho:.3e} (<= 1e-8)"), t0);
}

fn criterion_3(r: &mut Report) {
    let t0 = Instant::now();
    let g = build_cycle(8).unwrap();
    let model = ActivationModel::uniform(8, 0.7, 1.0).unwrap();
    let b = max_b(&g).unwrap();
    let samples = 10_000;
    let rho_sq = gossip::rho_empirical(&g, &model, b, samples, 17).unwrap();
    let points = gossip::contraction_check(&g, &model, b, 0, 10, samples, 18).unwrap();
    let slack = 1.0 + 3.0 / (samples as f64).sqrt();
    let worst = points
        .iter()
        .map(|c| c.mean_sq_deviation / (rho_sq.powi(c.lag as i32) * slack))
        .fold(0.0_f64, f64::max);
    r.line(
        3,
        worst <= 1.0 && t0.elapsed().as_secs() < 60,
        "contraction of gossip products",
        format!("rho^2 {rho_sq:.4}, max deviation / bound over lags 1..10 = {worst:.4} (<= 1)"),
        t0,
    );
}

fn criterion_5(r: &mut Report, runs: &mut Vec<ExperimentOutput>) {
    let t0 = Instant::now();
    let out = run_experiment(&config(
        "grid:6",
        0.5,
        1000,
        &[("dftrl", "experiment_dftrl"), ("dogd", "experiment_dogd")],
    ))
    .unwrap();
    let (a, sa) = mean_sem(&out.regrets(Algorithm::Dftrl));
    let (b, sb) = mean_sem(&out.regrets(Algorithm::Dogd));
    r.line(
        5,
        a < b && t0.elapsed().as_secs() < 300,
        "DFTRL beats DOGD on grid2d(6)",
        format!("DFTRL {a:.2} +- {sa:.2}, DOGD {b:.2} +- {sb:.2}"),
        t0,
    );
    runs.push(out);
}

fn criteria_6_7(r: &mut Report, runs: &mut Vec<ExperimentOutput>) {
    let t0 = Instant::now();
    let learners = [("dftrl", "theory_third_bound")];
    let short = run_experiment(&config("clique:36", 0.5, 250, &learners)).unwrap();
    let long = run_experiment(&config("clique:36", 0.5, 1000, &learners)).unwrap();
    let (ms, _) = mean_sem(&short.regrets(Algorithm::Dftrl));
    let (ml, _) = mean_sem(&long.regrets(Algorithm::Dftrl));
    r.line(
        6,
        ml / 1000.0 < ms / 250.0,
        "regret per round shrinks with T on clique(36)",
        format!("R/T at T=250: {:.5}, at T=1000: {:.5}", ms / 250.0, ml / 1000.0),
        t0,
    );
    let t1 = Instant::now();
    let mut worst = f64::NEG_INFINITY;
    let mut detail = String::new();
    for out in [&short, &long] {
        let (m, s) = mean_sem(&out.regrets(Algorithm::Dftrl));
        let bound = out.rows[0].second_bound;
        let gap = m + 2.0 * s - bound;
        if gap > worst {
            worst = gap;
            detail = format!(
                "T={}: mean + 2 sem = {:.2}, second bound = {bound:.2}",
                out.rows[0].horizon,
                m + 2.0 * s
            );
        }
    }
    r.line(7, worst <= 0.0, "mean regret within the second bound", detail, t1);
    runs.push(short);
    runs.push(long);
}

fn criterion_8(r: &mut Report, runs: &mut Vec<ExperimentOutput>) {
    let t0 = Instant::now();
    let sweep = |rule: &str, runs: &mut Vec<ExperimentOutput>| -> Vec<(f64, f64)> {
        p_grid(1, 9)
            .into_iter()
            .map(|p| {
                let out = run_experiment(&config("clique:36", p, 1000, &[("dftrl", rule)])).unwrap();
                let ms = mean_sem(&out.regrets(Algorithm::Dftrl));
                runs.push(out);
                ms
            })
            .collect()
    };
    let fmt = |pts: &[(f64, f64)]| {
        pts.iter()
            .map(|(m, _)| format!("{:.4}", m.powf(-0.5)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let experiment = sweep("experiment_dftrl", runs);
    let (ok, inv, worst) = non_increasing(&experiment);
    r.line(
        8,
        ok,
        "(mean regret)^-1/2 non-decreasing in p on clique(36)",
        format!(
            "experiment eta; values {}; {inv} inversion(s), worst rise {worst:.2} x summed sem",
            fmt(&experiment)
        ),
        t0,
    );
    let t1 = Instant::now();
    let theory = sweep("theory_third_bound", runs);
    let (ok_t, inv_t, worst_t) = non_increasing(&theory);
    println!(
        "criterion  8 [info] same sweep with third-bound eta: {} ; values {}; {inv_t} inversion(s), worst rise {worst_t:.2} x summed sem ({:.1}s)",
        if ok_t { "monotone within tolerance" } else { "not monotone" },
        fmt(&theory),
        t1.elapsed().as_secs_f64()
    );
}

fn criterion_9(r: &mut Report, runs: &mut Vec<ExperimentOutput>) {
    let t0 = Instant::now();
    let points: Vec<(f64, f64)> = [1, 2, 4, 8, 16]
        .iter()
        .map(|bridges| {
            let out = run_experiment(&config(
                &format!("two_cliques:18:{bridges}"),
                0.5,
                1000,
                &[("dftrl", "experiment_dftrl")],
            ))
            .unwrap();
            let ms = mean_sem(&out.regrets(Algorithm::Dftrl));
            runs.push(out);
            ms
        })
        .collect();
    let inversions = points.windows(2).filter(|w| w[1].0 > w[0].0).count();
    r.line(
        9,
        inversions <= 1,
        "regret non-increasing in bridge count",
        format!(
            "means {} ; {inversions} inversion(s)",
            points.iter().map(|(m, _)| format!("{m:.2}")).collect::<Vec<_>>().join(" ")
        ),
        t0,
    );
}

fn criterion_4(r: &mut Report, runs: &[ExperimentOutput]) {
    let t0 = Instant::now();
    let rows: Vec<_> = runs.iter().flat_map(|o| o.rows.iter()).collect();
    let worst = rows
        .iter()
        .map(|row| row.regret - (row.term_a + row.term_b))
        .fold(f64::NEG_INFINITY, f64::max);
    r.line(
        4,
        rows.len() >= 40 && worst <= 1e-8,
        "termA + termB dominates realized regret",
        format!("{} runs, max regret - (termA + termB) = {worst:.3e}", rows.len()),
        t0,
    );
}

fn criterion_10(r: &mut Report) {
    let t0 = Instant::now();
    let rows = run_lowerbound(&LowerBoundConfig::new(2, 400, 50, 1)).unwrap();
    let regrets: Vec<f64> = rows.iter().map(|x| x.regret).collect();
    let (m, s) = mean_sem(&regrets);
    let floor = rows[0].floor;
    r.line(
        10,
        m >= 0.9 * floor,
        "cycle adversary regret vs floor",
        format!("mean {m:.3} +- {s:.3}, 0.9 x floor = {:.3}", 0.9 * floor),
        t0,
    );
}

fn sparsity_ok(g: &Graph, w: &gossip::GossipMatrix, edges: &[(usize, usize)]) -> bool {
    let n = g.n();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let on = edges.contains(&(i.min(j), i.max(j)));
            if on != (w.get(i, j) != 0.0) {
                return false;
            }
        }
    }
    true
}

fn criterion_11(r: &mut Report) {
    let t0 = Instant::now();
    let mut rng = rng::from_seed(2024);
    let graphs: Vec<Graph> = vec![
        build_clique(6).unwrap(),
        build_cycle(9).unwrap(),
        build_grid2d(4).unwrap(),
        build_lattice(3).unwrap(),
        build_two_cliques(5, 3, &mut rng).unwrap(),
    ];
    let models = [(0.2, 1.0), (0.5, 0.5), (0.9, 0.8), (1.0, 1.0)];
    let (mut count, mut worst, mut bad) = (0usize, 0.0_f64, 0usize);
    for k in 0..10_000 {
        let g = &graphs[k % graphs.len()];
        let (p, q) = models[(k / graphs.len()) % models.len()];
        let model = ActivationModel::uniform(g.n(), p, q).unwrap();
        let b = max_b(g).unwrap() * if k % 3 == 0 { 0.5 } else { 1.0 };
        let round = model.sample_round(g, k, &mut rng).unwrap();
        let w = build_gossip(g, &round, b).unwrap();
        worst = worst.max(w.stochasticity_error()).max(w.asymmetry());
        if w.min_entry() < 0.0 || !sparsity_ok(g, &w, round.edges()) {
            bad += 1;
        }
        count += 1;
    }
    let gossip_ok = worst <= 1e-12 && bad == 0;

    let reg = RegularizerSpec { radius: 1.3, mu: 1.0 };
    let mut ftrl_err = 0.0_f64;
    for _ in 0..100 {
        let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-20.0..20.0)).collect();
        let eta = rng.gen_range(0.01..0.5);
        let fast = ftrl_predict(&z, eta, &reg);
        let mut x = vec![0.0; 3];
        let step = 0.5 * eta;
        for _ in 0..2000 {
            for i in 0..3 {
                x[i] -= step * (z[i] + x[i] / eta);
            }
            project_ball(&mut x, reg.radius);
        }
        let err = fast.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ftrl_err = ftrl_err.max(err);
    }

    let mut comp_err = 0.0_f64;
    for _ in 0..20 {
        let m = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let a = m.transpose() * &m + DMatrix::identity(2, 2) * rng.gen_range(-0.3..0.3);
        let b = DVector::from_fn(2, |_, _| rng.gen_range(-4.0..4.0));
        let form = QuadraticForm { a, b, c: 0.0 };
        let radius = 1.0;
        let exact = form.eval(&solve_ball_quadratic(&form, radius));
        // polar grid with step 1e-3 in radius and angle, so the boundary is sampled exactly
        let mut best = f64::INFINITY;
        let (r_steps, a_steps) = (1000, (std::f64::consts::TAU / 1e-3).ceil() as usize);
        for i in 0..=r_steps {
            let rr = radius * i as f64 / r_steps as f64;
            for j in 0..a_steps {
                let th = std::f64::consts::TAU * j as f64 / a_steps as f64;
                best = best.min(form.eval(&[rr * th.cos(), rr * th.sin()]));
            }
        }
        comp_err = comp_err.max((exact - best).abs());
    }
    r.line(
        11,
        gossip_ok && ftrl_err <= 1e-6 && comp_err <= 1e-4,
        "structural invariants",
        format!(
            "{count} gossip matrices (max err {worst:.1e}, {bad} bad), FTRL max err {ftrl_err:.1e}, comparator max err {comp_err:.1e}"
        ),
        t0,
    );
}

fn criterion_12(r: &mut Report) {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg_path,
        "graph = \"grid:4\"\np_uniform = 0.6\nq = 0.7\nT = 200\nreps = 4\nmaster_seed = 5\nseries = true\n\
         [[learner]]\nalgorithm = \"dftrl\"\neta_rule = \"experiment_dftrl\"\n\
         [[learner]]\nalgorithm = \"dogd\"\neta_rule = \"experiment_dogd\"\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_netregret"))
            .arg("run")
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        outputs.push((
            std::fs::read(out.join("regret.csv")).unwrap(),
            std::fs::read(out.join("series.csv")).unwrap(),
        ));
    }
    r.line(
        12,
        outputs[0] == outputs[1],
        "repeated runs give byte-identical CSVs",
        format!("regret.csv {} bytes, series.csv {} bytes", outputs[0].0.len(), outputs[0].1.len()),
        t0,
    );
}

fn main() -> ExitCode {
    let mut r = Report { failures: 0 };
    let mut runs = Vec::new();
    criterion_1(&mut r);
    criterion_2(&mut r);
    criterion_3(&mut r);
    criterion_5(&mut r, &mut runs);
    criteria_6_7(&mut r, &mut runs);
    criterion_8(&mut r, &mut runs);
    criterion_9(&mut r, &mut runs);
    criterion_4(&mut r, &runs);
    criterion_10(&mut r);
    criterion_11(&mut r);
    criterion_12(&mut r);
    println!("acceptance: {} of 12 criteria failed", r.failures);
    let strict = std::env::var("NETREGRET_STRICT_ACCEPTANCE").is_ok_and(|v| v == "1");
    if strict && r.failures > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
