use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use netregret::graph::GraphSpec;
use netregret::harness::{
    self, mean_sem, parse_grid, selftest, ExperimentConfig, LowerBoundConfig,
};
use netregret::learners::Algorithm;

#[derive(Parser)]
#[command(name = "netregret", version, about = "Distributed online learning with random agent availability")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Override the output directory from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat a config over a grid of uniform activation probabilities.
    Sweep {
        config: PathBuf,
        /// `start:stop:step` or a comma list.
        #[arg(long)]
        p_grid: String,
        #[arg(long, default_value = "1")]
        q_grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate rho^2 (closed form, upper bound, Monte-Carlo) over p.
    RhoScan {
        #[arg(long)]
        graph: String,
        #[arg(long)]
        p_grid: String,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        #[arg(long, default_value_t = 10_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// DFTRL against the cycle adversary, compared with the regret floor.
    Lowerbound {
        #[arg(long = "M")]
        block: usize,
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quick internal consistency checks.
    Selftest,
}

fn write_or_print<T: serde::Serialize>(rows: &[T], out: Option<&PathBuf>) -> netregret::Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| netregret::Error::Config(format!("{}: {e}", dir.display())))?;
            }
            harness::write_csv(path, rows)
        }
        None => {
            print!("{}", harness::to_csv_string(rows)?);
            Ok(())
        }
    }
}

fn run(cli: Cli) -> netregret::Result<bool> {
    match cli.command {
        Command::Run { config, out } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if out.is_some() {
                cfg.out = out;
            }
            let result = harness::run_experiment(&cfg)?;
            for l in &cfg.learners {
                let values = result.regrets(l.algorithm);
                let (m, s) = mean_sem(&values);
                println!("{:<16} reps={:<4} mean_regret={m:.6} sem={s:.6}", l.algorithm, values.len());
            }
            if let Some(dir) = &cfg.out {
                println!("wrote {}", dir.join("regret.csv").display());
            }
        }
        Command::Sweep { config, p_grid, q_grid, out } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if out.is_some() {
                cfg.out = out;
            }
            let rows = harness::run_sweep(&cfg, &parse_grid(&p_grid)?, &parse_grid(&q_grid)?)?;
            if cfg.out.is_none() {
                print!("{}", harness::to_csv_string(&rows)?);
            }
        }
        Command::RhoScan { graph, p_grid, q, draws, seed, out } => {
            let spec: GraphSpec = graph.parse()?;
            let rows = harness::rho_scan(&spec, &parse_grid(&p_grid)?, q, draws, seed)?;
            write_or_print(&rows, out.as_ref())?;
        }
        Command::Lowerbound { block, horizon, reps, seed, out } => {
            let rows = harness::run_lowerbound(&LowerBoundConfig::new(block, horizon, reps, seed))?;
            write_or_print(&rows, out.as_ref())?;
            let regrets: Vec<f64> = rows.iter().map(|r| r.regret).collect();
            let (m, s) = mean_sem(&regrets);
            if let Some(r) = rows.first() {
                eprintln!(
                    "{} mean_regret={m:.4} sem={s:.4} floor={:.4} ratio={:.3}",
                    Algorithm::Dftrl,
                    r.floor,
                    m / r.floor
                );
            }
        }
        Command::Selftest => {
            let checks = selftest::run_selftest()?;
            let mut ok = true;
            for c in &checks {
                println!("[{}] {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    harness::init_thread_pool();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
