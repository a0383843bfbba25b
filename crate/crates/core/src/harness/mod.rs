//! Experiment harness: configs, repetition runner, sweeps and CSV output.

pub mod config;
pub mod experiment;
pub mod output;
pub mod selftest;

pub use config::{parse_grid, ExperimentConfig};
pub use experiment::{
    mean_sem, rho_scan, run_experiment, run_lowerbound, run_sweep, ExperimentOutput,
    LowerBoundConfig, LowerBoundRow, RegretRow, RhoScanRow, SeriesRow, SweepRow,
};
pub use output::{to_csv_string, write_csv};

/// Installs the global rayon pool, sized by `NETREGRET_THREADS` when set.
/// Results never depend on the thread count; this only bounds CPU use.
pub fn init_thread_pool() {
    let threads = std::env::var("NETREGRET_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
}
