//! Seeded experiment runs, parameter sweeps and static plots built on the
//! group-testing and optimization phases.

mod config;
mod plot;
mod runner;
mod svg;
mod sweep;

pub use config::{BenchmarkConfig, Method, RunConfig, SweepAxis, SweepConfig, OUTPUT_ROOT_ENV};
pub use plot::{plot, PlotKind, PLOTS_DIR};
pub use runner::{
    exit_code, run_experiment, run_seed, seed_dir_name, write_marginals, write_tests, write_trace,
    ExperimentReport, SeedOutcome, SeedSummary, MARGINALS_FILE, NOISE_MODEL_FILE, SUMMARY_FILE,
    TESTS_FILE, TRACE_FILE, TRACE_HEADER,
};
pub use svg::{Band, Chart, Series};
pub use sweep::{
    aggregate, classification_curve, iterations_to_full, median_iterations, run_sweep,
    value_dir_name, write_sweep, Aggregate, SweepPoint, SweepReport, ACTIVE_ABOVE, INACTIVE_BELOW,
    SWEEP_FILE, SWEEP_HEADER, SWEEP_SUMMARY_FILE, SWEEP_SUMMARY_HEADER,
};
