use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::config::{Method, RunConfig};
use crate::engine::{self, GtResult};
use crate::error::{config, GtboError, Result};
use crate::objective::{default_point, BenchmarkSpec, NoisyBenchmark};
use crate::optimizer::{self, BoTrace};

// Independent random streams per seed.
const STREAM_EMBEDDING: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_ALGORITHM: u64 = 3;

pub const MARGINALS_FILE: &str = "marginals.csv";
pub const TESTS_FILE: &str = "tests.jsonl";
pub const TRACE_FILE: &str = "trace.csv";
pub const NOISE_MODEL_FILE: &str = "noise_model.json";
pub const SUMMARY_FILE: &str = "summary.json";

pub const TRACE_HEADER: [&str; 7] = [
    "index",
    "phase",
    "y",
    "best_y",
    "true_value",
    "best_true",
    "regret",
];

pub fn seed_dir_name(seed: u64) -> String {
    format!("seed_{seed}")
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-seed record written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub method: String,
    pub status: String,
    pub error: Option<String>,
    pub function: String,
    pub ambient_dim: usize,
    pub noise_std: f64,
    pub eta: f64,
    pub true_active: Vec<usize>,
    pub active_set: Vec<usize>,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub converged: bool,
    pub convergence_iteration: Option<usize>,
    pub gt_tests: usize,
    pub gt_evaluations: usize,
    pub evaluations: usize,
    pub best_y: Option<f64>,
    pub best_true: Option<f64>,
    pub optimal_value: f64,
    pub final_regret: Option<f64>,
    /// Fitted lengthscales of the last surrogate, in unit-cube coordinates.
    pub lengthscales: Option<Vec<f64>>,
}

/// Outcome of one seed, in memory.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub dir: PathBuf,
    pub spec: BenchmarkSpec,
    pub gt: Option<GtResult>,
    pub trace: BoTrace,
    pub summary: Option<SeedSummary>,
    pub error: Option<String>,
}

/// Result of a whole experiment.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub output_dir: PathBuf,
    pub outcomes: Vec<SeedOutcome>,
}

impl ExperimentReport {
    pub fn failures(&self) -> impl Iterator<Item = &SeedOutcome> {
        self.outcomes.iter().filter(|o| o.error.is_some())
    }
}

/// Process exit status for an error: 2 for configuration and input
/// problems, 3 for failures while running.
pub fn exit_code(err: &GtboError) -> i32 {
    match err {
        GtboError::InvalidArgument(_)
        | GtboError::Config(_)
        | GtboError::Io { .. }
        | GtboError::Serialization(_) => 2,
        GtboError::Degenerate(_) | GtboError::Fit(_) | GtboError::Objective(_) => 3,
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GtboError + '_ {
    move |source| GtboError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| {
        config(format!(
            "output directory {} is not writable: {e}",
            path.display()
        ))
    })
}

/// Runs every seed and writes one directory per seed under `output_dir`.
///
/// Configuration problems are returned as errors before anything runs. Seeds
/// that fail while running still write their partial outputs; they are
/// reported through [`ExperimentReport::failures`].
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    create_dir(&cfg.output_dir)?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<SeedOutcome>>>> =
        Mutex::new((0..cfg.seeds.len()).map(|_| None).collect());
    let jobs = cfg.jobs.min(cfg.seeds.len());
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= cfg.seeds.len() {
            break;
        }
        let out = run_seed(cfg, cfg.seeds[i]);
        slots.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(out);
    };
    if jobs <= 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(work);
            }
        });
    }
    let mut outcomes = Vec::with_capacity(cfg.seeds.len());
    for slot in slots.into_inner().unwrap_or_else(|p| p.into_inner()) {
        outcomes.push(slot.expect("every seed ran")?);
    }
    Ok(ExperimentReport {
        output_dir: cfg.output_dir.clone(),
        outcomes,
    })
}

/// Runs a single seed and writes its directory.
pub fn run_seed(cfg: &RunConfig, seed: u64) -> Result<SeedOutcome> {
    let started = Instant::now();
    let b = &cfg.benchmark;
    let noise = b.noise_std();
    let spec = match &b.active_indices {
        Some(idx) => BenchmarkSpec::new(b.function, b.ambient_dim, idx.clone(), noise)?,
        None => BenchmarkSpec::sample(
            b.function,
            b.ambient_dim,
            noise,
            &mut rng_for(seed, STREAM_EMBEDDING),
        )?,
    };
    let mut f = NoisyBenchmark::new(spec.clone(), rng_for(seed, STREAM_NOISE));
    if let Some(n) = b.fail_after {
        f = f.fail_after(n);
    }
    let mut rng = rng_for(seed, STREAM_ALGORITHM);
    let dir = cfg.output_dir.join(seed_dir_name(seed));
    create_dir(&dir)?;

    let mut outcome = SeedOutcome {
        seed,
        dir: dir.clone(),
        spec: spec.clone(),
        gt: None,
        trace: BoTrace::default(),
        summary: None,
        error: None,
    };
    match cfg.method {
        Method::RandomSearch => {
            let budget = cfg.bo.total_budget;
            match optimizer::random_search(&mut f, budget, &mut rng) {
                Ok(t) => outcome.trace = t,
                Err(e) => {
                    outcome.trace = *e.partial;
                    outcome.error = Some(e.source.to_string());
                }
            }
            write_trace(&dir.join(TRACE_FILE), &outcome.trace)?;
        }
        Method::Gtbo => {
            let x_def = default_point(spec.ambient_dim, b.default_mode(), &mut rng);
            match engine::run(&mut f, &x_def, &cfg.gt, &mut rng) {
                Ok(gt) => {
                    let budget = cfg.bo.total_budget.saturating_sub(gt.evaluation_count());
                    match optimizer::run_bo(&mut f, &gt, budget, &cfg.bo, &mut rng) {
                        Ok(t) => outcome.trace = t,
                        Err(e) => {
                            outcome.trace = *e.partial;
                            outcome.error = Some(e.source.to_string());
                        }
                    }
                    outcome.gt = Some(gt);
                }
                Err(e) => {
                    outcome.error = Some(e.source.to_string());
                    if let Some(gt) = e.partial {
                        outcome.trace = BoTrace::from_initial(&f, &gt.evaluations());
                        outcome.gt = Some(*gt);
                    }
                }
            }
            write_gt_outputs(cfg, &mut outcome)?;
        }
    }
    match &outcome.error {
        None => log::info!(
            "seed {seed}: {} evaluations in {:.1}s",
            outcome.trace.len(),
            started.elapsed().as_secs_f64()
        ),
        Some(e) => log::error!("seed {seed} failed: {e}"),
    }
    Ok(outcome)
}

fn write_gt_outputs(cfg: &RunConfig, o: &mut SeedOutcome) -> Result<()> {
    if let Some(gt) = &o.gt {
        write_marginals(&o.dir.join(MARGINALS_FILE), &gt.marginal_trajectory)?;
        write_tests(&o.dir.join(TESTS_FILE), gt)?;
        write_json(&o.dir.join(NOISE_MODEL_FILE), &gt.noise_model)?;
    }
    write_trace(&o.dir.join(TRACE_FILE), &o.trace)?;
    let summary = summarize(cfg, o);
    write_json(&o.dir.join(SUMMARY_FILE), &summary)?;
    o.summary = Some(summary);
    Ok(())
}

fn summarize(cfg: &RunConfig, o: &SeedOutcome) -> SeedSummary {
    let truth = &o.spec.active_indices;
    let mut true_active = truth.clone();
    true_active.sort_unstable();
    let active_set =
        o.gt.as_ref()
            .map(|g| g.active_set.clone())
            .unwrap_or_default();
    let false_positives = active_set.iter().filter(|i| !truth.contains(i)).count();
    let false_negatives = truth.iter().filter(|i| !active_set.contains(i)).count();
    let last = o.trace.rows.last();
    SeedSummary {
        seed: o.seed,
        method: cfg.method.as_str().into(),
        status: if o.error.is_some() { "failed" } else { "ok" }.into(),
        error: o.error.clone(),
        function: o.spec.function.name(),
        ambient_dim: o.spec.ambient_dim,
        noise_std: o.spec.noise_std,
        eta: cfg.gt.eta,
        true_active,
        active_set,
        false_positives,
        false_negatives,
        converged: o.gt.as_ref().is_some_and(|g| g.converged),
        convergence_iteration: o.gt.as_ref().and_then(|g| g.convergence_iteration),
        gt_tests: o.gt.as_ref().map_or(0, |g| g.tests.len()),
        gt_evaluations: o.gt.as_ref().map_or(0, |g| g.evaluation_count()),
        evaluations: o.trace.len(),
        best_y: last.map(|r| r.best_y),
        best_true: last.and_then(|r| r.best_true),
        optimal_value: o.spec.optimal_value(),
        final_regret: last.and_then(|r| r.regret),
        lengthscales: o
            .trace
            .final_hyperparameters
            .as_ref()
            .map(|h| h.lengthscales.clone()),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> GtboError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => GtboError::Io {
            path: path.display().to_string(),
            source,
        },
        other => GtboError::Serialization(format!("{}: {other:?}", path.display())),
    }
}

/// Header `iteration,x0,...,x{D-1}`; row `t` holds the marginals after `t` tests.
pub fn write_marginals(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let dim = rows.first().map_or(0, Vec::len);
    let mut w = csv_writer(path)?;
    let header: Vec<String> = std::iter::once("iteration".to_string())
        .chain((0..dim).map(|i| format!("x{i}")))
        .collect();
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (t, row) in rows.iter().enumerate() {
        let rec: Vec<String> = std::iter::once(t.to_string())
            .chain(row.iter().map(f64::to_string))
            .collect();
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// Header as in [`TRACE_HEADER`]; `index` is 1-based.
pub fn write_trace(path: &Path, trace: &BoTrace) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(TRACE_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for (i, r) in trace.rows.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            r.phase.as_str().to_string(),
            r.y.to_string(),
            r.best_y.to_string(),
            fmt_opt(r.true_value),
            fmt_opt(r.best_true),
            fmt_opt(r.regret),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TestLine<'a> {
    Probe {
        #[serde(flatten)]
        probe: &'a crate::variance::Probe,
    },
    Test {
        #[serde(flatten)]
        test: &'a engine::TestRecord,
    },
}

/// One JSON object per line: variance-estimation probes first
/// (`"kind": "probe"`), then group tests (`"kind": "test"`).
pub fn write_tests(path: &Path, gt: &GtResult) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    let lines = gt
        .probes
        .iter()
        .map(|probe| TestLine::Probe { probe })
        .chain(gt.tests.iter().map(|test| TestLine::Test { test }));
    for line in lines {
        let s =
            serde_json::to_string(&line).map_err(|e| GtboError::Serialization(e.to_string()))?;
        writeln!(out, "{s}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| GtboError::Serialization(e.to_string()))?;
    s.push('\n');
    fs::write(path, s).map_err(io_err(path))
}
