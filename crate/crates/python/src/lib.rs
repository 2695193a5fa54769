//! Python bindings for the group-testing Bayesian optimization crate.
//!
//! Heavy calls (group testing, GP fits, whole experiments) release the GIL.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use gtbo::engine::{self, GtConfig, GtResult};
use gtbo::experiment::{self as exp, PlotKind};
use gtbo::information::{self, CommonSamples, MiEvaluator};
use gtbo::objective::{default_point, evaluate_true, DefaultMode, NoisyBenchmark};
use gtbo::surrogate::{GpConfig, GpModel, GpPriors};
use gtbo::{BaseFunction, BenchmarkSpec, Group, GtboError, Objective, Point};

fn to_py(e: GtboError) -> PyErr {
    match e {
        GtboError::InvalidArgument(_) | GtboError::Config(_) => {
            PyValueError::new_err(e.to_string())
        }
        GtboError::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Same stream layout as the experiment runner: 1 embedding, 2 noise,
/// 3 algorithm.
fn stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut r = rng(seed);
    r.set_stream(stream);
    r
}

fn point(x: Vec<f64>) -> PyResult<Point> {
    Point::new(x).map_err(to_py)
}

/// An embedded benchmark with its own noise stream.
#[pyclass(name = "Benchmark")]
struct PyBenchmark {
    inner: NoisyBenchmark<ChaCha20Rng>,
}

#[pymethods]
impl PyBenchmark {
    /// `function` is one of "branin2", "levy<N>", "hartmann6", "griewank8".
    /// Active indices are drawn from `seed` unless given. `noise_std`
    /// defaults to the function's standard noise level.
    #[new]
    #[pyo3(signature = (function, ambient_dim, noise_std=None, active_indices=None, seed=0))]
    fn new(
        function: &str,
        ambient_dim: usize,
        noise_std: Option<f64>,
        active_indices: Option<Vec<usize>>,
        seed: u64,
    ) -> PyResult<Self> {
        let function: BaseFunction = function.parse().map_err(to_py)?;
        let noise = noise_std.unwrap_or_else(|| function.default_noise_std());
        let spec = match active_indices {
            Some(idx) => BenchmarkSpec::new(function, ambient_dim, idx, noise),
            None => BenchmarkSpec::sample(function, ambient_dim, noise, &mut stream(seed, 1)),
        }
        .map_err(to_py)?;
        Ok(Self {
            inner: NoisyBenchmark::new(spec, stream(seed, 2)),
        })
    }

    #[getter]
    fn function(&self) -> String {
        self.inner.spec().function.name()
    }

    #[getter]
    fn ambient_dim(&self) -> usize {
        self.inner.spec().ambient_dim
    }

    #[getter]
    fn active_indices(&self) -> Vec<usize> {
        self.inner.spec().active_indices.clone()
    }

    #[getter]
    fn noise_std(&self) -> f64 {
        self.inner.spec().noise_std
    }

    #[getter]
    fn optimal_value(&self) -> f64 {
        self.inner.spec().optimal_value()
    }

    #[getter]
    fn evaluations(&self) -> usize {
        self.inner.evaluations()
    }

    /// Noisy observation at a point of the unit cube.
    fn __call__(&mut self, x: Vec<f64>) -> PyResult<f64> {
        let p = point(x)?;
        self.inner.evaluate(&p).map_err(|e| to_py(e.into()))
    }

    fn evaluate_true(&self, x: Vec<f64>) -> PyResult<f64> {
        evaluate_true(self.inner.spec(), &x).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let s = self.inner.spec();
        format!(
            "Benchmark({}, ambient_dim={}, active={:?}, noise_std={})",
            s.function, s.ambient_dim, s.active_indices, s.noise_std
        )
    }
}

/// Variances of the observed difference from the default value.
#[pyclass(name = "NoiseModel", from_py_object)]
#[derive(Clone)]
struct PyNoiseModel {
    inner: gtbo::NoiseModel,
}

#[pymethods]
impl PyNoiseModel {
    #[new]
    #[pyo3(signature = (f_def_hat, sigma_n_sq, sigma_sq, floor=1e-12))]
    fn new(f_def_hat: f64, sigma_n_sq: f64, sigma_sq: f64, floor: f64) -> PyResult<Self> {
        let inner = gtbo::NoiseModel::new(f_def_hat, sigma_n_sq, sigma_sq, floor).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn f_def_hat(&self) -> f64 {
        self.inner.f_def_hat
    }

    #[getter]
    fn sigma_n_sq(&self) -> f64 {
        self.inner.sigma_n_sq
    }

    #[getter]
    fn sigma_sq(&self) -> f64 {
        self.inner.sigma_sq
    }

    fn log_lik_inactive(&self, z: f64) -> f64 {
        self.inner.log_lik_inactive(z)
    }

    fn log_lik_active(&self, z: f64) -> f64 {
        self.inner.log_lik_active(z)
    }

    fn __repr__(&self) -> String {
        format!(
            "NoiseModel(f_def_hat={}, sigma_n_sq={}, sigma_sq={})",
            self.inner.f_def_hat, self.inner.sigma_n_sq, self.inner.sigma_sq
        )
    }
}

/// Weighted particle approximation of the posterior over activity states.
#[pyclass(name = "ParticleSet")]
struct PyParticleSet {
    inner: gtbo::ParticleSet,
    rng: ChaCha20Rng,
}

#[pymethods]
impl PyParticleSet {
    #[new]
    #[pyo3(signature = (count, prior_q, seed=0))]
    fn new(count: usize, prior_q: Vec<f64>, seed: u64) -> PyResult<Self> {
        let mut rng = rng(seed);
        let inner = gtbo::ParticleSet::init(count, prior_q, &mut rng).map_err(to_py)?;
        Ok(Self { inner, rng })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Conditions on the outcome `z` of testing `group`; returns whether a
    /// resample-move step ran.
    fn update(&mut self, group: Vec<usize>, z: f64, noise_model: &PyNoiseModel) -> PyResult<bool> {
        let g = self.group(group)?;
        self.inner
            .update(&g, z, &noise_model.inner, &mut self.rng)
            .map_err(to_py)
    }

    fn marginals(&self) -> Vec<f64> {
        self.inner.marginals()
    }

    fn ess(&self) -> f64 {
        self.inner.ess()
    }

    fn group_active_probability(&self, group: Vec<usize>) -> PyResult<f64> {
        Ok(self.inner.group_active_probability(&self.group(group)?))
    }
}

impl PyParticleSet {
    fn group(&self, indices: Vec<usize>) -> PyResult<Group> {
        let dim = self.inner.dim();
        if let Some(i) = indices.iter().find(|&&i| i >= dim) {
            return Err(PyValueError::new_err(format!(
                "index {i} outside dimension {dim}"
            )));
        }
        Ok(Group::from_indices(dim, indices))
    }
}

/// Mutual information between a group's activity and its test outcome,
/// estimated from `samples` Monte Carlo draws.
#[pyfunction]
#[pyo3(signature = (p_active, sigma_n_sq, sigma_sq, samples=10_000, seed=0))]
fn mutual_information(
    p_active: f64,
    sigma_n_sq: f64,
    sigma_sq: f64,
    samples: usize,
    seed: u64,
) -> PyResult<f64> {
    if !(0.0..=1.0).contains(&p_active)
        || !(sigma_n_sq > 0.0 && sigma_sq >= sigma_n_sq)
        || samples == 0
    {
        return Err(PyValueError::new_err(
            "need 0 <= p_active <= 1, 0 < sigma_n_sq <= sigma_sq and samples > 0",
        ));
    }
    let draws = CommonSamples::draw(samples, &mut rng(seed));
    Ok(MiEvaluator::new(&draws, sigma_n_sq, sigma_sq)
        .mutual_information(p_active)
        .value)
}

#[pyfunction]
fn gaussian_entropy(var: f64) -> f64 {
    information::gaussian_entropy(var)
}

#[pyfunction]
fn binary_entropy(p: f64) -> f64 {
    information::binary_entropy(p)
}

/// Outcome of the group-testing phase.
#[pyclass(name = "GroupTestingResult")]
struct PyGtResult {
    inner: GtResult,
}

#[pymethods]
impl PyGtResult {
    #[getter]
    fn marginals(&self) -> Vec<f64> {
        self.inner.final_marginals().to_vec()
    }

    #[getter]
    fn marginal_trajectory(&self) -> Vec<Vec<f64>> {
        self.inner.marginal_trajectory.clone()
    }

    #[getter]
    fn active_set(&self) -> Vec<usize> {
        self.inner.active_set.clone()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn convergence_iteration(&self) -> Option<usize> {
        self.inner.convergence_iteration
    }

    #[getter]
    fn tests(&self) -> usize {
        self.inner.tests.len()
    }

    #[getter]
    fn evaluations(&self) -> usize {
        self.inner.evaluation_count()
    }

    #[getter]
    fn noise_model(&self) -> PyNoiseModel {
        PyNoiseModel {
            inner: self.inner.noise_model.clone(),
        }
    }

    #[getter]
    fn default_point(&self) -> Vec<f64> {
        self.inner.x_def.clone().into_inner()
    }
}

/// Runs group testing on `benchmark`. `config` is a TOML table with the
/// fields of the `[gt]` block of a run configuration.
#[pyfunction]
#[pyo3(signature = (benchmark, config=None, seed=0))]
fn run_group_testing(
    py: Python<'_>,
    benchmark: &mut PyBenchmark,
    config: Option<&str>,
    seed: u64,
) -> PyResult<PyGtResult> {
    let cfg: GtConfig = match config {
        Some(text) => toml_table(text)?,
        None => GtConfig::default(),
    };
    let f = &mut benchmark.inner;
    let result = py.detach(|| {
        let mut rng = stream(seed, 3);
        let mode = DefaultMode::for_function(f.spec().function);
        let x_def = default_point(f.spec().ambient_dim, mode, &mut rng);
        engine::run(f, &x_def, &cfg, &mut rng)
    });
    result
        .map(|inner| PyGtResult { inner })
        .map_err(|e| to_py(e.source))
}

fn toml_table<T: serde::de::DeserializeOwned>(text: &str) -> PyResult<T> {
    toml::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Matérn-5/2 ARD Gaussian process with activity-dependent lengthscale priors.
#[pyclass(name = "GaussianProcess")]
struct PyGp {
    inner: GpModel,
}

#[pymethods]
impl PyGp {
    /// MAP fit on rows `x` with targets `y`. `active_mask[i]` selects the
    /// short-lengthscale prior for dimension `i`.
    #[staticmethod]
    #[pyo3(signature = (x, y, active_mask, seed=0))]
    fn fit(
        py: Python<'_>,
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        active_mask: Vec<bool>,
        seed: u64,
    ) -> PyResult<Self> {
        let inner = py
            .detach(|| {
                GpModel::fit(
                    &x,
                    &y,
                    &active_mask,
                    &GpPriors::default(),
                    &GpConfig::default(),
                    &mut rng(seed),
                )
            })
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Posterior mean and latent variance at `x`.
    fn predict(&self, x: Vec<f64>) -> PyResult<(f64, f64)> {
        if x.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!(
                "point has {} coordinates, model expects {}",
                x.len(),
                self.inner.dim()
            )));
        }
        let p = self.inner.predict(&x);
        Ok((p.mean, p.variance))
    }

    #[getter]
    fn lengthscales(&self) -> Vec<f64> {
        self.inner.hyperparameters().lengthscales.clone()
    }

    #[getter]
    fn signal_variance(&self) -> f64 {
        self.inner.signal_variance()
    }

    #[getter]
    fn noise_variance(&self) -> f64 {
        self.inner.noise_variance()
    }

    #[getter]
    fn log_posterior(&self) -> f64 {
        self.inner.log_posterior()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// A full experiment configuration, as read by the command-line tool.
#[pyclass(name = "RunConfig")]
struct PyRunConfig {
    inner: exp::RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner = exp::RunConfig::from_toml_str(text).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = exp::RunConfig::load(&path).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml_string().map_err(to_py)
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.inner.seeds.clone()
    }

    #[setter]
    fn set_seeds(&mut self, seeds: Vec<u64>) {
        self.inner.seeds = seeds;
    }

    #[getter]
    fn output_dir(&self) -> PathBuf {
        self.inner.output_dir.clone()
    }

    #[setter]
    fn set_output_dir(&mut self, dir: PathBuf) {
        self.inner.output_dir = dir;
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.as_str()
    }
}

/// Per-seed result of an experiment.
#[pyclass(name = "SeedResult", get_all)]
struct PySeedResult {
    seed: u64,
    dir: PathBuf,
    error: Option<String>,
    /// Contents of `summary.json`; `None` for random search.
    summary_json: Option<String>,
}

/// Runs every seed of `config`, writing the usual per-seed files.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &PyRunConfig) -> PyResult<Vec<PySeedResult>> {
    let cfg = &config.inner;
    let report = py.detach(|| exp::run_experiment(cfg)).map_err(to_py)?;
    report
        .outcomes
        .into_iter()
        .map(|o| {
            let summary_json = o
                .summary
                .map(|s| serde_json::to_string(&s))
                .transpose()
                .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
            Ok(PySeedResult {
                seed: o.seed,
                dir: o.dir,
                error: o.error,
                summary_json,
            })
        })
        .collect()
}

/// Renders SVG plots of kind "marginals", "regret", "sensitivity" or
/// "active_count"; returns the written paths.
#[pyfunction]
#[pyo3(signature = (results, kind="marginals", out=None))]
fn plot(results: PathBuf, kind: &str, out: Option<PathBuf>) -> PyResult<Vec<PathBuf>> {
    let kind = match kind {
        "marginals" => PlotKind::Marginals,
        "regret" => PlotKind::Regret,
        "sensitivity" => PlotKind::Sensitivity,
        "active_count" => PlotKind::ActiveCount,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown plot kind {other:?}"
            )))
        }
    };
    exp::plot(&results, kind, out.as_deref()).map_err(to_py)
}

#[pymodule]
pub fn pygtbo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBenchmark>()?;
    m.add_class::<PyNoiseModel>()?;
    m.add_class::<PyParticleSet>()?;
    m.add_class::<PyGtResult>()?;
    m.add_class::<PyGp>()?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PySeedResult>()?;
    m.add_function(wrap_pyfunction!(mutual_information, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(binary_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(run_group_testing, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(plot, m)?)?;
    m.add("OUTPUT_ROOT_ENV", exp::OUTPUT_ROOT_ENV)?;
    Ok(())
}
