use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::GtConfig;
use crate::error::{config, GtboError, Result};
use crate::objective::{BaseFunction, BenchmarkSpec, DefaultMode};
use crate::optimizer::BoConfig;

/// Environment variable that replaces `output_dir` when set.
pub const OUTPUT_ROOT_ENV: &str = "GTBO_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gtbo,
    RandomSearch,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gtbo => "gtbo",
            Method::RandomSearch => "random_search",
        }
    }
}

/// Benchmark block of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub function: BaseFunction,
    pub ambient_dim: usize,
    /// Defaults to the function's customary noise level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_std: Option<f64>,
    /// Fixed embedding; drawn per seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_indices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_mode: Option<DefaultMode>,
    /// Makes every evaluation after the first `n` fail (for exercising
    /// partial outputs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_after: Option<usize>,
}

impl BenchmarkConfig {
    pub fn noise_std(&self) -> f64 {
        self.noise_std
            .unwrap_or_else(|| self.function.default_noise_std())
    }

    pub fn default_mode(&self) -> DefaultMode {
        self.default_mode
            .unwrap_or_else(|| DefaultMode::for_function(self.function))
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.function.intrinsic_dim();
        if d > self.ambient_dim {
            return Err(config(format!(
                "benchmark {} needs ambient_dim >= {d}, got {}",
                self.function, self.ambient_dim
            )));
        }
        let noise = self.noise_std();
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(config(format!(
                "benchmark.noise_std must be >= 0, got {noise}"
            )));
        }
        if let Some(idx) = &self.active_indices {
            BenchmarkSpec::new(self.function, self.ambient_dim, idx.clone(), noise)
                .map_err(|e| config(format!("benchmark.active_indices: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NoiseStd,
    AmbientDim,
    ActiveDim,
    MaxBatch,
    PriorQ,
    MaxAct,
    Particles,
    InactivePriorMu,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 8] = [
        SweepAxis::NoiseStd,
        SweepAxis::AmbientDim,
        SweepAxis::ActiveDim,
        SweepAxis::MaxBatch,
        SweepAxis::PriorQ,
        SweepAxis::MaxAct,
        SweepAxis::Particles,
        SweepAxis::InactivePriorMu,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::NoiseStd => "noise_std",
            SweepAxis::AmbientDim => "ambient_dim",
            SweepAxis::ActiveDim => "active_dim",
            SweepAxis::MaxBatch => "max_batch",
            SweepAxis::PriorQ => "prior_q",
            SweepAxis::MaxAct => "max_act",
            SweepAxis::Particles => "particles",
            SweepAxis::InactivePriorMu => "inactive_prior_mu",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = GtboError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|a| a.as_str()).collect();
                config(format!(
                    "unknown sweep axis '{s}' (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// A complete, file-backed experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Seeds run concurrently on this many threads.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    pub benchmark: BenchmarkConfig,
    #[serde(default)]
    pub gt: GtConfig,
    #[serde(default)]
    pub bo: BoConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_method() -> Method {
    Method::Gtbo
}

fn default_jobs() -> usize {
    1
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GtboError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            GtboError::Config(m) => config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| GtboError::Serialization(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(config("seeds must not be empty"));
        }
        let unique: BTreeSet<_> = self.seeds.iter().collect();
        if unique.len() != self.seeds.len() {
            return Err(config("seeds must be distinct"));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(config("output_dir must not be empty"));
        }
        if self.jobs == 0 {
            return Err(config("jobs must be >= 1"));
        }
        self.benchmark.validate()?;
        self.gt.validate().map_err(as_config)?;
        self.bo.validate().map_err(as_config)?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(config("sweep.values must not be empty"));
            }
            for &v in &sweep.values {
                self.with_axis_value(sweep.axis, v)?;
            }
        }
        Ok(())
    }

    /// Replaces `output_dir` with `root` when given.
    pub fn with_output_root(mut self, root: Option<PathBuf>) -> Self {
        if let Some(root) = root.filter(|r| !r.as_os_str().is_empty()) {
            self.output_dir = root;
        }
        self
    }

    /// Applies the [`OUTPUT_ROOT_ENV`] override from the environment.
    pub fn with_env_output_root(self) -> Self {
        self.with_output_root(std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
    }

    /// A copy with one sweep axis set to `value`, validated.
    pub fn with_axis_value(&self, axis: SweepAxis, value: f64) -> Result<RunConfig> {
        if !value.is_finite() {
            return Err(config(format!(
                "sweep value for {axis} must be finite, got {value}"
            )));
        }
        let int = || -> Result<usize> {
            if value < 0.0 || value.fract() != 0.0 {
                Err(config(format!(
                    "sweep value for {axis} must be a non-negative integer, got {value}"
                )))
            } else {
                Ok(value as usize)
            }
        };
        let mut c = self.clone();
        c.sweep = None;
        match axis {
            SweepAxis::NoiseStd => c.benchmark.noise_std = Some(value),
            SweepAxis::AmbientDim => {
                c.benchmark.ambient_dim = int()?;
                c.benchmark.active_indices = None;
            }
            SweepAxis::ActiveDim => {
                let d = int()?;
                match c.benchmark.function {
                    BaseFunction::Levy { .. } if d >= 1 => {
                        c.benchmark.function = BaseFunction::Levy { dim: d };
                        c.benchmark.active_indices = None;
                    }
                    BaseFunction::Levy { .. } => {
                        return Err(config("sweep over active_dim needs values >= 1"))
                    }
                    other => {
                        return Err(config(format!(
                            "sweep over active_dim needs a levy benchmark, got {other}"
                        )))
                    }
                }
            }
            SweepAxis::MaxBatch => c.gt.max_batch = int()?,
            SweepAxis::PriorQ => c.gt.prior_q = value,
            SweepAxis::MaxAct => c.gt.max_act = Some(int()?),
            SweepAxis::Particles => c.gt.particles = int()?,
            SweepAxis::InactivePriorMu => c.bo.priors.inactive_lengthscale.mu = value,
        }
        c.validate()
            .map_err(|e| config(format!("sweep {axis} = {value}: {e}")))?;
        Ok(c)
    }
}

fn as_config(e: GtboError) -> GtboError {
    match e {
        GtboError::InvalidArgument(m) => GtboError::Config(m),
        other => other,
    }
}
