//! Noise and signal variance estimation from binned perturbation probes.
//!
//! Before any group test runs, the default point is evaluated `n_def` times and
//! the dimensions are split into `3⌊√D⌋` random bins. Each bin is perturbed as
//! a whole and its absolute deviation from the default value recorded. The
//! `max_act` largest deviations estimate the signal variance, the rest the
//! noise variance.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::make_test_point;
use crate::error::{config, invalid, Result};
use crate::group::Group;
use crate::objective::{Objective, Point};

/// Variances of the observed difference `z = y(x) - f̂(x_def)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub f_def_hat: f64,
    pub sigma_n_sq: f64,
    pub sigma_sq: f64,
    pub n_def: usize,
    pub max_act: usize,
}

impl NoiseModel {
    /// Builds a model directly, enforcing the floor and `sigma_sq >= sigma_n_sq`.
    pub fn new(f_def_hat: f64, sigma_n_sq: f64, sigma_sq: f64, floor: f64) -> Result<Self> {
        if !(sigma_n_sq.is_finite() && sigma_sq.is_finite() && f_def_hat.is_finite()) {
            return Err(invalid("noise model values must be finite"));
        }
        let sigma_n_sq = sigma_n_sq.max(floor);
        let sigma_sq = sigma_sq.max(sigma_n_sq);
        Ok(Self {
            f_def_hat,
            sigma_n_sq,
            sigma_sq,
            n_def: 1,
            max_act: 1,
        })
    }

    /// Log density of `z` when the tested group holds no active dimension.
    pub fn log_lik_inactive(&self, z: f64) -> f64 {
        log_normal_pdf(z, self.sigma_n_sq)
    }

    /// Log density of `z` when the tested group holds an active dimension.
    pub fn log_lik_active(&self, z: f64) -> f64 {
        log_normal_pdf(z, self.sigma_sq)
    }
}

pub(crate) fn log_normal_pdf(z: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * z * z / var
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarianceConfig {
    pub n_def: usize,
    /// Assumed upper bound on active dimensions; `None` means `⌊√D⌋`.
    pub max_act: Option<usize>,
    pub floor: f64,
    /// Use the variance of signed deviations instead of absolute ones.
    pub variance_of_signed_deviation: bool,
}

impl Default for VarianceConfig {
    fn default() -> Self {
        Self {
            n_def: 10,
            max_act: None,
            floor: 1e-12,
            variance_of_signed_deviation: false,
        }
    }
}

/// One evaluation made while estimating the variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    /// `None` for replicates of the default point.
    pub bin: Option<Group>,
    pub point: Point,
    pub y: f64,
}

#[derive(Debug, Clone)]
pub struct VarianceEstimate {
    pub model: NoiseModel,
    pub probes: Vec<Probe>,
}

pub fn bin_count(dim: usize) -> usize {
    3 * isqrt(dim)
}

pub(crate) fn isqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Splits `0..dim` into `bins` random groups whose sizes differ by at most one.
pub fn random_bins<R: Rng + ?Sized>(dim: usize, bins: usize, rng: &mut R) -> Vec<Group> {
    let mut order: Vec<usize> = (0..dim).collect();
    order.shuffle(rng);
    let mut groups = vec![Group::empty(dim); bins];
    for (pos, i) in order.into_iter().enumerate() {
        groups[pos % bins].insert(i);
    }
    groups
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

pub fn estimate<R: Rng + ?Sized>(
    f: &mut dyn Objective,
    x_def: &Point,
    cfg: &VarianceConfig,
    rng: &mut R,
) -> Result<VarianceEstimate> {
    let dim = x_def.dim();
    if dim != f.dim() {
        return Err(invalid(format!(
            "default point has {dim} coordinates, objective expects {}",
            f.dim()
        )));
    }
    if dim < 4 {
        return Err(config(format!(
            "variance estimation needs D >= 4, got {dim}"
        )));
    }
    if cfg.n_def < 2 {
        return Err(config(format!("n_def must be >= 2, got {}", cfg.n_def)));
    }
    let bins = bin_count(dim);
    let max_act = cfg.max_act.unwrap_or_else(|| isqrt(dim));
    if max_act < 2 || bins < max_act + 2 {
        return Err(config(format!(
            "max_act = {max_act} leaves fewer than 2 deviations in a partition of {bins} bins"
        )));
    }

    let mut probes = Vec::with_capacity(cfg.n_def + bins);
    let mut sum = 0.0;
    for _ in 0..cfg.n_def {
        let y = f.evaluate(x_def)?;
        sum += y;
        probes.push(Probe {
            bin: None,
            point: x_def.clone(),
            y,
        });
    }
    let f_def_hat = sum / cfg.n_def as f64;

    let mut deviations = Vec::with_capacity(bins);
    for bin in random_bins(dim, bins, rng) {
        let point = make_test_point(x_def, &bin, rng);
        let y = f.evaluate(&point)?;
        deviations.push(y - f_def_hat);
        probes.push(Probe {
            bin: Some(bin),
            point,
            y,
        });
    }
    deviations.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    if !cfg.variance_of_signed_deviation {
        for d in &mut deviations {
            *d = d.abs();
        }
    }
    let split = bins - max_act;
    let sigma_n_sq = sample_variance(&deviations[..split]).max(cfg.floor);
    let sigma_sq = sample_variance(&deviations[split..]).max(sigma_n_sq);

    Ok(VarianceEstimate {
        model: NoiseModel {
            f_def_hat,
            sigma_n_sq,
            sigma_sq,
            n_def: cfg.n_def,
            max_act,
        },
        probes,
    })
}
