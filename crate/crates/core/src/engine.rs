//! The group-testing phase: estimate variances, then repeatedly pick
//! informative groups, perturb them away from the default point and update
//! the activity posterior until every marginal is decided or the test budget
//! runs out.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{config, invalid, GtboError, Result};
use crate::group::Group;
use crate::objective::{Objective, Point};
use crate::particles::{ParticleSet, SmcConfig};
use crate::selection::{select_batch, SelectionConfig};
use crate::variance::{self, NoiseModel, Probe, VarianceConfig};

/// Minimum distance between a perturbed coordinate and its default value.
pub const MIN_PERTURBATION: f64 = 0.4;

/// Replaces the coordinates in `g` with uniform draws at least
/// [`MIN_PERTURBATION`] away from `x_def`, redrawing each coordinate
/// independently. Coordinates outside `g` are copied.
pub fn make_test_point<R: Rng + ?Sized>(x_def: &Point, g: &Group, rng: &mut R) -> Point {
    let mut x = x_def.to_vec();
    for i in g.indices() {
        let center = x_def[i];
        x[i] = loop {
            let u = rng.random::<f64>();
            if (u - center).abs() >= MIN_PERTURBATION {
                break u;
            }
        };
    }
    Point::clipped(x)
}

/// True when every marginal is at most `c_lower` or at least `c_upper`.
pub fn converged(marginals: &[f64], c_lower: f64, c_upper: f64) -> bool {
    marginals.iter().all(|&m| m <= c_lower || m >= c_upper)
}

/// Indices whose marginal is at least `eta`.
pub fn active_set(marginals: &[f64], eta: f64) -> Vec<usize> {
    marginals
        .iter()
        .enumerate()
        .filter(|(_, &m)| m >= eta)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GtConfig {
    /// Maximum number of test evaluations (probes are not counted).
    pub budget: usize,
    pub particles: usize,
    pub prior_q: f64,
    pub eta: f64,
    pub c_lower: f64,
    pub c_upper: f64,
    pub max_batch: usize,
    pub mi_drop: f64,
    pub n_starts: usize,
    pub mc_samples: usize,
    pub n_def: usize,
    pub max_act: Option<usize>,
    pub variance_floor: f64,
    pub variance_of_signed_deviation: bool,
    pub ess_fraction: f64,
    pub gibbs_sweeps: usize,
}

impl Default for GtConfig {
    fn default() -> Self {
        let sel = SelectionConfig::default();
        let var = VarianceConfig::default();
        let smc = SmcConfig::default();
        Self {
            budget: 300,
            particles: 10_000,
            prior_q: 0.05,
            eta: 0.5,
            c_lower: 5e-3,
            c_upper: 0.9,
            max_batch: sel.max_batch,
            mi_drop: sel.mi_drop,
            n_starts: sel.n_starts,
            mc_samples: sel.mc_samples,
            n_def: var.n_def,
            max_act: var.max_act,
            variance_floor: var.floor,
            variance_of_signed_deviation: var.variance_of_signed_deviation,
            ess_fraction: smc.ess_fraction,
            gibbs_sweeps: smc.gibbs_sweeps,
        }
    }
}

impl GtConfig {
    pub fn validate(&self) -> Result<()> {
        let unit_open = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(config(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        if self.budget == 0 {
            return Err(config("gt budget must be >= 1"));
        }
        if self.particles == 0 {
            return Err(config("particles must be >= 1"));
        }
        unit_open("prior_q", self.prior_q)?;
        unit_open("eta", self.eta)?;
        unit_open("c_lower", self.c_lower)?;
        unit_open("c_upper", self.c_upper)?;
        if self.c_lower >= self.c_upper {
            return Err(config("c_lower must be below c_upper"));
        }
        if self.max_batch == 0 || self.n_starts == 0 || self.mc_samples == 0 {
            return Err(config("max_batch, n_starts and mc_samples must be >= 1"));
        }
        if !(self.mi_drop > 0.0 && self.mi_drop <= 1.0) {
            return Err(config(format!(
                "mi_drop must lie in (0, 1], got {}",
                self.mi_drop
            )));
        }
        if !(self.variance_floor > 0.0) {
            return Err(config("variance_floor must be positive"));
        }
        if !(self.ess_fraction > 0.0 && self.ess_fraction <= 1.0) {
            return Err(config("ess_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn selection(&self) -> SelectionConfig {
        SelectionConfig {
            n_starts: self.n_starts,
            max_batch: self.max_batch,
            mi_drop: self.mi_drop,
            mc_samples: self.mc_samples,
        }
    }

    pub fn variance(&self) -> VarianceConfig {
        VarianceConfig {
            n_def: self.n_def,
            max_act: self.max_act,
            floor: self.variance_floor,
            variance_of_signed_deviation: self.variance_of_signed_deviation,
        }
    }

    pub fn smc(&self) -> SmcConfig {
        SmcConfig {
            ess_fraction: self.ess_fraction,
            gibbs_sweeps: self.gibbs_sweeps,
        }
    }
}

/// One group test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub group: Group,
    pub point: Point,
    /// Observed value minus the default-point mean.
    pub z: f64,
    pub y: f64,
    /// 1-based index of this test among all tests.
    pub iteration: usize,
    /// 1-based batch index.
    pub batch: usize,
    pub mi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtResult {
    pub x_def: Point,
    /// Row 0 holds the initial marginals, row `t` the marginals after test `t`.
    pub marginal_trajectory: Vec<Vec<f64>>,
    pub active_set: Vec<usize>,
    pub tests: Vec<TestRecord>,
    pub probes: Vec<Probe>,
    pub noise_model: NoiseModel,
    pub converged: bool,
    /// Number of tests when convergence was first detected.
    pub convergence_iteration: Option<usize>,
    pub iterations_used: usize,
}

impl GtResult {
    pub fn final_marginals(&self) -> &[f64] {
        self.marginal_trajectory.last().map_or(&[], Vec::as_slice)
    }

    /// Every evaluated point with its observation, probes first.
    pub fn evaluations(&self) -> Vec<(Point, f64)> {
        self.probes
            .iter()
            .map(|p| (p.point.clone(), p.y))
            .chain(self.tests.iter().map(|t| (t.point.clone(), t.y)))
            .collect()
    }

    pub fn evaluation_count(&self) -> usize {
        self.probes.len() + self.tests.len()
    }

    /// Number of dimensions with marginal `>= eta` after each test.
    pub fn active_count_trajectory(&self, eta: f64) -> Vec<usize> {
        self.marginal_trajectory
            .iter()
            .map(|m| m.iter().filter(|&&v| v >= eta).count())
            .collect()
    }
}

/// A failed group-testing run, with whatever was gathered before the failure.
#[derive(Debug, Error)]
#[error("group testing failed after {} tests: {source}", partial.as_ref().map_or(0, |p| p.iterations_used))]
pub struct GtRunError {
    #[source]
    pub source: GtboError,
    pub partial: Option<Box<GtResult>>,
}

impl From<GtboError> for GtRunError {
    fn from(source: GtboError) -> Self {
        Self {
            source,
            partial: None,
        }
    }
}

pub fn run<R: Rng + ?Sized>(
    f: &mut dyn Objective,
    x_def: &Point,
    cfg: &GtConfig,
    rng: &mut R,
) -> Result<GtResult, GtRunError> {
    cfg.validate()?;
    let dim = f.dim();
    if x_def.dim() != dim {
        return Err(invalid(format!(
            "default point has {} coordinates, objective expects {dim}",
            x_def.dim()
        ))
        .into());
    }
    let estimate = variance::estimate(f, x_def, &cfg.variance(), rng)?;
    log::info!(
        "noise model: f_def = {:.6}, sigma_n^2 = {:.3e}, sigma^2 = {:.3e}",
        estimate.model.f_def_hat,
        estimate.model.sigma_n_sq,
        estimate.model.sigma_sq
    );
    run_with_noise_model(f, x_def, estimate.model, estimate.probes, cfg, rng)
}

/// Runs the test loop with a given noise model, skipping variance
/// estimation. `probes` are carried into the result unchanged.
pub fn run_with_noise_model<R: Rng + ?Sized>(
    f: &mut dyn Objective,
    x_def: &Point,
    nm: NoiseModel,
    probes: Vec<Probe>,
    cfg: &GtConfig,
    rng: &mut R,
) -> Result<GtResult, GtRunError> {
    cfg.validate()?;
    let dim = f.dim();
    if x_def.dim() != dim {
        return Err(invalid(format!(
            "default point has {} coordinates, objective expects {dim}",
            x_def.dim()
        ))
        .into());
    }
    let mut ps =
        ParticleSet::init(cfg.particles, vec![cfg.prior_q; dim], rng)?.with_config(cfg.smc());

    let mut result = GtResult {
        x_def: x_def.clone(),
        marginal_trajectory: vec![ps.marginals()],
        active_set: Vec::new(),
        tests: Vec::new(),
        probes,
        noise_model: nm.clone(),
        converged: false,
        convergence_iteration: None,
        iterations_used: 0,
    };
    let sel = cfg.selection();
    let mut batch_index = 0;
    while result.tests.len() < cfg.budget {
        batch_index += 1;
        let mut batch = select_batch(&ps, &nm, &sel, rng);
        batch.truncate(cfg.budget - result.tests.len());
        for chosen in batch {
            let point = make_test_point(x_def, &chosen.group, rng);
            let y = match f.evaluate(&point) {
                Ok(y) => y,
                Err(e) => return Err(fail(result, cfg, e.into())),
            };
            let z = y - nm.f_def_hat;
            if let Err(e) = ps.observe(&chosen.group, z, &nm, rng) {
                return Err(fail(result, cfg, e));
            }
            result.tests.push(TestRecord {
                group: chosen.group,
                point,
                z,
                y,
                iteration: result.tests.len() + 1,
                batch: batch_index,
                mi: chosen.mi.value,
            });
            result.marginal_trajectory.push(ps.marginals());
        }
        if let Err(e) = ps.rejuvenate_if_needed(&nm, rng) {
            return Err(fail(result, cfg, e));
        }
        let marginals = ps.marginals();
        *result.marginal_trajectory.last_mut().unwrap() = marginals.clone();
        if converged(&marginals, cfg.c_lower, cfg.c_upper) {
            result.converged = true;
            result.convergence_iteration = Some(result.tests.len());
            break;
        }
    }
    result.iterations_used = result.tests.len();
    result.active_set = active_set(result.final_marginals(), cfg.eta);
    if result.active_set.is_empty() {
        log::warn!("group testing found no active dimension");
    }
    Ok(result)
}

fn fail(mut partial: GtResult, cfg: &GtConfig, source: GtboError) -> GtRunError {
    partial.iterations_used = partial.tests.len();
    partial.active_set = active_set(partial.final_marginals(), cfg.eta);
    GtRunError {
        source,
        partial: Some(Box::new(partial)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::FnObjective;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn test_point_avoids_center_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Point::center(50);
        let g = Group::from_indices(50, (0..50).step_by(2));
        for _ in 0..50 {
            let t = make_test_point(&x, &g, &mut rng);
            for i in 0..50 {
                if g.contains(i) {
                    assert!(t[i] <= 0.1 || t[i] >= 0.9, "{}", t[i]);
                } else {
                    assert_eq!(t[i], 0.5);
                }
            }
        }
    }

    #[test]
    fn empty_group_leaves_default_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Point::new(vec![0.1, 0.7, 1.0]).unwrap();
        assert_eq!(make_test_point(&x, &Group::empty(3), &mut rng), x);
    }

    #[test]
    fn edge_defaults_stay_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Point::new(vec![0.0, 1.0, 0.35]).unwrap();
        let g = Group::from_indices(3, 0..3);
        for _ in 0..200 {
            let t = make_test_point(&x, &g, &mut rng);
            assert!(t[0] >= 0.4 && t[1] <= 0.6 && (t[2] - 0.35).abs() >= 0.4);
        }
    }

    #[test]
    fn convergence_and_active_set() {
        assert!(converged(&[0.001, 0.95], 5e-3, 0.9));
        assert!(!converged(&[0.001, 0.5], 5e-3, 0.9));
        assert_eq!(active_set(&[0.49, 0.51], 0.5), vec![1]);
        assert_eq!(active_set(&[0.5], 0.5), vec![0]);
        assert!(active_set(&[0.1, 0.2], 0.5).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(GtConfig::default().validate().is_ok());
        for bad in [
            GtConfig {
                budget: 0,
                ..Default::default()
            },
            GtConfig {
                c_lower: 0.95,
                ..Default::default()
            },
            GtConfig {
                eta: 1.0,
                ..Default::default()
            },
            GtConfig {
                mi_drop: 0.0,
                ..Default::default()
            },
            GtConfig {
                prior_q: 0.0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    fn small_cfg() -> GtConfig {
        GtConfig {
            particles: 2000,
            budget: 80,
            ..Default::default()
        }
    }

    #[test]
    fn recovers_two_strong_dimensions() {
        let mut noise = ChaCha8Rng::seed_from_u64(10);
        let mut f = FnObjective::new(30, move |x: &[f64]| {
            let e: f64 = StandardNormal.sample(&mut noise);
            10.0 * (x[4] - 0.5).powi(2) + 10.0 * (x[17] - 0.5).powi(2) + 0.01 * e
        });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = run(&mut f, &Point::center(30), &small_cfg(), &mut rng).unwrap();
        assert_eq!(r.active_set, vec![4, 17]);
        assert!(r.converged);
        assert_eq!(r.marginal_trajectory.len(), r.tests.len() + 1);
        assert_eq!(r.iterations_used, r.tests.len());
        for t in &r.tests {
            for i in 0..30 {
                if t.group.contains(i) {
                    assert!((t.point[i] - 0.5).abs() >= MIN_PERTURBATION);
                } else {
                    assert_eq!(t.point[i], 0.5);
                }
            }
        }
    }

    #[test]
    fn budget_counts_evaluations_not_batches() {
        let mut noise = ChaCha8Rng::seed_from_u64(11);
        let mut f = FnObjective::new(25, move |_: &[f64]| {
            let e: f64 = StandardNormal.sample(&mut noise);
            e
        });
        let cfg = GtConfig {
            budget: 7,
            c_lower: 1e-9,
            ..small_cfg()
        };
        let r = run(
            &mut f,
            &Point::center(25),
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        assert_eq!(r.tests.len(), 7);
        assert!(!r.converged);
        assert_eq!(r.evaluation_count(), 10 + 15 + 7);
    }

    #[test]
    fn evaluator_failure_returns_partial_result() {
        let mut calls = 0;
        let mut f = FnObjective::new(16, move |x: &[f64]| {
            calls += 1;
            if calls > 30 {
                f64::NAN
            } else {
                x[0]
            }
        });
        let err = run(
            &mut f,
            &Point::center(16),
            &small_cfg(),
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap_err();
        assert!(matches!(err.source, GtboError::Objective(_)));
        let partial = err.partial.unwrap();
        assert_eq!(partial.probes.len(), 10 + 12);
        assert_eq!(partial.tests.len(), 8);
        assert_eq!(partial.marginal_trajectory.len(), 9);
    }

    #[test]
    fn same_seed_same_result() {
        let go = || {
            let mut noise = ChaCha8Rng::seed_from_u64(12);
            let mut f = FnObjective::new(20, move |x: &[f64]| {
                let e: f64 = StandardNormal.sample(&mut noise);
                5.0 * x[3] + 0.1 * e
            });
            run(
                &mut f,
                &Point::center(20),
                &small_cfg(),
                &mut ChaCha8Rng::seed_from_u64(6),
            )
            .unwrap()
        };
        assert_eq!(go(), go());
    }
}
