use std::path::Path;

use super::config::{RunConfig, SweepAxis};
use super::runner::{create_dir, csv_error, csv_writer, io_err, run_experiment, SeedOutcome};
use crate::error::{config, Result};

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.csv";

pub const SWEEP_HEADER: [&str; 4] = ["axis", "value", "iteration", "correct_pct"];
pub const SWEEP_SUMMARY_HEADER: [&str; 6] = [
    "axis",
    "value",
    "seeds",
    "reached",
    "median_iterations_to_full",
    "final_correct_pct",
];

/// A dimension counts as correctly classified when its marginal is below
/// `INACTIVE_BELOW` for an inactive one or above `ACTIVE_ABOVE` for an
/// active one.
pub const INACTIVE_BELOW: f64 = 0.01;
pub const ACTIVE_ABOVE: f64 = 0.9;

/// Percentage of correctly classified dimensions after each test.
pub fn classification_curve(trajectory: &[Vec<f64>], true_active: &[usize]) -> Vec<f64> {
    trajectory
        .iter()
        .map(|m| {
            if m.is_empty() {
                return 0.0;
            }
            let ok = m
                .iter()
                .enumerate()
                .filter(|&(i, &p)| {
                    if true_active.contains(&i) {
                        p > ACTIVE_ABOVE
                    } else {
                        p < INACTIVE_BELOW
                    }
                })
                .count();
            100.0 * ok as f64 / m.len() as f64
        })
        .collect()
}

/// First iteration at which every dimension is correctly classified.
pub fn iterations_to_full(curve: &[f64]) -> Option<usize> {
    curve.iter().position(|&c| c >= 100.0)
}

/// Median where `None` (never reached) ranks above every finite value.
/// Returns `None` when the median itself is unreached.
pub fn median_iterations(values: &[Option<usize>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values
        .iter()
        .map(|x| x.map_or(f64::INFINITY, |n| n as f64))
        .collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    m.is_finite().then_some(m)
}

/// Aggregate of one configuration over its seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    /// Mean correct-classification percentage per iteration. Seeds that
    /// stopped early hold their final value.
    pub mean_curve: Vec<f64>,
    pub iterations_to_full: Vec<Option<usize>>,
    pub median_iterations_to_full: Option<f64>,
}

pub fn aggregate(outcomes: &[SeedOutcome]) -> Aggregate {
    let curves: Vec<Vec<f64>> = outcomes
        .iter()
        .filter_map(|o| {
            let gt = o.gt.as_ref()?;
            Some(classification_curve(
                &gt.marginal_trajectory,
                &o.spec.active_indices,
            ))
        })
        .collect();
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    let mean_curve = (0..len)
        .map(|t| {
            let s: f64 = curves
                .iter()
                .map(|c| c.get(t).or(c.last()).copied().unwrap_or(0.0))
                .sum();
            s / curves.len() as f64
        })
        .collect();
    let iterations_to_full: Vec<_> = curves.iter().map(|c| iterations_to_full(c)).collect();
    Aggregate {
        median_iterations_to_full: median_iterations(&iterations_to_full),
        mean_curve,
        iterations_to_full,
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub outcomes: Vec<SeedOutcome>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn failures(&self) -> impl Iterator<Item = &SeedOutcome> {
        self.points
            .iter()
            .flat_map(|p| &p.outcomes)
            .filter(|o| o.error.is_some())
    }
}

pub fn value_dir_name(axis: SweepAxis, value: f64) -> String {
    format!("{axis}_{value}")
}

/// Runs the experiment once per value of the configured sweep axis, each in
/// its own subdirectory, then writes `sweep.csv` and `sweep_summary.csv`.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| config("configuration has no [sweep] block"))?;
    let variants = sweep
        .values
        .iter()
        .map(|&v| cfg.with_axis_value(sweep.axis, v).map(|c| (v, c)))
        .collect::<Result<Vec<_>>>()?;
    create_dir(&cfg.output_dir)?;
    let mut points = Vec::with_capacity(variants.len());
    for (value, mut c) in variants {
        c.output_dir = cfg.output_dir.join(value_dir_name(sweep.axis, value));
        log::info!("sweep {} = {value}", sweep.axis);
        let report = run_experiment(&c)?;
        points.push(SweepPoint {
            value,
            aggregate: aggregate(&report.outcomes),
            outcomes: report.outcomes,
        });
    }
    let report = SweepReport {
        axis: sweep.axis,
        points,
    };
    write_sweep(&cfg.output_dir, &report)?;
    Ok(report)
}

pub fn write_sweep(dir: &Path, report: &SweepReport) -> Result<()> {
    let path = dir.join(SWEEP_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(SWEEP_HEADER)
        .map_err(|e| csv_error(&path, e))?;
    for p in &report.points {
        for (t, c) in p.aggregate.mean_curve.iter().enumerate() {
            w.write_record([
                report.axis.as_str().to_string(),
                p.value.to_string(),
                t.to_string(),
                c.to_string(),
            ])
            .map_err(|e| csv_error(&path, e))?;
        }
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join(SWEEP_SUMMARY_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(SWEEP_SUMMARY_HEADER)
        .map_err(|e| csv_error(&path, e))?;
    for p in &report.points {
        let a = &p.aggregate;
        w.write_record([
            report.axis.as_str().to_string(),
            p.value.to_string(),
            a.iterations_to_full.len().to_string(),
            a.iterations_to_full.iter().flatten().count().to_string(),
            a.median_iterations_to_full
                .map_or_else(|| "inf".to_string(), |m| m.to_string()),
            a.mean_curve.last().copied().unwrap_or(0.0).to_string(),
        ])
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(io_err(&path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_uses_both_thresholds() {
        let traj = vec![
            vec![0.05, 0.05, 0.05],
            vec![0.95, 0.005, 0.5],
            vec![0.95, 0.005, 0.001],
        ];
        let c = classification_curve(&traj, &[0]);
        assert_eq!(c.len(), 3);
        assert_eq!(c[0], 0.0);
        assert!((c[1] - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(c[2], 100.0);
        assert_eq!(iterations_to_full(&c), Some(2));
    }

    #[test]
    fn median_treats_unreached_as_infinite() {
        assert_eq!(median_iterations(&[Some(3), Some(9), None]), Some(9.0));
        assert_eq!(median_iterations(&[Some(3), None, None]), None);
        assert_eq!(median_iterations(&[Some(4), Some(6)]), Some(5.0));
        assert_eq!(median_iterations(&[Some(4), None]), None);
        assert_eq!(median_iterations(&[]), None);
    }

    #[test]
    fn single_value_sweep_matches_plain_run() {
        let tmp = tempfile::tempdir().unwrap();
        let text = format!(
            r#"
            seeds = [2, 3]
            output_dir = "{}"
            [benchmark]
            function = "levy2"
            ambient_dim = 16
            noise_std = 0.01
            [gt]
            particles = 1000
            budget = 30
            [bo]
            total_budget = 0
            [sweep]
            axis = "noise_std"
            values = [0.01]
            "#,
            tmp.path().join("sweep").display()
        );
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        let sweep = run_sweep(&cfg).unwrap();
        let mut plain = cfg.clone();
        plain.sweep = None;
        plain.output_dir = tmp.path().join("plain");
        let report = run_experiment(&plain).unwrap();
        assert_eq!(sweep.points.len(), 1);
        assert_eq!(sweep.points[0].aggregate, aggregate(&report.outcomes));
        let csv = std::fs::read_to_string(tmp.path().join("sweep").join(SWEEP_FILE)).unwrap();
        assert_eq!(
            csv.lines().count(),
            1 + sweep.points[0].aggregate.mean_curve.len()
        );
    }
}
