use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::runner::{io_err, MARGINALS_FILE, SUMMARY_FILE, TRACE_FILE};
use super::svg::{Band, Chart, Series, PALETTE};
use super::sweep::SWEEP_FILE;
use crate::error::{invalid, GtboError, Result};

pub const PLOTS_DIR: &str = "plots";
const ACTIVE_COLOR: &str = "#2ca02c";
const INACTIVE_COLOR: &str = "#b0b0b0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Marginals,
    Regret,
    Sensitivity,
    ActiveCount,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [
        PlotKind::Marginals,
        PlotKind::Regret,
        PlotKind::Sensitivity,
        PlotKind::ActiveCount,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlotKind::Marginals => "marginals",
            PlotKind::Regret => "regret",
            PlotKind::Sensitivity => "sensitivity",
            PlotKind::ActiveCount => "active_count",
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlotKind {
    type Err = GtboError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown plot kind '{s}'")))
    }
}

/// Renders `kind` from the results in `results_dir` into `out_dir`
/// (default `results_dir/plots`). Every input is read before anything is
/// written, so a failure leaves no partial files.
pub fn plot(results_dir: &Path, kind: PlotKind, out_dir: Option<&Path>) -> Result<Vec<PathBuf>> {
    if !results_dir.is_dir() {
        return Err(invalid(format!(
            "results directory {} does not exist",
            results_dir.display()
        )));
    }
    let charts = match kind {
        PlotKind::Marginals => marginal_charts(results_dir)?,
        PlotKind::ActiveCount => vec![(
            "active_count.svg".to_string(),
            active_count_chart(results_dir)?,
        )],
        PlotKind::Regret => vec![("regret.svg".to_string(), regret_chart(results_dir)?)],
        PlotKind::Sensitivity => vec![(
            "sensitivity.svg".to_string(),
            sensitivity_chart(results_dir)?,
        )],
    };
    let out = out_dir.map_or_else(|| results_dir.join(PLOTS_DIR), Path::to_path_buf);
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    let mut written = Vec::with_capacity(charts.len());
    for (name, chart) in charts {
        let path = out.join(name);
        fs::write(&path, chart.render()).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

fn seed_number(p: &Path) -> Option<u64> {
    p.file_name()?.to_str()?.strip_prefix("seed_")?.parse().ok()
}

/// `dir` itself if it holds `file`, otherwise its `seed_*` subdirectories
/// that do, in seed order.
fn seed_dirs(dir: &Path, file: &str) -> Result<Vec<PathBuf>> {
    if dir.join(file).is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut found: Vec<(u64, PathBuf)> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(file).is_file())
        .filter_map(|p| seed_number(&p).map(|s| (s, p)))
        .collect();
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

fn rel(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).display().to_string()
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| super::runner::csv_error(path, e))?;
    let header = r
        .headers()
        .map_err(|e| super::runner::csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| super::runner::csv_error(path, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| invalid(format!("{}: '{s}' is not a number", path.display())))
}

fn read_marginals(path: &Path) -> Result<Vec<Vec<f64>>> {
    let (header, rows) = read_table(path)?;
    if header.first().map(String::as_str) != Some("iteration") {
        return Err(invalid(format!(
            "{}: expected an 'iteration' column first",
            path.display()
        )));
    }
    rows.iter()
        .map(|r| r[1..].iter().map(|v| parse_f64(path, v)).collect())
        .collect()
}

#[derive(Deserialize)]
struct SummaryView {
    true_active: Vec<usize>,
    eta: f64,
}

fn read_summary(dir: &Path) -> Option<SummaryView> {
    let text = fs::read_to_string(dir.join(SUMMARY_FILE)).ok()?;
    serde_json::from_str(&text).ok()
}

fn no_inputs(dir: &Path, what: &str) -> GtboError {
    invalid(format!("no {what} found under {}", dir.display()))
}

fn marginal_charts(dir: &Path) -> Result<Vec<(String, Chart)>> {
    let dirs = seed_dirs(dir, MARGINALS_FILE)?;
    if dirs.is_empty() {
        return Err(no_inputs(dir, MARGINALS_FILE));
    }
    let mut charts = Vec::with_capacity(dirs.len());
    for d in dirs {
        let path = d.join(MARGINALS_FILE);
        let rows = read_marginals(&path)?;
        let truth = read_summary(&d).map(|s| s.true_active).unwrap_or_default();
        let dim = rows.first().map_or(0, Vec::len);
        let name = match seed_number(&d) {
            Some(s) => format!("marginals_seed_{s}.svg"),
            None => "marginals.svg".to_string(),
        };
        let mut chart = Chart::new("Marginal activity probabilities", "test", "marginal");
        chart.y_range = Some((0.0, 1.0));
        chart.comments.push(format!("source: {}", rel(dir, &path)));
        if !truth.is_empty() {
            chart
                .comments
                .push(format!("true active dimensions: {truth:?}"));
        }
        // Inactive curves first so the active ones stay visible on top.
        let curve = |i: usize| {
            rows.iter()
                .enumerate()
                .map(|(t, r)| (t as f64, r[i]))
                .collect()
        };
        for i in (0..dim).filter(|i| !truth.contains(i)) {
            let s = Series::new(INACTIVE_COLOR, curve(i)).width(1.0);
            chart.series.push(if truth.is_empty() {
                s
            } else {
                s.label("inactive")
            });
        }
        for &i in truth.iter().filter(|&&i| i < dim) {
            chart.series.push(
                Series::new(ACTIVE_COLOR, curve(i))
                    .width(2.0)
                    .label("active"),
            );
        }
        charts.push((name, chart));
    }
    Ok(charts)
}

fn active_count_chart(dir: &Path) -> Result<Chart> {
    let dirs = seed_dirs(dir, MARGINALS_FILE)?;
    if dirs.is_empty() {
        return Err(no_inputs(dir, MARGINALS_FILE));
    }
    let mut chart = Chart::new("Dimensions classified active", "test", "count");
    let mut true_count = None;
    for (k, d) in dirs.iter().enumerate() {
        let path = d.join(MARGINALS_FILE);
        let rows = read_marginals(&path)?;
        let summary = read_summary(d);
        let eta = summary.as_ref().map_or(0.5, |s| s.eta);
        if let Some(s) = &summary {
            true_count.get_or_insert(s.true_active.len());
        }
        chart
            .comments
            .push(format!("source: {} (eta = {eta})", rel(dir, &path)));
        let pts = rows
            .iter()
            .enumerate()
            .map(|(t, r)| (t as f64, r.iter().filter(|&&p| p >= eta).count() as f64))
            .collect();
        let label = seed_number(d).map_or_else(|| "run".to_string(), |s| format!("seed {s}"));
        chart
            .series
            .push(Series::new(PALETTE[k % PALETTE.len()], pts).label(label));
    }
    if let Some(n) = true_count {
        let x_max = chart
            .series
            .iter()
            .flat_map(|s| s.points.last())
            .fold(0.0f64, |m, p| m.max(p.0));
        chart.series.push(
            Series::new("black", vec![(0.0, n as f64), (x_max, n as f64)])
                .dashed()
                .label("true count"),
        );
    }
    Ok(chart)
}

/// Regret values per seed directory, indexed by evaluation.
fn read_regret(path: &Path) -> Result<Vec<f64>> {
    let (header, rows) = read_table(path)?;
    let col = header
        .iter()
        .position(|h| h == "regret")
        .ok_or_else(|| invalid(format!("{}: no regret column", path.display())))?;
    rows.iter()
        .filter(|r| !r[col].is_empty())
        .map(|r| parse_f64(path, &r[col]))
        .collect()
}

fn mean_se(columns: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let len = columns.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|t| {
            let v: Vec<f64> = columns.iter().filter_map(|c| c.get(t).copied()).collect();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let se = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
            } else {
                0.0
            };
            (mean, se)
        })
        .collect()
}

fn regret_chart(dir: &Path) -> Result<Chart> {
    // Either one method's seed directories, or one subdirectory per method.
    let mut groups: Vec<(String, Vec<PathBuf>)> = Vec::new();
    let direct = seed_dirs(dir, TRACE_FILE)?;
    if !direct.is_empty() {
        let name = dir
            .file_name()
            .map_or_else(|| "run".to_string(), |n| n.to_string_lossy().into_owned());
        groups.push((name, direct));
    } else {
        let mut subs: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        subs.sort();
        for s in subs {
            let d = seed_dirs(&s, TRACE_FILE)?;
            if !d.is_empty() {
                groups.push((rel(dir, &s), d));
            }
        }
    }
    if groups.is_empty() {
        return Err(no_inputs(dir, TRACE_FILE));
    }
    let mut chart = Chart::new("Simple regret (mean ± 1 s.e.)", "evaluation", "regret");
    chart.log_y = true;
    let mut any = false;
    for (k, (name, dirs)) in groups.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut cols = Vec::with_capacity(dirs.len());
        for d in dirs {
            let path = d.join(TRACE_FILE);
            chart.comments.push(format!("source: {}", rel(dir, &path)));
            cols.push(read_regret(&path)?);
        }
        let stats = mean_se(&cols);
        if stats.is_empty() {
            continue;
        }
        any = true;
        let x = |t: usize| (t + 1) as f64;
        chart.bands.push(Band {
            color: color.to_string(),
            lower: stats
                .iter()
                .enumerate()
                .map(|(t, (m, s))| (x(t), m - s))
                .collect(),
            upper: stats
                .iter()
                .enumerate()
                .map(|(t, (m, s))| (x(t), m + s))
                .collect(),
        });
        chart.series.push(
            Series::new(
                color,
                stats
                    .iter()
                    .enumerate()
                    .map(|(t, (m, _))| (x(t), *m))
                    .collect(),
            )
            .width(2.0)
            .label(format!("{name} (n={})", dirs.len())),
        );
    }
    if !any {
        return Err(invalid(format!(
            "no regret values under {} (benchmark optimum unknown?)",
            dir.display()
        )));
    }
    Ok(chart)
}

fn sensitivity_chart(dir: &Path) -> Result<Chart> {
    let path = dir.join(SWEEP_FILE);
    if !path.is_file() {
        return Err(no_inputs(dir, SWEEP_FILE));
    }
    let (header, rows) = read_table(&path)?;
    if header != ["axis", "value", "iteration", "correct_pct"] {
        return Err(invalid(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    if rows.is_empty() {
        return Err(invalid(format!("{} has no rows", path.display())));
    }
    let axis = rows[0][0].clone();
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in &rows {
        let pt = (parse_f64(&path, &r[2])?, parse_f64(&path, &r[3])?);
        match series.iter_mut().find(|(v, _)| *v == r[1]) {
            Some((_, pts)) => pts.push(pt),
            None => series.push((r[1].clone(), vec![pt])),
        }
    }
    let mut chart = Chart::new(
        format!("Correct classification vs {axis}"),
        "test",
        "correctly classified (%)",
    );
    chart.y_range = Some((0.0, 100.0));
    chart.comments.push(format!("source: {}", rel(dir, &path)));
    for (k, (value, pts)) in series.into_iter().enumerate() {
        chart.series.push(
            Series::new(PALETTE[k % PALETTE.len()], pts)
                .width(2.0)
                .label(format!("{axis} = {value}")),
        );
    }
    Ok(chart)
}
