use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gtbo::experiment::{
    exit_code, plot, run_experiment, run_sweep, ExperimentReport, PlotKind, RunConfig, SweepAxis,
    SweepConfig,
};
use gtbo::GtboError;

#[derive(Parser)]
#[command(
    name = "gtbo",
    version,
    about = "Group-testing Bayesian optimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a configuration and write per-seed outputs.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        /// Output directory; overrides both the config and GTBO_OUTPUT_ROOT.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Seeds to run concurrently.
        #[arg(short, long)]
        jobs: Option<usize>,
    },
    /// Run the configuration once per value of a sweep axis.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        /// Overrides the axis of the `[sweep]` block.
        #[arg(long, requires = "values")]
        axis: Option<AxisArg>,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(short, long)]
        jobs: Option<usize>,
    },
    /// Render SVG plots from a results directory.
    Plot {
        /// A run directory, a seed directory, or a sweep directory.
        results: PathBuf,
        #[arg(short, long, value_enum, default_value = "marginals")]
        kind: KindArg,
        /// Where to write the SVG files (default: RESULTS/plots).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a configuration without running it.
    ValidateConfig {
        #[arg(short, long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    NoiseStd,
    AmbientDim,
    ActiveDim,
    MaxBatch,
    PriorQ,
    MaxAct,
    Particles,
    InactivePriorMu,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::NoiseStd => SweepAxis::NoiseStd,
            AxisArg::AmbientDim => SweepAxis::AmbientDim,
            AxisArg::ActiveDim => SweepAxis::ActiveDim,
            AxisArg::MaxBatch => SweepAxis::MaxBatch,
            AxisArg::PriorQ => SweepAxis::PriorQ,
            AxisArg::MaxAct => SweepAxis::MaxAct,
            AxisArg::Particles => SweepAxis::Particles,
            AxisArg::InactivePriorMu => SweepAxis::InactivePriorMu,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Marginals,
    Regret,
    Sensitivity,
    ActiveCount,
}

impl From<KindArg> for PlotKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Marginals => PlotKind::Marginals,
            KindArg::Regret => PlotKind::Regret,
            KindArg::Sensitivity => PlotKind::Sensitivity,
            KindArg::ActiveCount => PlotKind::ActiveCount,
        }
    }
}

fn load(
    path: &PathBuf,
    output: Option<PathBuf>,
    jobs: Option<usize>,
) -> Result<RunConfig, GtboError> {
    let mut cfg = RunConfig::load(path)?
        .with_env_output_root()
        .with_output_root(output);
    if let Some(j) = jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report_seeds(report: &ExperimentReport) {
    for o in &report.outcomes {
        match (&o.summary, &o.error) {
            (_, Some(e)) => println!("seed {}: FAILED ({e})", o.seed),
            (Some(s), None) => println!(
                "seed {}: active {:?} (fp {}, fn {}), {} evaluations, regret {}",
                o.seed,
                s.active_set,
                s.false_positives,
                s.false_negatives,
                s.evaluations,
                s.final_regret.map_or("n/a".into(), |r| format!("{r:.4e}"))
            ),
            (None, None) => println!(
                "seed {}: {} evaluations, regret {}",
                o.seed,
                o.trace.len(),
                o.trace
                    .final_regret()
                    .map_or("n/a".into(), |r| format!("{r:.4e}"))
            ),
        }
    }
}

fn execute(cli: Cli) -> Result<u8, GtboError> {
    match cli.command {
        Command::Run {
            config,
            output,
            jobs,
        } => {
            let cfg = load(&config, output, jobs)?;
            let report = run_experiment(&cfg)?;
            report_seeds(&report);
            println!("results in {}", report.output_dir.display());
            Ok(if report.failures().next().is_some() {
                3
            } else {
                0
            })
        }
        Command::Sweep {
            config,
            axis,
            values,
            output,
            jobs,
        } => {
            let mut cfg = load(&config, output, jobs)?;
            if let Some(values) = values {
                let axis = match axis {
                    Some(a) => a.into(),
                    None => cfg.sweep.as_ref().map(|s| s.axis).ok_or_else(|| {
                        GtboError::Config("--values needs --axis or a [sweep] block".into())
                    })?,
                };
                cfg.sweep = Some(SweepConfig { axis, values });
                cfg.validate()?;
            }
            let report = run_sweep(&cfg)?;
            for p in &report.points {
                let median = p
                    .aggregate
                    .median_iterations_to_full
                    .map_or("never".into(), |m| m.to_string());
                println!(
                    "{} = {}: median tests to full classification {median}",
                    report.axis, p.value
                );
            }
            println!("results in {}", cfg.output_dir.display());
            Ok(if report.failures().next().is_some() {
                3
            } else {
                0
            })
        }
        Command::Plot { results, kind, out } => {
            for f in plot(&results, kind.into(), out.as_deref())? {
                println!("{}", f.display());
            }
            Ok(0)
        }
        Command::ValidateConfig { config } => {
            let cfg = load(&config, None, None)?;
            println!(
                "ok: {} seeds, {} on {} in {} dimensions, output {}",
                cfg.seeds.len(),
                cfg.method.as_str(),
                cfg.benchmark.function,
                cfg.benchmark.ambient_dim,
                cfg.output_dir.display()
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
