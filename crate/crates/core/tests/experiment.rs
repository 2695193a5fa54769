use std::fs;
use std::path::Path;

use gtbo::experiment::{
    plot, run_experiment, run_sweep, PlotKind, RunConfig, MARGINALS_FILE, SUMMARY_FILE, SWEEP_FILE,
    TESTS_FILE, TRACE_FILE,
};

fn config(dir: &Path, extra: &str) -> RunConfig {
    let text = format!(
        r#"
        seeds = [0, 1]
        output_dir = "{}"
        [benchmark]
        function = "levy2"
        ambient_dim = 20
        noise_std = 0.01
        [gt]
        particles = 2000
        budget = 60
        [bo]
        total_budget = 90
        [bo.acquisition]
        candidates = 128
        refine_top = 3
        [bo.gp]
        starts = 2
        {extra}
        "#,
        dir.display()
    );
    RunConfig::from_toml_str(&text).unwrap()
}

fn schema() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas/summary.schema.json");
    let schema: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn assert_valid(path: &Path) {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let errors: Vec<String> = schema().iter_errors(&v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{}: {errors:?}", path.display());
}

#[test]
fn summaries_validate_against_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let report = run_experiment(&config(tmp.path(), "")).unwrap();
    for o in &report.outcomes {
        assert_valid(&o.dir.join(SUMMARY_FILE));
        let s = o.summary.as_ref().unwrap();
        assert_eq!(s.evaluations, 90);
        assert!(s.final_regret.unwrap() >= 0.0);
        assert_eq!(
            s.false_positives + s.true_active.len(),
            s.active_set.len() + s.false_negatives
        );
    }

    // failed runs keep a schema-valid summary too
    let failing = tempfile::tempdir().unwrap();
    let mut cfg = config(failing.path(), "");
    cfg.benchmark.fail_after = Some(40);
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.failures().count(), 2);
    assert_valid(&report.outcomes[0].dir.join(SUMMARY_FILE));

    // a schema violation is detected
    let mut v: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(report.outcomes[0].dir.join(SUMMARY_FILE)).unwrap(),
    )
    .unwrap();
    v["status"] = "unknown".into();
    assert!(!schema().is_valid(&v));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&config(a.path(), "")).unwrap();
    run_experiment(&config(b.path(), "")).unwrap();
    for seed in ["seed_0", "seed_1"] {
        for f in [MARGINALS_FILE, TRACE_FILE, TESTS_FILE, SUMMARY_FILE] {
            let x = fs::read(a.path().join(seed).join(f)).unwrap();
            let y = fs::read(b.path().join(seed).join(f)).unwrap();
            assert!(x == y, "{seed}/{f} differs");
        }
    }
    // different seeds give different runs
    let x = fs::read(a.path().join("seed_0").join(TRACE_FILE)).unwrap();
    let y = fs::read(a.path().join("seed_1").join(TRACE_FILE)).unwrap();
    assert_ne!(x, y);
}

#[test]
fn plots_render_from_run_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let gtbo_dir = tmp.path().join("gtbo");
    let rs_dir = tmp.path().join("random");
    run_experiment(&config(&gtbo_dir, "")).unwrap();
    let mut rs = config(&rs_dir, "");
    rs.method = gtbo::experiment::Method::RandomSearch;
    run_experiment(&rs).unwrap();

    let files = plot(&gtbo_dir, PlotKind::Marginals, None).unwrap();
    assert_eq!(files.len(), 2);
    let first = fs::read(&files[0]).unwrap();
    plot(&gtbo_dir, PlotKind::Marginals, None).unwrap();
    assert_eq!(first, fs::read(&files[0]).unwrap());
    assert!(String::from_utf8(first).unwrap().contains("#2ca02c"));

    plot(&gtbo_dir, PlotKind::ActiveCount, None).unwrap();
    let out = tmp.path().join("figs");
    let regret = plot(tmp.path(), PlotKind::Regret, Some(&out)).unwrap();
    let svg = fs::read_to_string(&regret[0]).unwrap();
    assert!(svg.contains("gtbo (n=2)") && svg.contains("random (n=2)"));
    // random search has no marginals to draw
    assert!(plot(&rs_dir, PlotKind::Marginals, None).is_err());
    assert!(plot(&gtbo_dir, PlotKind::Sensitivity, None).is_err());
}

#[test]
fn sweep_writes_csv_and_sensitivity_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "[sweep]\naxis = \"active_dim\"\nvalues = [1, 2]",
    );
    let mut cfg = cfg;
    cfg.bo.total_budget = 0;
    let report = run_sweep(&cfg).unwrap();
    assert_eq!(report.points.len(), 2);
    assert!(tmp
        .path()
        .join("active_dim_1/seed_0")
        .join(MARGINALS_FILE)
        .is_file());
    let csv = fs::read_to_string(tmp.path().join(SWEEP_FILE)).unwrap();
    assert!(csv.starts_with("axis,value,iteration,correct_pct\n"));
    assert!(csv.lines().skip(1).all(|l| l.starts_with("active_dim,")));
    let files = plot(tmp.path(), PlotKind::Sensitivity, None).unwrap();
    assert!(fs::read_to_string(&files[0])
        .unwrap()
        .contains("active_dim = 2"));
}
