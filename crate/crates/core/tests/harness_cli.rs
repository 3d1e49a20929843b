use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use elasticity::harness::{
    aggregate, read_csv, run_sweep, run_sweep_with, RunOptions, SweepSpec, RECORD_COLUMNS,
};
use elasticity::scenario::generate_scenario;
use elasticity::selection::{default_grid, select};
use elasticity::{Method, NoiseSpec, ScenarioConfig, SolverSettings};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elasticity")).args(args).output().expect("binary runs")
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_spec() -> SweepSpec {
    SweepSpec {
        grid: vec![0.5, 1.0, 1.5],
        n_instances: 4,
        methods: vec![Method::Ridge, Method::Lasso, Method::Vg],
        ..SweepSpec::samples(40, 0.2)
    }
}

#[test]
fn sweep_writes_records_summary_meta_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = cli(&[
        "sweep-samples", "--n", "30", "--active-fraction", "0.2", "--grid", "0.4,0.8", "--instances", "2",
        "--methods", "ridge,vg", "--seed", "3", "--out", path_arg(&out), "--verbose", "--jobs", "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let text = fs::read_to_string(out.join("records.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, RECORD_COLUMNS.join(","));
    let records = read_csv(&out.join("records.csv")).unwrap();
    assert_eq!(records.len(), 2 * 2 * 2);
    // Grid-major, instance-minor, method order.
    let order: Vec<(f64, usize, Method)> = records.iter().map(|r| (r.grid_value, r.instance_index, r.method)).collect();
    assert_eq!(order[0], (0.4, 0, Method::Ridge));
    assert_eq!(order[1], (0.4, 0, Method::Vg));
    assert_eq!(order[2], (0.4, 1, Method::Ridge));
    assert_eq!(order[7], (0.8, 1, Method::Vg));
    assert!(records.iter().all(|r| r.n_consumers == 30 && !r.failed));
    assert_eq!(records[0].t, 12);
    // Floats carry 17 significant digits.
    let first_row = text.lines().nth(1).unwrap();
    assert!(first_row.contains("4.0000000000000002e-1"));

    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("records.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["spec"]["n_consumers"], 30);
    assert_eq!(meta["spec"]["master_seed"], 3);
    assert!(meta["version"].is_string() && meta["timestamp"].is_string());

    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 2);
    assert!(summary.lines().next().unwrap().contains("generalization_error_median"));
    let selection = fs::read_to_string(out.join("selection.csv")).unwrap();
    // 50 ridge penalties and 25 gammas per cell.
    assert_eq!(selection.lines().count(), 1 + 4 * (50 + 25));
    let svg = fs::read_to_string(out.join("sweep_samples.svg")).unwrap();
    assert!(svg.contains("Generalization error") && svg.contains("Reconstruction error"));
}

#[test]
fn plot_rebuilds_svg_from_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = cli(&[
        "sweep-snr", "--n", "30", "--active-fraction", "0.2", "--grid", "-1,0,1", "--t", "20", "--instances", "1",
        "--methods", "ridge", "--out", path_arg(&out), "--deterministic",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let svg = out.join("sweep_snr.svg");
    fs::remove_file(&svg).unwrap();
    let elsewhere = dir.path().join("plots");
    let o = cli(&["plot", "--input", path_arg(&out.join("records.csv")), "--out", path_arg(&elsewhere)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(elsewhere.join("sweep_snr.svg").exists());
    let records = read_csv(&out.join("records.csv")).unwrap();
    assert!(records.iter().all(|r| r.t == 20 && r.fit_milliseconds == 0.0));
    // sigma_p follows the target SNR: ten times smaller per SNR unit.
    assert!((records[0].sigma_p / records[2].sigma_p - 100.0).abs() < 1e-9);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = dir.path().join("sweep.conf");
    fs::write(
        &config,
        format!(
            "# small run\nn = 25\nactive_fraction = 0.2\ngrid = 0.6\ninstances = 2\nmethods = ridge\nout = {}\ndeterministic = true\n",
            out.display()
        ),
    )
    .unwrap();
    let o = cli(&["sweep-samples", "--config", path_arg(&config), "--n", "35"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = read_csv(&out.join("records.csv")).unwrap();
    assert_eq!(records.len(), 2);
    assert!(records.iter().all(|r| r.n_consumers == 35 && r.t == 21 && r.fit_milliseconds == 0.0));
}

#[test]
fn exit_codes() {
    assert_eq!(cli(&["sweep-samples", "--jobs", "zero"]).status.code(), Some(1));
    assert_eq!(cli(&["sweep-samples", "--grid", "0.001", "--n", "10"]).status.code(), Some(1));
    assert_eq!(cli(&["single", "--sigma-p", "1", "--snr", "0"]).status.code(), Some(1));
    assert_eq!(cli(&["plot", "--input", "/definitely/missing.csv"]).status.code(), Some(2));
    // OLS cannot run with fewer samples than consumers.
    assert_eq!(cli(&["single", "--n", "20", "--t", "10", "--methods", "ols"]).status.code(), Some(2));
    assert_eq!(cli(&["--version"]).status.code(), Some(0));
}

#[test]
fn single_prints_one_report_per_method() {
    let o = cli(&["single", "--n", "40", "--t", "60", "--active-fraction", "0.25", "--methods", "ols,lasso", "--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<serde_json::Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["method"], "ols");
    assert_eq!(lines[1]["method"], "lasso");
    let auc = lines[1]["report"]["roc_auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
}

#[test]
fn library_sweeps_are_reproducible_across_worker_counts() {
    let spec = small_spec();
    let serial = run_sweep_with(&spec, &RunOptions { jobs: 1, deterministic: true, traces: false }).unwrap();
    let parallel = run_sweep_with(&spec, &RunOptions { jobs: 4, deterministic: true, traces: false }).unwrap();
    assert_eq!(serial.records, parallel.records);
    assert_eq!(serial.records.len(), 3 * 4 * 3);
    let seeds: std::collections::HashSet<u64> = serial.records.iter().map(|r| r.seed).collect();
    assert_eq!(seeds.len(), 3 * 4);
}

#[test]
fn adding_grid_points_keeps_existing_cells() {
    let spec = SweepSpec { grid: vec![1.0], n_instances: 2, methods: vec![Method::Ridge], ..SweepSpec::samples(30, 0.2) };
    let wider = SweepSpec { grid: vec![0.5, 1.0, 1.5], ..spec.clone() };
    let narrow = run_sweep(&spec).unwrap();
    let wide = run_sweep(&wider).unwrap();
    for r in &narrow {
        let twin = wide.iter().find(|w| w.grid_value == 1.0 && w.instance_index == r.instance_index).unwrap();
        assert_eq!(r.seed, twin.seed);
        assert_eq!(r.generalization_error, twin.generalization_error);
    }
}

#[test]
fn oracle_lower_bounds_learned_models() {
    // Validation sets at N = 40 are small enough for selection to overfit them.
    let spec = SweepSpec { grid: vec![0.5, 1.0, 1.5], n_instances: 4, ..SweepSpec::samples(100, 0.1) };
    let records = run_sweep(&spec).unwrap();
    let eligible: Vec<_> = records.iter().filter(|r| r.grid_value >= 0.5 && !r.failed).collect();
    let dominated = eligible.iter().filter(|r| r.oracle_generalization_error <= r.generalization_error).count();
    assert!(dominated * 10 >= eligible.len() * 9, "{dominated} of {}", eligible.len());
    let summaries = aggregate(&records).unwrap();
    assert_eq!(summaries.len(), 3 * 3);
}

#[test]
fn selected_gamma_is_inside_the_grid() {
    let mut inside = 0;
    for seed in 0..10 {
        let config = ScenarioConfig::new(500, 250, 0.1, NoiseSpec::SigmaP(1.0), 9_000 + seed);
        let (train, val, _) = generate_scenario(&config).unwrap();
        let grid = default_grid(Method::Vg, &train).unwrap();
        let s = select(Method::Vg, &train, &val, &grid, &SolverSettings::default()).unwrap();
        let (lo, hi) = (grid.values()[0], *grid.values().last().unwrap());
        inside += usize::from(s.best_hyperparameter > lo && s.best_hyperparameter < hi);
    }
    assert!(inside >= 8, "{inside} of 10");
}
