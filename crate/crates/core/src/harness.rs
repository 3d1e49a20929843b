//! Sweeps over sample size or SNR, aggregation, CSV output and SVG plots.
//!
//! A sweep is a grid of cells (grid value x instance). Each cell draws its own
//! scenario from a seed mixed out of the master seed, the grid value and the
//! instance index, runs selection for every requested method and evaluates the
//! selected fit. Cells run on a bounded worker pool; records come back in
//! grid-major, instance-minor, method order regardless of scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Method, SolverSettings};
use crate::metrics::evaluate;
use crate::scenario::{generate_scenario, Dataset, GroundTruth, NoiseSpec, ScenarioConfig};
use crate::selection::{default_grid, select, SelectionEntry};

pub const DEFAULT_MASTER_SEED: u64 = 20_140_601;
pub const DEFAULT_INSTANCES: usize = 10;
pub const DEFAULT_CONSUMERS: usize = 500;
pub const DEFAULT_METHODS: [Method; 3] = [Method::Ridge, Method::Lasso, Method::Vg];

/// T/N ratios bracketing the sparse transition.
pub const SPARSE_RATIOS: [f64; 11] = [0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6];
/// T/N ratios bracketing the dense transitions.
pub const DENSE_RATIOS: [f64; 11] = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2];
/// SNR values in log10 units.
pub const SNR_GRID: [f64; 7] = [-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Samples,
    Snr,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Samples => "samples",
            SweepKind::Snr => "snr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub sweep_kind: SweepKind,
    pub n_consumers: usize,
    pub active_fraction: f64,
    /// T/N ratios for sample sweeps, log10 SNR values for SNR sweeps.
    pub grid: Vec<f64>,
    /// Training samples of every cell (SNR sweeps only).
    pub fixed_t: Option<usize>,
    /// Noise standard deviation (sample sweeps only).
    pub sigma_p: Option<f64>,
    pub n_instances: usize,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub settings: SolverSettings,
}

impl SweepSpec {
    /// The default sample sweep: sparse or dense grid depending on `active_fraction`.
    pub fn samples(n_consumers: usize, active_fraction: f64) -> Self {
        let grid = if active_fraction <= 0.25 { SPARSE_RATIOS.to_vec() } else { DENSE_RATIOS.to_vec() };
        SweepSpec {
            sweep_kind: SweepKind::Samples,
            n_consumers,
            active_fraction,
            grid,
            fixed_t: None,
            sigma_p: Some(1.0),
            n_instances: DEFAULT_INSTANCES,
            master_seed: DEFAULT_MASTER_SEED,
            methods: DEFAULT_METHODS.to_vec(),
            settings: SolverSettings::default(),
        }
    }

    /// The default SNR sweep: `T = 250` when sparse, `T = 475` when dense.
    pub fn snr(n_consumers: usize, active_fraction: f64) -> Self {
        let t = if active_fraction <= 0.25 { n_consumers / 2 } else { n_consumers * 19 / 20 };
        SweepSpec {
            sweep_kind: SweepKind::Snr,
            n_consumers,
            active_fraction,
            grid: SNR_GRID.to_vec(),
            fixed_t: Some(t),
            sigma_p: None,
            n_instances: DEFAULT_INSTANCES,
            master_seed: DEFAULT_MASTER_SEED,
            methods: DEFAULT_METHODS.to_vec(),
            settings: SolverSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_consumers == 0 {
            return bad("n_consumers must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.active_fraction) {
            return bad(format!("active_fraction must lie in [0, 1], got {}", self.active_fraction));
        }
        if self.grid.is_empty() {
            return bad("sweep grid is empty".into());
        }
        if self.grid.iter().any(|v| !v.is_finite()) || !self.grid.windows(2).all(|w| w[0] < w[1]) {
            return bad("sweep grid must be finite and strictly increasing".into());
        }
        if self.n_instances == 0 {
            return bad("n_instances must be positive".into());
        }
        if self.methods.is_empty() {
            return bad("no methods requested".into());
        }
        self.settings.validate()?;
        match self.sweep_kind {
            SweepKind::Samples => {
                match self.sigma_p {
                    Some(s) if s >= 0.0 && s.is_finite() => {}
                    _ => return bad("sample sweeps need a finite sigma_p >= 0".into()),
                }
                if let Some(&r) = self.grid.iter().find(|&&r| self.samples_for(r) < 2) {
                    return bad(format!("ratio {r} gives fewer than 2 samples"));
                }
            }
            SweepKind::Snr => match self.fixed_t {
                Some(t) if t >= 2 => {}
                _ => return bad("SNR sweeps need a fixed T >= 2".into()),
            },
        }
        Ok(())
    }

    fn samples_for(&self, ratio: f64) -> usize {
        (ratio * self.n_consumers as f64).round().max(0.0) as usize
    }

    fn scenario(&self, grid_value: f64, seed: u64) -> ScenarioConfig {
        let (t, noise) = match self.sweep_kind {
            SweepKind::Samples => (self.samples_for(grid_value), NoiseSpec::SigmaP(self.sigma_p.unwrap_or(1.0))),
            SweepKind::Snr => (self.fixed_t.unwrap_or(2), NoiseSpec::TargetSnr(grid_value)),
        };
        ScenarioConfig::new(self.n_consumers, t, self.active_fraction, noise, seed)
    }
}

/// One method on one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub method: Method,
    pub sweep_kind: SweepKind,
    pub n_consumers: usize,
    pub active_fraction: f64,
    pub grid_value: f64,
    #[serde(rename = "T")]
    pub t: usize,
    pub sigma_p: f64,
    pub instance_index: usize,
    pub seed: u64,
    pub selected_hyperparameter: f64,
    pub generalization_error: f64,
    pub oracle_generalization_error: f64,
    pub roc_auc: f64,
    pub reconstruction_error: f64,
    pub n_nonzero: usize,
    pub fit_milliseconds: f64,
    pub converged: bool,
    pub roc_auc_abs: f64,
    pub failed: bool,
}

/// Selection table rows of one method on one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace {
    pub method: Method,
    pub grid_value: f64,
    pub instance_index: usize,
    pub seed: u64,
    pub table: Vec<SelectionEntry>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    /// Filled only when traces were requested.
    pub traces: Vec<SelectionTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Upper bound on concurrently running cells.
    pub jobs: usize,
    /// Zero the timing column so output is byte-reproducible.
    pub deterministic: bool,
    /// Keep every selection table.
    pub traces: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { jobs: 1, deterministic: false, traces: false }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of a cell. Keyed by the grid value rather than its position, so a
/// cell keeps its data when the grid around it changes.
pub fn cell_seed(master_seed: u64, grid_value: f64, instance: usize) -> u64 {
    // Treat -0.0 as 0.0.
    let bits = if grid_value == 0.0 { 0 } else { grid_value.to_bits() };
    splitmix64(splitmix64(splitmix64(master_seed) ^ bits) ^ instance as u64)
}

/// Runs every (grid value, instance) cell of the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    Ok(run_sweep_with(spec, &RunOptions::default())?.records)
}

pub fn run_sweep_with(spec: &SweepSpec, options: &RunOptions) -> Result<SweepOutput> {
    spec.validate()?;
    let cells: Vec<(f64, usize)> = spec
        .grid
        .iter()
        .flat_map(|&g| (0..spec.n_instances).map(move |i| (g, i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?;
    let per_cell: Vec<(Vec<SweepRecord>, Vec<SelectionTrace>)> =
        pool.install(|| cells.par_iter().map(|&(g, i)| run_cell(spec, g, i, options)).collect());

    let mut out = SweepOutput::default();
    for (records, traces) in per_cell {
        out.records.extend(records);
        out.traces.extend(traces);
    }
    Ok(out)
}

fn run_cell(
    spec: &SweepSpec,
    grid_value: f64,
    instance: usize,
    options: &RunOptions,
) -> (Vec<SweepRecord>, Vec<SelectionTrace>) {
    let seed = cell_seed(spec.master_seed, grid_value, instance);
    let config = spec.scenario(grid_value, seed);
    let blank = |method: Method, sigma_p: f64| SweepRecord {
        method,
        sweep_kind: spec.sweep_kind,
        n_consumers: spec.n_consumers,
        active_fraction: spec.active_fraction,
        grid_value,
        t: config.n_samples,
        sigma_p,
        instance_index: instance,
        seed,
        selected_hyperparameter: f64::NAN,
        generalization_error: f64::NAN,
        oracle_generalization_error: f64::NAN,
        roc_auc: f64::NAN,
        reconstruction_error: f64::NAN,
        n_nonzero: 0,
        fit_milliseconds: 0.0,
        converged: false,
        roc_auc_abs: f64::NAN,
        failed: true,
    };

    let (train, val, truth) = match generate_scenario(&config) {
        Ok(data) => data,
        Err(_) => return (spec.methods.iter().map(|&m| blank(m, f64::NAN)).collect(), Vec::new()),
    };
    let mut records = Vec::with_capacity(spec.methods.len());
    let mut traces = Vec::new();
    for &method in &spec.methods {
        let mut record = blank(method, truth.sigma_p);
        let started = Instant::now();
        let outcome = fit_and_score(method, &train, &val, &truth, &spec.settings);
        let elapsed = started.elapsed().as_secs_f64() * 1e3;
        if let Ok((selection_best, table, report)) = outcome {
            record.selected_hyperparameter = selection_best.0;
            record.n_nonzero = selection_best.1;
            record.converged = selection_best.2;
            record.generalization_error = report.generalization_error;
            record.oracle_generalization_error = report.oracle_generalization_error;
            record.roc_auc = report.roc_auc;
            record.roc_auc_abs = report.roc_auc_abs;
            record.reconstruction_error = report.reconstruction_error;
            record.failed = false;
            if options.traces {
                traces.push(SelectionTrace { method, grid_value, instance_index: instance, seed, table });
            }
        }
        record.fit_milliseconds = if options.deterministic { 0.0 } else { elapsed };
        records.push(record);
    }
    (records, traces)
}

type Scored = ((f64, usize, bool), Vec<SelectionEntry>, crate::metrics::MetricReport);

fn fit_and_score(
    method: Method,
    train: &Dataset,
    val: &Dataset,
    truth: &GroundTruth,
    settings: &SolverSettings,
) -> Result<Scored> {
    let grid = default_grid(method, train)?;
    let selection = select(method, train, val, &grid, settings)?;
    let report = evaluate(&selection.best.alpha_hat, val, truth)?;
    let summary = (selection.best_hyperparameter, selection.best.n_nonzero(), selection.best.converged);
    Ok((summary, selection.table, report))
}

/// Median and nearest-rank quartiles of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

impl Band {
    /// NaN everywhere for an empty sample.
    pub fn of(values: &[f64]) -> Band {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return Band { median: f64::NAN, q25: f64::NAN, q75: f64::NAN };
        }
        v.sort_by(f64::total_cmp);
        Band { median: median_sorted(&v), q25: nearest_rank(&v, 25.0), q75: nearest_rank(&v, 75.0) }
    }
}

/// Middle value, or the mean of the middle pair for even lengths.
pub fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// The value at 1-based rank `ceil(p/100 * n)`, clamped to `[1, n]`.
pub fn nearest_rank(v: &[f64], p: f64) -> f64 {
    let n = v.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    v[rank.clamp(1, n) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub sweep_kind: SweepKind,
    pub grid_value: f64,
    pub n_records: usize,
    pub n_failed: usize,
    pub generalization_error: Band,
    pub oracle_generalization_error: Band,
    pub roc_auc: Band,
    pub roc_auc_abs: Band,
    pub reconstruction_error: Band,
    pub n_nonzero: Band,
    pub fit_milliseconds: Band,
}

/// Per (method, grid value) summaries over instances; failed records count
/// towards `n_failed` only. Ordered by grid value, then method.
pub fn aggregate(records: &[SweepRecord]) -> Result<Vec<Summary>> {
    if records.is_empty() {
        return Err(Error::Empty("no records to aggregate".into()));
    }
    let mut groups: BTreeMap<(u64, Method), Vec<&SweepRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((ordered_bits(r.grid_value), r.method)).or_default().push(r);
    }
    Ok(groups
        .into_values()
        .map(|group| {
            let ok: Vec<&SweepRecord> = group.iter().copied().filter(|r| !r.failed).collect();
            let band = |f: fn(&SweepRecord) -> f64| Band::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            Summary {
                method: group[0].method,
                sweep_kind: group[0].sweep_kind,
                grid_value: group[0].grid_value,
                n_records: group.len(),
                n_failed: group.len() - ok.len(),
                generalization_error: band(|r| r.generalization_error),
                oracle_generalization_error: band(|r| r.oracle_generalization_error),
                roc_auc: band(|r| r.roc_auc),
                roc_auc_abs: band(|r| r.roc_auc_abs),
                reconstruction_error: band(|r| r.reconstruction_error),
                n_nonzero: band(|r| r.n_nonzero as f64),
                fit_milliseconds: band(|r| r.fit_milliseconds),
            }
        })
        .collect())
}

/// Bit pattern whose unsigned order matches the numeric order of finite floats.
fn ordered_bits(x: f64) -> u64 {
    let b = if x == 0.0 { 0 } else { x.to_bits() };
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub const RECORD_COLUMNS: [&str; 19] = [
    "method",
    "sweep_kind",
    "n_consumers",
    "active_fraction",
    "grid_value",
    "T",
    "sigma_p",
    "instance_index",
    "seed",
    "selected_hyperparameter",
    "generalization_error",
    "oracle_generalization_error",
    "roc_auc",
    "reconstruction_error",
    "n_nonzero",
    "fit_milliseconds",
    "converged",
    "roc_auc_abs",
    "failed",
];

pub fn write_csv(records: &[SweepRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record([
            r.method.name().to_string(),
            r.sweep_kind.name().to_string(),
            r.n_consumers.to_string(),
            format_float(r.active_fraction),
            format_float(r.grid_value),
            r.t.to_string(),
            format_float(r.sigma_p),
            r.instance_index.to_string(),
            r.seed.to_string(),
            format_float(r.selected_hyperparameter),
            format_float(r.generalization_error),
            format_float(r.oracle_generalization_error),
            format_float(r.roc_auc),
            format_float(r.reconstruction_error),
            r.n_nonzero.to_string(),
            format_float(r.fit_milliseconds),
            r.converged.to_string(),
            format_float(r.roc_auc_abs),
            r.failed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let records = reader.deserialize().collect::<std::result::Result<Vec<SweepRecord>, _>>()?;
    Ok(records)
}

pub fn write_summary_csv(summaries: &[Summary], path: &Path) -> Result<()> {
    let metrics = [
        "generalization_error",
        "oracle_generalization_error",
        "roc_auc",
        "roc_auc_abs",
        "reconstruction_error",
        "n_nonzero",
        "fit_milliseconds",
    ];
    let mut header = vec!["method".to_string(), "sweep_kind".into(), "grid_value".into(), "n_records".into(), "n_failed".into()];
    for m in metrics {
        for stat in ["median", "q25", "q75"] {
            header.push(format!("{m}_{stat}"));
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    for s in summaries {
        let mut row = vec![
            s.method.name().to_string(),
            s.sweep_kind.name().to_string(),
            format_float(s.grid_value),
            s.n_records.to_string(),
            s.n_failed.to_string(),
        ];
        for b in [
            s.generalization_error,
            s.oracle_generalization_error,
            s.roc_auc,
            s.roc_auc_abs,
            s.reconstruction_error,
            s.n_nonzero,
            s.fit_milliseconds,
        ] {
            row.extend([format_float(b.median), format_float(b.q25), format_float(b.q75)]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_selection_csv(traces: &[SelectionTrace], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "method",
        "grid_value",
        "instance_index",
        "seed",
        "hyperparameter",
        "validation_error",
        "n_nonzero",
        "converged",
        "failure",
    ])?;
    for tr in traces {
        for e in &tr.table {
            w.write_record([
                tr.method.name().to_string(),
                format_float(tr.grid_value),
                tr.instance_index.to_string(),
                tr.seed.to_string(),
                format_float(e.hyperparameter),
                format_float(e.validation_error),
                e.n_nonzero.to_string(),
                e.converged.to_string(),
                e.failure.clone().unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `records.csv` -> `records.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Writes the sweep parameters, crate version and a timestamp next to `csv_path`. The
/// timestamp is the Unix epoch when `deterministic` is set.
pub fn write_meta(spec: &SweepSpec, csv_path: &Path, deterministic: bool) -> Result<PathBuf> {
    let timestamp = if deterministic {
        chrono::DateTime::<chrono::Utc>::UNIX_EPOCH
    } else {
        chrono::Utc::now()
    };
    let meta = serde_json::json!({
        "spec": spec,
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp": timestamp.to_rfc3339(),
    });
    let path = meta_path(csv_path);
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(path)
}

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 220.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 110.0;
const MARGIN_T: f64 = 30.0;
const GAP: f64 = 60.0;
const COLORS: [(&str, &str); 4] = [("ols", "#7f7f7f"), ("ridge", "#1f77b4"), ("lasso", "#2ca02c"), ("vg", "#d62728")];

fn color(method: Method) -> &'static str {
    COLORS.iter().find(|(m, _)| *m == method.name()).map(|c| c.1).unwrap_or("#000000")
}

/// Renders one SVG per sweep kind found in `summaries`: generalization error
/// (log y, with the oracle as 'Opt'), AUC (linear y) and reconstruction error
/// (log y) against the grid variable, median lines with quartile bands.
pub fn render_plots(summaries: &[Summary], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if summaries.is_empty() {
        return Err(Error::Empty("nothing to plot".into()));
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for kind in [SweepKind::Samples, SweepKind::Snr] {
        let subset: Vec<&Summary> = summaries.iter().filter(|s| s.sweep_kind == kind).collect();
        if subset.is_empty() {
            continue;
        }
        let path = out_dir.join(format!("sweep_{}.svg", kind.name()));
        fs::write(&path, render_svg(&subset, kind))?;
        written.push(path);
    }
    Ok(written)
}

struct Panel {
    title: &'static str,
    log: bool,
    pick: fn(&Summary) -> Band,
}

fn render_svg(summaries: &[&Summary], kind: SweepKind) -> String {
    let panels = [
        Panel { title: "Generalization error", log: true, pick: |s| s.generalization_error },
        Panel { title: "ROC AUC", log: false, pick: |s| s.roc_auc },
        Panel { title: "Reconstruction error", log: true, pick: |s| s.reconstruction_error },
    ];
    let x_label = match kind {
        SweepKind::Samples => "T/N",
        SweepKind::Snr => "SNR (log10)",
    };
    let mut methods: Vec<Method> = summaries.iter().map(|s| s.method).collect();
    methods.sort();
    methods.dedup();
    let xs: Vec<f64> = summaries.iter().map(|s| s.grid_value).collect();
    let (x0, x1) = padded_range(&xs, false);

    let width = MARGIN_L + PANEL_W + MARGIN_R;
    let height = MARGIN_T + 3.0 * PANEL_H + 2.0 * GAP + 50.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    for (k, panel) in panels.iter().enumerate() {
        let top = MARGIN_T + k as f64 * (PANEL_H + GAP);
        let mut ys: Vec<f64> = Vec::new();
        for s in summaries {
            let b = (panel.pick)(s);
            ys.extend([b.median, b.q25, b.q75]);
            if k == 0 {
                ys.push(s.oracle_generalization_error.median);
            }
        }
        if !panel.log {
            ys.extend([0.0, 1.0]);
        }
        let ys: Vec<f64> = ys.into_iter().filter(|y| y.is_finite() && (!panel.log || *y > 0.0)).collect();
        let (y0, y1) = padded_range(&ys, panel.log);
        let tx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * PANEL_W;
        let ty = |y: f64| {
            let (v, lo, hi) = if panel.log { (y.log10(), y0.log10(), y1.log10()) } else { (y, y0, y1) };
            top + PANEL_H - (v - lo) / (hi - lo) * PANEL_H
        };
        let visible = |y: f64| y.is_finite() && (!panel.log || y > 0.0);

        let _ = writeln!(
            svg,
            r##"<rect x="{MARGIN_L}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#333"/>"##
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-weight="bold">{}</text>"#,
            MARGIN_L + PANEL_W / 2.0,
            top - 8.0,
            panel.title
        );
        for (value, label) in axis_ticks(y0, y1, panel.log) {
            let y = ty(value);
            let _ = writeln!(
                svg,
                r##"<line x1="{MARGIN_L}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{label}</text>"##,
                MARGIN_L + PANEL_W,
                MARGIN_L - 6.0,
                y + 4.0
            );
        }
        for (value, label) in axis_ticks(x0, x1, false) {
            let x = tx(value);
            let _ = writeln!(
                svg,
                r#"<text x="{x:.2}" y="{}" text-anchor="middle">{label}</text>"#,
                top + PANEL_H + 16.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
            MARGIN_L + PANEL_W / 2.0,
            top + PANEL_H + 34.0
        );

        let mut legend_row = 0;
        for &method in &methods {
            let mut pts: Vec<&Summary> = summaries.iter().copied().filter(|s| s.method == method).collect();
            pts.sort_by(|a, b| a.grid_value.total_cmp(&b.grid_value));
            let band: Vec<(f64, Band)> = pts.iter().map(|s| (s.grid_value, (panel.pick)(s))).collect();
            let lower: Vec<String> = band
                .iter()
                .filter(|(_, b)| visible(b.q25) && visible(b.q75))
                .map(|(x, b)| format!("{:.2},{:.2}", tx(*x), ty(b.q25)))
                .collect();
            let upper: Vec<String> = band
                .iter()
                .rev()
                .filter(|(_, b)| visible(b.q25) && visible(b.q75))
                .map(|(x, b)| format!("{:.2},{:.2}", tx(*x), ty(b.q75)))
                .collect();
            if lower.len() > 1 {
                let _ = writeln!(
                    svg,
                    r#"<polygon points="{} {}" fill="{}" fill-opacity="0.15" stroke="none"/>"#,
                    lower.join(" "),
                    upper.join(" "),
                    color(method)
                );
            }
            let line: Vec<String> = band
                .iter()
                .filter(|(_, b)| visible(b.median))
                .map(|(x, b)| format!("{:.2},{:.2}", tx(*x), ty(b.median)))
                .collect();
            polyline(&mut svg, &line, color(method), false);
            legend(&mut svg, top, legend_row, method.name(), color(method), false);
            legend_row += 1;
        }
        if k == 0 {
            // The oracle does not depend on the method; take the first one's.
            let first = methods[0];
            let mut pts: Vec<&Summary> = summaries.iter().copied().filter(|s| s.method == first).collect();
            pts.sort_by(|a, b| a.grid_value.total_cmp(&b.grid_value));
            let line: Vec<String> = pts
                .iter()
                .filter(|s| visible(s.oracle_generalization_error.median))
                .map(|s| format!("{:.2},{:.2}", tx(s.grid_value), ty(s.oracle_generalization_error.median)))
                .collect();
            polyline(&mut svg, &line, "#000000", true);
            legend(&mut svg, top, legend_row, "Opt", "#000000", true);
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn polyline(svg: &mut String, points: &[String], color: &str, dashed: bool) {
    if points.is_empty() {
        return;
    }
    let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
        points.join(" ")
    );
}

fn legend(svg: &mut String, top: f64, row: usize, label: &str, color: &str, dashed: bool) {
    let x = MARGIN_L + PANEL_W + 12.0;
    let y = top + 14.0 + row as f64 * 18.0;
    let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
    let _ = writeln!(
        svg,
        r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{label}</text>"#,
        x + 24.0,
        x + 30.0,
        y + 4.0
    );
}

fn padded_range(values: &[f64], log: bool) -> (f64, f64) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return if log { (0.1, 10.0) } else { (0.0, 1.0) };
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if log {
        let (a, b) = (lo.log10(), hi.log10());
        let pad = ((b - a) * 0.05).max(0.1);
        (10f64.powf(a - pad), 10f64.powf(b + pad))
    } else if hi > lo {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn axis_ticks(lo: f64, hi: f64, log: bool) -> Vec<(f64, String)> {
    if log {
        let (a, b) = (lo.log10().ceil() as i32, hi.log10().floor() as i32);
        let step = ((b - a) / 6).max(1);
        return (a..=b).step_by(step as usize).map(|e| (10f64.powi(e), format!("1e{e}"))).collect();
    }
    let raw = (hi - lo) / 6.0;
    let magnitude = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * magnitude).find(|s| *s >= raw).unwrap_or(raw);
    let mut ticks = Vec::new();
    let mut v = (lo / step).ceil() * step;
    while v <= hi + 1e-12 * step {
        let shown = if v.abs() < 1e-12 * step { 0.0 } else { v };
        ticks.push((shown, format!("{}", (shown * 1e6).round() / 1e6)));
        v += step;
    }
    ticks
}
