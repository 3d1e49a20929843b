//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags, bad config values,
//! invalid sweep specs), 2 when a run fails.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::estimators::{Method, SolverSettings};
use crate::harness::{
    aggregate, read_csv, render_plots, run_sweep_with, write_csv, write_meta, write_selection_csv, write_summary_csv,
    RunOptions, SweepKind, SweepSpec, DEFAULT_CONSUMERS, DEFAULT_INSTANCES, DEFAULT_MASTER_SEED,
};
use crate::metrics::evaluate;
use crate::scenario::{generate_scenario, NoiseSpec, ScenarioConfig};
use crate::selection::{default_grid, select};

#[derive(Debug, Parser)]
#[command(name = "elasticity", version, about = "Price elasticity estimation from aggregate demand")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one scenario and print the metrics of each method as JSON.
    Single(SingleArgs),
    /// Sweep the training-set size T = round(ratio * N).
    SweepSamples(SweepArgs),
    /// Sweep the signal-to-noise ratio (log10 units) at fixed T.
    SweepSnr(SweepArgs),
    /// Render plots from an existing records CSV.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct Shared {
    /// Number of consumers N.
    #[arg(long)]
    n: Option<usize>,
    /// Fraction of consumers with nonzero elasticity.
    #[arg(long)]
    active_fraction: Option<f64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of ols, ridge, lasso, vg.
    #[arg(long)]
    methods: Option<String>,
    /// Plain `key = value` file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SingleArgs {
    #[command(flatten)]
    shared: Shared,
    /// Training samples T.
    #[arg(long)]
    t: Option<usize>,
    /// Noise standard deviation.
    #[arg(long, conflicts_with = "snr")]
    sigma_p: Option<f64>,
    /// Target SNR in log10 units, instead of --sigma-p.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    shared: Shared,
    /// Comma-separated grid: T/N ratios or SNR values.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Noise standard deviation (sample sweeps).
    #[arg(long)]
    sigma_p: Option<f64>,
    /// Fixed training samples T (SNR sweeps).
    #[arg(long)]
    t: Option<usize>,
    /// Instances per grid value.
    #[arg(long)]
    instances: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Maximum number of cells run at once.
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write every selection table.
    #[arg(long)]
    verbose: bool,
    /// Zero timings and timestamps so repeated runs are byte-identical.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Records CSV written by a sweep.
    #[arg(long)]
    input: PathBuf,
    /// Output directory; defaults to the directory of the input.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(msg) => Failure::Usage(msg),
            other => Failure::Runtime(other),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Single(a) => run_single(a),
        Command::SweepSamples(a) => run_sweep_command(a, SweepKind::Samples),
        Command::SweepSnr(a) => run_sweep_command(a, SweepKind::Snr),
        Command::Plot(a) => run_plot(a),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Command-line values layered over a config file.
struct Settings {
    config: HashMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Outcome<Self> {
        let config = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", p.display())))?;
                parse_config(&text).map_err(Failure::Usage)?
            }
            None => HashMap::new(),
        };
        Ok(Settings { config })
    }

    fn get<V: FromStr>(&self, cli: Option<V>, key: &str) -> Outcome<Option<V>> {
        if cli.is_some() {
            return Ok(cli);
        }
        match self.config.get(key) {
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Failure::Usage(format!("config value for '{key}' is invalid: {raw}"))),
            None => Ok(None),
        }
    }

    fn flag(&self, cli: bool, key: &str) -> Outcome<bool> {
        Ok(cli || self.get::<bool>(None, key)?.unwrap_or(false))
    }
}

const CONFIG_KEYS: [&str; 13] = [
    "n",
    "active-fraction",
    "seed",
    "methods",
    "grid",
    "sigma-p",
    "snr",
    "t",
    "instances",
    "out",
    "jobs",
    "verbose",
    "deterministic",
];

/// `key = value` lines; `#` starts a comment. Underscores in keys read as dashes.
fn parse_config(text: &str) -> std::result::Result<HashMap<String, String>, String> {
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {} is not `key = value`", lineno + 1))?;
        let key = key.trim().replace('_', "-");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(format!("unknown config key '{key}' on line {}", lineno + 1));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

fn parse_list<V: FromStr>(raw: &str, what: &str) -> Outcome<Vec<V>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Failure::Usage(format!("invalid {what} '{s}'"))))
        .collect()
}

fn methods(settings: &Settings, shared: &Shared, default: &[Method]) -> Outcome<Vec<Method>> {
    match settings.get::<String>(shared.methods.clone(), "methods")? {
        Some(raw) => {
            let list: Vec<Method> = parse_list(&raw, "method")?;
            if list.is_empty() {
                return Err(Failure::Usage("--methods is empty".into()));
            }
            Ok(list)
        }
        None => Ok(default.to_vec()),
    }
}

fn run_single(a: SingleArgs) -> Outcome<()> {
    let settings = Settings::load(a.shared.config.as_deref())?;
    let n = settings.get(a.shared.n, "n")?.unwrap_or(DEFAULT_CONSUMERS);
    let f = settings.get(a.shared.active_fraction, "active-fraction")?.unwrap_or(0.1);
    let t = settings.get(a.t, "t")?.unwrap_or(n / 2);
    let seed = settings.get(a.shared.seed, "seed")?.unwrap_or(DEFAULT_MASTER_SEED);
    let noise = match (a.sigma_p, a.snr) {
        (Some(s), _) => NoiseSpec::SigmaP(s),
        (None, Some(snr)) => NoiseSpec::TargetSnr(snr),
        (None, None) => match (settings.get::<f64>(None, "sigma-p")?, settings.get::<f64>(None, "snr")?) {
            (Some(_), Some(_)) => return Err(Failure::Usage("config sets both sigma-p and snr".into())),
            (Some(s), None) => NoiseSpec::SigmaP(s),
            (None, Some(snr)) => NoiseSpec::TargetSnr(snr),
            (None, None) => NoiseSpec::SigmaP(1.0),
        },
    };
    let methods = methods(&settings, &a.shared, &crate::harness::DEFAULT_METHODS)?;

    let config = ScenarioConfig::new(n, t, f, noise, seed);
    let (train, val, truth) = generate_scenario(&config)?;
    let solver = SolverSettings::default();
    for method in methods {
        let grid = default_grid(method, &train)?;
        let selection = select(method, &train, &val, &grid, &solver)?;
        let report = evaluate(&selection.best.alpha_hat, &val, &truth)?;
        let line = serde_json::json!({
            "method": method,
            "selected_hyperparameter": selection.best_hyperparameter,
            "n_nonzero": selection.best.n_nonzero(),
            "report": report,
        });
        println!("{line}");
    }
    Ok(())
}

fn run_sweep_command(a: SweepArgs, kind: SweepKind) -> Outcome<()> {
    let settings = Settings::load(a.shared.config.as_deref())?;
    let n = settings.get(a.shared.n, "n")?.unwrap_or(DEFAULT_CONSUMERS);
    let f = settings.get(a.shared.active_fraction, "active-fraction")?.unwrap_or(0.1);
    let mut spec = match kind {
        SweepKind::Samples => SweepSpec::samples(n, f),
        SweepKind::Snr => SweepSpec::snr(n, f),
    };
    if let Some(raw) = settings.get::<String>(a.grid.clone(), "grid")? {
        spec.grid = parse_list(&raw, "grid value")?;
    }
    match kind {
        SweepKind::Samples => {
            if let Some(s) = settings.get(a.sigma_p, "sigma-p")? {
                spec.sigma_p = Some(s);
            }
        }
        SweepKind::Snr => {
            if let Some(t) = settings.get(a.t, "t")? {
                spec.fixed_t = Some(t);
            }
        }
    }
    spec.n_instances = settings.get(a.instances, "instances")?.unwrap_or(DEFAULT_INSTANCES);
    spec.master_seed = settings.get(a.shared.seed, "seed")?.unwrap_or(DEFAULT_MASTER_SEED);
    spec.methods = methods(&settings, &a.shared, &spec.methods)?;
    spec.validate()?;

    let jobs = settings
        .get(a.jobs, "jobs")?
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let options = RunOptions {
        jobs,
        deterministic: settings.flag(a.deterministic, "deterministic")?,
        traces: settings.flag(a.verbose, "verbose")?,
    };
    let out = settings.get::<PathBuf>(a.out.clone(), "out")?.unwrap_or_else(|| PathBuf::from("results"));
    fs::create_dir_all(&out).map_err(|e| Failure::Runtime(e.into()))?;

    let output = run_sweep_with(&spec, &options)?;
    let records_path = out.join("records.csv");
    write_csv(&output.records, &records_path)?;
    write_meta(&spec, &records_path, options.deterministic)?;
    let summaries = aggregate(&output.records)?;
    write_summary_csv(&summaries, &out.join("summary.csv"))?;
    if options.traces {
        write_selection_csv(&output.traces, &out.join("selection.csv"))?;
    }
    let plots = render_plots(&summaries, &out)?;

    let failed = output.records.iter().filter(|r| r.failed).count();
    println!(
        "{} records ({failed} failed) -> {}; plots: {}",
        output.records.len(),
        records_path.display(),
        plots.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
    );
    Ok(())
}

fn run_plot(a: PlotArgs) -> Outcome<()> {
    let records = read_csv(&a.input)?;
    let summaries = aggregate(&records)?;
    let out = a
        .out
        .unwrap_or_else(|| a.input.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")));
    for p in render_plots(&summaries, &out)? {
        println!("{}", p.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let map = parse_config("# comment\nn = 40\nactive_fraction=0.2  # trailing\n\ngrid = 0.3, 0.5\n").unwrap();
        assert_eq!(map["n"], "40");
        assert_eq!(map["active-fraction"], "0.2");
        assert_eq!(map["grid"], "0.3, 0.5");
        assert!(parse_config("bogus = 1").is_err());
        assert!(parse_config("n 40").is_err());
    }

    #[test]
    fn command_line_beats_config() {
        let settings = Settings { config: parse_config("n = 40\nseed = 3").unwrap() };
        assert_eq!(settings.get(Some(10usize), "n").ok().flatten(), Some(10));
        assert_eq!(settings.get::<usize>(None, "n").ok().flatten(), Some(40));
        assert_eq!(settings.get::<u64>(None, "jobs").ok().flatten(), None);
        assert!(settings.get::<f64>(None, "seed").is_ok());
        let bad = Settings { config: parse_config("n = many").unwrap() };
        assert!(matches!(bad.get::<usize>(None, "n"), Err(Failure::Usage(_))));
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(main(["elasticity", "no-such-command"]), 1);
        assert_eq!(main(["elasticity", "sweep-samples", "--n", "ten"]), 1);
        assert_eq!(main(["elasticity", "sweep-samples", "--methods", "magic"]), 1);
        assert_eq!(main(["elasticity", "sweep-samples", "--grid", "0.5,0.2"]), 1);
        assert_eq!(main(["elasticity", "--help"]), 0);
    }

    #[test]
    fn missing_input_is_a_runtime_error() {
        assert_eq!(main(["elasticity", "plot", "--input", "/nonexistent/records.csv"]), 2);
    }
}
