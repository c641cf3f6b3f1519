//! Command-line driver: solver inspection, closed-form analyses, simulation
//! campaigns and the validation battery. Every command writes versioned,
//! long-format CSV files into the output directory.

pub mod suites;

use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use fcdgame_core::analysis::{
    misestimation_matrix, privacy_share_grid, Misestimation, PrivacyGrid,
};
use fcdgame_core::sim::{mean_std, run_simulation, Approach, MetricRow, RunSummary};
use fcdgame_core::solver::{expected_utility, solve_optimal, Game, SolverOptions};
use fcdgame_core::{default_scenario, ModelError, ScenarioConfig, SolverError};
use rayon::prelude::*;
use thiserror::Error;

use crate::suites::{run_all, SuiteOutcome, ValidateParams};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("limit exceeded: {0}")]
    Guard(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Guard(_) => 3,
            Self::Validation(_) => 4,
            Self::Runtime(_) | Self::Io(_) => 1,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::EnumerationGuard { .. } | SolverError::GridGuard { .. } => {
                Self::Guard(e.to_string())
            }
            SolverError::InvalidGame(_) => Self::Config(e.to_string()),
            other => Self::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Simulate,
    Analyze,
    Solve,
    Validate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SuiteSize {
    Quick,
    Full,
}

/// Every flag can also be set through an `FCDGAME_`-prefixed variable.
#[derive(Clone, Debug, Parser)]
#[command(name = "fcdgame", version, about = "Privacy-aware floating-car-data subscription game")]
pub struct Args {
    #[arg(long, value_enum, env = "FCDGAME_MODE")]
    pub mode: Mode,
    /// Scenario TOML; the built-in default scenario when absent.
    #[arg(long, env = "FCDGAME_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seeds as a list (`1,2,3`), an inclusive range (`1-5`) or both.
    #[arg(long, env = "FCDGAME_SEEDS", default_value = "1-5")]
    pub seeds: String,
    #[arg(long, env = "FCDGAME_APPROACHES", default_value = "GTP,NC,GK,CL")]
    pub approaches: String,
    #[arg(long, env = "FCDGAME_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Analysis grid, `key=value` pairs separated by `;`.
    #[arg(long, env = "FCDGAME_GRID")]
    pub grid: Option<String>,
    #[arg(long, env = "FCDGAME_SLOTS", default_value_t = 600)]
    pub slots: u64,
    /// Bandwidth sweep in bits per slot; the scenario bandwidth when absent.
    #[arg(long, env = "FCDGAME_BANDWIDTHS")]
    pub bandwidths: Option<String>,
    #[arg(long, value_enum, env = "FCDGAME_SUITE", default_value = "full")]
    pub suite: SuiteSize,
}

pub fn run(args: &Args) -> Result<Vec<PathBuf>, CliError> {
    let config = match &args.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => default_scenario(),
    };
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Config(format!("output directory {}: {e}", args.out.display())))?;
    match args.mode {
        Mode::Solve => cmd_solve(&config, &args.out),
        Mode::Analyze => {
            let spec = GridSpec::parse(args.grid.as_deref().unwrap_or(""), &config)?;
            cmd_analyze(&config, &spec, &args.out)
        }
        Mode::Simulate => {
            let manifest = RunManifest {
                seeds: parse_seeds(&args.seeds)?,
                approaches: parse_approaches(&args.approaches)?,
                bandwidths: match &args.bandwidths {
                    Some(text) => parse_floats(text, "bandwidths")?,
                    None => vec![config.bandwidth_per_slot],
                },
                slots: args.slots,
            };
            cmd_simulate(&config, &manifest, &args.out).and_then(|report| {
                if report.failures.is_empty() {
                    Ok(report.files)
                } else {
                    Err(CliError::Runtime(format!("{} runs failed, see summary.csv", report.failures.len())))
                }
            })
        }
        Mode::Validate => {
            let params = match args.suite {
                SuiteSize::Quick => ValidateParams::quick(),
                SuiteSize::Full => ValidateParams::full(),
            };
            let (outcomes, files) = cmd_validate(&params, &args.out)?;
            let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
            if failed.is_empty() {
                Ok(files)
            } else {
                Err(CliError::Validation(failed.join(", ")))
            }
        }
    }
}

pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Config(format!("invalid seed list '{text}'"));
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                let b: u64 = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    if seeds.is_empty() {
        return Err(CliError::Config("seed list is empty".into()));
    }
    Ok(seeds)
}

pub fn parse_approaches(text: &str) -> Result<Vec<Approach>, CliError> {
    let approaches: Vec<Approach> = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| Approach::parse(s).ok_or_else(|| CliError::Config(format!("unknown approach '{s}'"))))
        .collect::<Result<_, _>>()?;
    if approaches.is_empty() {
        return Err(CliError::Config("approach list is empty".into()));
    }
    Ok(approaches)
}

fn parse_floats(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    let values: Vec<f64> = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Config(format!("invalid {what} '{text}'")))?;
    if values.is_empty() || values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(CliError::Config(format!("invalid {what} '{text}'")));
    }
    Ok(values)
}

/// CSV file whose first line names the schema and its version.
fn csv_writer(dir: &Path, file: &str, schema: &str) -> Result<(csv::Writer<fs::File>, PathBuf), CliError> {
    let path = dir.join(file);
    let mut f = fs::File::create(&path)?;
    writeln!(f, "# schema: fcdgame.{schema}.v1")?;
    Ok((csv::Writer::from_writer(f), path))
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn cmd_solve(config: &ScenarioConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let game = Game::from_config(config)?;
    let solution = solve_optimal(&game, &SolverOptions::from_config(config))?;
    let profile = &solution.profile;
    let report = &solution.report;

    let (mut w, strategies_path) = csv_writer(out, "solve_strategies.csv", "solve_strategies")?;
    w.write_record(["phi", "imprecision_km", "count", "level", "radius_km", "expected_impact", "load", "probability"])?;
    for (k, profile_cfg) in config.privacy_profiles.iter().enumerate() {
        for (i, level) in config.impact_levels.levels().iter().enumerate() {
            w.write_record([
                profile_cfg.phi.to_string(),
                num(profile_cfg.imprecision_radius_km),
                profile_cfg.count.to_string(),
                i.to_string(),
                num(level.radius_km),
                num(level.expected_impact),
                num(game.loads(k)[i]),
                num(profile.p(k, i)),
            ])?;
        }
    }
    w.flush()?;

    let (mut w, report_path) = csv_writer(out, "solve_report.csv", "solve_report")?;
    w.write_record(["key", "value"])?;
    let active = (0..game.privacy_levels()).find(|&phi| game.counts()[phi] > 0).unwrap_or(0);
    let utility = expected_utility(&game, profile, active);
    let rows = [
        ("partition", report.partition.pattern()),
        ("supported_pairs", report.partition.supported_pairs().to_string()),
        ("converged", report.converged.to_string()),
        ("sweeps", report.sweeps.to_string()),
        ("partitions_evaluated", report.partitions_evaluated.to_string()),
        ("partitions_converged", report.partitions_converged.to_string()),
        ("robust_score", num(report.robust_score)),
        ("expected_utility", num(utility)),
        ("relative_utility", num(utility / game.total_weight())),
        ("bandwidth", num(game.bandwidth())),
    ];
    for (k, v) in rows {
        w.write_record([k, v.as_str()])?;
    }
    for (i, u) in report.utility_per_level.iter().enumerate() {
        w.write_record([format!("utility_level_{i}"), num(*u)])?;
    }
    w.flush()?;

    let summary_path = out.join("solve_summary.txt");
    let mut text = String::new();
    text.push_str(&format!("bandwidth {} bits per slot\n", game.bandwidth()));
    text.push_str(&format!(
        "partition {} ({} supported pairs), converged {} after {} sweeps\n",
        report.partition.pattern(),
        report.partition.supported_pairs(),
        report.converged,
        report.sweeps
    ));
    text.push_str(&format!(
        "{} partitions evaluated, {} converged\n",
        report.partitions_evaluated, report.partitions_converged
    ));
    text.push_str(&format!(
        "expected utility {utility:.6} ({:.2}% of all impact)\n",
        100.0 * utility / game.total_weight()
    ));
    for (k, p) in config.privacy_profiles.iter().enumerate() {
        let probs: Vec<String> = profile.strategies[k].probabilities.iter().map(|q| format!("{q:.6}")).collect();
        text.push_str(&format!(
            "phi {} (r = {} km, {} vehicles): p = [{}]\n",
            p.phi,
            p.imprecision_radius_km,
            p.count,
            probs.join(", ")
        ));
    }
    fs::write(&summary_path, text)?;
    Ok(vec![strategies_path, report_path, summary_path])
}

/// Axes of `--mode analyze`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub privacy: bool,
    pub misestimation: bool,
    pub imprecision_km: Vec<f64>,
    pub bandwidth_fractions: Vec<f64>,
    pub neighbourhood: u32,
    pub share_step: f64,
    pub max_count: u32,
    pub offset: u32,
    pub misestimation_imprecision_km: f64,
    pub misestimation_bandwidth: f64,
}

impl GridSpec {
    /// Keys: `kind` (privacy, misestimation, all), `imprecision`,
    /// `fractions`, `neighbourhood`, `share_step`, `max_count`, `offset`,
    /// `mis_imprecision`, `mis_bandwidth`.
    pub fn parse(text: &str, config: &ScenarioConfig) -> Result<Self, CliError> {
        let mut spec = Self {
            privacy: true,
            misestimation: true,
            imprecision_km: vec![0.1, 1.0, 10.0],
            bandwidth_fractions: vec![config.bandwidth_per_slot / config.impact_levels.required_bandwidth()],
            neighbourhood: 20,
            share_step: 0.05,
            max_count: 10,
            offset: 1,
            misestimation_imprecision_km: 10.0,
            misestimation_bandwidth: config.bandwidth_per_slot,
        };
        let bad = |key: &str| CliError::Config(format!("invalid grid entry '{key}'"));
        for entry in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = entry.split_once('=').ok_or_else(|| bad(entry))?;
            let value = value.trim();
            let single = |v: &str| v.parse::<f64>().ok().filter(|x| x.is_finite() && *x >= 0.0);
            match key.trim() {
                "kind" => {
                    (spec.privacy, spec.misestimation) = match value {
                        "privacy" => (true, false),
                        "misestimation" => (false, true),
                        "all" => (true, true),
                        _ => return Err(bad(entry)),
                    }
                }
                "imprecision" => spec.imprecision_km = parse_floats(value, "imprecision")?,
                "fractions" => spec.bandwidth_fractions = parse_floats(value, "fractions")?,
                "neighbourhood" => spec.neighbourhood = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| bad(entry))?,
                "share_step" => {
                    spec.share_step = single(value).filter(|&s| s > 0.0 && s <= 1.0).ok_or_else(|| bad(entry))?
                }
                "max_count" => spec.max_count = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| bad(entry))?,
                "offset" => spec.offset = value.parse().map_err(|_| bad(entry))?,
                "mis_imprecision" => spec.misestimation_imprecision_km = single(value).ok_or_else(|| bad(entry))?,
                "mis_bandwidth" => spec.misestimation_bandwidth = single(value).ok_or_else(|| bad(entry))?,
                _ => return Err(bad(entry)),
            }
        }
        Ok(spec)
    }

    fn shares(&self) -> Vec<f64> {
        let steps = (1.0 / self.share_step).round() as usize;
        (0..=steps).map(|k| (k as f64 * self.share_step).min(1.0)).collect()
    }
}

pub fn cmd_analyze(config: &ScenarioConfig, spec: &GridSpec, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let options = SolverOptions::from_config(config);
    let table = &config.impact_levels;
    let mut files = Vec::new();
    if spec.privacy {
        let (mut w, path) = csv_writer(out, "analysis_privacy.csv", "analysis_privacy")?;
        w.write_record([
            "imprecision_km",
            "bandwidth_fraction",
            "privacy_share",
            "exact_count",
            "private_count",
            "expected_utility",
            "relative_utility",
            "utility_vs_no_privacy",
        ])?;
        for &r in &spec.imprecision_km {
            let grid = PrivacyGrid {
                neighbourhood: spec.neighbourhood,
                imprecision_km: r,
                shares: spec.shares(),
                bandwidth_fractions: spec.bandwidth_fractions.clone(),
            };
            let points = privacy_share_grid(table, &grid, &options)?;
            for chunk in points.chunks(grid.shares.len()) {
                let base = chunk[0].expected_utility;
                for p in chunk {
                    w.write_record([
                        num(p.imprecision_km),
                        num(p.bandwidth_fraction),
                        num(p.privacy_share),
                        p.exact_count.to_string(),
                        p.private_count.to_string(),
                        num(p.expected_utility),
                        num(p.relative_utility),
                        num(if base > 0.0 { p.expected_utility / base } else { 1.0 }),
                    ])?;
                }
            }
        }
        w.flush()?;
        files.push(path);
    }
    if spec.misestimation {
        let (mut w, path) = csv_writer(out, "analysis_misestimation.csv", "analysis_misestimation")?;
        w.write_record([
            "direction",
            "offset",
            "imprecision_km",
            "bandwidth",
            "exact_count",
            "private_count",
            "expected_utility",
            "actual_utility",
            "loss",
        ])?;
        for direction in [Misestimation::Over, Misestimation::Under] {
            let points = misestimation_matrix(
                table,
                spec.misestimation_imprecision_km,
                spec.misestimation_bandwidth,
                spec.max_count,
                spec.offset,
                direction,
                &options,
            )?;
            for p in points {
                w.write_record([
                    direction.label().to_string(),
                    spec.offset.to_string(),
                    num(spec.misestimation_imprecision_km),
                    num(spec.misestimation_bandwidth),
                    p.exact_count.to_string(),
                    p.private_count.to_string(),
                    num(p.expected_utility),
                    num(p.actual_utility),
                    num(p.loss),
                ])?;
            }
        }
        w.flush()?;
        files.push(path);
    }
    Ok(files)
}

/// What `--mode simulate` runs: every bandwidth × approach × seed.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub seeds: Vec<u64>,
    pub approaches: Vec<Approach>,
    pub bandwidths: Vec<f64>,
    pub slots: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunKey {
    pub approach: Approach,
    pub bandwidth: f64,
    pub seed: u64,
}

/// Seed statistics of one (approach, bandwidth) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub approach: Approach,
    pub bandwidth: f64,
    pub runs: usize,
    pub utility: (f64, f64),
    pub bandwidth_used: (f64, f64),
    pub max_vehicle_bandwidth: f64,
}

pub struct SimulationReport {
    pub runs: Vec<(RunKey, RunSummary)>,
    pub failures: Vec<(RunKey, String)>,
    pub aggregates: Vec<Aggregate>,
    pub files: Vec<PathBuf>,
}

impl SimulationReport {
    pub fn aggregate(&self, approach: Approach, bandwidth: f64) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.approach == approach && a.bandwidth == bandwidth)
    }
}

pub fn run_file_name(key: &RunKey) -> String {
    format!("run_{}_bw{}_seed{}.csv", key.approach.label(), key.bandwidth, key.seed)
}

pub fn cmd_simulate(config: &ScenarioConfig, manifest: &RunManifest, out: &Path) -> Result<SimulationReport, CliError> {
    if manifest.seeds.is_empty() {
        return Err(CliError::Config("seed list is empty".into()));
    }
    let mut keys = Vec::new();
    for &bandwidth in &manifest.bandwidths {
        for &approach in &manifest.approaches {
            for &seed in &manifest.seeds {
                keys.push(RunKey { approach, bandwidth, seed });
            }
        }
    }
    let results: Vec<Result<(RunSummary, Vec<MetricRow>), String>> = keys
        .par_iter()
        .map(|key| {
            let mut cfg = config.clone();
            cfg.bandwidth_per_slot = key.bandwidth;
            cfg.validate().map_err(|e| e.to_string())?;
            catch_unwind(AssertUnwindSafe(|| {
                let output = run_simulation(&cfg, key.approach, key.seed, manifest.slots);
                (output.summary, output.rows)
            }))
            .map_err(|panic| {
                panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "run panicked".into())
            })
        })
        .collect();

    let mut report = SimulationReport { runs: Vec::new(), failures: Vec::new(), aggregates: Vec::new(), files: Vec::new() };
    for (key, result) in keys.into_iter().zip(results) {
        match result {
            Ok((summary, rows)) => {
                let (mut w, path) = csv_writer(out, &run_file_name(&key), "metrics")?;
                w.write_record([
                    "approach",
                    "bandwidth",
                    "seed",
                    "window",
                    "vehicle",
                    "phi",
                    "relative_utility",
                    "used_bandwidth",
                ])?;
                for row in &rows {
                    w.write_record([
                        key.approach.label().to_string(),
                        num(key.bandwidth),
                        key.seed.to_string(),
                        row.window.to_string(),
                        row.vehicle.to_string(),
                        row.phi.to_string(),
                        row.relative_utility.map(num).unwrap_or_default(),
                        num(row.used_bandwidth),
                    ])?;
                }
                w.flush()?;
                report.files.push(path);
                report.runs.push((key, summary));
            }
            Err(message) => report.failures.push((key, message)),
        }
    }

    for &bandwidth in &manifest.bandwidths {
        for &approach in &manifest.approaches {
            let cell: Vec<&RunSummary> = report
                .runs
                .iter()
                .filter(|(k, _)| k.approach == approach && k.bandwidth == bandwidth)
                .map(|(_, s)| s)
                .collect();
            if cell.is_empty() {
                continue;
            }
            let utilities: Vec<f64> = cell.iter().map(|s| s.mean_relative_utility).collect();
            let used: Vec<f64> = cell.iter().map(|s| s.mean_used_bandwidth).collect();
            report.aggregates.push(Aggregate {
                approach,
                bandwidth,
                runs: cell.len(),
                utility: mean_std(&utilities),
                bandwidth_used: mean_std(&used),
                max_vehicle_bandwidth: cell.iter().map(|s| s.max_vehicle_bandwidth).fold(0.0, f64::max),
            });
        }
    }

    let (mut w, path) = csv_writer(out, "summary.csv", "summary")?;
    w.write_record([
        "row",
        "approach",
        "bandwidth",
        "seed",
        "runs",
        "mean_relative_utility",
        "std_relative_utility",
        "mean_used_bandwidth",
        "std_used_bandwidth",
        "max_vehicle_bandwidth",
        "solver_failures",
        "status",
    ])?;
    for (key, s) in &report.runs {
        w.write_record([
            "run".to_string(),
            key.approach.label().to_string(),
            num(key.bandwidth),
            key.seed.to_string(),
            "1".to_string(),
            num(s.mean_relative_utility),
            String::new(),
            num(s.mean_used_bandwidth),
            String::new(),
            num(s.max_vehicle_bandwidth),
            s.solver_failures.to_string(),
            "ok".to_string(),
        ])?;
    }
    for (key, message) in &report.failures {
        w.write_record([
            "run".to_string(),
            key.approach.label().to_string(),
            num(key.bandwidth),
            key.seed.to_string(),
            "1".to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            format!("failed: {message}"),
        ])?;
    }
    for a in &report.aggregates {
        w.write_record([
            "mean".to_string(),
            a.approach.label().to_string(),
            num(a.bandwidth),
            String::new(),
            a.runs.to_string(),
            num(a.utility.0),
            num(a.utility.1),
            num(a.bandwidth_used.0),
            num(a.bandwidth_used.1),
            num(a.max_vehicle_bandwidth),
            String::new(),
            "ok".to_string(),
        ])?;
    }
    w.flush()?;
    report.files.push(path);
    Ok(report)
}

pub fn cmd_validate(params: &ValidateParams, out: &Path) -> Result<(Vec<SuiteOutcome>, Vec<PathBuf>), CliError> {
    let outcomes = run_all(params, &suites::reference_solver);
    let (mut w, path) = csv_writer(out, "validate_report.csv", "validate_report")?;
    w.write_record(["suite", "passed", "tolerance", "detail"])?;
    for o in &outcomes {
        w.write_record([o.name, if o.passed { "true" } else { "false" }, o.tolerance.as_str(), o.detail.as_str()])?;
    }
    w.flush()?;
    Ok((outcomes, vec![path]))
}
