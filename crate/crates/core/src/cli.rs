//! Command-line front end: experiment configs, the four commands and their
//! CSV/JSON artifacts.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 invalid config or
//! arguments, 3 solver convergence failure, 4 enumeration guard.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::desired::MainlobeSpec;
use crate::driver::{
    baseline_uniform_run, masked_pattern, run, to_db, BaselineOutcome, DriverConfig, DriverOutcome,
};
use crate::error::Error;
use crate::oracle::{exhaustive_search, uniform_entry, Bracket};

pub const SCHEMA_VERSION: u32 = 1;
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_GUARD: i32 = 4;
pub const THREADS_ENV: &str = "BEAMFORGE_THREADS";
const BRACKET_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Match,
    Baseline,
    Oracle,
    MSweep,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Match => "match",
            Self::Baseline => "baseline",
            Self::Oracle => "oracle",
            Self::MSweep => "m_sweep",
        })
    }
}

/// Experiment file. Omitted driver fields take the 65-point, 15-antenna
/// defaults of [`DriverConfig::standard`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "defaults::grid_points")]
    pub grid_points: usize,
    #[serde(default = "defaults::antennas")]
    pub antennas: usize,
    #[serde(default = "defaults::spacing")]
    pub spacing_wavelengths: f64,
    #[serde(default = "defaults::power")]
    pub power: f64,
    #[serde(default = "defaults::rho")]
    pub rho: f64,
    #[serde(default = "defaults::max_outer_iter")]
    pub max_outer_iter: usize,
    #[serde(default = "defaults::outer_tol")]
    pub outer_tol: f64,
    #[serde(default = "defaults::angle_step")]
    pub angle_step_deg: f64,
    #[serde(default = "defaults::mainlobes")]
    pub mainlobes: Vec<MainlobeSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub m_sweep: Vec<usize>,
}

mod defaults {
    use super::*;

    pub fn grid_points() -> usize {
        DriverConfig::standard().grid_points
    }
    pub fn antennas() -> usize {
        DriverConfig::standard().antennas
    }
    pub fn spacing() -> f64 {
        DriverConfig::standard().spacing_wavelengths
    }
    pub fn power() -> f64 {
        DriverConfig::standard().power
    }
    pub fn rho() -> f64 {
        DriverConfig::standard().rho
    }
    pub fn max_outer_iter() -> usize {
        DriverConfig::standard().max_outer_iter
    }
    pub fn outer_tol() -> f64 {
        DriverConfig::standard().outer_tol
    }
    pub fn angle_step() -> f64 {
        DriverConfig::standard().angle_step_deg
    }
    pub fn mainlobes() -> Vec<MainlobeSpec> {
        DriverConfig::standard().mainlobes
    }
}

/// A config problem with its position in the source file when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path.display())?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
            if let Some(col) = self.column {
                write!(f, ":{col}")?;
            }
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Line and column of the first `"key":` in `src`, both 1-based.
fn locate_key(src: &str, key: &str) -> Option<(usize, usize)> {
    let needle = format!("\"{key}\"");
    for (i, line) in src.lines().enumerate() {
        let mut from = 0;
        while let Some(pos) = line[from..].find(&needle) {
            let at = from + pos;
            if line[at + needle.len()..].trim_start().starts_with(':') {
                return Some((i + 1, line[..at].chars().count() + 1));
            }
            from = at + needle.len();
        }
    }
    None
}

impl ExperimentConfig {
    pub fn parse(src: &str, path: &Path) -> Result<Self, ConfigError> {
        let err_at = |line, column, message| ConfigError {
            path: path.to_path_buf(),
            line,
            column,
            message,
        };
        let value: serde_json::Value = serde_json::from_str(src)
            .map_err(|e| err_at(Some(e.line()), Some(e.column()), format!("invalid JSON: {e}")))?;
        match value.get("schema_version") {
            None => {
                return Err(err_at(Some(1), None, "missing required field `schema_version`".into()));
            }
            Some(v) if v.as_u64() != Some(u64::from(SCHEMA_VERSION)) => {
                let (l, c) = locate_key(src, "schema_version").unzip();
                return Err(err_at(
                    l,
                    c,
                    format!("unsupported schema_version {v}; this build reads version {SCHEMA_VERSION}"),
                ));
            }
            _ => {}
        }
        let cfg: Self = serde_json::from_str(src).map_err(|e| {
            let msg = e.to_string();
            let msg = msg.split(" at line ").next().unwrap_or(&msg).to_string();
            err_at(Some(e.line()), Some(e.column()), msg)
        })?;
        cfg.validate().map_err(|(key, message)| {
            let (l, c) = key.and_then(|k| locate_key(src, k)).unzip();
            err_at(l, c, message)
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: None,
            column: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&src, path)
    }

    /// Offending key and a message naming the violated constraint.
    fn validate(&self) -> Result<(), (Option<&'static str>, String)> {
        self.check_fields().map_err(|(k, m)| (Some(k), m))?;
        self.driver().validate().map_err(|e| (None, e.to_string()))
    }

    fn check_fields(&self) -> Result<(), (&'static str, String)> {
        if self.grid_points == 0 {
            return Err(("grid_points", "grid_points must be at least 1".into()));
        }
        if self.antennas == 0 {
            return Err(("antennas", "antennas must be at least 1".into()));
        }
        if self.antennas > self.grid_points {
            return Err((
                "antennas",
                format!(
                    "antennas ({}) must not exceed grid_points ({})",
                    self.antennas, self.grid_points
                ),
            ));
        }
        for (key, v) in [
            ("spacing_wavelengths", self.spacing_wavelengths),
            ("power", self.power),
            ("rho", self.rho),
            ("outer_tol", self.outer_tol),
            ("angle_step_deg", self.angle_step_deg),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err((key, format!("{key} must be positive, got {v}")));
            }
        }
        if self.max_outer_iter == 0 {
            return Err(("max_outer_iter", "max_outer_iter must be at least 1".into()));
        }
        if self.mainlobes.is_empty() {
            return Err(("mainlobes", "at least one mainlobe is required".into()));
        }
        self.driver().desired().map_err(|e| ("mainlobes", e.to_string()))?;
        if let Some(&m) = self.m_sweep.iter().find(|&&m| m < self.antennas) {
            return Err((
                "m_sweep",
                format!("m_sweep value {m} is smaller than antennas ({})", self.antennas),
            ));
        }
        if self.kind == Some(ExperimentKind::MSweep) && self.m_sweep.is_empty() {
            return Err(("m_sweep", "an m_sweep experiment needs a non-empty m_sweep list".into()));
        }
        Ok(())
    }

    pub fn driver(&self) -> DriverConfig {
        DriverConfig {
            grid_points: self.grid_points,
            antennas: self.antennas,
            spacing_wavelengths: self.spacing_wavelengths,
            power: self.power,
            rho: self.rho,
            max_outer_iter: self.max_outer_iter,
            outer_tol: self.outer_tol,
            angle_step_deg: self.angle_step_deg,
            mainlobes: self.mainlobes.clone(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "beamforge", version, about = "Joint covariance and antenna placement design")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Joint design against the uniform baseline.
    Match(CommonArgs),
    /// Covariance design for the uniform placement only.
    Baseline(CommonArgs),
    /// Joint design for every grid size in `m_sweep`.
    Sweep(CommonArgs),
    /// Exhaustive search on a small grid and the driver's bracket.
    Oracle(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Only report errors.
    #[arg(long)]
    pub quiet: bool,
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Self::Match(a) | Self::Baseline(a) | Self::Sweep(a) | Self::Oracle(a) => a,
        }
    }

    fn kind(&self) -> ExperimentKind {
        match self {
            Self::Match(_) => ExperimentKind::Match,
            Self::Baseline(_) => ExperimentKind::Baseline,
            Self::Sweep(_) => ExperimentKind::MSweep,
            Self::Oracle(_) => ExperimentKind::Oracle,
        }
    }
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Usage(String),
    Solver(Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Usage(_) => EXIT_CONFIG,
            Self::Solver(Error::Convergence { .. }) => EXIT_CONVERGENCE,
            Self::Solver(Error::EnumerationGuard { .. }) => EXIT_GUARD,
            Self::Solver(_) | Self::Io(_) => EXIT_FAILURE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => write!(f, "config error: {e}"),
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Solver(e) => write!(f, "{e}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::Solver(e)
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Parse `args` (program name first), run the command and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let quiet = cli.command.args().quiet;
    let filter = if quiet { "error" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(filter))
        .format_timestamp(None)
        .try_init();
    match execute(&cli.command) {
        Ok(summary) => {
            if !quiet {
                println!("{summary}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("beamforge: {e}");
            e.exit_code()
        }
    }
}

/// Worker count requested through the environment, if any.
pub fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
    }
}

fn execute(cmd: &Command) -> Result<String, CliError> {
    let args = cmd.args();
    let cfg = ExperimentConfig::load(&args.config).map_err(CliError::Config)?;
    if let Some(kind) = cfg.kind {
        if kind != cmd.kind() {
            return Err(CliError::Usage(format!(
                "config describes a `{kind}` experiment but the `{}` command was given",
                cmd.kind()
            )));
        }
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;

    let work = || -> Result<String, CliError> {
        let result = match cmd {
            Command::Match(_) => cmd_match(&cfg, &out),
            Command::Baseline(_) => cmd_baseline(&cfg, &out),
            Command::Sweep(_) => cmd_m_sweep(&cfg, &out),
            Command::Oracle(_) => cmd_oracle(&cfg, &out),
        };
        if let Err(e) = &result {
            write_diagnostics(&out, cmd.kind(), e)?;
        }
        result
    };
    match threads_from_env()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Io(format!("cannot start {n} worker threads: {e}")))?
            .install(work),
        None => work(),
    }
}

#[derive(Serialize)]
struct Diagnostics {
    command: String,
    exit_code: i32,
    error: String,
}

fn write_diagnostics(out: &Path, kind: ExperimentKind, e: &CliError) -> Result<(), CliError> {
    let d = Diagnostics {
        command: kind.to_string(),
        exit_code: e.exit_code(),
        error: e.to_string(),
    };
    write_json(&out.join("diagnostics.json"), &d)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| io_err(path, e))
}

fn write_rows<const N: usize>(path: &Path, header: [&str; N], rows: &[[String; N]]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacementReport {
    pub indices: Vec<usize>,
    pub positions_wavelengths: Vec<f64>,
    pub effective_aperture: usize,
    pub objective: f64,
    pub objective_db: f64,
    pub alpha: f64,
    pub uniform_objective: f64,
    pub gap_db: f64,
}

fn placement_report(cfg: &DriverConfig, out: &DriverOutcome, base: &BaselineOutcome) -> PlacementReport {
    let indices = out.placement.selected_indices();
    PlacementReport {
        positions_wavelengths: indices
            .iter()
            .map(|&i| i as f64 * cfg.spacing_wavelengths)
            .collect(),
        effective_aperture: out.placement.effective_aperture(),
        objective: out.objective,
        objective_db: to_db(out.objective),
        alpha: out.alpha,
        uniform_objective: base.objective,
        gap_db: to_db(base.objective) - to_db(out.objective),
        indices,
    }
}

fn write_trace(path: &Path, out: &DriverOutcome) -> Result<(), CliError> {
    let rows: Vec<[String; 4]> = out
        .history
        .iter()
        .map(|h| {
            [
                h.outer_index.to_string(),
                num(h.objective_boolean),
                num(h.objective_relaxed),
                num(h.objective_db()),
            ]
        })
        .collect();
    write_rows(
        path,
        ["outer_iter", "objective_boolean", "objective_relaxed", "objective_db"],
        &rows,
    )
}

pub fn cmd_match(cfg: &ExperimentConfig, out_dir: &Path) -> Result<String, CliError> {
    let dc = cfg.driver();
    let base = baseline_uniform_run(&dc)?;
    write_json(&out_dir.join("baseline.json"), &baseline_summary(&dc, &base))?;
    let out = run(&dc)?;

    let desired = dc.desired()?;
    let grid = dc.array_grid()?;
    let optimized = masked_pattern(&out.r, &out.placement, &grid, desired.grid().radians())?;
    let rows: Vec<[String; 6]> = desired
        .grid()
        .degrees()
        .iter()
        .zip(optimized.iter().zip(&base.pattern))
        .zip(desired.values())
        .map(|((&deg, (o, u)), &p)| {
            [
                deg.to_string(),
                num(o.power),
                num(u.power),
                num(out.alpha * p),
                num(to_db(o.power)),
                num(to_db(u.power)),
            ]
        })
        .collect();
    write_rows(
        &out_dir.join("beampattern.csv"),
        [
            "theta_deg",
            "p_optimized",
            "p_uniform",
            "p_desired_scaled",
            "p_optimized_db",
            "p_uniform_db",
        ],
        &rows,
    )?;
    write_trace(&out_dir.join("mse_trace.csv"), &out)?;
    let report = placement_report(&dc, &out, &base);
    write_json(&out_dir.join("placement.json"), &report)?;
    Ok(format!(
        "joint objective {:.6e} ({:.2} dB), uniform {:.6e} ({:.2} dB), gap {:.2} dB, aperture {}, {} outer iterations",
        report.objective,
        report.objective_db,
        report.uniform_objective,
        to_db(report.uniform_objective),
        report.gap_db,
        report.effective_aperture,
        out.history.len()
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub indices: Vec<usize>,
    pub objective: f64,
    pub objective_db: f64,
    pub alpha: f64,
}

fn baseline_summary(dc: &DriverConfig, base: &BaselineOutcome) -> BaselineSummary {
    BaselineSummary {
        indices: crate::driver::uniform_placement(dc.grid_points, dc.antennas)
            .map(|g| g.selected_indices())
            .unwrap_or_default(),
        objective: base.objective,
        objective_db: to_db(base.objective),
        alpha: base.alpha,
    }
}

pub fn cmd_baseline(cfg: &ExperimentConfig, out_dir: &Path) -> Result<String, CliError> {
    let dc = cfg.driver();
    let base = baseline_uniform_run(&dc)?;
    let desired = dc.desired()?;
    let rows: Vec<[String; 4]> = desired
        .grid()
        .degrees()
        .iter()
        .zip(&base.pattern)
        .zip(desired.values())
        .map(|((&deg, u), &p)| {
            [deg.to_string(), num(u.power), num(base.alpha * p), num(to_db(u.power))]
        })
        .collect();
    write_rows(
        &out_dir.join("baseline_pattern.csv"),
        ["theta_deg", "p_uniform", "p_desired_scaled", "p_uniform_db"],
        &rows,
    )?;
    let summary = baseline_summary(&dc, &base);
    write_json(&out_dir.join("baseline.json"), &summary)?;
    Ok(format!(
        "uniform objective {:.6e} ({:.2} dB)",
        summary.objective, summary.objective_db
    ))
}

pub fn cmd_m_sweep(cfg: &ExperimentConfig, out_dir: &Path) -> Result<String, CliError> {
    if cfg.m_sweep.is_empty() {
        return Err(CliError::Usage(
            "the sweep command needs a non-empty m_sweep list in the config".into(),
        ));
    }
    let base = cfg.driver();
    let runs: Vec<(usize, Result<(DriverOutcome, f64), Error>)> = cfg
        .m_sweep
        .par_iter()
        .map(|&m| {
            let dc = base.with_grid_points(m);
            let res = run(&dc).and_then(|o| baseline_uniform_run(&dc).map(|b| (o, b.objective)));
            (m, res)
        })
        .collect();

    let mut rows = Vec::new();
    let mut first_err = None;
    for (m, res) in runs {
        match res {
            Ok((o, uniform)) => {
                let dir = out_dir.join(format!("m_{m}"));
                fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
                write_trace(&dir.join("mse_trace.csv"), &o)?;
                rows.push([
                    m.to_string(),
                    num(o.objective),
                    o.placement.effective_aperture().to_string(),
                    num(to_db(o.objective)),
                    num(uniform),
                ]);
            }
            Err(e) => {
                log::error!("M = {m}: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    write_rows(
        &out_dir.join("m_sweep.csv"),
        ["M", "final_objective", "effective_aperture", "final_objective_db", "uniform_objective"],
        &rows,
    )?;
    if let Some(e) = first_err {
        return Err(e.into());
    }
    Ok(format!("{} sweep points written", rows.len()))
}

pub fn cmd_oracle(cfg: &ExperimentConfig, out_dir: &Path) -> Result<String, CliError> {
    let dc = cfg.driver();
    let oracle = exhaustive_search(&dc)?;
    write_json(&out_dir.join("oracle.json"), &oracle)?;
    let uniform = uniform_entry(&oracle)?;
    let driver = run(&dc)?;
    let bracket = Bracket::new(oracle.best_objective, driver.objective, uniform, BRACKET_TOL);
    write_json(&out_dir.join("bracket.json"), &bracket)?;
    Ok(format!(
        "{} placements; oracle {:.6e}, driver {:.6e}, uniform {:.6e}: bracket {}",
        oracle.per_placement.len(),
        oracle.best_objective,
        driver.objective,
        uniform,
        if bracket.pass { "pass" } else { "fail" }
    ))
}
