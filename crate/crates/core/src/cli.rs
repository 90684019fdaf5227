//! Command-line front end: config parsing, subcommand dispatch and output.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or configuration error,
//! 3 failed `verify --strict`.

use crate::analytic::{
    conjectured_density_general, AnalyticError, ApproxGrid, LinearProfile, StationaryLaw,
};
use crate::diagnostics::{run_verification, DiagnosticsError, VerifyBudget};
use crate::export::fmt17;
use crate::model::{build_model, LevelSpec, ModelError, MultiLevelModel, Stability};
use crate::sde::{
    default_switch_levels, run_ensemble, Reflection, SdeError, SimOptions, Simulator,
};
use crate::DEFAULT_SEED;
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VERIFY_FAILED: i32 = 3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid model: {0}")]
    Validation(#[from] ModelError),
    #[error("config is missing `{0}`")]
    Missing(&'static str),
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

/// Contents of a config file (TOML, or JSON when the extension is `.json`).
/// Unknown keys are rejected at every level.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub boundaries: Vec<f64>,
    pub sigmas: Option<Vec<f64>>,
    pub drifts: Option<Vec<f64>>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub sample: SampleConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub verify: VerifyBudget,
    pub approx: Option<ApproxConfig>,
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn model(&self) -> Result<MultiLevelModel, ConfigError> {
        let sigmas = self.sigmas.clone().ok_or(ConfigError::Missing("sigmas"))?;
        let drifts = self.drifts.clone().ok_or(ConfigError::Missing("drifts"))?;
        Ok(build_model(LevelSpec::new(self.boundaries.clone(), sigmas, drifts))?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    /// Right end of the output grid; defaults to `ℓ_{k−1} + 10/|β_k|`.
    pub x_max: Option<f64>,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub n: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { n: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Crossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub horizon: f64,
    pub dt: f64,
    pub x0: f64,
    pub n_paths: usize,
    /// Defaults to 10% of the horizon.
    pub burn_in: Option<f64>,
    pub batches: usize,
    pub bandwidths: Vec<f64>,
    pub thetas: Vec<f64>,
    pub histogram_bins: usize,
    /// Defaults to `ℓ_{k−1} + 10/|β_k|` (or 10 on a non-stable model).
    pub histogram_max: Option<f64>,
    pub method: Method,
    /// Crossing-construction switch levels; default `(ℓ_1/3, 2ℓ_1/3)`.
    pub c: Option<f64>,
    pub d: Option<f64>,
    pub reflection: Reflection,
    /// Steps between rows of the optional path dump.
    pub path_stride: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            horizon: 1e3,
            dt: 1e-3,
            x0: 0.0,
            n_paths: 1,
            burn_in: None,
            batches: 20,
            bandwidths: vec![0.01],
            thetas: vec![-3.0, -2.0, -1.0, -0.5],
            histogram_bins: 100,
            histogram_max: None,
            method: Method::Euler,
            c: None,
            d: None,
            reflection: Reflection::Projection,
            path_stride: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxConfig {
    pub x_max: f64,
    pub levels: usize,
    pub sigma: LinearProfile,
    pub drift: LinearProfile,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    201
}

/// Read a config file without building the model.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => ConfigError::FileNotFound(path.to_path_buf()),
        _ => ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        },
    })?;
    let parse_err = |message: String| ConfigError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| parse_err(e.to_string()))
    }
}

/// Read a config file and build its model.
pub fn parse_config(path: &Path) -> Result<(MultiLevelModel, RunConfig), ConfigError> {
    let config = load_config(path)?;
    let model = config.model()?;
    Ok((model, config))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "mlsrbm", version, about = "Multi-level reflecting Brownian motion: stationary law, simulation, verification")]
pub struct Cli {
    /// Worker threads for ensembles (0 = machine default).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Config file (TOML, or JSON with a `.json` extension).
    #[arg(long, short)]
    pub config: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the stationary density and CDF.
    Density(Common),
    /// Draw exact samples from the stationary law.
    Sample(Common),
    /// Simulate paths and summarise the ensemble.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the first path as `t,z,y` CSV.
        #[arg(long)]
        path_output: Option<PathBuf>,
    },
    /// Run the diagnostics battery.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Exit with status 3 if any check fails.
        #[arg(long)]
        strict: bool,
    },
    /// Stationary density for general coefficient profiles via a k-level approximation.
    Approx(Common),
    /// Print weights, β_j, log η_j and the stability verdict.
    Info(Common),
}

#[derive(Debug, Error)]
enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Simulation(#[from] SdeError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("{0}")]
    Io(#[from] io::Error),
}

impl RunError {
    fn exit_code(&self) -> i32 {
        match self {
            RunError::Io(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        }
    }
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32, RunError> {
    match &cli.command {
        Command::Density(c) => density(c),
        Command::Sample(c) => sample(c),
        Command::Simulate {
            common,
            path_output,
        } => simulate(common, path_output.as_deref(), cli.threads),
        Command::Verify { common, strict } => verify(common, *strict, cli.threads),
        Command::Approx(c) => approx(c),
        Command::Info(c) => info(c),
    }
}

fn emit(common: &Common, text: &str) -> Result<(), RunError> {
    match &common.output {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json_text<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

fn default_extent(model: &MultiLevelModel) -> f64 {
    let beta = model.betas()[model.levels() - 1];
    if beta < 0.0 {
        model.top_boundary() + 10.0 / -beta
    } else {
        model.top_boundary() + 10.0
    }
}

fn grid(x_max: f64, points: usize) -> Result<Vec<f64>, ConfigError> {
    if !(x_max.is_finite() && x_max > 0.0) || points < 2 {
        return Err(ConfigError::Invalid(format!(
            "grid needs x_max > 0 and at least 2 points, got x_max = {x_max}, points = {points}"
        )));
    }
    Ok((0..points)
        .map(|i| x_max * i as f64 / (points - 1) as f64)
        .collect())
}

fn density_table(law: &StationaryLaw, xs: &[f64], format: Format) -> Result<String, RunError> {
    match format {
        Format::Csv => {
            let mut buf = Vec::new();
            law.write_density_csv(xs, &mut buf)?;
            Ok(String::from_utf8(buf).expect("ascii output"))
        }
        Format::Json => {
            let mut density = Vec::with_capacity(xs.len());
            let mut cdf = Vec::with_capacity(xs.len());
            for &x in xs {
                density.push(law.density_at(x)?);
                cdf.push(law.cdf_at(x)?);
            }
            Ok(json_text(&serde_json::json!({
                "model": law.model().spec(),
                "x": xs,
                "density": density,
                "cdf": cdf,
            })))
        }
    }
}

fn density(common: &Common) -> Result<i32, RunError> {
    let (model, config) = parse_config(&common.config)?;
    let x_max = config.density.x_max.unwrap_or_else(|| default_extent(&model));
    let xs = grid(x_max, config.density.points.unwrap_or(201))?;
    let law = StationaryLaw::new(model)?;
    let text = density_table(&law, &xs, common.format.unwrap_or(Format::Csv))?;
    emit(common, &text)?;
    Ok(EXIT_OK)
}

fn sample(common: &Common) -> Result<i32, RunError> {
    let (model, config) = parse_config(&common.config)?;
    let seed = common.seed.unwrap_or(config.seed());
    let n = config.sample.n;
    if n == 0 {
        return Err(ConfigError::Invalid("sample.n must be positive".into()).into());
    }
    let law = StationaryLaw::new(model)?;
    let xs = law.sample(seed, n);
    let text = match common.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            eprintln!("seed = {seed}, n = {n}");
            let mut s = String::from("x\n");
            for x in &xs {
                s.push_str(&fmt17(*x));
                s.push('\n');
            }
            s
        }
        Format::Json => json_text(&serde_json::json!({
            "model": law.model().spec(),
            "seed": seed,
            "n": n,
            "samples": xs,
        })),
    };
    emit(common, &text)?;
    Ok(EXIT_OK)
}

fn simulate(common: &Common, path_output: Option<&Path>, threads: usize) -> Result<i32, RunError> {
    let (model, config) = parse_config(&common.config)?;
    let seed = common.seed.unwrap_or(config.seed());
    let sc = &config.simulate;
    let mut opts = SimOptions::new(sc.horizon, sc.dt, sc.x0, seed);
    if let Some(b) = sc.burn_in {
        opts.burn_in = Some(b);
    }
    opts.batches = sc.batches;
    opts.bandwidths = sc.bandwidths.clone();
    opts.thetas = sc.thetas.clone();
    opts.reflection = sc.reflection;
    if sc.histogram_bins > 0 {
        let top = sc.histogram_max.unwrap_or_else(|| default_extent(&model));
        opts.histogram_edges = grid(top, sc.histogram_bins + 1)?;
    }
    if path_output.is_some() {
        opts.record_stride = sc.path_stride.max(1);
    }
    let simulator = match sc.method {
        Method::Euler => Simulator::Euler,
        Method::Crossing => {
            let (c0, d0) = default_switch_levels(&model);
            Simulator::Crossing {
                c: sc.c.unwrap_or(c0),
                d: sc.d.unwrap_or(d0),
            }
        }
    };
    if sc.n_paths == 0 {
        return Err(ConfigError::Invalid("simulate.n_paths must be positive".into()).into());
    }
    let (stats, paths) = run_ensemble(&model, &opts, simulator, sc.n_paths, threads)?;
    if let Some(path) = path_output {
        let mut buf = Vec::new();
        paths[0].write_csv(1, &mut buf)?;
        fs::write(path, buf)?;
    }
    let text = match common.format.unwrap_or(Format::Json) {
        Format::Json => {
            let mut summary = stats.to_json();
            summary["model"] = serde_json::to_value(model.spec()).expect("spec serializes");
            summary["simulator"] = serde_json::to_value(simulator).expect("simulator serializes");
            summary["reflection"] = serde_json::to_value(sc.reflection).expect("serializes");
            json_text(&summary)
        }
        Format::Csv => {
            eprintln!(
                "seed = {seed}, n_paths = {}, horizon = {}, dt = {}",
                sc.n_paths, sc.horizon, sc.dt
            );
            let mut s = String::from("lower,upper,mass\n");
            if let Some(h) = &stats.histogram {
                for (i, m) in h.masses.iter().enumerate() {
                    let _ = writeln!(s, "{},{},{}", fmt17(h.edges[i]), fmt17(h.edges[i + 1]), fmt17(*m));
                }
            }
            s
        }
    };
    emit(common, &text)?;
    Ok(EXIT_OK)
}

fn verify(common: &Common, strict: bool, threads: usize) -> Result<i32, RunError> {
    let (model, config) = parse_config(&common.config)?;
    let mut budget = config.verify.clone();
    if let Some(seed) = common.seed.or(config.seed) {
        budget.seed = seed;
    }
    if threads != 0 {
        budget.threads = threads;
    }
    let report = run_verification(&model, &budget)?;
    let text = match common.format.unwrap_or(Format::Json) {
        Format::Json => {
            let mut s = report.to_json();
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = String::from("name,statistic,tolerance,stderr,passed\n");
            for c in &report.checks {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    c.name,
                    c.statistic.map(fmt17).unwrap_or_default(),
                    fmt17(c.tolerance),
                    c.stderr.map(fmt17).unwrap_or_default(),
                    c.passed
                );
            }
            s
        }
    };
    emit(common, &text)?;
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!("check failed: {} (statistic {:?}, tolerance {})", c.name, c.statistic, c.tolerance);
    }
    Ok(if strict && !report.passed() {
        EXIT_VERIFY_FAILED
    } else {
        EXIT_OK
    })
}

fn approx(common: &Common) -> Result<i32, RunError> {
    let config = load_config(&common.config)?;
    let ac = config.approx.as_ref().ok_or(ConfigError::Missing("approx"))?;
    ac.sigma.validate()?;
    ac.drift.validate()?;
    let result = conjectured_density_general(&ac.sigma, &ac.drift, ApproxGrid::new(ac.x_max, ac.levels))?;
    let xs = grid(ac.x_max, ac.points)?;
    let text = match common.format.unwrap_or(Format::Csv) {
        Format::Csv => density_table(&result.law, &xs, Format::Csv)?,
        Format::Json => {
            let mut density = Vec::with_capacity(xs.len());
            for &x in &xs {
                density.push(result.law.density_at(x)?);
            }
            json_text(&serde_json::json!({
                "grid": result.grid,
                "stability_integral": result.stability_integral,
                "weights": result.law.weights(),
                "x": xs,
                "density": density,
            }))
        }
    };
    emit(common, &text)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct LevelInfo {
    level: usize,
    lower: f64,
    upper: Option<f64>,
    sigma: f64,
    drift: f64,
    beta: f64,
    log_eta: f64,
    weight: Option<f64>,
}

fn info(common: &Common) -> Result<i32, RunError> {
    let (model, _) = parse_config(&common.config)?;
    let stability = model.stability();
    let weights = match stability {
        Stability::Stable => Some(StationaryLaw::new(model.clone())?.weights().to_vec()),
        _ => None,
    };
    let rows: Vec<LevelInfo> = model
        .segments()
        .map(|s| LevelInfo {
            level: s.index + 1,
            lower: s.lo,
            upper: s.hi.is_finite().then_some(s.hi),
            sigma: model.sigmas()[s.index],
            drift: model.drifts()[s.index],
            beta: model.betas()[s.index],
            log_eta: model.log_etas()[s.index],
            weight: weights.as_ref().map(|w| w[s.index]),
        })
        .collect();
    let text = match common.format.unwrap_or(Format::Csv) {
        Format::Json => json_text(&serde_json::json!({
            "stability": stability,
            "levels": rows,
        })),
        Format::Csv => {
            let mut s = format!("# stability: {stability}\nlevel,lower,upper,sigma,drift,beta,log_eta,weight\n");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    r.level,
                    fmt17(r.lower),
                    r.upper.map(fmt17).unwrap_or_else(|| "inf".into()),
                    fmt17(r.sigma),
                    fmt17(r.drift),
                    fmt17(r.beta),
                    fmt17(r.log_eta),
                    r.weight.map(fmt17).unwrap_or_default()
                );
            }
            s
        }
    };
    emit(common, &text)?;
    Ok(EXIT_OK)
}
