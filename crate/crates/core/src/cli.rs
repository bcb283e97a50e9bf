//! Experiment configuration, command execution and report rendering for the
//! `matshrink` binary.
//!
//! JSON reports have the shape `{config, results, metadata}`. Only
//! `metadata` (timestamp, version) varies between runs of the same config;
//! `results` is a pure function of the config. Floating-point results are
//! written in scientific notation with 17 significant digits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::error::Error as CoreError;
use crate::estimators::{cross_product_stats, EstimatorKind, EstimatorSpec};
use crate::linalg::Mat;
use crate::oracles::{a_lambda, counterexample_quadratic, scalar_risk_exact};
use crate::replicate;
use crate::risk::{
    dominance_check, make_theta, mc_matrix_risk, paired_risk, tuning_sweep, DominanceReport,
    ThetaScenario, DEFAULT_Z_THRESHOLD,
};
use crate::sampling::{ModelSpec, SeedSpec, VarianceMode};

pub const DEFAULT_N: usize = 6;
pub const DEFAULT_P: usize = 2;
pub const DEFAULT_KAPPA: f64 = 20.0;
pub const DEFAULT_REPS: u64 = 1_000_000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_LAMBDA2_GRID: [f64; 6] = [0.0, 1.0, 4.0, 9.0, 25.0, 100.0];

/// Stream used for the main model draws of every command.
const MAIN_STREAM: u64 = 0;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid value for --{field}: {message}")]
    Usage { field: &'static str, message: String },

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    /// Process exit status: 2 for usage problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } | CliError::Parse { .. } => 2,
            _ => 1,
        }
    }

    fn usage(field: &'static str, message: impl Into<String>) -> Self {
        CliError::Usage {
            field,
            message: message.into(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Risk,
    Dominance,
    Sweep,
    SteinCheck,
    Counterexample,
    OracleTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Zero,
    Spike,
    Random,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Mle,
    DiagonalJs,
    WhitenedJs,
    EfronMorris,
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Mle => EstimatorKind::Mle,
            EstimatorArg::DiagonalJs => EstimatorKind::DiagonalJs,
            EstimatorArg::WhitenedJs => EstimatorKind::WhitenedJs,
            EstimatorArg::EfronMorris => EstimatorKind::EfronMorris,
        }
    }
}

/// Everything needed to reproduce one experiment. Matrices read from files
/// are stored inline so that a config echoed in a report can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: CommandKind,
    pub n: usize,
    pub p: usize,
    pub sigma2: f64,
    pub nu: Option<u32>,
    pub sigma_cov: Option<Mat>,
    pub scenario: ThetaScenario,
    pub estimator: EstimatorKind,
    pub a: f64,
    pub a_grid: Vec<f64>,
    pub lambda2_grid: Vec<f64>,
    pub reps: u64,
    pub master_seed: u64,
    pub z_threshold: f64,
    pub output_format: OutputFormat,
    /// Where to write the report; not echoed, so replays print to stdout
    /// unless `--out` is given again.
    #[serde(skip)]
    pub output_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn model(&self) -> CliResult<ModelSpec> {
        let theta = make_theta(&self.scenario, self.n, self.p)?;
        let variance = match self.nu {
            None => VarianceMode::Known { sigma2: self.sigma2 },
            Some(nu) => VarianceMode::Unknown {
                sigma2: self.sigma2,
                nu,
            },
        };
        Ok(ModelSpec::new(theta, variance, self.sigma_cov.clone())?)
    }

    pub fn estimator_spec(&self) -> EstimatorSpec {
        EstimatorSpec {
            kind: self.estimator,
            a: self.a,
            sigma_known: self.nu.is_none(),
        }
    }

    pub fn seed(&self) -> SeedSpec {
        SeedSpec::new(self.master_seed, MAIN_STREAM)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.n == 0 {
            return Err(CliError::usage("n", "must be at least 1"));
        }
        if self.p == 0 {
            return Err(CliError::usage("p", "must be at least 1"));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(CliError::usage("sigma2", "must be positive"));
        }
        if self.nu == Some(0) {
            return Err(CliError::usage("nu", "must be at least 1"));
        }
        if !self.a.is_finite() {
            return Err(CliError::usage("a", "must be finite"));
        }
        if !(self.z_threshold > 0.0) {
            return Err(CliError::usage("z-threshold", "must be positive"));
        }
        let needs_mc = !matches!(self.command, CommandKind::OracleTable);
        if needs_mc && self.reps < 2 {
            return Err(CliError::usage("reps", "must be at least 2"));
        }
        if matches!(self.command, CommandKind::Sweep) && self.a_grid.is_empty() {
            return Err(CliError::usage("a-grid", "must contain at least one value"));
        }
        if self.a_grid.iter().any(|a| !a.is_finite()) {
            return Err(CliError::usage("a-grid", "values must be finite"));
        }
        if matches!(self.command, CommandKind::SteinCheck | CommandKind::OracleTable) {
            if self.n < 3 {
                return Err(CliError::usage(
                    "n",
                    "the Stein identity and A(lambda^2) need n >= 3 (E[1/||x||^2] is infinite for n <= 2)",
                ));
            }
            if self.lambda2_grid.is_empty() || self.lambda2_grid.iter().any(|l| !(*l >= 0.0)) {
                return Err(CliError::usage("lambda2-grid", "needs non-negative values"));
            }
        }
        if let ThetaScenario::SpikeEqualColumns { kappa, .. } = self.scenario {
            if matches!(self.command, CommandKind::Counterexample) && !(kappa > 0.0) {
                return Err(CliError::usage("kappa", "must be positive"));
            }
        }
        if matches!(self.command, CommandKind::Counterexample)
            && !matches!(self.scenario, ThetaScenario::SpikeEqualColumns { .. })
        {
            return Err(CliError::usage("scenario", "counterexample needs the spike scenario"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// argument parsing

#[derive(Debug, Parser)]
#[command(name = "matshrink", version, about = "Matrix-loss James-Stein shrinkage experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo p×p matrix risk of one estimator.
    Risk(ExperimentArgs),
    /// Paired risk difference against the MLE and a dominance verdict.
    Dominance(ExperimentArgs),
    /// Dominance reports over a grid of tuning constants on common draws.
    Sweep(ExperimentArgs),
    /// Monte Carlo check of the Stein identity against the series for A(λ²).
    SteinCheck(ExperimentArgs),
    /// Equal-column spike: predicted vs simulated uniform-direction risk.
    Counterexample(ExperimentArgs),
    /// Analytic A(λ²) and scalar risk tables (no sampling).
    OracleTable(ExperimentArgs),
    /// Re-run a config, either bare or echoed inside a JSON report.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RuntimeArgs {
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[arg(long, default_value_t = DEFAULT_N)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_P)]
    pub p: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    /// Degrees of freedom of the auxiliary variance estimate; switches to
    /// unknown-variance shrinkage.
    #[arg(long)]
    pub nu: Option<u32>,
    /// CSV file with the p×p row covariance Σ.
    #[arg(long = "sigma-cov")]
    pub sigma_cov: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EstimatorArg::DiagonalJs)]
    pub estimator: EstimatorArg,
    /// Tuning constant (default 1/p, or 3/p for counterexample).
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// Comma-separated tuning constants for sweep and oracle-table.
    #[arg(long = "a-grid", value_delimiter = ',', allow_hyphen_values = true)]
    pub a_grid: Option<Vec<f64>>,
    /// Comma-separated noncentralities for stein-check and oracle-table.
    #[arg(long = "lambda2-grid", value_delimiter = ',')]
    pub lambda2_grid: Option<Vec<f64>>,
    /// Mean scenario (default zero, spike for counterexample).
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    pub kappa: f64,
    /// CSV file with the unit n-vector θ* for the spike scenario.
    #[arg(long = "theta-star")]
    pub theta_star: Option<PathBuf>,
    /// CSV file with the n×p mean matrix for `--scenario file`.
    #[arg(long)]
    pub theta: Option<PathBuf>,
    /// Entry scale for `--scenario random`.
    #[arg(long = "theta-scale", default_value_t = 1.0)]
    pub theta_scale: f64,
    /// Seed for `--scenario random`.
    #[arg(long = "theta-seed", default_value_t = 0)]
    pub theta_seed: u64,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    pub reps: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long = "z-threshold", default_value_t = DEFAULT_Z_THRESHOLD)]
    pub z_threshold: f64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub runtime: RuntimeArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub runtime: RuntimeArgs,
}

/// Reads a CSV of reals: newline-separated rows, comma-separated values, no
/// header.
pub fn read_matrix_csv(path: &Path) -> CliResult<Mat> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_matrix_csv(&text).map_err(|message| CliError::Parse {
        path: path.to_path_buf(),
        message,
    })
}

pub fn parse_matrix_csv(text: &str) -> std::result::Result<Mat, String> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|field| {
                f64::from_str(field.trim())
                    .map_err(|e| format!("line {}: {:?}: {e}", lineno + 1, field.trim()))
            })
            .collect::<std::result::Result<Vec<f64>, String>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("no data".into());
    }
    Mat::from_rows(&rows).map_err(|e| e.to_string())
}

fn default_a_grid(p: usize) -> Vec<f64> {
    let edge = 2.0 / p as f64;
    vec![
        -0.2,
        -0.1,
        0.25 * edge,
        0.5 * edge,
        0.75 * edge,
        edge,
        edge + 0.25,
        edge + 0.5,
    ]
}

impl ExperimentArgs {
    pub fn into_config(self, command: CommandKind) -> CliResult<ExperimentConfig> {
        let (n, p) = (self.n, self.p);
        if p == 0 {
            return Err(CliError::usage("p", "must be at least 1"));
        }
        let default_scenario = match command {
            CommandKind::Counterexample => ScenarioArg::Spike,
            _ => ScenarioArg::Zero,
        };
        let scenario = match self.scenario.unwrap_or(default_scenario) {
            ScenarioArg::Zero => ThetaScenario::Zero,
            ScenarioArg::Spike => {
                let theta_star = match &self.theta_star {
                    None => None,
                    Some(path) => Some(read_matrix_csv(path)?.into_vec()),
                };
                ThetaScenario::SpikeEqualColumns {
                    kappa: self.kappa,
                    theta_star,
                }
            }
            ScenarioArg::Random => ThetaScenario::RandomGaussian {
                scale: self.theta_scale,
                seed: self.theta_seed,
            },
            ScenarioArg::File => {
                let path = self
                    .theta
                    .as_ref()
                    .ok_or_else(|| CliError::usage("theta", "required with --scenario file"))?;
                ThetaScenario::Custom {
                    theta: read_matrix_csv(path)?,
                }
            }
        };
        let sigma_cov = self.sigma_cov.as_deref().map(read_matrix_csv).transpose()?;
        let default_a = match command {
            CommandKind::Counterexample => 3.0 / p as f64,
            _ => 1.0 / p as f64,
        };
        let a_grid = match (self.a_grid, command) {
            (Some(g), _) => g,
            (None, CommandKind::Sweep) => default_a_grid(p),
            (None, CommandKind::OracleTable) => vec![0.0, 0.5, 1.0, 1.5, 2.0],
            (None, _) => Vec::new(),
        };
        let config = ExperimentConfig {
            command,
            n,
            p,
            sigma2: self.sigma2,
            nu: self.nu,
            sigma_cov,
            scenario,
            estimator: self.estimator.into(),
            a: self.a.unwrap_or(default_a),
            a_grid,
            lambda2_grid: self
                .lambda2_grid
                .unwrap_or_else(|| DEFAULT_LAMBDA2_GRID.to_vec()),
            reps: self.reps,
            master_seed: self.seed,
            z_threshold: self.z_threshold,
            output_format: self.format,
            output_path: self.out,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Loads a config from JSON, accepting either a bare config or a report
/// that embeds one under `"config"`.
pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |e: serde_json::Error| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let value: Value = serde_json::from_str(&text).map_err(parse_err)?;
    let config_value = match value.get("config") {
        Some(c) if value.get("results").is_some() => c.clone(),
        _ => value,
    };
    let config: ExperimentConfig = serde_json::from_value(config_value).map_err(parse_err)?;
    config.validate()?;
    Ok(config)
}

// ---------------------------------------------------------------------------
// execution

/// The deterministic part of a report: JSON results plus a flat table for
/// CSV and text output.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub results: Value,
    pub table: Table,
    pub summary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    Value::Number(serde_json::Number::from_str(&fmt_num(x)).expect("formatted float is valid JSON"))
}

fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

fn mat_value(m: &Mat) -> Value {
    json!({ "rows": m.rows(), "cols": m.cols(), "data": nums(m.as_slice()) })
}

fn seed_value(seed: &SeedSpec) -> Value {
    json!({ "master_seed": seed.master_seed, "stream_id": seed.stream_id })
}

fn dominance_value(report: &DominanceReport) -> Value {
    let grid: Vec<Value> = report
        .alpha_grid_stats
        .iter()
        .map(|s| json!({ "alpha": nums(&s.alpha), "value": num(s.value), "se": num(s.se) }))
        .collect();
    json!({
        "diff_mean": mat_value(&report.diff_mean),
        "diff_se": mat_value(&report.diff_se),
        "min_eig": num(report.min_eig),
        "min_eig_dir": nums(&report.min_eig_dir),
        "projected_se": num(report.projected_se),
        "alpha_grid": grid,
        "z_threshold": num(report.z_threshold),
        "verdict": report.verdict.as_str(),
    })
}

fn alpha_label(alpha: &[f64]) -> String {
    alpha.iter().map(|&a| fmt_num(a)).collect::<Vec<_>>().join(";")
}

/// Runs a validated config on the current rayon pool.
pub fn execute(config: &ExperimentConfig) -> CliResult<Report> {
    config.validate()?;
    match config.command {
        CommandKind::Risk => cmd_risk(config),
        CommandKind::Dominance => cmd_dominance(config),
        CommandKind::Sweep => cmd_sweep(config),
        CommandKind::SteinCheck => cmd_stein_check(config),
        CommandKind::Counterexample => cmd_counterexample(config),
        CommandKind::OracleTable => cmd_oracle_table(config),
    }
}

pub fn cmd_risk(config: &ExperimentConfig) -> CliResult<Report> {
    let model = config.model()?;
    let spec = config.estimator_spec();
    let seed = config.seed();
    let est = mc_matrix_risk(&model, &spec, config.reps, &seed)?;

    let mut table = Table::new(&["row", "col", "mean", "se"]);
    for i in 0..model.p {
        for j in 0..model.p {
            table.push(vec![
                i.to_string(),
                j.to_string(),
                fmt_num(est.mean[(i, j)]),
                fmt_num(est.se[(i, j)]),
            ]);
        }
    }
    let summary = vec![
        format!("estimator {} (a = {})", spec.kind.name(), fmt_num(spec.a)),
        format!("trace of risk: {}", fmt_num(est.mean.trace())),
        format!("MLE reference n*sigma2 per diagonal entry: {}", fmt_num(model.n as f64 * config.sigma2)),
    ];
    Ok(Report {
        results: json!({
            "estimator": spec.kind.name(),
            "a": num(spec.a),
            "mean": mat_value(&est.mean),
            "se": mat_value(&est.se),
            "reps": est.reps,
            "seed": seed_value(&est.seed),
        }),
        table,
        summary,
    })
}

pub fn cmd_dominance(config: &ExperimentConfig) -> CliResult<Report> {
    let model = config.model()?;
    let spec = config.estimator_spec();
    let seed = config.seed();
    let paired = paired_risk(&model, &spec, config.reps, &seed)?;
    let report = dominance_check(&paired.diff, config.z_threshold)?;

    let mut table = Table::new(&["alpha", "value", "se"]);
    for s in &report.alpha_grid_stats {
        table.push(vec![alpha_label(&s.alpha), fmt_num(s.value), fmt_num(s.se)]);
    }
    table.push(vec![
        format!("min-eig:{}", alpha_label(&report.min_eig_dir)),
        fmt_num(report.min_eig),
        fmt_num(report.projected_se),
    ]);
    let summary = vec![
        format!("estimator {} (a = {}), 2/p = {}", spec.kind.name(), fmt_num(spec.a), fmt_num(2.0 / model.p as f64)),
        format!("min eigenvalue of R0 - Ra: {} (se {})", fmt_num(report.min_eig), fmt_num(report.projected_se)),
        format!("verdict: {}", report.verdict.as_str()),
    ];
    let mut results = dominance_value(&report);
    let obj = results.as_object_mut().expect("object");
    obj.insert("estimator".into(), json!(spec.kind.name()));
    obj.insert("a".into(), num(spec.a));
    obj.insert("risk_mean".into(), mat_value(&paired.risk.mean));
    obj.insert("risk_se".into(), mat_value(&paired.risk.se));
    obj.insert("reps".into(), json!(config.reps));
    obj.insert("seed".into(), seed_value(&seed));
    Ok(Report {
        results,
        table,
        summary,
    })
}

pub fn cmd_sweep(config: &ExperimentConfig) -> CliResult<Report> {
    let model = config.model()?;
    let spec = config.estimator_spec();
    let seed = config.seed();
    let reports = tuning_sweep(&model, &spec, &config.a_grid, config.reps, &seed, config.z_threshold)?;

    let mut table = Table::new(&["a", "uniform_value", "uniform_se", "min_eig", "min_eig_se", "verdict"]);
    let mut rows = Vec::new();
    for (a, r) in &reports {
        let u = r.uniform();
        table.push(vec![
            fmt_num(*a),
            fmt_num(u.value),
            fmt_num(u.se),
            fmt_num(r.min_eig),
            fmt_num(r.projected_se),
            r.verdict.as_str().to_string(),
        ]);
        let mut v = dominance_value(r);
        v.as_object_mut().expect("object").insert("a".into(), num(*a));
        rows.push(v);
    }
    let dominating: Vec<String> = reports
        .iter()
        .filter(|(_, r)| r.verdict == crate::risk::Verdict::Dominates)
        .map(|(a, _)| fmt_num(*a))
        .collect();
    let summary = vec![
        format!("estimator {}, 2/p = {}", spec.kind.name(), fmt_num(2.0 / model.p as f64)),
        format!("a values with DOMINATES: [{}]", dominating.join(", ")),
    ];
    Ok(Report {
        results: json!({
            "estimator": spec.kind.name(),
            "sweep": rows,
            "reps": config.reps,
            "seed": seed_value(&seed),
        }),
        table,
        summary,
    })
}

/// One λ² cell of the Stein identity check, in units of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteinCell {
    pub lambda2: f64,
    /// `E[xᵀ(x−θ)/‖x‖²]`
    pub lhs: f64,
    pub lhs_se: f64,
    /// `(n−2)σ²·E[1/‖x‖²]`
    pub rhs: f64,
    pub rhs_se: f64,
    /// Standard error of the paired difference `lhs − rhs`.
    pub diff_se: f64,
    pub series: f64,
}

impl SteinCell {
    /// Largest discrepancy among the three pairwise comparisons, in SEs.
    pub fn max_z(&self) -> f64 {
        let z = |d: f64, se: f64| if se > 0.0 { d.abs() / se } else if d == 0.0 { 0.0 } else { f64::INFINITY };
        z(self.lhs - self.rhs, self.diff_se)
            .max(z(self.lhs - self.series, self.lhs_se))
            .max(z(self.rhs - self.series, self.rhs_se))
    }
}

/// Both sides of the Stein identity for `x ~ N_n(θ, σ²I)` with
/// `‖θ‖²/σ² = λ²`, estimated on the same draws.
pub fn stein_cell(n: usize, sigma2: f64, lambda2: f64, reps: u64, seed: &SeedSpec) -> CliResult<SteinCell> {
    use rand::Rng;
    use rand_distr::StandardNormal;

    let series = a_lambda(n, lambda2)?;
    let sigma = sigma2.sqrt();
    let shift = (lambda2 * sigma2).sqrt();
    let m = (n - 2) as f64;
    let moments = replicate::run(reps, &[2], |r, out| {
        let mut rng = seed.rng(r);
        let mut norm2 = 0.0;
        let mut cross = 0.0;
        for i in 0..n {
            let noise = sigma * rng.sample::<f64, _>(StandardNormal);
            let xi = if i == 0 { shift + noise } else { noise };
            norm2 += xi * xi;
            cross += xi * noise;
        }
        out[0] = cross / norm2;
        out[1] = m * sigma2 / norm2;
        Ok(())
    })?;
    let mo = &moments[0];
    Ok(SteinCell {
        lambda2,
        lhs: mo.mean()[0],
        lhs_se: mo.std_error(0),
        rhs: mo.mean()[1],
        rhs_se: mo.std_error(1),
        diff_se: mo.linear_combination(&[1.0, -1.0]).1,
        series,
    })
}

pub fn cmd_stein_check(config: &ExperimentConfig) -> CliResult<Report> {
    let z = config.z_threshold;
    let mut table = Table::new(&["lambda2", "lhs", "lhs_se", "rhs", "rhs_se", "diff_se", "series_A", "flag"]);
    let mut cells = Vec::new();
    let mut flagged = 0;
    for (idx, &lambda2) in config.lambda2_grid.iter().enumerate() {
        let seed = SeedSpec::new(config.master_seed, idx as u64 + 1);
        let c = stein_cell(config.n, config.sigma2, lambda2, config.reps, &seed)?;
        let flag = c.max_z() > z;
        flagged += flag as usize;
        table.push(vec![
            fmt_num(lambda2),
            fmt_num(c.lhs),
            fmt_num(c.lhs_se),
            fmt_num(c.rhs),
            fmt_num(c.rhs_se),
            fmt_num(c.diff_se),
            fmt_num(c.series),
            flag.to_string(),
        ]);
        cells.push(json!({
            "lambda2": num(lambda2),
            "lhs": num(c.lhs), "lhs_se": num(c.lhs_se),
            "rhs": num(c.rhs), "rhs_se": num(c.rhs_se),
            "diff_se": num(c.diff_se),
            "series_A": num(c.series),
            "max_z": num(c.max_z()),
            "flag": flag,
        }));
    }

    let mut results = Map::new();
    results.insert("n".into(), json!(config.n));
    results.insert("cells".into(), Value::Array(cells));
    let mut summary = vec![format!(
        "Stein identity, n = {}: {flagged} of {} cells disagree at {} SE",
        config.n,
        config.lambda2_grid.len(),
        fmt_num(z)
    )];

    if let Some(nu) = config.nu {
        let model = config.model()?;
        let spec = EstimatorSpec::diagonal_unknown(config.a);
        let stats = cross_product_stats(&model, &spec, config.reps, &config.seed())?;
        let flag = stats.max_z() > z;
        summary.push(format!(
            "unknown variance (nu = {nu}): max |delta - gamma| / se = {}{}",
            fmt_num(stats.max_z()),
            if flag { " (FLAG)" } else { "" }
        ));
        results.insert(
            "cross_product".into(),
            json!({
                "nu": nu,
                "delta": nums(&stats.delta), "delta_se": nums(&stats.delta_se),
                "gamma": nums(&stats.gamma), "gamma_se": nums(&stats.gamma_se),
                "diff_se": nums(&stats.diff_se),
                "max_z": num(stats.max_z()),
                "flag": flag,
            }),
        );
    }
    results.insert("reps".into(), json!(config.reps));
    Ok(Report {
        results: Value::Object(results),
        table,
        summary,
    })
}

pub fn cmd_counterexample(config: &ExperimentConfig) -> CliResult<Report> {
    let kappa = match config.scenario {
        ThetaScenario::SpikeEqualColumns { kappa, .. } => kappa,
        _ => return Err(CliError::usage("scenario", "counterexample needs the spike scenario")),
    };
    let model = config.model()?;
    let spec = EstimatorSpec {
        kind: EstimatorKind::DiagonalJs,
        ..config.estimator_spec()
    };
    let seed = config.seed();
    let p = model.p;
    let predicted = counterexample_quadratic(model.n, p, kappa, spec.a)?;
    let paired = paired_risk(&model, &spec, config.reps, &seed)?;
    let report = dominance_check(&paired.diff, config.z_threshold)?;
    let uniform = vec![1.0 / (p as f64).sqrt(); p];
    let (mc, mc_se) = paired.risk.project(&uniform);
    let (diff_u, diff_u_se) = paired.diff.project(&uniform);
    let tolerance = (4.0 * mc_se).max(0.01);
    let agrees = (mc - predicted).abs() <= tolerance;
    let n = model.n as f64;

    let mut table = Table::new(&["quantity", "value", "se"]);
    table.push(vec!["predicted".into(), fmt_num(predicted), String::new()]);
    table.push(vec!["mc_uniform_risk".into(), fmt_num(mc), fmt_num(mc_se)]);
    table.push(vec!["mc_uniform_diff".into(), fmt_num(diff_u), fmt_num(diff_u_se)]);
    table.push(vec!["min_eig".into(), fmt_num(report.min_eig), fmt_num(report.projected_se)]);
    let summary = vec![
        format!("n = {}, p = {p}, kappa = {}, a = {} (2/p = {})", model.n, fmt_num(kappa), fmt_num(spec.a), fmt_num(2.0 / p as f64)),
        format!("predicted alpha'R alpha = {}", fmt_num(predicted)),
        format!("simulated alpha'R alpha = {} (se {})", fmt_num(mc), fmt_num(mc_se)),
        format!("agreement within {}: {agrees}", fmt_num(tolerance)),
        format!("verdict: {}", report.verdict.as_str()),
    ];
    Ok(Report {
        results: json!({
            "n": model.n,
            "p": p,
            "kappa": num(kappa),
            "a": num(spec.a),
            "predicted": num(predicted),
            "mc_uniform_risk": num(mc),
            "mc_uniform_risk_se": num(mc_se),
            "difference": num(mc - predicted),
            "tolerance": num(tolerance),
            "agrees": agrees,
            "exceeds_n": mc > n,
            "mc_uniform_diff": num(diff_u),
            "mc_uniform_diff_se": num(diff_u_se),
            "dominance": dominance_value(&report),
            "reps": config.reps,
            "seed": seed_value(&seed),
        }),
        table,
        summary,
    })
}

pub fn cmd_oracle_table(config: &ExperimentConfig) -> CliResult<Report> {
    let n = config.n;
    let mut table = Table::new(&["lambda2", "A", "a", "scalar_risk"]);
    let mut rows = Vec::new();
    for &lambda2 in &config.lambda2_grid {
        let big_a = a_lambda(n, lambda2)?;
        let mut risks = Vec::new();
        for &a in &config.a_grid {
            let r = scalar_risk_exact(n, config.sigma2, lambda2, a)?;
            table.push(vec![fmt_num(lambda2), fmt_num(big_a), fmt_num(a), fmt_num(r)]);
            risks.push(json!({ "a": num(a), "risk": num(r) }));
        }
        let min_risk = scalar_risk_exact(n, config.sigma2, lambda2, 1.0)?;
        rows.push(json!({
            "lambda2": num(lambda2),
            "A": num(big_a),
            "risk": risks,
            "min_risk_at_a1": num(min_risk),
        }));
    }
    Ok(Report {
        results: json!({ "n": n, "sigma2": num(config.sigma2), "rows": rows }),
        table,
        summary: vec![format!("A(lambda^2) and scalar risk for n = {n}")],
    })
}

// ---------------------------------------------------------------------------
// rendering

pub fn render(config: &ExperimentConfig, report: &Report, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let timestamp = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let doc = json!({
                "config": config,
                "results": report.results,
                "metadata": {
                    "timestamp": timestamp,
                    "version": env!("CARGO_PKG_VERSION"),
                },
            });
            let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
            s.push('\n');
            s
        }
        OutputFormat::Csv => report.table.to_csv(),
        OutputFormat::Text => {
            let mut s = String::new();
            for line in &report.summary {
                let _ = writeln!(s, "{line}");
            }
            let _ = writeln!(s);
            let widths: Vec<usize> = (0..report.table.header.len())
                .map(|c| {
                    std::iter::once(&report.table.header[c])
                        .chain(report.table.rows.iter().map(|r| &r[c]))
                        .map(String::len)
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            let line = |cells: &[String]| {
                cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:>w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            let _ = writeln!(s, "{}", line(&report.table.header));
            for row in &report.table.rows {
                let _ = writeln!(s, "{}", line(row));
            }
            s
        }
    }
}

/// Canonical serialization of the deterministic payload.
pub fn results_payload(report: &Report) -> String {
    serde_json::to_string(&report.results).expect("serializable")
}

fn run_config(config: &ExperimentConfig, runtime: &RuntimeArgs) -> CliResult<String> {
    let threads = runtime.threads.unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    });
    let report = replicate::with_threads(threads, || execute(config))??;
    Ok(render(config, &report, config.output_format))
}

/// Parses arguments, runs the command and writes the output. Returns the
/// process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    let (config, runtime) = match command {
        Command::Risk(a) => (a.clone().into_config(CommandKind::Risk)?, a.runtime),
        Command::Dominance(a) => (a.clone().into_config(CommandKind::Dominance)?, a.runtime),
        Command::Sweep(a) => (a.clone().into_config(CommandKind::Sweep)?, a.runtime),
        Command::SteinCheck(a) => (a.clone().into_config(CommandKind::SteinCheck)?, a.runtime),
        Command::Counterexample(a) => (a.clone().into_config(CommandKind::Counterexample)?, a.runtime),
        Command::OracleTable(a) => (a.clone().into_config(CommandKind::OracleTable)?, a.runtime),
        Command::Replay(r) => {
            let mut config = load_config(&r.config)?;
            if let Some(f) = r.format {
                config.output_format = f;
            }
            config.output_path = r.out;
            (config, r.runtime)
        }
    };
    let output = run_config(&config, &runtime)?;
    match &config.output_path {
        Some(path) => std::fs::write(path, output).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        }),
        None => {
            print!("{output}");
            Ok(())
        }
    }
}
