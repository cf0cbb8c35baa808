//! Configuration-driven command surface: solve, verify, simulate, validate
//! and sweep, each writing machine-readable files into the output
//! directory.
//!
//! Configuration files are flat `key = value` text with section prefixes,
//! e.g. `model.lambda = 1` or `sim.dt = 0.001`; `#` starts a comment.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Formulation, Model, ModelError, ModelParams};
use crate::sim::{
    estimate_risk_mc, horizon_for, simulate_batch, Direction, Policy, RiskEstimate, SimConfig, SimError,
};
use crate::solver::{
    bayes_risk, check_admissibility, solve_boundaries, verify_variational, SolverError, ThresholdSolution,
    VariationalReport,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("Monte Carlo validation failed at {0} of the compared points")]
    Validation(usize),
}

impl CliError {
    /// 0 success, 1 usage, 2 inadmissible, 3 verification failure,
    /// 4 numerical non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Io { .. } => 1,
            CliError::Solver(SolverError::Inadmissible(_)) => 2,
            CliError::Solver(SolverError::Verification(_)) | CliError::Validation(_) => 3,
            CliError::Solver(SolverError::Model(ModelError::InvalidParams(_))) => 1,
            CliError::Solver(_) => 4,
            CliError::Sim(SimError::InvalidConfig(_) | SimError::Model(ModelError::InvalidParams(_))) => 1,
            CliError::Sim(_) => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Verify,
    Simulate,
    Validate,
    Sweep,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::Solve,
        Command::Verify,
        Command::Simulate,
        Command::Validate,
        Command::Sweep,
    ];

    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Verify => "verify",
            Command::Simulate => "simulate",
            Command::Validate => "validate",
            Command::Sweep => "sweep",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| format!("unknown command '{}'", s.trim()))
    }
}

/// Model parameter varied by `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Mu0,
    Mu1,
    Sigma,
    Lambda,
    R,
    A,
    B,
}

impl SweepParam {
    const ALL: [SweepParam; 7] = [
        SweepParam::Mu0,
        SweepParam::Mu1,
        SweepParam::Sigma,
        SweepParam::Lambda,
        SweepParam::R,
        SweepParam::A,
        SweepParam::B,
    ];

    fn name(self) -> &'static str {
        match self {
            SweepParam::Mu0 => "mu0",
            SweepParam::Mu1 => "mu1",
            SweepParam::Sigma => "sigma",
            SweepParam::Lambda => "lambda",
            SweepParam::R => "r",
            SweepParam::A => "a",
            SweepParam::B => "b",
        }
    }

    pub fn apply(self, p: &mut ModelParams, v: f64) {
        match self {
            SweepParam::Mu0 => p.mu0 = v,
            SweepParam::Mu1 => p.mu1 = v,
            SweepParam::Sigma => p.sigma = v,
            SweepParam::Lambda => p.lambda = v,
            SweepParam::R => p.r = v,
            SweepParam::A => p.a = v,
            SweepParam::B => p.b = v,
        }
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        SweepParam::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| format!("unknown sweep parameter '{}'", s.trim()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub grid_n: usize,
    /// Added to the solved lower threshold before checking.
    pub lower_shift: f64,
    /// Added to the solved upper threshold before checking.
    pub upper_shift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOptions {
    pub points: Vec<f64>,
    pub phases: Vec<usize>,
    /// With `auto_horizon`, each point runs to the horizon at which
    /// `e^{−rT}/r` is this fraction of the closed-form value.
    pub horizon_fraction: f64,
    pub auto_horizon: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub formulation: Formulation,
    pub sim: SimConfig,
    pub output_dir: PathBuf,
    pub commands: Vec<Command>,
    /// Points of the π grid in `value_function.csv`.
    pub value_grid_n: usize,
    pub verify: VerifyOptions,
    /// Phase in which `simulate` starts; the belief is `model.pi0`.
    pub simulate_phase: usize,
    pub validate: ValidateOptions,
    pub sweep_param: SweepParam,
    pub sweep_values: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: ModelParams::baseline(),
            formulation: Formulation::F1,
            sim: SimConfig::default(),
            output_dir: PathBuf::from("out"),
            commands: vec![Command::Solve],
            value_grid_n: 201,
            verify: VerifyOptions {
                grid_n: 181,
                lower_shift: 0.0,
                upper_shift: 0.0,
            },
            simulate_phase: 0,
            validate: ValidateOptions {
                points: vec![0.2, 0.5, 0.8],
                phases: vec![0, 1],
                horizon_fraction: 0.005,
                auto_horizon: true,
            },
            sweep_param: SweepParam::A,
            sweep_values: vec![0.5, 1.0, 2.0],
        }
    }
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<T>().map_err(|e| format!("'{}': {e}", t.trim())))
        .collect()
}

fn parse_one<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.parse::<T>().map_err(|e| format!("'{s}': {e}"))
}

impl RunConfig {
    /// Parses `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| CliError::Config { line: n + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
            c.set(key.trim(), value.trim()).map_err(err)?;
        }
        c.check().map_err(|msg| CliError::Config { line: 0, msg })?;
        Ok(c)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let p = &mut self.params;
        match key {
            "model.mu0" => p.mu0 = parse_one(v)?,
            "model.mu1" => p.mu1 = parse_one(v)?,
            "model.sigma" => p.sigma = parse_one(v)?,
            "model.lambda" => p.lambda = parse_one(v)?,
            "model.r" => p.r = parse_one(v)?,
            "model.a" => p.a = parse_one(v)?,
            "model.b" => p.b = parse_one(v)?,
            "model.pi0" => p.pi0 = parse_one(v)?,
            "formulation" => self.formulation = parse_one(v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "commands" => self.commands = parse_list(v)?,
            "sim.dt" => self.sim.dt = parse_one(v)?,
            "sim.horizon" => self.sim.horizon = parse_one(v)?,
            "sim.n_paths" => self.sim.n_paths = parse_one(v)?,
            "sim.seed" => self.sim.seed = parse_one(v)?,
            "sim.series_cutoff" => self.sim.series_cutoff = parse_one(v)?,
            "sim.threads" => {
                self.sim.threads = match v {
                    "" | "auto" => None,
                    s => Some(parse_one(s)?),
                }
            }
            "output.grid_n" => self.value_grid_n = parse_one(v)?,
            "verify.grid_n" => self.verify.grid_n = parse_one(v)?,
            "verify.lower_shift" => self.verify.lower_shift = parse_one(v)?,
            "verify.upper_shift" => self.verify.upper_shift = parse_one(v)?,
            "simulate.phase" => self.simulate_phase = parse_one(v)?,
            "validate.points" => self.validate.points = parse_list(v)?,
            "validate.phases" => self.validate.phases = parse_list(v)?,
            "validate.horizon_fraction" => self.validate.horizon_fraction = parse_one(v)?,
            "validate.auto_horizon" => self.validate.auto_horizon = parse_one(v)?,
            "sweep.param" => self.sweep_param = parse_one(v)?,
            "sweep.values" => self.sweep_values = parse_list(v)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    fn check(&self) -> Result<(), String> {
        self.params.validate().map_err(|e| e.to_string())?;
        self.sim.validate().map_err(|e| e.to_string())?;
        if self.commands.is_empty() {
            return Err("commands must not be empty".into());
        }
        if self.value_grid_n < 2 || self.verify.grid_n < 2 {
            return Err("grid sizes must be at least 2".into());
        }
        if self.simulate_phase > 1 || self.validate.phases.iter().any(|&i| i > 1) {
            return Err("phases are 0 or 1".into());
        }
        if self.validate.points.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err("validate.points must lie in [0, 1]".into());
        }
        if !(self.validate.horizon_fraction > 0.0) {
            return Err("validate.horizon_fraction must be positive".into());
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let s = &self.sim;
        let lines = [
            format!("model.mu0 = {}", p.mu0),
            format!("model.mu1 = {}", p.mu1),
            format!("model.sigma = {}", p.sigma),
            format!("model.lambda = {}", p.lambda),
            format!("model.r = {}", p.r),
            format!("model.a = {}", p.a),
            format!("model.b = {}", p.b),
            format!("model.pi0 = {}", p.pi0),
            format!("formulation = {}", self.formulation),
            format!("output_dir = {}", self.output_dir.display()),
            format!("commands = {}", join(&self.commands)),
            format!("sim.dt = {}", s.dt),
            format!("sim.horizon = {}", s.horizon),
            format!("sim.n_paths = {}", s.n_paths),
            format!("sim.seed = {}", s.seed),
            format!("sim.series_cutoff = {}", s.series_cutoff),
            format!("sim.threads = {}", s.threads.map_or("auto".to_string(), |n| n.to_string())),
            format!("output.grid_n = {}", self.value_grid_n),
            format!("verify.grid_n = {}", self.verify.grid_n),
            format!("verify.lower_shift = {}", self.verify.lower_shift),
            format!("verify.upper_shift = {}", self.verify.upper_shift),
            format!("simulate.phase = {}", self.simulate_phase),
            format!("validate.points = {}", join(&self.validate.points)),
            format!("validate.phases = {}", join(&self.validate.phases)),
            format!("validate.horizon_fraction = {}", self.validate.horizon_fraction),
            format!("validate.auto_horizon = {}", self.validate.auto_horizon),
            format!("sweep.param = {}", self.sweep_param.name()),
            format!("sweep.values = {}", join(&self.sweep_values)),
        ];
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        RunConfig::parse(&fs::read_to_string(path).map_err(io_err(path))?)
    }
}

/// Contents of `solution.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub params: ModelParams,
    pub solution: ThresholdSolution,
}

/// Contents of `verify.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyFile {
    pub lower: f64,
    pub upper: f64,
    pub lower_shift: f64,
    pub upper_shift: f64,
    pub passed: bool,
    pub report: VariationalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub phase: usize,
    pub pi: f64,
    pub closed_form: f64,
    pub estimate: RiskEstimate,
    pub horizon: f64,
    /// `3·stderr + truncation_bound`.
    pub tolerance: f64,
    pub passed: bool,
}

/// Contents of `validate.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateFile {
    pub formulation: Formulation,
    pub params: ModelParams,
    pub sim: SimConfig,
    pub lower: f64,
    pub upper: f64,
    pub rows: Vec<ValidationRow>,
    pub passed: bool,
}

/// Seventeen significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(path)
        .map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let wrap = |e: csv::Error| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn prepare_out(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))
}

fn solve(cfg: &RunConfig) -> Result<(Model, ThresholdSolution), CliError> {
    let model = Model::new(cfg.params).map_err(SolverError::from)?;
    match solve_boundaries(&model, cfg.formulation) {
        Ok(sol) => {
            info!(
                "{}: lower = {:.12}, upper = {:.12}",
                cfg.formulation, sol.lower, sol.upper
            );
            Ok((model, sol))
        }
        Err(SolverError::Inadmissible(a)) => {
            warn!(
                "inadmissible: bar_lower = {}, bar_upper = {}, slack_lower = {:e}, slack_upper = {:e}",
                a.bar_lower, a.bar_upper, a.slack_lower, a.slack_upper
            );
            Err(SolverError::Inadmissible(a).into())
        }
        Err(e) => Err(e.into()),
    }
}

/// Writes `solution.json` and `value_function.csv`, whose grid also
/// contains both thresholds.
pub fn cmd_solve(cfg: &RunConfig) -> Result<ThresholdSolution, CliError> {
    prepare_out(cfg)?;
    let (model, sol) = solve(cfg)?;
    write_json(
        &cfg.output_dir.join("solution.json"),
        &SolutionFile {
            params: cfg.params,
            solution: sol,
        },
    )?;
    let n = cfg.value_grid_n;
    let mut grid: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
    grid.extend([sol.lower, sol.upper]);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut rows = Vec::with_capacity(grid.len());
    for pi in grid {
        let v0 = bayes_risk(&model, &sol, 0, pi)?;
        let v1 = bayes_risk(&model, &sol, 1, pi)?;
        rows.push(vec![fmt17(pi), fmt17(v0), fmt17(v1), fmt17(v0.min(v1))]);
    }
    write_rows(&cfg.output_dir.join("value_function.csv"), &["pi", "v0", "v1", "min"], rows)?;
    Ok(sol)
}

/// Writes `verify.json`; a violation is reported after the file is written.
pub fn cmd_verify(cfg: &RunConfig) -> Result<VerifyFile, CliError> {
    prepare_out(cfg)?;
    let (model, mut sol) = solve(cfg)?;
    let (ls, us) = (cfg.verify.lower_shift, cfg.verify.upper_shift);
    if ls != 0.0 || us != 0.0 {
        let adm = check_admissibility(&model, cfg.formulation)?;
        sol = ThresholdSolution::at_thresholds(&model, cfg.formulation, sol.lower + ls, sol.upper + us, &adm)?;
        info!("checking shifted thresholds {} and {}", sol.lower, sol.upper);
    }
    let (report, failed) = match verify_variational(&model, &sol, cfg.verify.grid_n) {
        Ok(r) => (r, false),
        Err(SolverError::Verification(r)) => (*r, true),
        Err(e) => return Err(e.into()),
    };
    let file = VerifyFile {
        lower: sol.lower,
        upper: sol.upper,
        lower_shift: ls,
        upper_shift: us,
        passed: !failed,
        report,
    };
    write_json(&cfg.output_dir.join("verify.json"), &file)?;
    if failed {
        for v in &file.report.violations {
            warn!("{:?} violated at pi = {} (slack {:e})", v.inequality, v.pi, v.slack);
        }
        return Err(SolverError::Verification(Box::new(file.report)).into());
    }
    Ok(file)
}

/// Writes `paths.csv` (one row per path and grid point) and `alarms.csv`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    prepare_out(cfg)?;
    let (_, sol) = solve(cfg)?;
    let recs = simulate_batch(
        &Policy::from(&sol),
        cfg.simulate_phase,
        cfg.params.pi0,
        &cfg.params,
        &cfg.sim,
    )?;
    let rows = recs.iter().enumerate().flat_map(|(p, r)| {
        (0..r.times.len()).map(move |k| {
            vec![
                p.to_string(),
                fmt17(r.times[k]),
                r.theta[k].to_string(),
                fmt17(r.x[k]),
                fmt17(r.pi_filter[k]),
                r.phase[k].to_string(),
            ]
        })
    });
    write_rows(
        &cfg.output_dir.join("paths.csv"),
        &["path", "t", "theta", "x", "pi", "phase"],
        rows,
    )?;
    let alarms = recs.iter().enumerate().flat_map(|(p, r)| {
        r.alarms.iter().map(move |a| {
            let dir = match a.direction {
                Direction::Up => "up",
                Direction::Down => "down",
            };
            vec![p.to_string(), fmt17(a.time), dir.to_string()]
        })
    });
    write_rows(&cfg.output_dir.join("alarms.csv"), &["path", "time", "direction"], alarms)?;
    Ok(())
}

/// Writes `validate.json`, comparing Monte Carlo risks with the closed form.
pub fn cmd_validate(cfg: &RunConfig) -> Result<ValidateFile, CliError> {
    prepare_out(cfg)?;
    let (model, sol) = solve(cfg)?;
    let policy = Policy::from(&sol);
    let mut rows = Vec::new();
    for &phase in &cfg.validate.phases {
        for &pi in &cfg.validate.points {
            let closed_form = bayes_risk(&model, &sol, phase, pi)?;
            let mut sim = cfg.sim;
            if cfg.validate.auto_horizon {
                sim.horizon = horizon_for(cfg.params.r, closed_form, cfg.validate.horizon_fraction).max(sim.dt);
            }
            let estimate = estimate_risk_mc(&policy, phase, pi, &cfg.params, &sim)?;
            let tolerance = 3.0 * estimate.stderr + estimate.truncation_bound;
            let passed = (estimate.mean - closed_form).abs() <= tolerance;
            info!(
                "phase {phase}, pi = {pi}: closed form {closed_form:.6}, MC {:.6} ± {:.6}",
                estimate.mean, estimate.stderr
            );
            rows.push(ValidationRow {
                phase,
                pi,
                closed_form,
                estimate,
                horizon: sim.horizon,
                tolerance,
                passed,
            });
        }
    }
    let failed = rows.iter().filter(|r| !r.passed).count();
    let file = ValidateFile {
        formulation: cfg.formulation,
        params: cfg.params,
        sim: cfg.sim,
        lower: sol.lower,
        upper: sol.upper,
        rows,
        passed: failed == 0,
    };
    write_json(&cfg.output_dir.join("validate.json"), &file)?;
    if failed > 0 {
        return Err(CliError::Validation(failed));
    }
    Ok(file)
}

/// Writes `sweep.csv`; rows whose solve fails carry the error in `status`.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<usize, CliError> {
    prepare_out(cfg)?;
    let mut rows = Vec::new();
    let mut solved = 0;
    for &v in &cfg.sweep_values {
        let mut p = cfg.params;
        cfg.sweep_param.apply(&mut p, v);
        let res = Model::new(p)
            .map_err(SolverError::from)
            .and_then(|m| solve_boundaries(&m, cfg.formulation));
        let row = match res {
            Ok(s) => {
                solved += 1;
                vec![
                    fmt17(s.lower),
                    fmt17(s.upper),
                    fmt17(s.coeff_lower),
                    fmt17(s.coeff_upper),
                    s.admissible.to_string(),
                    "ok".to_string(),
                ]
            }
            Err(e) => {
                warn!("{} = {v}: {e}", cfg.sweep_param.name());
                let mut r = vec![String::new(); 4];
                let inadmissible = matches!(e, SolverError::Inadmissible(_));
                r.push(if inadmissible { "false" } else { "" }.to_string());
                r.push(e.to_string());
                r
            }
        };
        let mut full = vec![cfg.sweep_param.name().to_string(), fmt17(v)];
        full.extend(row);
        rows.push(full);
    }
    write_rows(
        &cfg.output_dir.join("sweep.csv"),
        &["param", "value", "lower", "upper", "coeff_lower", "coeff_upper", "admissible", "status"],
        rows,
    )?;
    Ok(solved)
}

pub fn execute(cfg: &RunConfig, cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Solve => cmd_solve(cfg).map(drop),
        Command::Verify => cmd_verify(cfg).map(drop),
        Command::Simulate => cmd_simulate(cfg),
        Command::Validate => cmd_validate(cfg).map(drop),
        Command::Sweep => cmd_sweep(cfg).map(drop),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliCommand {
    Solve,
    Verify,
    Simulate,
    Validate,
    Sweep,
    /// Every command listed under `commands` in the config, in order.
    Run,
}

#[derive(Debug, Parser)]
#[command(name = "disorder-switch", version, about = "Switching multiple-disorder detection for Brownian motion")]
pub struct Args {
    #[arg(value_enum)]
    pub command: CliCommand,
    /// `key = value` configuration file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `sim.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `f1` or `f2`, overriding `formulation`.
    #[arg(long, value_parser = |s: &str| s.parse::<Formulation>())]
    pub formulation: Option<Formulation>,
}

/// Config with the command-line overrides applied.
pub fn resolve(args: &Args) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = args.seed {
        cfg.sim.seed = s;
    }
    if let Some(f) = args.formulation {
        cfg.formulation = f;
    }
    Ok(cfg)
}

pub fn run(args: &Args) -> Result<(), CliError> {
    let cfg = resolve(args)?;
    let cmds = match args.command {
        CliCommand::Solve => vec![Command::Solve],
        CliCommand::Verify => vec![Command::Verify],
        CliCommand::Simulate => vec![Command::Simulate],
        CliCommand::Validate => vec![Command::Validate],
        CliCommand::Sweep => vec![Command::Sweep],
        CliCommand::Run => cfg.commands.clone(),
    };
    for c in cmds {
        execute(&cfg, c)?;
    }
    Ok(())
}

/// Parses `argv`, runs, prints any error and returns the exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
