//! Monte Carlo simulation of the hidden regime, the observation and the
//! posterior filter, and of the alternating alarm procedure driven by a pair
//! of thresholds.
//!
//! Every path owns two ChaCha8 streams derived from `(seed, path_index)`:
//! stream `2·path` drives the regime and stream `2·path + 1` the observation
//! noise. Batches run on a rayon pool and are reduced in path order, so
//! results do not depend on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Formulation, ModelError, ModelParams};
use crate::solver::ThresholdSolution;

/// Filter values are clamped to `[FILTER_EPS, 1 − FILTER_EPS]`.
pub const FILTER_EPS: f64 = 1e-9;
/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "DISORDER_SWITCH_THREADS";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Euler step.
    pub dt: f64,
    /// Truncation time `T`.
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Paths stop after this many alarms.
    pub series_cutoff: usize,
    /// Worker threads; `None` falls back to `DISORDER_SWITCH_THREADS`, then
    /// to the hardware parallelism. Not serialized, since results do not
    /// depend on it.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            horizon: 10.0,
            n_paths: 10_000,
            seed: 42,
            series_cutoff: 100_000,
            threads: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.dt) {
            return bad(format!("horizon = {} must be at least dt", self.horizon));
        }
        if self.n_paths == 0 {
            return bad("n_paths must be positive".into());
        }
        if self.series_cutoff == 0 {
            return bad("series_cutoff must be positive".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        if self.horizon / self.dt > 1e9 {
            return bad("more than 1e9 steps per path".into());
        }
        Ok(())
    }

    /// Number of Euler steps; the grid is `k·dt` for `k = 0..=steps`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil().max(1.0) as usize
    }

    /// Time of the last grid point, which is at least `horizon`.
    pub fn grid_end(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    /// `e^{−rT}/r`, a bound on the risk accrued after the grid ends under the
    /// optimal thresholds, whose value never exceeds `1/r`.
    pub fn truncation_bound(&self, r: f64) -> f64 {
        (-r * self.grid_end()).exp() / r
    }
}

/// Smallest horizon with `e^{−rT}/r ≤ fraction·value`.
pub fn horizon_for(r: f64, value: f64, fraction: f64) -> f64 {
    ((1.0 / (fraction * value * r)).ln() / r).max(0.0)
}

/// The regime-1 announcement (`Up`, sounded at the upper threshold) or the
/// regime-0 announcement (`Down`, at the lower threshold).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alarm {
    pub time: f64,
    pub direction: Direction,
}

/// Filter dynamics of the second formulation between alarms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// Drift `−λπ`; the regime can only move from 1 to 0.
    Drop,
    /// Drift `λ(1−π)`; the regime can only move from 0 to 1.
    Rise,
}

impl Branch {
    /// Phase 0 waits for the lower threshold under `Drop`, phase 1 for the
    /// upper one under `Rise`.
    pub fn of_phase(phase: usize) -> Branch {
        if phase == 0 {
            Branch::Drop
        } else {
            Branch::Rise
        }
    }

    fn source(self) -> u8 {
        match self {
            Branch::Drop => 1,
            Branch::Rise => 0,
        }
    }

    fn target(self) -> u8 {
        1 - self.source()
    }
}

/// Thresholds driving the alarm procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub formulation: Formulation,
    pub lower: f64,
    pub upper: f64,
}

impl Policy {
    pub fn new(formulation: Formulation, lower: f64, upper: f64) -> Self {
        Policy {
            formulation,
            lower,
            upper,
        }
    }

    /// Thresholds outside `[0, 1]`, so no alarm is ever sounded.
    pub fn passive(formulation: Formulation) -> Self {
        Policy::new(formulation, -1.0, 2.0)
    }
}

impl From<&ThresholdSolution> for Policy {
    fn from(s: &ThresholdSolution) -> Self {
        Policy::new(s.formulation, s.lower, s.upper)
    }
}

/// One simulated trajectory on the grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub theta: Vec<u8>,
    pub x: Vec<f64>,
    pub pi_filter: Vec<f64>,
    /// Phase in force after any alarm at the grid point.
    pub phase: Vec<u8>,
    pub alarms: Vec<Alarm>,
    /// Regime switches that actually took place.
    pub disorder_times: Vec<f64>,
    pub clamps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub truncation_bound: f64,
}

impl RiskEstimate {
    pub fn from_samples(samples: &[f64], truncation_bound: f64) -> Self {
        let (mean, stderr) = mean_stderr(samples);
        RiskEstimate {
            mean,
            stderr,
            n_paths: samples.len(),
            truncation_bound,
        }
    }
}

/// Sample mean and its standard error, summed in order.
pub fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = samples.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64 / n as f64).sqrt())
}

/// Regime and noise streams of one path.
pub fn path_streams(seed: u64, path: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut regime = ChaCha8Rng::seed_from_u64(seed);
    regime.set_stream(2 * path);
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    noise.set_stream(2 * path + 1);
    (regime, noise)
}

fn exponential<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / rate
}

/// Telegraph signal advanced lazily along increasing times.
#[derive(Debug, Clone)]
struct Telegraph {
    state: u8,
    next_switch: f64,
    lambda: f64,
}

impl Telegraph {
    fn start<R: Rng>(pi: f64, lambda: f64, rng: &mut R) -> Self {
        let state = u8::from(rng.random::<f64>() < pi);
        Telegraph {
            state,
            next_switch: exponential(rng, lambda),
            lambda,
        }
    }

    /// State at time `t`; switch times passed on the way go to `on_switch`.
    fn advance<R: Rng>(&mut self, t: f64, rng: &mut R, mut on_switch: impl FnMut(f64)) -> u8 {
        while self.next_switch <= t {
            self.state = 1 - self.state;
            on_switch(self.next_switch);
            self.next_switch += exponential(rng, self.lambda);
        }
        self.state
    }
}

/// Regime path of the first formulation sampled on the grid of `cfg`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimePath {
    pub theta: Vec<u8>,
    pub switch_times: Vec<f64>,
}

/// Telegraph signal of intensity λ started from Bernoulli(π), with switch
/// times drawn exactly and the state read off at every grid point.
pub fn simulate_theta_f1<R: Rng>(cfg: &SimConfig, params: &ModelParams, pi: f64, rng: &mut R) -> RegimePath {
    let mut tg = Telegraph::start(pi, params.lambda, rng);
    let mut switch_times = Vec::new();
    let theta = (0..=cfg.steps())
        .map(|k| tg.advance(k as f64 * cfg.dt, rng, |s| switch_times.push(s)))
        .collect();
    RegimePath { theta, switch_times }
}

/// Delay from the start of a cycle to its disorder. The disorder happens at
/// once with the posterior probability that the regime is already in the
/// branch's target state (`π` under `Rise`, `1 − π` under `Drop`), and after
/// an independent exponential(λ) time otherwise.
pub fn simulate_theta_f2<R: Rng>(branch: Branch, pi_at_alarm: f64, lambda: f64, rng: &mut R) -> f64 {
    let p_now = match branch {
        Branch::Rise => pi_at_alarm,
        Branch::Drop => 1.0 - pi_at_alarm,
    };
    if rng.random::<f64>() < p_now {
        0.0
    } else {
        exponential(rng, lambda)
    }
}

/// `ΔX = μ_θ·dt + σ·√dt·z`.
pub fn observation_increment(params: &ModelParams, theta: u8, dt: f64, z: f64) -> f64 {
    params.drift(theta) * dt + params.sigma * dt.sqrt() * z
}

/// Observation increments over each grid step, using the regime at the
/// left end of the step.
pub fn simulate_observation<R: Rng>(theta: &[u8], params: &ModelParams, cfg: &SimConfig, rng: &mut R) -> Vec<f64> {
    theta
        .iter()
        .take(theta.len().saturating_sub(1))
        .map(|&th| observation_increment(params, th, cfg.dt, rng.sample(StandardNormal)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterStep {
    pub pi: f64,
    pub clamped: bool,
}

fn euler_step(drift: f64, pi: f64, dx: f64, params: &ModelParams, dt: f64) -> FilterStep {
    let dmu = params.mu1 - params.mu0;
    let innovation = (dx - (params.mu0 + dmu * pi) * dt) / params.sigma;
    let raw = pi + drift * dt + dmu / params.sigma * pi * (1.0 - pi) * innovation;
    let clamped = !(FILTER_EPS..=1.0 - FILTER_EPS).contains(&raw);
    FilterStep {
        pi: if raw.is_nan() {
            0.5
        } else {
            raw.clamp(FILTER_EPS, 1.0 - FILTER_EPS)
        },
        clamped,
    }
}

/// Euler–Maruyama step of the telegraph filter driven by the innovation.
pub fn filter_step_f1(pi_prev: f64, dx: f64, params: &ModelParams, cfg: &SimConfig) -> FilterStep {
    euler_step(params.lambda * (1.0 - 2.0 * pi_prev), pi_prev, dx, params, cfg.dt)
}

/// As [`filter_step_f1`] with the drift of the given branch.
pub fn filter_step_f2(branch: Branch, pi_prev: f64, dx: f64, params: &ModelParams, cfg: &SimConfig) -> FilterStep {
    let drift = match branch {
        Branch::Drop => -params.lambda * pi_prev,
        Branch::Rise => params.lambda * (1.0 - pi_prev),
    };
    euler_step(drift, pi_prev, dx, params, cfg.dt)
}

/// Callbacks of the path engine.
trait Observer {
    /// Grid point `k`, after any alarm sounded there; `stepping` is false
    /// at the point where the path stops.
    fn point(&mut self, k: usize, t: f64, theta: u8, x: f64, pi: f64, phase: usize, stepping: bool);
    /// Alarm at `t`; `phase` is the phase that just ended.
    fn alarm(&mut self, _t: f64, _phase: usize, _pi: f64) {}
    /// A switch of the regime at `t`.
    fn switch(&mut self, _t: f64) {}
    /// Start of an F2 cycle at `t` whose disorder is scheduled at `eta`.
    fn cycle(&mut self, _t: f64, _eta: f64, _branch: Branch) {}
    /// The path stopped at `t`.
    fn end(&mut self, _t: f64) {}
}

enum Regime {
    Chain(Telegraph),
    Cycle { branch: Branch, eta: f64, switched: bool },
}

struct PathOutcome {
    clamps: usize,
}

fn start_cycle<R: Rng>(t: f64, phase: usize, pi: f64, lambda: f64, rng: &mut R, obs: &mut impl Observer) -> Regime {
    let branch = Branch::of_phase(phase);
    let eta = t + simulate_theta_f2(branch, pi, lambda, rng);
    obs.cycle(t, eta, branch);
    Regime::Cycle {
        branch,
        eta,
        switched: false,
    }
}

fn regime_at<R: Rng>(regime: &mut Regime, t: f64, rng: &mut R, obs: &mut impl Observer) -> u8 {
    match regime {
        Regime::Chain(tg) => tg.advance(t, rng, |s| obs.switch(s)),
        Regime::Cycle { branch, eta, switched } => {
            if t >= *eta {
                if !*switched {
                    obs.switch(*eta);
                    *switched = true;
                }
                branch.target()
            } else {
                branch.source()
            }
        }
    }
}

/// Runs the alternating procedure along one path: in phase 0 the alarm is
/// sounded when the filter first reaches `≤ lower`, in phase 1 when it first
/// reaches `≥ upper`, and each alarm flips the phase. Under F2 each alarm
/// starts a new cycle whose regime is drawn by [`simulate_theta_f2`] and
/// whose filter branch applies from the alarm onwards.
fn run_path(
    policy: &Policy,
    phase0: usize,
    pi0: f64,
    params: &ModelParams,
    cfg: &SimConfig,
    path: u64,
    obs: &mut impl Observer,
) -> PathOutcome {
    let (mut rrng, mut nrng) = path_streams(cfg.seed, path);
    let n = cfg.steps();
    let dt = cfg.dt;
    let mut phase = phase0.min(1);
    let mut pi = pi0.clamp(FILTER_EPS, 1.0 - FILTER_EPS);
    let mut x = 0.0;
    let mut alarms = 0usize;
    let mut clamps = 0usize;
    let mut regime = match policy.formulation {
        Formulation::F1 => Regime::Chain(Telegraph::start(pi0, params.lambda, &mut rrng)),
        Formulation::F2 => start_cycle(0.0, phase, pi0, params.lambda, &mut rrng, obs),
    };
    for k in 0..=n {
        let t = k as f64 * dt;
        let mut theta = regime_at(&mut regime, t, &mut rrng, obs);
        let fire = match phase {
            0 => pi <= policy.lower,
            _ => pi >= policy.upper,
        };
        if fire {
            obs.alarm(t, phase, pi);
            alarms += 1;
            phase = 1 - phase;
            if policy.formulation == Formulation::F2 {
                regime = start_cycle(t, phase, pi, params.lambda, &mut rrng, obs);
                theta = regime_at(&mut regime, t, &mut rrng, obs);
            }
        }
        let stop = k == n || alarms >= cfg.series_cutoff;
        obs.point(k, t, theta, x, pi, phase, !stop);
        if stop {
            obs.end(t);
            break;
        }
        let z: f64 = nrng.sample(StandardNormal);
        let dx = observation_increment(params, theta, dt, z);
        x += dx;
        let step = match &regime {
            Regime::Chain(_) => filter_step_f1(pi, dx, params, cfg),
            Regime::Cycle { branch, .. } => filter_step_f2(*branch, pi, dx, params, cfg),
        };
        pi = step.pi;
        clamps += usize::from(step.clamped);
    }
    PathOutcome { clamps }
}

#[derive(Default)]
struct Recorder {
    rec: PathRecord,
}

impl Observer for Recorder {
    fn point(&mut self, _k: usize, t: f64, theta: u8, x: f64, pi: f64, phase: usize, _stepping: bool) {
        self.rec.times.push(t);
        self.rec.theta.push(theta);
        self.rec.x.push(x);
        self.rec.pi_filter.push(pi);
        self.rec.phase.push(phase as u8);
    }

    fn alarm(&mut self, t: f64, phase: usize, _pi: f64) {
        let direction = if phase == 0 { Direction::Down } else { Direction::Up };
        self.rec.alarms.push(Alarm { time: t, direction });
    }

    fn switch(&mut self, t: f64) {
        self.rec.disorder_times.push(t);
    }
}

/// One full path of the alarm procedure started from belief `pi` in phase
/// `phase`, using the substreams of `path`.
pub fn run_detection(
    policy: &Policy,
    phase: usize,
    pi: f64,
    params: &ModelParams,
    cfg: &SimConfig,
    path: u64,
) -> Result<PathRecord, SimError> {
    params.validate()?;
    cfg.validate()?;
    let mut r = Recorder::default();
    let out = run_path(policy, phase, pi, params, cfg, path, &mut r);
    r.rec.clamps = out.clamps;
    Ok(r.rec)
}

fn worker_threads(cfg: &SimConfig) -> Option<usize> {
    cfg.threads.or_else(|| {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
    })
}

/// Maps every path index through `f` on the worker pool and returns the
/// results in path order.
fn par_paths<T: Send>(cfg: &SimConfig, f: impl Fn(u64) -> T + Sync + Send) -> Result<Vec<T>, SimError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_threads(cfg) {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| SimError::ThreadPool(e.to_string()))?;
    Ok(pool.install(|| (0..cfg.n_paths as u64).into_par_iter().map(f).collect()))
}

/// `n_paths` recorded paths.
pub fn simulate_batch(
    policy: &Policy,
    phase: usize,
    pi: f64,
    params: &ModelParams,
    cfg: &SimConfig,
) -> Result<Vec<PathRecord>, SimError> {
    params.validate()?;
    cfg.validate()?;
    par_paths(cfg, |p| {
        let mut r = Recorder::default();
        let out = run_path(policy, phase, pi, params, cfg, p, &mut r);
        r.rec.clamps = out.clamps;
        r.rec
    })
}

struct RiskAccumulator<'a> {
    params: &'a ModelParams,
    /// `∫_0^{dt} e^{−rs} ds`.
    step_weight: f64,
    total: f64,
}

impl Observer for RiskAccumulator<'_> {
    fn point(&mut self, _k: usize, t: f64, _theta: u8, _x: f64, pi: f64, phase: usize, stepping: bool) {
        if stepping {
            let cost = if phase == 0 { 1.0 - pi } else { pi };
            self.total += (-self.params.r * t).exp() * self.step_weight * cost;
        }
    }

    fn alarm(&mut self, t: f64, phase: usize, pi: f64) {
        let cost = if phase == 0 {
            self.params.a * pi
        } else {
            self.params.b * (1.0 - pi)
        };
        self.total += (-self.params.r * t).exp() * cost;
    }
}

/// Per-path discounted losses of the alarm procedure: a false-alarm charge
/// `a·Π` or `b·(1−Π)` at each alarm, and the running charge `1 − Π` in phase
/// 0 or `Π` in phase 1 between alarms, integrated over each step with the
/// exact discount.
pub fn risk_samples(
    policy: &Policy,
    phase: usize,
    pi: f64,
    params: &ModelParams,
    cfg: &SimConfig,
) -> Result<Vec<f64>, SimError> {
    params.validate()?;
    cfg.validate()?;
    let step_weight = -(-params.r * cfg.dt).exp_m1() / params.r;
    par_paths(cfg, |p| {
        let mut acc = RiskAccumulator {
            params,
            step_weight,
            total: 0.0,
        };
        run_path(policy, phase, pi, params, cfg, p, &mut acc);
        acc.total
    })
}

/// Monte Carlo estimate of `V_i*(π)` (F1) or `U_i*(π)` (F2) under the
/// thresholds of `policy`.
pub fn estimate_risk_mc(
    policy: &Policy,
    phase: usize,
    pi: f64,
    params: &ModelParams,
    cfg: &SimConfig,
) -> Result<RiskEstimate, SimError> {
    let samples = risk_samples(policy, phase, pi, params, cfg)?;
    Ok(RiskEstimate::from_samples(&samples, cfg.truncation_bound(params.r)))
}

/// Mean of `Π_t` at selected times, with clamp statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterMoments {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub clamps: usize,
    pub steps: usize,
}

impl FilterMoments {
    pub fn clamp_fraction(&self) -> f64 {
        self.clamps as f64 / self.steps as f64
    }
}

struct Sampler {
    at: Vec<usize>,
    values: Vec<f64>,
}

impl Observer for Sampler {
    fn point(&mut self, k: usize, _t: f64, _theta: u8, _x: f64, pi: f64, _phase: usize, _stepping: bool) {
        for (j, &kk) in self.at.iter().enumerate() {
            if kk == k {
                self.values[j] = pi;
            }
        }
    }
}

/// Filter values at the grid points nearest to `times` across a batch of
/// paths run without alarms.
pub fn filter_moments(
    form: Formulation,
    phase: usize,
    pi: f64,
    params: &ModelParams,
    cfg: &SimConfig,
    times: &[f64],
) -> Result<FilterMoments, SimError> {
    params.validate()?;
    cfg.validate()?;
    let n = cfg.steps();
    let at: Vec<usize> = times.iter().map(|t| ((t / cfg.dt).round() as usize).min(n)).collect();
    let policy = Policy::passive(form);
    let rows = par_paths(cfg, |p| {
        let mut s = Sampler {
            at: at.clone(),
            values: vec![f64::NAN; at.len()],
        };
        let out = run_path(&policy, phase, pi, params, cfg, p, &mut s);
        (s.values, out.clamps)
    })?;
    let mut mean = Vec::with_capacity(at.len());
    let mut stderr = Vec::with_capacity(at.len());
    for j in 0..at.len() {
        let col: Vec<f64> = rows.iter().map(|r| r.0[j]).collect();
        let (m, s) = mean_stderr(&col);
        mean.push(m);
        stderr.push(s);
    }
    Ok(FilterMoments {
        times: at.iter().map(|&k| k as f64 * cfg.dt).collect(),
        mean,
        stderr,
        clamps: rows.iter().map(|r| r.1).sum(),
        steps: n * cfg.n_paths,
    })
}

/// Both sides of the delay identity for one alarm cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleComparison {
    pub cycle: usize,
    /// Mean of `∫ e^{−rt} I(Θ_t = j) dt` over the cycle, `j` its target state.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// Mean of `(1/r)·e^{−rζ}(e^{r(ζ−η)⁺} − 1)`.
    pub rhs: f64,
    pub rhs_stderr: f64,
    /// `|lhs − rhs|` over the combined standard error.
    pub discrepancy_sigma: f64,
    /// Largest `|lhs − rhs|` on a single path; bounded by `dt` because the
    /// left side reads the regime on the grid.
    pub max_pathwise_gap: f64,
    /// Paths on which the cycle started before the horizon.
    pub paths_reaching: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayIdentityReport {
    pub cycles: Vec<CycleComparison>,
}

impl DelayIdentityReport {
    pub fn max_discrepancy_sigma(&self) -> f64 {
        self.cycles.iter().map(|c| c.discrepancy_sigma).fold(0.0, f64::max)
    }

    pub fn passed(&self, sigmas: f64) -> bool {
        self.max_discrepancy_sigma() <= sigmas
    }
}

struct DelayBook {
    r: f64,
    step_weight: f64,
    max_cycles: usize,
    current: Option<(usize, f64, Branch)>,
    lhs: Vec<f64>,
    rhs: Vec<f64>,
    started: usize,
}

impl DelayBook {
    fn close(&mut self, zeta: f64) {
        if let Some((c, eta, _)) = self.current.take() {
            if c < self.max_cycles && eta < zeta {
                self.rhs[c] = ((-self.r * eta).exp() - (-self.r * zeta).exp()) / self.r;
            }
        }
    }
}

impl Observer for DelayBook {
    fn point(&mut self, _k: usize, t: f64, theta: u8, _x: f64, _pi: f64, _phase: usize, stepping: bool) {
        if let Some((c, _, branch)) = self.current {
            if stepping && c < self.max_cycles && theta == branch.target() {
                self.lhs[c] += (-self.r * t).exp() * self.step_weight;
            }
        }
    }

    fn alarm(&mut self, t: f64, _phase: usize, _pi: f64) {
        self.close(t);
    }

    fn cycle(&mut self, _t: f64, eta: f64, branch: Branch) {
        let c = self.started;
        self.started += 1;
        self.current = Some((c, eta, branch));
    }

    fn end(&mut self, t: f64) {
        self.close(t);
    }
}

/// Compares, cycle by cycle on shared F2 paths, the discounted time spent in
/// the target state before the alarm with its expression through the
/// disorder time `η_n` and alarm time `ζ_n`. Cycles are truncated at the grid
/// end; cycles a path never reaches contribute zero to both sides.
pub fn check_delay_identity(
    policy: &Policy,
    phase: usize,
    pi: f64,
    params: &ModelParams,
    cfg: &SimConfig,
    cycles: usize,
) -> Result<DelayIdentityReport, SimError> {
    params.validate()?;
    cfg.validate()?;
    if policy.formulation != Formulation::F2 {
        return Err(SimError::InvalidConfig(
            "the delay identity needs the second formulation".into(),
        ));
    }
    let step_weight = -(-params.r * cfg.dt).exp_m1() / params.r;
    let rows = par_paths(cfg, |p| {
        let mut book = DelayBook {
            r: params.r,
            step_weight,
            max_cycles: cycles,
            current: None,
            lhs: vec![0.0; cycles],
            rhs: vec![0.0; cycles],
            started: 0,
        };
        run_path(policy, phase, pi, params, cfg, p, &mut book);
        (book.lhs, book.rhs, book.started.min(cycles))
    })?;
    let out = (0..cycles)
        .map(|c| {
            let l: Vec<f64> = rows.iter().map(|r| r.0[c]).collect();
            let rr: Vec<f64> = rows.iter().map(|r| r.1[c]).collect();
            let (lm, ls) = mean_stderr(&l);
            let (rm, rs) = mean_stderr(&rr);
            let se = ls.hypot(rs);
            let gap = (lm - rm).abs();
            CycleComparison {
                cycle: c + 1,
                lhs: lm,
                lhs_stderr: ls,
                rhs: rm,
                rhs_stderr: rs,
                discrepancy_sigma: if se > 0.0 { gap / se } else if gap == 0.0 { 0.0 } else { f64::INFINITY },
                max_pathwise_gap: l.iter().zip(&rr).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
                paths_reaching: rows.iter().filter(|r| r.2 > c).count(),
            }
        })
        .collect();
    Ok(DelayIdentityReport { cycles: out })
}
