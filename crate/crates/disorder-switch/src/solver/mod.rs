//! Free-boundary systems of both formulations: the threshold pair and its
//! coefficients, the admissibility bounds, the variational checks and the
//! piecewise Bayesian risk functions.
//!
//! Under F1 the value functions are `V_0 = C_00 Q_0 + …`, `V_1 = C_11 Q_1 + …`;
//! under F2 they are `U_0 = D_00 G_00 + …`, `U_1 = D_11 G_11 + …`. At a
//! lower threshold `x` the pair `(c_0, c_1)` solves
//!
//! ```text
//! c_1 B_1(x) − c_0 B_0(x) = A_0(x),   c_1 B_1'(x) − c_0 B_0'(x) = A_0'(x)
//! ```
//!
//! with `B_i` the bounded fundamental solutions and `A_0 = R_0` or `S_0`;
//! at an upper threshold `A_1` takes its place. The thresholds are where
//! both coefficient pairs agree.

use roots::{find_root_brent, SimpleConvergency};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Formulation, Jet, Model, ModelError, Scaled, PI_MAX, PI_MIN};

/// Target for the coefficient matching residuals.
pub const MATCHING_TOL: f64 = 1e-10;
/// Target for the instantaneous-stopping and smooth-fit residuals.
pub const FIT_TOL: f64 = 1e-8;
/// Slacks above `−VERIFY_TOL` count as satisfied.
pub const VERIFY_TOL: f64 = 1e-12;

const SCAN_POINTS: usize = 48;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("fundamental solutions degenerate at pi = {pi}: Wronskian {wronskian:e}")]
    Singular { pi: f64, wronskian: f64 },
    #[error(
        "parameters inadmissible for {}: slacks {:e} (lower), {:e} (upper)",
        .0.formulation, .0.slack_lower, .0.slack_upper
    )]
    Inadmissible(Box<Admissibility>),
    #[error("no threshold pair found: {0}")]
    NoSolution(String),
    #[error("variational inequalities violated at {} points", .0.violations.len())]
    Verification(Box<VariationalReport>),
}

/// Signed residuals at a threshold pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Coefficient mismatch `[ĉ_0(lower) − c̃_0(upper), ĉ_1(lower) − c̃_1(upper)]`.
    pub matching: [f64; 2],
    /// `V_0 − a·π − V_1` at the lower threshold, `V_1 − b(1−π) − V_0` at the upper.
    pub stopping: [f64; 2],
    /// `V_0' − a − V_1'` at the lower threshold, `V_1' + b − V_0'` at the upper.
    pub smooth_fit: [f64; 2],
}

impl Residuals {
    pub fn max_matching(&self) -> f64 {
        self.matching[0].abs().max(self.matching[1].abs())
    }

    pub fn max_fit(&self) -> f64 {
        self.stopping
            .iter()
            .chain(&self.smooth_fit)
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Admissibility bounds and the two derivative slacks evaluated at them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub formulation: Formulation,
    pub bar_lower: f64,
    pub bar_upper: f64,
    /// `a + V_1'(b̄_l; b̄_u) − V_0'(b̄_l; b̄_l)`; positive when admissible.
    pub slack_lower: f64,
    /// `V_1'(b̄_u; b̄_u) + b − V_0'(b̄_u; b̄_l)`; positive when admissible.
    pub slack_upper: f64,
    pub passed: bool,
}

/// A threshold pair with its coefficients and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSolution {
    pub formulation: Formulation,
    /// `g*` or `p*`.
    pub lower: f64,
    /// `h*` or `q*`.
    pub upper: f64,
    /// `Ĉ_00(g*)` or `D̂_00(p*)`.
    pub coeff_lower: f64,
    /// `C̃_11(h*)` or `D̃_11(q*)`.
    pub coeff_upper: f64,
    pub bar_lower: f64,
    pub bar_upper: f64,
    pub residuals: Residuals,
    pub admissible: bool,
    pub slack_lower: f64,
    pub slack_upper: f64,
}

fn check_window(x: f64) -> Result<(), SolverError> {
    if !(x >= PI_MIN && x <= PI_MAX) {
        return Err(ModelError::OutOfRange {
            what: "threshold",
            pi: x,
        }
        .into());
    }
    Ok(())
}

fn basis(model: &Model, form: Formulation, i: usize, x: f64) -> Result<Scaled, SolverError> {
    Ok(match form {
        Formulation::F1 => model.q_scaled(i, x)?.0,
        Formulation::F2 => {
            let g = model.g_eval(i, i, x)?;
            Scaled {
                m: g.value,
                dm: g.deriv,
                ln_s: 0.0,
            }
        }
    })
}

fn affine(model: &Model, form: Formulation, k: usize, x: f64) -> (f64, f64) {
    match form {
        Formulation::F1 => (model.r_fn(k, x), model.r_fn_deriv(k, x)),
        Formulation::F2 => (model.s_fn(k, x), model.s_fn_deriv(k, x)),
    }
}

// Solves the 2×2 system at `x` with right-hand side `A_k`. The scale
// factors of `B_0`, `B_1` are divided out analytically.
fn coeffs(model: &Model, form: Formulation, k: usize, x: f64) -> Result<(f64, f64), SolverError> {
    check_window(x)?;
    let b0 = basis(model, form, 0, x)?;
    let b1 = basis(model, form, 1, x)?;
    let (rv, rd) = affine(model, form, k, x);
    let d = b1.m * b0.dm - b1.dm * b0.m;
    let ln_w = d.abs().ln() + b0.ln_s + b1.ln_s;
    if !(ln_w > 1e-14_f64.ln()) {
        return Err(SolverError::Singular {
            pi: x,
            wronskian: d.signum() * ln_w.exp(),
        });
    }
    let c0 = (rv * b1.dm - rd * b1.m) / d * (-b0.ln_s).exp();
    let c1 = (rv * b0.dm - rd * b0.m) / d * (-b1.ln_s).exp();
    Ok((c0, c1))
}

/// `(ĉ_0(x), ĉ_1(x))`: `(Ĉ_00, Ĉ_11)` under F1, `(D̂_00, D̂_11)` under F2.
pub fn coeffs_at_lower(model: &Model, form: Formulation, x: f64) -> Result<(f64, f64), SolverError> {
    coeffs(model, form, 0, x)
}

/// `(c̃_0(x), c̃_1(x))`: `(C̃_00, C̃_11)` under F1, `(D̃_00, D̃_11)` under F2.
pub fn coeffs_at_upper(model: &Model, form: Formulation, x: f64) -> Result<(f64, f64), SolverError> {
    coeffs(model, form, 1, x)
}

fn brent<F>(a: f64, b: f64, mut f: F) -> Result<f64, SolverError>
where
    F: FnMut(f64) -> Result<f64, SolverError>,
{
    let mut failure = None;
    let mut conv = SimpleConvergency {
        eps: 1e-15,
        max_iter: 200,
    };
    let root = find_root_brent(
        a,
        b,
        |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        &mut conv,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    root.map_err(|e| SolverError::NoSolution(format!("Brent on [{a}, {b}]: {e}")))
}

// Uniform in logit(x) over [lo, hi].
fn scan_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let logit = |x: f64| (x / (1.0 - x)).ln();
    let (a, b) = (logit(lo), logit(hi));
    (0..n)
        .map(|k| {
            let t = a + (b - a) * k as f64 / (n - 1) as f64;
            let x = 1.0 / (1.0 + (-t).exp());
            x.clamp(lo, hi)
        })
        .collect()
}

fn sign_char(v: Option<f64>) -> char {
    match v {
        Some(v) if v > 0.0 => '+',
        Some(v) if v < 0.0 => '-',
        Some(_) => '0',
        None => '?',
    }
}

/// Solves `inner(x, y) = 0`, `outer(x, y) = 0` for `x` in `xs`, `y` in
/// `ys`: `y(x)` from the inner equation, then `outer(x, y(x))` in `x`.
fn nested_root<I, O>(
    xs: (f64, f64),
    ys: (f64, f64),
    inner: I,
    outer: O,
) -> Result<(f64, f64), SolverError>
where
    I: Fn(f64, f64) -> Result<f64, SolverError>,
    O: Fn(f64, f64) -> Result<f64, SolverError>,
{
    let y_grid = scan_grid(ys.0, ys.1, SCAN_POINTS);
    // y(x) and the outer residual there; None when the inner equation has
    // no root on the grid
    let reduce = |x: f64| -> Result<Option<(f64, f64)>, SolverError> {
        let vals = y_grid
            .iter()
            .map(|&y| inner(x, y))
            .collect::<Result<Vec<_>, _>>()?;
        let mut best: Option<(f64, f64)> = None;
        for k in 0..y_grid.len() - 1 {
            let y = if vals[k] == 0.0 {
                y_grid[k]
            } else if vals[k] * vals[k + 1] < 0.0 {
                brent(y_grid[k], y_grid[k + 1], |y| inner(x, y))?
            } else {
                continue;
            };
            let o = outer(x, y)?;
            if best.is_none_or(|(_, b)| o.abs() < b.abs()) {
                best = Some((y, o));
            }
        }
        Ok(best)
    };

    let x_grid = scan_grid(xs.0, xs.1, SCAN_POINTS);
    let scanned = x_grid
        .iter()
        .map(|&x| Ok((x, reduce(x)?)))
        .collect::<Result<Vec<_>, SolverError>>()?;
    let mut brackets = scanned
        .windows(2)
        .filter_map(|w| match (w[0].1, w[1].1) {
            (Some((_, a)), Some((_, b))) if a * b <= 0.0 => Some((w[0].0, w[1].0)),
            _ => None,
        })
        .collect::<Vec<_>>();
    if brackets.is_empty() {
        let pattern: String = scanned.iter().map(|(_, v)| sign_char(v.map(|p| p.1))).collect();
        return Err(SolverError::NoSolution(format!(
            "outer residual never changes sign on [{}, {}]; signs along the grid: {pattern}",
            xs.0, xs.1
        )));
    }
    if brackets.len() > 1 {
        log::warn!("{} sign changes of the outer residual; taking the first", brackets.len());
    }
    let (a, b) = brackets.remove(0);
    let x = brent(a, b, |x| match reduce(x)? {
        Some((_, o)) => Ok(o),
        None => Err(SolverError::NoSolution(format!(
            "inner equation has no root at x = {x}"
        ))),
    })?;
    let (y, _) = reduce(x)?.ok_or_else(|| {
        SolverError::NoSolution(format!("inner equation has no root at x = {x}"))
    })?;
    Ok((x, y))
}

/// Joint solution `(p̂, q̂)` of the F2 boundary equations obtained by
/// replacing the generator inequalities below `p` and above `q` with
/// equalities.
pub fn hat_bounds(model: &Model) -> Result<(f64, f64), SolverError> {
    let p = model.params();
    let k = p.lambda + p.r;
    let form = Formulation::F2;
    let e1 = |x: f64, y: f64| -> Result<f64, SolverError> {
        let d11 = coeffs_at_upper(model, form, y)?.1;
        Ok((2.0 + p.a * k) * x - p.r / k + p.lambda * d11 * model.g_fn_deriv(1, 1, x)?)
    };
    let e2 = |x: f64, y: f64| -> Result<f64, SolverError> {
        let d00 = coeffs_at_lower(model, form, x)?.0;
        Ok((2.0 + p.b * k) * (1.0 - y) - p.r / k - p.lambda * d00 * model.g_fn_deriv(0, 0, y)?)
    };
    nested_root((PI_MIN, 0.5), (0.5, PI_MAX), e2, e1)
}

/// `(ḡ, h̄)` under F1; `(p̄, q̄)` under F2, where `(p̂, q̂)` falls back to
/// `(1/2, 1/2)` when the boundary equations have no solution.
pub fn admissible_bounds(model: &Model, form: Formulation) -> (f64, f64) {
    let p = model.params();
    let (lam, r, a, b) = (p.lambda, p.r, p.a, p.b);
    match form {
        Formulation::F1 => (
            (1.0 + lam * a) / (2.0 + a * (2.0 * lam + r)),
            (1.0 + b * (lam + r)) / (2.0 + b * (2.0 * lam + r)),
        ),
        Formulation::F2 => {
            let k = lam + r;
            let (p_hat, q_hat) = hat_bounds(model).unwrap_or_else(|e| {
                log::debug!("boundary equations for p-hat, q-hat unsolved ({e}); using 1/2");
                (0.5, 0.5)
            });
            (
                p_hat.min(r / (k * (2.0 + a * k))),
                q_hat.max((lam + k * (1.0 + b * k)) / (k * (2.0 + b * k))),
            )
        }
    }
}

/// Evaluates the derivative conditions at the admissibility bounds.
pub fn check_admissibility(model: &Model, form: Formulation) -> Result<Admissibility, SolverError> {
    let (bl, bu) = admissible_bounds(model, form);
    let p = model.params();
    let mut adm = Admissibility {
        formulation: form,
        bar_lower: bl,
        bar_upper: bu,
        slack_lower: f64::NAN,
        slack_upper: f64::NAN,
        passed: false,
    };
    if !(bl > PI_MIN && bu < PI_MAX && bl < bu) {
        return Ok(adm);
    }
    let c0 = coeffs_at_lower(model, form, bl)?.0;
    let c1 = coeffs_at_upper(model, form, bu)?.1;
    let dv = |i: usize, x: f64, c: f64| model.value_eval(form, i, x, c).map(|e| e.1);
    adm.slack_lower = p.a + dv(1, bl, c1)? - dv(0, bl, c0)?;
    adm.slack_upper = dv(1, bu, c1)? + p.b - dv(0, bu, c0)?;
    adm.passed = adm.slack_lower > 0.0 && adm.slack_upper > 0.0;
    Ok(adm)
}

impl ThresholdSolution {
    /// Coefficients and residuals at an arbitrary threshold pair; the
    /// optimal pair comes from [`solve_boundaries`].
    pub fn at_thresholds(
        model: &Model,
        form: Formulation,
        lower: f64,
        upper: f64,
        adm: &Admissibility,
    ) -> Result<Self, SolverError> {
        let p = model.params();
        let lo = coeffs_at_lower(model, form, lower)?;
        let up = coeffs_at_upper(model, form, upper)?;
        let (c0, c1) = (lo.0, up.1);
        let v = |i: usize, x: f64, c: f64| model.value_eval(form, i, x, c);
        let (v0g, d0g) = v(0, lower, c0)?;
        let (v1g, d1g) = v(1, lower, c1)?;
        let (v0h, d0h) = v(0, upper, c0)?;
        let (v1h, d1h) = v(1, upper, c1)?;
        Ok(ThresholdSolution {
            formulation: form,
            lower,
            upper,
            coeff_lower: c0,
            coeff_upper: c1,
            bar_lower: adm.bar_lower,
            bar_upper: adm.bar_upper,
            residuals: Residuals {
                matching: [lo.0 - up.0, lo.1 - up.1],
                stopping: [v0g - p.a * lower - v1g, v1h - p.b * (1.0 - upper) - v0h],
                smooth_fit: [d0g - p.a - d1g, d1h + p.b - d0h],
            },
            admissible: adm.passed,
            slack_lower: adm.slack_lower,
            slack_upper: adm.slack_upper,
        })
    }

    /// `0 < lower < bar_lower < 1/2 < bar_upper < upper < 1`.
    pub fn ordered(&self) -> bool {
        0.0 < self.lower
            && self.lower < self.bar_lower
            && self.bar_lower < 0.5
            && 0.5 < self.bar_upper
            && self.bar_upper < self.upper
            && self.upper < 1.0
    }
}

/// Roots of the coefficient matching equations with the lower threshold in
/// `lower` and the upper one in `upper`, with no admissibility check.
pub fn solve_matching(
    model: &Model,
    form: Formulation,
    lower: (f64, f64),
    upper: (f64, f64),
) -> Result<(f64, f64), SolverError> {
    let inner = |x: f64, y: f64| Ok(coeffs_at_lower(model, form, x)?.0 - coeffs_at_upper(model, form, y)?.0);
    let outer = |x: f64, y: f64| Ok(coeffs_at_lower(model, form, x)?.1 - coeffs_at_upper(model, form, y)?.1);
    nested_root(lower, upper, inner, outer)
}

/// Optimal thresholds of one formulation.
pub fn solve_boundaries(model: &Model, form: Formulation) -> Result<ThresholdSolution, SolverError> {
    let adm = check_admissibility(model, form)?;
    if !adm.passed {
        return Err(SolverError::Inadmissible(Box::new(adm)));
    }
    let (lower, upper) = solve_matching(model, form, (PI_MIN, adm.bar_lower), (adm.bar_upper, PI_MAX))?;
    let sol = ThresholdSolution::at_thresholds(model, form, lower, upper, &adm)?;
    log::debug!(
        "{form}: thresholds ({lower}, {upper}), matching {:e}, fit {:e}",
        sol.residuals.max_matching(),
        sol.residuals.max_fit()
    );
    if sol.residuals.max_matching() > MATCHING_TOL || sol.residuals.max_fit() > FIT_TOL {
        log::warn!(
            "{form}: residuals above target (matching {:e}, fit {:e})",
            sol.residuals.max_matching(),
            sol.residuals.max_fit()
        );
    }
    Ok(sol)
}

/// Piecewise risk `V_i*` (F1) or `U_i*` (F2) and its derivative; at the
/// thresholds themselves the stopped branch is used.
pub fn bayes_risk_eval(
    model: &Model,
    sol: &ThresholdSolution,
    i: usize,
    pi: f64,
) -> Result<(f64, f64), SolverError> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(ModelError::OutOfRange {
            what: "Bayes risk",
            pi,
        }
        .into());
    }
    let form = sol.formulation;
    let p = model.params();
    let v = |j: usize| model.value_eval(form, j, pi, if j == 0 { sol.coeff_lower } else { sol.coeff_upper });
    Ok(match i {
        0 if pi > sol.lower => v(0)?,
        0 => {
            let (w, d) = v(1)?;
            (p.a * pi + w, p.a + d)
        }
        1 if pi < sol.upper => v(1)?,
        1 => {
            let (w, d) = v(0)?;
            (p.b * (1.0 - pi) + w, -p.b + d)
        }
        _ => return Err(ModelError::BadIndex(i).into()),
    })
}

/// `V_i*(π)` under F1, `U_i*(π)` under F2.
pub fn bayes_risk(model: &Model, sol: &ThresholdSolution, i: usize, pi: f64) -> Result<f64, SolverError> {
    bayes_risk_eval(model, sol, i, pi).map(|e| e.0)
}

/// `min(V_0*(π), V_1*(π))`.
pub fn minimal_risk(model: &Model, sol: &ThresholdSolution, pi: f64) -> Result<f64, SolverError> {
    Ok(bayes_risk(model, sol, 0, pi)?.min(bayes_risk(model, sol, 1, pi)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    /// `a·π + V_1* − V_0* > 0` above the lower threshold.
    ObstacleLower,
    /// `b(1−π) + V_0* − V_1* > 0` below the upper threshold.
    ObstacleUpper,
    /// `(L_0 − r)V_0* + (1−π) > 0` below the lower threshold.
    GeneratorLower,
    /// `(L_1 − r)V_1* + π > 0` above the upper threshold.
    GeneratorUpper,
    /// Obstacle gap at a threshold, which must vanish.
    BoundaryGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub inequality: Inequality,
    pub pi: f64,
    pub slack: f64,
}

/// Minimum slack of each inequality over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalReport {
    pub formulation: Formulation,
    pub grid_n: usize,
    pub min_obstacle_lower: f64,
    pub min_obstacle_upper: f64,
    pub min_generator_lower: f64,
    pub min_generator_upper: f64,
    /// Obstacle gaps at the lower and upper threshold.
    pub boundary_gaps: [f64; 2],
    pub violations: Vec<Violation>,
}

impl VariationalReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the strict inequalities of the free-boundary problem on
/// `grid_n` points spanning `[1e-4, 1 − 1e-4]`.
pub fn verify_variational(
    model: &Model,
    sol: &ThresholdSolution,
    grid_n: usize,
) -> Result<VariationalReport, SolverError> {
    let form = sol.formulation;
    let p = model.params();
    let r = p.r;
    let mut rep = VariationalReport {
        formulation: form,
        grid_n,
        min_obstacle_lower: f64::INFINITY,
        min_obstacle_upper: f64::INFINITY,
        min_generator_lower: f64::INFINITY,
        min_generator_upper: f64::INFINITY,
        boundary_gaps: [0.0; 2],
        violations: Vec::new(),
    };
    let risk = |i: usize, x: f64| bayes_risk(model, sol, i, x);
    let record = |rep: &mut VariationalReport, which: Inequality, x: f64, slack: f64| {
        let slot = match which {
            Inequality::ObstacleLower => &mut rep.min_obstacle_lower,
            Inequality::ObstacleUpper => &mut rep.min_obstacle_upper,
            Inequality::GeneratorLower => &mut rep.min_generator_lower,
            Inequality::GeneratorUpper => &mut rep.min_generator_upper,
            Inequality::BoundaryGap => unreachable!(),
        };
        *slot = slot.min(slack);
        if !(slack > -VERIFY_TOL) {
            rep.violations.push(Violation {
                inequality: which,
                pi: x,
                slack,
            });
        }
    };
    let n = grid_n.max(2);
    for k in 0..n {
        let x = PI_MIN + (PI_MAX - PI_MIN) * k as f64 / (n - 1) as f64;
        let (v0, v1) = (risk(0, x)?, risk(1, x)?);
        if x > sol.lower {
            record(&mut rep, Inequality::ObstacleLower, x, p.a * x + v1 - v0);
        } else if x < sol.lower {
            let j = model.value_jet(form, 1, x, sol.coeff_upper)?;
            let jet = Jet {
                value: p.a * x + j.value,
                d1: p.a + j.d1,
                d2: j.d2,
            };
            let lv = model.apply_generator(Model::generator(form, 0), jet, x);
            record(&mut rep, Inequality::GeneratorLower, x, lv - r * jet.value + (1.0 - x));
        }
        if x < sol.upper {
            record(&mut rep, Inequality::ObstacleUpper, x, p.b * (1.0 - x) + v0 - v1);
        } else if x > sol.upper {
            let j = model.value_jet(form, 0, x, sol.coeff_lower)?;
            let jet = Jet {
                value: p.b * (1.0 - x) + j.value,
                d1: -p.b + j.d1,
                d2: j.d2,
            };
            let lv = model.apply_generator(Model::generator(form, 1), jet, x);
            record(&mut rep, Inequality::GeneratorUpper, x, lv - r * jet.value + x);
        }
    }
    rep.boundary_gaps = sol.residuals.stopping;
    for (gap, x) in sol.residuals.stopping.iter().zip([sol.lower, sol.upper]) {
        if !(gap.abs() <= FIT_TOL) {
            rep.violations.push(Violation {
                inequality: Inequality::BoundaryGap,
                pi: x,
                slack: *gap,
            });
        }
    }
    if rep.passed() {
        Ok(rep)
    } else {
        Err(SolverError::Verification(Box::new(rep)))
    }
}
