use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::gamma::{rgamma, sin_pi};
use super::ode;
use super::{SeriesControl, SmallTermRun, SpecfunError};

// Largest argument for which the two-term representation of Ψ is tried.
const FORMULA_X_MAX: f64 = 10.0;
// Largest tolerated ratio between the two terms of that representation and
// their difference.
const CANCELLATION_LIMIT: f64 = 1e3;
const ASYMPTOTIC_X_MIN: f64 = 30.0;

fn check_beta_first_kind(beta: f64) -> Result<(), SpecfunError> {
    if beta <= 0.0 && beta == beta.round() {
        return Err(SpecfunError::Domain {
            what: "kummer_phi (beta)",
            x: beta,
        });
    }
    Ok(())
}

fn phi_series(alpha: f64, beta: f64, x: f64, ctl: &SeriesControl) -> Result<f64, SpecfunError> {
    check_beta_first_kind(beta)?;
    if !(x >= 0.0) {
        return Err(SpecfunError::Domain {
            what: "kummer_phi",
            x,
        });
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut run = SmallTermRun::default();
    for k in 0..ctl.max_terms {
        let kf = k as f64;
        term *= (alpha + kf) / (beta + kf) * x / (kf + 1.0);
        sum += term;
        if !sum.is_finite() {
            return Err(SpecfunError::Overflow("kummer_phi"));
        }
        if run.push(term.abs() <= ctl.rel_tol * sum.abs()) {
            return Ok(sum);
        }
    }
    Err(SpecfunError::NonConvergence {
        what: "kummer_phi",
        terms: ctl.max_terms,
    })
}

/// Kummer's function of the first kind, `Φ(α, β; x) = Σ (α)_k/(β)_k x^k/k!`,
/// for `x ≥ 0`.
pub fn kummer_phi(alpha: f64, beta: f64, x: f64, ctl: &SeriesControl) -> Result<f64, SpecfunError> {
    phi_series(alpha, beta, x, ctl)
}

/// `dΦ/dx = (α/β) Φ(α+1, β+1; x)`.
pub fn kummer_phi_deriv(
    alpha: f64,
    beta: f64,
    x: f64,
    ctl: &SeriesControl,
) -> Result<f64, SpecfunError> {
    check_beta_first_kind(beta)?;
    if alpha == 0.0 {
        return Ok(0.0);
    }
    Ok(alpha / beta * phi_series(alpha + 1.0, beta + 1.0, x, ctl)?)
}

/// How a value of Ψ was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PsiPath {
    /// Combination of two Φ series.
    Formula,
    /// Large-argument expansion, optimally truncated.
    Asymptotic,
    /// Kummer's equation integrated inward from the asymptotic regime.
    Ode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiEval {
    pub value: f64,
    pub deriv: f64,
    pub path: PsiPath,
}

fn check_psi_args(beta: f64, x: f64) -> Result<(), SpecfunError> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(SpecfunError::Domain {
            what: "kummer_psi",
            x,
        });
    }
    if (beta - beta.round()).abs() < 1e-8 {
        return Err(SpecfunError::DegenerateParameter(beta));
    }
    Ok(())
}

/// Ψ from two Φ series; also returns the size of the larger term relative
/// to the result.
fn psi_formula(
    alpha: f64,
    beta: f64,
    x: f64,
    ctl: &SeriesControl,
) -> Result<(f64, f64), SpecfunError> {
    let w1 = rgamma(1.0 + alpha - beta) * rgamma(beta);
    let t1 = if w1 == 0.0 {
        0.0
    } else {
        phi_series(alpha, beta, x, ctl)? * w1
    };
    let w2 = rgamma(alpha) * rgamma(2.0 - beta);
    let t2 = if w2 == 0.0 {
        0.0
    } else {
        x.powf(1.0 - beta) * phi_series(1.0 + alpha - beta, 2.0 - beta, x, ctl)? * w2
    };
    let diff = t1 - t2;
    let value = PI / sin_pi(beta) * diff;
    let ratio = t1.abs().max(t2.abs()) / diff.abs();
    if !value.is_finite() {
        return Err(SpecfunError::Overflow("kummer_psi"));
    }
    Ok((value, ratio))
}

/// `S(y) = Σ (α)_k (α-β+1)_k / k! (-y)^k` and `S'(y)`, so that
/// `Ψ(α, β; x) ~ x^{-α} S(1/x)` for large `x`; `None` unless the optimally
/// truncated sum reaches full precision.
pub(crate) fn psi_asymptotic_reduced(alpha: f64, beta: f64, y: f64) -> Option<(f64, f64)> {
    let b = alpha - beta + 1.0;
    let mut term = 1.0_f64;
    let mut sum = 1.0;
    let mut dsum = 0.0;
    let mut converged = y == 0.0;
    if y == 0.0 {
        dsum = -alpha * b;
    }
    for k in 0..2000 {
        if converged {
            break;
        }
        let kf = k as f64;
        let next = term * (alpha + kf) * (b + kf) / (kf + 1.0) * (-y);
        if next == 0.0 {
            converged = true;
            break;
        }
        if next.abs() >= term.abs() && k > 0 {
            break;
        }
        sum += next;
        dsum += next * (kf + 1.0) / y;
        term = next;
        if term.abs() <= 1e-17 * sum.abs() {
            converged = true;
        }
    }
    (converged && sum.is_finite() && dsum.is_finite()).then_some((sum, dsum))
}

/// Large-argument expansion of Ψ and its derivative.
fn psi_asymptotic(alpha: f64, beta: f64, x: f64) -> Option<(f64, f64)> {
    let y = 1.0 / x;
    let (s, ds) = psi_asymptotic_reduced(alpha, beta, y)?;
    let scale = x.powf(-alpha);
    // d/dx [x^{-α} S(1/x)] = x^{-α-1} (-α S - y S')
    let value = scale * s;
    let deriv = scale * y * (-alpha * s - y * ds);
    (value.is_finite() && deriv.is_finite()).then_some((value, deriv))
}

fn psi_ode(alpha: f64, beta: f64, x: f64) -> Result<(f64, f64), SpecfunError> {
    let mut x_hi = x.max(ASYMPTOTIC_X_MIN);
    let start = loop {
        if x_hi > x {
            if let Some(v) = psi_asymptotic(alpha, beta, x_hi) {
                break v;
            }
        }
        x_hi *= 2.0;
        if x_hi > 1e7 {
            return Err(SpecfunError::NonConvergence {
                what: "kummer_psi (asymptotic start)",
                terms: 2000,
            });
        }
    };
    let rhs = move |t: f64, y: ode::State| [y[1], (alpha * y[0] - (beta - t) * y[1]) / t];
    let y = ode::integrate(rhs, x_hi, [start.0, start.1], x, ode::DEFAULT_RTOL, 1e-300)?;
    Ok((y[0], y[1]))
}

/// Ψ(α, β; x) together with its derivative and the evaluation path.
///
/// Small arguments use the two-term representation through Φ; large ones
/// use the asymptotic expansion, and the range in between is covered by
/// integrating Kummer's equation inward, where Ψ is the dominant solution.
pub fn kummer_psi_eval(
    alpha: f64,
    beta: f64,
    x: f64,
    ctl: &SeriesControl,
) -> Result<PsiEval, SpecfunError> {
    check_psi_args(beta, x)?;
    if x <= FORMULA_X_MAX {
        let (v, rv) = psi_formula(alpha, beta, x, ctl)?;
        let (d, rd) = if alpha == 0.0 {
            (0.0, 1.0)
        } else {
            let (u, r) = psi_formula(alpha + 1.0, beta + 1.0, x, ctl)?;
            (-alpha * u, r)
        };
        if rv <= CANCELLATION_LIMIT && rd <= CANCELLATION_LIMIT {
            return Ok(PsiEval {
                value: v,
                deriv: d,
                path: PsiPath::Formula,
            });
        }
    }
    if x >= ASYMPTOTIC_X_MIN {
        if let Some((value, deriv)) = psi_asymptotic(alpha, beta, x) {
            return Ok(PsiEval {
                value,
                deriv,
                path: PsiPath::Asymptotic,
            });
        }
    }
    let (value, deriv) = psi_ode(alpha, beta, x)?;
    Ok(PsiEval {
        value,
        deriv,
        path: PsiPath::Ode,
    })
}

/// Kummer's function of the second kind Ψ(α, β; x) for `x > 0` and
/// non-integer β.
pub fn kummer_psi(alpha: f64, beta: f64, x: f64, ctl: &SeriesControl) -> Result<f64, SpecfunError> {
    kummer_psi_eval(alpha, beta, x, ctl).map(|e| e.value)
}

/// `dΨ/dx = -α Ψ(α+1, β+1; x)`.
pub fn kummer_psi_deriv(
    alpha: f64,
    beta: f64,
    x: f64,
    ctl: &SeriesControl,
) -> Result<f64, SpecfunError> {
    check_psi_args(beta, x)?;
    if alpha == 0.0 {
        return Ok(0.0);
    }
    Ok(-alpha * kummer_psi(alpha + 1.0, beta + 1.0, x, ctl)?)
}
