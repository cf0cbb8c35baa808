//! Heun's double confluent equation
//!
//! ```text
//! H'' + (2x⁵ − αx⁴ − 4x³ + 2x + α)/(x²−1)³ H' + (βx² + (2α+γ)x + δ)/(x²−1)³ H = 0
//! ```
//!
//! Multiplying through by `(x²−1)³ = x⁶ − 3x⁴ + 3x² − 1` and collecting the
//! coefficient of `xⁿ` after substituting `H = Σ c_k x^k` gives
//!
//! ```text
//! (n+2)(n+1) c_{n+2} = (n−4)(n−5) c_{n−4} − 3(n−2)(n−3) c_{n−2} + 3n(n−1) c_n
//!                    + 2(n−4) c_{n−4} − α(n−3) c_{n−3} − 4(n−2) c_{n−2}
//!                    + 2n c_n + α(n+1) c_{n+1}
//!                    + β c_{n−2} + (2α+γ) c_{n−1} + δ c_n
//! ```
//!
//! with `c_k = 0` for `k < 0`. The normalisation `H(0) = 1`, `H'(0) = 0`
//! fixes `c_0 = 1`, `c_1 = 0`. For `|x| > 1` the value comes from the
//! identity `H(α, β, γ, δ; x) = H(−α, −δ, −γ, −β; 1/x)`.

use serde::{Deserialize, Serialize};

use super::ode;
use super::{SeriesControl, SmallTermRun, SpecfunError};

// Largest tolerated ratio between the biggest series term and the sum
// before switching to direct integration.
const CANCELLATION_LIMIT: f64 = 1e5;
const NEAR_SINGULAR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeunParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl HeunParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Self {
        HeunParams {
            alpha,
            beta,
            gamma,
            delta,
        }
    }

    /// Parameters of the equation satisfied by `x ↦ H(1/x)`.
    pub fn continued(&self) -> HeunParams {
        HeunParams::new(-self.alpha, -self.delta, -self.gamma, -self.beta)
    }

    /// `H''` from the equation.
    pub fn second_derivative(&self, x: f64, h: f64, dh: f64) -> f64 {
        let x2 = x * x;
        let den = (x2 - 1.0).powi(3);
        let p = 2.0 * x2 * x2 * x - self.alpha * x2 * x2 - 4.0 * x2 * x + 2.0 * x + self.alpha;
        let q = self.beta * x2 + (2.0 * self.alpha + self.gamma) * x + self.delta;
        -(p * dh + q * h) / den
    }

    /// Left-hand side of the equation.
    pub fn residual(&self, x: f64, h: f64, dh: f64, d2h: f64) -> f64 {
        d2h - self.second_derivative(x, h, dh)
    }

    fn next_coefficient(&self, n: usize, c: &[f64]) -> f64 {
        let g = |k: isize| if k < 0 { 0.0 } else { c[k as usize] };
        let ni = n as isize;
        let nf = n as f64;
        let (a, b, gm, d) = (self.alpha, self.beta, self.gamma, self.delta);
        let s = (nf - 4.0) * (nf - 5.0) * g(ni - 4) - 3.0 * (nf - 2.0) * (nf - 3.0) * g(ni - 2)
            + 3.0 * nf * (nf - 1.0) * g(ni)
            + 2.0 * (nf - 4.0) * g(ni - 4)
            - a * (nf - 3.0) * g(ni - 3)
            - 4.0 * (nf - 2.0) * g(ni - 2)
            + 2.0 * nf * g(ni)
            + a * (nf + 1.0) * g(ni + 1)
            + b * g(ni - 2)
            + (2.0 * a + gm) * g(ni - 1)
            + d * g(ni);
        s / ((nf + 2.0) * (nf + 1.0))
    }
}

/// First `n` Taylor coefficients at 0 of the solution with `H(0) = c0`,
/// `H'(0) = c1`.
pub fn heun_series_coefficients(p: &HeunParams, c0: f64, c1: f64, n: usize) -> Vec<f64> {
    let mut c = Vec::with_capacity(n.max(2));
    c.push(c0);
    c.push(c1);
    while c.len() < n {
        let k = c.len() - 2;
        let next = p.next_coefficient(k, &c);
        c.push(next);
    }
    c.truncate(n);
    c
}

/// How a Heun value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeunPath {
    Series,
    /// Direct integration from `x = 0`.
    Ode,
    ContinuedSeries,
    ContinuedOde,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeunEval {
    pub value: f64,
    pub deriv: f64,
    pub path: HeunPath,
}

struct SeriesSum {
    value: f64,
    deriv: f64,
    cancellation: f64,
}

fn series_sum(
    p: &HeunParams,
    c0: f64,
    c1: f64,
    x: f64,
    ctl: &SeriesControl,
) -> Result<SeriesSum, SpecfunError> {
    if x == 0.0 {
        return Ok(SeriesSum {
            value: c0,
            deriv: c1,
            cancellation: 1.0,
        });
    }
    let mut c = Vec::with_capacity(256);
    c.push(c0);
    c.push(c1);
    let mut value = c0 + c1 * x;
    let mut deriv = c1;
    let mut xk = x; // x^k for the current k
    let mut max_v = c0.abs().max((c1 * x).abs());
    let mut max_d = c1.abs();
    let mut run = SmallTermRun::default();
    let mut k = 1usize;
    loop {
        let tv = c[k] * xk;
        let td = k as f64 * c[k] * xk / x;
        if k >= 2 {
            value += tv;
            deriv += td;
        }
        max_v = max_v.max(tv.abs());
        max_d = max_d.max(td.abs());
        if !value.is_finite() || !deriv.is_finite() {
            return Err(SpecfunError::Overflow("heun_dc series"));
        }
        let scale = value.abs() + (deriv * x).abs();
        let small = tv.abs() <= ctl.rel_tol * scale && (td * x).abs() <= ctl.rel_tol * scale;
        if run.push(small) && k >= 8 {
            break;
        }
        if k + 1 >= ctl.max_terms {
            return Err(SpecfunError::NonConvergence {
                what: "heun_dc series",
                terms: ctl.max_terms,
            });
        }
        let next = p.next_coefficient(k - 1, &c);
        c.push(next);
        k += 1;
        xk *= x;
    }
    let cancellation = (max_v / value.abs()).max(max_d / deriv.abs());
    Ok(SeriesSum {
        value,
        deriv,
        cancellation,
    })
}

fn ode_from_origin(
    p: &HeunParams,
    c0: f64,
    c1: f64,
    x: f64,
) -> Result<(f64, f64), SpecfunError> {
    let p = *p;
    let rhs = move |t: f64, y: ode::State| [y[1], p.second_derivative(t, y[0], y[1])];
    let y = ode::integrate(rhs, 0.0, [c0, c1], x, ode::DEFAULT_RTOL, 1e-300)?;
    Ok((y[0], y[1]))
}

/// Evaluates the solution with `H(0) = c0`, `H'(0) = c1` at `|x| < 1`,
/// falling back to direct integration when the series loses accuracy.
pub(crate) fn eval_inside(
    p: &HeunParams,
    c0: f64,
    c1: f64,
    x: f64,
    ctl: &SeriesControl,
) -> Result<(f64, f64, bool), SpecfunError> {
    match series_sum(p, c0, c1, x, ctl) {
        Ok(s) if s.cancellation <= CANCELLATION_LIMIT => Ok((s.value, s.deriv, true)),
        Err(e @ SpecfunError::NonConvergence { .. }) if x.abs() > 1.0 - NEAR_SINGULAR => Err(e),
        _ => {
            let (v, d) = ode_from_origin(p, c0, c1, x)?;
            Ok((v, d, false))
        }
    }
}

/// Heun's double confluent function with `H(0) = 1`, `H'(0) = 0`, together
/// with its derivative and the evaluation path.
pub fn heun_dc_eval(
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    x: f64,
    ctl: &SeriesControl,
) -> Result<HeunEval, SpecfunError> {
    if !x.is_finite() {
        return Err(SpecfunError::Domain { what: "heun_dc", x });
    }
    if x.abs() == 1.0 {
        return Err(SpecfunError::SingularArgument(x));
    }
    let p = HeunParams::new(alpha, beta, gamma, delta);
    if x.abs() < 1.0 {
        let (value, deriv, series) = eval_inside(&p, 1.0, 0.0, x, ctl)?;
        let path = if series { HeunPath::Series } else { HeunPath::Ode };
        return Ok(HeunEval { value, deriv, path });
    }
    let z = 1.0 / x;
    let (value, dz, series) = eval_inside(&p.continued(), 1.0, 0.0, z, ctl)?;
    let path = if series {
        HeunPath::ContinuedSeries
    } else {
        HeunPath::ContinuedOde
    };
    Ok(HeunEval {
        value,
        deriv: -dz * z * z,
        path,
    })
}

pub fn heun_dc(
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    x: f64,
    ctl: &SeriesControl,
) -> Result<f64, SpecfunError> {
    heun_dc_eval(alpha, beta, gamma, delta, x, ctl).map(|e| e.value)
}

pub fn heun_dc_deriv(
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    x: f64,
    ctl: &SeriesControl,
) -> Result<f64, SpecfunError> {
    heun_dc_eval(alpha, beta, gamma, delta, x, ctl).map(|e| e.deriv)
}

/// The constant κ for which `H_a + κ H_b` has subexponentially growing
/// Taylor coefficients, where `H_a` and `H_b` are the solutions with
/// `(H, H')(0) = (1, 0)` and `(0, 1)`.
///
/// For `α ≠ 0` the coefficients of both basis solutions grow like
/// `exp(2√(c k))`, reflecting the essential singularity at `x = sign(α)`;
/// κ selects the solution that stays bounded there. It is the limit of
/// `−a_k / b_k`.
pub fn heun_recessive_ratio(p: &HeunParams, max_terms: usize) -> Result<f64, SpecfunError> {
    let mut a = vec![1.0, 0.0];
    let mut b = vec![0.0, 1.0];
    let mut history = Vec::with_capacity(max_terms);
    let mut stable = 0;
    for k in 2..max_terms {
        let na = p.next_coefficient(k - 2, &a);
        let nb = p.next_coefficient(k - 2, &b);
        a.push(na);
        b.push(nb);
        if na.abs() > 1e250 || nb.abs() > 1e250 {
            // the recurrence is linear, so a common rescaling is harmless
            for v in a.iter_mut().chain(b.iter_mut()) {
                *v *= 1e-250;
            }
        }
        let kappa = if nb == 0.0 { f64::NAN } else { -na / nb };
        let prev = history.last().copied().unwrap_or(f64::NAN);
        history.push(kappa);
        if k < 32 {
            continue;
        }
        if (kappa - prev).abs() <= 1e-14 * kappa.abs().max(1e-300) {
            stable += 1;
            if stable >= 10 {
                return Ok(kappa);
            }
        } else {
            stable = 0;
        }
    }
    // Slow coefficient growth leaves rounding noise in the ratio; accept the
    // last value if it agrees with the one at half the length.
    if let (Some(&last), Some(&half)) = (history.last(), history.get(history.len() / 2)) {
        let spread = (last - half).abs() / last.abs().max(1e-300);
        if spread <= 1e-9 {
            log::debug!("recessive ratio {last} settled to {spread:.1e} relative");
            return Ok(last);
        }
    }
    Err(SpecfunError::NonConvergence {
        what: "heun_recessive_ratio",
        terms: max_terms,
    })
}
