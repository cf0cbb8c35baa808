//! The fundamental solutions `Q_0`, `Q_1` of `(L − r)Q = 0` for the
//! telegraph generator `L = λ(1−2π) d/dπ + ½ρπ²(1−π)² d²/dπ²`.
//!
//! With `t = 1 − 2π`,
//!
//! ```text
//! Q_0(π) = √(π(1−π)) · exp(2λ/(ρπ)) · K(t),
//! ```
//!
//! where `K` solves Heun's double confluent equation with parameters
//! `(−φ, −ξ_H, 0, −ψ)` and is the combination `H_a + κ H_b` of the basis
//! solutions with `(K, K')(0) = (1, 0)` and `(0, 1)` that stays bounded at
//! `t = −1`. This is the solution that is bounded as `π ↑ 1`;
//! `Q_1(π) = Q_0(1−π)`.
//!
//! Evaluation is split into three regions:
//!
//! * `0 ≤ t ≤ t_s`: the Taylor series of `K` at `t = 0`.
//! * `t > t_s` (towards `π = 0`, where `Q_0` is the dominant solution):
//!   integration of the equation for `K`, restarted from stored steps.
//! * `t < 0` (towards `π = 1`, where `Q_0` is recessive and the series
//!   cancels badly): an optimally truncated expansion in powers of
//!   `u = 1 − π` close to the endpoint, and integration of `(L − r)Q = 0`
//!   inward from there. The result is scaled to the exact value at
//!   `π = 1/2`, where `K = 1`; the slope there, `K' = κ`, is left as a
//!   consistency check.

use serde::{Deserialize, Serialize};

use super::{DerivedConstants, ModelError, ModelParams, Scaled};
use crate::specfun::ode::{self, Checkpoints};
use crate::specfun::{eval_inside, heun_recessive_ratio, HeunParams, SeriesControl};

const DOMINANT_T_END: f64 = 1.0 - 2e-4;
const ASYMPTOTIC_TERMS: usize = 400;
// The smallest retained term of the endpoint expansion must be below this
// fraction of the sum.
const ASYMPTOTIC_TOL: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QPath {
    Series,
    DominantOde,
    RecessiveAsymptotic,
    RecessiveOde,
}

/// Construction details of the Q tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QDiagnostics {
    pub kappa: f64,
    pub t_series: f64,
    pub u_asymptotic: f64,
    /// Relative mismatch of `Q_0'(1/2)` between the exact value and the
    /// endpoint construction, after matching values.
    pub junction_slope_mismatch: f64,
    pub dominant_steps: usize,
    pub recessive_steps: usize,
}

#[derive(Debug, Clone)]
pub struct QFunctions {
    lambda: f64,
    r: f64,
    rho: f64,
    heun: HeunParams,
    kappa: f64,
    t_s: f64,
    ctl: SeriesControl,
    dominant: Checkpoints,
    endpoint: Vec<f64>,
    u_a: f64,
    recessive: Checkpoints,
    norm: f64,
    diag: QDiagnostics,
}

impl QFunctions {
    pub fn new(
        p: &ModelParams,
        dc: &DerivedConstants,
        ctl: SeriesControl,
    ) -> Result<Self, ModelError> {
        let heun = HeunParams::new(dc.phi, dc.psi, 0.0, dc.xi_h).continued();
        let kappa = heun_recessive_ratio(&heun, ctl.max_terms.max(4000))?;
        let a = 4.0 * p.lambda / dc.rho;
        let t_s = (1.0 - a / 9.0).clamp(0.3, 0.9);

        let (k, dk, _) = eval_inside(&heun, 1.0, kappa, t_s, &ctl)?;
        let rhs = move |t: f64, y: ode::State| [y[1], heun.second_derivative(t, y[0], y[1])];
        let tr = ode::trajectory(rhs, t_s, [k, dk], DOMINANT_T_END, ode::DEFAULT_RTOL, 1e-300)?;
        let dominant_steps = tr.len();
        let dominant = Checkpoints::new(tr);

        let endpoint = endpoint_coefficients(p.lambda, p.r, dc.rho);
        let pi_j = 0.5;
        let mut u_a = (2.0 * p.lambda / dc.rho / 40.0).min(0.25);
        let start = loop {
            if let Some(v) = sum_endpoint(&endpoint, u_a) {
                break v;
            }
            u_a *= 0.5;
            if u_a < 1e-12 {
                return Err(ModelError::OutOfRange {
                    what: "endpoint expansion of Q_0",
                    pi: 1.0 - u_a,
                });
            }
        };
        let (lambda, r, rho) = (p.lambda, p.r, dc.rho);
        let rhs = move |x: f64, y: ode::State| [y[1], q_second_derivative(lambda, r, rho, x, y[0], y[1])];
        // dF/dπ = −dF/du
        let tr = ode::trajectory(
            rhs,
            1.0 - u_a,
            [start.0, -start.1],
            pi_j,
            ode::DEFAULT_RTOL,
            1e-300,
        )?;
        let recessive_steps = tr.len();
        let (_, f_j) = *tr.last().expect("trajectory is never empty");
        let recessive = Checkpoints::new(tr);

        let mut q = QFunctions {
            lambda,
            r,
            rho,
            heun,
            kappa,
            t_s,
            ctl,
            dominant,
            endpoint,
            u_a,
            recessive,
            norm: 1.0,
            diag: QDiagnostics {
                kappa,
                t_series: t_s,
                u_asymptotic: u_a,
                junction_slope_mismatch: 0.0,
                dominant_steps,
                recessive_steps,
            },
        };
        let exact = q.prefactor(pi_j, 1.0, kappa);
        let (v, d) = (exact.m * exact.ln_s.exp(), exact.dm * exact.ln_s.exp());
        q.norm = v / f_j[0];
        q.diag.junction_slope_mismatch = (q.norm * f_j[1] - d).abs() / d.abs().max(1e-300);
        if q.diag.junction_slope_mismatch > 1e-8 {
            log::warn!(
                "Q_0 junction slope mismatch {:.3e} at pi = {pi_j}",
                q.diag.junction_slope_mismatch
            );
        }
        Ok(q)
    }

    pub fn diagnostics(&self) -> QDiagnostics {
        self.diag
    }

    fn prefactor(&self, pi: f64, k: f64, dk_dt: f64) -> Scaled {
        let w = (pi * (1.0 - pi)).sqrt();
        let c = 2.0 * self.lambda / self.rho;
        // d/dπ [√(π(1−π)) e^{c/π} K(1−2π)] e^{−c/π}
        let dw = (1.0 - 2.0 * pi) / (2.0 * w);
        Scaled {
            m: w * k,
            dm: dw * k - 2.0 * w * dk_dt - c / (pi * pi) * w * k,
            ln_s: c / pi,
        }
    }

    fn series(&self, pi: f64) -> Result<Scaled, ModelError> {
        let (k, dk, _) = eval_inside(&self.heun, 1.0, self.kappa, 1.0 - 2.0 * pi, &self.ctl)?;
        Ok(self.prefactor(pi, k, dk))
    }

    /// `Q_0(π)` in scaled form.
    pub fn q0(&self, pi: f64) -> Result<(Scaled, QPath), ModelError> {
        if !(pi >= 0.5 * (1.0 - DOMINANT_T_END) && pi <= 1.0) {
            return Err(ModelError::OutOfRange { what: "Q_0", pi });
        }
        let t = 1.0 - 2.0 * pi;
        if (0.0..=self.t_s).contains(&t) {
            return Ok((self.series(pi)?, QPath::Series));
        }
        if t > 0.0 {
            let (t0, y0) = self.dominant.restart_for(t);
            let heun = self.heun;
            let rhs = move |t: f64, y: ode::State| [y[1], heun.second_derivative(t, y[0], y[1])];
            let y = ode::integrate(rhs, t0, y0, t, ode::DEFAULT_RTOL, 1e-300)?;
            return Ok((self.prefactor(pi, y[0], y[1]), QPath::DominantOde));
        }
        let u = 1.0 - pi;
        if u <= self.u_a {
            let (f, df) = sum_endpoint(&self.endpoint, u).ok_or(ModelError::OutOfRange {
                what: "endpoint expansion of Q_0",
                pi,
            })?;
            let s = Scaled {
                m: self.norm * f,
                dm: -self.norm * df,
                ln_s: 0.0,
            };
            return Ok((s, QPath::RecessiveAsymptotic));
        }
        let (x0, y0) = self.recessive.restart_for(pi);
        let (lambda, r, rho) = (self.lambda, self.r, self.rho);
        let rhs = move |x: f64, y: ode::State| [y[1], q_second_derivative(lambda, r, rho, x, y[0], y[1])];
        let y = ode::integrate(rhs, x0, y0, pi, ode::DEFAULT_RTOL, 1e-300)?;
        let s = Scaled {
            m: self.norm * y[0],
            dm: self.norm * y[1],
            ln_s: 0.0,
        };
        Ok((s, QPath::RecessiveOde))
    }
}

fn q_second_derivative(lambda: f64, r: f64, rho: f64, pi: f64, q: f64, dq: f64) -> f64 {
    let w = pi * (1.0 - pi);
    (r * q - lambda * (1.0 - 2.0 * pi) * dq) / (0.5 * rho * w * w)
}

/// Coefficients of the formal solution `Σ f_n u^n`, `f_0 = 1`, of
/// `(L − r)Q = 0` in `u = 1 − π`:
///
/// ```text
/// λ(n+1) f_{n+1} = (r + 2λn) f_n
///     − ½ρ [n(n−1) f_n − 2(n−1)(n−2) f_{n−1} + (n−2)(n−3) f_{n−2}]
/// ```
fn endpoint_coefficients(lambda: f64, r: f64, rho: f64) -> Vec<f64> {
    let mut f = vec![1.0];
    for n in 0..ASYMPTOTIC_TERMS {
        let nf = n as f64;
        let g = |k: isize| if k < 0 { 0.0 } else { f[k as usize] };
        let ni = n as isize;
        let s = (r + 2.0 * lambda * nf) * f[n]
            - 0.5
                * rho
                * (nf * (nf - 1.0) * f[n] - 2.0 * (nf - 1.0) * (nf - 2.0) * g(ni - 1)
                    + (nf - 2.0) * (nf - 3.0) * g(ni - 2));
        let next = s / (lambda * (nf + 1.0));
        if !next.is_finite() || next.abs() > 1e250 {
            break;
        }
        f.push(next);
    }
    f
}

/// Optimally truncated sum and its `u`-derivative; `None` when the smallest
/// term is not negligible.
fn sum_endpoint(f: &[f64], u: f64) -> Option<(f64, f64)> {
    if u == 0.0 {
        return Some((1.0, f.get(1).copied().unwrap_or(0.0)));
    }
    let mut sum = f[0];
    let mut dsum = 0.0;
    let mut prev = f64::INFINITY;
    let mut pow = 1.0;
    for (n, &c) in f.iter().enumerate().skip(1) {
        let dterm = n as f64 * c * pow;
        pow *= u;
        let term = c * pow;
        if term.abs() > prev && n > 2 {
            return None;
        }
        sum += term;
        dsum += dterm;
        if term.abs() <= ASYMPTOTIC_TOL * sum.abs() {
            return Some((sum, dsum));
        }
        if term != 0.0 {
            prev = term.abs();
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn baseline() -> QFunctions {
        let p = ModelParams::baseline();
        QFunctions::new(&p, &DerivedConstants::derive(&p), SeriesControl::default()).unwrap()
    }

    #[test]
    fn kappa_and_junction() {
        let q = baseline();
        let d = q.diagnostics();
        assert!((d.kappa - 0.033_470_898_463_774_1).abs() < 1e-12);
        assert!(d.junction_slope_mismatch < 1e-8, "{d:?}");
    }

    #[test]
    fn paths_agree_where_they_meet() {
        let q = baseline();
        let t_s = q.t_s;
        for &pi in &[0.5 * (1.0 - t_s), 0.5] {
            let e = 1e-9;
            let (_, pa) = q.q0(pi - e).unwrap();
            let (_, pb) = q.q0(pi + e).unwrap();
            assert_ne!(pa, pb);
            for x in [pi - e, pi + e] {
                let v = q.series(x).unwrap().value().unwrap();
                let o = q.q0(x).unwrap().0.value().unwrap();
                assert!((o - v).abs() < 1e-8 * v, "{x}: {o} vs {v}");
            }
        }
        let pi = 1.0 - q.u_a;
        let (a, pa) = q.q0(pi - 1e-9).unwrap();
        let (b, pb) = q.q0(pi + 1e-9).unwrap();
        assert_ne!(pa, pb);
        assert!((a.m - b.m).abs() < 1e-8 * a.m.abs());
        assert!((a.dm - b.dm).abs() < 1e-6 * a.dm.abs());
    }
}
