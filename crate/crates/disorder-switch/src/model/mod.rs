//! Problem data, derived constants and the closed-form building blocks of
//! the value functions.
//!
//! Filter values live in `[0, 1]`. Index `i = 0` refers to the phase in
//! which the next alarm is sounded at the lower threshold and announces a
//! switch into regime 0; `i = 1` waits for the upper threshold and announces
//! a switch into regime 1.

mod gfun;
mod qfun;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::specfun::{PsiPath, SeriesControl, SpecfunError};

pub use gfun::GFunctions;
pub use qfun::{QDiagnostics, QFunctions, QPath};

/// Lower end of the π window used for all grid work.
pub const PI_MIN: f64 = 1e-4;
/// Upper end of the π window used for all grid work.
pub const PI_MAX: f64 = 1.0 - 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Specfun(#[from] SpecfunError),
    #[error("pi = {pi} outside the evaluation range of {what}")]
    OutOfRange { what: &'static str, pi: f64 },
    #[error("{what} overflows at pi = {pi}")]
    Overflow { what: &'static str, pi: f64 },
    #[error("index {0} is not 0 or 1")]
    BadIndex(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu0: f64,
    pub mu1: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub r: f64,
    pub a: f64,
    pub b: f64,
    pub pi0: f64,
}

impl ModelParams {
    /// `μ0 = −1, μ1 = 1, σ = 1, λ = 1, r = 1, a = b = 1`, started at π = 1/2.
    pub fn baseline() -> Self {
        ModelParams {
            mu0: -1.0,
            mu1: 1.0,
            sigma: 1.0,
            lambda: 1.0,
            r: 1.0,
            a: 1.0,
            b: 1.0,
            pi0: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("mu0", self.mu0),
            ("mu1", self.mu1),
            ("sigma", self.sigma),
            ("lambda", self.lambda),
            ("r", self.r),
            ("a", self.a),
            ("b", self.b),
            ("pi0", self.pi0),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(ModelError::InvalidParams(format!("{name} is not finite")));
        }
        if self.mu0 == self.mu1 {
            return Err(ModelError::InvalidParams("mu0 equals mu1".into()));
        }
        for (name, v) in &fields[2..7] {
            if !(*v > 0.0) {
                return Err(ModelError::InvalidParams(format!("{name} = {v} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.pi0) {
            return Err(ModelError::InvalidParams(format!(
                "pi0 = {} must lie in [0, 1]",
                self.pi0
            )));
        }
        Ok(())
    }

    /// Drift of the observation in the given regime.
    pub fn drift(&self, theta: u8) -> f64 {
        if theta == 0 {
            self.mu0
        } else {
            self.mu1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub rho: f64,
    pub phi: f64,
    pub psi: f64,
    pub xi_h: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
}

impl DerivedConstants {
    pub fn derive(p: &ModelParams) -> Self {
        let rho = ((p.mu1 - p.mu0) / p.sigma).powi(2);
        let phi = 8.0 * p.lambda / rho;
        let psi = phi * phi / 4.0 + phi - 8.0 * p.r / rho - 1.0;
        let (gamma_plus, gamma_minus) = gammas(p.lambda, p.r, rho);
        DerivedConstants {
            rho,
            phi,
            psi,
            xi_h: 4.0 * phi - psi,
            gamma_plus,
            gamma_minus,
        }
    }
}

pub(crate) fn gammas(lambda: f64, r: f64, rho: f64) -> (f64, f64) {
    let s = 0.5 + lambda / rho;
    let d = (s * s + 2.0 * r / rho).sqrt();
    // γ− = −(2r/ρ)/(s + d) avoids cancellation
    (s + d, -(2.0 * r / rho) / (s + d))
}

/// The two problem formulations: a telegraph regime that keeps switching
/// at rate λ, or a regime that switches at most once per alarm cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    F1,
    F2,
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Formulation::F1 => "f1",
            Formulation::F2 => "f2",
        })
    }
}

impl FromStr for Formulation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f1" => Ok(Formulation::F1),
            "f2" => Ok(Formulation::F2),
            other => Err(format!("unknown formulation '{other}' (expected f1 or f2)")),
        }
    }
}

/// Infinitesimal generators of the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Generator {
    /// Drift `λ(1−2π)`, the telegraph regime.
    Chain,
    /// Drift `−λπ`.
    Drop,
    /// Drift `λ(1−π)`.
    Rise,
}

/// Value and first two derivatives of a function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

pub fn apply_generator(params: &ModelParams, rho: f64, which: Generator, f: Jet, pi: f64) -> f64 {
    let lam = params.lambda;
    let drift = match which {
        Generator::Chain => lam * (1.0 - 2.0 * pi),
        Generator::Drop => -lam * pi,
        Generator::Rise => lam * (1.0 - pi),
    };
    let q = pi * (1.0 - pi);
    drift * f.d1 + 0.5 * rho * q * q * f.d2
}

/// `m · e^{ln_s}` with derivative `dm · e^{ln_s}`; keeps functions with an
/// exponential endpoint singularity representable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub m: f64,
    pub dm: f64,
    pub ln_s: f64,
}

impl Scaled {
    pub fn value(&self) -> Option<f64> {
        let v = self.m * self.ln_s.exp();
        v.is_finite().then_some(v)
    }

    pub fn deriv(&self) -> Option<f64> {
        let v = self.dm * self.ln_s.exp();
        v.is_finite().then_some(v)
    }

    /// `c · value` and `c · deriv`, formed without materialising `e^{ln_s}`.
    pub fn times(&self, c: f64) -> (f64, f64) {
        if c == 0.0 {
            return (0.0, 0.0);
        }
        let e = (c.abs().ln() + self.ln_s).exp() * c.signum();
        (e * self.m, e * self.dm)
    }
}

/// Value and derivative of `Q_i` together with the evaluation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QEval {
    pub value: f64,
    pub deriv: f64,
    pub path: QPath,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GEval {
    pub value: f64,
    pub deriv: f64,
    /// How Ψ was evaluated; `None` for the Φ-based functions.
    pub psi_path: Option<PsiPath>,
}

/// A parameter set with its derived constants and lazily built function
/// tables.
#[derive(Debug, Clone)]
pub struct Model {
    params: ModelParams,
    dc: DerivedConstants,
    ctl: SeriesControl,
    q: OnceLock<Result<QFunctions, ModelError>>,
    g: OnceLock<Result<GFunctions, ModelError>>,
}

fn check_index(i: usize) -> Result<(), ModelError> {
    if i > 1 {
        Err(ModelError::BadIndex(i))
    } else {
        Ok(())
    }
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self, ModelError> {
        Self::with_control(params, SeriesControl::default())
    }

    pub fn with_control(params: ModelParams, ctl: SeriesControl) -> Result<Self, ModelError> {
        params.validate()?;
        Ok(Model {
            params,
            dc: DerivedConstants::derive(&params),
            ctl,
            q: OnceLock::new(),
            g: OnceLock::new(),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dc(&self) -> &DerivedConstants {
        &self.dc
    }

    pub fn control(&self) -> &SeriesControl {
        &self.ctl
    }

    pub fn q_functions(&self) -> Result<&QFunctions, ModelError> {
        self.q
            .get_or_init(|| QFunctions::new(&self.params, &self.dc, self.ctl))
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn g_functions(&self) -> Result<&GFunctions, ModelError> {
        self.g
            .get_or_init(|| GFunctions::new(&self.params, &self.dc, self.ctl))
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn q_scaled(&self, i: usize, pi: f64) -> Result<(Scaled, QPath), ModelError> {
        check_index(i)?;
        let q = self.q_functions()?;
        if i == 0 {
            q.q0(pi)
        } else {
            let (s, path) = q.q0(1.0 - pi)?;
            Ok((Scaled { dm: -s.dm, ..s }, path))
        }
    }

    pub fn q_eval(&self, i: usize, pi: f64) -> Result<QEval, ModelError> {
        let (s, path) = self.q_scaled(i, pi)?;
        let overflow = ModelError::Overflow { what: "Q", pi };
        Ok(QEval {
            value: s.value().ok_or_else(|| overflow.clone())?,
            deriv: s.deriv().ok_or(overflow)?,
            path,
        })
    }

    /// `Q_i(π)`.
    pub fn q_fn(&self, i: usize, pi: f64) -> Result<f64, ModelError> {
        self.q_eval(i, pi).map(|e| e.value)
    }

    pub fn q_fn_deriv(&self, i: usize, pi: f64) -> Result<f64, ModelError> {
        self.q_eval(i, pi).map(|e| e.deriv)
    }

    pub fn g_eval(&self, i: usize, j: usize, pi: f64) -> Result<GEval, ModelError> {
        check_index(i)?;
        check_index(j)?;
        let g = self.g_functions()?;
        // G_{11}(π) = G_{00}(1−π), G_{10}(π) = G_{01}(1−π)
        let (x, flip) = if i == 0 { (pi, 1.0) } else { (1.0 - pi, -1.0) };
        let e = if i == j { g.g00(x)? } else { g.g01(x)? };
        Ok(GEval {
            deriv: flip * e.deriv,
            ..e
        })
    }

    /// `G_ij(π)`.
    pub fn g_fn(&self, i: usize, j: usize, pi: f64) -> Result<f64, ModelError> {
        self.g_eval(i, j, pi).map(|e| e.value)
    }

    pub fn g_fn_deriv(&self, i: usize, j: usize, pi: f64) -> Result<f64, ModelError> {
        self.g_eval(i, j, pi).map(|e| e.deriv)
    }

    /// `R_0(π) = −aπ + (1−2π)/(2λ+r)`, `R_1(π) = b(1−π) + (1−2π)/(2λ+r)`.
    pub fn r_fn(&self, i: usize, pi: f64) -> f64 {
        let p = &self.params;
        affine(i, p.a, p.b, 2.0 * p.lambda + p.r, pi).0
    }

    pub fn r_fn_deriv(&self, i: usize, pi: f64) -> f64 {
        let p = &self.params;
        affine(i, p.a, p.b, 2.0 * p.lambda + p.r, pi).1
    }

    /// As [`Model::r_fn`] with `λ + r` in place of `2λ + r`.
    pub fn s_fn(&self, i: usize, pi: f64) -> f64 {
        let p = &self.params;
        affine(i, p.a, p.b, p.lambda + p.r, pi).0
    }

    pub fn s_fn_deriv(&self, i: usize, pi: f64) -> f64 {
        let p = &self.params;
        affine(i, p.a, p.b, p.lambda + p.r, pi).1
    }

    /// Particular solution of `(L − r)V = −(1−π)` (`i = 0`) or `−π` (`i = 1`)
    /// and its slope.
    pub fn particular_v(&self, i: usize, pi: f64) -> (f64, f64) {
        let p = &self.params;
        particular(i, p.lambda, p.r, 2.0 * p.lambda + p.r, pi)
    }

    /// Particular solution of `(L_0 − r)U = −(1−π)` (`i = 0`) or
    /// `(L_1 − r)U = −π` (`i = 1`) and its slope.
    pub fn particular_u(&self, i: usize, pi: f64) -> (f64, f64) {
        let p = &self.params;
        particular(i, p.lambda, p.r, p.lambda + p.r, pi)
    }

    /// `V_i(π) = coeff · Q_i(π) + particular part`, with its derivative.
    pub fn value_v_eval(&self, i: usize, pi: f64, coeff: f64) -> Result<(f64, f64), ModelError> {
        let (v0, d0) = self.particular_v(i, pi);
        if coeff == 0.0 {
            return Ok((v0, d0));
        }
        let (s, _) = self.q_scaled(i, pi)?;
        let (v, d) = s.times(coeff);
        if !(v.is_finite() && d.is_finite()) {
            return Err(ModelError::Overflow { what: "V", pi });
        }
        Ok((v + v0, d + d0))
    }

    pub fn value_v(&self, i: usize, pi: f64, coeff: f64) -> Result<f64, ModelError> {
        self.value_v_eval(i, pi, coeff).map(|e| e.0)
    }

    pub fn value_v_deriv(&self, i: usize, pi: f64, coeff: f64) -> Result<f64, ModelError> {
        self.value_v_eval(i, pi, coeff).map(|e| e.1)
    }

    /// `U_i(π) = coeff · G_ii(π) + particular part`, with its derivative.
    pub fn value_u_eval(&self, i: usize, pi: f64, coeff: f64) -> Result<(f64, f64), ModelError> {
        let (v0, d0) = self.particular_u(i, pi);
        if coeff == 0.0 {
            return Ok((v0, d0));
        }
        let g = self.g_eval(i, i, pi)?;
        Ok((coeff * g.value + v0, coeff * g.deriv + d0))
    }

    pub fn value_u(&self, i: usize, pi: f64, coeff: f64) -> Result<f64, ModelError> {
        self.value_u_eval(i, pi, coeff).map(|e| e.0)
    }

    pub fn value_u_deriv(&self, i: usize, pi: f64, coeff: f64) -> Result<f64, ModelError> {
        self.value_u_eval(i, pi, coeff).map(|e| e.1)
    }

    /// `V_i` under F1, `U_i` under F2.
    pub fn value_eval(
        &self,
        form: Formulation,
        i: usize,
        pi: f64,
        coeff: f64,
    ) -> Result<(f64, f64), ModelError> {
        match form {
            Formulation::F1 => self.value_v_eval(i, pi, coeff),
            Formulation::F2 => self.value_u_eval(i, pi, coeff),
        }
    }

    /// Value function with its second derivative read off the ODE it
    /// solves, `(L_i − r)F = −(1−π)` or `−π`. Needs `0 < π < 1`.
    pub fn value_jet(
        &self,
        form: Formulation,
        i: usize,
        pi: f64,
        coeff: f64,
    ) -> Result<Jet, ModelError> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(ModelError::OutOfRange { what: "value jet", pi });
        }
        let (value, d1) = self.value_eval(form, i, pi, coeff)?;
        let source = if i == 0 { 1.0 - pi } else { pi };
        let flat = Jet { value, d1, d2: 0.0 };
        let first_order = self.apply_generator(Self::generator(form, i), flat, pi);
        let w = pi * (1.0 - pi);
        let d2 = (self.params.r * value - first_order - source) / (0.5 * self.dc.rho * w * w);
        Ok(Jet { value, d1, d2 })
    }

    pub fn apply_generator(&self, which: Generator, f: Jet, pi: f64) -> f64 {
        apply_generator(&self.params, self.dc.rho, which, f, pi)
    }

    /// The generator under which the phase-`i` value function of a
    /// formulation evolves.
    pub fn generator(form: Formulation, i: usize) -> Generator {
        match (form, i) {
            (Formulation::F1, _) => Generator::Chain,
            (Formulation::F2, 0) => Generator::Drop,
            (Formulation::F2, _) => Generator::Rise,
        }
    }
}

fn affine(i: usize, a: f64, b: f64, k: f64, pi: f64) -> (f64, f64) {
    let common = (1.0 - 2.0 * pi) / k;
    if i == 0 {
        (-a * pi + common, -a - 2.0 / k)
    } else {
        (b * (1.0 - pi) + common, -b - 2.0 / k)
    }
}

fn particular(i: usize, lambda: f64, r: f64, k: f64, pi: f64) -> (f64, f64) {
    if i == 0 {
        ((lambda + r * (1.0 - pi)) / (r * k), -1.0 / k)
    } else {
        ((lambda + r * pi) / (r * k), 1.0 / k)
    }
}
