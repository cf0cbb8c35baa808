//! Special functions: Euler's gamma, Kummer's confluent hypergeometric
//! functions Φ and Ψ, and Heun's double confluent function.
//!
//! All functions are pure and real-valued.

mod gamma;
mod heun;
mod kummer;
pub(crate) mod ode;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gamma::{gamma_fn, rgamma, sin_pi};
pub use heun::{
    heun_dc, heun_dc_deriv, heun_dc_eval, heun_recessive_ratio, heun_series_coefficients,
    HeunEval, HeunParams, HeunPath,
};
pub(crate) use heun::eval_inside;
pub(crate) use kummer::psi_asymptotic_reduced;
pub use kummer::{
    kummer_phi, kummer_phi_deriv, kummer_psi, kummer_psi_deriv, kummer_psi_eval, PsiEval, PsiPath,
};

/// Truncation policy for the power series evaluated in this module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesControl {
    pub rel_tol: f64,
    pub max_terms: usize,
}

impl Default for SeriesControl {
    fn default() -> Self {
        SeriesControl {
            rel_tol: 1e-12,
            max_terms: 10_000,
        }
    }
}

impl SeriesControl {
    pub fn new(rel_tol: f64, max_terms: usize) -> Result<Self, SpecfunError> {
        if !(rel_tol > 0.0) || max_terms < 16 {
            return Err(SpecfunError::InvalidControl { rel_tol, max_terms });
        }
        Ok(SeriesControl { rel_tol, max_terms })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecfunError {
    #[error("gamma function pole at x = {0}")]
    Pole(f64),
    #[error("{what}: series did not converge within {terms} terms")]
    NonConvergence { what: &'static str, terms: usize },
    #[error("beta = {0} is within 1e-8 of an integer")]
    DegenerateParameter(f64),
    #[error("singular argument x = {0}")]
    SingularArgument(f64),
    #[error("argument x = {x} outside the domain of {what}")]
    Domain { what: &'static str, x: f64 },
    #[error("{0} overflowed")]
    Overflow(&'static str),
    #[error("ODE integration failed: {0}")]
    Integration(String),
    #[error("invalid series control: rel_tol = {rel_tol}, max_terms = {max_terms}")]
    InvalidControl { rel_tol: f64, max_terms: usize },
}

/// Counts consecutive small terms; the series is declared converged after
/// three in a row.
#[derive(Debug, Default)]
pub(crate) struct SmallTermRun(u32);

impl SmallTermRun {
    pub(crate) fn push(&mut self, small: bool) -> bool {
        if small {
            self.0 += 1;
        } else {
            self.0 = 0;
        }
        self.0 >= 3
    }
}
