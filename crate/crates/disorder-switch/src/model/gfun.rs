//! The fundamental solutions of `(L_0 − r)G = 0` and `(L_1 − r)G = 0`:
//!
//! ```text
//! G_00(π) = (1−π) (π/(1−π))^{γ+} Ψ(γ+−1, γ+−γ−+1; z),   z = 2λπ/(ρ(1−π))
//! G_01(π) = (1−π) (π/(1−π))^{γ+} Φ(γ+−1, γ+−γ−+1; z)
//! ```
//!
//! and `G_1j(π) = G_0j(1−π)`. Near `π = 1` the large-`z` form
//! `G_00 = π c^{1−γ+} S((1−π)/(cπ))`, `c = 2λ/ρ`, is used, with `S` the
//! reduced asymptotic series of Ψ; it is regular at the endpoint.

use super::{gammas, DerivedConstants, GEval, ModelError, ModelParams};
use crate::specfun::{
    kummer_phi, kummer_phi_deriv, kummer_psi_eval, psi_asymptotic_reduced, PsiPath, SeriesControl,
};

const REDUCED_Z_MIN: f64 = 30.0;

#[derive(Debug, Clone)]
pub struct GFunctions {
    lambda_eff: f64,
    gamma_plus: f64,
    alpha: f64,
    beta: f64,
    c: f64,
    ctl: SeriesControl,
}

fn near_integer(x: f64) -> bool {
    (x - x.round()).abs() < 1e-8
}

impl GFunctions {
    pub fn new(
        p: &ModelParams,
        dc: &DerivedConstants,
        ctl: SeriesControl,
    ) -> Result<Self, ModelError> {
        let mut lambda = p.lambda;
        let (mut gp, mut gm) = (dc.gamma_plus, dc.gamma_minus);
        let mut k = 0;
        while near_integer(gp - gm + 1.0) {
            if k > 8 {
                return Err(ModelError::InvalidParams(format!(
                    "cannot move gamma_plus - gamma_minus + 1 = {} off the integers",
                    gp - gm + 1.0
                )));
            }
            lambda = p.lambda * (1.0 + 1e-9 * 10f64.powi(k));
            (gp, gm) = gammas(lambda, p.r, dc.rho);
            k += 1;
        }
        if lambda != p.lambda {
            log::warn!(
                "Kummer parameter {} is near an integer; using lambda = {lambda:e} for G",
                dc.gamma_plus - dc.gamma_minus + 1.0
            );
        }
        Ok(GFunctions {
            lambda_eff: lambda,
            gamma_plus: gp,
            alpha: gp - 1.0,
            beta: gp - gm + 1.0,
            c: 2.0 * lambda / dc.rho,
            ctl,
        })
    }

    /// The switching intensity actually used. It differs from the model's
    /// only when the Kummer parameter would otherwise be an integer.
    pub fn lambda_effective(&self) -> f64 {
        self.lambda_eff
    }

    fn check(&self, pi: f64, what: &'static str) -> Result<(), ModelError> {
        if !(pi > 0.0 && pi <= 1.0) {
            return Err(ModelError::OutOfRange { what, pi });
        }
        Ok(())
    }

    // (1−π)(π/(1−π))^{γ+} and its logarithmic derivative
    fn prefactor(&self, pi: f64) -> (f64, f64) {
        let gp = self.gamma_plus;
        let pre = (1.0 - pi) * (pi / (1.0 - pi)).powf(gp);
        (pre, gp / pi + (gp - 1.0) / (1.0 - pi))
    }

    pub fn g00(&self, pi: f64) -> Result<GEval, ModelError> {
        self.check(pi, "G_00")?;
        let z = if pi < 1.0 { self.c * pi / (1.0 - pi) } else { f64::INFINITY };
        if z >= REDUCED_Z_MIN {
            let y = (1.0 - pi) / (self.c * pi);
            if let Some((s, ds)) = psi_asymptotic_reduced(self.alpha, self.beta, y) {
                let k = self.c.powf(-self.alpha);
                return Ok(GEval {
                    value: k * pi * s,
                    deriv: k * (s - ds / (self.c * pi)),
                    psi_path: Some(PsiPath::Asymptotic),
                });
            }
        }
        let e = kummer_psi_eval(self.alpha, self.beta, z, &self.ctl)?;
        let (pre, dlog) = self.prefactor(pi);
        let dz = self.c / ((1.0 - pi) * (1.0 - pi));
        let value = pre * e.value;
        let deriv = pre * (dlog * e.value + e.deriv * dz);
        if !(value.is_finite() && deriv.is_finite()) {
            return Err(ModelError::Overflow { what: "G_00", pi });
        }
        Ok(GEval {
            value,
            deriv,
            psi_path: Some(e.path),
        })
    }

    pub fn g01(&self, pi: f64) -> Result<GEval, ModelError> {
        self.check(pi, "G_01")?;
        if pi == 1.0 {
            return Err(ModelError::Overflow { what: "G_01", pi });
        }
        let z = self.c * pi / (1.0 - pi);
        let f = kummer_phi(self.alpha, self.beta, z, &self.ctl)?;
        let df = kummer_phi_deriv(self.alpha, self.beta, z, &self.ctl)?;
        let (pre, dlog) = self.prefactor(pi);
        let dz = self.c / ((1.0 - pi) * (1.0 - pi));
        let value = pre * f;
        let deriv = pre * (dlog * f + df * dz);
        if !(value.is_finite() && deriv.is_finite()) {
            return Err(ModelError::Overflow { what: "G_01", pi });
        }
        Ok(GEval {
            value,
            deriv,
            psi_path: None,
        })
    }
}
