//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the library's special functions or integrators.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Φ(α, β; x) by a fixed number of terms in exact rational arithmetic.
/// Arguments are given as (numerator, denominator) pairs.
pub fn phi_exact(alpha: (i64, i64), beta: (i64, i64), x: (i64, i64), terms: usize) -> f64 {
    let r = |p: (i64, i64)| BigRational::new(BigInt::from(p.0), BigInt::from(p.1));
    let (a, b, x) = (r(alpha), r(beta), r(x));
    let mut term = BigRational::one();
    let mut sum = BigRational::one();
    for k in 0..terms {
        let kq = BigRational::from_integer(BigInt::from(k as i64));
        term = term * (&a + &kq) / (&b + &kq) * &x / (&kq + BigRational::one());
        sum += &term;
        if term.is_zero() {
            break;
        }
    }
    sum.to_f64().unwrap()
}

/// `∫_0^∞ f(t) dt` by the exp-sinh rule for integrands that decay double
/// exponentially after the substitution `t = exp(π/2 sinh u)`.
pub fn exp_sinh<F: Fn(f64) -> f64>(f: F, h: f64, u_max: f64) -> f64 {
    let n = (u_max / h).ceil() as i64;
    let mut s = 0.0;
    for k in -n..=n {
        let u = k as f64 * h;
        let t = (std::f64::consts::FRAC_PI_2 * u.sinh()).exp();
        let w = t * std::f64::consts::FRAC_PI_2 * u.cosh();
        let v = f(t) * w;
        if v.is_finite() {
            s += v;
        }
    }
    s * h
}

/// Γ(a) for a > 0 from its integral.
pub fn gamma_quadrature(a: f64) -> f64 {
    exp_sinh(|t| (-t + (a - 1.0) * t.ln()).exp(), 1.0 / 128.0, 7.0)
}

/// Ψ(a, b; x) for a > 0 from `Γ(a)⁻¹ ∫_0^∞ e^{-xt} t^{a-1} (1+t)^{b-a-1} dt`.
pub fn psi_quadrature(a: f64, b: f64, x: f64) -> f64 {
    let i = exp_sinh(
        |t| (-x * t + (a - 1.0) * t.ln() + (b - a - 1.0) * t.ln_1p()).exp(),
        1.0 / 128.0,
        7.0,
    );
    i / gamma_quadrature(a)
}

/// Classical fixed-step RK4 for a two-dimensional system.
pub fn rk4<F: Fn(f64, [f64; 2]) -> [f64; 2]>(f: &F, x0: f64, y0: [f64; 2], x1: f64, n: usize) -> [f64; 2] {
    let h = (x1 - x0) / n as f64;
    let mut y = y0;
    for i in 0..n {
        let x = x0 + i as f64 * h;
        let k1 = f(x, y);
        let k2 = f(x + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = f(x + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = f(x + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        for j in 0..2 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    y
}

/// RK4 with one Richardson extrapolation step.
pub fn rk4_richardson<F: Fn(f64, [f64; 2]) -> [f64; 2]>(
    f: &F,
    x0: f64,
    y0: [f64; 2],
    x1: f64,
    n: usize,
) -> [f64; 2] {
    let a = rk4(f, x0, y0, x1, n);
    let b = rk4(f, x0, y0, x1, 2 * n);
    [(16.0 * b[0] - a[0]) / 15.0, (16.0 * b[1] - a[1]) / 15.0]
}

/// Right-hand side of Heun's double confluent equation as a first-order
/// system.
pub fn heun_rhs(al: f64, be: f64, ga: f64, de: f64) -> impl Fn(f64, [f64; 2]) -> [f64; 2] {
    move |x, y| {
        let den = (x * x - 1.0).powi(3);
        let p = 2.0 * x.powi(5) - al * x.powi(4) - 4.0 * x.powi(3) + 2.0 * x + al;
        let q = be * x * x + (2.0 * al + ga) * x + de;
        [y[1], -(p * y[1] + q * y[0]) / den]
    }
}

/// Baseline constants (λ, r, ρ) = (1, 1, 4).
pub const LAMBDA: f64 = 1.0;
pub const R: f64 = 1.0;
pub const RHO: f64 = 4.0;

/// `(drift(π) F' + ½ρπ²(1−π)² F'' − r F = −source(π))` solved for F''.
pub fn generator_rhs(
    drift: impl Fn(f64) -> f64,
    source: impl Fn(f64) -> f64,
    r: f64,
    rho: f64,
) -> impl Fn(f64, [f64; 2]) -> [f64; 2] {
    move |p, y| {
        let w = p * (1.0 - p);
        [y[1], (r * y[0] - drift(p) * y[1] - source(p)) / (0.5 * rho * w * w)]
    }
}

/// Second derivative from a first-derivative function by the fourth-order
/// central stencil.
pub fn fd_second(d: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (8.0 * (d(x + h) - d(x - h)) - (d(x + 2.0 * h) - d(x - 2.0 * h))) / (12.0 * h)
}

/// The 181-point grid on [0.05, 0.95].
pub fn grid_181() -> Vec<f64> {
    (0..181).map(|k| 0.05 + 0.005 * k as f64).collect()
}

/// `1/(1+e^{−x})`.
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// The free-boundary problem of one formulation, solved by shooting: the
/// two inhomogeneous ODEs are integrated in `x = logit(π)` inward from
/// `π = ε` and `π = 1 − ε`, where the unbounded solution decays away from
/// the endpoint, and the thresholds together with the two starting values
/// are fixed by the four stopping and smooth-fit conditions through
/// Newton's method.
#[derive(Debug, Clone, Copy)]
pub struct Shooting {
    pub lam: f64,
    pub r: f64,
    pub rho: f64,
    pub a: f64,
    pub b: f64,
    pub f2: bool,
    pub lower: f64,
    pub upper: f64,
    /// Values of `V_0` at `1 − ε` and of `V_1` at `ε`.
    pub start: [f64; 2],
}

const SHOOT_EPS: f64 = 1e-3;
const SHOOT_DX: f64 = 1e-3;

impl Shooting {
    pub fn new(lam: f64, r: f64, rho: f64, a: f64, b: f64, f2: bool) -> Self {
        let k = if f2 { lam + r } else { 2.0 * lam + r };
        let s = lam / (r * k);
        Shooting { lam, r, rho, a, b, f2, lower: f64::NAN, upper: f64::NAN, start: [s, s] }
    }

    fn drift(&self, i: usize, p: f64) -> f64 {
        match (self.f2, i) {
            (false, _) => self.lam * (1.0 - 2.0 * p),
            (true, 0) => -self.lam * p,
            (true, _) => self.lam * (1.0 - p),
        }
    }

    fn rhs(&self, i: usize) -> impl Fn(f64, [f64; 2]) -> [f64; 2] + '_ {
        move |x, y| {
            let p = logistic(x);
            let w = p * (1.0 - p);
            let source = if i == 0 { 1.0 - p } else { p };
            let k = self.drift(i, p) / w - 0.5 * self.rho * (1.0 - 2.0 * p);
            [y[1], (self.r * y[0] - source - k * y[1]) / (0.5 * self.rho)]
        }
    }

    /// `(V_i, V_i')` at each target, with starting value `s`. Targets must
    /// be ordered away from the starting endpoint.
    pub fn values(&self, i: usize, s: f64, targets: &[f64]) -> Vec<[f64; 2]> {
        let f = self.rhs(i);
        let mut x = if i == 0 { logit(1.0 - SHOOT_EPS) } else { logit(SHOOT_EPS) };
        let mut y = [s, 0.0];
        targets
            .iter()
            .map(|&p| {
                let xt = logit(p);
                let n = ((xt - x).abs() / SHOOT_DX).ceil().max(1.0) as usize;
                y = rk4_richardson(&f, x, y, xt, n);
                x = xt;
                [y[0], y[1] / (p * (1.0 - p))]
            })
            .collect()
    }

    fn residual(&self, z: [f64; 4]) -> [f64; 4] {
        let [g, h, s0, s1] = z;
        let v0 = self.values(0, s0, &[h, g]);
        let v1 = self.values(1, s1, &[g, h]);
        let (v0h, v0g, v1g, v1h) = (v0[0], v0[1], v1[0], v1[1]);
        [
            v0g[0] - self.a * g - v1g[0],
            v0g[1] - self.a - v1g[1],
            v1h[0] - self.b * (1.0 - h) - v0h[0],
            v1h[1] + self.b - v0h[1],
        ]
    }

    /// Newton from the threshold guess `(g, h)`; returns the final residual
    /// norm.
    pub fn solve(&mut self, g: f64, h: f64) -> f64 {
        use nalgebra::{Matrix4, Vector4};
        let mut z = [g, h, self.start[0], self.start[1]];
        let norm = |f: [f64; 4]| f.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut f = self.residual(z);
        for _ in 0..60 {
            if norm(f) < 1e-13 {
                break;
            }
            let mut jac = Matrix4::zeros();
            for c in 0..4 {
                let d = 1e-6;
                let (mut zp, mut zm) = (z, z);
                zp[c] += d;
                zm[c] -= d;
                let (fp, fm) = (self.residual(zp), self.residual(zm));
                for rw in 0..4 {
                    jac[(rw, c)] = (fp[rw] - fm[rw]) / (2.0 * d);
                }
            }
            let step = match jac.lu().solve(&Vector4::from(f)) {
                Some(s) => s,
                None => break,
            };
            let mut t = 1.0;
            loop {
                let mut zn = z;
                for c in 0..4 {
                    zn[c] -= t * step[c];
                }
                let ok = zn[0] > SHOOT_EPS && zn[1] < 1.0 - SHOOT_EPS && zn[0] < zn[1];
                if ok {
                    let fnew = self.residual(zn);
                    if norm(fnew) < norm(f) || t < 1e-3 {
                        z = zn;
                        f = fnew;
                        break;
                    }
                }
                t *= 0.5;
                if t < 1e-6 {
                    break;
                }
            }
        }
        self.lower = z[0];
        self.upper = z[1];
        self.start = [z[2], z[3]];
        norm(f)
    }

    /// Piecewise risks `[V_0*(π), V_1*(π)]` on an increasing grid inside
    /// `(ε, 1 − ε)`.
    pub fn risks(&self, grid: &[f64]) -> Vec<[f64; 2]> {
        let above: Vec<f64> = grid.iter().rev().copied().filter(|&p| p >= self.lower).collect();
        let below: Vec<f64> = grid.iter().copied().filter(|&p| p <= self.upper).collect();
        let v0 = self.values(0, self.start[0], &above);
        let v1 = self.values(1, self.start[1], &below);
        grid.iter()
            .map(|&p| {
                let find = |pts: &[f64], vals: &[[f64; 2]]| vals[pts.iter().position(|&q| q == p).unwrap()][0];
                let r0 = if p > self.lower {
                    find(&above, &v0)
                } else {
                    self.a * p + find(&below, &v1)
                };
                let r1 = if p < self.upper {
                    find(&below, &v1)
                } else {
                    self.b * (1.0 - p) + find(&above, &v0)
                };
                [r0, r1]
            })
            .collect()
    }
}

/// Reference thresholds and coefficients at the baseline with `a = b = 1`,
/// from `oracles/freeze_model.py` (60-digit arithmetic).
pub const F1_LOWER: f64 = 0.1351586491012964861;
pub const F1_UPPER: f64 = 0.8648413508987035139;
pub const F1_COEFF: f64 = -0.018319968149236976278;
pub const F2_LOWER: f64 = 0.08305907308814829951;
pub const F2_UPPER: f64 = 0.9169409269118517005;
pub const F2_COEFF: f64 = -0.066803137912771316851;
/// Both admissibility slacks of F1 at the baseline.
pub const F1_SLACK: f64 = 0.738373126833904166474713348072;
/// Both admissibility slacks of F2 at the baseline.
pub const F2_SLACK: f64 = 0.140148638197746439027777;
pub const F2_P_HAT: f64 = 0.2071393324858909998832389;
pub const F2_Q_HAT: f64 = 0.7928606675141090001167611;
