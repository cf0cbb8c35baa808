use std::f64::consts::PI;

use super::SpecfunError;

// Lanczos approximation, g = 7, nine coefficients.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `sin(πx)` with exact argument reduction, so integers give exact zeros.
pub fn sin_pi(x: f64) -> f64 {
    if !x.is_finite() {
        return f64::NAN;
    }
    // x - 2 round(x/2) is exact in binary floating point.
    let y = x - 2.0 * (0.5 * x).round();
    let (s, y) = if y < 0.0 { (-1.0, -y) } else { (1.0, y) };
    let v = if y <= 0.25 {
        (PI * y).sin()
    } else if y <= 0.75 {
        (PI * (0.5 - y)).cos()
    } else {
        (PI * (1.0 - y)).sin()
    };
    s * v
}

fn lanczos_positive(x: f64) -> f64 {
    // valid for x >= 0.5
    let z = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    // split the power to delay overflow near x = 171
    let half = t.powf(0.5 * (z + 0.5));
    (2.0 * PI).sqrt() * half * (half * (-t).exp()) * acc
}

// Shifts the argument into [1, 2) by the recurrence Γ(x+1) = xΓ(x) when that
// costs fewer than ~60 multiplications, which is more accurate than the
// Lanczos form at large arguments.
fn gamma_positive(x: f64) -> f64 {
    if x == x.round() && (1.0..=23.0).contains(&x) {
        let mut f = 1.0;
        for k in 2..(x as u32) {
            f *= k as f64;
        }
        return f;
    }
    if x > 60.0 {
        return lanczos_positive(x);
    }
    let mut y = x;
    let mut f = 1.0;
    while y >= 2.0 {
        y -= 1.0;
        f *= y;
    }
    if y < 1.0 {
        f /= y;
        y += 1.0;
    }
    f * lanczos_positive(y)
}

/// Euler's gamma function.
pub fn gamma_fn(x: f64) -> Result<f64, SpecfunError> {
    if x.is_nan() {
        return Err(SpecfunError::Domain { what: "gamma", x });
    }
    if x <= 0.0 && (x - x.round()).abs() < 1e-12 {
        return Err(SpecfunError::Pole(x));
    }
    let v = if x >= 0.5 {
        gamma_positive(x)
    } else {
        PI / (sin_pi(x) * gamma_positive(1.0 - x))
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(SpecfunError::Overflow("gamma"))
    }
}

/// Reciprocal gamma function `1/Γ(x)`, which is entire: it returns zero at
/// the non-positive integers.
pub fn rgamma(x: f64) -> f64 {
    if x >= 0.5 {
        let g = gamma_positive(x);
        if g.is_finite() {
            1.0 / g
        } else {
            0.0
        }
    } else {
        sin_pi(x) * gamma_positive(1.0 - x) / PI
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorials_and_half_integers() {
        let mut f = 1.0_f64;
        for n in 1..=40 {
            let g = gamma_fn(n as f64).unwrap();
            assert!((g - f).abs() <= 1e-14 * f, "n = {n}");
            f *= n as f64;
        }
        // Γ(n + 1/2) = (2n)! √π / (4^n n!)
        let mut h = PI.sqrt();
        for n in 0..40 {
            let x = n as f64 + 0.5;
            let g = gamma_fn(x).unwrap();
            assert!((g - h).abs() <= 1e-13 * h, "x = {x}: {g} vs {h}");
            h *= x;
        }
    }

    #[test]
    fn reflection_on_negative_half_integers() {
        // Γ(1/2 - n) = (-4)^n n! √π / (2n)!
        let mut h = PI.sqrt();
        for n in 1..45 {
            h /= 0.5 - n as f64;
            let g = gamma_fn(0.5 - n as f64).unwrap();
            assert!((g - h).abs() <= 1e-13 * h.abs(), "n = {n}: {g} vs {h}");
        }
    }

    #[test]
    fn poles_are_errors_and_rgamma_vanishes_there() {
        for n in 0..10 {
            assert!(matches!(gamma_fn(-(n as f64)), Err(SpecfunError::Pole(_))));
            assert_eq!(rgamma(-(n as f64)), 0.0);
        }
        assert!((rgamma(3.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn sin_pi_exact_zeros() {
        for n in -20..20 {
            assert_eq!(sin_pi(n as f64), 0.0);
        }
        assert!((sin_pi(0.5) - 1.0).abs() < 1e-16);
        assert!((sin_pi(-1.5) - 1.0).abs() < 1e-16);
    }
}
