//! Acceptance run: one PASS/FAIL line per criterion, with its tolerance and
//! time budget. Exits non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use disorder_switch::cli::{execute, Command, RunConfig};
use disorder_switch::model::{Formulation, Generator, Jet, Model, ModelParams};
use disorder_switch::sim::{
    check_delay_identity, estimate_risk_mc, filter_moments, horizon_for, mean_stderr, risk_samples, Policy,
    SimConfig,
};
use disorder_switch::solver::{admissible_bounds, bayes_risk, solve_boundaries, ThresholdSolution};
use disorder_switch::specfun::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn baseline() -> Model {
    Model::new(ModelParams::baseline()).unwrap()
}

fn solved(form: Formulation) -> (Model, ThresholdSolution) {
    let m = baseline();
    let s = solve_boundaries(&m, form).unwrap();
    (m, s)
}

const FORMS: [Formulation; 2] = [Formulation::F1, Formulation::F2];

fn special_function_residuals() -> Outcome {
    let c = SeriesControl::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 3];
    for _ in 0..200 {
        let a = rng.random_range(-3.0..3.0);
        let mut b: f64 = rng.random_range(0.2..6.0);
        if (b - b.round()).abs() < 1e-3 {
            b += 2e-3;
        }
        let x = rng.random_range(0.0..25.0);
        let f = kummer_phi(a, b, x, &c).unwrap();
        let d1 = kummer_phi_deriv(a, b, x, &c).unwrap();
        let d2 = a / b * kummer_phi_deriv(a + 1.0, b + 1.0, x, &c).unwrap();
        worst[0] = worst[0].max((x * d2 + (b - x) * d1 - a * f).abs() / (1.0 + f.abs()));

        let x = rng.random_range(0.01..60.0);
        let f = kummer_psi(a, b, x, &c).unwrap();
        let d1 = kummer_psi_deriv(a, b, x, &c).unwrap();
        let d2 = -a * kummer_psi_deriv(a + 1.0, b + 1.0, x, &c).unwrap();
        worst[1] = worst[1].max((x * d2 + (b - x) * d1 - a * f).abs() / (1.0 + f.abs()));

        let hp: [f64; 4] = std::array::from_fn(|_| rng.random_range(-10.0..10.0));
        let x: f64 = rng.random_range(-0.9..0.9);
        let h = heun_dc(hp[0], hp[1], hp[2], hp[3], x, &c).unwrap();
        let d = |t: f64| heun_dc_deriv(hp[0], hp[1], hp[2], hp[3], t, &c).unwrap();
        let d2 = common::fd_second(d, x, 1e-5);
        // left side of the equation with polynomial coefficients
        let den = (x * x - 1.0).powi(3);
        let lhs = den * d2 - den * common::heun_rhs(hp[0], hp[1], hp[2], hp[3])(x, [h, d(x)])[1];
        worst[2] = worst[2].max(lhs.abs() / (1.0 + h.abs()));
    }
    ensure(
        worst.iter().all(|&w| w <= 1e-6),
        format!(
            "max residual/(1+|value|) over 200 draws each: Φ {:.1e}, Ψ {:.1e}, Heun {:.1e} (tol 1e-6)",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn homogeneous_residual(m: &Model, g: Generator, f: impl Fn(f64) -> (f64, f64), pi: f64) -> f64 {
    let (v, d1) = f(pi);
    let d2 = common::fd_second(|x| f(x).1, pi, 1e-5);
    let jet = Jet { value: v, d1, d2 };
    (m.apply_generator(g, jet, pi) - m.params().r * v).abs() / (1.0 + v.abs())
}

fn homogeneous_solutions() -> Outcome {
    let m = baseline();
    let mut worst: f64 = 0.0;
    for pi in common::grid_181() {
        for i in 0..2 {
            let q = |x: f64| {
                let e = m.q_eval(i, x).unwrap();
                (e.value, e.deriv)
            };
            worst = worst.max(homogeneous_residual(&m, Generator::Chain, q, pi));
            let g = |x: f64| {
                let e = m.g_eval(i, i, x).unwrap();
                (e.value, e.deriv)
            };
            let gen = if i == 0 { Generator::Drop } else { Generator::Rise };
            worst = worst.max(homogeneous_residual(&m, gen, g, pi));
        }
    }
    ensure(worst <= 1e-6, format!("max residual of Q_0, Q_1, G_00, G_11 = {worst:.2e} on 181 points (tol 1e-6)"))
}

fn free_boundary_solve() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for form in FORMS {
        let (_, s) = solved(form);
        let sym = (s.upper - (1.0 - s.lower)).abs();
        let bars = match form {
            Formulation::F1 => (0.4, 0.6),
            Formulation::F2 => (0.125, 0.875),
        };
        let this = s.residuals.max_matching() <= 1e-10
            && s.residuals.max_fit() <= 1e-8
            && s.ordered()
            && (s.bar_lower - bars.0).abs() < 1e-15
            && (s.bar_upper - bars.1).abs() < 1e-15
            && sym <= 1e-8;
        ok &= this;
        lines.push(format!(
            "{form}: ({:.10}, {:.10}), matching {:.1e}, fit {:.1e}, bars ({}, {}), symmetry {:.1e}",
            s.lower,
            s.upper,
            s.residuals.max_matching(),
            s.residuals.max_fit(),
            s.bar_lower,
            s.bar_upper,
            sym
        ));
    }
    ensure(ok, lines.join("; "))
}

fn oracle_equivalence() -> Outcome {
    let g = common::grid_181();
    let mut lines = Vec::new();
    let mut ok = true;
    for form in FORMS {
        let (m, s) = solved(form);
        let p = *m.params();
        let (bl, bu) = admissible_bounds(&m, form);
        let mut sh = common::Shooting::new(p.lambda, p.r, m.dc().rho, p.a, p.b, form == Formulation::F2);
        sh.solve(0.5 * bl, 0.5 * (1.0 + bu));
        let oracle = sh.risks(&g);
        let mut sup: f64 = 0.0;
        for (x, o) in g.iter().zip(&oracle) {
            for i in 0..2 {
                sup = sup.max((bayes_risk(&m, &s, i, *x).unwrap() - o[i]).abs());
            }
        }
        ok &= sup <= 1e-5;
        lines.push(format!("{form}: sup-norm {sup:.2e}"));
    }
    ensure(ok, format!("{} (tol 1e-5)", lines.join(", ")))
}

fn monte_carlo_validation() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for form in FORMS {
        let (m, s) = solved(form);
        let p = *m.params();
        for i in 0..2 {
            for pi in [0.2, 0.5, 0.8] {
                let v = bayes_risk(&m, &s, i, pi).unwrap();
                let cfg = SimConfig {
                    dt: 1e-3,
                    n_paths: 10_000,
                    horizon: horizon_for(p.r, v, 0.005),
                    ..SimConfig::default()
                };
                let e = estimate_risk_mc(&Policy::from(&s), i, pi, &p, &cfg).unwrap();
                assert!(e.truncation_bound <= 0.005 * v * (1.0 + 1e-9));
                let ratio = (e.mean - v).abs() / (3.0 * e.stderr + e.truncation_bound);
                worst = worst.max(ratio);
                if ratio > 1.0 {
                    lines.push(format!("{form} i={i} pi={pi}: MC {:.5} vs {v:.5}", e.mean));
                }
            }
        }
    }
    ensure(
        worst <= 1.0,
        format!(
            "12 points, max |MC − closed form| / (3·stderr + truncation) = {worst:.2} (must be ≤ 1){}",
            if lines.is_empty() { String::new() } else { format!("; {}", lines.join("; ")) }
        ),
    )
}

fn optimality_spot_check() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut count = 0;
    for form in FORMS {
        let (m, s) = solved(form);
        let p = *m.params();
        let (g, h) = (s.lower, s.upper);
        // ±10% moves of the lower threshold and of the distance of the
        // upper threshold from 1
        let moves = [
            (0.9 * g, h),
            (1.1 * g, h),
            (g, 1.0 - 0.9 * (1.0 - h)),
            (g, 1.0 - 1.1 * (1.0 - h)),
            (1.1 * g, 1.0 - 1.1 * (1.0 - h)),
        ];
        let cfg = SimConfig {
            n_paths: 10_000,
            horizon: horizon_for(p.r, 0.3, 0.005),
            ..SimConfig::default()
        };
        for i in 0..2 {
            let base = risk_samples(&Policy::from(&s), i, 0.5, &p, &cfg).unwrap();
            for (l, u) in moves {
                let other = risk_samples(&Policy::new(form, l, u), i, 0.5, &p, &cfg).unwrap();
                let d: Vec<f64> = other.iter().zip(&base).map(|(a, b)| a - b).collect();
                let (mean, se) = mean_stderr(&d);
                worst = worst.min(mean / se);
                count += 1;
            }
        }
    }
    ensure(
        worst >= -1.0,
        format!("{count} paired comparisons, min (perturbed − solved)/paired stderr = {worst:.2} (must be ≥ −1)"),
    )
}

fn delay_identity() -> Outcome {
    let (m, s) = solved(Formulation::F2);
    let cfg = SimConfig {
        n_paths: 10_000,
        horizon: 7.0,
        ..SimConfig::default()
    };
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        let rep = check_delay_identity(&Policy::from(&s), i, 0.5, m.params(), &cfg, 5).unwrap();
        worst = worst.max(rep.max_discrepancy_sigma());
    }
    ensure(worst <= 3.0, format!("cycles 1-5 from both phases, max discrepancy {worst:.2} stderr (tol 3)"))
}

fn filter_sanity() -> Outcome {
    let p = ModelParams::baseline();
    let cfg = SimConfig {
        n_paths: 10_000,
        horizon: 2.0,
        ..SimConfig::default()
    };
    let mut worst: f64 = 0.0;
    let mut clamp: f64 = 0.0;
    for pi in [0.2, 0.8] {
        let fm = filter_moments(Formulation::F1, 0, pi, &p, &cfg, &[0.5, 1.0, 2.0]).unwrap();
        for j in 0..3 {
            let exact = 0.5 + (pi - 0.5) * (-2.0 * p.lambda * fm.times[j]).exp();
            worst = worst.max((fm.mean[j] - exact).abs() / fm.stderr[j]);
        }
        clamp = clamp.max(fm.clamp_fraction());
    }
    ensure(
        worst <= 3.0 && clamp < 1e-3,
        format!("max |mean Π_t − m(t)| = {worst:.2} stderr (tol 3), clamp fraction {clamp:.1e} (tol 1e-3)"),
    )
}

fn determinism() -> Outcome {
    let files = [
        "solution.json",
        "value_function.csv",
        "verify.json",
        "paths.csv",
        "alarms.csv",
        "validate.json",
        "sweep.csv",
    ];
    let mut runs = Vec::new();
    for (form, threads) in [("f1", 1), ("f1", 4), ("f1", 4), ("f2", 1), ("f2", 3)] {
        let dir = std::env::temp_dir().join(format!("disorder-switch-acceptance-{}-{form}-{threads}-{}", std::process::id(), runs.len()));
        let text = format!(
            "formulation = {form}\ncommands = solve,verify,simulate,validate,sweep\nsim.n_paths = 300\nsim.horizon = 2\n\
             validate.auto_horizon = false\nvalidate.points = 0.5\nsim.threads = {threads}\n"
        );
        let mut c = RunConfig::parse(&text).unwrap();
        c.output_dir = dir.clone();
        for &cmd in &c.commands {
            let r = execute(&c, cmd);
            assert!(
                r.is_ok() || cmd == Command::Validate,
                "{cmd}: {}",
                r.err().map(|e| e.to_string()).unwrap_or_default()
            );
        }
        let bytes: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(dir.join(f)).unwrap()).collect();
        std::fs::remove_dir_all(&dir).ok();
        runs.push((form, threads, bytes));
    }
    let mut ok = true;
    for w in runs.windows(2).filter(|w| w[0].0 == w[1].0) {
        for (k, f) in files.iter().enumerate() {
            if w[0].2[k] != w[1].2[k] {
                ok = false;
                eprintln!("{f} differs between {} and {} threads", w[0].1, w[1].1);
            }
        }
    }
    ensure(ok, "7 artifacts compared across repeated runs with 1, 3 and 4 threads".into())
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("special-function residuals", Duration::from_secs(5), special_function_residuals),
        ("homogeneous-solution residuals", Duration::from_secs(10), homogeneous_solutions),
        ("free-boundary solve", Duration::from_secs(30), free_boundary_solve),
        ("oracle equivalence", Duration::from_secs(60), oracle_equivalence),
        ("Monte Carlo validation", Duration::from_secs(600), monte_carlo_validation),
        ("optimality spot-check", Duration::from_secs(600), optimality_spot_check),
        ("delay identity", Duration::from_secs(120), delay_identity),
        ("filter sanity", Duration::from_secs(120), filter_sanity),
        ("determinism", Duration::from_secs(600), determinism),
    ];
    let mut failures = 0;
    for (n, (name, budget, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let el = t.elapsed();
        let in_time = el <= *budget;
        let (pass, detail) = match out {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {} [{name}]: {} -- {detail}; {:.1} s (budget {} s)",
            n + 1,
            if pass { "PASS" } else { "FAIL" },
            el.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
