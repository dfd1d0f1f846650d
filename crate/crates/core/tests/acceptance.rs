//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion.

use std::time::{Duration, Instant};

use efms::problems::harmonic;
use efms::{
    amplitude_drift, apply_functional, bundled, classical_limit, fit_phaselag, integrate, order_and_error_constant,
    periodicity_interval, phase_lag, plte_constant_closed_form, solve_ef_coefficients, theorem1_residual,
    theorem2_check, to_standard, CoefficientSet, DoubleDouble, MethodSpec, Rational, Real, Scalar,
};

const SUITE: [&str; 5] = ["numerov", "stormer", "two_step_k3p0", "two_step_k1p1", "simos_case2_classical"];

type Dd = DoubleDouble;
type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn spec(name: &str) -> MethodSpec {
    bundled(name).unwrap()
}

fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn worked_example() -> Outcome {
    let s = spec("simos_case2_classical");
    let cs: CoefficientSet<Rational> = classical_limit(&s).unwrap();
    let generic = order_and_error_constant(&cs).unwrap();
    // C_8 = (256 + a_1 - 3584 b_2 - 56 b_1) / 20160 on the centered coefficients
    let formula = (ratio(256, 1) + cs.a[1].clone() - ratio(3584, 1) * cs.b[2].clone() - ratio(56, 1) * cs.b[1].clone())
        / ratio(20160, 1);
    let target = ratio(-53, 20160);
    let c8_ok = generic.p == 6 && generic.error_constant == target && formula == target;

    // the fitted method has P = 3; only its classical limit is specified
    let closed = plte_constant_closed_form(&s).unwrap().with_tuning_level(3).unwrap();
    let base = ratio(53, 120960);
    let mut worst = 0.0f64;
    let mut exact_ok = closed.c0 == base;
    for i in 0..20 {
        let r = ratio(i, 20);
        let one_minus = ratio(1, 1) - r.clone() * r.clone();
        let expected = base.clone() * one_minus.powu(4);
        exact_ok &= closed.c_exact(&r) == expected;
        let rf = i as f64 / 20.0;
        let ef = expected.to_f64_lossy();
        let rel = if ef == 0.0 { closed.c(rf).abs() } else { (closed.c(rf) / ef - 1.0).abs() };
        worst = worst.max(rel);
    }
    check(
        c8_ok && exact_ok && worst < 1e-14,
        format!("C_8 = {} (generic) = {} (formula); c(r) exact at 20 r, f64 rel err {worst:.1e}", generic.error_constant, formula),
    )
}

fn fitted_constants() -> Outcome {
    let numerov = fit_phaselag::<f64>(&spec("numerov"), 0.0).unwrap();
    let simos = fit_phaselag::<Dd>(&spec("simos_case2_classical"), 0.0).unwrap();
    let dn = (numerov.c / (-1.0 / 480.0) - 1.0).abs();
    let ds = (simos.c / (53.0 / 120960.0) - 1.0).abs();
    check(
        numerov.q == Some(4) && simos.q == Some(6) && dn < 0.01 && ds < 0.01,
        format!("numerov q={:?} dev {dn:.1e}; simos q={:?} dev {ds:.1e}", numerov.q, simos.q),
    )
}

fn theorem2_scaling() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for name in ["two_step_k3p0", "two_step_k1p1"] {
        let report = theorem2_check::<Dd>(&spec(name), &[0.3, 0.6, 0.9]).unwrap();
        ok &= report.max_deviation < 0.02 && report.rows.iter().all(|r| r.q == Some(4));
        detail.push(format!("{name} max dev {:.1e}", report.max_deviation));
    }
    check(ok, detail.join("; "))
}

fn theorem1_consistency() -> Outcome {
    let nu = Dd::from(1e-2);
    let mut worst = 0.0f64;
    let mut ok = true;
    for name in SUITE {
        let s = spec(name);
        for r in [0.0, 0.5] {
            let fit = fit_phaselag::<Dd>(&s, r).unwrap();
            let q = fit.q.unwrap();
            let cs = solve_ef_coefficients::<Dd>(&s, Dd::from(r) * nu).unwrap();
            let residual = theorem1_residual(&cs, nu).unwrap();
            let scaled = (residual / -nu.powu(q + 2)).to_f64_lossy();
            let dev = (scaled / fit.c - 1.0).abs();
            ok &= dev < 0.01;
            worst = worst.max(dev);
        }
    }
    check(ok, format!("largest deviation {worst:.1e} over 5 methods x r in {{0, 0.5}}"))
}

fn periodicity() -> Outcome {
    // cos(lambda) = (1 - 5 nu^2/12) / (1 + nu^2/12) reaches -1 at nu^2 = 6;
    // cos(lambda) = 1 - nu^2/2 reaches -1 at nu^2 = 4
    let numerov_oracle = 2.0 / (5.0 / 12.0 - 1.0 / 12.0);
    let stormer_oracle = 2.0 / 0.5;
    let n = periodicity_interval(&classical_limit::<f64>(&spec("numerov")).unwrap());
    let s = periodicity_interval(&classical_limit::<f64>(&spec("stormer")).unwrap());
    let dn = (n.nu0_squared - numerov_oracle).abs();
    let ds = (s.nu0_squared - stormer_oracle).abs();
    check(
        dn < 1e-5 && ds < 1e-5 && !n.unbounded && !s.unbounded,
        format!("numerov {:.8} stormer {:.8}", n.nu0_squared, s.nu0_squared),
    )
}

/// Log-log least-squares slope of max error against h on y'' = -y over [0, 10].
fn convergence_slope(s: &MethodSpec, hs: &[f64], r: f64) -> f64 {
    let entry = harmonic(1.0);
    let exact = entry.problem.exact.clone().unwrap();
    let pts: Vec<(f64, f64)> = hs
        .iter()
        .map(|&h| {
            let cs = solve_ef_coefficients::<f64>(s, r * h).unwrap();
            let traj = integrate(&cs, &entry.problem, h, (10.0 / h).round() as usize).unwrap();
            (h.ln(), traj.max_error(&*exact).ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

fn order_agreement() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for name in SUITE {
        let s = spec(name);
        let p = order_and_error_constant(&classical_limit::<Rational>(&s).unwrap()).unwrap().p;
        // fitted methods run with k = omega / 2
        let r = if s.is_classical() { 0.0 } else { 0.5 };
        let slope = convergence_slope(&s, &[0.2, 0.1, 0.05], r);
        let q = fit_phaselag::<Dd>(&s, r).unwrap().q;
        ok &= (slope - p as f64).abs() <= 0.3 && q == Some(p);
        detail.push(format!("{name} p={p} q={} slope={slope:.2}", q.map_or("-".into(), |q| q.to_string())));
    }
    check(ok, detail.join("; "))
}

fn ef_exactness_and_drift() -> Outcome {
    let omega = 1.0;
    let h = 0.1;
    let entry = harmonic(omega);
    let exact = entry.problem.exact.clone().unwrap();
    let cs = solve_ef_coefficients::<f64>(&spec("two_step_k3p0"), omega * h).unwrap();
    let err = integrate(&cs, &entry.problem, h, 1000).unwrap().max_error(&*exact);

    let h = 0.5;
    let numerov = classical_limit::<f64>(&spec("numerov")).unwrap();
    let lambda = omega * h - phase_lag(&numerov, omega * h).unwrap();
    let long = integrate(&numerov, &entry.problem, h, 10_000).unwrap();
    let short = integrate(&numerov, &entry.problem, h, 1_000).unwrap();
    let drift = amplitude_drift(&long, omega, Some(lambda));
    let plain_long = amplitude_drift(&long, omega, None);
    let plain_short = amplitude_drift(&short, omega, None);
    let growth = plain_long / plain_short;
    check(
        err < 1e-11 && drift < 1e-6 && (0.5..=2.0).contains(&growth),
        format!("EF max error {err:.1e}; drift {drift:.1e} (1e4 steps); plain drift 1e4/1e3 = {growth:.4}"),
    )
}

fn plte_oracle() -> Outcome {
    let nu = Dd::from(1e-2);
    let mut worst = 0.0f64;
    for name in SUITE {
        let s = spec(name);
        let limit: CoefficientSet<Rational> = classical_limit(&s).unwrap();
        let report = order_and_error_constant(&limit).unwrap();
        let p = report.p as i32;
        let sign = if (p / 2 + 1) % 2 == 0 { 1.0 } else { -1.0 };
        let c = to_dd(&report.error_constant) * Dd::from(sign);
        let half = Dd::from(s.half() as f64);
        for r in [0.0, 0.5] {
            let ratio_at = |nu: Dd| {
                let cs = solve_ef_coefficients::<Dd>(&s, Dd::from(r) * nu).unwrap();
                // omega = 1, h = nu, centre of the stencil at x = 0.3
                let xc = Dd::from(0.3);
                let l = apply_functional(&cs, |x: Dd| x.cos(), |x: Dd| -x.cos(), xc - half * nu, nu);
                let damping = (Dd::from(1.0) - Dd::from(r * r)).powu((s.tuning_level + 1) as u32);
                let oracle = c * nu.powu(p as u32 + 2) * damping * xc.cos();
                l / oracle
            };
            let extrapolated = (Dd::from(4.0) * ratio_at(nu / Dd::from(2.0)) - ratio_at(nu)) / Dd::from(3.0);
            worst = worst.max((extrapolated.to_f64_lossy() - 1.0).abs());
        }
    }
    check(worst < 0.01, format!("largest Richardson ratio deviation {worst:.1e}"))
}

fn to_dd(v: &Rational) -> Dd {
    let n: f64 = v.numer().to_string().parse().unwrap();
    let d: f64 = v.denom().to_string().parse().unwrap();
    Dd::from(n) / Dd::from(d)
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 8] = [
        ("1 worked example C_8 and closed-form c(r)", Some(Duration::from_secs(1)), worked_example),
        ("2 fitted vs closed-form phase-lag constant", Some(Duration::from_secs(5)), fitted_constants),
        ("3 c(r)/c(0) scaling", Some(Duration::from_secs(30)), theorem2_scaling),
        ("4 residual ratio converges to fitted c(r)", None, theorem1_consistency),
        ("5 periodicity intervals", None, periodicity),
        ("6 order equals phase-lag order", None, order_agreement),
        ("7 fitted exactness and amplitude drift", None, ef_exactness_and_drift),
        ("8 local truncation error oracle", None, plte_oracle),
    ];
    let mut failures = Vec::new();
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = budget.is_none_or(|b| elapsed < b);
        let passed = outcome.passed && in_time;
        let timing = match budget {
            Some(b) => format!(" [{:.3}s / {:.0}s]", elapsed.as_secs_f64(), b.as_secs_f64()),
            None => format!(" [{:.3}s]", elapsed.as_secs_f64()),
        };
        println!("{} {name}: {}{timing}", if passed { "PASS" } else { "FAIL" }, outcome.detail);
        if !passed {
            failures.push(name);
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}

#[test]
fn standard_form_of_simos() {
    let cs: CoefficientSet<Rational> = classical_limit(&spec("simos_case2_classical")).unwrap();
    let (alpha, beta) = to_standard(&cs);
    assert_eq!(alpha, vec![ratio(1, 1), ratio(-1, 1), ratio(0, 1), ratio(-1, 1), ratio(1, 1)]);
    assert_eq!(beta[2], ratio(37, 40));
}
