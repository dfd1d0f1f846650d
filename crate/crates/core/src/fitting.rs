//! Exponentially-fitted coefficients from the exactness conditions of the
//! linear functional.
//!
//! Only basis functions that are even about the centre of the method give
//! conditions; the odd ones are satisfied identically by symmetric
//! coefficients. With `M_s = L[x^s]` (centre at the origin, `h = 1`) and
//! `n0` polynomial conditions `M_0 = M_2 = .. = 0`, the trigonometric
//! conditions on `x^m cos`, `x^m sin` (`m <= P`) are equivalent, for
//! `theta > 0`, to the rows
//!
//! ```text
//! H_l = sum_k (-1)^k C(l+k, k) (2n0+2l)! / (2n0+2l+2k)! theta^(2k) M_(2n0+2l+2k),   l = 0..=P
//! ```
//!
//! which are analytic in `theta^2` and reduce to `M_(2n0+2l)` at `theta = 0`.
//! The system is therefore uniformly conditioned down to the classical limit
//! and no small-`theta` switch is needed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, MAX_CONDITION, WARN_CONDITION};
use crate::method::{apply_functional, CoefficientRef, CoefficientSet, MethodSpec};
use crate::scalar::{Real, Scalar};

const MAX_SERIES_TERMS: usize = 200;

/// One exactness condition of the reference set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Condition {
    /// `x^(2i)`.
    Power(u32),
    /// The pair `x^m cos kx`, `x^m sin kx`; only the even member gives a row.
    Trig(u32),
}

impl Condition {
    fn label(self) -> String {
        match self {
            Condition::Power(0) => "1".into(),
            Condition::Power(s) => format!("x^{s}"),
            Condition::Trig(0) => "cos".into(),
            Condition::Trig(1) => "x·sin".into(),
            Condition::Trig(m) if m % 2 == 0 => format!("x^{m}·cos"),
            Condition::Trig(m) => format!("x^{m}·sin"),
        }
    }
}

fn normalize_label(label: &str) -> String {
    label.chars().filter(|c| !c.is_whitespace()).map(|c| if c == '*' { '·' } else { c }).collect()
}

/// Conditions of `spec` after removing `drop_conditions`.
fn conditions(spec: &MethodSpec) -> Result<Vec<Condition>> {
    spec.check()?;
    let mut all: Vec<Condition> = Vec::new();
    if spec.poly_degree >= 0 {
        all.extend((0..=spec.poly_degree as u32 / 2).map(|i| Condition::Power(2 * i)));
    }
    if spec.tuning_level >= 0 {
        all.extend((0..=spec.tuning_level as u32).map(Condition::Trig));
    }
    let mut drop = Vec::new();
    for raw in &spec.drop_conditions {
        let wanted = normalize_label(raw);
        let cond = all
            .iter()
            .copied()
            .find(|c| c.label() == wanted)
            .ok_or_else(|| Error::InvalidSpec(format!("drop_conditions: `{raw}` is not a condition of this method")))?;
        if drop.contains(&cond) {
            return Err(Error::InvalidSpec(format!("drop_conditions: `{raw}` listed twice")));
        }
        drop.push(cond);
    }
    let dropped_trig = drop.iter().filter(|c| matches!(c, Condition::Trig(_))).count() as i32;
    for cond in &drop {
        match *cond {
            Condition::Power(_) if spec.tuning_level >= 0 => {
                return Err(Error::InvalidSpec(
                    "drop_conditions: polynomial conditions can only be dropped from classical methods (P = -1)".into(),
                ))
            }
            Condition::Trig(m) if (m as i32) <= spec.tuning_level - dropped_trig => {
                return Err(Error::InvalidSpec(format!(
                    "drop_conditions: trigonometric conditions must be dropped from the highest power down; `{}` is kept below it",
                    cond.label()
                )))
            }
            _ => {}
        }
    }
    all.retain(|c| !drop.contains(c));
    Ok(all)
}

/// Unfrozen centered unknowns: `a_0..a_(J/2-1)` then `b_0..b_(J/2)`.
fn unknowns(spec: &MethodSpec) -> Vec<CoefficientRef> {
    let half = spec.half();
    (0..half)
        .map(CoefficientRef::A)
        .chain((0..=half).map(CoefficientRef::B))
        .filter(|c| !spec.frozen.contains_key(c))
        .collect()
}

/// Labels of the exactness conditions that enter the moment system.
pub fn condition_labels(spec: &MethodSpec) -> Result<Vec<String>> {
    Ok(conditions(spec)?.into_iter().map(Condition::label).collect())
}

/// Check that the conditions and unknowns of `spec` form a square system.
pub fn check_shape(spec: &MethodSpec) -> Result<()> {
    let conds = conditions(spec)?;
    let unknowns = unknowns(spec);
    if conds.len() != unknowns.len() {
        let labels: Vec<String> = conds.iter().map(|c| c.label()).collect();
        let names: Vec<String> = unknowns.iter().map(|c| c.to_string()).collect();
        return Err(Error::Shape {
            conditions: conds.len(),
            unknowns: unknowns.len(),
            detail: format!(
                "conditions [{}], unknowns [{}]; adjust frozen or drop_conditions",
                labels.join(", "),
                names.join(", ")
            ),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSystem<T> {
    pub matrix: Vec<Vec<T>>,
    pub rhs: Vec<T>,
    pub condition_labels: Vec<String>,
    #[serde(skip)]
    pub unknowns: Vec<CoefficientRef>,
    /// Magnitude at which each row was accumulated, used to equilibrate.
    pub row_scale: Vec<T>,
    pub theta: T,
}

/// Row of `M_s` over all centered slots `[a_0..a_(J/2), b_0..b_(J/2)]`, `s` even.
fn moment_row<T: Scalar>(half: usize, s: u32) -> Vec<T> {
    let int = |v: u64| T::from_u64(v).expect("small integer");
    let mut row = vec![T::zero(); 2 * (half + 1)];
    row[0] = if s == 0 { T::one() } else { T::zero() };
    let ss1 = u64::from(s) * u64::from(s.saturating_sub(1));
    row[half + 1] = if s == 2 { -int(ss1) } else { T::zero() };
    for j in 1..=half {
        let jt = int(j as u64);
        row[j] = int(2) * jt.powu(s);
        if s >= 2 {
            row[half + 1 + j] = -(int(2 * ss1) * jt.powu(s - 2));
        }
    }
    row
}

/// Row of `H_l` at `u0 = theta^2`; for `u0 = 0` this is `M_(2 n0 + 2 l)`.
///
/// Also returns the entrywise sum of absolute series terms.
fn fitted_row<T: Scalar>(half: usize, n0: u32, l: u32, u0: &T, cutoff: &T) -> (Vec<T>, Vec<T>) {
    let base = 2 * n0 + 2 * l;
    let mut row = moment_row::<T>(half, base);
    let mut magnitude: Vec<T> = row.iter().map(|v| v.abs()).collect();
    if u0.is_zero() {
        return (row, magnitude);
    }
    let mut weight = T::one();
    let mut peak = row.iter().fold(T::zero(), |m, v| if v.abs() > m { v.abs() } else { m });
    for k in 1..MAX_SERIES_TERMS as u32 {
        let s = base + 2 * k;
        // C(l+k, k) / C(l+k-1, k-1) = (l+k)/k and (s-2)!/s! = 1/((s-1) s)
        weight = -weight * u0.clone() * T::from_u32(l + k).unwrap()
            / (T::from_u32(k).unwrap() * T::from_u32((s - 1) * s).unwrap());
        let term: Vec<T> = moment_row::<T>(half, s).into_iter().map(|v| v * weight.clone()).collect();
        let size = term.iter().fold(T::zero(), |m, v| if v.abs() > m { v.abs() } else { m });
        for ((r, m), t) in row.iter_mut().zip(magnitude.iter_mut()).zip(term) {
            *m = m.clone() + t.abs();
            *r = r.clone() + t;
        }
        if size > peak {
            peak = size.clone();
        }
        // terms decay once s exceeds the largest j theta; stop at negligible size
        if size <= cutoff.clone() * peak.clone() && T::from_u32(s).unwrap().powu(2) > u0.clone() * T::from_usize(half * half).unwrap() {
            break;
        }
    }
    (row, magnitude)
}

fn assemble<T: Scalar>(spec: &MethodSpec, u0: T, cutoff: T, theta: T) -> Result<MomentSystem<T>> {
    check_shape(spec)?;
    let conds = conditions(spec)?;
    let half = spec.half();
    let n0 = if spec.poly_degree >= 0 { spec.poly_degree as u32 / 2 + 1 } else { 0 };
    let unknowns = unknowns(spec);
    let slot = |c: &CoefficientRef| match *c {
        CoefficientRef::A(j) => j,
        CoefficientRef::B(j) => half + 1 + j,
    };
    let mut matrix = Vec::with_capacity(conds.len());
    let mut rhs = Vec::with_capacity(conds.len());
    let mut row_scale = Vec::with_capacity(conds.len());
    let larger = |a: T, b: T| if b > a { b } else { a };
    for cond in &conds {
        let (row, magnitude) = match *cond {
            Condition::Power(s) => {
                let row = moment_row::<T>(half, s);
                let magnitude = row.iter().map(|v| v.abs()).collect();
                (row, magnitude)
            }
            Condition::Trig(l) => fitted_row(half, n0, l, &u0, &cutoff),
        };
        // a_(J/2) = 1 and frozen values move to the right-hand side
        let mut known = row[half].clone();
        let mut scale = magnitude[half].clone();
        for (c, v) in &spec.frozen {
            let value = v.to_scalar::<T>();
            known = known + row[slot(c)].clone() * value.clone();
            scale = larger(scale, magnitude[slot(c)].clone() * value.abs());
        }
        for c in &unknowns {
            scale = larger(scale, magnitude[slot(c)].clone());
        }
        matrix.push(unknowns.iter().map(|c| row[slot(c)].clone()).collect());
        rhs.push(-known);
        row_scale.push(scale);
    }
    Ok(MomentSystem {
        matrix,
        rhs,
        condition_labels: conds.into_iter().map(Condition::label).collect(),
        unknowns,
        row_scale,
        theta,
    })
}

/// Moment system of `spec` at `theta = k h`.
pub fn build_moment_system<T: Real>(spec: &MethodSpec, theta: T) -> Result<MomentSystem<T>> {
    if !theta.is_finite() || theta < T::zero() {
        return Err(Error::InvalidSpec(format!("theta = {} must be finite and non-negative", theta.to_f64_lossy())));
    }
    let cutoff = T::epsilon() * T::from_f64_lossy(1e-3);
    assemble(spec, theta * theta, cutoff, theta)
}

fn solve_system<T: Scalar>(spec: &MethodSpec, system: MomentSystem<T>) -> Result<CoefficientSet<T>> {
    let theta_f = system.theta.to_f64_lossy();
    let solved = linalg::solve(&system.matrix, &system.rhs, Some(&system.row_scale))
        .ok_or(Error::Singular { theta: theta_f, condition: f64::INFINITY })?;
    if solved.condition > MAX_CONDITION {
        return Err(Error::Singular { theta: theta_f, condition: solved.condition });
    }
    if solved.condition > WARN_CONDITION {
        log::warn!(
            "{}: moment system at theta = {theta_f} is ill-conditioned (estimate {:e})",
            spec.label,
            solved.condition
        );
    }
    let half = spec.half();
    let mut a = vec![T::zero(); half + 1];
    let mut b = vec![T::zero(); half + 1];
    a[half] = T::one();
    for (c, v) in &spec.frozen {
        match *c {
            CoefficientRef::A(j) => a[j] = v.to_scalar(),
            CoefficientRef::B(j) => b[j] = v.to_scalar(),
        }
    }
    for (c, v) in system.unknowns.iter().zip(solved.x) {
        match *c {
            CoefficientRef::A(j) => a[j] = v,
            CoefficientRef::B(j) => b[j] = v,
        }
    }
    CoefficientSet::new(spec.step_number, system.theta, a, b)
}

/// Coefficients of `spec` at `theta`, normalised to `a_(J/2) = 1`.
pub fn solve_ef_coefficients<T: Real>(spec: &MethodSpec, theta: T) -> Result<CoefficientSet<T>> {
    let system = build_moment_system(spec, theta)?;
    solve_system(spec, system)
}

/// The `theta = 0` method, from polynomial moments only. Works in exact arithmetic.
pub fn classical_limit<T: Scalar>(spec: &MethodSpec) -> Result<CoefficientSet<T>> {
    let system = assemble(spec, T::zero(), T::zero(), T::zero())?;
    solve_system(spec, system)
}

/// Reference-set member `z` and its second derivative, evaluated at `x` with frequency `k`.
#[derive(Debug, Clone, Copy)]
enum Member {
    Power(u32),
    Cos(u32),
    Sin(u32),
}

impl Member {
    fn eval<T: Real>(self, x: T, k: T) -> (T, T) {
        let pow = |n: i64| if n < 0 { T::zero() } else { x.powu(n as u32) };
        let int = |n: u32| T::from_u32(n).unwrap();
        match self {
            Member::Power(m) => (pow(m as i64), int(m * m.saturating_sub(1)) * pow(m as i64 - 2)),
            Member::Cos(m) | Member::Sin(m) => {
                let (s, c) = (k * x).sin_cos();
                let (f, g) = if matches!(self, Member::Cos(_)) { (c, -s) } else { (s, c) };
                // (x^m f(kx))'' = m(m-1) x^(m-2) f + 2 m k x^(m-1) f' - k^2 x^m f
                let dd = int(m * m.saturating_sub(1)) * pow(m as i64 - 2) * f + int(2 * m) * k * pow(m as i64 - 1) * g
                    - k * k * pow(m as i64) * f;
                (pow(m as i64) * f, dd)
            }
        }
    }
}

/// Largest absolute residual of the functional over the reference set of `spec`.
///
/// Uses the raw basis functions of both symmetry classes at three points
/// with `h = 1`, `k = theta`; at `theta = 0` the trigonometric pairs are
/// replaced by their polynomial limits. Dropped conditions are skipped
/// together with their odd partners.
pub fn exactness_check<T: Real>(cs: &CoefficientSet<T>, spec: &MethodSpec) -> Result<T> {
    let conds = conditions(spec)?;
    let mut members = Vec::new();
    let k_max = spec.poly_degree.max(-1);
    for i in 0..=k_max {
        let i = i as u32;
        if conds.contains(&Condition::Power(i - i % 2)) {
            members.push(Member::Power(i));
        }
    }
    for m in 0..=spec.tuning_level.max(-1) {
        let m = m as u32;
        if !conds.contains(&Condition::Trig(m)) {
            continue;
        }
        if cs.theta.is_zero() {
            let first = (k_max + 1) as u32 + 2 * m;
            members.extend([Member::Power(first), Member::Power(first + 1)]);
        } else {
            members.extend([Member::Cos(m), Member::Sin(m)]);
        }
    }
    Ok(members_residual(cs, &members))
}

/// Absolute residual of the functional on explicit reference-set members.
fn members_residual<T: Real>(cs: &CoefficientSet<T>, members: &[Member]) -> T {
    let half = T::from_usize(cs.half()).unwrap();
    let starts = [-half, -half + T::from_f64_lossy(0.25), -half - T::from_f64_lossy(0.5)];
    let mut worst = T::zero();
    for member in members {
        for &x in &starts {
            let value = apply_functional(cs, |t| member.eval(t, cs.theta).0, |t| member.eval(t, cs.theta).1, x, T::one());
            worst = worst.max(value.abs());
        }
    }
    worst
}

/// Residual of `cs` on `cos(theta x)`, `sin(theta x)` (frequency taken from `cs.theta`).
pub fn trig_residual<T: Real>(cs: &CoefficientSet<T>) -> T {
    members_residual(cs, &[Member::Cos(0), Member::Sin(0)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::method::FrozenValue;
    use crate::{DoubleDouble, Rational};
    use proptest::prelude::*;

    fn k3p0() -> MethodSpec {
        MethodSpec::new("k3p0", 2, 3, 0).unwrap()
    }

    fn simos_classical() -> MethodSpec {
        MethodSpec::new("simos", 4, 7, -1)
            .unwrap()
            .with_frozen(CoefficientRef::A(0), FrozenValue::Ratio(0, 1))
            .unwrap()
            .with_frozen(CoefficientRef::A(1), FrozenValue::Ratio(-1, 1))
            .unwrap()
            .with_dropped("1")
    }

    /// Closed form for (J = 2, K = 3, P = 0), derived by hand; evaluated in
    /// double-double to avoid its cancellation at small theta.
    fn k3p0_b1(theta: f64) -> f64 {
        let t = DoubleDouble::from(theta);
        let c = t.cos() - DoubleDouble::from(1.0);
        let two = DoubleDouble::from(2.0);
        (-(two * c + t * t) / (two * t * t * c)).hi()
    }

    #[test]
    fn condition_counts() {
        assert_eq!(condition_labels(&k3p0()).unwrap(), ["1", "x^2", "cos"]);
        let k1p1 = MethodSpec::new("k1p1", 2, 1, 1).unwrap();
        assert_eq!(condition_labels(&k1p1).unwrap(), ["1", "cos", "x·sin"]);
        check_shape(&k1p1).unwrap();

        let simos_ef = MethodSpec::new("s", 4, -1, 3)
            .unwrap()
            .with_frozen(CoefficientRef::A(0), FrozenValue::Ratio(0, 1))
            .unwrap()
            .with_frozen(CoefficientRef::A(1), FrozenValue::Ratio(-1, 1))
            .unwrap();
        assert_eq!(condition_labels(&simos_ef).unwrap(), ["cos", "x·sin", "x^2·cos", "x^3·sin"]);
        match check_shape(&simos_ef) {
            Err(Error::Shape { conditions: 4, unknowns: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        check_shape(&simos_ef.clone().with_dropped("x^3 * sin")).unwrap();
        assert!(check_shape(&simos_ef.with_dropped("cos")).is_err());
    }

    #[test]
    fn polynomial_drop_needs_classical_spec() {
        let spec = k3p0().with_dropped("x^2");
        assert!(matches!(check_shape(&spec), Err(Error::InvalidSpec(_))));
        assert!(check_shape(&k3p0().with_dropped("sin")).is_err());
    }

    #[test]
    fn k3p0_matches_closed_form() {
        for &theta in &[0.05, 0.3, 1.0, 2.0, 3.0] {
            let cs = solve_ef_coefficients(&k3p0(), theta).unwrap();
            let b1 = k3p0_b1(theta);
            assert!((cs.a[0] + 2.0).abs() < 1e-14 && cs.a[1] == 1.0);
            assert!((cs.b[1] - b1).abs() < 1e-13 * (1.0 + b1.abs()), "theta {theta}: {} vs {b1}", cs.b[1]);
            assert!((cs.b[0] - (1.0 - 2.0 * b1)).abs() < 1e-13);
        }
        let cs = solve_ef_coefficients(&k3p0(), 1.0f64).unwrap();
        // 0.08767132.., 0.82465735..; the commonly quoted 7-digit values round loosely
        assert!((cs.b[1] - 0.0876714).abs() < 1e-6);
        assert!((cs.b[0] - 0.8246572).abs() < 1e-6);
    }

    #[test]
    fn classical_limits_are_exact() {
        let r = Rational::from_ratio;
        let numerov: CoefficientSet<Rational> = classical_limit(&k3p0()).unwrap();
        assert_eq!(numerov.a, vec![r(-2, 1), r(1, 1)]);
        assert_eq!(numerov.b, vec![r(5, 6), r(1, 12)]);
        let other: CoefficientSet<Rational> = classical_limit(&MethodSpec::new("k1p1", 2, 1, 1).unwrap()).unwrap();
        assert_eq!(other, numerov);
        let simos: CoefficientSet<Rational> = classical_limit(&simos_classical()).unwrap();
        assert_eq!(simos.a, vec![r(0, 1), r(-1, 1), r(1, 1)]);
        assert_eq!(simos.b, vec![r(37, 40), r(29, 30), r(17, 240)]);
    }

    #[test]
    fn small_theta_approaches_limit() {
        for spec in [k3p0(), MethodSpec::new("k1p1", 2, 1, 1).unwrap()] {
            let limit: CoefficientSet<f64> = classical_limit(&spec).unwrap();
            let near = solve_ef_coefficients(&spec, 1e-4).unwrap();
            for (x, y) in near.a.iter().chain(&near.b).zip(limit.a.iter().chain(&limit.b)) {
                assert!((x - y).abs() < 1e-7);
            }
            let zero = solve_ef_coefficients(&spec, 0.0).unwrap();
            assert_eq!(zero.b, limit.b);
        }
    }

    #[test]
    fn classical_spec_ignores_theta() {
        let spec = simos_classical();
        let base = solve_ef_coefficients(&spec, 0.0f64).unwrap();
        let far = solve_ef_coefficients(&spec, 2.0).unwrap();
        assert_eq!(base.b, far.b);
        assert!((base.b[2] - 17.0 / 240.0).abs() < 1e-15);
    }

    #[test]
    fn exactness_residuals() {
        let numerov: CoefficientSet<f64> = classical_limit(&k3p0()).unwrap();
        let poly = MethodSpec::new("n", 2, 5, -1).unwrap();
        assert!(exactness_check(&numerov, &poly).unwrap() < 1e-12);
        let at_one = CoefficientSet { theta: 1.0, ..numerov.clone() };
        assert!(trig_residual(&at_one) > 1e-3);
        let ef = solve_ef_coefficients(&k3p0(), 1.0).unwrap();
        assert!(exactness_check(&ef, &k3p0()).unwrap() < 1e-13);
        assert!(trig_residual(&ef) < 1e-14);
    }

    #[test]
    fn double_double_solution_is_tighter() {
        let theta = DoubleDouble::from(0.01);
        let cs = solve_ef_coefficients(&k3p0(), theta).unwrap();
        assert!(exactness_check(&cs, &k3p0()).unwrap().hi() < 1e-28);
    }

    #[test]
    fn resonance_is_reported() {
        // b_1 has a pole at theta = 2 pi for this family
        let err = solve_ef_coefficients(&k3p0(), 2.0 * std::f64::consts::PI).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }), "{err:?}");
    }

    proptest! {
        #[test]
        fn solutions_are_exact_on_working_range(theta in 0.0f64..3.0, which in 0usize..3) {
            let spec = match which {
                0 => k3p0(),
                1 => MethodSpec::new("k1p1", 2, 1, 1).unwrap(),
                _ => MethodSpec::new("j4", 4, 3, 2).unwrap(),
            };
            let cs = solve_ef_coefficients(&spec, theta).unwrap();
            prop_assert!(exactness_check(&cs, &spec).unwrap() < 1e-10);
        }

        #[test]
        fn coefficients_are_continuous(theta in 1e-3f64..2.9) {
            let a = solve_ef_coefficients(&k3p0(), theta).unwrap();
            let b = solve_ef_coefficients(&k3p0(), theta + 1e-4).unwrap();
            let gap = a.b.iter().zip(&b.b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(gap < 1e-4);
        }
    }
}
