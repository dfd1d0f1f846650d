//! Characteristic roots, periodicity, stability regions and phase-lag.
//!
//! Applying a symmetric method to `y'' = -omega^2 y` gives the
//! characteristic polynomial
//! `sum_j A_j (z^(J/2+j) + z^(J/2-j)) + A_0 z^(J/2)` with
//! `A_j = a_j(theta) + nu^2 b_j(theta)`, `nu = omega h`, `theta = k h`.
//! The principal roots `exp(+-i lambda)` continue the double root at `+1`;
//! the phase-lag is `t = nu - lambda(nu)`.

use num_complex::Complex;
use num_traits::Signed;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fitting::{classical_limit, solve_ef_coefficients};
use crate::method::{order_and_error_constant, CoefficientSet, MethodSpec, MAX_TUNING_LEVEL};
use crate::poly::{self, modulus};
use crate::scalar::{circle_tolerance, Real, Scalar};
use crate::Rational;

/// Characteristic equation of a coefficient set at one `nu`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicModel<T> {
    pub step_number: usize,
    /// `A_0..A_(J/2)`.
    pub coeffs: Vec<T>,
    pub nu: T,
    pub theta: T,
}

impl<T: Real> CharacteristicModel<T> {
    pub fn new(cs: &CoefficientSet<T>, nu: T) -> Self {
        let nu2 = nu * nu;
        let coeffs = cs.a.iter().zip(&cs.b).map(|(&a, &b)| a + nu2 * b).collect();
        Self { step_number: cs.step_number, coeffs, nu, theta: cs.theta }
    }

    /// Ascending coefficients of the degree-`J` polynomial.
    pub fn polynomial(&self) -> Vec<T> {
        let half = self.step_number / 2;
        let mut poly = vec![T::zero(); self.step_number + 1];
        poly[half] = self.coeffs[0];
        for j in 1..=half {
            poly[half + j] = self.coeffs[j];
            poly[half - j] = self.coeffs[j];
        }
        poly
    }
}

pub fn characteristic_roots<T: Real>(cm: &CharacteristicModel<T>) -> Result<Vec<Complex<T>>> {
    let lead = cm.coeffs[cm.step_number / 2];
    if lead.abs() < T::from_f64_lossy(1e-14) {
        return Err(Error::DegenerateDegree(format!(
            "leading coefficient A_(J/2) = {:e} vanishes at nu = {}",
            lead.to_f64_lossy(),
            cm.nu.to_f64_lossy()
        )));
    }
    poly::roots(&cm.polynomial())
}

/// Index of the principal root: on the unit circle, upper half plane,
/// argument closest to `nu`.
fn principal_root<T: Real>(roots: &[Complex<T>], nu: T) -> Option<(usize, T)> {
    let tol = circle_tolerance::<T>();
    roots
        .iter()
        .enumerate()
        .filter(|(_, z)| (modulus(**z) - T::one()).abs() < tol && z.im > T::zero())
        .map(|(i, z)| (i, z.im.atan2(z.re)))
        .min_by(|(_, a), (_, b)| (*a - nu).abs().partial_cmp(&(*b - nu).abs()).unwrap_or(std::cmp::Ordering::Equal))
}

/// `lambda(nu)` when `(nu, theta)` satisfies the periodicity condition.
fn periodic_angle<T: Real>(cs: &CoefficientSet<T>, nu: T) -> Option<T> {
    if !(nu > T::zero()) {
        return None;
    }
    let roots = characteristic_roots(&CharacteristicModel::new(cs, nu)).ok()?;
    let (index, lambda) = principal_root(&roots, nu)?;
    let tol = circle_tolerance::<T>();
    let partner = roots
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != index)
        .any(|(_, z)| modulus(*z - roots[index].conj()) < tol.sqrt());
    let inside = roots.iter().all(|z| modulus(*z) <= T::one() + tol);
    (partner && inside).then_some(lambda)
}

pub fn is_periodic_point<T: Real>(cs: &CoefficientSet<T>, nu: T) -> bool {
    periodic_angle(cs, nu).is_some()
}

/// `t = nu - lambda(nu)`.
pub fn phase_lag<T: Real>(cs: &CoefficientSet<T>, nu: T) -> Result<T> {
    periodic_angle(cs, nu)
        .map(|lambda| nu - lambda)
        .ok_or(Error::OutOfRegion { nu: nu.to_f64_lossy(), theta: cs.theta.to_f64_lossy() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodicityInterval {
    /// `nu_0^2`; zero when no periodic point exists above `nu^2 = 0.01`.
    pub nu0_squared: f64,
    /// True when the scan cap was reached without leaving the region.
    pub unbounded: bool,
}

pub const PERIODICITY_STEP: f64 = 0.01;
pub const PERIODICITY_CAP: f64 = 100.0;

/// Interval of periodicity `(0, nu_0^2)` of a fixed coefficient set.
///
/// A linear grid in `nu^2` (step 0.01, up to 100) brackets the first exit
/// from the region, which is then refined by bisection.
pub fn periodicity_interval<T: Real>(cs: &CoefficientSet<T>) -> PeriodicityInterval {
    let periodic = |nu2: f64| is_periodic_point(cs, T::from_f64_lossy(nu2.sqrt()));
    let steps = (PERIODICITY_CAP / PERIODICITY_STEP).round() as usize;
    let mut last_inside = 0.0;
    let mut first_outside = None;
    for i in 1..=steps {
        let nu2 = i as f64 * PERIODICITY_STEP;
        if periodic(nu2) {
            last_inside = nu2;
        } else {
            first_outside = Some(nu2);
            break;
        }
    }
    let Some(mut hi) = first_outside else {
        return PeriodicityInterval { nu0_squared: PERIODICITY_CAP, unbounded: true };
    };
    if last_inside == 0.0 {
        return PeriodicityInterval { nu0_squared: 0.0, unbounded: false };
    }
    let mut lo = last_inside;
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if periodic(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    PeriodicityInterval { nu0_squared: 0.5 * (lo + hi), unbounded: false }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityGrid {
    pub nu_axis: Vec<f64>,
    /// Values of `r = theta / nu`.
    pub r_axis: Vec<f64>,
    /// `periodic[i][j]` for `nu_axis[i]`, `r_axis[j]`.
    pub periodic: Vec<Vec<bool>>,
    /// Cells excluded because the coefficient solve failed.
    pub failed_cells: usize,
}

/// Periodicity over `(nu, theta = r nu)`; cells are evaluated in parallel.
pub fn stability_region_scan<T: Real>(spec: &MethodSpec, nu_axis: &[f64], r_axis: &[f64]) -> Result<StabilityGrid> {
    if nu_axis.is_empty() || r_axis.is_empty() {
        return Err(Error::InvalidSpec("stability scan needs non-empty axes".into()));
    }
    if nu_axis.iter().chain(r_axis).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidSpec("stability scan axes must be finite and non-negative".into()));
    }
    let cells: Vec<Option<bool>> = (0..nu_axis.len() * r_axis.len())
        .into_par_iter()
        .map(|idx| {
            let nu = T::from_f64_lossy(nu_axis[idx / r_axis.len()]);
            let r = T::from_f64_lossy(r_axis[idx % r_axis.len()]);
            solve_ef_coefficients(spec, r * nu).ok().map(|cs| is_periodic_point(&cs, nu))
        })
        .collect();
    let failed_cells = cells.iter().filter(|c| c.is_none()).count();
    if failed_cells > 0 {
        log::warn!("{}: {failed_cells} stability cells excluded after coefficient-solve failures", spec.label);
    }
    let periodic = cells.chunks(r_axis.len()).map(|row| row.iter().map(|c| c.unwrap_or(false)).collect()).collect();
    Ok(StabilityGrid { nu_axis: nu_axis.to_vec(), r_axis: r_axis.to_vec(), periodic, failed_cells })
}

/// Fitted phase-lag order and constant at a fixed `r`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseLagFit {
    /// `None` when the phase-lag vanishes to working precision.
    pub q: Option<u32>,
    pub c: f64,
    pub r: f64,
    /// `(nu, t)` pairs used in the fit.
    pub fit_points: Vec<(f64, f64)>,
    pub slope: f64,
    /// Largest deviation of `log|t|` from the fitted line.
    pub slope_residual: f64,
    pub vanishing: bool,
}

pub const FIT_NU_MIN: f64 = 1e-2;
pub const FIT_NU_MAX: f64 = 0.3;
pub const FIT_POINTS: usize = 25;

fn least_squares(design: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let n = design[0].len();
    let mut normal = vec![vec![0.0; n]; n];
    let mut rhs = vec![0.0; n];
    for (row, &yi) in design.iter().zip(y) {
        for i in 0..n {
            rhs[i] += row[i] * yi;
            for j in 0..n {
                normal[i][j] += row[i] * row[j];
            }
        }
    }
    crate::linalg::solve(&normal, &rhs, None).map(|s| s.x)
}

/// Measure `q` and `c(r)` from `t(nu)` on a geometric grid in `[1e-2, 0.3]`.
///
/// The order comes from a log-log line; `c` from a least-squares fit of
/// `t / nu^(q+1) = c + d nu^2 + e nu^4`, which extrapolates to `nu -> 0`.
/// Points with `|t| < 1e3 eps nu` are discarded as noise; run in
/// [`DoubleDouble`](crate::DoubleDouble) for high-order methods.
pub fn fit_phaselag<T: Real>(spec: &MethodSpec, r: f64) -> Result<PhaseLagFit> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidSpec(format!("r = {r} must lie in [0, 1]")));
    }
    let ratio = (FIT_NU_MAX / FIT_NU_MIN).powf(1.0 / (FIT_POINTS - 1) as f64);
    let mut periodic_points = 0;
    let mut fit_points = Vec::new();
    for i in 0..FIT_POINTS {
        let nu_f = FIT_NU_MIN * ratio.powi(i as i32);
        let nu = T::from_f64_lossy(nu_f);
        let cs = solve_ef_coefficients(spec, T::from_f64_lossy(r) * nu)?;
        let Ok(t) = phase_lag(&cs, nu) else { continue };
        periodic_points += 1;
        if t.abs() > T::from_f64_lossy(1e3) * T::epsilon() * nu {
            fit_points.push((nu_f, t.to_f64_lossy()));
        }
    }
    if fit_points.len() < 4 {
        if periodic_points >= 4 {
            return Ok(PhaseLagFit {
                q: None,
                c: 0.0,
                r,
                fit_points,
                slope: f64::NAN,
                slope_residual: 0.0,
                vanishing: true,
            });
        }
        return Err(Error::InsufficientData { usable: fit_points.len() });
    }
    let logs: Vec<(f64, f64)> = fit_points.iter().map(|&(nu, t)| (nu.ln(), t.abs().ln())).collect();
    let line = least_squares(&logs.iter().map(|&(x, _)| vec![1.0, x]).collect::<Vec<_>>(), &logs.iter().map(|&(_, y)| y).collect::<Vec<_>>())
        .ok_or_else(|| Error::FitFailure { slope: f64::NAN, points: fit_points.clone() })?;
    let (intercept, slope) = (line[0], line[1]);
    let slope_residual = logs.iter().map(|&(x, y)| (y - intercept - slope * x).abs()).fold(0.0, f64::max);
    let rounded = slope.round();
    if (slope - rounded).abs() > 0.1 || rounded < 1.0 {
        return Err(Error::FitFailure { slope, points: fit_points });
    }
    let power = rounded as i32;
    let design: Vec<Vec<f64>> = fit_points.iter().map(|&(nu, _)| vec![1.0, nu * nu, nu.powi(4)]).collect();
    let scaled: Vec<f64> = fit_points.iter().map(|&(nu, t)| t / nu.powi(power)).collect();
    let c = least_squares(&design, &scaled)
        .map(|x| x[0])
        .ok_or_else(|| Error::FitFailure { slope, points: fit_points.clone() })?;
    Ok(PhaseLagFit { q: Some((power - 1) as u32), c, r, fit_points, slope, slope_residual, vanishing: false })
}

/// Closed-form phase-lag constant `c(r) = (-1)^(p/2) C_(p+2) / (2 sum j^2 a_j(0)) (1 - r^2)^(P+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlteClosedForm {
    pub p: u32,
    pub error_constant: Rational,
    /// `sum_(j=1)^(J/2) j^2 a_j(0)`.
    pub sum_j2_a: Rational,
    pub tuning_level: i32,
    /// `c(0)`.
    pub c0: Rational,
}

impl PlteClosedForm {
    pub fn exponent(&self) -> u32 {
        (self.tuning_level + 1) as u32
    }

    pub fn c_exact(&self, r: &Rational) -> Rational {
        let one = Rational::from_ratio(1, 1);
        self.c0.clone() * (one - r.clone() * r.clone()).powu(self.exponent())
    }

    /// The same classical data paired with tuning level `p`, for fitted
    /// methods known only through their classical limit.
    pub fn with_tuning_level(mut self, p: i32) -> Result<Self> {
        if !(-1..=MAX_TUNING_LEVEL).contains(&p) {
            return Err(Error::InvalidSpec(format!("P = {p} must lie in -1..={MAX_TUNING_LEVEL}")));
        }
        self.tuning_level = p;
        Ok(self)
    }

    pub fn c(&self, r: f64) -> f64 {
        self.c0.to_f64_lossy() * (1.0 - r * r).powi(self.exponent() as i32)
    }
}

pub fn plte_constant_closed_form(spec: &MethodSpec) -> Result<PlteClosedForm> {
    let limit: CoefficientSet<Rational> = classical_limit(spec)?;
    let report = order_and_error_constant(&limit)?;
    let sum_j2_a = limit.second_moment_a();
    if sum_j2_a.abs() < Rational::from_f64_lossy(1e-12) {
        return Err(Error::Inconsistent(format!(
            "sum j^2 a_j(0) = {sum_j2_a} vanishes, so sigma(1) = 0 (hypotheses II-III fail)"
        )));
    }
    let sign = if (report.p / 2) % 2 == 0 { Rational::from_ratio(1, 1) } else { Rational::from_ratio(-1, 1) };
    let c0 = sign * report.error_constant.clone() / (Rational::from_ratio(2, 1) * sum_j2_a.clone());
    Ok(PlteClosedForm { p: report.p, error_constant: report.error_constant, sum_j2_a, tuning_level: spec.tuning_level, c0 })
}

/// `[2 sum A_j cos(j nu) + A_0] / [2 sum j^2 A_j]` at `theta = cs.theta`.
pub fn theorem1_residual<T: Real>(cs: &CoefficientSet<T>, nu: T) -> Result<T> {
    let cm = CharacteristicModel::new(cs, nu);
    let two = T::from_f64_lossy(2.0);
    let mut num = cm.coeffs[0];
    let mut den = T::zero();
    let mut scale = T::zero();
    for j in 1..cm.coeffs.len() {
        let jt = T::from_usize(j).unwrap();
        num += two * cm.coeffs[j] * (jt * nu).cos();
        den += two * jt * jt * cm.coeffs[j];
        scale += (two * jt * jt * cm.coeffs[j]).abs();
    }
    if den.abs() <= T::epsilon() * T::from_f64_lossy(1e3) * scale || den.is_zero() {
        return Err(Error::SingularNormalization { nu: nu.to_f64_lossy() });
    }
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem2Row {
    pub r: f64,
    pub q: Option<u32>,
    pub c_fit: f64,
    pub c_closed: f64,
    /// `|c_fit(r) / (c_fit(0) (1 - r^2)^(P+1)) - 1|`.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem2Report {
    pub label: String,
    pub tuning_level: i32,
    pub c_fit_0: f64,
    pub rows: Vec<Theorem2Row>,
    pub max_deviation: f64,
}

/// Compare fitted `c(r)` with `c(0) (1 - r^2)^(P+1)`; fits run in parallel over `r`.
pub fn theorem2_check<T: Real>(spec: &MethodSpec, r_list: &[f64]) -> Result<Theorem2Report> {
    if let Some(r) = r_list.iter().find(|r| !(0.0..=0.95).contains(*r)) {
        return Err(Error::InvalidSpec(format!("theorem 2 check needs r in [0, 0.95], got {r}")));
    }
    let closed = plte_constant_closed_form(spec)?;
    let base = fit_phaselag::<T>(spec, 0.0)?;
    let fits: Vec<Result<PhaseLagFit>> = r_list.par_iter().map(|&r| fit_phaselag::<T>(spec, r)).collect();
    let exponent = closed.exponent() as i32;
    let mut rows = Vec::with_capacity(r_list.len());
    for fit in fits {
        let fit = fit?;
        let expected = base.c * (1.0 - fit.r * fit.r).powi(exponent);
        rows.push(Theorem2Row {
            r: fit.r,
            q: fit.q,
            c_fit: fit.c,
            c_closed: closed.c(fit.r),
            deviation: (fit.c / expected - 1.0).abs(),
        });
    }
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    Ok(Theorem2Report { label: spec.label.clone(), tuning_level: spec.tuning_level, c_fit_0: base.c, rows, max_deviation })
}
