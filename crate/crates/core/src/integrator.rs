//! Fixed-step integration of `y'' = f(x, y)` with a symmetric multistep method.

use std::cell::Cell;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fitting::solve_ef_coefficients;
use crate::method::{to_standard, CoefficientSet, MethodSpec};
use crate::scalar::Real;

pub type Force<T> = Arc<dyn Fn(T, &[T]) -> Vec<T> + Send + Sync>;
pub type Curve<T> = Arc<dyn Fn(T) -> Vec<T> + Send + Sync>;

pub const MAX_SWEEPS: usize = 50;
pub const BOOTSTRAP_SUBSTEPS: usize = 100;

/// Initial value problem `y'' = f(x, y)`, `y(x0) = y0`, `y'(x0) = dy0`.
#[derive(Clone)]
pub struct IVProblem<T> {
    pub f: Force<T>,
    pub x0: T,
    pub y0: Vec<T>,
    pub dy0: Vec<T>,
    pub exact: Option<Curve<T>>,
    /// Second derivative of `exact`, for residual checks.
    pub exact_accel: Option<Curve<T>>,
    pub lipschitz_hint: Option<T>,
}

impl<T: Real> IVProblem<T> {
    pub fn dimension(&self) -> usize {
        self.y0.len()
    }

    /// Largest `|exact''(x) - f(x, exact(x))|` over `samples` points of `[a, b]`.
    pub fn exact_residual(&self, a: T, b: T, samples: usize) -> Option<T> {
        let (exact, accel) = (self.exact.as_ref()?, self.exact_accel.as_ref()?);
        let mut worst = T::zero();
        for i in 0..samples {
            let x = a + (b - a) * T::from_usize(i).unwrap() / T::from_usize(samples.max(2) - 1).unwrap();
            let y = exact(x);
            for (lhs, rhs) in accel(x).into_iter().zip((self.f)(x, &y)) {
                worst = worst.max((lhs - rhs).abs());
            }
        }
        Some(worst)
    }
}

impl<T> std::fmt::Debug for IVProblem<T>
where
    T: std::fmt::Debug,
{
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IVProblem")
            .field("x0", &self.x0)
            .field("y0", &self.y0)
            .field("dy0", &self.dy0)
            .field("exact", &self.exact.is_some())
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory<T> {
    pub h: T,
    pub xs: Vec<T>,
    pub ys: Vec<Vec<T>>,
    /// Fixed-point sweeps per multistep step (0 for explicit methods).
    pub implicit_iters: Vec<u32>,
    /// Largest relative implicit residual accepted.
    pub max_residual: f64,
    /// Force evaluations made by the multistep steps.
    pub f_evals: usize,
    /// Force evaluations spent on starting values and the initial window.
    pub start_evals: usize,
}

impl<T: Real> Trajectory<T> {
    /// Largest absolute deviation from `exact` over all points and components.
    pub fn max_error(&self, exact: &dyn Fn(T) -> Vec<T>) -> T {
        self.xs.iter().zip(&self.ys).fold(T::zero(), |worst, (&x, y)| {
            exact(x).iter().zip(y).fold(worst, |w, (e, v)| w.max((*e - *v).abs()))
        })
    }
}

/// First `J` solution values: samples of `exact` when available, otherwise
/// classical fifth-order Dormand-Prince at step `h / 100`.
///
/// Returns the values and the number of force evaluations spent.
pub fn bootstrap_starts<T: Real>(problem: &IVProblem<T>, step_number: usize, h: T) -> (Vec<Vec<T>>, usize) {
    if let Some(exact) = &problem.exact {
        let starts = (0..step_number).map(|j| exact(problem.x0 + T::from_usize(j).unwrap() * h)).collect();
        return (starts, 0);
    }
    let sub = h / T::from_usize(BOOTSTRAP_SUBSTEPS).unwrap();
    let mut y = problem.y0.clone();
    let mut v = problem.dy0.clone();
    let mut starts = vec![y.clone()];
    let mut evals = 0;
    for j in 1..step_number {
        for s in 0..BOOTSTRAP_SUBSTEPS {
            let x = problem.x0 + h * T::from_usize(j - 1).unwrap() + sub * T::from_usize(s).unwrap();
            let (ny, nv) = dormand_prince_step(&*problem.f, x, &y, &v, sub);
            y = ny;
            v = nv;
            evals += 6;
        }
        starts.push(y.clone());
    }
    (starts, evals)
}

const DP_C: [(i64, i64); 5] = [(1, 5), (3, 10), (4, 5), (8, 9), (1, 1)];
const DP_A: [&[(i64, i64)]; 5] = [
    &[(1, 5)],
    &[(3, 40), (9, 40)],
    &[(44, 45), (-56, 15), (32, 9)],
    &[(19372, 6561), (-25360, 2187), (64448, 6561), (-212, 729)],
    &[(9017, 3168), (-355, 33), (46732, 5247), (49, 176), (-5103, 18656)],
];
const DP_B: [(i64, i64); 6] = [(35, 384), (0, 1), (500, 1113), (125, 192), (-2187, 6784), (11, 84)];

/// One Dormand-Prince step on the first-order system `(y, v)' = (v, f(x, y))`.
fn dormand_prince_step<T: Real>(f: &dyn Fn(T, &[T]) -> Vec<T>, x: T, y: &[T], v: &[T], h: T) -> (Vec<T>, Vec<T>) {
    let ratio = |(n, d): (i64, i64)| T::from_ratio(n, d);
    let d = y.len();
    let mut ky: Vec<Vec<T>> = Vec::with_capacity(6);
    let mut kv: Vec<Vec<T>> = Vec::with_capacity(6);
    ky.push(v.to_vec());
    kv.push(f(x, y));
    for stage in 0..5 {
        let mut ys = y.to_vec();
        let mut vs = v.to_vec();
        for (i, &a) in DP_A[stage].iter().enumerate() {
            let a = ratio(a) * h;
            for c in 0..d {
                ys[c] += a * ky[i][c];
                vs[c] += a * kv[i][c];
            }
        }
        let xs = x + ratio(DP_C[stage]) * h;
        kv.push(f(xs, &ys));
        ky.push(vs);
    }
    let mut ny = y.to_vec();
    let mut nv = v.to_vec();
    for (i, &b) in DP_B.iter().enumerate() {
        let b = ratio(b) * h;
        for c in 0..d {
            ny[c] += b * ky[i][c];
            nv[c] += b * kv[i][c];
        }
    }
    (ny, nv)
}

/// Prepared standard-form coefficients for stepping.
struct Stepper<T> {
    alpha: Vec<T>,
    beta: Vec<T>,
    h2: T,
    max_sweeps: usize,
}

impl<T: Real> Stepper<T> {
    fn new(cs: &CoefficientSet<T>, h: T, max_sweeps: usize) -> Self {
        let (alpha, beta) = to_standard(cs);
        Self { alpha, beta, h2: h * h, max_sweeps }
    }

    fn j(&self) -> usize {
        self.alpha.len() - 1
    }

    /// Solve for `y_(n+J)` from the window `y_n..y_(n+J-1)` and their forces.
    ///
    /// Returns the new value, its force, the sweep count and the relative residual.
    fn step(
        &self,
        f: &dyn Fn(T, &[T]) -> Vec<T>,
        window: &[Vec<T>],
        forces: &[Vec<T>],
        x_new: T,
        index: usize,
        evals: &Cell<usize>,
    ) -> Result<(Vec<T>, Vec<T>, u32, T)> {
        let jj = self.j();
        let d = window[0].len();
        let lead = self.alpha[jj];
        let mut known = vec![T::zero(); d];
        for j in 0..jj {
            for c in 0..d {
                known[c] += self.h2 * self.beta[j] * forces[j][c] - self.alpha[j] * window[j][c];
            }
        }
        for k in known.iter_mut() {
            *k /= lead;
        }
        let gamma = self.h2 * self.beta[jj] / lead;
        let eval = |y: &[T]| {
            evals.set(evals.get() + 1);
            f(x_new, y)
        };
        if gamma.is_zero() {
            if known.iter().any(|v| !v.is_finite()) {
                return Err(Error::ImplicitDivergence { step: index, sweeps: 0, residual: f64::INFINITY });
            }
            let force = eval(&known);
            return Ok((known, force, 0, T::zero()));
        }
        // predictor: reuse the newest force in place of the unknown one
        let mut y: Vec<T> = (0..d).map(|c| known[c] + gamma * forces[jj - 1][c]).collect();
        let eps = T::epsilon();
        let tol = eps;
        let residual_of = |y: &[T], force: &[T]| {
            let scale = y.iter().fold(T::one(), |m, v| m.max(v.abs()));
            (0..d).fold(T::zero(), |m, c| m.max((y[c] - known[c] - gamma * force[c]).abs())) / scale
        };
        let mut prev_delta: Option<T> = None;
        let diverged = |sweeps: usize, residual: T| Error::ImplicitDivergence {
            step: index,
            sweeps,
            residual: residual.to_f64_lossy(),
        };
        for sweep in 1..=self.max_sweeps {
            let force = eval(&y);
            let next: Vec<T> = (0..d).map(|c| known[c] + gamma * force[c]).collect();
            let scale = next.iter().fold(T::one(), |m, v| m.max(v.abs()));
            let delta = next.iter().zip(&y).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
            y = next;
            if !delta.is_finite() {
                return Err(diverged(sweep, delta));
            }
            // error estimate from the observed contraction rate
            let estimate = match prev_delta {
                Some(p) if p > T::zero() && delta < p => {
                    let rho = delta / p;
                    rho / (T::one() - rho) * delta
                }
                _ => delta,
            };
            if delta <= tol * scale || estimate <= tol * scale {
                let force = eval(&y);
                let residual = residual_of(&y, &force);
                return Ok((y, force, sweep as u32, residual));
            }
            prev_delta = Some(delta);
        }
        let force = eval(&y);
        let residual = residual_of(&y, &force);
        if !(residual <= T::from_f64_lossy(450.0) * eps) {
            return Err(diverged(self.max_sweeps, residual));
        }
        Ok((y, force, self.max_sweeps as u32, residual))
    }
}

/// March `n_steps` steps of size `h` from `problem.x0`; the trajectory has
/// `n_steps + 1` points, the first `J` of them from [`bootstrap_starts`].
pub fn integrate<T: Real>(cs: &CoefficientSet<T>, problem: &IVProblem<T>, h: T, n_steps: usize) -> Result<Trajectory<T>> {
    integrate_with_sweeps(cs, problem, h, n_steps, MAX_SWEEPS)
}

/// [`integrate`] with a different cap on fixed-point sweeps per step.
pub fn integrate_with_sweeps<T: Real>(
    cs: &CoefficientSet<T>,
    problem: &IVProblem<T>,
    h: T,
    n_steps: usize,
    max_sweeps: usize,
) -> Result<Trajectory<T>> {
    let jj = cs.step_number;
    if !(h > T::zero()) || !h.is_finite() {
        return Err(Error::InvalidSpec(format!("step size h = {} must be positive", h.to_f64_lossy())));
    }
    if n_steps < jj {
        return Err(Error::InvalidSpec(format!("n_steps = {n_steps} must be at least J = {jj}")));
    }
    if max_sweeps == 0 {
        return Err(Error::InvalidSpec("max_sweeps must be positive".into()));
    }
    let stepper = Stepper::new(cs, h, max_sweeps);
    let (starts, boot_evals) = bootstrap_starts(problem, jj, h);
    let x_at = |i: usize| problem.x0 + T::from_usize(i).unwrap() * h;
    let forces: Vec<Vec<T>> = starts.iter().enumerate().map(|(i, y)| (problem.f)(x_at(i), y)).collect();
    let evals = Cell::new(0usize);
    let mut ys = starts;
    let mut window_forces = forces;
    let mut implicit_iters = Vec::with_capacity(n_steps + 1 - jj);
    let mut max_residual = T::zero();
    for i in jj..=n_steps {
        let window = &ys[i - jj..i];
        let (y, force, sweeps, residual) = stepper.step(&*problem.f, window, &window_forces, x_at(i), i, &evals)?;
        window_forces.remove(0);
        window_forces.push(force);
        ys.push(y);
        implicit_iters.push(sweeps);
        max_residual = max_residual.max(residual);
    }
    Ok(Trajectory {
        h,
        xs: (0..=n_steps).map(x_at).collect(),
        ys,
        implicit_iters,
        max_residual: max_residual.to_f64_lossy(),
        f_evals: evals.get(),
        start_evals: boot_evals + jj,
    })
}

/// Integrate with the coefficients of `spec` fitted at `theta = k h` (`k = 0` when `None`).
pub fn integrate_spec<T: Real>(
    spec: &MethodSpec,
    problem: &IVProblem<T>,
    h: T,
    n_steps: usize,
    k: Option<T>,
) -> Result<Trajectory<T>> {
    let theta = k.map_or(T::zero(), |k| k * h);
    let cs = solve_ef_coefficients(spec, theta)?;
    integrate(&cs, problem, h, n_steps)
}

/// Largest relative change of `E_n = omega^2 |y_n|^2 + |v_n|^2` over the run.
///
/// `v_n` is the centered difference `(y_(n+1) - y_(n-1)) / 2h`. Given the
/// principal angle `lambda` of the method at `nu = omega h`, `v_n` is scaled
/// by `nu / sin(lambda)`, which makes `E_n` exactly conserved along the
/// discrete principal mode; without it the plain centered difference
/// oscillates by `O(nu^2)`.
pub fn amplitude_drift<T: Real>(trajectory: &Trajectory<T>, omega: T, lambda: Option<T>) -> T {
    let h = trajectory.h;
    let two_h = h + h;
    let correction = lambda.map_or(T::one(), |l| omega * h / l.sin());
    let ys = &trajectory.ys;
    let energy = |n: usize| {
        ys[n].iter().enumerate().fold(T::zero(), |acc, (c, y)| {
            let v = (ys[n + 1][c] - ys[n - 1][c]) / two_h * correction;
            acc + omega * omega * *y * *y + v * v
        })
    };
    if ys.len() < 3 {
        return T::zero();
    }
    let e0 = energy(1);
    (2..ys.len() - 1).fold(T::zero(), |worst, n| worst.max(((energy(n) - e0) / e0).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{harmonic, kepler_circular};
    use crate::DoubleDouble;

    fn numerov() -> CoefficientSet<f64> {
        CoefficientSet::from_ratios(2, &[(-2, 1), (1, 1)], &[(5, 6), (1, 12)]).unwrap()
    }

    fn stormer() -> CoefficientSet<f64> {
        CoefficientSet::new(2, 0.0, vec![-2.0, 1.0], vec![1.0, 0.0]).unwrap()
    }

    #[test]
    fn exact_starts_are_samples() {
        let entry = harmonic(1.0);
        let (starts, evals) = bootstrap_starts(&entry.problem, 4, 0.1);
        assert_eq!(evals, 0);
        assert_eq!(starts.len(), 4);
        for (j, y) in starts.iter().enumerate() {
            assert_eq!(y[0], (0.1 * j as f64).cos());
        }
    }

    #[test]
    fn runge_kutta_bootstrap_self_converges() {
        let mut problem = kepler_circular::<f64>().problem;
        problem.exact = None;
        let (coarse, _) = bootstrap_starts(&problem, 4, 0.05);
        let fine = {
            let mut y = problem.y0.clone();
            let mut v = problem.dy0.clone();
            let mut out = vec![y.clone()];
            let sub = 0.05 / 1000.0;
            for j in 1..4 {
                for s in 0..1000 {
                    let x = 0.05 * (j - 1) as f64 + sub * s as f64;
                    let (ny, nv) = dormand_prince_step(&*problem.f, x, &y, &v, sub);
                    y = ny;
                    v = nv;
                }
                out.push(y.clone());
            }
            out
        };
        for (a, b) in coarse.iter().zip(&fine) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert_eq!(bootstrap_starts(&problem, 2, 0.05).0.len(), 2);
    }

    #[test]
    fn explicit_method_uses_one_force_per_step() {
        let entry = harmonic(1.0);
        let traj = integrate(&stormer(), &entry.problem, 0.1, 100).unwrap();
        assert_eq!(traj.f_evals, 99);
        assert!(traj.implicit_iters.iter().all(|&i| i == 0));
        assert_eq!(traj.xs.len(), 101);
    }

    #[test]
    fn numerov_fixed_point_contracts_quickly() {
        let entry = harmonic(1.0);
        let traj = integrate(&numerov(), &entry.problem, 0.1, 200).unwrap();
        assert!(traj.implicit_iters.iter().all(|&i| (1..=4).contains(&i)), "{:?}", &traj.implicit_iters[..10]);
        assert!(traj.max_residual < 1e-14);
    }

    #[test]
    fn order_four_convergence() {
        let entry = harmonic(1.0);
        let exact = entry.problem.exact.clone().unwrap();
        let err = |h: f64| integrate(&numerov(), &entry.problem, h, (10.0 / h).round() as usize).unwrap().max_error(&*exact);
        let ratio = err(0.1) / err(0.05);
        assert!((ratio / 16.0 - 1.0).abs() < 0.15, "{ratio}");
    }

    #[test]
    fn divergent_iteration_is_reported() {
        let entry = harmonic(40.0);
        let err = integrate(&numerov(), &entry.problem, 1.0, 10).unwrap_err();
        assert!(matches!(err, Error::ImplicitDivergence { step: 2, .. }), "{err:?}");
    }

    #[test]
    fn repeated_runs_are_identical() {
        let entry = kepler_circular::<f64>();
        let a = integrate(&numerov(), &entry.problem, 0.05, 300).unwrap();
        let b = integrate(&numerov(), &entry.problem, 0.05, 300).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn numerov_outside_its_interval_grows() {
        // contraction nu^2 / 12 = 7/12 needs more than the default 50 sweeps
        let omega = 7f64.sqrt();
        let entry = harmonic(omega);
        assert!(matches!(integrate(&numerov(), &entry.problem, 1.0, 1000), Err(Error::ImplicitDivergence { step: 2, .. })));
        let traj = integrate_with_sweeps(&numerov(), &entry.problem, 1.0, 1000, 200).unwrap();
        assert!(amplitude_drift(&traj, omega, None) > 1.0);
    }

    #[test]
    fn overflow_is_reported() {
        let entry = harmonic(3.0);
        let err = integrate(&stormer(), &entry.problem, 1.0, 5000).unwrap_err();
        assert!(matches!(err, Error::ImplicitDivergence { sweeps: 0, .. }), "{err:?}");
    }

    #[test]
    fn drift_grows_outside_the_interval() {
        // Stormer is periodic for nu^2 < 4
        let omega = 4.5f64.sqrt();
        let entry = harmonic(omega);
        let traj = integrate(&stormer(), &entry.problem, 1.0, 1000).unwrap();
        assert!(amplitude_drift(&traj, omega, None) > 1.0);
    }

    #[test]
    fn generic_over_double_double() {
        let entry = harmonic(DoubleDouble::from(1.0));
        let cs = numerov().map(|v| DoubleDouble::from(*v));
        let traj = integrate(&cs, &entry.problem, DoubleDouble::from(0.1), 50).unwrap();
        let exact = entry.problem.exact.clone().unwrap();
        assert!(traj.max_error(&*exact).hi() < 1e-5);
    }
}
