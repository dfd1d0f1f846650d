//! Built-in oscillatory test problems.

use std::sync::Arc;

use serde::Serialize;

use crate::integrator::IVProblem;
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct ProblemCatalogEntry<T> {
    pub name: &'static str,
    pub problem: IVProblem<T>,
    /// The `k` an exponentially-fitted run would use.
    pub dominant_frequency: T,
    pub notes: &'static str,
}

/// Serializable summary for listings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogListing {
    pub name: &'static str,
    pub dimension: usize,
    pub dominant_frequency: f64,
    pub has_exact: bool,
    pub notes: &'static str,
}

impl<T: Real> ProblemCatalogEntry<T> {
    pub fn listing(&self) -> CatalogListing {
        CatalogListing {
            name: self.name,
            dimension: self.problem.dimension(),
            dominant_frequency: self.dominant_frequency.to_f64_lossy(),
            has_exact: self.problem.exact.is_some(),
            notes: self.notes,
        }
    }
}

pub const NAMES: [&str; 3] = ["harmonic", "inhomogeneous", "kepler"];

/// `y'' = -omega^2 y`, `y(0) = 1`, `y'(0) = 0`, exact `cos(omega x)`.
pub fn harmonic<T: Real>(omega: T) -> ProblemCatalogEntry<T> {
    let w2 = omega * omega;
    ProblemCatalogEntry {
        name: "harmonic",
        problem: IVProblem {
            f: Arc::new(move |_, y: &[T]| vec![-w2 * y[0]]),
            x0: T::zero(),
            y0: vec![T::one()],
            dy0: vec![T::zero()],
            exact: Some(Arc::new(move |x| vec![(omega * x).cos()])),
            exact_accel: Some(Arc::new(move |x| vec![-w2 * (omega * x).cos()])),
            lipschitz_hint: Some(w2),
        },
        dominant_frequency: omega,
        notes: "linear test equation y'' = -omega^2 y",
    }
}

/// `y'' = -100 y + 99 sin x`, `y(0) = 1`, `y'(0) = 11`, exact `cos 10x + sin 10x + sin x`.
pub fn inhomogeneous_oscillator<T: Real>() -> ProblemCatalogEntry<T> {
    let c = |v: f64| T::from_f64_lossy(v);
    ProblemCatalogEntry {
        name: "inhomogeneous",
        problem: IVProblem {
            f: Arc::new(move |x: T, y: &[T]| vec![-c(100.0) * y[0] + c(99.0) * x.sin()]),
            x0: T::zero(),
            y0: vec![T::one()],
            dy0: vec![c(11.0)],
            exact: Some(Arc::new(move |x: T| {
                let (s, co) = (c(10.0) * x).sin_cos();
                vec![co + s + x.sin()]
            })),
            exact_accel: Some(Arc::new(move |x: T| {
                let (s, co) = (c(10.0) * x).sin_cos();
                vec![-c(100.0) * (co + s) - x.sin()]
            })),
            lipschitz_hint: Some(c(100.0)),
        },
        dominant_frequency: c(10.0),
        notes: "forced oscillator; k = 10 is a good but inexact frequency estimate",
    }
}

/// Planar two-body problem on the unit circular orbit, exact `(cos t, sin t)`.
pub fn kepler_circular<T: Real>() -> ProblemCatalogEntry<T> {
    let accel = |y: &[T]| {
        let r2 = y[0] * y[0] + y[1] * y[1];
        let r3 = r2 * r2.sqrt();
        vec![-y[0] / r3, -y[1] / r3]
    };
    ProblemCatalogEntry {
        name: "kepler",
        problem: IVProblem {
            f: Arc::new(move |_, y: &[T]| accel(y)),
            x0: T::zero(),
            y0: vec![T::one(), T::zero()],
            dy0: vec![T::zero(), T::one()],
            exact: Some(Arc::new(|t: T| vec![t.cos(), t.sin()])),
            exact_accel: Some(Arc::new(|t: T| vec![-t.cos(), -t.sin()])),
            lipschitz_hint: Some(T::from_f64_lossy(3.0)),
        },
        dominant_frequency: T::one(),
        notes: "two-body problem y'' = -y/|y|^3 with circular initial data",
    }
}

/// Look up a problem; `omega` only applies to `harmonic` (default 1).
pub fn by_name<T: Real>(name: &str, omega: Option<f64>) -> Option<ProblemCatalogEntry<T>> {
    match name {
        "harmonic" => Some(harmonic(T::from_f64_lossy(omega.unwrap_or(1.0)))),
        "inhomogeneous" => Some(inhomogeneous_oscillator()),
        "kepler" => Some(kepler_circular()),
        _ => None,
    }
}

pub fn catalog<T: Real>() -> Vec<ProblemCatalogEntry<T>> {
    NAMES.iter().filter_map(|n| by_name(n, None)).collect()
}

/// Radius `|y|` drift of a planar trajectory relative to the initial radius.
pub fn radius_drift<T: Real>(ys: &[Vec<T>]) -> T {
    let radius = |y: &[T]| (y[0] * y[0] + y[1] * y[1]).sqrt();
    let r0 = radius(&ys[0]);
    ys.iter().fold(T::zero(), |m, y| m.max((radius(y) - r0).abs()))
}
