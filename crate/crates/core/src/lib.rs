//! Classical and exponentially-fitted symmetric multistep methods for the
//! special second-order problem `y'' = f(x, y)`.
//!
//! The numeric core is generic over the scalar type. Coefficient algebra runs
//! on anything implementing [`Scalar`] (including exact [`Rational`]), while
//! fitting, root finding and phase analysis need [`Real`] (`f32`, `f64`,
//! [`DoubleDouble`]).

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::manual_is_multiple_of)]

pub mod dd;
pub mod error;
pub mod fitting;
pub mod integrator;
pub mod method;
pub mod phase;
pub mod poly;
pub mod problems;
pub mod scalar;
pub mod specfile;

mod linalg;

pub use dd::DoubleDouble;
pub use error::{Error, Result};
pub use fitting::{
    build_moment_system, classical_limit, condition_labels, exactness_check, solve_ef_coefficients, MomentSystem,
};
pub use integrator::{
    amplitude_drift, bootstrap_starts, integrate, integrate_spec, integrate_with_sweeps, IVProblem, Trajectory,
};
pub use method::{
    apply_functional, error_constant, order_and_error_constant, to_centered, to_standard, validate, CoefficientRef,
    CoefficientSet, FrozenValue, MethodSpec, OrderReport, ValidationReport,
};
pub use phase::{
    characteristic_roots, fit_phaselag, is_periodic_point, periodicity_interval, phase_lag, plte_constant_closed_form,
    stability_region_scan, theorem1_residual, theorem2_check, CharacteristicModel, PeriodicityInterval, PhaseLagFit,
    PlteClosedForm, StabilityGrid, Theorem2Report, Theorem2Row,
};
pub use problems::ProblemCatalogEntry;
pub use scalar::{Real, Scalar};
pub use specfile::{bundled, load_spec, parse_spec, CoefficientRecord};

pub type Rational = num_rational::BigRational;
pub type Complex<T> = num_complex::Complex<T>;

pub type CoefficientSet64 = CoefficientSet<f64>;
pub type CoefficientSet32 = CoefficientSet<f32>;
pub type CoefficientSetDd = CoefficientSet<DoubleDouble>;
pub type CoefficientSetExact = CoefficientSet<Rational>;
