//! Symmetric multistep methods: identity, coefficient views, hypotheses,
//! order and error constant.
//!
//! The canonical storage is *centered*: for a `J`-step method, `a[0]`
//! multiplies `y_n` and `a[j]` multiplies both `y_{n+j}` and `y_{n-j}`
//! (`j = 1..=J/2`), likewise for `b` and the `f` values. The standard
//! one-sided form `sum alpha_j y_{n+j} = h^2 sum beta_j f_{n+j}` is a derived
//! view produced by [`to_standard`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::poly::{self, modulus};
use crate::scalar::{circle_tolerance, cluster_tolerance, Real, Scalar};

pub const MAX_STEP_NUMBER: usize = 8;
pub const MAX_TUNING_LEVEL: i32 = 5;

/// A centered coefficient slot, written `a<j>` or `b<j>` in spec files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CoefficientRef {
    A(usize),
    B(usize),
}

impl fmt::Display for CoefficientRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientRef::A(j) => write!(f, "a{j}"),
            CoefficientRef::B(j) => write!(f, "b{j}"),
        }
    }
}

impl FromStr for CoefficientRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidSpec(format!("coefficient reference `{s}` is not of the form a<j> or b<j>"));
        let (kind, index) = s.split_at(s.char_indices().nth(1).map(|(i, _)| i).ok_or_else(bad)?);
        let index: usize = index.trim_start_matches('_').parse().map_err(|_| bad())?;
        match kind {
            "a" => Ok(CoefficientRef::A(index)),
            "b" => Ok(CoefficientRef::B(index)),
            _ => Err(bad()),
        }
    }
}

/// A frozen coefficient value, kept exact when written as a ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrozenValue {
    Ratio(i64, i64),
    Float(f64),
}

impl FrozenValue {
    pub fn to_scalar<T: Scalar>(self) -> T {
        match self {
            FrozenValue::Ratio(n, d) => T::from_ratio(n, d),
            FrozenValue::Float(x) => T::from_f64_lossy(x),
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            FrozenValue::Ratio(n, d) => n as f64 / d as f64,
            FrozenValue::Float(x) => x,
        }
    }
}

impl FromStr for FrozenValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|_| Error::Parse(format!("bad numerator in `{s}`")))?;
            let d: i64 = d.trim().parse().map_err(|_| Error::Parse(format!("bad denominator in `{s}`")))?;
            if d == 0 {
                return Err(Error::Parse(format!("zero denominator in `{s}`")));
            }
            return Ok(FrozenValue::Ratio(n, d));
        }
        if let Ok(n) = s.parse::<i64>() {
            return Ok(FrozenValue::Ratio(n, 1));
        }
        s.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(FrozenValue::Float)
            .ok_or_else(|| Error::Parse(format!("`{s}` is not a number or ratio")))
    }
}

/// Identity of a symmetric `J`-step method.
///
/// `poly_degree` is `K` and `tuning_level` is `P` in the reference set
/// `{1, x, .., x^K, x^m cos kx, x^m sin kx (m <= P)}`; `K = -1` means no
/// polynomial part and `P = -1` a classical method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub label: String,
    pub step_number: usize,
    pub poly_degree: i32,
    pub tuning_level: i32,
    pub frozen: BTreeMap<CoefficientRef, FrozenValue>,
    /// Labels of exactness conditions removed from the moment system.
    pub drop_conditions: Vec<String>,
}

impl MethodSpec {
    pub fn new(label: impl Into<String>, step_number: usize, poly_degree: i32, tuning_level: i32) -> Result<Self> {
        let spec = Self {
            label: label.into(),
            step_number,
            poly_degree,
            tuning_level,
            frozen: BTreeMap::new(),
            drop_conditions: Vec::new(),
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn with_frozen(mut self, slot: CoefficientRef, value: FrozenValue) -> Result<Self> {
        self.frozen.insert(slot, value);
        self.check()?;
        Ok(self)
    }

    pub fn with_dropped(mut self, label: impl Into<String>) -> Self {
        self.drop_conditions.push(label.into());
        self
    }

    pub fn half(&self) -> usize {
        self.step_number / 2
    }

    /// `p = K + 2P + 1`.
    pub fn intended_order(&self) -> i32 {
        self.poly_degree + 2 * self.tuning_level + 1
    }

    pub fn is_classical(&self) -> bool {
        self.tuning_level < 0
    }

    pub(crate) fn check(&self) -> Result<()> {
        let j = self.step_number;
        if j < 2 || j % 2 != 0 || j > MAX_STEP_NUMBER {
            return Err(Error::InvalidSpec(format!("J = {j} must be even and in 2..={MAX_STEP_NUMBER}")));
        }
        if self.poly_degree < -1 || self.poly_degree % 2 == 0 {
            return Err(Error::InvalidSpec(format!(
                "K = {} must be -1 or a positive odd integer (K + 2P = p - 1 with p even)",
                self.poly_degree
            )));
        }
        if self.tuning_level < -1 || self.tuning_level > MAX_TUNING_LEVEL {
            return Err(Error::InvalidSpec(format!(
                "P = {} must lie in -1..={MAX_TUNING_LEVEL}",
                self.tuning_level
            )));
        }
        if self.poly_degree == -1 && self.tuning_level == -1 {
            return Err(Error::InvalidSpec("K = -1 and P = -1 leave an empty reference set".into()));
        }
        for slot in self.frozen.keys() {
            match *slot {
                CoefficientRef::A(i) if i == self.half() => {
                    return Err(Error::InvalidSpec(format!(
                        "a{i} is the normalised leading coefficient and cannot be frozen"
                    )))
                }
                CoefficientRef::A(i) | CoefficientRef::B(i) if i > self.half() => {
                    return Err(Error::InvalidSpec(format!("{slot} is out of range for J = {j}")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Centered coefficients of a symmetric method at one value of `theta = k h`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet<T> {
    pub step_number: usize,
    pub theta: T,
    pub a: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> CoefficientSet<T> {
    pub fn new(step_number: usize, theta: T, a: Vec<T>, b: Vec<T>) -> Result<Self> {
        if step_number < 2 || step_number % 2 != 0 {
            return Err(Error::InvalidMethod(format!("step number {step_number} must be even and >= 2")));
        }
        let half = step_number / 2;
        if a.len() != half + 1 || b.len() != half + 1 {
            return Err(Error::InvalidMethod(format!(
                "J = {step_number} needs {} centered a and b values, got {} and {}",
                half + 1,
                a.len(),
                b.len()
            )));
        }
        Ok(Self { step_number, theta, a, b })
    }

    /// Build from rational literals, e.g. `&[(-2, 1), (1, 1)]`.
    pub fn from_ratios(step_number: usize, a: &[(i64, i64)], b: &[(i64, i64)]) -> Result<Self> {
        let conv = |v: &[(i64, i64)]| v.iter().map(|&(n, d)| T::from_ratio(n, d)).collect();
        Self::new(step_number, T::zero(), conv(a), conv(b))
    }

    pub fn half(&self) -> usize {
        self.step_number / 2
    }

    /// `sum_{j=1}^{J/2} j^2 a_j`, the normalisation appearing in the phase-lag constant.
    pub fn second_moment_a(&self) -> T {
        (1..=self.half()).fold(T::zero(), |acc, j| {
            acc + T::from_usize(j * j).expect("small integer") * self.a[j].clone()
        })
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> CoefficientSet<U> {
        CoefficientSet {
            step_number: self.step_number,
            theta: f(&self.theta),
            a: self.a.iter().map(&f).collect(),
            b: self.b.iter().map(&f).collect(),
        }
    }

    pub fn to_f64(&self) -> CoefficientSet<f64> {
        self.map(|v| v.to_f64_lossy())
    }
}

/// Expand centered coefficients to the standard `(alpha, beta)` of length `J + 1`.
pub fn to_standard<T: Scalar>(cs: &CoefficientSet<T>) -> (Vec<T>, Vec<T>) {
    let half = cs.half();
    let expand = |c: &[T]| (0..=cs.step_number).map(|i| c[i.abs_diff(half)].clone()).collect();
    (expand(&cs.a), expand(&cs.b))
}

/// Inverse of [`to_standard`]; rejects non-symmetric input.
pub fn to_centered<T: Scalar>(alpha: &[T], beta: &[T], theta: T) -> Result<CoefficientSet<T>> {
    if alpha.len() != beta.len() || alpha.len() < 3 || alpha.len() % 2 == 0 {
        return Err(Error::InvalidMethod(format!(
            "standard form needs equal odd lengths >= 3, got {} and {}",
            alpha.len(),
            beta.len()
        )));
    }
    let step_number = alpha.len() - 1;
    let half = step_number / 2;
    let scale = alpha.iter().chain(beta).fold(T::one(), |m, v| if v.abs() > m { v.abs() } else { m });
    let tol = T::zero_tolerance() * scale;
    for i in 0..half {
        let mirror = step_number - i;
        if (alpha[i].clone() - alpha[mirror].clone()).abs() > tol || (beta[i].clone() - beta[mirror].clone()).abs() > tol {
            return Err(Error::InvalidMethod(format!("coefficients are not symmetric at index {i}")));
        }
    }
    CoefficientSet::new(step_number, theta, alpha[half..].to_vec(), beta[half..].to_vec())
}

/// `C_q = (1/q!) sum j^q alpha_j - (1/(q-2)!) sum j^(q-2) beta_j` on the standard form.
pub fn error_constant<T: Scalar>(alpha: &[T], beta: &[T], q: u32) -> T {
    let moment = |c: &[T], power: u32| {
        c.iter().enumerate().fold(T::zero(), |acc, (j, v)| {
            acc + T::from_usize(j).expect("small integer").powu(power) * v.clone()
        })
    };
    let mut value = moment(alpha, q) / T::factorial(q);
    if q >= 2 {
        value = value - moment(beta, q - 2) / T::factorial(q - 2);
    }
    value
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderReport<T> {
    /// Algebraic order.
    pub p: u32,
    /// `C_{p+2}`.
    pub error_constant: T,
    /// `(q, C_q)` for `q = 0..=p+2`.
    pub cq_sequence: Vec<(u32, T)>,
    pub zero_threshold: T,
}

/// Order and error constant from the standard-form moments.
///
/// Intended for `theta = 0` coefficient sets; exponentially fitted
/// coefficients at `theta > 0` are not polynomially exact and report a
/// lower order.
pub fn order_and_error_constant<T: Scalar>(cs: &CoefficientSet<T>) -> Result<OrderReport<T>> {
    let (alpha, beta) = to_standard(cs);
    let scale = alpha.iter().chain(&beta).fold(T::zero(), |acc, v| acc + v.abs());
    let scale = if scale > T::one() { scale } else { T::one() };
    let zero_threshold = T::zero_tolerance() * scale;
    let max_q = (cs.step_number + 12) as u32;
    let mut cq_sequence = Vec::new();
    for q in 0..=max_q {
        let c = error_constant(&alpha, &beta, q);
        let nonzero = c.abs() > zero_threshold;
        cq_sequence.push((q, c.clone()));
        if nonzero {
            if q < 2 {
                return Err(Error::Inconsistent(format!("C_{q} = {c:?} does not vanish")));
            }
            return Ok(OrderReport { p: q - 2, error_constant: c, cq_sequence, zero_threshold });
        }
    }
    Err(Error::OrderUndetermined { max_q })
}

/// `L[h, a] z(x) = sum alpha_j z(x + j h) - h^2 sum beta_j z''(x + j h)`.
pub fn apply_functional<T: Scalar>(
    cs: &CoefficientSet<T>,
    z: impl Fn(T) -> T,
    z_dd: impl Fn(T) -> T,
    x: T,
    h: T,
) -> T {
    let (alpha, beta) = to_standard(cs);
    let mut values = T::zero();
    let mut accels = T::zero();
    for (j, (al, be)) in alpha.into_iter().zip(beta).enumerate() {
        let xj = x.clone() + T::from_usize(j).expect("small integer") * h.clone();
        values = values + al * z(xj.clone());
        accels = accels + be * z_dd(xj);
    }
    values - h.clone() * h * accels
}

/// Outcome of checking hypotheses I-IV on a coefficient set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub symmetric: bool,
    pub consistent: bool,
    pub zero_stable: bool,
    /// Approximate: no root of rho lies within `1e-8` of a root of sigma.
    pub rho_sigma_coprime: bool,
    pub hypothesis_i: bool,
    pub messages: Vec<String>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.symmetric && self.consistent && self.zero_stable && self.rho_sigma_coprime && self.hypothesis_i
    }
}

pub fn validate<T: Real>(cs: &CoefficientSet<T>) -> Result<ValidationReport> {
    if cs.a.iter().chain(&cs.b).all(|v| v.is_zero()) {
        return Err(Error::InvalidMethod("all coefficients are zero".into()));
    }
    let (alpha, beta) = to_standard(cs);
    let mut messages = Vec::new();

    // symmetric by construction of the centered representation
    let symmetric = (0..=cs.step_number).all(|i| alpha[i] == alpha[cs.step_number - i] && beta[i] == beta[cs.step_number - i]);

    let leading = alpha[cs.step_number];
    let hypothesis_i = (leading - T::one()).abs() <= T::zero_tolerance()
        && (alpha[0].abs() + beta[0].abs()) > T::zero()
        && beta.iter().any(|b| !b.is_zero());
    if !hypothesis_i {
        messages.push(format!("hypothesis I fails: alpha_J = {:e}", leading.to_f64_lossy()));
    }

    let scale = alpha.iter().chain(&beta).fold(T::one(), |acc, v| acc + v.abs());
    let tol = T::zero_tolerance() * scale;
    let rho1 = alpha.iter().fold(T::zero(), |acc, &v| acc + v);
    let drho1 = alpha.iter().enumerate().fold(T::zero(), |acc, (j, &v)| acc + T::from_usize(j).unwrap() * v);
    let ddrho1 = alpha
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (j, &v)| acc + T::from_usize(j * j.saturating_sub(1)).unwrap() * v);
    let sigma1 = beta.iter().fold(T::zero(), |acc, &v| acc + v);
    let two = T::from_f64_lossy(2.0);
    let mut consistent = true;
    for (name, value) in [("rho(1)", rho1), ("rho'(1)", drho1), ("rho''(1) - 2 sigma(1)", ddrho1 - two * sigma1)] {
        if value.abs() > tol {
            consistent = false;
            messages.push(format!("consistency fails: {name} = {:e}", value.to_f64_lossy()));
        }
    }

    let rho_roots = poly::roots(&alpha)?;
    let zero_stable = zero_stability(&rho_roots, &mut messages);

    let sigma_roots = poly::roots(&beta)?;
    let coprime_tol = T::from_f64_lossy(1e-8);
    let mut rho_sigma_coprime = true;
    for r in &rho_roots {
        if let Some(s) = sigma_roots.iter().find(|s| modulus(**s - *r) < coprime_tol) {
            rho_sigma_coprime = false;
            messages.push(format!(
                "warning: rho and sigma share a root near {:.6}{:+.6}i",
                s.re.to_f64_lossy(),
                s.im.to_f64_lossy()
            ));
            break;
        }
    }

    Ok(ValidationReport { symmetric, consistent, zero_stable, rho_sigma_coprime, hypothesis_i, messages })
}

fn zero_stability<T: Real>(roots: &[num_complex::Complex<T>], messages: &mut Vec<String>) -> bool {
    let circle = circle_tolerance::<T>();
    let one = T::one();
    let mut stable = true;
    for group in poly::clusters(roots, cluster_tolerance::<T>()) {
        let n = T::from_usize(group.len()).unwrap();
        let centre = group.iter().fold(num_complex::Complex::new(T::zero(), T::zero()), |acc, z| acc + *z) / n;
        let radius = modulus(centre);
        let at_plus_one = modulus(centre - num_complex::Complex::new(one, T::zero())) < cluster_tolerance::<T>();
        if at_plus_one {
            if group.len() != 2 {
                stable = false;
                messages.push(format!("root +1 has multiplicity {} (expected exactly 2)", group.len()));
            }
            continue;
        }
        if radius > one + circle {
            stable = false;
            messages.push(format!("root of rho outside the unit disk: |z| = {:.6}", radius.to_f64_lossy()));
        } else if (radius - one).abs() <= circle && group.len() > 1 {
            stable = false;
            messages.push(format!(
                "repeated root of rho on the unit circle near {:.6}{:+.6}i",
                centre.re.to_f64_lossy(),
                centre.im.to_f64_lossy()
            ));
        }
    }
    stable
}
