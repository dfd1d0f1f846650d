//! Double-double arithmetic (an unevaluated sum `hi + lo` of two `f64`).
//!
//! Roughly 106 bits of significand. Used where phase-lag and truncation
//! quantities of size `1e-20` must be resolved against `O(1)` coefficients.

use std::cmp::Ordering;
use std::fmt;
use std::num::ParseFloatError;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};

use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};

use crate::scalar::{Real, Scalar};

#[derive(Clone, Copy, Default, PartialEq)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

const PI: DoubleDouble = DoubleDouble { hi: std::f64::consts::PI, lo: 1.224_646_799_147_353_2e-16 };
const FRAC_PI_2: DoubleDouble = DoubleDouble { hi: std::f64::consts::FRAC_PI_2, lo: 6.123_233_995_736_766e-17 };
const EPS: f64 = 4.930380657631324e-32; // 2^-104

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const fn new(hi: f64, lo: f64) -> Self {
        Self { hi, lo }
    }

    pub fn from_parts(hi: f64, lo: f64) -> Self {
        let (hi, lo) = two_sum(hi, lo);
        Self { hi, lo }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    fn mul_f64(self, b: f64) -> Self {
        let (p1, p2) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p1, p2 + self.lo * b);
        Self { hi, lo }
    }

    fn sqr(self) -> Self {
        self * self
    }

    pub fn trunc(self) -> Self {
        let hi = self.hi.trunc();
        if hi == self.hi {
            let (hi, lo) = quick_two_sum(hi, self.lo.trunc());
            // trunc of a sum whose parts have opposite sign can overshoot by one
            let r = Self { hi, lo };
            if self.hi > 0.0 && r > self {
                r - Self::one()
            } else if self.hi < 0.0 && r < self {
                r + Self::one()
            } else {
                r
            }
        } else {
            Self { hi, lo: 0.0 }
        }
    }

    /// Taylor series of sin and cos on |x| <= pi/4.
    fn sin_cos_reduced(x: Self) -> (Self, Self) {
        let x2 = x.sqr();
        let mut term = x;
        let mut sin = x;
        let mut k = 1.0;
        while term.hi.abs() > EPS * 1e-3 {
            term = -(term * x2) / Self::from((k + 1.0) * (k + 2.0));
            sin += term;
            k += 2.0;
        }
        let mut term = Self::one();
        let mut cos = Self::one();
        let mut k = 0.0;
        while term.hi.abs() > EPS * 1e-3 {
            term = -(term * x2) / Self::from((k + 1.0) * (k + 2.0));
            cos += term;
            k += 2.0;
        }
        (sin, cos)
    }

    fn parse_decimal(s: &str) -> Option<Self> {
        let s = s.trim();
        let (negative, body) = match s.as_bytes().first()? {
            b'-' => (true, &s[1..]),
            b'+' => (false, &s[1..]),
            _ => (false, s),
        };
        let (mantissa, exponent) = match body.find(['e', 'E']) {
            Some(i) => (&body[..i], body[i + 1..].parse::<i32>().ok()?),
            None => (body, 0),
        };
        let mut value = Self::zero();
        let mut scale = exponent;
        let mut seen_point = false;
        let mut digits = 0;
        for ch in mantissa.chars() {
            match ch {
                '0'..='9' => {
                    value = value * Self::from(10.0) + Self::from(f64::from(ch as u8 - b'0'));
                    digits += 1;
                    if seen_point {
                        scale -= 1;
                    }
                }
                '.' if !seen_point => seen_point = true,
                _ => return None,
            }
        }
        if digits == 0 {
            return None;
        }
        let ten = Self::from(10.0);
        let factor = ten.powu(scale.unsigned_abs());
        value = if scale >= 0 { value * factor } else { value / factor };
        Some(if negative { -value } else { value })
    }
}

impl From<f64> for DoubleDouble {
    fn from(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }
}

impl fmt::Debug for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DoubleDouble({:e} + {:e})", self.hi, self.lo)
    }
}

impl fmt::Display for DoubleDouble {
    /// Scientific notation with 32 significant digits.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.hi.is_finite() {
            return write!(f, "{}", self.hi);
        }
        if self.hi == 0.0 {
            return write!(f, "0e0");
        }
        let mut x = self.abs();
        let mut exp = self.hi.abs().log10().floor() as i32;
        let ten = Self::from(10.0);
        x = if exp >= 0 { x / ten.powu(exp as u32) } else { x * ten.powu((-exp) as u32) };
        if x.hi >= 10.0 {
            x /= ten;
            exp += 1;
        } else if x.hi < 1.0 {
            x *= ten;
            exp -= 1;
        }
        let mut digits = Vec::with_capacity(32);
        for _ in 0..32 {
            let d = x.hi.floor().clamp(0.0, 9.0);
            digits.push(d as u8);
            x = (x - Self::from(d)) * ten;
        }
        let sign = if self.hi < 0.0 { "-" } else { "" };
        let tail: String = digits[1..].iter().map(|d| char::from(b'0' + d)).collect();
        write!(f, "{sign}{}.{tail}e{exp}", digits[0])
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            ord => Some(ord),
        }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, b: Self) -> Self {
        let (s1, s2) = two_sum(self.hi, b.hi);
        let (t1, t2) = two_sum(self.lo, b.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2 + t2);
        Self { hi, lo }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, b: Self) -> Self {
        self + (-b)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, b: Self) -> Self {
        let (p1, p2) = two_prod(self.hi, b.hi);
        let (hi, lo) = quick_two_sum(p1, p2 + (self.hi * b.lo + self.lo * b.hi));
        Self { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, b: Self) -> Self {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo } + Self::from(q3)
    }
}

impl Rem for DoubleDouble {
    type Output = Self;
    fn rem(self, b: Self) -> Self {
        self - (self / b).trunc() * b
    }
}

macro_rules! assign_ops {
    ($($tr:ident $m:ident $op:tt),*) => {$(
        impl $tr for DoubleDouble {
            fn $m(&mut self, rhs: Self) {
                *self = *self $op rhs;
            }
        }
    )*};
}
assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /, RemAssign rem_assign %);

impl Zero for DoubleDouble {
    fn zero() -> Self {
        Self::default()
    }
    fn is_zero(&self) -> bool {
        self.hi == 0.0
    }
}

impl One for DoubleDouble {
    fn one() -> Self {
        Self::from(1.0)
    }
}

impl Num for DoubleDouble {
    type FromStrRadixErr = ParseFloatError;

    fn from_str_radix(s: &str, radix: u32) -> Result<Self, ParseFloatError> {
        match (radix, Self::parse_decimal(s)) {
            (10, Some(v)) => Ok(v),
            // reuse the std error value for malformed input
            _ => Err("not a number".parse::<f64>().unwrap_err()),
        }
    }
}

impl Signed for DoubleDouble {
    fn abs(&self) -> Self {
        if self.hi < 0.0 {
            -*self
        } else {
            *self
        }
    }
    fn abs_sub(&self, other: &Self) -> Self {
        if *self <= *other {
            Self::zero()
        } else {
            *self - *other
        }
    }
    fn signum(&self) -> Self {
        if self.hi > 0.0 {
            Self::one()
        } else if self.hi < 0.0 {
            -Self::one()
        } else {
            Self::zero()
        }
    }
    fn is_positive(&self) -> bool {
        self.hi > 0.0
    }
    fn is_negative(&self) -> bool {
        self.hi < 0.0
    }
}

impl FromPrimitive for DoubleDouble {
    fn from_i64(n: i64) -> Option<Self> {
        let hi = n as f64;
        let lo = (i128::from(n) - hi as i128) as f64;
        Some(Self::from_parts(hi, lo))
    }
    fn from_u64(n: u64) -> Option<Self> {
        let hi = n as f64;
        let lo = (i128::from(n) - hi as i128) as f64;
        Some(Self::from_parts(hi, lo))
    }
    fn from_f64(x: f64) -> Option<Self> {
        Some(Self::from(x))
    }
}

impl ToPrimitive for DoubleDouble {
    fn to_i64(&self) -> Option<i64> {
        let t = self.trunc();
        let v = t.hi as i128 + t.lo as i128;
        i64::try_from(v).ok()
    }
    fn to_u64(&self) -> Option<u64> {
        let t = self.trunc();
        let v = t.hi as i128 + t.lo as i128;
        u64::try_from(v).ok()
    }
    fn to_f64(&self) -> Option<f64> {
        Some(self.hi + self.lo)
    }
}

impl Scalar for DoubleDouble {
    fn zero_tolerance() -> Self {
        Self::from(1e-9)
    }
}

impl Real for DoubleDouble {
    fn epsilon() -> Self {
        Self::from(EPS)
    }

    fn pi() -> Self {
        PI
    }

    fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return if self.hi == 0.0 { Self::zero() } else { Self::from(f64::NAN) };
        }
        let x = 1.0 / self.hi.sqrt();
        let ax = self.hi * x;
        Self::from(ax) + Self::from((self - Self::from(ax).sqr()).hi * (x * 0.5))
    }

    fn sin(self) -> Self {
        self.sin_cos().0
    }

    fn cos(self) -> Self {
        self.sin_cos().1
    }

    fn sin_cos(self) -> (Self, Self) {
        if !self.hi.is_finite() {
            return (Self::from(f64::NAN), Self::from(f64::NAN));
        }
        let k = (self.hi / FRAC_PI_2.hi).round();
        let r = self - FRAC_PI_2.mul_f64(k);
        let (s, c) = Self::sin_cos_reduced(r);
        match (k as i64).rem_euclid(4) {
            0 => (s, c),
            1 => (c, -s),
            2 => (-s, -c),
            _ => (-c, s),
        }
    }

    fn atan2(self, x: Self) -> Self {
        let y = self;
        if y.is_zero() && x.is_zero() {
            return Self::zero();
        }
        let mut z = Self::from(y.hi.atan2(x.hi));
        for _ in 0..2 {
            let (s, c) = z.sin_cos();
            z += (y * c - x * s) / (x * c + y * s);
        }
        z
    }

    fn is_finite(self) -> bool {
        self.hi.is_finite()
    }
}
