//! Scalar abstractions.
//!
//! [`Scalar`] covers the field operations needed by coefficient algebra
//! (moment systems, error constants) and is implemented for `f32`, `f64`,
//! [`DoubleDouble`](crate::DoubleDouble) and [`Rational`](crate::Rational).
//! [`Real`] adds the transcendental functions needed for trigonometric
//! fitting, root finding and phase analysis; it excludes exact rationals.

use std::fmt::Debug;
use std::ops::Neg;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, NumAssignOps, Signed, ToPrimitive};

pub trait Scalar:
    Clone + Debug + PartialOrd + Num + Neg<Output = Self> + Signed + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Relative threshold below which a computed moment counts as zero.
    ///
    /// Exact types return zero, so only exact cancellation qualifies.
    fn zero_tolerance() -> Self;

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite value representable in scalar type")
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num).expect("integer conversion") / Self::from_i64(den).expect("integer conversion")
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn factorial(n: u32) -> Self {
        (2..=n).fold(Self::one(), |acc, k| acc * Self::from_u32(k).expect("integer conversion"))
    }

    /// `self^n` by repeated squaring; `0^0 = 1`.
    fn powu(&self, mut n: u32) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one();
        while n > 0 {
            if n & 1 == 1 {
                acc = acc * base.clone();
            }
            n >>= 1;
            if n > 0 {
                base = base.clone() * base;
            }
        }
        acc
    }
}

pub trait Real: Scalar + Copy + NumAssignOps {
    fn epsilon() -> Self;
    fn pi() -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn atan2(self, other: Self) -> Self;
    fn is_finite(self) -> bool;

    fn sin_cos(self) -> (Self, Self) {
        (self.sin(), self.cos())
    }

    fn hypot(self, other: Self) -> Self {
        let (a, b) = (self.abs(), other.abs());
        let (big, small) = if a >= b { (a, b) } else { (b, a) };
        if big.is_zero() {
            return big;
        }
        let ratio = small / big;
        big * (Self::one() + ratio * ratio).sqrt()
    }

    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

macro_rules! impl_native {
    ($t:ty, $tol:expr) => {
        impl Scalar for $t {
            fn zero_tolerance() -> Self {
                $tol
            }
        }

        impl Real for $t {
            fn epsilon() -> Self {
                <$t>::EPSILON
            }
            fn pi() -> Self {
                std::f64::consts::PI as $t
            }
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            fn sin(self) -> Self {
                <$t>::sin(self)
            }
            fn cos(self) -> Self {
                <$t>::cos(self)
            }
            fn sin_cos(self) -> (Self, Self) {
                <$t>::sin_cos(self)
            }
            fn atan2(self, other: Self) -> Self {
                <$t>::atan2(self, other)
            }
            fn hypot(self, other: Self) -> Self {
                <$t>::hypot(self, other)
            }
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
        }
    };
}

impl_native!(f64, 1e-9);
impl_native!(f32, 1e-4);

impl Scalar for BigRational {
    fn zero_tolerance() -> Self {
        BigRational::from_integer(BigInt::from(0))
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
}

/// Threshold on `| |z| - 1 |` for a root to count as lying on the unit circle.
pub(crate) fn circle_tolerance<T: Real>() -> T {
    T::from_f64_lossy(1e-8).max(T::epsilon() * T::from_f64_lossy(100.0))
}

/// Distance below which two roots are treated as one repeated root.
pub(crate) fn cluster_tolerance<T: Real>() -> T {
    T::from_f64_lossy(1e-6).max(T::epsilon().sqrt() * T::from_f64_lossy(10.0))
}
