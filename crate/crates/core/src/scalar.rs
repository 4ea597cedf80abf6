//! Scalar abstraction shared by the map, orbit and condition code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the laboratory can run on: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only for types that cannot hold finite `f64`s.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Reduces onto the circle `[0, 1)`.
    #[inline]
    fn wrap_unit(self) -> Self {
        let r = self - self.floor();
        // `x - floor(x)` can round up to exactly 1 for tiny negative x.
        if r >= Self::one() {
            Self::zero()
        } else {
            r
        }
    }

    /// Lifts a difference of circle points into `(-1/2, 1/2]`.
    #[inline]
    fn wrap_signed(self) -> Self {
        let half = Self::lit(0.5);
        let r = self.wrap_unit();
        if r > half {
            r - Self::one()
        } else {
            r
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Numerically stable running log-sum-exp.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp<T> {
    max: T,
    acc: T,
}

impl<T: Scalar> Default for LogSumExp<T> {
    fn default() -> Self {
        Self { max: T::neg_infinity(), acc: T::zero() }
    }
}

impl<T: Scalar> LogSumExp<T> {
    pub fn push(&mut self, v: T) {
        if v == T::neg_infinity() {
            return;
        }
        if v.is_infinite() || v.is_nan() {
            self.max = v;
            self.acc = T::one();
            return;
        }
        if v > self.max {
            self.acc = self.acc * (self.max - v).exp() + T::one();
            self.max = v;
        } else {
            self.acc = self.acc + (v - self.max).exp();
        }
    }

    pub fn value(&self) -> T {
        if self.max == T::neg_infinity() || self.max.is_infinite() || self.max.is_nan() {
            return self.max;
        }
        self.max + self.acc.ln()
    }
}

/// A real number stored as `sign · exp(log_abs)`, used where magnitudes overflow.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SignedLog<T> {
    pub log_abs: T,
    pub sign: i8,
}

impl<T: Scalar> SignedLog<T> {
    pub fn one() -> Self {
        Self { log_abs: T::zero(), sign: 1 }
    }

    pub fn from_value(v: T) -> Self {
        Self { log_abs: v.abs().ln(), sign: if v < T::zero() { -1 } else { 1 } }
    }

    pub fn to_value(self) -> T {
        let m = self.log_abs.exp();
        if self.sign < 0 {
            -m
        } else {
            m
        }
    }

    pub fn mul(self, log_abs: T, sign: i8) -> Self {
        Self { log_abs: self.log_abs + log_abs, sign: self.sign * sign }
    }

    /// Returns `1 + self`.
    pub fn one_plus(self) -> Self {
        let s = T::lit(self.sign as f64);
        if self.log_abs < T::zero() {
            // |self| < 1 so 1 + self > 0
            Self { log_abs: (s * self.log_abs.exp()).ln_1p(), sign: 1 }
        } else {
            let inner = T::one() + s * (-self.log_abs).exp();
            if inner == T::zero() {
                return Self { log_abs: T::neg_infinity(), sign: 1 };
            }
            Self { log_abs: self.log_abs + (s * (-self.log_abs).exp()).ln_1p(), sign: self.sign }
        }
    }
}
