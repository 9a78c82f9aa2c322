//! Forward-mode automatic differentiation.
//!
//! Residuals are written once, generic over [`Scalar`], and evaluated either
//! on plain `f64` or on [`Dual`] numbers carrying `L` directional derivatives
//! at once. Seeding `L` columns per pass is how the Jacobian is assembled.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// Number type the model residual can be evaluated on.
pub trait Scalar:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + Send
    + Sync
{
    fn constant(value: f64) -> Self;
    fn value(&self) -> f64;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sinh(self) -> Self;
    fn exp(self) -> Self;
    /// Applies a scalar function whose value `f` and derivative `df` at
    /// `self.value()` are already known.
    fn chain(self, f: f64, df: f64) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn constant(value: f64) -> Self {
        value
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn sinh(self) -> Self {
        f64::sinh(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn chain(self, f: f64, _df: f64) -> Self {
        f
    }
}

/// Dual number with `L` derivative lanes.
#[derive(Clone, Copy, PartialEq)]
pub struct Dual<const L: usize> {
    pub re: f64,
    pub eps: [f64; L],
}

impl<const L: usize> Dual<L> {
    pub fn new(re: f64, eps: [f64; L]) -> Self {
        Self { re, eps }
    }

    /// A variable seeded with a unit derivative in `lane`.
    pub fn variable(re: f64, lane: usize) -> Self {
        let mut eps = [0.0; L];
        eps[lane] = 1.0;
        Self { re, eps }
    }

    #[inline]
    fn scaled(self, re: f64, factor: f64) -> Self {
        let mut eps = self.eps;
        for e in &mut eps {
            *e *= factor;
        }
        Self { re, eps }
    }
}

impl<const L: usize> fmt::Debug for Dual<L> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dual({:?}, {:?})", self.re, self.eps)
    }
}

impl<const L: usize> Add for Dual<L> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps) {
            *e += r;
        }
        Self {
            re: self.re + rhs.re,
            eps,
        }
    }
}

impl<const L: usize> Sub for Dual<L> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps) {
            *e -= r;
        }
        Self {
            re: self.re - rhs.re,
            eps,
        }
    }
}

impl<const L: usize> Mul for Dual<L> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [0.0; L];
        for i in 0..L {
            eps[i] = self.eps[i] * rhs.re + self.re * rhs.eps[i];
        }
        Self {
            re: self.re * rhs.re,
            eps,
        }
    }
}

impl<const L: usize> Div for Dual<L> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.re;
        let re = self.re * inv;
        let mut eps = [0.0; L];
        for i in 0..L {
            eps[i] = (self.eps[i] - re * rhs.eps[i]) * inv;
        }
        Self { re, eps }
    }
}

impl<const L: usize> Neg for Dual<L> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.scaled(-self.re, -1.0)
    }
}

impl<const L: usize> Add<f64> for Dual<L> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: f64) -> Self {
        Self {
            re: self.re + rhs,
            eps: self.eps,
        }
    }
}

impl<const L: usize> Sub<f64> for Dual<L> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: f64) -> Self {
        Self {
            re: self.re - rhs,
            eps: self.eps,
        }
    }
}

impl<const L: usize> Mul<f64> for Dual<L> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        self.scaled(self.re * rhs, rhs)
    }
}

impl<const L: usize> Div<f64> for Dual<L> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        let inv = 1.0 / rhs;
        self.scaled(self.re * inv, inv)
    }
}

impl<const L: usize> AddAssign for Dual<L> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<const L: usize> SubAssign for Dual<L> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<const L: usize> Scalar for Dual<L> {
    #[inline]
    fn constant(value: f64) -> Self {
        Self {
            re: value,
            eps: [0.0; L],
        }
    }
    #[inline]
    fn value(&self) -> f64 {
        self.re
    }
    #[inline]
    fn ln(self) -> Self {
        self.scaled(self.re.ln(), 1.0 / self.re)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.scaled(s, 0.5 / s)
    }
    #[inline]
    fn sinh(self) -> Self {
        self.scaled(self.re.sinh(), self.re.cosh())
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.scaled(e, e)
    }
    #[inline]
    fn chain(self, f: f64, df: f64) -> Self {
        self.scaled(f, df)
    }
}
