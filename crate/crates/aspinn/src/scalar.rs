//! Scalar abstraction over `f64` and forward-mode dual numbers.
//!
//! The model and residual evaluation pipelines are generic over [`Scalar`],
//! so the same code path produces plain values (`f64`) and parameter
//! derivatives (`Dual<K>` with one tangent slot per trainable scalar of a
//! node).

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic interface shared by `f64` and [`Dual`].
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn exp(self) -> Self;
    /// Real (value) part.
    fn re(self) -> f64;
    /// Clamp the value part to `[-lim, lim]`; tangents of a clamped value
    /// are zeroed. Returns the clamped scalar and whether clamping fired.
    fn clamp_sym(self, lim: f64) -> (Self, bool);
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn clamp_sym(self, lim: f64) -> (Self, bool) {
        if self.abs() > lim {
            (self.clamp(-lim, lim), true)
        } else {
            (self, false)
        }
    }
}

/// Forward-mode dual number with `K` independent tangent directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const K: usize> {
    pub re: f64,
    pub eps: [f64; K],
}

impl<const K: usize> Dual<K> {
    #[inline]
    pub fn constant(v: f64) -> Self {
        Self { re: v, eps: [0.0; K] }
    }

    /// A variable seeded in tangent slot `slot`.
    #[inline]
    pub fn seeded(v: f64, slot: usize) -> Self {
        let mut eps = [0.0; K];
        eps[slot] = 1.0;
        Self { re: v, eps }
    }
}

impl<const K: usize> Add for Dual<K> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps.iter()) {
            *e += r;
        }
        Self { re: self.re + rhs.re, eps }
    }
}

impl<const K: usize> Sub for Dual<K> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps.iter()) {
            *e -= r;
        }
        Self { re: self.re - rhs.re, eps }
    }
}

impl<const K: usize> Mul for Dual<K> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [0.0; K];
        for i in 0..K {
            eps[i] = self.eps[i] * rhs.re + self.re * rhs.eps[i];
        }
        Self { re: self.re * rhs.re, eps }
    }
}

impl<const K: usize> Div for Dual<K> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.re;
        let re = self.re * inv;
        let mut eps = [0.0; K];
        for i in 0..K {
            eps[i] = (self.eps[i] - re * rhs.eps[i]) * inv;
        }
        Self { re, eps }
    }
}

impl<const K: usize> Neg for Dual<K> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e = -*e;
        }
        Self { re: -self.re, eps }
    }
}

impl<const K: usize> Scalar for Dual<K> {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Self::constant(v)
    }
    #[inline]
    fn exp(self) -> Self {
        let ev = self.re.exp();
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e *= ev;
        }
        Self { re: ev, eps }
    }
    #[inline]
    fn re(self) -> f64 {
        self.re
    }
    #[inline]
    fn clamp_sym(self, lim: f64) -> (Self, bool) {
        if self.re.abs() > lim {
            (Self::constant(self.re.clamp(-lim, lim)), true)
        } else {
            (self, false)
        }
    }
}
