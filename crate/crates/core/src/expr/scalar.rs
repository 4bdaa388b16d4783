//! Number types the expression evaluator is generic over.
//!
//! `f64` gives plain values, [`Dual`] carries one directional first
//! derivative and [`Jet`] carries first and second derivatives along a
//! single direction (truncated Taylor arithmetic).

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(&self) -> f64;
    /// True when every carried component is finite.
    fn all_finite(&self) -> bool;
    /// True when the derivative part is identically zero.
    fn is_constant(&self) -> bool;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn sech(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    /// `self^c` for a constant exponent.
    fn powc(self, c: f64) -> Self;
}

pub(crate) fn sech_f64(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

fn powc_f64(x: f64, c: f64) -> f64 {
    if c.fract() == 0.0 && c.abs() <= 64.0 {
        x.powi(c as i32)
    } else {
        x.powf(c)
    }
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
    fn is_constant(&self) -> bool {
        true
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn sech(self) -> Self {
        sech_f64(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn powc(self, c: f64) -> Self {
        powc_f64(self, c)
    }
}

/// Forward-mode dual number `v + d ε`, `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn new(v: f64, d: f64) -> Self {
        Self { v, d }
    }
    pub fn var(v: f64) -> Self {
        Self { v, d: 1.0 }
    }
    fn chain(self, f: f64, df: f64) -> Self {
        Self { v: f, d: df * self.d }
    }
}

impl Add for Dual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.v + o.v, self.d + o.d)
    }
}
impl Sub for Dual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.v - o.v, self.d - o.d)
    }
}
impl Mul for Dual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.v * o.v, self.d * o.v + self.v * o.d)
    }
}
impl Div for Dual {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.v / o.v;
        Self::new(q, (self.d - q * o.d) / o.v)
    }
}
impl Neg for Dual {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.v, -self.d)
    }
}

impl Scalar for Dual {
    fn constant(v: f64) -> Self {
        Self { v, d: 0.0 }
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn all_finite(&self) -> bool {
        self.v.is_finite() && self.d.is_finite()
    }
    fn is_constant(&self) -> bool {
        self.d == 0.0
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v)
    }
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn tanh(self) -> Self {
        let th = self.v.tanh();
        let sh = sech_f64(self.v);
        self.chain(th, sh * sh)
    }
    fn sech(self) -> Self {
        let sh = sech_f64(self.v);
        self.chain(sh, -sh * self.v.tanh())
    }
    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        if self.d == 0.0 {
            return Self::constant(r);
        }
        self.chain(r, 0.5 / r)
    }
    fn abs(self) -> Self {
        self.chain(self.v.abs(), sign(self.v))
    }
    fn powc(self, c: f64) -> Self {
        if self.d == 0.0 {
            return Self::constant(powc_f64(self.v, c));
        }
        self.chain(powc_f64(self.v, c), c * powc_f64(self.v, c - 1.0))
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Second-order jet: value, first and second derivative along one direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub fn new(v: f64, d1: f64, d2: f64) -> Self {
        Self { v, d1, d2 }
    }
    pub fn var(v: f64) -> Self {
        Self { v, d1: 1.0, d2: 0.0 }
    }
    /// Compose with a scalar function given its value and first two derivatives.
    fn chain(self, f: f64, df: f64, ddf: f64) -> Self {
        Self {
            v: f,
            d1: df * self.d1,
            d2: ddf * self.d1 * self.d1 + df * self.d2,
        }
    }
}

impl Add for Jet {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)
    }
}
impl Sub for Jet {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2)
    }
}
impl Mul for Jet {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.v * o.v,
            self.d1 * o.v + self.v * o.d1,
            self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        )
    }
}
impl Div for Jet {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let w = self.v / o.v;
        let w1 = (self.d1 - w * o.d1) / o.v;
        let w2 = (self.d2 - 2.0 * w1 * o.d1 - w * o.d2) / o.v;
        Self::new(w, w1, w2)
    }
}
impl Neg for Jet {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.v, -self.d1, -self.d2)
    }
}

impl Scalar for Jet {
    fn constant(v: f64) -> Self {
        Self { v, d1: 0.0, d2: 0.0 }
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn all_finite(&self) -> bool {
        self.v.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
    fn is_constant(&self) -> bool {
        self.d1 == 0.0 && self.d2 == 0.0
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(self.v.ln(), r, -r * r)
    }
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }
    fn tanh(self) -> Self {
        let th = self.v.tanh();
        let sh2 = sech_f64(self.v).powi(2);
        self.chain(th, sh2, -2.0 * th * sh2)
    }
    fn sech(self) -> Self {
        let sh = sech_f64(self.v);
        let th = self.v.tanh();
        self.chain(sh, -sh * th, sh * th * th - sh * sh * sh)
    }
    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        if self.is_constant() {
            return Self::constant(r);
        }
        self.chain(r, 0.5 / r, -0.25 / (r * self.v))
    }
    fn abs(self) -> Self {
        self.chain(self.v.abs(), sign(self.v), 0.0)
    }
    fn powc(self, c: f64) -> Self {
        if self.is_constant() {
            return Self::constant(powc_f64(self.v, c));
        }
        self.chain(
            powc_f64(self.v, c),
            c * powc_f64(self.v, c - 1.0),
            c * (c - 1.0) * powc_f64(self.v, c - 2.0),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_second_derivative_of_tanh() {
        // d²/dt² tanh(t) = -2 tanh(t) sech²(t)
        let t = 0.7;
        let j = Jet::var(t).tanh();
        let expected = -2.0 * t.tanh() * sech_f64(t).powi(2);
        assert!((j.d2 - expected).abs() < 1e-14);
    }

    #[test]
    fn jet_quotient_matches_product_rule() {
        let x = Jet::var(1.3);
        let q = Jet::constant(1.0) / (x * x);
        // 1/x² -> -2/x³, 6/x⁴
        assert!((q.d1 + 2.0 / 1.3f64.powi(3)).abs() < 1e-13);
        assert!((q.d2 - 6.0 / 1.3f64.powi(4)).abs() < 1e-12);
    }

    #[test]
    fn sech_is_stable_for_large_arguments() {
        assert_eq!(sech_f64(800.0), 0.0);
        assert!((sech_f64(0.0) - 1.0).abs() < 1e-16);
        assert!(sech_f64(-3.0) > 0.0);
    }
}
