//! Second-order jets in two variables, used to differentiate closed-form
//! potentials exactly.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Numbers that potentials can be evaluated on: plain floats or jets.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    /// Composes with a scalar function given by its value and first two
    /// derivatives at `self.value()`.
    fn lift(self, f: f64, f1: f64, f2: f64) -> Self;
    fn recip(self) -> Self {
        Self::cst(1.0) / self
    }
    fn scale(self, s: f64) -> Self {
        self * Self::cst(s)
    }
    fn acosh(self) -> Self {
        let v = self.value();
        let d = (v * v - 1.0).sqrt();
        self.lift(v.acosh(), 1.0 / d, -v / (d * d * d))
    }
    fn ln(self) -> Self {
        let v = self.value();
        self.lift(v.ln(), 1.0 / v, -1.0 / (v * v))
    }
    fn powi(self, n: i32) -> Self {
        let v = self.value();
        let nf = n as f64;
        let f1 = if n == 0 { 0.0 } else { nf * v.powi(n - 1) };
        let f2 = if n == 0 || n == 1 { 0.0 } else { nf * (nf - 1.0) * v.powi(n - 2) };
        self.lift(v.powi(n), f1, f2)
    }
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn lift(self, f: f64, _: f64, _: f64) -> Self {
        f
    }
    fn recip(self) -> Self {
        1.0 / self
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

/// Value, gradient and Hessian of a function of `(k1, k2)` at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub v: f64,
    pub g: [f64; 2],
    /// `[h11, h12, h22]`
    pub h: [f64; 3],
}

impl Jet2 {
    pub fn constant(v: f64) -> Self {
        Self { v, g: [0.0; 2], h: [0.0; 3] }
    }

    /// The coordinate function `k_i` at the value `at`.
    pub fn variable(i: usize, at: f64) -> Self {
        let mut g = [0.0; 2];
        g[i] = 1.0;
        Self { v: at, g, h: [0.0; 3] }
    }

    /// Chain rule with a scalar function given by its value and two derivatives.
    pub fn chain(self, f: f64, f1: f64, f2: f64) -> Self {
        let [g1, g2] = self.g;
        Self {
            v: f,
            g: [f1 * g1, f1 * g2],
            h: [
                f1 * self.h[0] + f2 * g1 * g1,
                f1 * self.h[1] + f2 * g1 * g2,
                f1 * self.h[2] + f2 * g2 * g2,
            ],
        }
    }

    pub fn hessian(&self) -> [[f64; 2]; 2] {
        [[self.h[0], self.h[1]], [self.h[1], self.h[2]]]
    }
}

impl Add for Jet2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            v: self.v + o.v,
            g: [self.g[0] + o.g[0], self.g[1] + o.g[1]],
            h: [self.h[0] + o.h[0], self.h[1] + o.h[1], self.h[2] + o.h[2]],
        }
    }
}

impl Sub for Jet2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Neg for Jet2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self { v: -self.v, g: [-self.g[0], -self.g[1]], h: [-self.h[0], -self.h[1], -self.h[2]] }
    }
}

impl Mul for Jet2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (a, b) = (self, o);
        Self {
            v: a.v * b.v,
            g: [a.v * b.g[0] + b.v * a.g[0], a.v * b.g[1] + b.v * a.g[1]],
            h: [
                a.v * b.h[0] + 2.0 * a.g[0] * b.g[0] + b.v * a.h[0],
                a.v * b.h[1] + a.g[0] * b.g[1] + a.g[1] * b.g[0] + b.v * a.h[1],
                a.v * b.h[2] + 2.0 * a.g[1] * b.g[1] + b.v * a.h[2],
            ],
        }
    }
}

impl Div for Jet2 {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl Scalar for Jet2 {
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    fn value(self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn lift(self, f: f64, f1: f64, f2: f64) -> Self {
        self.chain(f, f1, f2)
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
    fn scale(self, s: f64) -> Self {
        Self {
            v: self.v * s,
            g: [self.g[0] * s, self.g[1] * s],
            h: [self.h[0] * s, self.h[1] * s, self.h[2] * s],
        }
    }
}
