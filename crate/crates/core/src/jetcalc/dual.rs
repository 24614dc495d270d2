//! Second-order forward-mode automatic differentiation.
//!
//! [`Dual2`] carries a value, its gradient and its (packed, symmetric) Hessian
//! with respect to up to [`MAX_DIM`] real input variables. Every arithmetic
//! operation propagates all three through the chain rule, so evaluating a
//! scalar field once on `Dual2` inputs yields its full 2-jet.
//!
//! The value component of every operation is computed with exactly the same
//! floating point expression as the plain `f64` implementation of
//! [`Scalar`], so derivative-free and differentiated evaluations of the same
//! generic formula agree bit for bit.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Largest supported number of real variables.
pub const MAX_DIM: usize = 12;
const TRI: usize = MAX_DIM * (MAX_DIM + 1) / 2;

#[inline]
fn tri(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Packed index of the Hessian entry `(i, j)`.
#[inline]
pub fn packed(i: usize, j: usize) -> usize {
    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
    hi * (hi + 1) / 2 + lo
}

/// Arithmetic needed by the scene formulas; implemented by `f64` and [`Dual2`].
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
{
    fn cst(x: f64) -> Self;
    fn value(&self) -> f64;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn cst(x: f64) -> Self {
        x
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
}

/// Value, gradient and Hessian of a scalar quantity.
#[derive(Clone, Copy, Debug)]
pub struct Dual2 {
    pub v: f64,
    g: [f64; MAX_DIM],
    h: [f64; TRI],
    n: usize,
}

impl Dual2 {
    pub fn constant(v: f64) -> Self {
        Dual2 {
            v,
            g: [0.0; MAX_DIM],
            h: [0.0; TRI],
            n: 0,
        }
    }

    /// The `idx`-th independent variable out of `n`, at value `v`.
    pub fn var(v: f64, idx: usize, n: usize) -> Self {
        assert!(n <= MAX_DIM && idx < n, "variable index out of range");
        let mut d = Dual2::constant(v);
        d.n = n;
        d.g[idx] = 1.0;
        d
    }

    /// Seeds a full vector of independent variables.
    pub fn vars(x: &[f64]) -> Vec<Dual2> {
        let n = x.len();
        x.iter().enumerate().map(|(i, &v)| Dual2::var(v, i, n)).collect()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn grad(&self, i: usize) -> f64 {
        self.g[i]
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.h[packed(i, j)]
    }

    pub fn grad_vec(&self, n: usize) -> Vec<f64> {
        self.g[..n].to_vec()
    }

    /// Applies a scalar function given its value and first two derivatives.
    #[inline]
    fn chain(&self, f: f64, df: f64, ddf: f64) -> Dual2 {
        let n = self.n;
        let mut out = Dual2::constant(f);
        out.n = n;
        for i in 0..n {
            out.g[i] = df * self.g[i];
        }
        let mut k = 0;
        for j in 0..n {
            for i in 0..=j {
                out.h[k] = df * self.h[k] + ddf * self.g[i] * self.g[j];
                k += 1;
            }
        }
        out
    }

    pub fn recip(self) -> Dual2 {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn sqr(self) -> Dual2 {
        self * self
    }
}

impl Scalar for Dual2 {
    #[inline]
    fn cst(x: f64) -> Self {
        Dual2::constant(x)
    }
    #[inline]
    fn value(&self) -> f64 {
        self.v
    }
    fn ln(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(self.v.ln(), r, -r * r)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }
}

impl Add for Dual2 {
    type Output = Dual2;
    #[inline]
    fn add(self, o: Dual2) -> Dual2 {
        let n = self.n.max(o.n);
        let mut out = Dual2::constant(self.v + o.v);
        out.n = n;
        for i in 0..n {
            out.g[i] = self.g[i] + o.g[i];
        }
        for k in 0..tri(n) {
            out.h[k] = self.h[k] + o.h[k];
        }
        out
    }
}

impl Sub for Dual2 {
    type Output = Dual2;
    #[inline]
    fn sub(self, o: Dual2) -> Dual2 {
        let n = self.n.max(o.n);
        let mut out = Dual2::constant(self.v - o.v);
        out.n = n;
        for i in 0..n {
            out.g[i] = self.g[i] - o.g[i];
        }
        for k in 0..tri(n) {
            out.h[k] = self.h[k] - o.h[k];
        }
        out
    }
}

impl Neg for Dual2 {
    type Output = Dual2;
    #[inline]
    fn neg(self) -> Dual2 {
        let mut out = self;
        out.v = -self.v;
        for i in 0..self.n {
            out.g[i] = -self.g[i];
        }
        for k in 0..tri(self.n) {
            out.h[k] = -self.h[k];
        }
        out
    }
}

impl Mul for Dual2 {
    type Output = Dual2;
    #[inline]
    fn mul(self, o: Dual2) -> Dual2 {
        let n = self.n.max(o.n);
        let (a, b) = (self.v, o.v);
        let mut out = Dual2::constant(a * b);
        out.n = n;
        for i in 0..n {
            out.g[i] = a * o.g[i] + b * self.g[i];
        }
        let mut k = 0;
        for j in 0..n {
            for i in 0..=j {
                out.h[k] = a * o.h[k]
                    + b * self.h[k]
                    + self.g[i] * o.g[j]
                    + self.g[j] * o.g[i];
                k += 1;
            }
        }
        out
    }
}

impl Mul<f64> for Dual2 {
    type Output = Dual2;
    #[inline]
    fn mul(self, c: f64) -> Dual2 {
        let mut out = self;
        out.v = self.v * c;
        for i in 0..self.n {
            out.g[i] = self.g[i] * c;
        }
        for k in 0..tri(self.n) {
            out.h[k] = self.h[k] * c;
        }
        out
    }
}

impl Div for Dual2 {
    type Output = Dual2;
    fn div(self, o: Dual2) -> Dual2 {
        // q = a / b;  q' = (a' - q b') / b;  q'' = (a'' - q b'' - b' q'^T - q' b'^T) / b
        let n = self.n.max(o.n);
        let b = o.v;
        let q = self.v / b;
        let mut out = Dual2::constant(q);
        out.n = n;
        for i in 0..n {
            out.g[i] = (self.g[i] - q * o.g[i]) / b;
        }
        let mut k = 0;
        for j in 0..n {
            for i in 0..=j {
                out.h[k] = (self.h[k]
                    - q * o.h[k]
                    - o.g[i] * out.g[j]
                    - out.g[i] * o.g[j])
                    / b;
                k += 1;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jet_of<F: Fn(&[Dual2]) -> Dual2>(f: F, x: &[f64]) -> Dual2 {
        f(&Dual2::vars(x))
    }

    #[test]
    fn product_rule_and_quotient_rule() {
        // f(x, y) = x^2 y / (1 + y)
        let f = |v: &[Dual2]| v[0] * v[0] * v[1] / (Dual2::cst(1.0) + v[1]);
        let d = jet_of(f, &[1.5, 0.5]);
        let (x, y): (f64, f64) = (1.5, 0.5);
        assert!((d.v - x * x * y / (1.0 + y)).abs() < 1e-15);
        assert!((d.grad(0) - 2.0 * x * y / (1.0 + y)).abs() < 1e-14);
        assert!((d.grad(1) - x * x / (1.0 + y).powi(2)).abs() < 1e-14);
        assert!((d.hess(0, 0) - 2.0 * y / (1.0 + y)).abs() < 1e-14);
        assert!((d.hess(0, 1) - 2.0 * x / (1.0 + y).powi(2)).abs() < 1e-14);
        assert!((d.hess(1, 1) + 2.0 * x * x / (1.0 + y).powi(3)).abs() < 1e-14);
    }

    #[test]
    fn log_and_sqrt() {
        let d = jet_of(|v| (v[0] * v[0] + v[1] * v[1]).ln(), &[3.0, 4.0]);
        assert!((d.v - 25f64.ln()).abs() < 1e-15);
        assert!((d.grad(0) - 6.0 / 25.0).abs() < 1e-15);
        assert!((d.hess(0, 1) + 2.0 * 3.0 * 2.0 * 4.0 / 625.0).abs() < 1e-15);
        let s = jet_of(|v| v[0].sqrt(), &[4.0]);
        assert!((s.grad(0) - 0.25).abs() < 1e-15);
        assert!((s.hess(0, 0) + 1.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn values_match_plain_f64_bitwise() {
        fn f<T: Scalar>(x: T, y: T) -> T {
            (x * y + T::cst(0.3)) / (x - y * 2.0) - (x * x + y * y).ln()
        }
        let d = f(Dual2::var(0.7, 0, 2), Dual2::var(-0.2, 1, 2));
        assert_eq!(d.v.to_bits(), f(0.7f64, -0.2f64).to_bits());
    }
}
