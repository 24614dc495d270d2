//! Complex numbers over a generic [`Scalar`], so holomorphic section formulas
//! can be differentiated by the same AD machinery as real fields.

use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::dual::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cx<T> {
    pub re: T,
    pub im: T,
}

pub type C64 = Cx<f64>;

impl<T: Scalar> Cx<T> {
    pub fn new(re: T, im: T) -> Self {
        Cx { re, im }
    }

    pub fn real(x: f64) -> Self {
        Cx {
            re: T::cst(x),
            im: T::cst(0.0),
        }
    }

    pub fn zero() -> Self {
        Self::real(0.0)
    }

    pub fn one() -> Self {
        Self::real(1.0)
    }

    pub fn lift(c: C64) -> Self {
        Cx {
            re: T::cst(c.re),
            im: T::cst(c.im),
        }
    }

    pub fn conj(self) -> Self {
        Cx {
            re: self.re,
            im: -self.im,
        }
    }

    pub fn norm_sqr(self) -> T {
        self.re * self.re + self.im * self.im
    }

    pub fn scale(self, k: f64) -> Self {
        Cx {
            re: self.re * k,
            im: self.im * k,
        }
    }

    pub fn mul_c(self, c: C64) -> Self {
        Cx {
            re: self.re * c.re - self.im * c.im,
            im: self.re * c.im + self.im * c.re,
        }
    }

    pub fn powu(self, k: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..k {
            acc = acc * self;
        }
        acc
    }

    pub fn value(&self) -> C64 {
        Cx {
            re: self.re.value(),
            im: self.im.value(),
        }
    }
}

impl C64 {
    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }
}

impl<T: Scalar> Add for Cx<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Cx {
            re: self.re + o.re,
            im: self.im + o.im,
        }
    }
}

impl<T: Scalar> Sub for Cx<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Cx {
            re: self.re - o.re,
            im: self.im - o.im,
        }
    }
}

impl<T: Scalar> Neg for Cx<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Cx {
            re: -self.re,
            im: -self.im,
        }
    }
}

impl<T: Scalar> Mul for Cx<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Cx {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
}

impl<T: Scalar> Div for Cx<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let d = o.norm_sqr();
        let num = self * o.conj();
        Cx {
            re: num.re / d,
            im: num.im / d,
        }
    }
}

/// Pairs consecutive real coordinates `(x_j, y_j)` into `z_j = x_j + i y_j`.
pub fn complexify<T: Scalar>(x: &[T]) -> Vec<Cx<T>> {
    x.chunks_exact(2).map(|c| Cx::new(c[0], c[1])).collect()
}

pub fn realify(z: &[C64]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}
