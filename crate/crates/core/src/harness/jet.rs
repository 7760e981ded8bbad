//! Second-order forward-mode jets in three variables: value, gradient and
//! Hessian carried together through arithmetic.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: Vector3<f64>,
    pub h: Matrix3<f64>,
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Self {
            v,
            g: Vector3::zeros(),
            h: Matrix3::zeros(),
        }
    }

    /// The coordinate functions `x, y, z` at a point.
    pub fn coordinates(x: &Vector3<f64>) -> [Jet; 3] {
        std::array::from_fn(|i| Self {
            v: x[i],
            g: Vector3::from_fn(|k, _| if k == i { 1.0 } else { 0.0 }),
            h: Matrix3::zeros(),
        })
    }

    /// `f ∘ self` given `f`, `f'` and `f''` at `self.v`.
    pub fn compose(self, f: f64, df: f64, d2f: f64) -> Self {
        Self {
            v: f,
            g: self.g * df,
            h: self.h * df + self.g * self.g.transpose() * d2f,
        }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.compose(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.compose(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.compose(e, e, e)
    }

    pub fn sq(self) -> Self {
        self * self
    }

    pub fn laplacian(&self) -> f64 {
        self.h.trace()
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            g: self.g + o.g,
            h: self.h + o.h,
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet {
            v: -self.v,
            g: -self.g,
            h: -self.h,
        }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let gg = self.g * o.g.transpose();
        Jet {
            v: self.v * o.v,
            g: self.g * o.v + o.g * self.v,
            h: self.h * o.v + o.h * self.v + gg + gg.transpose(),
        }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        Jet {
            v: self.v * s,
            g: self.g * s,
            h: self.h * s,
        }
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, s: f64) -> Jet {
        Jet { v: self.v + s, ..self }
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(self, s: f64) -> Jet {
        Jet { v: self.v - s, ..self }
    }
}
