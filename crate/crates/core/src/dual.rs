//! Forward-mode dual numbers carrying up to `LANES` partial derivatives.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub const LANES: usize = 8;

/// Arithmetic shared by `f64` and [`Dual`] so one likelihood routine yields
/// values and exact gradients.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
    + Add<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn val(self) -> f64;
    fn ln(self) -> Self;
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn val(self) -> f64 {
        self
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; LANES],
}

impl Dual {
    pub fn var(v: f64, lane: usize) -> Self {
        let mut d = [0.0; LANES];
        d[lane] = 1.0;
        Dual { v, d }
    }
}

impl Real for Dual {
    fn cst(v: f64) -> Self {
        Dual { v, d: [0.0; LANES] }
    }
    fn val(self) -> f64 {
        self.v
    }
    fn ln(self) -> Self {
        let k = 1.0 / self.v;
        Dual {
            v: self.v.ln(),
            d: self.d.map(|x| x * k),
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d) {
            *a += b;
        }
        Dual { v: self.v + o.v, d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d) {
            *a -= b;
        }
        Dual { v: self.v - o.v, d }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        let mut d = [0.0; LANES];
        for i in 0..LANES {
            d[i] = self.d[i] * o.v + self.v * o.d[i];
        }
        Dual { v: self.v * o.v, d }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.v;
        let q = self.v * inv;
        let mut d = [0.0; LANES];
        for i in 0..LANES {
            d[i] = (self.d[i] - q * o.d[i]) * inv;
        }
        Dual { v: q, d }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            v: -self.v,
            d: self.d.map(|x| -x),
        }
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, k: f64) -> Dual {
        Dual {
            v: self.v * k,
            d: self.d.map(|x| x * k),
        }
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, k: f64) -> Dual {
        Dual { v: self.v + k, d: self.d }
    }
}
