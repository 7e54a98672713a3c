//! Double-double arithmetic: an unevaluated sum `hi + lo` carrying about
//! 106 significand bits. Used only by gradient-check reference losses.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

const LN2: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

fn two_sum(a: f64, b: f64) -> DoubleDouble {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    DoubleDouble { hi: s, lo: err }
}

fn quick_two_sum(a: f64, b: f64) -> DoubleDouble {
    let s = a + b;
    DoubleDouble {
        hi: s,
        lo: b - (s - a),
    }
}

fn two_prod(a: f64, b: f64) -> DoubleDouble {
    let p = a * b;
    DoubleDouble {
        hi: p,
        lo: a.mul_add(b, -p),
    }
}

fn inverse_factorials() -> &'static [DoubleDouble; 10] {
    static TABLE: OnceLock<[DoubleDouble; 10]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [DoubleDouble::ONE; 10];
        for n in 1..10 {
            table[n] = table[n - 1] / n as f64;
        }
        table
    })
}

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };
    pub const ONE: Self = Self { hi: 1.0, lo: 0.0 };

    pub fn new(hi: f64, lo: f64) -> Self {
        two_sum(hi, lo)
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    /// `2^k * exp(r / 1024)^1024`, Taylor series on the reduced argument.
    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Self::from(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Self::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * k) * (1.0 / 1024.0);
        // |r| < 3.4e-4, so nine terms leave a remainder below 1e-33
        let coeffs = inverse_factorials();
        let mut sum = coeffs[9];
        for c in coeffs[..9].iter().rev() {
            sum = sum * r + *c;
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        sum * 2f64.powi(k as i32)
    }

    /// Newton step on `exp(y) = x` from the f64 logarithm.
    pub fn ln(self) -> Self {
        let y = Self::from(self.hi.ln());
        y + self * (-y).exp() - 1.0
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Self::from(self.hi.sqrt());
        }
        let s = Self::from(self.hi.sqrt());
        s + (self - s * s) / (s * 2.0)
    }

    pub fn tanh(self) -> Self {
        // 1 - 2 / (exp(2x) + 1) keeps both tails finite
        Self::ONE - Self::from(2.0) / ((self * 2.0).exp() + 1.0)
    }

    pub fn sigmoid(self) -> Self {
        Self::ONE / (Self::ONE + (-self).exp())
    }
}

impl From<f64> for DoubleDouble {
    fn from(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let s = two_sum(self.hi, rhs.hi);
        let t = two_sum(self.lo, rhs.lo);
        let s = quick_two_sum(s.hi, s.lo + t.hi);
        quick_two_sum(s.hi, s.lo + t.lo)
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + -rhs
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let p = two_prod(self.hi, rhs.hi);
        quick_two_sum(p.hi, p.lo + (self.hi * rhs.lo + self.lo * rhs.hi))
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    /// Long division: two correction quotients on the f64 estimate.
    fn div(self, rhs: Self) -> Self {
        let q1 = self.hi / rhs.hi;
        let r = self - rhs * q1;
        let q2 = r.hi / rhs.hi;
        let r = r - rhs * q2;
        let q3 = r.hi / rhs.hi;
        quick_two_sum(q1, q2) + Self::from(q3)
    }
}

impl AddAssign for DoubleDouble {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

macro_rules! with_f64 {
    ($($tr:ident $f:ident),*) => {$(
        impl $tr<f64> for DoubleDouble {
            type Output = Self;
            fn $f(self, rhs: f64) -> Self {
                self.$f(Self::from(rhs))
            }
        }
    )*};
}

with_f64!(Add add, Sub sub, Mul mul, Div div);

#[cfg(test)]
mod tests {
    use super::*;

    type D = DoubleDouble;

    /// Relative distance to a reference given as an exact `hi + lo` pair.
    fn err(a: D, hi: f64, lo: f64) -> f64 {
        ((a - D::new(hi, lo)).hi() / hi).abs()
    }

    // references from 50-digit decimal evaluations split into hi + lo;
    // the ten squarings in exp cost about three decimal digits
    #[test]
    fn elementary_functions_reach_double_double_accuracy() {
        assert!(err(D::ONE.exp(), std::f64::consts::E, 1.445_646_891_729_250_2e-16) < 1e-28);
        assert!(err(D::from(2.0).ln(), LN2.hi, LN2.lo) < 1e-30);
        assert!(err(D::from(2.0).sqrt(), std::f64::consts::SQRT_2, -9.667_293_313_452_913e-17) < 1e-30);
        assert!(err(D::ONE / 3.0, 1.0 / 3.0, 1.850_371_707_708_594e-17) < 1e-30);
    }

    #[test]
    fn arithmetic_round_trips() {
        let third = D::ONE / 3.0;
        assert!((third * 3.0 - 1.0).hi().abs() < 1e-31);
        let x = D::new(0.3, 1e-18);
        assert!((x.exp().ln() - x).hi().abs() < 1e-29);
        assert!(((x * x).sqrt() - x).hi().abs() < 1e-31);
        let t = D::from(0.7).tanh();
        assert!((t.hi() - 0.7f64.tanh()).abs() < 2e-16);
        assert!(((D::from(-0.4).sigmoid() + D::from(0.4).sigmoid()) - 1.0).hi().abs() < 1e-29);
    }

    #[test]
    fn exp_saturates() {
        assert_eq!(D::from(-800.0).exp(), D::ZERO);
        assert!(!D::from(800.0).exp().is_finite());
    }
}
