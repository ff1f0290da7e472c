//! Double-double arithmetic for residual evaluation.
//!
//! A field sampled on `M` nodes cannot be stored more accurately than one
//! ulp per node, and the `1/h²` stencil amplifies that rounding: on the
//! 800-node interval grid the residual of *any* double-precision field
//! stalls near `1e-11`. Ground states and locked states therefore carry a
//! tail `lo` with the value `hi + lo`, and their residuals are evaluated in
//! double-double arithmetic.

use std::ops::{Add, Mul, Neg, Sub};

use crate::grid::SchrodingerOperator;

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Self { hi, lo }
    }

    pub fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn scale(self, c: f64) -> Self {
        let (p, e) = two_prod(self.hi, c);
        Self::new(p, e + self.lo * c)
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::new(s, e + f)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        Dd::new(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

/// Field value `hi[i] + lo[i]`, with an empty tail meaning zero.
#[inline]
pub(crate) fn at(hi: &[f64], lo: &[f64], i: usize) -> Dd {
    Dd::new(hi[i], lo.get(i).copied().unwrap_or(0.0))
}

/// `A(hi + lo)` in double-double.
pub fn apply_dd(op: &SchrodingerOperator, hi: &[f64], lo: &[f64]) -> Vec<Dd> {
    let m = hi.len();
    (0..m)
        .map(|i| {
            let ui = at(hi, lo, i);
            let left = if i > 0 {
                at(hi, lo, i - 1)
            } else {
                Dd::default()
            };
            let right = if i + 1 < m {
                at(hi, lo, i + 1)
            } else {
                Dd::default()
            };
            let (up, down) = op.stencil(i);
            (ui - right).scale(up) + (ui - left).scale(down) + ui.scale(op.potential[i])
        })
        .collect()
}

/// Splits `c · (hi + lo)` into a new `(hi, lo)` pair.
pub fn scale_field(c: f64, hi: &[f64], lo: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (0..hi.len())
        .map(|i| {
            let v = at(hi, lo, i).scale(c);
            (v.hi, v.lo)
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dd_recovers_rounding_errors() {
        let a = Dd::from_f64(1.0) + Dd::from_f64(1e-20);
        assert_eq!(a.hi, 1.0);
        assert_eq!(a.lo, 1e-20);
        let third = Dd::from_f64(1.0 / 3.0);
        let p = third.scale(3.0) - Dd::from_f64(1.0);
        // 3 * fl(1/3) - 1 is representable exactly in double-double
        assert_eq!(p.to_f64(), 3.0f64.mul_add(1.0 / 3.0, -1.0));
        let sq = Dd::new(1.0, 1e-17) * Dd::new(1.0, 1e-17);
        assert!((sq.lo - 2e-17).abs() < 1e-30);
    }
}
