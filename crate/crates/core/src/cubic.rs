//! Exact arithmetic in `Q(c)` with `c^3 = v`.

use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::poly::rat_nth_root;

/// `a + b*c + d*c^2` where `c^3 = v`.
///
/// When `v` is the cube of a rational the element is kept collapsed to a
/// plain rational (`b = d = 0`), since `x^3 - v` is then reducible.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CubicScalar {
    pub a: BigRational,
    pub b: BigRational,
    pub d: BigRational,
    pub v: BigRational,
}

impl CubicScalar {
    pub fn rational(a: BigRational, v: BigRational) -> CubicScalar {
        CubicScalar { a, b: BigRational::zero(), d: BigRational::zero(), v }
    }

    pub fn zero(v: BigRational) -> CubicScalar {
        CubicScalar::rational(BigRational::zero(), v)
    }

    pub fn one(v: BigRational) -> CubicScalar {
        CubicScalar::rational(BigRational::one(), v)
    }

    /// The generator `c`, or its rational value when `v` is a perfect cube.
    pub fn generator(v: BigRational) -> CubicScalar {
        match rat_nth_root(&v, 3) {
            Some(r) => CubicScalar::rational(r, v),
            None => CubicScalar {
                a: BigRational::zero(),
                b: BigRational::one(),
                d: BigRational::zero(),
                v,
            },
        }
    }

    pub fn new(a: BigRational, b: BigRational, d: BigRational, v: BigRational) -> CubicScalar {
        CubicScalar { a, b, d, v }.collapse()
    }

    fn collapse(self) -> CubicScalar {
        if self.b.is_zero() && self.d.is_zero() {
            return self;
        }
        match rat_nth_root(&self.v, 3) {
            Some(r) => {
                let a = &self.a + &self.b * &r + &self.d * &r * &r;
                CubicScalar::rational(a, self.v)
            }
            None => self,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero() && self.d.is_zero()
    }

    pub fn is_rational(&self) -> bool {
        self.b.is_zero() && self.d.is_zero()
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        self.is_rational().then_some(&self.a)
    }

    /// Picks the common field of two operands. Rational elements live in
    /// every field, so they adopt the other operand's radicand.
    fn field(&self, other: &CubicScalar) -> Result<BigRational> {
        if self.v == other.v || other.is_rational() {
            Ok(self.v.clone())
        } else if self.is_rational() {
            Ok(other.v.clone())
        } else {
            Err(Error::NotExact(format!("mixed cube-root fields {} and {}", self.v, other.v)))
        }
    }

    pub fn add(&self, o: &CubicScalar) -> Result<CubicScalar> {
        let v = self.field(o)?;
        Ok(CubicScalar { a: &self.a + &o.a, b: &self.b + &o.b, d: &self.d + &o.d, v })
    }

    pub fn sub(&self, o: &CubicScalar) -> Result<CubicScalar> {
        let v = self.field(o)?;
        Ok(CubicScalar { a: &self.a - &o.a, b: &self.b - &o.b, d: &self.d - &o.d, v })
    }

    pub fn neg(&self) -> CubicScalar {
        CubicScalar { a: -&self.a, b: -&self.b, d: -&self.d, v: self.v.clone() }
    }

    pub fn scale(&self, k: &BigRational) -> CubicScalar {
        CubicScalar { a: &self.a * k, b: &self.b * k, d: &self.d * k, v: self.v.clone() }
    }

    pub fn mul(&self, o: &CubicScalar) -> Result<CubicScalar> {
        let v = self.field(o)?;
        if let Some(k) = o.as_rational() {
            return Ok(CubicScalar { v, ..self.scale(k) });
        }
        if let Some(k) = self.as_rational() {
            return Ok(CubicScalar { v, ..o.scale(k) });
        }
        let (a1, b1, d1) = (&self.a, &self.b, &self.d);
        let (a2, b2, d2) = (&o.a, &o.b, &o.d);
        // c^3 = v, c^4 = v c
        let a = a1 * a2 + (b1 * d2 + d1 * b2) * &v;
        let b = a1 * b2 + b1 * a2 + d1 * d2 * &v;
        let d = a1 * d2 + b1 * b2 + d1 * a2;
        Ok(CubicScalar { a, b, d, v })
    }

    /// Field norm `N(x) = x * x' * x''`, a rational.
    pub fn norm(&self) -> BigRational {
        let (a, b, d, v) = (&self.a, &self.b, &self.d, &self.v);
        a * a * a + b * b * b * v + d * d * d * v * v - BigRational::from_integer(3.into()) * a * b * d * v
    }

    pub fn inv(&self) -> Result<CubicScalar> {
        if let Some(k) = self.as_rational() {
            if k.is_zero() {
                return Err(Error::Singular("division by zero in the cubic field".into()));
            }
            return Ok(CubicScalar::rational(k.recip(), self.v.clone()));
        }
        let n = self.norm();
        if n.is_zero() {
            return Err(Error::Singular("non-invertible cubic-field element".into()));
        }
        let (a, b, d, v) = (&self.a, &self.b, &self.d, &self.v);
        let ni = n.recip();
        Ok(CubicScalar {
            a: (a * a - b * d * v) * &ni,
            b: (d * d * v - a * b) * &ni,
            d: (b * b - a * d) * &ni,
            v: v.clone(),
        })
    }

    pub fn div(&self, o: &CubicScalar) -> Result<CubicScalar> {
        self.mul(&o.inv()?)
    }

    pub fn powi(&self, n: i64) -> Result<CubicScalar> {
        if n < 0 {
            return self.inv()?.powi(-n);
        }
        let mut result = CubicScalar::one(self.v.clone());
        let mut base = self.clone();
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                result = result.mul(&base)?;
            }
            n >>= 1;
            if n > 0 {
                base = base.mul(&base)?;
            }
        }
        Ok(result)
    }

    /// Real value of the element, using the real cube root of `v`.
    pub fn to_f64(&self) -> f64 {
        use num_traits::ToPrimitive;
        let c = self.v.to_f64().unwrap_or(f64::NAN).cbrt();
        self.a.to_f64().unwrap_or(f64::NAN) + self.b.to_f64().unwrap_or(f64::NAN) * c + self.d.to_f64().unwrap_or(f64::NAN) * c * c
    }

    /// Exact real cube root of a rational `w` inside this field, if one
    /// exists: a rational, `r*c` or `r*c^2`.
    pub fn cbrt_of(w: &BigRational, v: &BigRational) -> Option<CubicScalar> {
        if let Some(r) = rat_nth_root(w, 3) {
            return Some(CubicScalar::rational(r, v.clone()));
        }
        if v.is_zero() {
            return None;
        }
        if let Some(r) = rat_nth_root(&(w / v), 3) {
            return Some(CubicScalar::new(BigRational::zero(), r, BigRational::zero(), v.clone()));
        }
        if let Some(r) = rat_nth_root(&(w / (v * v)), 3) {
            return Some(CubicScalar::new(BigRational::zero(), BigRational::zero(), r, v.clone()));
        }
        None
    }
}

impl fmt::Display for CubicScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_rational() {
            write!(f, "{}", self.a)
        } else {
            write!(f, "{} + {}*c + {}*c^2 (c^3 = {})", self.a, self.b, self.d, self.v)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn defining_relation() {
        let c = CubicScalar::generator(r(2, 1));
        let c2 = c.mul(&c).unwrap();
        assert_eq!((c2.a.clone(), c2.b.clone(), c2.d.clone()), (r(0, 1), r(0, 1), r(1, 1)));
        let c3 = c2.mul(&c).unwrap();
        assert_eq!(c3.sub(&CubicScalar::rational(r(2, 1), r(2, 1))).unwrap(), CubicScalar::zero(r(2, 1)));
    }

    #[test]
    fn inverse_of_generator() {
        let c = CubicScalar::generator(r(2, 1));
        let inv = c.inv().unwrap();
        assert_eq!(inv, CubicScalar::new(r(0, 1), r(0, 1), r(1, 2), r(2, 1)));
    }

    #[test]
    fn perfect_cube_collapses() {
        let c = CubicScalar::generator(r(-8, 27));
        assert_eq!(c.as_rational(), Some(&r(-2, 3)));
    }

    #[test]
    fn cube_roots_in_field() {
        let v = r(2, 1);
        assert_eq!(CubicScalar::cbrt_of(&r(16, 1), &v), Some(CubicScalar::new(r(0, 1), r(2, 1), r(0, 1), v.clone())));
        assert_eq!(CubicScalar::cbrt_of(&r(4, 1), &v), Some(CubicScalar::new(r(0, 1), r(0, 1), r(1, 1), v.clone())));
        assert_eq!(CubicScalar::cbrt_of(&r(3, 1), &v), None);
    }
}
