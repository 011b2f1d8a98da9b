//! Point evaluation of expression trees, exactly in a cubic field or in
//! floating point (machine `f64` or multi-precision).

use std::cell::RefCell;
use std::collections::BTreeMap;

use astro_float::{BigFloat, Consts, Radix, RoundingMode, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::cubic::CubicScalar;
use crate::error::{Error, Result};
use crate::expr::{Expr, Node, VarId};
use crate::poly::rat_nth_root;

/// An assignment of rational values to variables and parameters.
///
/// `opaque` optionally assigns values to whole subterms (such as `exp(x)`),
/// which lets exact evaluation treat them as independent indeterminates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SamplePoint {
    pub values: BTreeMap<VarId, BigRational>,
    pub opaque: BTreeMap<Expr, BigRational>,
}

impl SamplePoint {
    pub fn new() -> SamplePoint {
        SamplePoint::default()
    }

    pub fn jet(x: BigRational, u: BigRational, p: BigRational, q: BigRational) -> SamplePoint {
        let mut pt = SamplePoint::new();
        pt.set(VarId::X, x);
        pt.set(VarId::U, u);
        pt.set(VarId::P, p);
        pt.set(VarId::Q, q);
        pt
    }

    pub fn from_ints(x: i64, u: i64, p: i64, q: i64) -> SamplePoint {
        let r = |n: i64| BigRational::from_integer(n.into());
        SamplePoint::jet(r(x), r(u), r(p), r(q))
    }

    pub fn set(&mut self, v: VarId, value: BigRational) {
        self.values.insert(v, value);
    }

    pub fn with(mut self, v: VarId, value: BigRational) -> SamplePoint {
        self.set(v, value);
        self
    }

    pub fn get(&self, v: &VarId) -> Option<&BigRational> {
        self.values.get(v)
    }

    pub fn has_jet(&self) -> bool {
        VarId::JET.iter().all(|v| self.values.contains_key(v))
    }
}

fn unassigned(v: &VarId) -> Error {
    Error::Malformed(format!("variable `{v}` is not assigned at the sample point"))
}

/// Exact evaluation in the cubic field of `j_value`, which is the image of J.
pub fn eval_exact(e: &Expr, pt: &SamplePoint, j_value: &CubicScalar) -> Result<CubicScalar> {
    ExactEval { pt, j: Some(j_value), v: j_value.v.clone() }.eval(e)
}

/// Exact evaluation of a J-free expression. Cube roots of rationals are
/// represented over `Q(cbrt(v))` where `v` is the first radicand met.
pub fn eval_exact_free(e: &Expr, pt: &SamplePoint) -> Result<CubicScalar> {
    let v = first_cube_radicand(e, pt)?.unwrap_or_else(BigRational::one);
    ExactEval { pt, j: None, v }.eval(e)
}

fn first_cube_radicand(e: &Expr, pt: &SamplePoint) -> Result<Option<BigRational>> {
    if let Node::Product(fs) = e.node() {
        let ev = ExactEval { pt, j: None, v: BigRational::one() };
        let mut w = BigRational::one();
        for f in fs {
            if let Some(x) = ev.cube_root_power(f) {
                w *= x;
            }
        }
        if !w.is_zero() && rat_nth_root(&w, 3).is_none() {
            return Ok(Some(w));
        }
    }
    if let Node::Pow(b, r) = e.node() {
        if *r.denom() == 3.into() {
            let w = ExactEval { pt, j: None, v: BigRational::one() }.eval(b);
            if let Ok(w) = w {
                if let Some(w) = w.as_rational() {
                    if rat_nth_root(w, 3).is_none() {
                        return Ok(Some(w.clone()));
                    }
                }
            }
        }
    }
    for c in e.children() {
        if let Some(v) = first_cube_radicand(c, pt)? {
            return Ok(Some(v));
        }
    }
    Ok(None)
}

struct ExactEval<'a> {
    pt: &'a SamplePoint,
    j: Option<&'a CubicScalar>,
    v: BigRational,
}

impl ExactEval<'_> {
    fn rat(&self, q: BigRational) -> CubicScalar {
        CubicScalar::rational(q, self.v.clone())
    }

    /// For `b^(m/3)` with `b` rational at the point and `m` positive, the
    /// rational `b^m`, whose real cube root is the factor's value.
    fn cube_root_power(&self, f: &Expr) -> Option<BigRational> {
        let Node::Pow(b, r) = f.node() else { return None };
        if *r.denom() != 3.into() || !r.numer().is_positive() {
            return None;
        }
        let m = r.numer().to_i32()?;
        let w = self.eval(b).ok()?;
        let w = w.as_rational()?;
        Some(crate::poly::rat_powi(w, m as i64))
    }

    fn eval(&self, e: &Expr) -> Result<CubicScalar> {
        if let Some(val) = self.pt.opaque.get(e) {
            return Ok(self.rat(val.clone()));
        }
        match e.node() {
            Node::Int(n) => Ok(self.rat(BigRational::from_integer(n.clone()))),
            Node::Rational(q) => Ok(self.rat(q.clone())),
            Node::Var(v) => self.pt.get(v).map(|q| self.rat(q.clone())).ok_or_else(|| unassigned(v)),
            Node::J => self.j.cloned().ok_or(Error::MissingI3),
            Node::Sum(ts) => {
                let mut acc = self.rat(BigRational::zero());
                for t in ts {
                    acc = acc.add(&self.eval(t)?)?;
                }
                Ok(acc)
            }
            Node::Product(fs) => {
                // Cube-root factors are combined under one radical first, so
                // cbrt(a)*cbrt(b) evaluates whenever cbrt(a*b) lies in the field.
                let mut acc = self.rat(BigRational::one());
                let mut radicand = BigRational::one();
                let mut roots = 0;
                for f in fs {
                    if let Some(w) = self.cube_root_power(f) {
                        radicand *= w;
                        roots += 1;
                        continue;
                    }
                    acc = acc.mul(&self.eval(f)?)?;
                }
                if roots > 0 {
                    if radicand.is_zero() {
                        return Ok(self.rat(BigRational::zero()));
                    }
                    let r = match rat_nth_root(&radicand, 3) {
                        Some(r) => self.rat(r),
                        None => CubicScalar::cbrt_of(&radicand, &self.v)
                            .ok_or_else(|| Error::NotExact(format!("cube root of {radicand} outside the current field")))?,
                    };
                    acc = acc.mul(&r)?;
                }
                Ok(acc)
            }
            Node::Quotient(a, b) => {
                let d = self.eval(b)?;
                if d.is_zero() {
                    return Err(Error::Singular("denominator vanishes".into()));
                }
                self.eval(a)?.div(&d)
            }
            Node::Pow(b, r) => {
                let base = self.eval(b)?;
                let m = r.numer().to_i64().ok_or_else(|| Error::Malformed("exponent too large".into()))?;
                if r.is_integer() {
                    if base.is_zero() && m < 0 {
                        return Err(Error::Singular("zero to a negative power".into()));
                    }
                    return base.powi(m);
                }
                let n = r.denom().to_u32().unwrap_or(0);
                let w = base
                    .as_rational()
                    .ok_or_else(|| Error::NotExact("root of an irrational field element".into()))?;
                if w.is_zero() {
                    return if m > 0 { Ok(self.rat(BigRational::zero())) } else { Err(Error::Singular("zero to a negative power".into())) };
                }
                if let Some(root) = rat_nth_root(w, n) {
                    return self.rat(root).powi(m);
                }
                if w.is_negative() && n % 2 == 0 {
                    return Err(Error::Domain(format!("even root of negative value {w}")));
                }
                if n == 3 {
                    if let Some(c) = CubicScalar::cbrt_of(w, &self.v) {
                        return c.powi(m);
                    }
                }
                Err(Error::NotExact(format!("{n}-th root of {w} outside the current field")))
            }
            Node::PowExpr(_, _) | Node::Ln(_) | Node::Exp(_) => {
                Err(Error::NotExact("transcendental subterm".into()))
            }
        }
    }
}

/// Floating-point arithmetic used by the float evaluator.
pub trait Backend {
    type V: Clone;
    fn from_rational(&self, q: &BigRational) -> Self::V;
    fn from_f64(&self, x: f64) -> Self::V;
    fn to_f64(&self, a: &Self::V) -> f64;
    fn add(&self, a: &Self::V, b: &Self::V) -> Self::V;
    fn sub(&self, a: &Self::V, b: &Self::V) -> Self::V;
    fn mul(&self, a: &Self::V, b: &Self::V) -> Self::V;
    fn div(&self, a: &Self::V, b: &Self::V) -> Self::V;
    fn neg(&self, a: &Self::V) -> Self::V;
    fn ln(&self, a: &Self::V) -> Self::V;
    fn exp(&self, a: &Self::V) -> Self::V;
    /// Real cube root (negative arguments allowed).
    fn cbrt(&self, a: &Self::V) -> Self::V;
    fn sqrt(&self, a: &Self::V) -> Self::V;
    fn is_zero(&self, a: &Self::V) -> bool;
    fn is_negative(&self, a: &Self::V) -> bool;

    fn powi(&self, a: &Self::V, n: i64) -> Self::V {
        let mut result = self.from_f64(1.0);
        let mut base = a.clone();
        let mut k = n.unsigned_abs();
        while k > 0 {
            if k & 1 == 1 {
                result = self.mul(&result, &base);
            }
            k >>= 1;
            if k > 0 {
                base = self.mul(&base, &base);
            }
        }
        if n < 0 {
            self.div(&self.from_f64(1.0), &result)
        } else {
            result
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct F64;

impl Backend for F64 {
    type V = f64;
    fn from_rational(&self, q: &BigRational) -> f64 {
        q.to_f64().unwrap_or(f64::NAN)
    }
    fn from_f64(&self, x: f64) -> f64 {
        x
    }
    fn to_f64(&self, a: &f64) -> f64 {
        *a
    }
    fn add(&self, a: &f64, b: &f64) -> f64 {
        a + b
    }
    fn sub(&self, a: &f64, b: &f64) -> f64 {
        a - b
    }
    fn mul(&self, a: &f64, b: &f64) -> f64 {
        a * b
    }
    fn div(&self, a: &f64, b: &f64) -> f64 {
        a / b
    }
    fn neg(&self, a: &f64) -> f64 {
        -a
    }
    fn ln(&self, a: &f64) -> f64 {
        a.ln()
    }
    fn exp(&self, a: &f64) -> f64 {
        a.exp()
    }
    fn cbrt(&self, a: &f64) -> f64 {
        a.cbrt()
    }
    fn sqrt(&self, a: &f64) -> f64 {
        a.sqrt()
    }
    fn is_zero(&self, a: &f64) -> bool {
        *a == 0.0
    }
    fn is_negative(&self, a: &f64) -> bool {
        *a < 0.0
    }
    fn powi(&self, a: &f64, n: i64) -> f64 {
        a.powi(n as i32)
    }
}

/// Multi-precision backend. One instance per thread: the constant cache is
/// not shared.
pub struct Big {
    pub precision: usize,
    rm: RoundingMode,
    consts: RefCell<Consts>,
}

impl Big {
    pub fn new(precision_bits: usize) -> Big {
        Big {
            precision: precision_bits.max(64),
            rm: RoundingMode::ToEven,
            consts: RefCell::new(Consts::new().expect("constant cache allocation")),
        }
    }

    pub fn format(&self, a: &BigFloat) -> String {
        a.format(Radix::Dec, self.rm, &mut self.consts.borrow_mut())
            .unwrap_or_else(|_| "NaN".to_string())
    }

    pub fn parse(&self, s: &str) -> BigFloat {
        BigFloat::parse(s, Radix::Dec, self.precision, self.rm, &mut self.consts.borrow_mut())
    }
}

impl Backend for Big {
    type V = BigFloat;
    fn from_rational(&self, q: &BigRational) -> BigFloat {
        let n = self.parse(&q.numer().to_string());
        if q.denom().is_one() {
            return n;
        }
        let d = self.parse(&q.denom().to_string());
        n.div(&d, self.precision, self.rm)
    }
    fn from_f64(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, self.precision)
    }
    fn to_f64(&self, a: &BigFloat) -> f64 {
        big_to_f64(a)
    }
    fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, self.precision, self.rm)
    }
    fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, self.precision, self.rm)
    }
    fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, self.precision, self.rm)
    }
    fn div(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, self.precision, self.rm)
    }
    fn neg(&self, a: &BigFloat) -> BigFloat {
        a.neg()
    }
    fn ln(&self, a: &BigFloat) -> BigFloat {
        a.ln(self.precision, self.rm, &mut self.consts.borrow_mut())
    }
    fn exp(&self, a: &BigFloat) -> BigFloat {
        a.exp(self.precision, self.rm, &mut self.consts.borrow_mut())
    }
    fn cbrt(&self, a: &BigFloat) -> BigFloat {
        a.cbrt(self.precision, self.rm)
    }
    fn sqrt(&self, a: &BigFloat) -> BigFloat {
        a.sqrt(self.precision, self.rm)
    }
    fn is_zero(&self, a: &BigFloat) -> bool {
        a.is_zero()
    }
    fn is_negative(&self, a: &BigFloat) -> bool {
        a.is_negative()
    }
}

/// A float value together with a magnitude scale: the size of the largest
/// intermediate quantity that contributed to it. Cancellation is judged
/// relative to this scale.
#[derive(Clone, Debug)]
pub struct Tracked<V> {
    pub value: V,
    pub scale: f64,
}

/// Evaluates `e` with the given backend. `j` is the value used for the J
/// symbol, with its own scale.
pub fn eval_with<B: Backend>(b: &B, e: &Expr, pt: &SamplePoint, j: Option<&Tracked<B::V>>) -> Result<Tracked<B::V>> {
    FloatEval { b, pt, j, cutoff: 1e-40 }.eval(e)
}

struct FloatEval<'a, B: Backend> {
    b: &'a B,
    pt: &'a SamplePoint,
    j: Option<&'a Tracked<B::V>>,
    cutoff: f64,
}

impl<B: Backend> FloatEval<'_, B> {
    fn t(&self, value: B::V, scale: f64) -> Tracked<B::V> {
        Tracked { value, scale }
    }

    fn abs(&self, v: &B::V) -> f64 {
        self.b.to_f64(v).abs()
    }

    fn konst(&self, q: &BigRational) -> Tracked<B::V> {
        let v = self.b.from_rational(q);
        let s = self.abs(&v);
        self.t(v, s)
    }

    fn negligible(&self, x: &Tracked<B::V>) -> bool {
        self.b.is_zero(&x.value) || self.abs(&x.value) <= self.cutoff * x.scale
    }

    fn eval(&self, e: &Expr) -> Result<Tracked<B::V>> {
        let b = self.b;
        match e.node() {
            Node::Int(n) => Ok(self.konst(&BigRational::from_integer(n.clone()))),
            Node::Rational(q) => Ok(self.konst(q)),
            Node::Var(v) => self.pt.get(v).map(|q| self.konst(q)).ok_or_else(|| unassigned(v)),
            Node::J => self.j.cloned().ok_or(Error::MissingI3),
            Node::Sum(ts) => {
                let mut acc = self.t(b.from_f64(0.0), 0.0);
                for t in ts {
                    let x = self.eval(t)?;
                    acc = self.t(b.add(&acc.value, &x.value), acc.scale + x.scale);
                }
                Ok(acc)
            }
            Node::Product(fs) => {
                let mut acc = self.t(b.from_f64(1.0), 1.0);
                for f in fs {
                    let x = self.eval(f)?;
                    acc = self.t(b.mul(&acc.value, &x.value), acc.scale * x.scale);
                }
                Ok(acc)
            }
            Node::Quotient(n, d) => {
                let d = self.eval(d)?;
                if self.negligible(&d) {
                    return Err(Error::Singular("denominator vanishes numerically".into()));
                }
                let n = self.eval(n)?;
                let ad = self.abs(&d.value);
                Ok(self.t(b.div(&n.value, &d.value), n.scale / ad * (d.scale / ad).max(1.0)))
            }
            Node::Pow(base, r) => {
                let x = self.eval(base)?;
                let m = r.numer().to_i64().ok_or_else(|| Error::Malformed("exponent too large".into()))?;
                if r.is_integer() {
                    if m < 0 && self.negligible(&x) {
                        return Err(Error::Singular("zero to a negative power".into()));
                    }
                    let v = b.powi(&x.value, m);
                    let ax = self.abs(&x.value);
                    let scale = if m >= 0 {
                        x.scale.powi(m as i32)
                    } else {
                        self.abs(&v) * (x.scale / ax).max(1.0)
                    };
                    return Ok(self.t(v, scale));
                }
                let n = r.denom().to_u32().unwrap_or(0);
                if b.is_zero(&x.value) {
                    return if m > 0 { Ok(self.t(x.value, x.scale)) } else { Err(Error::Singular("zero to a negative power".into())) };
                }
                let neg = b.is_negative(&x.value);
                if neg && n % 2 == 0 {
                    return Err(Error::Domain("even root of a negative value".into()));
                }
                let root = match n {
                    2 => b.sqrt(&x.value),
                    3 => b.cbrt(&x.value),
                    _ => {
                        let a = if neg { b.neg(&x.value) } else { x.value.clone() };
                        let k = b.from_rational(&BigRational::new(1.into(), n.into()));
                        let r = b.exp(&b.mul(&b.ln(&a), &k));
                        if neg {
                            b.neg(&r)
                        } else {
                            r
                        }
                    }
                };
                let v = b.powi(&root, m);
                let rel = (x.scale / self.abs(&x.value)).max(1.0);
                let s = self.abs(&v) * rel;
                Ok(self.t(v, s))
            }
            Node::PowExpr(base, ex) => {
                let x = self.eval(base)?;
                if b.is_negative(&x.value) || b.is_zero(&x.value) {
                    return Err(Error::Domain("symbolic power of a non-positive base".into()));
                }
                let k = self.eval(ex)?;
                let lnx = b.ln(&x.value);
                let v = b.exp(&b.mul(&lnx, &k.value));
                let rel = (x.scale / self.abs(&x.value)).max(1.0) * (1.0 + self.abs(&k.value)) + k.scale * self.abs(&lnx);
                let s = self.abs(&v) * rel.max(1.0);
                Ok(self.t(v, s))
            }
            Node::Ln(a) => {
                let x = self.eval(a)?;
                if b.is_negative(&x.value) || self.negligible(&x) {
                    return Err(Error::Domain("logarithm of a non-positive value".into()));
                }
                let v = b.ln(&x.value);
                let s = self.abs(&v).max(x.scale / self.abs(&x.value));
                Ok(self.t(v, s))
            }
            Node::Exp(a) => {
                let x = self.eval(a)?;
                let v = b.exp(&x.value);
                let s = self.abs(&v) * x.scale.max(1.0);
                Ok(self.t(v, s))
            }
        }
    }
}

/// Value of J at a point: the real cube root of `I3`, with matching scale.
pub fn j_from_i3<B: Backend>(b: &B, i3: &Tracked<B::V>) -> Tracked<B::V> {
    let v = b.cbrt(&i3.value);
    let rel = (i3.scale / b.to_f64(&i3.value).abs()).max(1.0);
    let s = b.to_f64(&v).abs() * rel;
    Tracked { value: v, scale: s }
}

/// Multi-precision evaluation. J, when present, is the real cube root of
/// `i3` at the point.
pub fn eval_float(e: &Expr, pt: &SamplePoint, precision_bits: usize, i3: Option<&Expr>) -> Result<BigFloat> {
    let b = Big::new(precision_bits);
    let j = match i3 {
        Some(i3) if e.contains_j() => Some(j_from_i3(&b, &eval_with(&b, i3, pt, None)?)),
        _ => None,
    };
    Ok(eval_with(&b, e, pt, j.as_ref())?.value)
}

/// Machine-precision evaluation, J handled as in [`eval_float`].
pub fn eval_f64(e: &Expr, pt: &SamplePoint, i3: Option<&Expr>) -> Result<f64> {
    let b = F64;
    let j = match i3 {
        Some(i3) if e.contains_j() => Some(j_from_i3(&b, &eval_with(&b, i3, pt, None)?)),
        _ => None,
    };
    Ok(eval_with(&b, e, pt, j.as_ref())?.value)
}

/// Converts a multi-precision value to the nearest `f64`.
pub fn big_to_f64(x: &BigFloat) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    match x.as_raw_parts() {
        Some((m, _, sign, e, _)) => {
            let top = *m.last().unwrap_or(&0) as f64 / 2f64.powi(64);
            let v = top * 2f64.powi(e);
            if sign == Sign::Neg {
                -v
            } else {
                v
            }
        }
        None => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn exact_powers_of_j() {
        let c = CubicScalar::generator(r(2, 1));
        let pt = SamplePoint::from_ints(1, 1, 1, 1);
        let j2 = eval_exact(&Expr::j().powi(2), &pt, &c).unwrap();
        assert_eq!(j2, CubicScalar::new(r(0, 1), r(0, 1), r(1, 1), r(2, 1)));
        let inv = eval_exact(&Expr::j().powi(-1), &pt, &c).unwrap();
        assert_eq!(inv, CubicScalar::new(r(0, 1), r(0, 1), r(1, 2), r(2, 1)));
        let z = eval_exact(&(Expr::j().powi(3) - Expr::int(2)), &pt, &c).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn real_cube_root_of_negative_i3() {
        let pt = SamplePoint::from_ints(0, 0, 0, 0);
        let v = eval_float(&Expr::j(), &pt, 256, Some(&Expr::int(-8))).unwrap();
        assert_eq!(big_to_f64(&v), -2.0);
    }

    #[test]
    fn log_of_one() {
        let pt = SamplePoint::from_ints(0, 0, 1, 0);
        let v = eval_float(&parse("ln(p)").unwrap(), &pt, 256, None).unwrap();
        assert!(v.is_zero() || big_to_f64(&v).abs() < 1e-70);
    }

    #[test]
    fn cube_root_to_seventy_digits() {
        // Newton iteration on rationals for cbrt(2/27) = cbrt(2)/3.
        let mut x = r(14, 10);
        for _ in 0..9 {
            x = (BigRational::from_integer(2.into()) * &x + r(2, 1) / (&x * &x)) / BigRational::from_integer(3.into());
            // keep the rational size bounded
            let scale = num_bigint::BigInt::from(10).pow(120);
            x = BigRational::new((&x * BigRational::from_integer(scale.clone())).round().to_integer(), scale);
        }
        let oracle = x / BigRational::from_integer(3.into());
        let pt = SamplePoint::new();
        let b = Big::new(256);
        let got = eval_with(&b, &parse("(2/27)^(1/3)").unwrap(), &pt, None).unwrap().value;
        let want = b.from_rational(&oracle);
        let diff = b.sub(&got, &want);
        assert!(b.to_f64(&diff).abs() < 1e-72, "diff {}", b.to_f64(&diff));
    }

    #[test]
    fn exact_free_uses_first_radicand() {
        let pt = SamplePoint::from_ints(0, 0, 0, 0);
        let e = parse("cbrt(2)*cbrt(4) - 2 + cbrt(16) - 2*cbrt(2)").unwrap();
        assert!(eval_exact_free(&e, &pt).unwrap().is_zero());
    }
}
