//! Partial and total derivatives on the second-order jet space.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::FromPrimitive;

use crate::error::{Error, Result};
use crate::eval::{eval_with, j_from_i3, Backend, Big, SamplePoint};
use crate::expr::{Expr, VarId};
use crate::normal::RatFn;
use crate::poly::rat_nth_root;

/// The equation `u''' = f` together with its cached `I3`.
///
/// Once `I3` is attached, J is rewritten modulo `J^3 = I3` after every
/// derivative and `dJ/dv = I3_v / (3 J^2)` is available.
#[derive(Clone, Debug)]
pub struct OdeContext {
    pub f: Expr,
    f_rat: RatFn,
    i3: Option<RatFn>,
    i3_expr: Option<Expr>,
    dj: BTreeMap<VarId, RatFn>,
    /// `J` itself when `I3` is a perfect cube of a monomial quotient.
    j_closed: Option<RatFn>,
    pub j_rewrite_enabled: bool,
}

impl OdeContext {
    pub fn new(f: &Expr) -> Result<OdeContext> {
        let f_rat = RatFn::from_expr(f)?;
        if f_rat.mentions_j() {
            return Err(Error::Malformed("the right-hand side may not contain J".into()));
        }
        Ok(OdeContext {
            f: f_rat.to_expr(),
            f_rat,
            i3: None,
            i3_expr: None,
            dj: BTreeMap::new(),
            j_closed: None,
            j_rewrite_enabled: false,
        })
    }

    /// Attaches `I3` and enables J rewriting.
    pub fn with_i3(mut self, i3: &Expr) -> Result<OdeContext> {
        let r = RatFn::from_expr(i3)?;
        if r.mentions_j() {
            return Err(Error::Malformed("I3 must be free of J".into()));
        }
        if r.is_zero() {
            return Err(Error::WuenschmannZero);
        }
        self.i3_expr = Some(r.to_expr());
        self.j_closed = real_cube_root(&r);
        self.i3 = Some(r);
        self.j_rewrite_enabled = true;
        let mut dj = BTreeMap::new();
        for v in VarId::JET {
            let d = self.dj_for(&v)?;
            dj.insert(v, d);
        }
        self.dj = dj;
        Ok(self)
    }

    pub fn f_rat(&self) -> &RatFn {
        &self.f_rat
    }

    pub fn i3(&self) -> Option<&Expr> {
        self.i3_expr.as_ref()
    }

    pub fn i3_rat(&self) -> Option<&RatFn> {
        self.i3.as_ref()
    }

    fn dj_for(&self, v: &VarId) -> Result<RatFn> {
        let i3 = self.i3.as_ref().ok_or(Error::MissingI3)?;
        let di3 = i3.derivative(v, None)?;
        // I3_v / (3 J^2) = I3_v * J / (3 I3)
        let r = di3.mul(&RatFn::j()).div(&i3.scale(&BigRational::from_integer(3.into())))?;
        r.reduce_j(i3)
    }

    /// Reduces modulo `J^3 = I3` when rewriting is enabled. If `I3` has an
    /// obvious real cube root, J is replaced by it.
    pub fn reduce(&self, r: RatFn) -> Result<RatFn> {
        match (&self.i3, self.j_rewrite_enabled) {
            (Some(i3), true) => {
                let r = r.reduce_j(i3)?;
                match &self.j_closed {
                    Some(j) if r.mentions_j() => RatFn::from_expr(&r.to_expr().replace_j(&j.to_expr())),
                    _ => Ok(r),
                }
            }
            _ => Ok(r),
        }
    }

    /// The closed form of J, when `I3` is a perfect cube.
    pub fn j_closed(&self) -> Option<&RatFn> {
        self.j_closed.as_ref()
    }

    pub fn partial_rat(&self, r: &RatFn, v: &VarId) -> Result<RatFn> {
        let owned;
        let dj = match self.dj.get(v) {
            Some(d) => Some(d),
            None if self.i3.is_some() && r.mentions_j() => {
                owned = self.dj_for(v)?;
                Some(&owned)
            }
            None => None,
        };
        self.reduce(r.derivative(v, dj)?)
    }

    /// `D = d/dx + p d/du + q d/dp + f d/dq`.
    pub fn total_d_rat(&self, r: &RatFn) -> Result<RatFn> {
        let mut out = self.partial_rat(r, &VarId::X)?;
        let coeffs = [
            (VarId::U, RatFn::var(VarId::P)),
            (VarId::P, RatFn::var(VarId::Q)),
            (VarId::Q, self.f_rat.clone()),
        ];
        for (v, c) in coeffs {
            if !(r.mentions_var(&v) || r.mentions_j()) {
                continue;
            }
            let d = self.partial_rat(r, &v)?;
            if !d.is_zero() {
                out = out.add(&c.mul(&d));
            }
        }
        self.reduce(out)
    }

    pub fn normal(&self, e: &Expr) -> Result<RatFn> {
        self.reduce(RatFn::from_expr(e)?)
    }

    pub fn partial(&self, e: &Expr, v: &VarId) -> Result<Expr> {
        Ok(self.partial_rat(&self.normal(e)?, v)?.to_expr())
    }

    pub fn total_d(&self, e: &Expr) -> Result<Expr> {
        Ok(self.total_d_rat(&self.normal(e)?)?.to_expr())
    }

    /// Relative gap between the symbolic partial and a central difference
    /// with step `h`, evaluated at 256 bits.
    pub fn fd_check(&self, e: &Expr, v: &VarId, pt: &SamplePoint, h: f64) -> Result<f64> {
        let sym = self.partial(e, v)?;
        let b = Big::new(256);
        let h = BigRational::from_f64(h).ok_or_else(|| Error::Malformed("invalid step".into()))?;
        let base = pt.get(v).ok_or_else(|| Error::Malformed(format!("variable `{v}` not assigned")))?.clone();
        let at = |e: &Expr, pt: &SamplePoint| -> Result<f64> {
            let j = match self.i3() {
                Some(i3) if e.contains_j() => Some(j_from_i3(&b, &eval_with(&b, i3, pt, None)?)),
                _ => None,
            };
            Ok(b.to_f64(&eval_with(&b, e, pt, j.as_ref())?.value))
        };
        let value_at = |e: &Expr, x: BigRational| -> Result<<Big as Backend>::V> {
            let mut p = pt.clone();
            p.set(v.clone(), x);
            let j = match self.i3() {
                Some(i3) if e.contains_j() => Some(j_from_i3(&b, &eval_with(&b, i3, &p, None)?)),
                _ => None,
            };
            Ok(eval_with(&b, e, &p, j.as_ref())?.value)
        };
        let e = self.normal(e)?.to_expr();
        let plus = value_at(&e, &base + &h)?;
        let minus = value_at(&e, &base - &h)?;
        let two_h = b.from_rational(&(&h + &h));
        let fd = b.to_f64(&b.div(&b.sub(&plus, &minus), &two_h));
        let s = at(&sym, pt)?;
        Ok((s - fd).abs() / s.abs().max(1.0))
    }
}

/// Real cube root of `c * m / prod g^e` when `c` is a rational cube and all
/// exponents are multiples of three.
fn real_cube_root(r: &RatFn) -> Option<RatFn> {
    let (m, c) = r.num().as_term()?;
    let c = rat_nth_root(c, 3)?;
    let mut out = RatFn::constant(c);
    for (a, k) in m.factors() {
        if k % 3 != 0 {
            return None;
        }
        out = out.mul(&RatFn::atom_pow(a.clone(), k / 3));
    }
    for (g, e) in r.den() {
        if e % 3 != 0 {
            return None;
        }
        out = out.div(&RatFn::from_poly(g.clone()).powi(i64::from(e / 3)).ok()?).ok()?;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal::normalize;
    use crate::parser::parse;

    fn n(s: &str) -> Expr {
        normalize(&parse(s).unwrap()).unwrap()
    }

    #[test]
    fn power_rule() {
        let ctx = OdeContext::new(&parse("alpha*q^2/p").unwrap()).unwrap();
        assert_eq!(ctx.partial(&parse("alpha*q^2/p").unwrap(), &VarId::Q).unwrap(), n("2*alpha*q/p"));
    }

    #[test]
    fn total_derivative_examples() {
        let ctx = OdeContext::new(&parse("alpha*q^2/p").unwrap()).unwrap();
        assert_eq!(ctx.total_d(&Expr::u()).unwrap(), Expr::p());
        let d = ctx.total_d(&parse("-2*alpha*q/p").unwrap()).unwrap();
        assert_eq!(d, n("2*alpha*q^2/p^2 - 2*alpha^2*q^2/p^2"));
        let ctx2 = OdeContext::new(&parse("-x*p^4*q^3 + u*p^3*q^3").unwrap()).unwrap();
        assert_eq!(ctx2.total_d(&Expr::p()).unwrap(), Expr::q());
    }

    #[test]
    fn j_chain_rule() {
        // I3 = -p^3 q^3, so J = -p q on the real branch and J_q = -p.
        let ctx = OdeContext::new(&parse("-x*p^4*q^3 + u*p^3*q^3").unwrap())
            .unwrap()
            .with_i3(&parse("-p^3*q^3").unwrap())
            .unwrap();
        let jq = ctx.partial(&Expr::j(), &VarId::Q).unwrap();
        assert_eq!(jq, -Expr::p());
        let j3p = ctx.partial(&Expr::j().powi(3), &VarId::P).unwrap();
        let i3p = ctx.partial(&parse("-p^3*q^3").unwrap(), &VarId::P).unwrap();
        assert_eq!(j3p, i3p);
    }

    #[test]
    fn j_chain_rule_symbolic() {
        // I3 = -2u has no rational cube root; J_u = I3_u J / (3 I3) = J/(3u).
        let ctx = OdeContext::new(&parse("u^2").unwrap()).unwrap().with_i3(&parse("-2*u").unwrap()).unwrap();
        assert!(ctx.j_closed().is_none());
        let ju = ctx.partial(&Expr::j(), &VarId::U).unwrap();
        assert_eq!(ju, normalize(&(Expr::j() / (Expr::int(3) * Expr::u()))).unwrap());
        let j2u = ctx.partial(&Expr::j().powi(2), &VarId::U).unwrap();
        assert_eq!(j2u, normalize(&(Expr::int(2) * Expr::j().powi(2) / (Expr::int(3) * Expr::u()))).unwrap());
    }

    #[test]
    fn finite_differences() {
        let ctx = OdeContext::new(&Expr::zero()).unwrap();
        let pt = SamplePoint::from_ints(0, 0, 3, 2);
        assert!(ctx.fd_check(&parse("q^3").unwrap(), &VarId::Q, &pt, 1e-6).unwrap() < 1e-8);
        assert!(ctx.fd_check(&parse("ln(p)").unwrap(), &VarId::P, &pt, 1e-6).unwrap() < 1e-8);
    }
}
