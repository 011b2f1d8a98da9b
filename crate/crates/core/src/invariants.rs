//! The relative invariants of `u''' = f` on the branch `I3 != 0`.
//!
//! Everything above `I3` is a rational function of the jet variables,
//! parameters and the symbol `J`, with `J^3 = I3`.

use std::collections::BTreeMap;

use num_rational::BigRational;

use crate::calculus::OdeContext;
use crate::error::{Error, Result};
use crate::expr::{Expr, VarId};
use crate::identity::{is_zero, SamplerConfig};
use crate::normal::RatFn;

/// Names of the tower entries in display order.
pub const NAMES: [&str; 17] = [
    "I1", "I2", "I3", "I4", "I5", "I6", "I7", "I8", "I9", "I10", "I11", "I12", "I13", "I14", "I15", "K", "Q",
];

#[derive(Clone, Debug)]
pub struct InvariantSet {
    pub ctx: OdeContext,
    pub i1: Expr,
    pub i2: Expr,
    pub i3: Expr,
    pub i4: Expr,
    pub i5: Expr,
    pub i6: Expr,
    pub i7: Expr,
    pub i8: Expr,
    pub i9: Expr,
    pub i10: Expr,
    pub i11: Expr,
    pub i12: Expr,
    pub i13: Expr,
    pub i14: Expr,
    pub i15: Expr,
    pub k: Expr,
    pub q: Expr,
    /// The constant of the five-symmetry canonical form when `K` is constant.
    pub s_candidate: Expr,
    /// Total derivative of `K`.
    pub dk: Expr,
    /// `K_x, K_u, K_p, K_q`.
    pub k_partials: [Expr; 4],
    rats: BTreeMap<String, RatFn>,
}

fn third() -> BigRational {
    BigRational::new(1.into(), 3.into())
}

fn c(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// `(I1, I2, I3)`, all free of J.
pub fn compute_base(f: &Expr) -> Result<(Expr, Expr, Expr)> {
    let ctx = OdeContext::new(f)?;
    let (i1, i2, i3) = base_rat(&ctx)?;
    Ok((i1.to_expr(), i2.to_expr(), i3.to_expr()))
}

fn base_rat(ctx: &OdeContext) -> Result<(RatFn, RatFn, RatFn)> {
    let f = ctx.f_rat();
    let i1 = ctx.partial_rat(f, &VarId::Q)?.neg();
    let i2 = i1
        .mul(&i1)
        .scale(&c(-2, 9))
        .sub(&ctx.partial_rat(f, &VarId::P)?)
        .sub(&ctx.total_d_rat(&i1)?.scale(&third()));
    let i3 = i1
        .mul(&i2)
        .scale(&-third())
        .sub(&ctx.partial_rat(f, &VarId::U)?)
        .sub(&ctx.total_d_rat(&i2)?.scale(&c(1, 2)));
    Ok((i1, i2, i3))
}

/// Full tower with the default sampler for the `I3` gate.
pub fn compute_tower(f: &Expr) -> Result<InvariantSet> {
    compute_tower_with(f, &SamplerConfig::default())
}

pub fn compute_tower_with(f: &Expr, cfg: &SamplerConfig) -> Result<InvariantSet> {
    let base = OdeContext::new(f)?;
    let (i1, i2, i3) = base_rat(&base)?;
    if i3.is_zero() || is_zero(&i3.to_expr(), &base, cfg).map_err(|e| e.with_condition("I3"))?.is_zero() {
        return Err(Error::WuenschmannZero);
    }
    let ctx = base.with_i3(&i3.to_expr())?;
    Tower::new(&ctx)?.finish(i1, i2, i3)
}

struct Tower<'a> {
    ctx: &'a OdeContext,
}

impl Tower<'_> {
    fn new(ctx: &OdeContext) -> Result<Tower<'_>> {
        Ok(Tower { ctx })
    }

    fn d(&self, r: &RatFn) -> Result<RatFn> {
        self.ctx.total_d_rat(r)
    }

    fn pd(&self, r: &RatFn, v: VarId) -> Result<RatFn> {
        self.ctx.partial_rat(r, &v)
    }

    fn red(&self, r: RatFn) -> Result<RatFn> {
        self.ctx.reduce(r)
    }

    fn finish(self, i1: RatFn, i2: RatFn, i3: RatFn) -> Result<InvariantSet> {
        let ctx = self.ctx;
        let j = RatFn::j();
        let j2 = self.red(j.mul(&j))?;
        let (i1, i2) = (self.red(i1)?, self.red(i2)?);

        let i4 = self.pd(&j, VarId::Q)?;
        let dj = self.d(&j)?;
        let i5 = self.red(i1.mul(&j).add(&dj.scale(&c(3, 1))).div(&j2.scale(&c(3, 1)))?)?;
        let (i5q, di5) = rayon::join(|| self.pd(&i5, VarId::Q), || self.d(&i5));
        let (i5q, di5) = (i5q?, di5?);
        let i7 = self.red(i5q.mul(&j2).neg())?;
        let i9 = self.red(j.mul(&di5).scale(&c(2, 1)).sub(&i2).add(&j2.mul(&i5).mul(&i5)))?;
        let k = self.red(i9.div(&j2)?)?;

        let jq = i4.clone();
        let jp = self.pd(&j, VarId::P)?;
        let ju = self.pd(&j, VarId::U)?;
        let i1q = self.pd(&i1, VarId::Q)?;
        let i6 = self.red(
            jq.mul(&i1)
                .scale(&c(2, 3))
                .sub(&i1q.mul(&j).scale(&third()))
                .sub(&jp.scale(&c(2, 1)))
                .add(&j.mul(&i4).mul(&i5).scale(&c(2, 1))),
        )?;
        let i8 = self.pd(&i4, VarId::Q)?;

        let di7 = self.d(&i7)?;
        let i7p = self.pd(&i7, VarId::P)?;
        let i4_over_j_u = self.pd(&self.red(i4.div(&j)?)?, VarId::U)?;
        let i10 = self.red(i4.mul(&di7).sub(&j.mul(&i7p)).add(&j2.mul(&i4_over_j_u)))?;
        let i11 = self.red(ju.sub(&di7))?;

        let di4 = self.d(&i4)?;
        let i5p = self.pd(&i5, VarId::P)?;
        let i5u = self.pd(&i5, VarId::U)?;
        let i2p = self.pd(&i2, VarId::P)?;
        let i1_over_j_u = self.pd(&self.red(i1.div(&j)?)?, VarId::U)?;
        let j3 = self.red(j2.mul(&j))?;
        let terms = [
            i1.mul(&j).mul(&i5.mul(&i7).sub(&i4.mul(&di5))).scale(&c(6, 1)),
            j3.mul(&i4).scale(&c(-18, 1)),
            i5p.mul(&i1).mul(&j2).scale(&c(6, 1)),
            i2.mul(&j).mul(&i4).mul(&i5).scale(&c(-18, 1)),
            j.mul(&i7).mul(&di5).scale(&c(-18, 1)),
            j2.mul(&i5u).scale(&c(18, 1)),
            i2.mul(&di4).scale(&c(18, 1)),
            i1.mul(&i1).mul(&i7).scale(&c(2, 1)),
            i2p.mul(&j).scale(&c(-9, 1)),
            j2.mul(&i1_over_j_u).scale(&c(6, 1)),
            i2.mul(&i7).scale(&c(36, 1)),
        ];
        let i12 = self.red(terms.iter().fold(RatFn::zero(), |acc, t| acc.add(t)))?;

        let dk = self.d(&k)?;
        let kx = self.pd(&k, VarId::X)?;
        let ku = self.pd(&k, VarId::U)?;
        let kp = self.pd(&k, VarId::P)?;
        let kq = self.pd(&k, VarId::Q)?;
        let i13 = self.red(
            j.mul(&i4)
                .mul(&i5)
                .sub(&i7)
                .mul(&dk)
                .add(&j.mul(&ku))
                .sub(&j2.mul(&i5).mul(&kp)),
        )?;
        let i14 = kq.clone();
        let i15 = self.red(i4.mul(&dk).sub(&j.mul(&kp)))?;
        let q = self.red(
            i1.mul(&i7)
                .add(&j2.mul(&i5p).scale(&c(3, 1)))
                .add(&ju.scale(&c(3, 1)))
                .sub(&j.mul(&i4).mul(&di5).scale(&c(3, 1)))
                .div(&j.scale(&c(-3, 1)))?,
        )?;

        let mut rats = BTreeMap::new();
        for (name, r) in [
            ("I1", &i1),
            ("I2", &i2),
            ("I3", &i3),
            ("I4", &i4),
            ("I5", &i5),
            ("I6", &i6),
            ("I7", &i7),
            ("I8", &i8),
            ("I9", &i9),
            ("I10", &i10),
            ("I11", &i11),
            ("I12", &i12),
            ("I13", &i13),
            ("I14", &i14),
            ("I15", &i15),
            ("K", &k),
            ("Q", &q),
            ("DK", &dk),
            ("K_x", &kx),
            ("K_u", &ku),
            ("K_p", &kp),
            ("K_q", &kq),
            ("J", &j),
        ] {
            rats.insert(name.to_string(), r.clone());
        }
        let e = |r: &RatFn| r.to_expr();
        Ok(InvariantSet {
            ctx: ctx.clone(),
            i1: e(&i1),
            i2: e(&i2),
            i3: e(&i3),
            i4: e(&i4),
            i5: e(&i5),
            i6: e(&i6),
            i7: e(&i7),
            i8: e(&i8),
            i9: e(&i9),
            i10: e(&i10),
            i11: e(&i11),
            i12: e(&i12),
            i13: e(&i13),
            i14: e(&i14),
            i15: e(&i15),
            s_candidate: e(&k),
            k: e(&k),
            q: e(&q),
            dk: e(&dk),
            k_partials: [e(&kx), e(&ku), e(&kp), e(&kq)],
            rats,
        })
    }
}

impl InvariantSet {
    /// Looks up an entry by name: `I1`..`I15`, `K`, `Q`, `DK`, `K_x`..`K_q`
    /// or `J`.
    pub fn get(&self, name: &str) -> Option<Expr> {
        self.rats.get(name).map(RatFn::to_expr)
    }

    pub fn rat(&self, name: &str) -> Option<&RatFn> {
        self.rats.get(name)
    }

    /// `(name, expression)` pairs in display order.
    pub fn entries(&self) -> Vec<(&'static str, Expr)> {
        NAMES.iter().map(|n| (*n, self.get(n).expect("tower entry"))).collect()
    }

    /// Decides whether `lhs - rhs` vanishes on the equation's jet space.
    pub fn matches(&self, name: &str, rhs: &Expr, cfg: &SamplerConfig) -> Result<bool> {
        let lhs = self.get(name).ok_or_else(|| Error::Malformed(format!("unknown invariant `{name}`")))?;
        Ok(is_zero(&(lhs - rhs.clone()), &self.ctx, cfg)?.is_zero())
    }
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
    fn base_of_example_one() {
        let (i1, _, i3) = compute_base(&parse("alpha*q^2/p").unwrap()).unwrap();
        assert_eq!(i1, n("-2*alpha*q/p"));
        assert_eq!(i3, n("(2*alpha^3 - 9*alpha^2 + 9*alpha)*q^3/(27*p^3)"));
    }

    #[test]
    fn base_of_zero_and_canonical() {
        let (i1, i2, i3) = compute_base(&Expr::zero()).unwrap();
        assert!(i1.is_zero_node() && i2.is_zero_node() && i3.is_zero_node());
        let (i1, i2, i3) = compute_base(&parse("s*p + u").unwrap()).unwrap();
        assert_eq!((i1, i2, i3), (Expr::zero(), n("-s"), Expr::int(-1)));
    }

    #[test]
    fn zero_rhs_has_no_tower() {
        assert!(matches!(compute_tower(&Expr::zero()), Err(Error::WuenschmannZero)));
    }

    #[test]
    fn example_two_tower() {
        let t = compute_tower(&parse("-x*p^4*q^3 + u*p^3*q^3").unwrap()).unwrap();
        let cfg = SamplerConfig::default();
        assert!(t.matches("J", &n("-p*q"), &cfg).unwrap());
        assert!(t.matches("I1", &n("3*p^3*q^2*(p*x - u)"), &cfg).unwrap());
        assert!(t.matches("I4", &n("-p"), &cfg).unwrap());
        assert!(t.matches("I5", &n("-1/p^2"), &cfg).unwrap());
        assert!(t.matches("I7", &Expr::zero(), &cfg).unwrap());
        assert!(t.matches("Q", &Expr::zero(), &cfg).unwrap());
        assert!(t.matches("K", &n("-3/p^4"), &cfg).unwrap());
    }

    #[test]
    fn canonical_five_tower() {
        let t = compute_tower(&parse("s*p + u").unwrap()).unwrap();
        assert_eq!(t.k, n("s"));
        for name in ["I4", "I5", "I7", "Q"] {
            assert!(t.get(name).unwrap().is_zero_node(), "{name}");
        }
    }

    #[test]
    fn tower_identities() {
        let t = compute_tower(&parse("alpha*q^2/p").unwrap()).unwrap();
        let cfg = SamplerConfig::default();
        let j2 = Expr::j().powi(2);
        assert!(is_zero(&(t.k.clone() * j2 - t.i9.clone()), &t.ctx, &cfg).unwrap().is_zero());
        assert!(is_zero(&(t.i14.clone() - t.k_partials[3].clone()), &t.ctx, &cfg).unwrap().is_zero());
    }
}
