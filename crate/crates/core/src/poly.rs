//! Sparse Laurent polynomials over the rationals.
//!
//! The indeterminates are [`Atom`]s: jet coordinates, parameters, the J
//! symbol, and opaque subterms such as `ln(p)` or `(2*alpha^3 - 9*alpha)^(1/3)`.
//! Exponents may be negative, so every monomial is a unit.

use std::cmp::Ordering;
use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::expr::{Expr, Node, VarId};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Var(VarId),
    J,
    Ln(Expr),
    Exp(Expr),
    /// `base^(1/n)`; odd `n` denotes the real root.
    Root(Expr, u32),
    /// `base^exponent` with a non-constant exponent.
    Power(Expr, Expr),
}

impl Atom {
    pub fn to_expr(&self) -> Expr {
        match self {
            Atom::Var(v) => Expr::var(v.clone()),
            Atom::J => Expr::j(),
            Atom::Ln(a) => a.ln(),
            Atom::Exp(a) => a.exp(),
            Atom::Root(b, n) => b.pow(BigRational::new(1.into(), (*n).into())),
            Atom::Power(b, e) => Expr::new(Node::PowExpr(b.clone(), e.clone())),
        }
    }

    pub fn is_transcendental(&self) -> bool {
        matches!(self, Atom::Ln(_) | Atom::Exp(_) | Atom::Power(_, _))
    }

    /// Whether the atom can depend on `v`. J is reported separately.
    pub fn mentions(&self, v: &VarId) -> bool {
        match self {
            Atom::Var(w) => w == v,
            Atom::J => false,
            Atom::Ln(a) | Atom::Exp(a) | Atom::Root(a, _) => a.contains_var(v),
            Atom::Power(b, e) => b.contains_var(v) || e.contains_var(v),
        }
    }

    pub fn mentions_j(&self) -> bool {
        match self {
            Atom::J => true,
            Atom::Var(_) => false,
            Atom::Ln(a) | Atom::Exp(a) | Atom::Root(a, _) => a.contains_j(),
            Atom::Power(b, e) => b.contains_j() || e.contains_j(),
        }
    }
}

/// A Laurent monomial: sorted `(atom, exponent)` pairs with non-zero exponents.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Monomial(Vec<(Atom, i32)>);

impl Monomial {
    pub fn one() -> Monomial {
        Monomial(Vec::new())
    }

    pub fn atom(a: Atom, k: i32) -> Monomial {
        if k == 0 {
            Monomial::one()
        } else {
            Monomial(vec![(a, k)])
        }
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn factors(&self) -> &[(Atom, i32)] {
        &self.0
    }

    pub fn degree(&self) -> i64 {
        self.0.iter().map(|(_, k)| *k as i64).sum()
    }

    pub fn exponent(&self, a: &Atom) -> i32 {
        self.0
            .binary_search_by(|(b, _)| b.cmp(a))
            .map(|i| self.0[i].1)
            .unwrap_or(0)
    }

    fn merge(&self, other: &Monomial, sign: i32) -> Monomial {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() || j < other.0.len() {
            let ord = match (self.0.get(i), other.0.get(j)) {
                (Some(a), Some(b)) => a.0.cmp(&b.0),
                (Some(_), None) => Ordering::Less,
                (None, Some(_)) => Ordering::Greater,
                (None, None) => unreachable!(),
            };
            match ord {
                Ordering::Less => {
                    out.push(self.0[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    let (a, k) = &other.0[j];
                    out.push((a.clone(), sign * k));
                    j += 1;
                }
                Ordering::Equal => {
                    let k = self.0[i].1 + sign * other.0[j].1;
                    if k != 0 {
                        out.push((self.0[i].0.clone(), k));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        Monomial(out)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        if other.is_one() {
            return self.clone();
        }
        if self.is_one() {
            return other.clone();
        }
        self.merge(other, 1)
    }

    pub fn div(&self, other: &Monomial) -> Monomial {
        self.merge(other, -1)
    }

    pub fn inv(&self) -> Monomial {
        Monomial(self.0.iter().map(|(a, k)| (a.clone(), -k)).collect())
    }

    pub fn pow(&self, n: i32) -> Monomial {
        if n == 0 {
            return Monomial::one();
        }
        Monomial(self.0.iter().map(|(a, k)| (a.clone(), k * n)).collect())
    }

    /// `self` divides `other` as ordinary (non-negative) monomials.
    pub fn divides(&self, other: &Monomial) -> bool {
        self.0.iter().all(|(a, k)| other.exponent(a) >= *k)
    }

    /// Per-atom minimum of the exponents (zero for atoms absent on one side).
    pub fn min(&self, other: &Monomial) -> Monomial {
        let atoms: BTreeSet<&Atom> = self.0.iter().chain(other.0.iter()).map(|(a, _)| a).collect();
        Monomial(
            atoms
                .into_iter()
                .filter_map(|a| {
                    let k = self.exponent(a).min(other.exponent(a));
                    (k != 0).then(|| (a.clone(), k))
                })
                .collect(),
        )
    }

    /// Splits into (numerator, denominator) monomials with positive exponents.
    pub fn split_signs(&self) -> (Monomial, Monomial) {
        let pos = self.0.iter().filter(|(_, k)| *k > 0).cloned().collect();
        let neg = self.0.iter().filter(|(_, k)| *k < 0).map(|(a, k)| (a.clone(), -k)).collect();
        (Monomial(pos), Monomial(neg))
    }

    pub fn without(&self, a: &Atom) -> Monomial {
        Monomial(self.0.iter().filter(|(b, _)| b != a).cloned().collect())
    }
}

impl Ord for Monomial {
    /// Graded lexicographic order with atoms ranked by their own order.
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            o => return o,
        }
        let (mut i, mut j) = (0, 0);
        loop {
            match (self.0.get(i), other.0.get(j)) {
                (None, None) => return Ordering::Equal,
                (Some((_, k)), None) => return k.cmp(&0),
                (None, Some((_, k))) => return 0.cmp(k),
                (Some((a, ka)), Some((b, kb))) => match a.cmp(b) {
                    Ordering::Equal => {
                        if ka != kb {
                            return ka.cmp(kb);
                        }
                        i += 1;
                        j += 1;
                    }
                    Ordering::Less => return ka.cmp(&0),
                    Ordering::Greater => return 0.cmp(kb),
                },
            }
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Poly {
    terms: BTreeMap<Monomial, BigRational>,
}

impl Poly {
    pub fn zero() -> Poly {
        Poly::default()
    }

    pub fn one() -> Poly {
        Poly::constant(BigRational::one())
    }

    pub fn constant(c: BigRational) -> Poly {
        Poly::term(Monomial::one(), c)
    }

    pub fn term(m: Monomial, c: BigRational) -> Poly {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(m, c);
        }
        Poly { terms }
    }

    pub fn atom(a: Atom) -> Poly {
        Poly::term(Monomial::atom(a, 1), BigRational::one())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                m.is_one().then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn as_term(&self) -> Option<(&Monomial, &BigRational)> {
        if self.terms.len() == 1 {
            self.terms.iter().next()
        } else {
            None
        }
    }

    pub fn leading(&self) -> Option<(&Monomial, &BigRational)> {
        self.terms.iter().next_back()
    }

    fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let (mut big, small) = if self.len() >= other.len() {
            (self.clone(), other)
        } else {
            (other.clone(), self)
        };
        for (m, c) in &small.terms {
            big.add_term(m.clone(), c.clone());
        }
        big
    }

    pub fn neg(&self) -> Poly {
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c);
        }
        out
    }

    pub fn scale(&self, k: &BigRational) -> Poly {
        if k.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * k)).collect(),
        }
    }

    pub fn mul_monomial(&self, m: &Monomial) -> Poly {
        if m.is_one() {
            return self.clone();
        }
        Poly {
            terms: self.terms.iter().map(|(n, c)| (n.mul(m), c.clone())).collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        if let Some((m, c)) = other.as_term() {
            return self.mul_monomial(m).scale(c);
        }
        if let Some((m, c)) = self.as_term() {
            return other.mul_monomial(m).scale(c);
        }
        let mut acc: BTreeMap<Monomial, BigRational> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let m = ma.mul(mb);
                let c = ca * cb;
                match acc.entry(m) {
                    Entry::Vacant(v) => {
                        v.insert(c);
                    }
                    Entry::Occupied(mut o) => *o.get_mut() += c,
                }
            }
        }
        acc.retain(|_, c| !c.is_zero());
        Poly { terms: acc }
    }

    pub fn pow(&self, n: u32) -> Poly {
        let mut result = Poly::one();
        let mut base = self.clone();
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                result = result.mul(&base);
            }
            n >>= 1;
            if n > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    /// Per-atom minimum exponent over all terms.
    pub fn monomial_content(&self) -> Monomial {
        let mut it = self.terms.keys();
        let Some(first) = it.next() else {
            return Monomial::one();
        };
        it.fold(first.clone(), |acc, m| Monomial::min(&acc, m))
    }

    /// Positive rational `c` (sign chosen so the leading coefficient of
    /// `self / c` is positive) making `self / c` integral and primitive.
    pub fn content(&self) -> BigRational {
        let mut num_gcd = BigInt::zero();
        let mut den_lcm = BigInt::one();
        for c in self.terms.values() {
            num_gcd = num_gcd.gcd(c.numer());
            den_lcm = den_lcm.lcm(c.denom());
        }
        if num_gcd.is_zero() {
            return BigRational::one();
        }
        let c = BigRational::new(num_gcd, den_lcm);
        match self.leading() {
            Some((_, lc)) if lc.is_negative() => -c,
            _ => c,
        }
    }

    /// Splits `self = c * m * g` with `g` primitive, sign-normalized and
    /// free of monomial content.
    pub fn split_content(&self) -> (BigRational, Monomial, Poly) {
        let c = self.content();
        let m = self.monomial_content();
        let inv_c = c.recip();
        let inv_m = m.inv();
        let g = Poly {
            terms: self
                .terms
                .iter()
                .map(|(n, k)| (n.mul(&inv_m), k * &inv_c))
                .collect(),
        };
        (c, m, g)
    }

    /// Exact division by `f`, which must have non-negative exponents and no
    /// monomial content. Returns `None` when `f` does not divide `self`.
    pub fn div_exact(&self, f: &Poly) -> Option<Poly> {
        if f.is_zero() {
            return None;
        }
        if self.is_zero() {
            return Some(Poly::zero());
        }
        if let Some((m, c)) = f.as_term() {
            return Some(self.mul_monomial(&m.inv()).scale(&c.recip()));
        }
        // Shift to ordinary polynomials; f has no monomial factor so the
        // shift does not change divisibility.
        let shift = {
            let mc = self.monomial_content();
            let (_, neg) = mc.split_signs();
            neg
        };
        let mut rem = self.mul_monomial(&shift);
        // Degree bounds per atom give a cheap early exit.
        let (lm_f, lc_f) = f.leading().unwrap();
        let lc_inv = lc_f.recip();
        for (a, k) in lm_f.factors() {
            let max = rem.terms.keys().map(|m| m.exponent(a)).max().unwrap_or(0);
            if max < *k {
                return None;
            }
        }
        let mut quot = Poly::zero();
        while let Some((lm, lc)) = rem.leading() {
            if !lm_f.divides(lm) {
                return None;
            }
            let qm = lm.div(lm_f);
            let qc = lc * &lc_inv;
            let t = Poly::term(qm.clone(), qc.clone());
            rem = rem.sub(&f.mul(&t));
            quot.add_term(qm, qc);
        }
        Some(quot.mul_monomial(&shift.inv()))
    }

    /// Formal partial derivative with respect to an atom.
    pub fn d_atom(&self, a: &Atom) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let k = m.exponent(a);
            if k != 0 {
                let nm = m.mul(&Monomial::atom(a.clone(), -1));
                out.add_term(nm, c * BigRational::from_integer(k.into()));
            }
        }
        out
    }

    pub fn atoms(&self) -> BTreeSet<Atom> {
        self.terms
            .keys()
            .flat_map(|m| m.factors().iter().map(|(a, _)| a.clone()))
            .collect()
    }

    pub fn mentions(&self, a: &Atom) -> bool {
        self.terms.keys().any(|m| m.exponent(a) != 0)
    }

    /// Groups terms by the exponent of `a`: `self = sum_k coeffs[k] * a^k`.
    pub fn group_by(&self, a: &Atom) -> BTreeMap<i32, Poly> {
        let mut out: BTreeMap<i32, Poly> = BTreeMap::new();
        for (m, c) in &self.terms {
            let k = m.exponent(a);
            out.entry(k).or_default().add_term(m.without(a), c.clone());
        }
        out
    }

    pub fn map_coeffs(&self, f: impl Fn(&BigRational) -> BigRational) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            out.add_term(m.clone(), f(c));
        }
        out
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, BigRational)>) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in terms {
            out.add_term(m, c);
        }
        out
    }
}

pub fn rat_powi(b: &BigRational, n: i64) -> BigRational {
    if n >= 0 {
        num_traits::pow(b.clone(), n as usize)
    } else {
        num_traits::pow(b.recip(), (-n) as usize)
    }
}

/// Exact integer n-th root of a rational, honouring real odd roots of
/// negative values.
pub fn rat_nth_root(q: &BigRational, n: u32) -> Option<BigRational> {
    if q.is_negative() {
        if n % 2 == 0 {
            return None;
        }
        return rat_nth_root(&-q, n).map(|r| -r);
    }
    let a = int_nth_root(q.numer(), n)?;
    let b = int_nth_root(q.denom(), n)?;
    Some(BigRational::new(a, b))
}

fn int_nth_root(z: &BigInt, n: u32) -> Option<BigInt> {
    if z.is_negative() {
        return None;
    }
    let r = z.nth_root(n);
    (num_traits::pow(r.clone(), n as usize) == *z).then_some(r)
}

pub fn rat_to_i32(q: &BigRational) -> Option<i32> {
    if q.is_integer() {
        q.to_integer().to_i32()
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: VarId) -> Poly {
        Poly::atom(Atom::Var(x))
    }

    fn r(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    #[test]
    fn exact_division_recovers_factor() {
        let x = v(VarId::X);
        let u = v(VarId::U);
        let f = x.add(&u.scale(&r(2))).add(&Poly::one());
        let g = x.mul(&x).sub(&u);
        let prod = f.mul(&g);
        assert_eq!(prod.div_exact(&f), Some(g.clone()));
        assert_eq!(prod.div_exact(&g), Some(f.clone()));
        assert_eq!(g.add(&Poly::one()).div_exact(&f), None);
    }

    #[test]
    fn exact_division_handles_laurent_shift() {
        let x = v(VarId::X);
        let p = Poly::atom(Atom::Var(VarId::P));
        let f = x.add(&Poly::one());
        let n = f.mul(&Poly::term(Monomial::atom(Atom::Var(VarId::P), -3), r(5)));
        let q = n.div_exact(&f).unwrap();
        assert_eq!(q.mul(&p.pow(3)), Poly::constant(r(5)));
    }

    #[test]
    fn monomial_order_is_multiplicative() {
        let a = Monomial::atom(Atom::Var(VarId::X), 2);
        let b = Monomial::atom(Atom::Var(VarId::U), 1).mul(&Monomial::atom(Atom::Var(VarId::P), 1));
        let c = Monomial::atom(Atom::Var(VarId::Q), 3);
        assert_eq!(a.cmp(&b), a.mul(&c).cmp(&b.mul(&c)));
    }

    #[test]
    fn content_normalizes_sign_and_denominators() {
        let x = v(VarId::X);
        let p = x.scale(&BigRational::new((-2).into(), 3.into())).add(&Poly::constant(BigRational::new(4.into(), 9.into())));
        let (c, m, g) = p.split_content();
        assert!(m.is_one());
        assert_eq!(g.scale(&c), p);
        assert!(g.leading().unwrap().1 > &BigRational::zero());
    }

    #[test]
    fn nth_roots() {
        assert_eq!(rat_nth_root(&BigRational::new((-8).into(), 27.into()), 3), Some(BigRational::new((-2).into(), 3.into())));
        assert_eq!(rat_nth_root(&r(2), 3), None);
        assert_eq!(rat_nth_root(&r(-4), 2), None);
    }
}
