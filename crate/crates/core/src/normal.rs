//! Rational normal form.
//!
//! A [`RatFn`] is a Laurent polynomial numerator over a list of primitive,
//! non-monomial denominator factors. Monomials never appear in the
//! denominator; they are folded into the numerator as negative exponents.
//! Factors are kept refined (no factor divides another) and numerators are
//! cancelled against them by exact division, which is enough for
//! `normalize` to be idempotent without multivariate GCDs.

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::expr::{Expr, Node, VarId};
use crate::poly::{rat_nth_root, rat_powi, Atom, Monomial, Poly};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RatFn {
    num: Poly,
    den: Vec<(Poly, u32)>,
}

impl Default for RatFn {
    fn default() -> Self {
        RatFn::zero()
    }
}

impl RatFn {
    pub fn zero() -> RatFn {
        RatFn { num: Poly::zero(), den: Vec::new() }
    }

    pub fn one() -> RatFn {
        RatFn::constant(BigRational::one())
    }

    pub fn constant(q: BigRational) -> RatFn {
        RatFn::from_poly(Poly::constant(q))
    }

    pub fn int(n: i64) -> RatFn {
        RatFn::constant(BigRational::from_integer(n.into()))
    }

    pub fn frac(n: i64, d: i64) -> RatFn {
        RatFn::constant(BigRational::new(n.into(), d.into()))
    }

    pub fn from_poly(p: Poly) -> RatFn {
        RatFn { num: p, den: Vec::new() }
    }

    pub fn atom(a: Atom) -> RatFn {
        RatFn::from_poly(Poly::atom(a))
    }

    pub fn atom_pow(a: Atom, k: i32) -> RatFn {
        RatFn::from_poly(Poly::term(Monomial::atom(a, k), BigRational::one()))
    }

    pub fn var(v: VarId) -> RatFn {
        RatFn::atom(Atom::Var(v))
    }

    pub fn j() -> RatFn {
        RatFn::atom(Atom::J)
    }

    pub fn num(&self) -> &Poly {
        &self.num
    }

    pub fn den(&self) -> &[(Poly, u32)] {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn as_constant(&self) -> Option<BigRational> {
        if self.den.is_empty() {
            self.num.as_constant()
        } else {
            None
        }
    }

    fn polys(&self) -> impl Iterator<Item = &Poly> {
        std::iter::once(&self.num).chain(self.den.iter().map(|(f, _)| f))
    }

    pub fn mentions_j(&self) -> bool {
        self.polys().any(|p| p.atoms().iter().any(Atom::mentions_j))
    }

    pub fn mentions_var(&self, v: &VarId) -> bool {
        self.polys().any(|p| p.atoms().iter().any(|a| a.mentions(v)))
    }

    pub fn has_transcendental(&self) -> bool {
        self.polys().any(|p| p.atoms().iter().any(|a| a.to_expr().has_transcendental()))
    }

    /// Builds `num / prod(den)` from arbitrary (unnormalized) factors.
    pub fn from_parts(num: Poly, den: Vec<(Poly, u32)>) -> Result<RatFn> {
        let mut out = RatFn::from_poly(num);
        for (f, e) in den {
            let inv = RatFn::from_poly(f).inv()?;
            out = out.mul(&inv.powi(e as i64)?);
        }
        Ok(out)
    }

    pub fn neg(&self) -> RatFn {
        RatFn { num: self.num.neg(), den: self.den.clone() }
    }

    pub fn scale(&self, k: &BigRational) -> RatFn {
        if k.is_zero() {
            return RatFn::zero();
        }
        RatFn { num: self.num.scale(k), den: self.den.clone() }
    }

    pub fn mul(&self, other: &RatFn) -> RatFn {
        if self.is_zero() || other.is_zero() {
            return RatFn::zero();
        }
        if self.den.is_empty() && other.den.is_empty() {
            return RatFn::from_poly(self.num.mul(&other.num));
        }
        if let Some(c) = other.as_constant() {
            return self.scale(&c);
        }
        if let Some(c) = self.as_constant() {
            return other.scale(&c);
        }
        let mut na = self.num.clone();
        let mut db = other.den.clone();
        cancel(&mut na, &mut db);
        let mut nb = other.num.clone();
        let mut da = self.den.clone();
        cancel(&mut nb, &mut da);
        let (basis, exps) = common_basis(&[&da, &db]);
        let den = basis
            .into_iter()
            .zip(exps[0].iter().zip(&exps[1]))
            .map(|(f, (a, b))| (f, a + b))
            .collect();
        RatFn::assemble(na.mul(&nb), den)
    }

    pub fn add(&self, other: &RatFn) -> RatFn {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        if self.den == other.den {
            return RatFn::assemble(self.num.add(&other.num), self.den.clone());
        }
        let (basis, exps) = common_basis(&[&self.den, &other.den]);
        let mut ma = Poly::one();
        let mut mb = Poly::one();
        let mut den = Vec::with_capacity(basis.len());
        for (i, f) in basis.into_iter().enumerate() {
            let (ea, eb) = (exps[0][i], exps[1][i]);
            let e = ea.max(eb);
            if e > ea {
                ma = ma.mul(&f.pow(e - ea));
            }
            if e > eb {
                mb = mb.mul(&f.pow(e - eb));
            }
            den.push((f, e));
        }
        RatFn::assemble(self.num.mul(&ma).add(&other.num.mul(&mb)), den)
    }

    pub fn sub(&self, other: &RatFn) -> RatFn {
        self.add(&other.neg())
    }

    pub fn inv(&self) -> Result<RatFn> {
        if self.is_zero() {
            return Err(Error::Malformed("division by the zero polynomial".into()));
        }
        let (c, m, g) = self.num.split_content();
        let mut num = Poly::term(m.inv(), c.recip());
        for (f, e) in &self.den {
            num = num.mul(&f.pow(*e));
        }
        let den = if g.as_constant().is_some() { Vec::new() } else { vec![(g, 1)] };
        Ok(RatFn::assemble(num, den))
    }

    pub fn div(&self, other: &RatFn) -> Result<RatFn> {
        Ok(self.mul(&other.inv()?))
    }

    pub fn powi(&self, n: i64) -> Result<RatFn> {
        if n < 0 {
            return self.inv()?.powi(-n);
        }
        if self.den.is_empty() {
            return Ok(RatFn::from_poly(self.num.pow(n as u32)));
        }
        let mut result = RatFn::one();
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
        Ok(result)
    }

    fn assemble(mut num: Poly, mut den: Vec<(Poly, u32)>) -> RatFn {
        if num.is_zero() {
            return RatFn::zero();
        }
        cancel(&mut num, &mut den);
        den.sort();
        RatFn { num, den }
    }

    /// Product of the denominator factors, multiplied out.
    pub fn den_poly(&self) -> Poly {
        self.den.iter().fold(Poly::one(), |acc, (f, e)| acc.mul(&f.pow(*e)))
    }

    pub fn from_expr(e: &Expr) -> Result<RatFn> {
        Ok(match e.node() {
            Node::Int(n) => RatFn::constant(BigRational::from_integer(n.clone())),
            Node::Rational(q) => RatFn::constant(q.clone()),
            Node::Var(v) => RatFn::var(v.clone()),
            Node::J => RatFn::j(),
            Node::Sum(ts) => {
                let mut acc = RatFn::zero();
                for t in ts {
                    acc = acc.add(&RatFn::from_expr(t)?);
                }
                acc
            }
            Node::Product(fs) => {
                let mut acc = RatFn::one();
                for f in fs {
                    acc = acc.mul(&RatFn::from_expr(f)?);
                }
                acc.reduce_roots()?
            }
            Node::Quotient(a, b) => RatFn::from_expr(a)?.mul(&RatFn::inv_expr(b)?).reduce_roots()?,
            Node::Pow(b, r) => {
                if r.is_integer() {
                    let n = r.to_integer().to_i64().ok_or_else(|| Error::Malformed("exponent too large".into()))?;
                    if n < 0 {
                        RatFn::inv_expr(b)?.powi(-n)?.reduce_roots()?
                    } else {
                        RatFn::from_expr(b)?.powi(n)?.reduce_roots()?
                    }
                } else {
                    pow_rational(&RatFn::from_expr(b)?, r)?
                }
            }
            Node::PowExpr(b, x) => {
                let ex = RatFn::from_expr(x)?;
                match ex.as_constant() {
                    Some(r) => RatFn::from_expr(&b.pow(r))?,
                    None => pow_symbolic(&RatFn::from_expr(b)?, &ex)?,
                }
            }
            Node::Ln(a) => {
                let x = RatFn::from_expr(a)?;
                if x.as_constant().map(|c| c.is_one()).unwrap_or(false) {
                    RatFn::zero()
                } else if let Some(Atom::Exp(z)) = x.single_atom() {
                    RatFn::from_expr(&z)?
                } else {
                    RatFn::atom(Atom::Ln(x.to_expr()))
                }
            }
            Node::Exp(a) => exp_rat(&RatFn::from_expr(a)?)?,
        })
    }

    /// `1/e`, keeping the factor structure of products and powers.
    fn inv_expr(e: &Expr) -> Result<RatFn> {
        match e.node() {
            Node::Product(fs) => {
                let mut acc = RatFn::one();
                for f in fs {
                    acc = acc.mul(&RatFn::inv_expr(f)?);
                }
                Ok(acc)
            }
            Node::Pow(b, r) if r.is_integer() && r.is_positive() => {
                let n = r.to_integer().to_i64().ok_or_else(|| Error::Malformed("exponent too large".into()))?;
                RatFn::inv_expr(b)?.powi(n)
            }
            _ => RatFn::from_expr(e)?.inv(),
        }
    }

    /// The atom when `self` is exactly one atom to the first power.
    fn single_atom(&self) -> Option<Atom> {
        if !self.den.is_empty() {
            return None;
        }
        let (m, c) = self.num.as_term()?;
        match m.factors() {
            [(a, 1)] if c.is_one() => Some(a.clone()),
            _ => None,
        }
    }

    /// Rewrites `Root(b, n)^k` with `k` outside `0..n` as `b^(k div n) * Root^(k mod n)`.
    fn reduce_roots(self) -> Result<RatFn> {
        let needs = self.num.terms().any(|(m, _)| {
            m.factors().iter().any(|(a, k)| matches!(a, Atom::Root(_, n) if *k < 0 || *k >= *n as i32))
        });
        if !needs {
            return Ok(self);
        }
        let mut acc = RatFn::zero();
        for (m, c) in self.num.terms() {
            let mut keep = Monomial::one();
            let mut extra = RatFn::one();
            for (a, k) in m.factors() {
                match a {
                    Atom::Root(b, n) if *k < 0 || *k >= *n as i32 => {
                        let n = *n as i32;
                        let (q, r) = (k.div_euclid(n), k.rem_euclid(n));
                        keep = keep.mul(&Monomial::atom(a.clone(), r));
                        extra = extra.mul(&RatFn::from_expr(b)?.powi(q as i64)?);
                    }
                    _ => keep = keep.mul(&Monomial::atom(a.clone(), *k)),
                }
            }
            acc = acc.add(&RatFn::from_poly(Poly::term(keep, c.clone())).mul(&extra));
        }
        let den = RatFn { num: Poly::one(), den: self.den };
        Ok(acc.mul(&den))
    }

    pub fn to_expr(&self) -> Expr {
        if self.num.is_zero() {
            return Expr::zero();
        }
        let (_, shift) = self.num.monomial_content().split_signs();
        let numer = poly_expr(&self.num.mul_monomial(&shift));
        let mut den: Vec<Expr> = shift.factors().iter().map(|(a, k)| atom_pow_expr(a, *k)).collect();
        for (f, e) in &self.den {
            let fe = poly_expr(f);
            den.push(if *e == 1 { fe } else { fe.powi(*e as i64) });
        }
        if den.is_empty() {
            numer
        } else {
            Expr::quotient(numer, Expr::product(den))
        }
    }

    /// Partial derivative. `dj` is the derivative of the J symbol with
    /// respect to `v`, required whenever J occurs.
    pub fn derivative(&self, v: &VarId, dj: Option<&RatFn>) -> Result<RatFn> {
        let dn = poly_derivative(&self.num, v, dj)?;
        if self.den.is_empty() {
            return dn.reduce_roots();
        }
        let inv_den = RatFn { num: Poly::one(), den: self.den.clone() };
        let mut out = dn.mul(&inv_den);
        let mut log_d = RatFn::zero();
        for (f, e) in &self.den {
            let df = poly_derivative(f, v, dj)?;
            if df.is_zero() {
                continue;
            }
            let term = df.mul(&RatFn { num: Poly::one(), den: vec![(f.clone(), 1)] });
            log_d = log_d.add(&term.scale(&BigRational::from_integer((*e).into())));
        }
        out = out.sub(&self.mul(&log_d));
        out.reduce_roots()
    }

    /// Reduces modulo `J^3 = i3`: the numerator ends with J-degree below 3
    /// and the denominator free of J.
    pub fn reduce_j(&self, i3: &RatFn) -> Result<RatFn> {
        if !self.num.mentions(&Atom::J) && !self.den.iter().any(|(f, _)| f.mentions(&Atom::J)) {
            return Ok(self.clone());
        }
        let mut out = reduce_j_poly(&self.num, i3)?;
        for (f, e) in &self.den {
            let inv = if f.mentions(&Atom::J) {
                let coeffs = j_coeffs(&reduce_j_poly(f, i3)?);
                let [a, b, c] = &coeffs;
                let v = i3;
                // norm and adjugate of a + bJ + cJ^2
                let norm = a
                    .powi(3)?
                    .add(&b.powi(3)?.mul(v))
                    .add(&c.powi(3)?.mul(&v.powi(2)?))
                    .sub(&a.mul(b).mul(c).mul(v).scale(&BigRational::from_integer(3.into())));
                let adj = a
                    .mul(a)
                    .sub(&b.mul(c).mul(v))
                    .add(&c.mul(c).mul(v).sub(&a.mul(b)).mul(&RatFn::j()))
                    .add(&b.mul(b).sub(&a.mul(c)).mul(&RatFn::atom_pow(Atom::J, 2)));
                adj.div(&norm)?
            } else {
                RatFn { num: Poly::one(), den: vec![(f.clone(), 1)] }
            };
            out = out.mul(&inv.powi(*e as i64)?);
        }
        let num = reduce_j_poly(&out.num, i3)?;
        Ok(num.mul(&RatFn { num: Poly::one(), den: out.den }))
    }
}

fn reduce_j_poly(p: &Poly, i3: &RatFn) -> Result<RatFn> {
    if !p.mentions(&Atom::J) {
        return Ok(RatFn::from_poly(p.clone()));
    }
    let mut acc = RatFn::zero();
    for (k, coeff) in p.group_by(&Atom::J) {
        let (q, r) = (k.div_euclid(3), k.rem_euclid(3));
        let term = RatFn::from_poly(coeff.mul_monomial(&Monomial::atom(Atom::J, r)));
        acc = acc.add(&term.mul(&i3.powi(q as i64)?));
    }
    Ok(acc)
}

/// Coefficients `[a, b, c]` of `a + b J + c J^2` for a reduced expression
/// whose denominator is J-free.
fn j_coeffs(r: &RatFn) -> [RatFn; 3] {
    let inv_den = RatFn { num: Poly::one(), den: r.den.clone() };
    let groups = r.num.group_by(&Atom::J);
    let get = |k: i32| {
        groups
            .get(&k)
            .map(|g| RatFn::from_poly(g.clone()).mul(&inv_den))
            .unwrap_or_default()
    };
    [get(0), get(1), get(2)]
}

fn poly_derivative(p: &Poly, v: &VarId, dj: Option<&RatFn>) -> Result<RatFn> {
    let mut acc = RatFn::zero();
    for a in p.atoms() {
        if !(a.mentions(v) || a.mentions_j()) {
            continue;
        }
        let da = atom_derivative(&a, v, dj)?;
        if da.is_zero() {
            continue;
        }
        acc = acc.add(&RatFn::from_poly(p.d_atom(&a)).mul(&da));
    }
    Ok(acc)
}

fn atom_derivative(a: &Atom, v: &VarId, dj: Option<&RatFn>) -> Result<RatFn> {
    Ok(match a {
        Atom::Var(w) => {
            if w == v {
                RatFn::one()
            } else {
                RatFn::zero()
            }
        }
        Atom::J => dj.cloned().ok_or(Error::MissingI3)?,
        Atom::Ln(x) => {
            let x = RatFn::from_expr(x)?;
            x.derivative(v, dj)?.div(&x)?
        }
        Atom::Exp(x) => RatFn::atom(a.clone()).mul(&RatFn::from_expr(x)?.derivative(v, dj)?),
        Atom::Root(b, n) => {
            let b = RatFn::from_expr(b)?;
            let db = b.derivative(v, dj)?;
            RatFn::atom(a.clone())
                .mul(&db.div(&b)?)
                .scale(&BigRational::new(1.into(), (*n).into()))
        }
        Atom::Power(b, e) => {
            let br = RatFn::from_expr(b)?;
            let er = RatFn::from_expr(e)?;
            let db = br.derivative(v, dj)?;
            let de = er.derivative(v, dj)?;
            let mut inner = er.mul(&db.div(&br)?);
            if !de.is_zero() {
                inner = inner.add(&de.mul(&RatFn::atom(Atom::Ln(b.clone()))));
            }
            RatFn::atom(a.clone()).mul(&inner)
        }
    })
}

/// Removes every denominator factor that divides the numerator.
fn cancel(num: &mut Poly, den: &mut Vec<(Poly, u32)>) {
    if num.is_zero() {
        den.clear();
        return;
    }
    for (f, e) in den.iter_mut() {
        while *e > 0 {
            match num.div_exact(f) {
                Some(q) => {
                    *num = q;
                    *e -= 1;
                }
                None => break,
            }
        }
    }
    den.retain(|(_, e)| *e > 0);
    // The numerator may itself divide a denominator factor.
    let (c, m, g) = num.split_content();
    if den.is_empty() || g.as_constant().is_some() {
        return;
    }
    let Some(i) = den.iter().position(|(f, _)| f.div_exact(&g).is_some()) else {
        return;
    };
    let h = den[i].0.div_exact(&g).unwrap();
    den[i].1 -= 1;
    let (hc, hm, hg) = h.split_content();
    *num = Poly::term(m.div(&hm), &c / &hc);
    if hg.as_constant().is_none() {
        den.push((hg, 1));
    }
    den.retain(|(_, e)| *e > 0);
    let lists = [&den[..]];
    let (basis, exps) = common_basis(&lists);
    *den = basis.into_iter().zip(exps[0].iter().copied()).filter(|(_, e)| *e > 0).collect();
}

fn is_normalized_factor(g: &Poly) -> bool {
    let (c, m, _) = g.split_content();
    c.is_one() && m.is_one()
}

/// Refines the factors of several denominators into a common basis in
/// which no element divides another. Returns the basis and, for each input
/// list, its exponent vector over the basis.
fn common_basis(lists: &[&[(Poly, u32)]]) -> (Vec<Poly>, Vec<Vec<u32>>) {
    let mut basis: Vec<Poly> = Vec::new();
    for l in lists {
        for (f, _) in l.iter() {
            if !basis.contains(f) {
                basis.push(f.clone());
            }
        }
    }
    loop {
        refine(&mut basis);
        let mut exps = Vec::with_capacity(lists.len());
        let mut missing = None;
        'lists: for l in lists {
            let mut ev = vec![0u32; basis.len()];
            for (f, e) in l.iter() {
                let mut rem = f.clone();
                for (i, b) in basis.iter().enumerate() {
                    while let Some(q) = rem.div_exact(b) {
                        rem = q;
                        ev[i] += e;
                    }
                }
                if rem.as_constant().is_none() {
                    missing = Some(rem);
                    break 'lists;
                }
            }
            exps.push(ev);
        }
        match missing {
            None => return (basis, exps),
            Some(rem) => {
                let (_, _, g) = rem.split_content();
                basis.push(g);
            }
        }
    }
}

fn refine(basis: &mut Vec<Poly>) {
    'outer: loop {
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                if i == j {
                    continue;
                }
                if let Some(h) = basis[j].div_exact(&basis[i]) {
                    if h.as_constant().is_some() || !is_normalized_factor(&h) {
                        continue;
                    }
                    if basis.contains(&h) {
                        basis.remove(j);
                    } else {
                        basis[j] = h;
                    }
                    continue 'outer;
                }
            }
        }
        break;
    }
    basis.sort();
}

fn poly_expr(p: &Poly) -> Expr {
    let terms: Vec<Expr> = p.terms().rev().map(|(m, c)| term_expr(m, c)).collect();
    Expr::sum(terms)
}

fn term_expr(m: &Monomial, c: &BigRational) -> Expr {
    let mut factors: Vec<Expr> = m.factors().iter().map(|(a, k)| atom_pow_expr(a, *k)).collect();
    if factors.is_empty() {
        return Expr::rational(c.clone());
    }
    if !c.is_one() {
        factors.insert(0, Expr::rational(c.clone()));
    }
    Expr::product(factors)
}

fn atom_pow_expr(a: &Atom, k: i32) -> Expr {
    match a {
        Atom::Root(b, n) if k > 0 && k < *n as i32 => b.pow(BigRational::new(k.into(), (*n).into())),
        _ if k == 1 => a.to_expr(),
        _ => a.to_expr().powi(k as i64),
    }
}

fn rat_i64(q: &BigRational) -> Result<i64> {
    q.to_integer()
        .to_i64()
        .ok_or_else(|| Error::Malformed("exponent too large".into()))
}

/// `base^r` for a non-integer rational `r`.
fn pow_rational(base: &RatFn, r: &BigRational) -> Result<RatFn> {
    let n = r.denom().to_u32().ok_or_else(|| Error::Malformed("root index too large".into()))?;
    let m = r.numer().to_i64().ok_or_else(|| Error::Malformed("exponent too large".into()))?;
    if base.is_zero() {
        return if r.is_positive() {
            Ok(RatFn::zero())
        } else {
            Err(Error::Malformed("zero raised to a negative power".into()))
        };
    }
    if let Some(c) = base.as_constant() {
        return const_pow(&c, m, n);
    }
    if n % 2 == 0 {
        return root_pow(base.to_expr(), base, m, n);
    }
    // Odd root: distribute over content, monomial atoms and factors.
    let (c, mono, g) = base.num.split_content();
    let mut out = const_pow(&c, m, n)?;
    for (a, k) in mono.factors() {
        let e = BigRational::new((*k as i64 * m).into(), n.into());
        out = out.mul(&atom_pow_rational(a, &e)?);
    }
    if g.as_constant().is_none() {
        let gr = RatFn::from_poly(g);
        out = out.mul(&root_pow(gr.to_expr(), &gr, m, n)?);
    }
    for (f, e) in &base.den {
        let fr = RatFn::from_poly(f.clone());
        let k = -(*e as i64) * m;
        let q = BigRational::new(k.into(), n.into());
        let (kk, nn) = (rat_i64(&BigRational::from_integer(q.numer().clone()))?, q.denom().to_u32().unwrap());
        out = out.mul(&if nn == 1 { fr.powi(kk)? } else { root_pow(fr.to_expr(), &fr, kk, nn)? });
    }
    Ok(out)
}

/// `Root(b, n)^m` with the exponent reduced into `0..n`.
fn root_pow(b: Expr, base: &RatFn, m: i64, n: u32) -> Result<RatFn> {
    let (q, r) = (m.div_euclid(n as i64), m.rem_euclid(n as i64));
    let root = RatFn::atom_pow(Atom::Root(b, n), r as i32);
    Ok(root.mul(&base.powi(q)?))
}

fn const_pow(c: &BigRational, m: i64, n: u32) -> Result<RatFn> {
    if n == 1 {
        return Ok(RatFn::constant(rat_powi(c, m)));
    }
    if c.is_zero() {
        return if m > 0 { Ok(RatFn::zero()) } else { Err(Error::Malformed("zero raised to a negative power".into())) };
    }
    if let Some(root) = rat_nth_root(c, n) {
        return Ok(RatFn::constant(rat_powi(&root, m)));
    }
    if c.is_negative() {
        if n % 2 == 0 {
            return Err(Error::Domain(format!("even root of negative constant {c}")));
        }
        let sign = if m.rem_euclid(2) == 0 { 1 } else { -1 };
        return Ok(const_pow(&-c, m, n)?.scale(&BigRational::from_integer(sign.into())));
    }
    let cr = RatFn::constant(c.clone());
    root_pow(Expr::rational(c.clone()), &cr, m, n)
}

/// `a^e` for an atom and a rational exponent.
fn atom_pow_rational(a: &Atom, e: &BigRational) -> Result<RatFn> {
    if e.is_integer() {
        return Ok(RatFn::atom_pow(a.clone(), rat_i64(e)? as i32));
    }
    match a {
        Atom::Root(b, k) => pow_rational(&RatFn::from_expr(b)?, &(e / BigRational::from_integer((*k).into()))),
        Atom::Exp(z) => exp_rat(&RatFn::from_expr(z)?.scale(e)),
        Atom::Power(b, x) => {
            let x = RatFn::from_expr(x)?.scale(e);
            pow_symbolic(&RatFn::from_expr(b)?, &x)
        }
        _ => {
            let n = e.denom().to_u32().unwrap();
            let m = e.numer().to_i64().ok_or_else(|| Error::Malformed("exponent too large".into()))?;
            root_pow(a.to_expr(), &RatFn::atom(a.clone()), m, n)
        }
    }
}

/// `exp(z)` in canonical form. A polynomial exponent is split by monomial:
/// `exp(c*m)` with `c = n/d` becomes `Exp(m/d)^n`, so `exp(3x)` is the cube
/// of `exp(x)`, and `exp(c*ln(z))` becomes `z^c`.
fn exp_rat(z: &RatFn) -> Result<RatFn> {
    if z.is_zero() {
        return Ok(RatFn::one());
    }
    if !z.den.is_empty() {
        return Ok(RatFn::atom(Atom::Exp(z.to_expr())));
    }
    let mut out = RatFn::one();
    for (m, c) in z.num.terms() {
        if m.is_one() {
            out = out.mul(&RatFn::atom(Atom::Exp(Expr::rational(c.clone()))));
            continue;
        }
        if let [(Atom::Ln(inner), 1)] = m.factors() {
            out = out.mul(&pow_rational(&RatFn::from_expr(inner)?, c)?);
            continue;
        }
        let d = BigRational::from_integer(c.denom().clone());
        let n = rat_i64(&BigRational::from_integer(c.numer().clone()))?;
        let arg = Poly::term(m.clone(), d.recip());
        let atom = Atom::Exp(RatFn::from_poly(arg).to_expr());
        out = out.mul(&RatFn::atom_pow(atom, i32::try_from(n).map_err(|_| Error::Malformed("exponent too large".into()))?));
    }
    Ok(out)
}

/// `base^ex` for a non-constant exponent. An integral constant term of the
/// exponent is split off so `p^(a/3 - 1)` becomes `p^(a/3) / p`.
fn pow_symbolic(base: &RatFn, ex: &RatFn) -> Result<RatFn> {
    if let Some(c) = base.as_constant() {
        if c.is_one() {
            return Ok(RatFn::one());
        }
    }
    if let Some(Atom::Exp(z)) = base.single_atom() {
        return exp_rat(&RatFn::from_expr(&z)?.mul(ex));
    }
    let mut ex = ex.clone();
    let mut shift = RatFn::one();
    if ex.den.is_empty() {
        let c0 = ex
            .num
            .terms()
            .find(|(m, _)| m.is_one())
            .map(|(_, c)| c.floor())
            .unwrap_or_else(BigRational::zero);
        if !c0.is_zero() {
            ex = ex.sub(&RatFn::constant(c0.clone()));
            shift = base.powi(rat_i64(&c0)?)?;
        }
    }
    Ok(RatFn::atom(Atom::Power(base.to_expr(), ex.to_expr())).mul(&shift))
}

/// Normalizes to a single quotient of expanded polynomials.
pub fn normalize(e: &Expr) -> Result<Expr> {
    Ok(RatFn::from_expr(e)?.to_expr())
}

/// Normalizes and reduces modulo `J^3 = i3`.
pub fn normalize_mod_j(e: &Expr, i3: &Expr) -> Result<Expr> {
    let i3 = RatFn::from_expr(i3)?;
    Ok(RatFn::from_expr(e)?.reduce_j(&i3)?.to_expr())
}
