//! Immutable expression trees over the second-order jet coordinates.
//!
//! An [`Expr`] is a cheaply clonable handle to a shared [`Node`]. Trees are
//! never mutated after construction; every transformation builds a new tree.
//! Structural equality (`==`) compares trees node by node, so two
//! mathematically equal expressions are only guaranteed to compare equal after
//! [`normalize`](crate::normalize).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

/// Names that can never be used for parameters.
pub const RESERVED_NAMES: &[&str] = &["x", "u", "p", "q", "J", "ln", "exp", "cbrt", "sqrt"];

/// A variable of the jet space or a free parameter.
///
/// Ordering puts the jet coordinates first (`x < u < p < q`) and parameters
/// after them in name order; the polynomial layer relies on this.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarId {
    X,
    U,
    P,
    Q,
    Param(Arc<str>),
}

impl VarId {
    pub const JET: [VarId; 4] = [VarId::X, VarId::U, VarId::P, VarId::Q];

    /// Builds a parameter, rejecting reserved names and non-identifiers.
    pub fn param(name: &str) -> Result<VarId> {
        let valid = name
            .chars()
            .next()
            .map(|c| c.is_ascii_alphabetic() || c == '_')
            .unwrap_or(false)
            && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !valid || RESERVED_NAMES.contains(&name) {
            return Err(Error::InvalidParameterName(name.to_string()));
        }
        Ok(VarId::Param(Arc::from(name)))
    }

    /// Maps a name to a jet coordinate when it is one of `x, u, p, q`.
    pub fn jet(name: &str) -> Option<VarId> {
        match name {
            "x" => Some(VarId::X),
            "u" => Some(VarId::U),
            "p" => Some(VarId::P),
            "q" => Some(VarId::Q),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            VarId::X => "x",
            VarId::U => "u",
            VarId::P => "p",
            VarId::Q => "q",
            VarId::Param(n) => n,
        }
    }

    pub fn is_jet(&self) -> bool {
        !matches!(self, VarId::Param(_))
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Int(BigInt),
    Rational(BigRational),
    Var(VarId),
    /// The cube-root symbol standing for `I3^(1/3)`.
    J,
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    /// Power with an exact rational exponent.
    Pow(Expr, BigRational),
    /// Power whose exponent is itself an expression (e.g. `p^(alpha/3 - 1)`).
    PowExpr(Expr, Expr),
    Quotient(Expr, Expr),
    Ln(Expr),
    Exp(Expr),
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Expr(Arc<Node>);

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({})", crate::parser::to_text(self))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::parser::to_text(self))
    }
}

impl Expr {
    pub fn new(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn int(n: i64) -> Expr {
        Expr::new(Node::Int(BigInt::from(n)))
    }

    /// Rational constant; integral values become `Int` nodes.
    pub fn rational(q: BigRational) -> Expr {
        if q.is_integer() {
            Expr::new(Node::Int(q.to_integer()))
        } else {
            Expr::new(Node::Rational(q))
        }
    }

    pub fn frac(n: i64, d: i64) -> Expr {
        Expr::rational(BigRational::new(n.into(), d.into()))
    }

    pub fn var(v: VarId) -> Expr {
        Expr::new(Node::Var(v))
    }

    pub fn x() -> Expr {
        Expr::var(VarId::X)
    }
    pub fn u() -> Expr {
        Expr::var(VarId::U)
    }
    pub fn p() -> Expr {
        Expr::var(VarId::P)
    }
    pub fn q() -> Expr {
        Expr::var(VarId::Q)
    }

    pub fn param(name: &str) -> Result<Expr> {
        Ok(Expr::var(VarId::param(name)?))
    }

    pub fn j() -> Expr {
        Expr::new(Node::J)
    }

    pub fn sum(terms: Vec<Expr>) -> Expr {
        match terms.len() {
            0 => Expr::zero(),
            1 => terms.into_iter().next().unwrap(),
            _ => Expr::new(Node::Sum(terms)),
        }
    }

    pub fn product(factors: Vec<Expr>) -> Expr {
        match factors.len() {
            0 => Expr::one(),
            1 => factors.into_iter().next().unwrap(),
            _ => Expr::new(Node::Product(factors)),
        }
    }

    pub fn pow(&self, exponent: BigRational) -> Expr {
        Expr::new(Node::Pow(self.clone(), exponent))
    }

    pub fn powi(&self, n: i64) -> Expr {
        self.pow(BigRational::from_integer(n.into()))
    }

    /// Power with an expression exponent. Constant exponents collapse to
    /// [`Node::Pow`].
    pub fn pow_expr(&self, exponent: &Expr) -> Expr {
        match exponent.as_rational() {
            Some(r) => self.pow(r),
            None => Expr::new(Node::PowExpr(self.clone(), exponent.clone())),
        }
    }

    pub fn quotient(num: Expr, den: Expr) -> Expr {
        Expr::new(Node::Quotient(num, den))
    }

    pub fn ln(&self) -> Expr {
        Expr::new(Node::Ln(self.clone()))
    }

    pub fn exp(&self) -> Expr {
        Expr::new(Node::Exp(self.clone()))
    }

    pub fn cbrt(&self) -> Expr {
        self.pow(BigRational::new(1.into(), 3.into()))
    }

    pub fn sqrt(&self) -> Expr {
        self.pow(BigRational::new(1.into(), 2.into()))
    }

    /// Value of a constant node (`Int` or `Rational`), without folding.
    pub fn as_rational(&self) -> Option<BigRational> {
        match self.node() {
            Node::Int(n) => Some(BigRational::from_integer(n.clone())),
            Node::Rational(q) => Some(q.clone()),
            Node::Product(fs) if fs.iter().all(|f| f.as_rational().is_some()) => {
                Some(fs.iter().map(|f| f.as_rational().unwrap()).product())
            }
            Node::Sum(ts) if ts.iter().all(|t| t.as_rational().is_some()) => {
                Some(ts.iter().map(|t| t.as_rational().unwrap()).sum())
            }
            Node::Quotient(a, b) => {
                let (a, b) = (a.as_rational()?, b.as_rational()?);
                (!b.is_zero()).then(|| a / b)
            }
            Node::Pow(b, e) if e.is_integer() => {
                let b = b.as_rational()?;
                let n: i64 = num_traits::ToPrimitive::to_i64(&e.to_integer())?;
                if b.is_zero() && n < 0 {
                    return None;
                }
                Some(crate::poly::rat_powi(&b, n))
            }
            _ => None,
        }
    }

    pub fn is_zero_node(&self) -> bool {
        matches!(self.node(), Node::Int(n) if n.is_zero())
    }

    pub fn is_one_node(&self) -> bool {
        matches!(self.node(), Node::Int(n) if n.is_one())
    }

    /// True when the J symbol occurs anywhere in the tree.
    pub fn contains_j(&self) -> bool {
        self.any(&|n| matches!(n, Node::J))
    }

    /// True when `ln`, `exp` or a symbolic-exponent power occurs.
    pub fn has_transcendental(&self) -> bool {
        self.any(&|n| matches!(n, Node::Ln(_) | Node::Exp(_) | Node::PowExpr(_, _)))
    }

    pub fn contains_var(&self, v: &VarId) -> bool {
        self.any(&|n| matches!(n, Node::Var(w) if w == v))
    }

    fn any(&self, pred: &dyn Fn(&Node) -> bool) -> bool {
        if pred(self.node()) {
            return true;
        }
        self.children().iter().any(|c| c.any(pred))
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self.node() {
            Node::Int(_) | Node::Rational(_) | Node::Var(_) | Node::J => vec![],
            Node::Sum(v) | Node::Product(v) => v.iter().collect(),
            Node::Pow(b, _) => vec![b],
            Node::PowExpr(a, b) | Node::Quotient(a, b) => vec![a, b],
            Node::Ln(a) | Node::Exp(a) => vec![a],
        }
    }

    /// All variables and parameters occurring in the tree.
    pub fn free_vars(&self) -> BTreeSet<VarId> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<VarId>) {
        if let Node::Var(v) = self.node() {
            out.insert(v.clone());
        }
        for c in self.children() {
            c.collect_vars(out);
        }
    }

    pub fn params(&self) -> BTreeSet<VarId> {
        self.free_vars().into_iter().filter(|v| !v.is_jet()).collect()
    }

    /// Replaces variables without normalizing. Simultaneous: replacements are
    /// not themselves rewritten.
    pub fn replace_vars(&self, bindings: &BTreeMap<VarId, Expr>) -> Expr {
        self.map_nodes(&|n| match n {
            Node::Var(v) => bindings.get(v).cloned(),
            _ => None,
        })
    }

    /// Replaces every J node by `with`.
    pub fn replace_j(&self, with: &Expr) -> Expr {
        self.map_nodes(&|n| matches!(n, Node::J).then(|| with.clone()))
    }

    fn map_nodes(&self, leaf: &dyn Fn(&Node) -> Option<Expr>) -> Expr {
        if let Some(e) = leaf(self.node()) {
            return e;
        }
        let node = match self.node() {
            Node::Int(_) | Node::Rational(_) | Node::Var(_) | Node::J => return self.clone(),
            Node::Sum(v) => Node::Sum(v.iter().map(|c| c.map_nodes(leaf)).collect()),
            Node::Product(v) => Node::Product(v.iter().map(|c| c.map_nodes(leaf)).collect()),
            Node::Pow(b, e) => Node::Pow(b.map_nodes(leaf), e.clone()),
            Node::PowExpr(b, e) => Node::PowExpr(b.map_nodes(leaf), e.map_nodes(leaf)),
            Node::Quotient(a, b) => Node::Quotient(a.map_nodes(leaf), b.map_nodes(leaf)),
            Node::Ln(a) => Node::Ln(a.map_nodes(leaf)),
            Node::Exp(a) => Node::Exp(a.map_nodes(leaf)),
        };
        Expr::new(node)
    }

    /// Number of nodes, counting shared subtrees once per occurrence.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    pub fn is_negative_constant(&self) -> bool {
        match self.node() {
            Node::Int(n) => n.is_negative(),
            Node::Rational(q) => q.is_negative(),
            _ => false,
        }
    }
}

/// Simultaneous substitution followed by normalization.
///
/// Every parameter key must occur in `e`; jet coordinates may be bound freely.
pub fn substitute(e: &Expr, bindings: &BTreeMap<VarId, Expr>) -> Result<Expr> {
    let present = e.free_vars();
    for k in bindings.keys() {
        if !k.is_jet() && !present.contains(k) {
            return Err(Error::UnknownParameter(k.name().to_string()));
        }
    }
    crate::normal::normalize(&e.replace_vars(bindings))
}

/// Substitutes pinned parameter values where they occur, ignoring the rest.
pub fn pin_params(e: &Expr, pins: &BTreeMap<String, BigRational>) -> Result<Expr> {
    let mut bindings = BTreeMap::new();
    for (name, value) in pins {
        let v = VarId::param(name)?;
        if e.contains_var(&v) {
            bindings.insert(v, Expr::rational(value.clone()));
        }
    }
    if bindings.is_empty() {
        return Ok(e.clone());
    }
    Ok(e.replace_vars(&bindings))
}

macro_rules! impl_binop {
    ($tr:ident, $method:ident, $build:expr) => {
        impl ops::$tr<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $build;
                f(self, rhs)
            }
        }
        impl ops::$tr<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                (&self).$method(&rhs)
            }
        }
        impl ops::$tr<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                (&self).$method(rhs)
            }
        }
        impl ops::$tr<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                self.$method(&rhs)
            }
        }
    };
}

impl_binop!(Add, add, |a, b| Expr::sum(vec![a.clone(), b.clone()]));
impl_binop!(Sub, sub, |a, b| Expr::sum(vec![a.clone(), -b]));
impl_binop!(Mul, mul, |a, b| Expr::product(vec![a.clone(), b.clone()]));
impl_binop!(Div, div, |a, b| Expr::quotient(a.clone(), b.clone()));

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self.node() {
            Node::Int(n) => Expr::new(Node::Int(-n)),
            Node::Rational(q) => Expr::new(Node::Rational(-q)),
            _ => Expr::product(vec![Expr::int(-1), self.clone()]),
        }
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -&self
    }
}

impl From<i64> for Expr {
    fn from(n: i64) -> Expr {
        Expr::int(n)
    }
}

impl From<VarId> for Expr {
    fn from(v: VarId) -> Expr {
        Expr::var(v)
    }
}
