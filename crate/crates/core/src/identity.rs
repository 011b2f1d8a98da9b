//! Zero and constancy tests for tower expressions by random evaluation.
//!
//! Exact mode evaluates in `Q(c)`, `c^3 = I3(pt)`, so a nonzero verdict is a
//! certificate. Float mode evaluates at high precision and compares against
//! a cancellation-aware threshold.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::OdeContext;
use crate::cubic::CubicScalar;
use crate::error::{Error, Result};
use crate::eval::{big_to_f64, eval_exact, eval_with, j_from_i3, Backend, Big, SamplePoint};
use crate::expr::{Expr, Node, VarId};
use crate::normal::RatFn;
use crate::poly::Atom;

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub seed: u64,
    pub points: usize,
    /// Bound on numerators and denominators of sampled rationals.
    pub bound: u64,
    pub max_resamples: usize,
    pub precision: usize,
    /// Relative zero threshold for float mode.
    pub threshold: f64,
    pub pins: BTreeMap<String, BigRational>,
    /// Treat `exp(m)` for distinct monomials `m` and `ln(v)` for variables
    /// `v` as independent indeterminates in exact mode.
    pub generic_atoms: bool,
    pub force_float: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            seed: 0,
            points: 8,
            bound: 10_000,
            max_resamples: 50,
            precision: 256,
            threshold: 1e-40,
            pins: BTreeMap::new(),
            generic_atoms: true,
            force_float: false,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn pin(mut self, name: &str, value: BigRational) -> Self {
        self.pins.insert(name.to_string(), value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::Malformed("at least one sample point is required".into()));
        }
        if self.bound == 0 || self.precision < 53 {
            return Err(Error::Malformed("sampling bound and precision must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Float,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Float => "float",
        })
    }
}

/// A sample point at which an expression was found to be nonzero.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub point: SamplePoint,
    /// Exact field element or decimal value, as text.
    pub value: String,
    pub approx: f64,
    pub mode: Mode,
}

impl Witness {
    /// Variable assignments as `name -> rational text`, opaque atoms included.
    pub fn assignments(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self.point.values.iter().map(|(k, v)| (k.name().to_string(), v.to_string())).collect();
        out.extend(self.point.opaque.iter().map(|(k, v)| (k.to_string(), v.to_string())));
        out
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pts: Vec<String> = self.assignments().into_iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "({}) -> {}", pts.join(", "), self.value)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ZeroVerdict {
    IdenticallyZero { points_tested: usize, mode: Mode },
    NonZero { witness: Box<Witness> },
}

impl ZeroVerdict {
    pub fn is_zero(&self) -> bool {
        matches!(self, ZeroVerdict::IdenticallyZero { .. })
    }

    pub fn mode(&self) -> Mode {
        match self {
            ZeroVerdict::IdenticallyZero { mode, .. } => *mode,
            ZeroVerdict::NonZero { witness } => witness.mode,
        }
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            ZeroVerdict::NonZero { witness } => Some(witness),
            _ => None,
        }
    }
}

enum PointOutcome {
    Zero(Mode),
    NonZero(Witness),
}

struct Plan<'a> {
    e: Expr,
    i3: Option<&'a Expr>,
    vars: Vec<VarId>,
    opaque: Vec<Expr>,
    exact: bool,
    cfg: &'a SamplerConfig,
}

/// Decides whether `e` vanishes identically on the jet space of `ctx`.
pub fn is_zero(e: &Expr, ctx: &OdeContext, cfg: &SamplerConfig) -> Result<ZeroVerdict> {
    cfg.validate()?;
    let r = ctx.normal(e)?;
    if r.is_zero() {
        return Ok(ZeroVerdict::IdenticallyZero { points_tested: 0, mode: Mode::Exact });
    }
    if r.mentions_j() && ctx.i3().is_none() {
        return Err(Error::MissingI3);
    }
    let e = r.to_expr();
    let i3 = if r.mentions_j() { ctx.i3() } else { None };

    let mut vars: BTreeSet<VarId> = VarId::JET.into_iter().collect();
    vars.extend(e.params());
    if let Some(i3) = i3 {
        vars.extend(i3.params());
    }
    let vars: Vec<VarId> = vars.into_iter().filter(|v| !cfg.pins.contains_key(v.name())).collect();

    let mut atoms = BTreeSet::new();
    collect_atoms(&e, &mut atoms);
    if let Some(i3) = i3 {
        collect_atoms(i3, &mut atoms);
    }
    let transcendental = !atoms.is_empty();
    let opaque = if transcendental && cfg.generic_atoms { independent_atoms(&atoms) } else { None };
    let exact = !cfg.force_float && (!transcendental || opaque.is_some());
    let plan = Plan { e, i3, vars, opaque: opaque.unwrap_or_default(), exact, cfg };

    let outcomes: Vec<Result<PointOutcome>> = (0..cfg.points).into_par_iter().map(|i| plan.run_point(i as u64)).collect();
    let mut mode = if exact { Mode::Exact } else { Mode::Float };
    for o in outcomes {
        match o? {
            PointOutcome::NonZero(w) => return Ok(ZeroVerdict::NonZero { witness: Box::new(w) }),
            PointOutcome::Zero(Mode::Float) => mode = Mode::Float,
            PointOutcome::Zero(Mode::Exact) => {}
        }
    }
    Ok(ZeroVerdict::IdenticallyZero { points_tested: cfg.points, mode })
}

/// Constancy test: one verdict per partial derivative, in the order
/// x, u, p, q. The expression is constant iff all four are zero.
pub fn is_constant(e: &Expr, ctx: &OdeContext, cfg: &SamplerConfig) -> Result<Vec<(VarId, ZeroVerdict)>> {
    let r = ctx.normal(e)?;
    let mut out = Vec::with_capacity(4);
    for v in VarId::JET {
        let d = ctx.partial_rat(&r, &v)?.to_expr();
        out.push((v.clone(), is_zero(&d, ctx, cfg).map_err(|err| err.with_condition(&format!("d/d{v}")))?));
    }
    Ok(out)
}

/// True when every verdict from [`is_constant`] is zero.
pub fn all_zero(verdicts: &[(VarId, ZeroVerdict)]) -> bool {
    verdicts.iter().all(|(_, v)| v.is_zero())
}

fn collect_atoms(e: &Expr, out: &mut BTreeSet<Expr>) {
    match e.node() {
        Node::Ln(_) | Node::Exp(_) | Node::PowExpr(..) => {
            out.insert(e.clone());
        }
        _ => {}
    }
    for c in e.children() {
        collect_atoms(c, out);
    }
}

/// The transcendental atoms as independent indeterminates, or `None` when
/// independence cannot be guaranteed. Accepted: `exp(c*m)` for pairwise
/// distinct non-constant monomials `m`, and `ln(v)` for a variable `v`.
fn independent_atoms(atoms: &BTreeSet<Expr>) -> Option<Vec<Expr>> {
    let mut seen_monomials = BTreeSet::new();
    let mut out = Vec::new();
    for a in atoms {
        match a.node() {
            Node::Exp(z) => {
                let r = RatFn::from_expr(z).ok()?;
                if !r.den().is_empty() || r.mentions_j() {
                    return None;
                }
                let (m, _) = r.num().as_term()?;
                if m.is_one() || m.factors().iter().any(|(at, _)| !matches!(at, Atom::Var(_))) {
                    return None;
                }
                if !seen_monomials.insert(m.clone()) {
                    return None;
                }
                out.push(a.clone());
            }
            Node::Ln(z) if matches!(z.node(), Node::Var(_)) => out.push(a.clone()),
            _ => return None,
        }
    }
    // Nested atoms (exp inside ln, etc.) were rejected above, except for
    // atoms nested inside accepted arguments; require flat arguments.
    if out.iter().any(|a| a.children().iter().any(|c| c.has_transcendental())) {
        return None;
    }
    Some(out)
}

impl Plan<'_> {
    fn random_rational(&self, rng: &mut ChaCha8Rng, positive: bool) -> BigRational {
        let b = self.cfg.bound as i64;
        loop {
            let n: i64 = if positive { rng.gen_range(1..=b) } else { rng.gen_range(-b..=b) };
            let d: i64 = rng.gen_range(1..=b);
            if n != 0 {
                return BigRational::new(BigInt::from(n), BigInt::from(d));
            }
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, positive: bool) -> SamplePoint {
        let mut pt = SamplePoint::new();
        for v in &self.vars {
            pt.set(v.clone(), self.random_rational(rng, positive));
        }
        for (name, value) in &self.cfg.pins {
            if let Ok(v) = VarId::param(name) {
                pt.set(v, value.clone());
            }
        }
        if self.exact {
            for a in &self.opaque {
                let value = self.random_rational(rng, true);
                pt.opaque.insert(a.clone(), value);
            }
        }
        pt
    }

    fn run_point(&self, index: u64) -> Result<PointOutcome> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(index);
        let mut positive = false;
        for _ in 0..self.cfg.max_resamples.max(1) {
            let pt = self.sample(&mut rng, positive);
            let attempt = if self.exact {
                match self.exact_at(&pt) {
                    Err(Error::NotExact(_)) => self.float_at(&pt),
                    other => other,
                }
            } else {
                self.float_at(&pt)
            };
            match attempt {
                Ok(Some(o)) => return Ok(o),
                Ok(None) | Err(Error::Singular(_)) => {}
                Err(Error::Domain(_)) => positive = true,
                Err(e) => return Err(e),
            }
        }
        Err(Error::InconclusiveSampling { condition: String::new() })
    }

    /// `Ok(None)` signals a point on a singular locus.
    fn exact_at(&self, pt: &SamplePoint) -> Result<Option<PointOutcome>> {
        let j = match self.i3 {
            Some(i3) => {
                let w = crate::eval::eval_exact_free(i3, pt)?;
                let w = w.as_rational().cloned().ok_or_else(|| Error::NotExact("irrational I3 value".into()))?;
                if w.is_zero() {
                    return Ok(None);
                }
                CubicScalar::generator(w)
            }
            None => CubicScalar::one(BigRational::from_integer(1.into())),
        };
        let value = if self.i3.is_some() {
            eval_exact(&self.e, pt, &j)?
        } else {
            crate::eval::eval_exact_free(&self.e, pt)?
        };
        if value.is_zero() {
            Ok(Some(PointOutcome::Zero(Mode::Exact)))
        } else {
            Ok(Some(PointOutcome::NonZero(Witness {
                point: pt.clone(),
                value: value.to_string(),
                approx: value.to_f64(),
                mode: Mode::Exact,
            })))
        }
    }

    fn float_at(&self, pt: &SamplePoint) -> Result<Option<PointOutcome>> {
        let mut pt = pt.clone();
        pt.opaque.clear();
        let b = Big::new(self.cfg.precision);
        let j = match self.i3 {
            Some(i3) => {
                let w = eval_with(&b, i3, &pt, None)?;
                if b.is_zero(&w.value) || big_to_f64(&w.value).abs() <= self.cfg.threshold * w.scale {
                    return Ok(None);
                }
                Some(j_from_i3(&b, &w))
            }
            None => None,
        };
        let v = eval_with(&b, &self.e, &pt, j.as_ref())?;
        let approx = big_to_f64(&v.value);
        if b.is_zero(&v.value) || approx.abs() <= self.cfg.threshold * v.scale.max(f64::MIN_POSITIVE) {
            Ok(Some(PointOutcome::Zero(Mode::Float)))
        } else {
            Ok(Some(PointOutcome::NonZero(Witness { point: pt, value: b.format(&v.value), approx, mode: Mode::Float })))
        }
    }
}

/// Largest relative gap `|l - r| / max(|l|, |r|)` over `cfg.points` sampled
/// points, with the two sides evaluated separately at `cfg.precision` bits.
pub fn relative_gap(lhs: &Expr, rhs: &Expr, ctx: &OdeContext, cfg: &SamplerConfig) -> Result<f64> {
    cfg.validate()?;
    let (l, r) = (ctx.normal(lhs)?.to_expr(), ctx.normal(rhs)?.to_expr());
    let needs_j = l.contains_j() || r.contains_j();
    if needs_j && ctx.i3().is_none() {
        return Err(Error::MissingI3);
    }
    let i3 = if needs_j { ctx.i3() } else { None };
    let mut vars: BTreeSet<VarId> = VarId::JET.into_iter().collect();
    vars.extend(l.params());
    vars.extend(r.params());
    if let Some(i3) = i3 {
        vars.extend(i3.params());
    }
    let vars: Vec<VarId> = vars.into_iter().filter(|v| !cfg.pins.contains_key(v.name())).collect();
    let plan = Plan { e: l.clone(), i3, vars, opaque: Vec::new(), exact: false, cfg };
    let gaps: Vec<Result<f64>> = (0..cfg.points)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let b = Big::new(cfg.precision);
            let mut positive = false;
            for _ in 0..cfg.max_resamples.max(1) {
                let pt = plan.sample(&mut rng, positive);
                let attempt = (|| -> Result<Option<f64>> {
                    let j = match i3 {
                        Some(i3) => {
                            let w = eval_with(&b, i3, &pt, None)?;
                            if b.is_zero(&w.value) {
                                return Ok(None);
                            }
                            Some(j_from_i3(&b, &w))
                        }
                        None => None,
                    };
                    let lv = eval_with(&b, &l, &pt, j.as_ref())?.value;
                    let rv = eval_with(&b, &r, &pt, j.as_ref())?.value;
                    let diff = b.sub(&lv, &rv);
                    if b.is_zero(&diff) {
                        return Ok(Some(0.0));
                    }
                    let scale = big_to_f64(&lv).abs().max(big_to_f64(&rv).abs());
                    Ok(Some(big_to_f64(&diff).abs() / scale))
                })();
                match attempt {
                    Ok(Some(g)) => return Ok(g),
                    Ok(None) | Err(Error::Singular(_)) => {}
                    Err(Error::Domain(_)) => positive = true,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::InconclusiveSampling { condition: String::new() })
        })
        .collect();
    gaps.into_iter().try_fold(0.0f64, |m, g| Ok(m.max(g?)))
}

/// Re-evaluates `e` at a witness point; used to confirm nonzero verdicts.
pub fn evaluate_at_witness(e: &Expr, ctx: &OdeContext, w: &Witness, precision: usize) -> Result<f64> {
    let r = ctx.normal(e)?.to_expr();
    let mut pt = w.point.clone();
    if w.mode == Mode::Exact && !pt.opaque.is_empty() {
        let j = match ctx.i3() {
            Some(i3) if r.contains_j() => {
                let v = crate::eval::eval_exact_free(i3, &pt)?;
                CubicScalar::generator(v.as_rational().cloned().ok_or_else(|| Error::NotExact("irrational I3 value".into()))?)
            }
            _ => CubicScalar::one(BigRational::from_integer(1.into())),
        };
        return Ok(eval_exact(&r, &pt, &j)?.to_f64());
    }
    pt.opaque.clear();
    let b = Big::new(precision);
    let j = match ctx.i3() {
        Some(i3) if r.contains_j() => Some(j_from_i3(&b, &eval_with(&b, i3, &pt, None)?)),
        _ => None,
    };
    Ok(big_to_f64(&eval_with(&b, &r, &pt, j.as_ref())?.value))
}
