//! Decision procedure for linearizability with five or four symmetries.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::identity::{is_zero, Mode, SamplerConfig, Witness, ZeroVerdict};
use crate::invariants::{compute_base, compute_tower_with, InvariantSet};
use crate::normal::RatFn;
use crate::calculus::OdeContext;

/// Conditions shared by both linearizable branches, in test order.
pub const SHARED: [&str; 5] = ["I6", "I8", "I10", "I11", "I12"];
/// Additional conditions of the four-symmetry branch.
pub const FOUR: [&str; 3] = ["I13", "I14", "I15"];
/// Partials of `K` tested for constancy.
pub const K_PARTIALS: [&str; 4] = ["K_x", "K_u", "K_p", "K_q"];

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    /// Equivalent to `u''' = s u' + u` with constant `s`.
    FiveSymmetry { s: Expr },
    /// Equivalent to `u''' = abar(x)^3 u` with non-constant `K`.
    FourSymmetry { k: Expr, dk_witness: Box<Witness> },
    WuenschmannZero,
    OutsideScope { first_failing: String, witness: Option<Box<Witness>> },
}

impl Outcome {
    pub fn tag(&self) -> &'static str {
        match self {
            Outcome::FiveSymmetry { .. } => "FiveSymmetryLinearizable",
            Outcome::FourSymmetry { .. } => "FourSymmetryLinearizable",
            Outcome::WuenschmannZero => "WuenschmannZero",
            Outcome::OutsideScope { .. } => "OutsideScope",
        }
    }

    pub fn is_linearizable(&self) -> bool {
        matches!(self, Outcome::FiveSymmetry { .. } | Outcome::FourSymmetry { .. })
    }
}

/// One tested condition. `expect_zero` is false only for `DK`, which must
/// not vanish.
#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub name: String,
    pub verdict: ZeroVerdict,
    pub expect_zero: bool,
}

impl Condition {
    pub fn passed(&self) -> bool {
        self.verdict.is_zero() == self.expect_zero
    }
}

#[derive(Clone, Debug)]
pub struct Classification {
    pub input: Expr,
    pub outcome: Outcome,
    pub conditions: Vec<Condition>,
    pub mode: Mode,
    pub seed: u64,
    pub tower: Option<InvariantSet>,
}

impl Classification {
    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }

    /// `s` with J written as the real cube root of `I3`.
    pub fn s_display(&self) -> Option<Expr> {
        match (&self.outcome, &self.tower) {
            (Outcome::FiveSymmetry { s }, Some(t)) => Some(with_radical_j(s, &t.ctx)),
            _ => None,
        }
    }
}

/// Replaces J by `I3^(1/3)` and normalizes.
pub fn with_radical_j(e: &Expr, ctx: &OdeContext) -> Expr {
    if !e.contains_j() {
        return e.clone();
    }
    match ctx.i3() {
        Some(i3) => {
            let r = e.replace_j(&i3.cbrt());
            RatFn::from_expr(&r).map(|r| r.to_expr()).unwrap_or(r)
        }
        None => e.clone(),
    }
}

fn test_all(names: &[&str], tower: &InvariantSet, cfg: &SamplerConfig) -> Result<Vec<Condition>> {
    names
        .par_iter()
        .map(|name| {
            let e = tower.get(name).ok_or_else(|| Error::Malformed(format!("missing tower entry {name}")))?;
            let verdict = is_zero(&e, &tower.ctx, cfg).map_err(|err| err.with_condition(name))?;
            Ok(Condition { name: name.to_string(), verdict, expect_zero: true })
        })
        .collect()
}

fn first_failure(conds: &[Condition]) -> Option<&Condition> {
    conds.iter().find(|c| !c.passed())
}

fn outside(c: &Condition) -> Outcome {
    Outcome::OutsideScope { first_failing: c.name.clone(), witness: c.verdict.witness().cloned().map(Box::new) }
}

fn overall_mode(conds: &[Condition]) -> Mode {
    if conds.iter().any(|c| c.verdict.mode() == Mode::Float) {
        Mode::Float
    } else {
        Mode::Exact
    }
}

pub fn classify(f: &Expr, cfg: &SamplerConfig) -> Result<Classification> {
    cfg.validate()?;
    let mut out = Classification {
        input: f.clone(),
        outcome: Outcome::WuenschmannZero,
        conditions: Vec::new(),
        mode: Mode::Exact,
        seed: cfg.seed,
        tower: None,
    };

    let (_, _, i3) = compute_base(f)?;
    let base = OdeContext::new(f)?;
    let gate = is_zero(&i3, &base, cfg).map_err(|e| e.with_condition("I3"))?;
    let i3_zero = gate.is_zero();
    out.mode = gate.mode();
    out.conditions.push(Condition { name: "I3".into(), verdict: gate, expect_zero: false });
    if i3_zero {
        return Ok(out);
    }

    let tower = compute_tower_with(f, cfg)?;
    let shared = test_all(&SHARED, &tower, cfg)?;
    out.conditions.extend(shared.iter().cloned());
    if let Some(c) = first_failure(&shared) {
        out.outcome = outside(c);
        out.mode = overall_mode(&out.conditions);
        out.tower = Some(tower);
        return Ok(out);
    }

    let kp = test_all(&K_PARTIALS, &tower, cfg)?;
    out.conditions.extend(kp.iter().cloned());
    if first_failure(&kp).is_none() {
        out.outcome = Outcome::FiveSymmetry { s: tower.s_candidate.clone() };
        out.mode = overall_mode(&out.conditions);
        out.tower = Some(tower);
        return Ok(out);
    }

    let four = test_all(&FOUR, &tower, cfg)?;
    out.conditions.extend(four.iter().cloned());
    let dk = is_zero(&tower.dk, &tower.ctx, cfg).map_err(|e| e.with_condition("DK"))?;
    let dk = Condition { name: "DK".into(), verdict: dk, expect_zero: false };
    out.conditions.push(dk.clone());
    out.outcome = match first_failure(&four) {
        Some(c) => outside(c),
        None => match dk.verdict.witness() {
            Some(w) => Outcome::FourSymmetry { k: tower.k.clone(), dk_witness: Box::new(w.clone()) },
            None => Outcome::OutsideScope { first_failing: "DK".into(), witness: None },
        },
    };
    out.mode = overall_mode(&out.conditions);
    out.tower = Some(tower);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn run(f: &str) -> Classification {
        classify(&parse(f).unwrap(), &SamplerConfig::default()).unwrap()
    }

    #[test]
    fn zero_is_wuenschmann_zero() {
        assert_eq!(run("0").outcome, Outcome::WuenschmannZero);
    }

    #[test]
    fn example_one_five_symmetries() {
        let c = run("alpha*q^2/p");
        assert_eq!(c.outcome.tag(), "FiveSymmetryLinearizable");
        assert_eq!(c.mode, Mode::Exact);
    }

    #[test]
    fn example_two_four_symmetries() {
        let c = run("-x*p^4*q^3 + u*p^3*q^3");
        assert_eq!(c.outcome.tag(), "FourSymmetryLinearizable");
    }

    #[test]
    fn u_squared_fails_at_i11() {
        match run("u^2").outcome {
            Outcome::OutsideScope { first_failing, witness } => {
                assert_eq!(first_failing, "I11");
                assert!(witness.is_some());
            }
            o => panic!("unexpected {o:?}"),
        }
    }

    #[test]
    fn canonical_forms() {
        assert_eq!(run("s*p + u").outcome, Outcome::FiveSymmetry { s: parse("s").unwrap() });
        assert_eq!(run("x^3*u").outcome.tag(), "FourSymmetryLinearizable");
    }
}
