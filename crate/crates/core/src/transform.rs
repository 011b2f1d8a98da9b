//! Contact transformations `(x, u, p) -> (phi, psi, chi)`: the contact
//! condition, prolongation to the third-order equation, target checks and
//! the first-order PDE systems whose solutions build the transformation.

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::OdeContext;
use crate::error::{Error, Result};
use crate::expr::{Expr, VarId};
use crate::identity::{is_zero, SamplerConfig, ZeroVerdict};
use crate::invariants::InvariantSet;
use crate::normal::RatFn;

#[derive(Clone, Debug, PartialEq)]
pub struct ContactTransform {
    pub phi: Expr,
    pub psi: Expr,
    pub chi: Expr,
}

/// Linear canonical targets.
#[derive(Clone, Debug, PartialEq)]
pub enum TargetForm {
    /// `u''' = s u' + u`.
    Linear5 { s: Expr },
    /// `u''' = abar(x)^3 u`, with `abar` written in the variable `x`.
    Linear4 { a_bar: Expr },
}

impl TargetForm {
    pub fn linear4(a_bar: Expr) -> Result<TargetForm> {
        let r = RatFn::from_expr(&a_bar)?;
        if [VarId::U, VarId::P, VarId::Q].iter().any(|v| r.mentions_var(v)) || r.mentions_j() {
            return Err(Error::InvalidTarget("abar may depend on x only".into()));
        }
        if !r.mentions_var(&VarId::X) {
            return Err(Error::InvalidTarget("abar must not be constant".into()));
        }
        Ok(TargetForm::Linear4 { a_bar: r.to_expr() })
    }

    /// Right-hand side `fbar(xbar, ubar, pbar)` composed with the transform.
    pub fn rhs_at(&self, phi: &Expr, psi: &Expr, chi: &Expr) -> Expr {
        match self {
            TargetForm::Linear5 { s } => s.clone() * chi.clone() + psi.clone(),
            TargetForm::Linear4 { a_bar } => abar_at(a_bar, phi).powi(3) * psi.clone(),
        }
    }
}

fn abar_at(a_bar: &Expr, phi: &Expr) -> Expr {
    let mut b = std::collections::BTreeMap::new();
    b.insert(VarId::X, phi.clone());
    a_bar.replace_vars(&b)
}

#[derive(Clone, Debug)]
pub struct ContactReport {
    pub lambda: Expr,
    pub jacobian: Expr,
    /// `psi_p - chi*phi_p`.
    pub part1: ZeroVerdict,
    /// `psi_x - chi*phi_x + p*lambda`.
    pub part2: ZeroVerdict,
    /// Verdict on `lambda`; must be nonzero.
    pub lambda_verdict: ZeroVerdict,
    /// Verdict on the Jacobian determinant; must be nonzero.
    pub jacobian_verdict: ZeroVerdict,
}

impl ContactReport {
    pub fn passed(&self) -> bool {
        self.part1.is_zero() && self.part2.is_zero() && !self.lambda_verdict.is_zero() && !self.jacobian_verdict.is_zero()
    }

    pub fn entries(&self) -> Vec<(&'static str, &ZeroVerdict, bool)> {
        vec![
            ("contact_part1", &self.part1, true),
            ("contact_part2", &self.part2, true),
            ("lambda", &self.lambda_verdict, false),
            ("jacobian", &self.jacobian_verdict, false),
        ]
    }
}

impl ContactTransform {
    pub fn new(phi: Expr, psi: Expr, chi: Expr) -> Result<ContactTransform> {
        for (name, e) in [("phi", &phi), ("psi", &psi), ("chi", &chi)] {
            if e.contains_var(&VarId::Q) || e.contains_j() {
                return Err(Error::DegenerateTransform(format!("{name} must depend on (x, u, p) only")));
            }
        }
        Ok(ContactTransform { phi, psi, chi })
    }

    fn plain() -> OdeContext {
        OdeContext::new(&Expr::zero()).expect("zero right-hand side")
    }

    /// `lambda = psi_u - chi*phi_u`.
    pub fn lambda(&self) -> Result<Expr> {
        let ctx = Self::plain();
        let (phi, psi, chi) = self.rats()?;
        let l = ctx.partial_rat(&psi, &VarId::U)?.sub(&chi.mul(&ctx.partial_rat(&phi, &VarId::U)?));
        Ok(l.to_expr())
    }

    fn rats(&self) -> Result<(RatFn, RatFn, RatFn)> {
        Ok((RatFn::from_expr(&self.phi)?, RatFn::from_expr(&self.psi)?, RatFn::from_expr(&self.chi)?))
    }

    /// Determinant of `d(phi, psi, chi)/d(x, u, p)`.
    pub fn jacobian(&self) -> Result<Expr> {
        let ctx = Self::plain();
        let (phi, psi, chi) = self.rats()?;
        let vars = [VarId::X, VarId::U, VarId::P];
        let mut m: Vec<Vec<RatFn>> = Vec::with_capacity(3);
        for r in [&phi, &psi, &chi] {
            m.push(vars.iter().map(|v| ctx.partial_rat(r, v)).collect::<Result<_>>()?);
        }
        let minor = |a: usize, b: usize, c: usize, d: usize| m[1][a].mul(&m[2][b]).sub(&m[1][c].mul(&m[2][d]));
        let det = m[0][0]
            .mul(&minor(1, 2, 2, 1))
            .sub(&m[0][1].mul(&minor(0, 2, 2, 0)))
            .add(&m[0][2].mul(&minor(0, 1, 1, 0)));
        Ok(det.to_expr())
    }
}

/// Contact condition and nondegeneracy of `t`.
pub fn check_contact(t: &ContactTransform, cfg: &SamplerConfig) -> Result<ContactReport> {
    let ctx = ContactTransform::plain();
    let (phi, psi, chi) = t.rats()?;
    let d = |r: &RatFn, v: VarId| ctx.partial_rat(r, &v);
    let lambda = d(&psi, VarId::U)?.sub(&chi.mul(&d(&phi, VarId::U)?));
    let part1 = d(&psi, VarId::P)?.sub(&chi.mul(&d(&phi, VarId::P)?));
    let part2 = d(&psi, VarId::X)?
        .sub(&chi.mul(&d(&phi, VarId::X)?))
        .add(&RatFn::var(VarId::P).mul(&lambda));
    let jacobian = t.jacobian()?;
    let exprs = [part1.to_expr(), part2.to_expr(), lambda.to_expr(), jacobian.clone()];
    let mut verdicts: Vec<ZeroVerdict> = exprs.par_iter().map(|e| is_zero(e, &ctx, cfg)).collect::<Result<_>>()?;
    let jacobian_verdict = verdicts.pop().unwrap();
    let lambda_verdict = verdicts.pop().unwrap();
    let part2_v = verdicts.pop().unwrap();
    let part1_v = verdicts.pop().unwrap();
    Ok(ContactReport {
        lambda: lambda.to_expr(),
        jacobian,
        part1: part1_v,
        part2: part2_v,
        lambda_verdict,
        jacobian_verdict,
    })
}

/// The transform lifted to the equation `u''' = f`.
#[derive(Clone, Debug)]
pub struct Prolongation {
    /// `D chi / D phi`, the image of `q`.
    pub eta: Expr,
    /// `D eta / D phi`, the right-hand side seen in the new variables.
    pub fbar_pushed: Expr,
    /// `chi - D psi / D phi`; vanishes for a contact transformation.
    pub consistency: Expr,
}

pub fn prolong(t: &ContactTransform, ctx: &OdeContext) -> Result<Prolongation> {
    let (phi, psi, chi) = t.rats()?;
    let dphi = ctx.total_d_rat(&phi)?;
    if dphi.is_zero() {
        return Err(Error::DegenerateTransform("the total derivative of phi vanishes".into()));
    }
    let eta = ctx.total_d_rat(&chi)?.div(&dphi)?;
    let fbar = ctx.total_d_rat(&eta)?.div(&dphi)?;
    let consistency = chi.sub(&ctx.total_d_rat(&psi)?.div(&dphi)?);
    Ok(Prolongation { eta: eta.to_expr(), fbar_pushed: fbar.to_expr(), consistency: consistency.to_expr() })
}

#[derive(Clone, Debug)]
pub struct TargetReport {
    pub contact: ContactReport,
    pub prolongation: Prolongation,
    /// `fbar_pushed - fbar(phi, psi, chi)`.
    pub residual: Expr,
    pub verdict: ZeroVerdict,
}

impl TargetReport {
    pub fn passed(&self) -> bool {
        self.contact.passed() && self.verdict.is_zero()
    }
}

pub fn verify_target(t: &ContactTransform, ctx: &OdeContext, target: &TargetForm, cfg: &SamplerConfig) -> Result<TargetReport> {
    let contact = check_contact(t, cfg)?;
    let prolongation = prolong(t, ctx)?;
    let rhs = target.rhs_at(&t.phi, &t.psi, &t.chi);
    let residual = ctx.normal(&(prolongation.fbar_pushed.clone() - rhs))?.to_expr();
    let verdict = is_zero(&residual, ctx, cfg).map_err(|e| e.with_condition("target"))?;
    Ok(TargetReport { contact, prolongation, residual, verdict })
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualEntry {
    pub label: String,
    #[serde(skip)]
    pub residual: Expr,
    #[serde(skip)]
    pub verdict: ZeroVerdict,
}

#[derive(Clone, Debug, Default)]
pub struct ResidualReport {
    pub entries: Vec<ResidualEntry>,
}

impl ResidualReport {
    pub fn all_zero(&self) -> bool {
        self.entries.iter().all(|e| e.verdict.is_zero())
    }

    pub fn get(&self, label: &str) -> Option<&ResidualEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    pub fn first_failure(&self) -> Option<&ResidualEntry> {
        self.entries.iter().find(|e| !e.verdict.is_zero())
    }
}

/// Unknowns of the five-symmetry construction. `eta` defaults to the
/// prolongation `D chi / D phi`.
#[derive(Clone, Debug)]
pub struct Branch1Data {
    pub a1: Expr,
    pub phi: Expr,
    pub psi: Expr,
    pub chi: Expr,
    pub eta: Option<Expr>,
}

/// Unknowns of the four-symmetry construction. Missing `b` and `h` are
/// derived from `a_bar` as `b = abar(phi)`, `H = abar'(phi)/abar(phi)^2`.
#[derive(Clone, Debug)]
pub struct Branch2Data {
    pub h: Option<Expr>,
    pub b: Option<Expr>,
    pub a_bar: Option<Expr>,
    pub a1: Expr,
    pub phi: Expr,
    pub psi: Expr,
    pub chi: Expr,
    pub eta: Option<Expr>,
}

struct Sys<'a> {
    t: &'a InvariantSet,
}

impl Sys<'_> {
    fn ctx(&self) -> &OdeContext {
        &self.t.ctx
    }
    fn r(&self, e: &Expr) -> Result<RatFn> {
        self.ctx().normal(e)
    }
    fn inv(&self, name: &str) -> RatFn {
        self.t.rat(name).cloned().expect("tower entry")
    }
    fn d(&self, r: &RatFn) -> Result<RatFn> {
        self.ctx().total_d_rat(r)
    }
    fn pd(&self, r: &RatFn, v: VarId) -> Result<RatFn> {
        self.ctx().partial_rat(r, &v)
    }
    fn c(n: i64, d: i64) -> RatFn {
        RatFn::frac(n, d)
    }

    fn eta(&self, given: &Option<Expr>, phi: &Expr, psi: &Expr, chi: &Expr) -> Result<RatFn> {
        match given {
            Some(e) => self.r(e),
            None => {
                let tr = ContactTransform::new(phi.clone(), psi.clone(), chi.clone())?;
                self.r(&prolong(&tr, self.ctx())?.eta)
            }
        }
    }
}

fn test_entries(raw: Vec<(&str, RatFn)>, ctx: &OdeContext, cfg: &SamplerConfig) -> Result<ResidualReport> {
    let entries = raw
        .into_par_iter()
        .map(|(label, r)| {
            let r = ctx.reduce(r)?;
            let residual = r.to_expr();
            let verdict = is_zero(&residual, ctx, cfg).map_err(|e| e.with_condition(label))?;
            Ok(ResidualEntry { label: label.to_string(), residual, verdict })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport { entries })
}

fn sides_prop41(tower: &InvariantSet, data: &Branch1Data) -> Result<Vec<Side>> {
    let sys = Sys { t: tower };
    let c = Sys::c;
    let (a1, phi, psi, chi) = (sys.r(&data.a1)?, sys.r(&data.phi)?, sys.r(&data.psi)?, sys.r(&data.chi)?);
    let eta = sys.eta(&data.eta, &data.phi, &data.psi, &data.chi)?;
    let (j, i1, i2, i4, i5, i7, q, s) =
        (sys.inv("J"), sys.inv("I1"), sys.inv("I2"), sys.inv("I4"), sys.inv("I5"), sys.inv("I7"), sys.inv("Q"), sys.inv("K"));
    let j2 = j.mul(&j);
    let fbar = s.mul(&chi).add(&psi);
    let p = RatFn::var(VarId::P);

    let raw = vec![
        ("4.3a", sys.d(&a1)?, j.mul(&i5).mul(&a1)),
        ("4.3b", sys.pd(&a1, VarId::U)?, q.mul(&a1).neg()),
        ("4.3c", sys.pd(&a1, VarId::P)?, i4.mul(&i5).sub(&i7.div(&j)?).mul(&a1)),
        ("4.3d", sys.pd(&a1, VarId::Q)?, RatFn::zero()),
        ("4.4a", sys.d(&phi)?, j.neg()),
        ("4.4b", sys.pd(&phi, VarId::U)?, i7.neg()),
        ("4.4c", sys.pd(&phi, VarId::P)?, i4.neg()),
        ("4.5a", sys.d(&eta)?, j.mul(&fbar).neg()),
        (
            "4.5b",
            sys.pd(&eta, VarId::U)?,
            s.add(&i5.mul(&i5)).mul(&c(1, 2)).add(&i2.div(&j2.mul(&c(2, 1)))?).mul(&a1).sub(&i7.mul(&fbar)),
        ),
        (
            "4.5c",
            sys.pd(&eta, VarId::P)?,
            i5.div(&j)?.add(&i1.div(&j2.mul(&c(3, 1)))?).mul(&a1).sub(&i4.mul(&fbar)),
        ),
        ("4.5d", sys.pd(&eta, VarId::Q)?, a1.div(&j2)?),
        ("4.5e", sys.d(&chi)?, j.mul(&eta).neg()),
        ("4.5f", sys.pd(&chi, VarId::U)?, i5.mul(&a1).add(&i7.mul(&eta)).neg()),
        ("4.5g", sys.pd(&chi, VarId::P)?, a1.div(&j)?.add(&i4.mul(&eta)).neg()),
        ("4.5h", i7.mul(&sys.d(&psi)?), j.mul(&sys.pd(&psi, VarId::U)?.sub(&a1))),
        ("4.5i", sys.pd(&psi, VarId::X)?, chi.mul(&sys.pd(&phi, VarId::X)?).sub(&p.mul(&a1))),
        ("4.5j", sys.pd(&psi, VarId::P)?, i4.mul(&chi).neg()),
    ];
    Ok(raw)
}

/// `b = abar(phi)` and `H = abar'(phi) / abar(phi)^2`.
pub fn derive_h_b(a_bar: &Expr, phi: &Expr) -> Result<(Expr, Expr)> {
    let plain = OdeContext::new(&Expr::zero())?;
    let da = plain.partial(a_bar, &VarId::X)?;
    let b = RatFn::from_expr(&abar_at(a_bar, phi))?;
    let h = RatFn::from_expr(&abar_at(&da, phi))?.div(&b.mul(&b))?;
    Ok((h.to_expr(), b.to_expr()))
}

/// Residual of the Riccati equation `-(2/J) D H + H^2 = K`.
pub fn riccati_residual(tower: &InvariantSet, h: &Expr) -> Result<Expr> {
    let sys = Sys { t: tower };
    let h = sys.r(h)?;
    let j = sys.inv("J");
    let r = sys.d(&h)?.div(&j)?.mul(&RatFn::int(-2)).add(&h.mul(&h)).sub(&sys.inv("K"));
    Ok(sys.ctx().reduce(r)?.to_expr())
}

fn sides_prop42(tower: &InvariantSet, data: &Branch2Data) -> Result<Vec<Side>> {
    let sys = Sys { t: tower };
    let c = Sys::c;
    let (h, b) = match (&data.h, &data.b, &data.a_bar) {
        (Some(h), Some(b), _) => (h.clone(), b.clone()),
        (h, b, Some(a)) => {
            let (dh, db) = derive_h_b(a, &data.phi)?;
            (h.clone().unwrap_or(dh), b.clone().unwrap_or(db))
        }
        _ => return Err(Error::InvalidTarget("H and b, or abar, are required".into())),
    };
    let (h, b) = (sys.r(&h)?, sys.r(&b)?);
    let (a1, phi, psi, chi) = (sys.r(&data.a1)?, sys.r(&data.phi)?, sys.r(&data.psi)?, sys.r(&data.chi)?);
    let eta = sys.eta(&data.eta, &data.phi, &data.psi, &data.chi)?;
    let (j, i1, i2, i4, i5, i7, q, k) =
        (sys.inv("J"), sys.inv("I1"), sys.inv("I2"), sys.inv("I4"), sys.inv("I5"), sys.inv("I7"), sys.inv("Q"), sys.inv("K"));
    let j2 = j.mul(&j);
    let b2 = b.mul(&b);
    let fbar = match &data.a_bar {
        Some(a) => sys.r(&(abar_at(a, &data.phi).powi(3) * data.psi.clone()))?,
        None => b2.mul(&b).mul(&psi),
    };
    let hi5 = h.add(&i5);
    let j_b = j.div(&b)?;
    let i7_b = i7.div(&b)?;
    let i4_b = i4.div(&b)?;
    let p = RatFn::var(VarId::P);

    let raw = vec![
        ("4.10", sys.d(&h)?.div(&j)?.mul(&c(-2, 1)).add(&h.mul(&h)), k),
        ("4.11", sys.d(&b)?, j.mul(&h).mul(&b).neg()),
        ("4.12a", sys.d(&a1)?, j.mul(&hi5).mul(&a1)),
        ("4.12b", sys.pd(&a1, VarId::U)?, h.mul(&i7).sub(&q).mul(&a1)),
        ("4.12c", sys.pd(&a1, VarId::P)?, i4.mul(&hi5).sub(&i7.div(&j)?).mul(&a1)),
        ("4.12d", sys.pd(&a1, VarId::Q)?, RatFn::zero()),
        ("4.13a", sys.d(&phi)?, j_b.neg()),
        ("4.13b", sys.pd(&phi, VarId::U)?, i7_b.neg()),
        ("4.13c", sys.pd(&phi, VarId::P)?, i4_b.neg()),
        ("4.14a", sys.d(&eta)?, j_b.mul(&fbar).neg()),
        (
            "4.14b",
            sys.pd(&eta, VarId::U)?,
            hi5.mul(&hi5).mul(&c(1, 2)).add(&i2.div(&j2.mul(&c(2, 1)))?).mul(&b2).mul(&a1).sub(&i7_b.mul(&fbar)),
        ),
        (
            "4.14c",
            sys.pd(&eta, VarId::P)?,
            hi5.div(&j)?.add(&i1.div(&j2.mul(&c(3, 1)))?).mul(&b2).mul(&a1).sub(&i4_b.mul(&fbar)),
        ),
        ("4.14d", sys.pd(&eta, VarId::Q)?, b2.mul(&a1).div(&j2)?),
        ("4.14e", sys.d(&chi)?, j_b.mul(&eta).neg()),
        ("4.14f", sys.pd(&chi, VarId::U)?, hi5.mul(&b).mul(&a1).add(&i7_b.mul(&eta)).neg()),
        ("4.14g", sys.pd(&chi, VarId::P)?, b.mul(&a1).div(&j)?.add(&i4_b.mul(&eta)).neg()),
        ("4.14h", i7.mul(&sys.d(&psi)?), j.mul(&sys.pd(&psi, VarId::U)?.sub(&a1))),
        ("4.14i", sys.pd(&psi, VarId::X)?, chi.mul(&sys.pd(&phi, VarId::X)?).sub(&p.mul(&a1))),
        ("4.14j", sys.pd(&psi, VarId::P)?, i4_b.mul(&chi).neg()),
    ];
    Ok(raw)
}

type Side = (&'static str, RatFn, RatFn);

fn test_sides(raw: Vec<Side>, ctx: &OdeContext, cfg: &SamplerConfig) -> Result<ResidualReport> {
    test_entries(raw.into_iter().map(|(l, a, b)| (l, a.sub(&b))).collect(), ctx, cfg)
}

fn expr_sides(raw: Vec<Side>, ctx: &OdeContext) -> Result<Vec<(String, Expr, Expr)>> {
    raw.into_iter()
        .map(|(l, a, b)| Ok((l.to_string(), ctx.reduce(a)?.to_expr(), ctx.reduce(b)?.to_expr())))
        .collect()
}

/// Residuals of the five-symmetry systems with `fbar = s*chi + psi` and
/// `s = K`.
pub fn residuals_prop41(tower: &InvariantSet, data: &Branch1Data, cfg: &SamplerConfig) -> Result<ResidualReport> {
    test_sides(sides_prop41(tower, data)?, &tower.ctx, cfg)
}

/// The five-symmetry systems as `(label, lhs, rhs)`, each side reduced on
/// its own.
pub fn residual_sides_prop41(tower: &InvariantSet, data: &Branch1Data) -> Result<Vec<(String, Expr, Expr)>> {
    expr_sides(sides_prop41(tower, data)?, &tower.ctx)
}

/// Residuals of the four-symmetry systems with `fbar = abar(phi)^3 psi`
/// (equivalently `b^3 psi`).
pub fn residuals_prop42(tower: &InvariantSet, data: &Branch2Data, cfg: &SamplerConfig) -> Result<ResidualReport> {
    test_sides(sides_prop42(tower, data)?, &tower.ctx, cfg)
}

/// The four-symmetry systems as `(label, lhs, rhs)`.
pub fn residual_sides_prop42(tower: &InvariantSet, data: &Branch2Data) -> Result<Vec<(String, Expr, Expr)>> {
    expr_sides(sides_prop42(tower, data)?, &tower.ctx)
}
