//! Numerical reconstruction of linearizing transformations from the
//! first-order systems satisfied by `(a1, phi, eta, chi, psi)`.
//!
//! Two routes are kept separate: `a1` and `phi` are obtained both as line
//! integrals of their gradient fields (Gauss–Kronrod) and as components of the
//! coupled initial-value problem (Dormand–Prince). The grid stores the ODE
//! values; the quadrature values are compared against them.

pub mod ode;
pub mod quadrature;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::OdeContext;
use crate::classifier::{classify, Outcome};
use crate::error::{Error, Result};
use crate::eval::{eval_f64, SamplePoint};
use crate::expr::{Expr, VarId};
use crate::identity::{is_zero, SamplerConfig, ZeroVerdict};
use crate::invariants::InvariantSet;
use crate::normal::RatFn;
use crate::parser::to_text;
use crate::transform::riccati_residual;

pub use ode::{dopri5, OdeOptions};

/// Order in which the axis-parallel legs of a path are traversed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PathOrder {
    Xup,
    Pux,
}

impl PathOrder {
    fn axes(self) -> [usize; 3] {
        match self {
            PathOrder::Xup => [0, 1, 2],
            PathOrder::Pux => [2, 1, 0],
        }
    }
}

/// Numeric evaluation environment: pinned parameters, the `q` slice and the
/// `I3` used for J.
#[derive(Clone, Debug)]
pub struct NumEnv {
    pub pins: BTreeMap<VarId, BigRational>,
    pub q0: f64,
    pub i3: Option<Expr>,
}

impl NumEnv {
    pub fn new(pins: &BTreeMap<String, BigRational>, q0: f64, i3: Option<Expr>) -> Result<NumEnv> {
        let pins = pins.iter().map(|(k, v)| Ok((VarId::param(k)?, v.clone()))).collect::<Result<_>>()?;
        Ok(NumEnv { pins, q0, i3 })
    }

    /// Rejects expressions with parameters that have no numeric value.
    pub fn check(&self, e: &Expr) -> Result<()> {
        let mut params = e.params();
        if let Some(i3) = &self.i3 {
            params.extend(i3.params());
        }
        match params.into_iter().find(|v| !self.pins.contains_key(v)) {
            Some(v) => Err(Error::Malformed(format!("parameter `{v}` must be pinned for numeric synthesis"))),
            None => Ok(()),
        }
    }

    fn point(&self, at: [f64; 3]) -> Result<SamplePoint> {
        let r = |v: f64| {
            BigRational::from_float(v).ok_or_else(|| Error::Path(format!("non-finite coordinate {v}")))
        };
        let mut pt = SamplePoint::jet(r(at[0])?, r(at[1])?, r(at[2])?, r(self.q0)?);
        for (k, v) in &self.pins {
            pt.set(k.clone(), v.clone());
        }
        Ok(pt)
    }

    fn eval_pt(&self, e: &Expr, pt: &SamplePoint, at: [f64; 3]) -> Result<f64> {
        let v = eval_f64(e, pt, self.i3.as_ref()).map_err(|err| match err {
            Error::Singular(m) | Error::Domain(m) => Error::Path(format!("{m} at (x,u,p) = {at:?}")),
            other => other,
        })?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Path(format!("non-finite value at (x,u,p) = {at:?}")))
        }
    }

    /// Evaluates `e` at `(x, u, p, q0)`.
    pub fn eval(&self, e: &Expr, at: [f64; 3]) -> Result<f64> {
        self.eval_pt(e, &self.point(at)?, at)
    }

    pub fn eval_many(&self, es: &[Expr], at: [f64; 3]) -> Result<Vec<f64>> {
        let pt = self.point(at)?;
        es.iter().map(|e| self.eval_pt(e, &pt, at)).collect()
    }
}

/// A gradient `(g_x, g_u, g_p)` of an unknown function of `(x, u, p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    pub gx: Expr,
    pub gu: Expr,
    pub gp: Expr,
    pub label: String,
}

impl GradientField {
    pub fn new(label: &str, gx: Expr, gu: Expr, gp: Expr) -> GradientField {
        GradientField { gx, gu, gp, label: label.to_string() }
    }

    pub fn components(&self) -> [&Expr; 3] {
        [&self.gx, &self.gu, &self.gp]
    }
}

/// Outcome of [`exactness_check`]. Mixed differences are ordered
/// `(u,x)`, `(p,x)`, `(p,u)`.
#[derive(Clone, Debug)]
pub struct ExactnessReport {
    pub label: String,
    pub q_free: [ZeroVerdict; 3],
    pub mixed: [ZeroVerdict; 3],
}

impl ExactnessReport {
    pub fn q_independent(&self) -> bool {
        self.q_free.iter().all(ZeroVerdict::is_zero)
    }

    pub fn is_exact(&self) -> bool {
        self.mixed.iter().all(ZeroVerdict::is_zero)
    }

    pub fn passed(&self) -> bool {
        self.q_independent() && self.is_exact()
    }

    /// The first failing verdict, labelled.
    pub fn failure(&self) -> Option<(String, &ZeroVerdict)> {
        const Q: [&str; 3] = ["d_q g_x", "d_q g_u", "d_q g_p"];
        const M: [&str; 3] = ["d_u g_x - d_x g_u", "d_p g_x - d_x g_p", "d_p g_u - d_u g_p"];
        let q = self.q_free.iter().zip(Q).find(|(v, _)| !v.is_zero());
        let m = self.mixed.iter().zip(M).find(|(v, _)| !v.is_zero());
        q.or(m).map(|(v, n)| (format!("{}: {n}", self.label), v))
    }
}

/// Zero-tests `d_q` of every component and the three mixed-partial
/// differences.
pub fn exactness_check(g: &GradientField, ctx: &OdeContext, cfg: &SamplerConfig) -> Result<ExactnessReport> {
    let c: Vec<RatFn> = g.components().iter().map(|e| ctx.normal(e)).collect::<Result<_>>()?;
    let d = |r: &RatFn, v: VarId| ctx.partial_rat(r, &v);
    let test = |r: RatFn| -> Result<ZeroVerdict> { is_zero(&ctx.reduce(r)?.to_expr(), ctx, cfg) };
    let q_free = [test(d(&c[0], VarId::Q)?)?, test(d(&c[1], VarId::Q)?)?, test(d(&c[2], VarId::Q)?)?];
    let mixed = [
        test(d(&c[0], VarId::U)?.sub(&d(&c[1], VarId::X)?))?,
        test(d(&c[0], VarId::P)?.sub(&d(&c[2], VarId::X)?))?,
        test(d(&c[1], VarId::P)?.sub(&d(&c[2], VarId::U)?))?,
    ];
    Ok(ExactnessReport { label: g.label.clone(), q_free, mixed })
}

/// Line integral of `g` along the axis-parallel path from `base` to
/// `target`, with absolute tolerance `tol` per leg.
pub fn integrate_gradient(
    g: &GradientField,
    env: &NumEnv,
    base: [f64; 3],
    target: [f64; 3],
    order: PathOrder,
    tol: f64,
) -> Result<f64> {
    for c in g.components() {
        env.check(c)?;
    }
    let comps = g.components();
    let mut at = base;
    let mut total = 0.0;
    for axis in order.axes() {
        let (a, b) = (at[axis], target[axis]);
        let here = at;
        total += quadrature::integrate(
            |t| {
                let mut pt = here;
                pt[axis] = t;
                env.eval(comps[axis], pt)
            },
            a,
            b,
            tol,
        )?;
        at[axis] = b;
    }
    Ok(total)
}

/// Which of the two constructions is being run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Branch {
    FiveSymmetry,
    FourSymmetry,
}

/// Grid geometry: `counts[i]` nodes per axis, centred on `base`, spanning
/// `base[i] ± half_width[i]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub base: [f64; 3],
    pub counts: [usize; 3],
    pub half_width: [f64; 3],
    /// Value of `q` on the slice where `eta` is reported.
    pub q0: f64,
}

impl GridSpec {
    pub fn around(base: [f64; 3]) -> GridSpec {
        GridSpec { base, counts: [5; 3], half_width: [0.5; 3], q0: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if self.counts[i] < 2 || !(self.half_width[i] > 0.0) || !self.base[i].is_finite() {
                return Err(Error::Malformed("grid needs at least two nodes and a positive extent per axis".into()));
            }
        }
        if !self.q0.is_finite() {
            return Err(Error::Malformed("q0 must be finite".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> [f64; 3] {
        let s = |i: usize| 2.0 * self.half_width[i] / (self.counts[i] - 1) as f64;
        [s(0), s(1), s(2)]
    }

    fn coord(&self, axis: usize, k: usize) -> f64 {
        self.base[axis] - self.half_width[axis] + k as f64 * self.steps()[axis]
    }

    /// Nodes in x-major order, base point snapped exactly when the count is
    /// odd.
    pub fn nodes(&self) -> Vec<([usize; 3], [f64; 3])> {
        let mut out = Vec::new();
        for i in 0..self.counts[0] {
            for j in 0..self.counts[1] {
                for k in 0..self.counts[2] {
                    let idx = [i, j, k];
                    let mut at = [self.coord(0, i), self.coord(1, j), self.coord(2, k)];
                    for a in 0..3 {
                        if 2 * idx[a] + 1 == self.counts[a] {
                            at[a] = self.base[a];
                        }
                    }
                    out.push((idx, at));
                }
            }
        }
        out
    }

    fn interior(&self, idx: [usize; 3]) -> bool {
        (0..3).all(|a| idx[a] > 0 && idx[a] + 1 < self.counts[a])
    }
}

/// Numeric knobs of the synthesizer.
#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub sampler: SamplerConfig,
    pub ode: OdeOptions,
    /// Absolute tolerance per quadrature leg.
    pub quad_tol: f64,
    /// Step of the fourth-order finite-difference probes.
    pub fd_step: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { sampler: SamplerConfig::default(), ode: OdeOptions::default(), quad_tol: 1e-12, fd_step: 1e-3 }
    }
}

/// Unknown values at one grid node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridNode {
    pub x: f64,
    pub u: f64,
    pub p: f64,
    pub a1: f64,
    pub phi: f64,
    pub eta: f64,
    pub chi: f64,
    pub psi: f64,
    /// `b = abar(phi)` in the four-symmetry branch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

impl GridNode {
    fn new(at: [f64; 3], y: &[f64], b: Option<f64>) -> GridNode {
        GridNode { x: at[0], u: at[1], p: at[2], a1: y[0], phi: y[1], eta: y[2], chi: y[3], psi: y[4], b }
    }

    pub fn state(&self) -> [f64; 5] {
        [self.a1, self.phi, self.eta, self.chi, self.psi]
    }
}

/// Self-checks computed alongside the grid. All quantities are maxima of
/// absolute values.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// ODE values along `x,u,p` versus `p,u,x` paths.
    pub path_discrepancy: f64,
    /// Quadrature of the `phi` and `ln a1` gradients in both path orders.
    pub quadrature_path_discrepancy: f64,
    /// Quadrature route versus ODE route for `phi` and `ln a1`.
    pub route_discrepancy: f64,
    /// Contact condition by finite differences on interior nodes.
    pub contact_residual: f64,
    /// `D eta / D phi - fbar(phi, psi, chi)` by finite differences.
    pub target_residual: f64,
    /// `eta - D chi / D phi` by finite differences.
    pub prolongation_residual: f64,
    pub interior_nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthesisGrid {
    pub branch: Branch,
    pub input: String,
    pub spec: GridSpec,
    pub steps: [f64; 3],
    /// `(a1, phi, eta, chi, psi)` at the base point.
    pub gauge: [f64; 5],
    /// Target coefficient `s` (five-symmetry branch).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    pub nodes: Vec<GridNode>,
    pub diagnostics: Diagnostics,
}

pub const CSV_COLUMNS: [&str; 8] = ["x", "u", "p", "a1", "phi", "eta", "chi", "psi"];

fn sig20(v: f64) -> String {
    format!("{v:.19e}")
}

impl SynthesisGrid {
    pub fn node_at_base(&self) -> Option<&GridNode> {
        let b = self.spec.base;
        self.nodes.iter().find(|n| n.x == b[0] && n.u == b[1] && n.p == b[2])
    }

    /// CSV with a commented gauge header and values at 20 significant digits.
    pub fn to_csv(&self) -> String {
        let g = self.gauge;
        let mut s = format!(
            "# gauge a1={} phi={} eta={} chi={} psi={} q0={}\n",
            g[0], g[1], g[2], g[3], g[4], self.spec.q0
        );
        s.push_str(&CSV_COLUMNS.join(","));
        s.push('\n');
        for n in &self.nodes {
            let row = [n.x, n.u, n.p, n.a1, n.phi, n.eta, n.chi, n.psi].map(sig20);
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    /// Samples `(phi, b)` of the target coefficient `abar` in the
    /// four-symmetry branch.
    pub fn abar_samples(&self) -> Vec<(f64, f64)> {
        self.nodes.iter().filter_map(|n| n.b.map(|b| (n.phi, b))).collect()
    }
}

/// Indices into the evaluated coefficient vector.
mod c {
    pub const J: usize = 0;
    pub const I1: usize = 1;
    pub const I2: usize = 2;
    pub const I4: usize = 3;
    pub const I5: usize = 4;
    pub const I7: usize = 5;
    pub const F: usize = 6;
    pub const H: usize = 7;
    pub const B: usize = 8;
    /// `ln a1` gradient, then `phi` gradient.
    pub const LA: usize = 9;
    pub const GPHI: usize = 12;
    pub const N: usize = 15;
}

/// A prepared system: gradient fields checked, coefficients ready for
/// numeric evaluation.
#[derive(Clone, Debug)]
pub struct Synthesizer {
    pub branch: Branch,
    pub input: Expr,
    pub tower: InvariantSet,
    pub log_a1: GradientField,
    pub phi: GradientField,
    pub exactness: Vec<ExactnessReport>,
    /// Five-symmetry target coefficient (symbolic, constant).
    pub s: Option<Expr>,
    pub h: Option<Expr>,
    pub b: Option<Expr>,
    coeffs: Vec<Expr>,
    cfg: SynthConfig,
}

/// Gauge `(a1, phi, eta, chi, psi)(base) = (1, 0, 0, 0, 0)`.
pub const GAUGE: [f64; 5] = [1.0, 0.0, 0.0, 0.0, 0.0];

fn rat(t: &InvariantSet, name: &str) -> RatFn {
    t.rat(name).cloned().expect("tower entry")
}

/// `ln a1` and `phi` gradients for the given `H` and `b` (`0` and `1` in the
/// five-symmetry branch).
fn gradient_fields(t: &InvariantSet, h: &RatFn, b: &RatFn) -> Result<(GradientField, GradientField)> {
    let ctx = &t.ctx;
    let (j, i4, i5, i7, q) = (rat(t, "J"), rat(t, "I4"), rat(t, "I5"), rat(t, "I7"), rat(t, "Q"));
    let (pv, qv) = (RatFn::var(VarId::P), RatFn::var(VarId::Q));
    let hi5 = h.add(&i5);
    let lu = h.mul(&i7).sub(&q);
    let lp = i4.mul(&hi5).sub(&i7.div(&j)?);
    let lx = j.mul(&hi5).sub(&pv.mul(&lu)).sub(&qv.mul(&lp));
    let gu = i7.div(b)?.neg();
    let gp = i4.div(b)?.neg();
    let gx = j.div(b)?.neg().sub(&pv.mul(&gu)).sub(&qv.mul(&gp));
    let e = |r: RatFn| -> Result<Expr> { Ok(ctx.reduce(r)?.to_expr()) };
    Ok((
        GradientField::new("ln a1", e(lx)?, e(lu)?, e(lp)?),
        GradientField::new("phi", e(gx)?, e(gu)?, e(gp)?),
    ))
}

fn rejected(equation: &str, v: ZeroVerdict) -> Error {
    Error::RejectedAnsatz { equation: equation.to_string(), witness: v.witness().cloned().map(Box::new) }
}

impl Synthesizer {
    /// Prepares the five-symmetry construction for `f`.
    pub fn branch1(f: &Expr, cfg: &SynthConfig) -> Result<Synthesizer> {
        let cl = classify(f, &cfg.sampler)?;
        let s = match &cl.outcome {
            Outcome::FiveSymmetry { s } => s.clone(),
            o => {
                return Err(Error::ClassificationMismatch {
                    expected: "FiveSymmetryLinearizable".into(),
                    found: o.tag().into(),
                })
            }
        };
        let tower = cl.tower.expect("linearizable classification carries its tower");
        let (la, gphi) = gradient_fields(&tower, &RatFn::zero(), &RatFn::one())?;
        Synthesizer::finish(Branch::FiveSymmetry, f, tower, la, gphi, Some(s), None, None, cfg)
    }

    /// Prepares the four-symmetry construction for `f` with user-supplied
    /// `H` and `b`, after checking the Riccati equation and `D b = -J H b`.
    pub fn branch2(f: &Expr, h: &Expr, b: &Expr, cfg: &SynthConfig) -> Result<Synthesizer> {
        let cl = classify(f, &cfg.sampler)?;
        if !matches!(cl.outcome, Outcome::FourSymmetry { .. }) {
            return Err(Error::ClassificationMismatch {
                expected: "FourSymmetryLinearizable".into(),
                found: cl.outcome.tag().into(),
            });
        }
        let tower = cl.tower.expect("linearizable classification carries its tower");
        let ctx = &tower.ctx;
        let ric = riccati_residual(&tower, h)?;
        let v = is_zero(&ric, ctx, &cfg.sampler)?;
        if !v.is_zero() {
            return Err(rejected("4.10", v));
        }
        let (hr, br) = (ctx.normal(h)?, ctx.normal(b)?);
        if br.is_zero() {
            return Err(Error::InvalidTarget("b must be non-zero".into()));
        }
        let r411 = ctx.reduce(ctx.total_d_rat(&br)?.add(&rat(&tower, "J").mul(&hr).mul(&br)))?.to_expr();
        let v = is_zero(&r411, ctx, &cfg.sampler)?;
        if !v.is_zero() {
            return Err(rejected("4.11", v));
        }
        let (la, gphi) = gradient_fields(&tower, &hr, &br)?;
        Synthesizer::finish(Branch::FourSymmetry, f, tower, la, gphi, None, Some(h.clone()), Some(b.clone()), cfg)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        branch: Branch,
        f: &Expr,
        tower: InvariantSet,
        log_a1: GradientField,
        phi: GradientField,
        s: Option<Expr>,
        h: Option<Expr>,
        b: Option<Expr>,
        cfg: &SynthConfig,
    ) -> Result<Synthesizer> {
        let (ra, rp) = rayon::join(
            || exactness_check(&log_a1, &tower.ctx, &cfg.sampler),
            || exactness_check(&phi, &tower.ctx, &cfg.sampler),
        );
        let exactness = vec![ra?, rp?];
        for rep in &exactness {
            if let Some((name, v)) = rep.failure() {
                return Err(rejected(&name, v.clone()));
            }
        }
        let mut coeffs = vec![Expr::zero(); c::N];
        coeffs[c::J] = Expr::j();
        coeffs[c::I1] = tower.i1.clone();
        coeffs[c::I2] = tower.i2.clone();
        coeffs[c::I4] = tower.i4.clone();
        coeffs[c::I5] = tower.i5.clone();
        coeffs[c::I7] = tower.i7.clone();
        coeffs[c::F] = tower.ctx.f.clone();
        coeffs[c::H] = h.clone().unwrap_or_else(Expr::zero);
        coeffs[c::B] = b.clone().unwrap_or_else(Expr::one);
        for k in 0..3 {
            coeffs[c::LA + k] = log_a1.components()[k].clone();
            coeffs[c::GPHI + k] = phi.components()[k].clone();
        }
        Ok(Synthesizer { branch, input: f.clone(), tower, log_a1, phi, exactness, s, h, b, coeffs, cfg: cfg.clone() })
    }

    pub fn env(&self, q0: f64) -> Result<NumEnv> {
        let env = NumEnv::new(&self.cfg.sampler.pins, q0, self.tower.ctx.i3().cloned())?;
        for e in &self.coeffs {
            env.check(e)?;
        }
        if let Some(s) = &self.s {
            env.check(s)?;
        }
        Ok(env)
    }

    fn s_value(&self, env: &NumEnv, base: [f64; 3]) -> Result<f64> {
        match &self.s {
            Some(s) => env.eval(s, base),
            None => Ok(0.0),
        }
    }

    /// Right-hand side of the coupled system along `axis` at `at`.
    fn rhs(&self, env: &NumEnv, s: f64, axis: usize, at: [f64; 3], y: &[f64]) -> Result<Vec<f64>> {
        let v = env.eval_many(&self.coeffs, at)?;
        let (j, i1, i2, i4, i5, i7, f, h, b) =
            (v[c::J], v[c::I1], v[c::I2], v[c::I4], v[c::I5], v[c::I7], v[c::F], v[c::H], v[c::B]);
        if j == 0.0 || b == 0.0 {
            return Err(Error::Path(format!("J or b vanishes at (x,u,p) = {at:?}")));
        }
        let (p, q) = (at[2], env.q0);
        let [a1, _phi, eta, chi, psi] = [y[0], y[1], y[2], y[3], y[4]];
        let five = self.branch == Branch::FiveSymmetry;
        let fbar = if five { s * chi + psi } else { b * b * b * psi };
        let hi5 = h + i5;
        let (b2, j2) = (b * b, j * j);
        let au = b2 * (hi5 * hi5 / 2.0 + i2 / (2.0 * j2)) + if five { s / 2.0 } else { 0.0 };
        let ap = b2 * (hi5 / j + i1 / (3.0 * j2));
        let eta_u = au * a1 - i7 / b * fbar;
        let eta_p = ap * a1 - i4 / b * fbar;
        let eta_q = b2 / j2 * a1;
        let chi_u = -hi5 * b * a1 - i7 / b * eta;
        let chi_p = -b / j * a1 - i4 / b * eta;
        let gphi = [v[c::GPHI], v[c::GPHI + 1], v[c::GPHI + 2]];
        let la = v[c::LA + axis];
        Ok(match axis {
            0 => vec![
                la * a1,
                gphi[0],
                -j / b * fbar - p * eta_u - q * eta_p - f * eta_q,
                -j / b * eta - p * chi_u - q * chi_p,
                chi * gphi[0] - p * a1,
            ],
            1 => vec![la * a1, gphi[1], eta_u, chi_u, a1 + chi * gphi[1]],
            _ => vec![la * a1, gphi[2], eta_p, chi_p, chi * gphi[2]],
        })
    }

    /// Integrates the coupled system from `base` (with values `y0`) to
    /// `target`.
    pub fn integrate_to(
        &self,
        env: &NumEnv,
        s: f64,
        base: [f64; 3],
        y0: &[f64; 5],
        target: [f64; 3],
        order: PathOrder,
    ) -> Result<[f64; 5]> {
        let mut at = base;
        let mut y = y0.to_vec();
        for axis in order.axes() {
            let here = at;
            y = dopri5(
                |t, y| {
                    let mut pt = here;
                    pt[axis] = t;
                    self.rhs(env, s, axis, pt, y)
                },
                at[axis],
                target[axis],
                &y,
                &self.cfg.ode,
            )?;
            at[axis] = target[axis];
        }
        Ok([y[0], y[1], y[2], y[3], y[4]])
    }

    fn run_nodes(&self, env: &NumEnv, s: f64, spec: &GridSpec, gauge: &[f64; 5], order: PathOrder) -> Result<Vec<[f64; 5]>> {
        spec.nodes()
            .par_iter()
            .map(|(_, at)| self.integrate_to(env, s, spec.base, gauge, *at, order))
            .collect()
    }

    /// Integrates the grid under the default gauge and computes the
    /// diagnostics.
    pub fn run(&self, spec: &GridSpec) -> Result<SynthesisGrid> {
        spec.validate()?;
        let env = self.env(spec.q0)?;
        let base = spec.base;
        env.eval_many(&self.coeffs, base)?;
        let s = self.s_value(&env, base)?;
        let nodes = spec.nodes();
        let ys = self.run_nodes(&env, s, spec, &GAUGE, PathOrder::Xup)?;
        let alt = self.run_nodes(&env, s, spec, &GAUGE, PathOrder::Pux)?;

        let mut d = Diagnostics::default();
        for (a, b) in ys.iter().zip(&alt) {
            for k in 0..5 {
                d.path_discrepancy = d.path_discrepancy.max((a[k] - b[k]).abs());
            }
        }

        let tol = self.cfg.quad_tol;
        let quad: Vec<[f64; 4]> = nodes
            .par_iter()
            .map(|(_, at)| {
                let mut r = [0.0; 4];
                for (i, order) in [PathOrder::Xup, PathOrder::Pux].into_iter().enumerate() {
                    r[2 * i] = integrate_gradient(&self.log_a1, &env, base, *at, order, tol)?;
                    r[2 * i + 1] = integrate_gradient(&self.phi, &env, base, *at, order, tol)?;
                }
                Ok(r)
            })
            .collect::<Result<_>>()?;
        for (r, y) in quad.iter().zip(&ys) {
            d.quadrature_path_discrepancy =
                d.quadrature_path_discrepancy.max((r[0] - r[2]).abs()).max((r[1] - r[3]).abs());
            let la = r[0].exp() * GAUGE[0];
            d.route_discrepancy = d.route_discrepancy.max((la - y[0]).abs()).max((r[1] + GAUGE[1] - y[1]).abs());
        }

        let probes: Vec<[f64; 3]> = nodes
            .par_iter()
            .filter(|(idx, _)| spec.interior(*idx))
            .map(|(_, at)| self.fd_residuals(&env, s, base, *at, &ys[node_index(spec, at)]))
            .collect::<Result<_>>()?;
        d.interior_nodes = probes.len();
        for r in probes {
            d.contact_residual = d.contact_residual.max(r[0]);
            d.target_residual = d.target_residual.max(r[1]);
            d.prolongation_residual = d.prolongation_residual.max(r[2]);
        }

        let bexpr = self.b.clone();
        let grid_nodes = nodes
            .iter()
            .zip(&ys)
            .map(|((_, at), y)| {
                let b = match &bexpr {
                    Some(b) => Some(env.eval(b, *at)?),
                    None => None,
                };
                Ok(GridNode::new(*at, y, b))
            })
            .collect::<Result<_>>()?;

        Ok(SynthesisGrid {
            branch: self.branch,
            input: to_text(&self.input),
            spec: spec.clone(),
            steps: spec.steps(),
            gauge: GAUGE,
            s: self.s.as_ref().map(|_| s),
            nodes: grid_nodes,
            diagnostics: d,
        })
    }

    /// Fourth-order central differences around `at`: returns the contact,
    /// target and prolongation residuals.
    fn fd_residuals(&self, env: &NumEnv, s: f64, base: [f64; 3], at: [f64; 3], y: &[f64; 5]) -> Result<[f64; 3]> {
        let h = self.cfg.fd_step;
        let mut grad = [[0.0f64; 5]; 3];
        for (axis, g) in grad.iter_mut().enumerate() {
            let mut vals = [[0.0; 5]; 4];
            for (slot, k) in [-2.0, -1.0, 1.0, 2.0].into_iter().enumerate() {
                let mut pt = at;
                pt[axis] += k * h;
                vals[slot] = self.integrate_to(env, s, base, &GAUGE, pt, PathOrder::Xup)?;
            }
            for i in 0..5 {
                g[i] = (vals[0][i] - 8.0 * vals[1][i] + 8.0 * vals[2][i] - vals[3][i]) / (12.0 * h);
            }
        }
        let (ph, et, ch, ps) = (1, 2, 3, 4);
        let (p, q) = (at[2], env.q0);
        let lambda = grad[1][ps] - y[ch] * grad[1][ph];
        let part1 = grad[2][ps] - y[ch] * grad[2][ph];
        let part2 = grad[0][ps] - y[ch] * grad[0][ph] + p * lambda;
        let contact = part1.abs().max(part2.abs());

        let total = |k: usize| grad[0][k] + p * grad[1][k] + q * grad[2][k];
        let dphi = total(ph);
        if dphi == 0.0 {
            return Err(Error::DegenerateTransform(format!("D phi vanishes at (x,u,p) = {at:?}")));
        }
        let prolongation = (y[et] - total(ch) / dphi).abs();

        let v = env.eval_many(&self.coeffs, at)?;
        let (j, f, b) = (v[c::J], v[c::F], v[c::B]);
        let eta_q = b * b / (j * j) * y[0];
        let deta = total(et) + f * eta_q;
        let fbar = match self.branch {
            Branch::FiveSymmetry => s * y[ch] + y[ps],
            Branch::FourSymmetry => b * b * b * y[ps],
        };
        let target = (deta / dphi - fbar).abs();
        Ok([contact, target, prolongation])
    }

    /// Least-squares fit of the gauge freedom against a candidate closed
    /// form. The free parameters are a common scale `lambda` of
    /// `(a1, eta, chi, psi)`, an additive constant of `phi`, and the three
    /// homogeneous solutions started from unit `eta`, `chi`, `psi` at the base.
    pub fn fit(&self, grid: &SynthesisGrid, cand: &Candidate) -> Result<GaugeFit> {
        let spec = &grid.spec;
        let env = self.env(spec.q0)?;
        let s = grid.s.unwrap_or(0.0);
        let mut homog = Vec::new();
        for k in 2..5 {
            let mut g = [0.0; 5];
            g[k] = 1.0;
            homog.push(self.run_nodes(&env, s, spec, &g, PathOrder::Xup)?);
        }
        let comps = cand.components();
        for e in comps.iter().flatten() {
            env.check(e)?;
        }
        // Unknowns: [lambda, c_phi, c_eta, c_chi, c_psi].
        let mut rows: Vec<[f64; 5]> = Vec::new();
        let mut rhs = Vec::new();
        let mut targets: Vec<(usize, usize, f64)> = Vec::new();
        for (n, node) in grid.nodes.iter().enumerate() {
            let at = [node.x, node.u, node.p];
            let y = node.state();
            for (k, e) in comps.iter().enumerate() {
                let Some(e) = e else { continue };
                let t = env.eval(e, at)?;
                let mut row = [0.0; 5];
                let mut r = t;
                match k {
                    0 => row[0] = y[0],
                    1 => {
                        row[1] = 1.0;
                        r -= y[1];
                    }
                    _ => {
                        row[0] = y[k];
                        for (h, hs) in homog.iter().enumerate() {
                            row[2 + h] = hs[n][k];
                        }
                    }
                }
                rows.push(row);
                rhs.push(r);
                targets.push((n, k, t));
            }
        }
        if rows.is_empty() {
            return Err(Error::Malformed("candidate has no components".into()));
        }
        let a = DMatrix::from_fn(rows.len(), 5, |i, j| rows[i][j]);
        let b = DVector::from_vec(rhs);
        let coef = a
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|m| Error::Malformed(format!("gauge fit failed: {m}")))?;
        let coef = [coef[0], coef[1], coef[2], coef[3], coef[4]];
        let mut max_error = BTreeMap::new();
        for (n, k, t) in targets {
            let y = grid.nodes[n].state();
            let fitted = match k {
                0 => coef[0] * y[0],
                1 => y[1] + coef[1],
                _ => coef[0] * y[k] + (0..3).map(|h| coef[2 + h] * homog[h][n][k]).sum::<f64>(),
            };
            let e = max_error.entry(Candidate::NAMES[k].to_string()).or_insert(0.0f64);
            *e = e.max((fitted - t).abs());
        }
        Ok(GaugeFit { coefficients: coef, max_error })
    }
}

fn node_index(spec: &GridSpec, at: &[f64; 3]) -> usize {
    let st = spec.steps();
    let k = |a: usize| ((at[a] - (spec.base[a] - spec.half_width[a])) / st[a]).round() as usize;
    (k(0) * spec.counts[1] + k(1)) * spec.counts[2] + k(2)
}

/// Closed-form candidates for some of the unknowns, as functions of
/// `(x, u, p)` (and `q` for `eta`).
#[derive(Clone, Debug, Default)]
pub struct Candidate {
    pub a1: Option<Expr>,
    pub phi: Option<Expr>,
    pub eta: Option<Expr>,
    pub chi: Option<Expr>,
    pub psi: Option<Expr>,
}

impl Candidate {
    pub const NAMES: [&'static str; 5] = ["a1", "phi", "eta", "chi", "psi"];

    fn components(&self) -> [Option<&Expr>; 5] {
        [self.a1.as_ref(), self.phi.as_ref(), self.eta.as_ref(), self.chi.as_ref(), self.psi.as_ref()]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaugeFit {
    /// `[lambda, c_phi, c_eta, c_chi, c_psi]`.
    pub coefficients: [f64; 5],
    /// Maximum absolute deviation per fitted component.
    pub max_error: BTreeMap<String, f64>,
}

impl GaugeFit {
    pub fn worst(&self) -> f64 {
        self.max_error.values().cloned().fold(0.0, f64::max)
    }
}

/// Five-symmetry pipeline on the grid `spec`.
pub fn synthesize_branch1(f: &Expr, spec: &GridSpec, cfg: &SynthConfig) -> Result<SynthesisGrid> {
    Synthesizer::branch1(f, cfg)?.run(spec)
}

/// Four-symmetry pipeline with user-supplied `H` and `b`.
pub fn synthesize_branch2_assisted(f: &Expr, h: &Expr, b: &Expr, spec: &GridSpec, cfg: &SynthConfig) -> Result<SynthesisGrid> {
    Synthesizer::branch2(f, h, b, cfg)?.run(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn e(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn plain_env() -> NumEnv {
        NumEnv::new(&BTreeMap::new(), 1.0, None).unwrap()
    }

    #[test]
    fn exactness_of_simple_fields() {
        let ctx = OdeContext::new(&Expr::zero()).unwrap();
        let cfg = SamplerConfig::default();
        let ok = exactness_check(&GradientField::new("xu", e("u"), e("x"), e("0")), &ctx, &cfg).unwrap();
        assert!(ok.passed());
        let bad = exactness_check(&GradientField::new("bad", e("u"), e("0"), e("0")), &ctx, &cfg).unwrap();
        assert!(!bad.is_exact());
        assert!(bad.failure().unwrap().1.witness().is_some());
    }

    #[test]
    fn line_integrals() {
        let env = plain_env();
        let g = GradientField::new("xu", e("u"), e("x"), e("0"));
        for order in [PathOrder::Xup, PathOrder::Pux] {
            let v = integrate_gradient(&g, &env, [0.0; 3], [1.5, -2.0, 3.0], order, 1e-13).unwrap();
            assert!((v + 3.0).abs() < 1e-12);
        }
        let z = GradientField::new("0", e("0"), e("0"), e("0"));
        assert_eq!(integrate_gradient(&z, &env, [0.0; 3], [1.0; 3], PathOrder::Xup, 1e-13).unwrap(), 0.0);
    }

    #[test]
    fn singular_path_is_reported() {
        let g = GradientField::new("1/x", e("1/x"), e("0"), e("0"));
        let r = integrate_gradient(&g, &plain_env(), [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], PathOrder::Xup, 1e-12);
        assert!(r.is_err());
    }

    #[test]
    fn unpinned_parameters_are_rejected() {
        let g = GradientField::new("a", e("alpha"), e("0"), e("0"));
        let r = integrate_gradient(&g, &plain_env(), [0.0; 3], [1.0; 3], PathOrder::Xup, 1e-12);
        assert!(matches!(r, Err(Error::Malformed(_))));
    }

    #[test]
    fn grid_geometry() {
        let spec = GridSpec::around([0.0, 1.0, 2.0]);
        let nodes = spec.nodes();
        assert_eq!(nodes.len(), 125);
        assert_eq!(spec.steps(), [0.25; 3]);
        for (n, (_, at)) in nodes.iter().enumerate() {
            assert_eq!(node_index(&spec, at), n);
        }
        assert!(GridSpec { counts: [1, 5, 5], ..spec }.validate().is_err());
    }

    #[test]
    fn example_two_phi_gradient() {
        let f = e("-x*p^4*q^3 + u*p^3*q^3");
        let syn = Synthesizer::branch2(&f, &e("1/p^2"), &e("p"), &SynthConfig::default()).unwrap();
        assert!(syn.exactness.iter().all(ExactnessReport::passed));
        let env = syn.env(1.0).unwrap();
        let v = integrate_gradient(&syn.phi, &env, [0.0, 0.0, 1.0], [0.0, 0.0, 2.0], PathOrder::Xup, 1e-13).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn riccati_rejection() {
        let f = e("-x*p^4*q^3 + u*p^3*q^3");
        let cfg = SynthConfig::default();
        match Synthesizer::branch2(&f, &e("0"), &e("p"), &cfg) {
            Err(Error::RejectedAnsatz { equation, witness }) => {
                assert_eq!(equation, "4.10");
                assert!(witness.is_some());
            }
            other => panic!("unexpected {other:?}"),
        }
        match Synthesizer::branch2(&f, &e("1/p^2"), &e("p^2"), &cfg) {
            Err(Error::RejectedAnsatz { equation, .. }) => assert_eq!(equation, "4.11"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_branch_is_a_mismatch() {
        let r = Synthesizer::branch1(&e("x^3*u"), &SynthConfig::default());
        assert!(matches!(r, Err(Error::ClassificationMismatch { .. })));
    }

    #[test]
    fn linear_input_is_reproduced() {
        let spec = GridSpec { counts: [3; 3], ..GridSpec::around([0.0, 1.0, 2.0]) };
        let g = synthesize_branch1(&e("u"), &spec, &SynthConfig::default()).unwrap();
        let b = g.node_at_base().unwrap();
        assert_eq!(b.state(), GAUGE);
        let d = &g.diagnostics;
        assert!(d.contact_residual < 1e-8, "{d:?}");
        assert!(d.target_residual < 1e-6, "{d:?}");
        assert!(d.path_discrepancy < 1e-8, "{d:?}");
        assert!(g.to_csv().lines().nth(1).unwrap() == "x,u,p,a1,phi,eta,chi,psi");
    }
}
