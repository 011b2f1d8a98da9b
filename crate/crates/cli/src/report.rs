//! JSON and text renderings of core results.

use contactlin_core::identity::{Witness, ZeroVerdict};
use contactlin_core::synthesizer::{GaugeFit, SynthesisGrid};
use contactlin_core::{to_text, Classification, Condition, Expr, Outcome, ResidualReport};
use serde_json::{json, Map, Value};

pub fn witness(w: &Witness) -> Value {
    let point: Map<String, Value> = w.assignments().into_iter().map(|(k, v)| (k, Value::String(v))).collect();
    json!({
        "point": point,
        "value": w.value,
        "approx": finite(w.approx),
        "mode": w.mode,
    })
}

/// JSON has no representation for non-finite numbers.
pub fn finite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::String(v.to_string())
    }
}

pub fn verdict(v: &ZeroVerdict) -> Value {
    match v {
        ZeroVerdict::IdenticallyZero { points_tested, mode } => {
            json!({ "zero": true, "mode": mode, "points_tested": points_tested, "witness": null })
        }
        ZeroVerdict::NonZero { witness: w } => {
            json!({ "zero": false, "mode": w.mode, "points_tested": null, "witness": witness(w) })
        }
    }
}

pub fn verdict_text(v: &ZeroVerdict) -> String {
    match v {
        ZeroVerdict::IdenticallyZero { points_tested, mode } => format!("zero ({mode}, {points_tested} points)"),
        ZeroVerdict::NonZero { witness } => format!("nonzero at {witness}"),
    }
}

fn condition(c: &Condition) -> Value {
    json!({
        "name": c.name,
        "expect_zero": c.expect_zero,
        "passed": c.passed(),
        "verdict": verdict(&c.verdict),
    })
}

pub fn classification(c: &Classification) -> Value {
    let mut out = json!({
        "command": "classify",
        "input": to_text(&c.input),
        "outcome": c.outcome.tag(),
        "mode": c.mode,
        "seed": c.seed,
        "conditions": c.conditions.iter().map(condition).collect::<Vec<_>>(),
    });
    let m = out.as_object_mut().expect("object");
    match &c.outcome {
        Outcome::FiveSymmetry { .. } => {
            m.insert("s".into(), json!(to_text(&c.s_display().expect("five-symmetry s"))));
        }
        Outcome::FourSymmetry { k, dk_witness } => {
            m.insert("K".into(), json!(to_text(k)));
            m.insert("dk_witness".into(), witness(dk_witness));
        }
        Outcome::OutsideScope { first_failing, witness: w } => {
            m.insert("first_failing".into(), json!(first_failing));
            m.insert("witness".into(), w.as_deref().map(witness).unwrap_or(Value::Null));
        }
        Outcome::WuenschmannZero => {}
    }
    out
}

pub fn classification_text(c: &Classification) -> String {
    let mut s = format!("input: {}\noutcome: {}\n", to_text(&c.input), c.outcome.tag());
    match &c.outcome {
        Outcome::FiveSymmetry { .. } => {
            s += &format!("s = {}\n", to_text(&c.s_display().expect("five-symmetry s")));
        }
        Outcome::FourSymmetry { k, dk_witness } => {
            s += &format!("K = {}\nDK nonzero at {}\n", to_text(k), dk_witness);
        }
        Outcome::OutsideScope { first_failing, witness } => {
            s += &format!("first failing condition: {first_failing}\n");
            if let Some(w) = witness {
                s += &format!("witness: {w}\n");
            }
        }
        Outcome::WuenschmannZero => s += "I3 vanishes identically\n",
    }
    s += &format!("mode: {}  seed: {}\nconditions:\n", c.mode, c.seed);
    for cond in &c.conditions {
        let mark = if cond.passed() { "ok  " } else { "FAIL" };
        s += &format!("  {mark} {:<4} {}\n", cond.name, verdict_text(&cond.verdict));
    }
    s
}

pub fn residuals(r: &ResidualReport) -> Value {
    Value::Array(
        r.entries
            .iter()
            .map(|e| json!({ "label": e.label, "residual": to_text(&e.residual), "verdict": verdict(&e.verdict) }))
            .collect(),
    )
}

pub fn residuals_text(r: &ResidualReport) -> String {
    r.entries
        .iter()
        .map(|e| {
            let mark = if e.verdict.is_zero() { "ok  " } else { "FAIL" };
            format!("  {mark} {:<6} {}\n", e.label, verdict_text(&e.verdict))
        })
        .collect()
}

pub fn expr(e: &Expr) -> Value {
    json!(to_text(e))
}

pub fn grid(g: &SynthesisGrid, fit: Option<&GaugeFit>, h: Option<&Expr>, b: Option<&Expr>) -> Value {
    let names = ["a1", "phi", "eta", "chi", "psi"];
    let gauge: Map<String, Value> = names.iter().zip(g.gauge).map(|(n, v)| (n.to_string(), json!(v))).collect();
    let d = &g.diagnostics;
    let mut out = json!({
        "command": "synthesize",
        "input": g.input,
        "branch": g.branch,
        "base": g.spec.base,
        "counts": g.spec.counts,
        "half_width": g.spec.half_width,
        "steps": g.steps,
        "q0": g.spec.q0,
        "gauge": gauge,
        "diagnostics": {
            "path_discrepancy": finite(d.path_discrepancy),
            "quadrature_path_discrepancy": finite(d.quadrature_path_discrepancy),
            "route_discrepancy": finite(d.route_discrepancy),
            "contact_residual": finite(d.contact_residual),
            "target_residual": finite(d.target_residual),
            "prolongation_residual": finite(d.prolongation_residual),
            "interior_nodes": d.interior_nodes,
        },
        "columns": contactlin_core::synthesizer::CSV_COLUMNS,
        "nodes": g.nodes.iter().map(|n| [n.x, n.u, n.p, n.a1, n.phi, n.eta, n.chi, n.psi].map(finite).to_vec()).collect::<Vec<_>>(),
    });
    let m = out.as_object_mut().expect("object");
    if let Some(s) = g.s {
        m.insert("s".into(), finite(s));
    }
    if let Some(h) = h {
        m.insert("H".into(), expr(h));
    }
    if let Some(b) = b {
        m.insert("b".into(), expr(b));
        let samples: Vec<Value> = g.abar_samples().into_iter().map(|(x, a)| json!([finite(x), finite(a)])).collect();
        m.insert("abar_samples".into(), Value::Array(samples));
    }
    if let Some(f) = fit {
        let err: Map<String, Value> = f.max_error.iter().map(|(k, v)| (k.clone(), finite(*v))).collect();
        m.insert(
            "fit".into(),
            json!({
                "coefficients": { "lambda": f.coefficients[0], "c_phi": f.coefficients[1], "c_eta": f.coefficients[2],
                                  "c_chi": f.coefficients[3], "c_psi": f.coefficients[4] },
                "max_error": err,
            }),
        );
    }
    out
}

pub fn grid_summary(g: &SynthesisGrid, fit: Option<&GaugeFit>) -> String {
    let d = &g.diagnostics;
    let mut s = format!(
        "input: {}\nbranch: {:?}\nbase: {:?}  grid: {:?}  steps: {:?}  q0: {}\ngauge (a1, phi, eta, chi, psi) = {:?}\n",
        g.input, g.branch, g.spec.base, g.spec.counts, g.steps, g.spec.q0, g.gauge
    );
    if let Some(v) = g.s {
        s += &format!("s = {v}\n");
    }
    s += &format!(
        "max contact residual: {:.3e}\nmax target residual: {:.3e}\nmax prolongation residual: {:.3e}\n\
         path-order discrepancy: {:.3e}\nquadrature path discrepancy: {:.3e}\nquadrature vs ODE: {:.3e}\n",
        d.contact_residual,
        d.target_residual,
        d.prolongation_residual,
        d.path_discrepancy,
        d.quadrature_path_discrepancy,
        d.route_discrepancy
    );
    if let Some(f) = fit {
        s += &format!("gauge fit coefficients [lambda, c_phi, c_eta, c_chi, c_psi] = {:?}\n", f.coefficients);
        for (k, v) in &f.max_error {
            s += &format!("  fit error {k}: {v:.3e}\n");
        }
    }
    s
}
