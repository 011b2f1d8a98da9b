//! Worked examples: invariant values and classification outcomes.

use contactlin_core::eval::{eval_float, SamplePoint};
use contactlin_core::identity::{is_zero, Mode, SamplerConfig};
use contactlin_core::{classify, compute_tower, normalize, parse, Expr, Outcome};

fn n(s: &str) -> Expr {
    normalize(&parse(s).unwrap()).unwrap()
}

#[test]
fn example_one_s_matches_closed_form() {
    let f = parse("alpha*q^2/p").unwrap();
    let cfg = SamplerConfig::default();
    let c = classify(&f, &cfg).unwrap();
    let Outcome::FiveSymmetry { s } = &c.outcome else { panic!("{:?}", c.outcome) };
    let t = c.tower.as_ref().unwrap();
    let target = parse("(3*alpha^2 - 9*alpha + 9)/(2*alpha^3 - 9*alpha^2 + 9*alpha)^(2/3)").unwrap();
    let v = is_zero(&(s.clone() - target.clone()), &t.ctx, &cfg).unwrap();
    assert!(v.is_zero());
    assert_eq!(v.mode(), Mode::Exact);
    let shown = c.s_display().unwrap();
    assert!(!shown.contains_j());
    assert!(is_zero(&(shown - target), &t.ctx, &cfg).unwrap().is_zero());
}

#[test]
fn example_one_relative_invariants_vanish() {
    let t = compute_tower(&parse("alpha*q^2/p").unwrap()).unwrap();
    let cfg = SamplerConfig::default();
    for name in ["I6", "I7", "I8", "I10", "I11", "I12", "I13", "I14", "I15", "Q"] {
        assert!(is_zero(&t.get(name).unwrap(), &t.ctx, &cfg).unwrap().is_zero(), "{name}");
    }
    // I5 = (alpha - 3)/w^(1/3) with w = 2 alpha^3 - 9 alpha^2 + 9 alpha
    let i5 = parse("(alpha - 3)/(2*alpha^3 - 9*alpha^2 + 9*alpha)^(1/3)").unwrap();
    assert!(t.matches("I5", &i5, &cfg).unwrap());
}

#[test]
fn example_two_listed_invariants() {
    let t = compute_tower(&parse("-x*p^4*q^3 + u*p^3*q^3").unwrap()).unwrap();
    let cfg = SamplerConfig::default();
    for (name, value) in [
        ("I1", "3*p^3*q^2*(p*x - u)"),
        ("I2", "0"),
        ("J", "-p*q"),
        ("I4", "-p"),
        ("I5", "-1/p^2"),
        ("I7", "0"),
        ("Q", "0"),
        ("K", "-3/p^4"),
        ("DK", "12*q/p^5"),
    ] {
        assert!(t.matches(name, &n(value), &cfg).unwrap(), "{name}");
    }
}

#[test]
fn canonical_four_symmetry_forms() {
    let cfg = SamplerConfig::default();
    for (f, k) in [("x^3*u", "-3/x^4"), ("exp(3*x)*u", "-exp(-2*x)"), ("x^6*u", "(2*x^2*2 - 3*(2*x)^2)/x^8")] {
        let t = compute_tower(&parse(f).unwrap()).unwrap();
        let v = is_zero(&(t.k.clone() - n(k)), &t.ctx, &cfg).unwrap();
        assert!(v.is_zero(), "{f}");
        assert_eq!(v.mode(), Mode::Exact, "{f}");
        assert_eq!(classify(&parse(f).unwrap(), &cfg).unwrap().outcome.tag(), "FourSymmetryLinearizable", "{f}");
    }
}

#[test]
fn constant_abar_gives_constant_k() {
    let t = compute_tower(&parse("8*u").unwrap()).unwrap();
    assert!(t.k.is_zero_node());
}

#[test]
fn u_squared_i11_value() {
    // I3 = -2u, so J = -(2u)^(1/3) and I11 = J_u = -(2/3)(2u)^(-2/3).
    // At u = 1 this is -2^(1/3)/3.
    let t = compute_tower(&parse("u^2").unwrap()).unwrap();
    assert_eq!(t.i3, n("-2*u"));
    let v = eval_float(&t.i11, &SamplePoint::from_ints(0, 1, 1, 1), 256, Some(&t.i3)).unwrap();
    let got = contactlin_core::eval::big_to_f64(&v);
    let want = -(2f64.cbrt()) / 3.0;
    assert!((got - want).abs() < 1e-15, "{got}");
}

fn example_one_data() -> contactlin_core::Branch1Data {
    let w = "(2*alpha^3 - 9*alpha^2 + 9*alpha)";
    contactlin_core::Branch1Data {
        a1: parse("p^(alpha/3 - 1)").unwrap(),
        phi: parse(&format!("-(1/3)*{w}^(1/3)*ln(p)")).unwrap(),
        chi: parse(&format!("(alpha*p*x - alpha*u + 3*u)/{w}^(1/3)*p^(alpha/3 - 1)")).unwrap(),
        psi: parse("(u - x*p)*p^(alpha/3 - 1)").unwrap(),
        eta: None,
    }
}

#[test]
fn example_one_systems_float_pinned() {
    let t = compute_tower(&parse("alpha*q^2/p").unwrap()).unwrap();
    let mut cfg = SamplerConfig::default().pin("alpha", num_rational::BigRational::from_integer(2.into()));
    cfg.force_float = true;
    let r = contactlin_core::residuals_prop41(&t, &example_one_data(), &cfg).unwrap();
    for e in &r.entries {
        assert!(e.verdict.is_zero(), "{} {:?}", e.label, e.verdict);
        if let contactlin_core::ZeroVerdict::IdenticallyZero { points_tested, mode } = e.verdict {
            assert!(points_tested == 0 || mode == Mode::Float);
        }
    }
}

#[test]
fn example_one_systems_generic_alpha() {
    let t = compute_tower(&parse("alpha*q^2/p").unwrap()).unwrap();
    let r = contactlin_core::residuals_prop41(&t, &example_one_data(), &SamplerConfig::default()).unwrap();
    assert!(r.all_zero(), "{:?}", r.first_failure().map(|e| &e.label));
    let mut bad = example_one_data();
    bad.a1 = parse("p^(alpha/3)").unwrap();
    let r = contactlin_core::residuals_prop41(&t, &bad, &SamplerConfig::default()).unwrap();
    assert!(r.first_failure().unwrap().verdict.witness().is_some());
}

#[test]
fn example_one_systems_sides_at_256_bits() {
    let t = compute_tower(&parse("alpha*q^2/p").unwrap()).unwrap();
    let cfg = SamplerConfig::default().pin("alpha", num_rational::BigRational::from_integer(2.into()));
    let sides = contactlin_core::residual_sides_prop41(&t, &example_one_data()).unwrap();
    assert_eq!(sides.len(), 17);
    for (label, l, r) in &sides {
        let gap = contactlin_core::identity::relative_gap(l, r, &t.ctx, &cfg).unwrap();
        assert!(gap < 1e-30, "{label}: {gap:e}");
    }
}
