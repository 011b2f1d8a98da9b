//! Property suites: field axioms, normal-form idempotence, parser round
//! trips, derivatives against finite differences, exact/float agreement.

use contactlin_core::eval::{big_to_f64, eval_exact_free, eval_float, SamplePoint};
use contactlin_core::identity::{is_zero, Mode, SamplerConfig};
use contactlin_core::{normalize, parse, to_text, CubicScalar, Expr, OdeContext, VarId};
use num_rational::BigRational;
use proptest::prelude::*;

fn rat() -> impl Strategy<Value = BigRational> + Clone {
    (-50i64..=50, 1i64..=20).prop_map(|(n, d)| BigRational::new(n.into(), d.into()))
}

/// Radicands that are not rational cubes.
fn radicand() -> impl Strategy<Value = BigRational> {
    prop::sample::select(vec![2i64, 3, 5, 6, 7, 10, -2, -3, 12, 20]).prop_flat_map(|n| {
        prop::sample::select(vec![1i64, 2, 3, 5]).prop_map(move |d| {
            // n/d^3 keeps the radicand a non-cube.
            BigRational::new(n.into(), (d * d * d).into())
        })
    })
}

fn cubic_triple() -> impl Strategy<Value = (CubicScalar, CubicScalar, CubicScalar)> {
    radicand().prop_flat_map(|v| {
        let el = move |v: BigRational| (rat(), rat(), rat()).prop_map(move |(a, b, d)| CubicScalar::new(a, b, d, v.clone()));
        (el(v.clone()), el(v.clone()), el(v))
    })
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        Just(Expr::x()),
        Just(Expr::u()),
        Just(Expr::p()),
        Just(Expr::q()),
        (-5i64..=5).prop_map(Expr::int),
        (1i64..=4, 2i64..=5).prop_map(|(n, d)| Expr::frac(n, d)),
    ]
}

/// Rational expression trees in the jet variables.
fn tree() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::sum),
            prop::collection::vec(inner.clone(), 2..3).prop_map(Expr::product),
            (inner.clone(), -2i64..=3).prop_map(|(e, k)| e.powi(k)),
            inner.prop_map(|e| -e),
        ]
    })
}

/// Trees that may contain `exp` and `ln` of safe arguments.
fn smooth_tree() -> impl Strategy<Value = Expr> {
    let sq = |e: Expr| Expr::sum(vec![e.powi(2), Expr::one()]);
    leaf().prop_recursive(3, 16, 3, move |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::sum),
            prop::collection::vec(inner.clone(), 2..3).prop_map(Expr::product),
            (inner.clone(), 1i64..=3).prop_map(|(e, k)| e.powi(k)),
            inner.clone().prop_map(move |e| sq(e).powi(-1)),
            inner.clone().prop_map(move |e| sq(e).ln()),
            inner.prop_map(|e| (e * Expr::frac(1, 10)).exp()),
        ]
    })
}

fn point() -> impl Strategy<Value = SamplePoint> {
    (rat(), rat(), rat(), rat()).prop_map(|(x, u, p, q)| SamplePoint::jet(x, u, p, q))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cubic_field_axioms((a, b, c) in cubic_triple()) {
        let zero = CubicScalar::zero(a.v.clone());
        let one = CubicScalar::one(a.v.clone());
        prop_assert_eq!(a.add(&b).unwrap(), b.add(&a).unwrap());
        prop_assert_eq!(a.mul(&b).unwrap(), b.mul(&a).unwrap());
        prop_assert_eq!(a.add(&b).unwrap().add(&c).unwrap(), a.add(&b.add(&c).unwrap()).unwrap());
        prop_assert_eq!(a.mul(&b).unwrap().mul(&c).unwrap(), a.mul(&b.mul(&c).unwrap()).unwrap());
        prop_assert_eq!(
            a.mul(&b.add(&c).unwrap()).unwrap(),
            a.mul(&b).unwrap().add(&a.mul(&c).unwrap()).unwrap()
        );
        prop_assert_eq!(a.add(&zero).unwrap(), a.clone());
        prop_assert_eq!(a.mul(&one).unwrap(), a.clone());
        prop_assert!(a.add(&a.neg()).unwrap().is_zero());
        if !a.is_zero() {
            prop_assert_eq!(a.mul(&a.inv().unwrap()).unwrap(), one);
        }
    }

    #[test]
    fn normalize_is_idempotent(e in tree()) {
        if let Ok(n) = normalize(&e) {
            prop_assert_eq!(normalize(&n).unwrap(), n);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn parser_round_trip(e in tree()) {
        let text = to_text(&e);
        let back = parse(&text).unwrap();
        prop_assert_eq!(normalize(&back).ok(), normalize(&e).ok(), "{}", text);
        if let Ok(n) = normalize(&e) {
            prop_assert_eq!(normalize(&parse(&to_text(&n)).unwrap()).unwrap(), n);
        }
    }

    #[test]
    fn leibniz_rule(a in tree(), b in tree()) {
        let ctx = OdeContext::new(&parse("u*p - x*q^2").unwrap()).unwrap();
        let (Ok(da), Ok(db), Ok(dab)) = (ctx.total_d(&a), ctx.total_d(&b), ctx.total_d(&(a.clone() * b.clone()))) else {
            return Ok(());
        };
        let rhs = Expr::sum(vec![da * b, a * db]);
        prop_assert!(ctx.normal(&(dab - rhs)).unwrap().is_zero());
    }

    #[test]
    fn exact_and_float_agree(e in tree(), pt in point()) {
        let Ok(n) = normalize(&e) else { return Ok(()) };
        let Ok(exact) = eval_exact_free(&n, &pt) else { return Ok(()) };
        let float = big_to_f64(&eval_float(&n, &pt, 256, None).unwrap());
        let exact = exact.to_f64();
        prop_assert!((exact - float).abs() <= 1e-12 * exact.abs().max(1.0), "{exact} vs {float}");
    }

    #[test]
    fn zero_verdicts_agree_across_modes(a in tree()) {
        let ctx = OdeContext::new(&Expr::zero()).unwrap();
        let Ok(n) = normalize(&a) else { return Ok(()) };
        let float_cfg = SamplerConfig { force_float: true, ..SamplerConfig::default() };
        let exact = is_zero(&n, &ctx, &SamplerConfig::default()).unwrap();
        let float = is_zero(&n, &ctx, &float_cfg).unwrap();
        prop_assert_eq!(exact.is_zero(), float.is_zero());
        prop_assert_eq!(exact.is_zero(), n.is_zero_node());
        if !exact.is_zero() {
            prop_assert_eq!(exact.mode(), Mode::Exact);
            prop_assert_eq!(float.mode(), Mode::Float);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn derivative_matches_finite_difference(e in smooth_tree(), pt in point(), axis in 0usize..4) {
        let ctx = OdeContext::new(&Expr::zero()).unwrap();
        let v = VarId::JET[axis].clone();
        // The generated trees have no singular points.
        let err = ctx.fd_check(&e, &v, &pt, 1e-12).unwrap();
        prop_assert!(err < 1e-6, "{} d/d{}: {err:e}", to_text(&e), v);
    }
}
