//! Every shipped fixture classifies as recorded and its listed invariant
//! values hold as identities, for several seeds.

use contactlin_core::identity::SamplerConfig;
use contactlin_core::{classify, compute_tower, Fixture, Outcome};

#[test]
fn fixtures_classify_as_recorded_across_seeds() {
    for fx in Fixture::all().unwrap() {
        let f = fx.f().unwrap();
        for seed in 0..5 {
            let c = classify(&f, &SamplerConfig::default().with_seed(seed)).unwrap();
            assert_eq!(c.outcome.tag(), fx.outcome, "{} seed {seed}", fx.name);
            if let (Some(want), Outcome::OutsideScope { first_failing, .. }) = (&fx.first_failing, &c.outcome) {
                assert_eq!(want, first_failing, "{}", fx.name);
            }
        }
    }
}

#[test]
fn fixture_invariants_match() {
    let cfg = SamplerConfig::default();
    for fx in Fixture::all().unwrap() {
        if fx.invariants.is_empty() {
            continue;
        }
        let t = compute_tower(&fx.f().unwrap()).unwrap();
        for (name, value) in fx.invariant_exprs().unwrap() {
            if name == "I3" {
                assert!(contactlin_core::is_zero(&(t.i3.clone() - value), &t.ctx, &cfg).unwrap().is_zero());
                continue;
            }
            assert!(t.matches(&name, &value, &cfg).unwrap(), "{}: {name}", fx.name);
        }
    }
}
