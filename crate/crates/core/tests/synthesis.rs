use contactlin_core::synthesizer::{Candidate, GridSpec, SynthConfig, Synthesizer, GAUGE};
use contactlin_core::{parse, Expr};
use num_rational::BigRational;

fn e(s: &str) -> Expr {
    parse(s).unwrap()
}

fn alpha_one() -> SynthConfig {
    let mut cfg = SynthConfig::default();
    cfg.sampler = cfg.sampler.pin("alpha", BigRational::from_integer(1.into()));
    cfg
}

#[test]
fn example_two_matches_closed_forms_after_gauge_fit() {
    let f = e("-x*p^4*q^3 + u*p^3*q^3");
    let syn = Synthesizer::branch2(&f, &e("1/p^2"), &e("p"), &SynthConfig::default()).unwrap();
    let grid = syn.run(&GridSpec::around([0.0, 1.0, 2.0])).unwrap();
    assert_eq!(grid.nodes.len(), 125);
    assert_eq!(grid.node_at_base().unwrap().state(), GAUGE);

    let cand = Candidate { phi: Some(e("p")), chi: Some(e("-x")), psi: Some(e("u - x*p")), ..Default::default() };
    let fit = syn.fit(&grid, &cand).unwrap();
    assert!(fit.worst() < 1e-8, "{fit:?}");

    let d = &grid.diagnostics;
    assert!(d.contact_residual < 1e-6, "{d:?}");
    assert!(d.target_residual < 1e-6, "{d:?}");
    assert!(d.prolongation_residual < 1e-6, "{d:?}");
    assert!(d.route_discrepancy < 1e-8, "{d:?}");

    // b = abar(phi) with abar(x) = x up to the phi gauge: b - phi is constant.
    let s = grid.abar_samples();
    let c0 = s[0].1 - s[0].0;
    assert!(s.iter().all(|(phi, b)| (b - phi - c0).abs() < 1e-8));
}

#[test]
fn example_one_phi_and_transform_after_gauge_fit() {
    let f = e("alpha*q^2/p");
    let syn = Synthesizer::branch1(&f, &alpha_one()).unwrap();
    let grid = syn.run(&GridSpec::around([0.0, 1.0, 2.0])).unwrap();

    let phi_only = Candidate { phi: Some(e("-(1/3)*2^(1/3)*ln(p)")), ..Default::default() };
    let fit = syn.fit(&grid, &phi_only).unwrap();
    assert!(grid.nodes.len() >= 10);
    assert!(fit.max_error["phi"] < 1e-8, "{fit:?}");

    let full = Candidate {
        a1: Some(e("p^(-2/3)")),
        phi: Some(e("-(1/3)*2^(1/3)*ln(p)")),
        chi: Some(e("(p*x + 2*u)/2^(1/3)*p^(-2/3)")),
        psi: Some(e("(u - x*p)*p^(-2/3)")),
        ..Default::default()
    };
    let fit = syn.fit(&grid, &full).unwrap();
    assert!(fit.worst() < 1e-8, "{fit:?}");

    let d = &grid.diagnostics;
    assert!(d.contact_residual < 1e-8, "{d:?}");
    assert!(d.target_residual < 1e-6, "{d:?}");
    assert!(d.path_discrepancy < 1e-8, "{d:?}");
    assert!(d.quadrature_path_discrepancy < 1e-10, "{d:?}");
}

#[test]
fn csv_is_deterministic() {
    let f = e("alpha*q^2/p");
    let spec = GridSpec { counts: [3; 3], ..GridSpec::around([0.0, 1.0, 2.0]) };
    let a = Synthesizer::branch1(&f, &alpha_one()).unwrap().run(&spec).unwrap();
    let b = Synthesizer::branch1(&f, &alpha_one()).unwrap().run(&spec).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    let row = a.to_csv().lines().nth(2).unwrap().to_string();
    assert_eq!(row.split(',').count(), 8);
    assert!(row.split(',').all(|v| v.split('e').next().unwrap().trim_start_matches('-').len() == 21));
}
