//! Shared inputs for the benchmarks.

use contactlin_core::{parse, Expr};

/// Right-hand sides spanning both branches, the negative control and a
/// parameterized input.
pub const INPUTS: &[(&str, &str)] = &[
    ("alpha_q2_over_p", "alpha*q^2/p"),
    ("quartic_p_cubic_q", "-x*p^4*q^3 + u*p^3*q^3"),
    ("canonical_five", "s*p + u"),
    ("canonical_four_exp", "exp(3*x)*u"),
    ("negative_u2", "u^2"),
];

pub fn inputs() -> Vec<(&'static str, Expr)> {
    INPUTS.iter().map(|(n, f)| (*n, parse(f).expect("benchmark input parses"))).collect()
}
