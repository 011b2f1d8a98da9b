//! Contact linearization of third-order scalar ODEs `u''' = f(x, u, u', u'')`.
//!
//! The crate computes the invariant tower of an equation, decides whether it
//! is contact-equivalent to a linear canonical form with five or four
//! symmetries, verifies candidate transformations and reconstructs them
//! numerically.

pub mod calculus;
pub mod classifier;
pub mod cubic;
pub mod error;
pub mod eval;
pub mod expr;
pub mod fixtures;
pub mod identity;
pub mod invariants;
pub mod normal;
pub mod parser;
pub mod poly;
pub mod synthesizer;
pub mod transform;

pub use calculus::OdeContext;
pub use cubic::CubicScalar;
pub use error::{Error, Result};
pub use eval::SamplePoint;
pub use fixtures::Fixture;
pub use expr::{Expr, VarId};
pub use identity::{is_constant, is_zero, Mode, SamplerConfig, Witness, ZeroVerdict};
pub use normal::{normalize, RatFn};
pub use parser::{parse, to_text, ParseDiagnostic};
pub use invariants::{compute_base, compute_tower, compute_tower_with, InvariantSet};
pub use classifier::{classify, Classification, Condition, Outcome};
pub use transform::{check_contact, prolong, residual_sides_prop41, residual_sides_prop42, residuals_prop41, residuals_prop42, verify_target, Branch1Data, Branch2Data, ContactTransform, ResidualReport, TargetForm};
pub use synthesizer::{exactness_check, integrate_gradient, synthesize_branch1, synthesize_branch2_assisted, Candidate, GaugeFit, GradientField, GridSpec, SynthConfig, SynthesisGrid, Synthesizer};
