//! The planar system `ẋ = x(x²+y²−1), ẏ = x²+y²−1` with its three invariant
//! sets: the line `x = 0`, the unit circle, and their intersection
//! `{(0, −1), (0, 1)}`.

use alloc::vec::Vec;

use crate::synth::{Guards, ProblemSpec};

pub const VARS: [&str; 2] = ["x", "y"];
pub const FIELD: [&str; 2] = ["x*(x^2+y^2-1)", "x^2+y^2-1"];

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 3] = ["paper-i", "paper-ii", "paper-iii"];

fn build(constraints: &[(&str, f64)], lambda: f64) -> ProblemSpec {
    ProblemSpec::from_sources(&VARS, &FIELD, constraints, lambda, Guards::default())
        .expect("built-in problem is well formed")
}

/// Constraints `(D_i source, d_i)` for a built-in problem.
pub fn constraints_of(name: &str) -> Option<Vec<(&'static str, f64)>> {
    Some(match name {
        "paper-i" => [("x", 0.0)].to_vec(),
        "paper-ii" => [("x^2+y^2", 1.0)].to_vec(),
        "paper-iii" => [("x", 0.0), ("x^2+y^2", 1.0)].to_vec(),
        _ => return None,
    })
}

/// `D = x`, `d = 0`: stabilize the line `x = 0`.
pub fn paper_i(lambda: f64) -> ProblemSpec {
    build(&[("x", 0.0)], lambda)
}

/// `D = x² + y²`, `d = 1`: stabilize the unit circle.
pub fn paper_ii(lambda: f64) -> ProblemSpec {
    build(&[("x^2+y^2", 1.0)], lambda)
}

/// `D = (x, x² + y²)`, `d = (0, 1)`: stabilize the two points `(0, ±1)`.
pub fn paper_iii(lambda: f64) -> ProblemSpec {
    build(&[("x", 0.0), ("x^2+y^2", 1.0)], lambda)
}

pub fn builtin(name: &str, lambda: f64) -> Option<ProblemSpec> {
    let cons = constraints_of(name)?;
    ProblemSpec::from_sources(&VARS, &FIELD, &cons, lambda, Guards::default()).ok()
}
