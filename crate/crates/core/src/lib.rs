//! Control synthesis for asymptotic stabilization of level-set invariant sets.
//!
//! Given a smooth vector field `X` on an open subset of ℝⁿ and a constraint map
//! `D = (D₁, …, D_p)` with target value `d`, the closed set `Σ = D⁻¹({d})` is made
//! attracting for every bounded forward orbit by adding the control field
//!
//! ```text
//! X₀^λ = ‖∇D₁ ∧ … ∧ ∇D_p‖⁻² · Σᵢ (−1)^{n−i+1} [h_i + λ(D_i − d_i)] Θ_i
//! Θ_i  = ⋆[ ⋀_{j≠i} ∇D_j ∧ ⋆(⋀_j ∇D_j) ],      h_i = ℒ_X D_i
//! ```
//!
//! The perturbed flow satisfies `F(x(t)) = e^{−2λt} F(x(0))` for the squared
//! residual `F = Σ (D_i − d_i)²` on the maximal-rank set of `D`.
//!
//! The crate is `no_std` (with `alloc`) and carries no IO. Crate layout:
//!
//! * [`exterior`]: dense Grassmann algebra with the Euclidean Hodge star.
//! * [`symexpr`]: expression parser, evaluator and symbolic differentiation.
//! * [`synth`]: the control law, its Gram-system oracle and rank detection.
//! * [`flow`]: RK4 / Dormand–Prince integration of the perturbed system.
//! * [`verify`]: measured checks of the decay law, invariance and convergence.
//! * [`problems`]: the three worked planar examples used as golden fixtures.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod exterior;
pub mod flow;
pub mod linalg;
mod math;
pub mod problems;
pub mod symexpr;
pub mod synth;
pub mod verify;

pub use exterior::{GradeVector, Multivector};
pub use flow::{integrate, IntegratorOptions, Method, Termination, Trajectory};
pub use symexpr::{parse, ScalarExpr, VectorFieldExpr};
pub use synth::{ControlPath, Guards, ProblemSpec, Stabilizer, SynthError, SynthesisAt};
pub use verify::{CheckRecord, CheckStatus, VerificationReport};
