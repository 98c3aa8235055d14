//! The stabilizing control law and everything it needs pointwise.
//!
//! For a [`ProblemSpec`] `(X, D, d, λ)` the [`Stabilizer`] precomputes the
//! symbolic gradients `∇D_i` and `h_i = ℒ_X D_i`, then evaluates
//!
//! ```text
//! X₀^λ = ‖⋀∇D_i‖⁻² Σᵢ (−1)^{n−i+1} [h_i + λ(D_i − d_i)] Θ_i        (i = 1..p)
//! ```
//!
//! through the exterior algebra ([`Stabilizer::control_hodge`]) or, as an
//! independent route, as the unique solution in `span{∇D_j}` of
//! `∇D_i · X₀ = −[h_i + λ(D_i − d_i)]` ([`Stabilizer::control_gram`]).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::exterior::{ExteriorError, Multivector, MAX_DIM};
use crate::flow::Dynamics;
use crate::linalg::{self, SquareMatrix};
use crate::math;
use crate::symexpr::diff::{add, mul};
use crate::symexpr::{self, gradient, EvalError, ParseError, ScalarExpr, VectorFieldExpr};

pub const DEFAULT_RANK_TOL: f64 = 1e-12;
pub const DEFAULT_R_MAX: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("dimension must be in 1..={MAX_DIM}, got {0}")]
    Dimension(usize),
    #[error("field has {got} components, expected {expected}")]
    FieldDimension { expected: usize, got: usize },
    #[error("need 1 <= p <= n constraints, got p = {p} with n = {n}")]
    ConstraintCount { p: usize, n: usize },
    #[error("{constraints} constraints but {targets} target values")]
    TargetCount { constraints: usize, targets: usize },
    #[error("lambda must be > 0, got {0}")]
    Lambda(f64),
    #[error("r_max must be > 0, got {0}")]
    RMax(f64),
    #[error("rank_tol must lie in (0, 1), got {0}")]
    RankTol(f64),
    #[error("{location}: variable index {index} out of range")]
    VariableOutOfRange { location: String, index: usize },
    #[error("target value {0} is not finite")]
    Target(f64),
    #[error("{location}: {source}")]
    Parse {
        location: String,
        #[source]
        source: ParseError,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("point {point:?} is not a maximal-rank point (Gram det {gram_det:e} <= {threshold:e})")]
    NotInMrk {
        point: Vec<f64>,
        gram_det: f64,
        threshold: f64,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("exterior algebra: {0}")]
    Exterior(#[from] ExteriorError),
    #[error("point has {got} coordinates, expected {expected}")]
    PointDimension { expected: usize, got: usize },
    #[error("constraint index {index} out of range (p = {p})")]
    ConstraintIndex { index: usize, p: usize },
}

/// Domain guards carried with a problem.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Guards {
    /// Escape radius for trajectories.
    pub r_max: f64,
    /// Relative Gram-determinant threshold for maximal rank.
    pub rank_tol: f64,
}

impl Default for Guards {
    fn default() -> Self {
        Self {
            r_max: DEFAULT_R_MAX,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

/// `(n, X, D, d, λ, guards)`; the set `Σ = D⁻¹({d})` is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    vars: Vec<String>,
    field: VectorFieldExpr,
    constraints: Vec<ScalarExpr>,
    targets: Vec<f64>,
    lambda: f64,
    guards: Guards,
}

impl ProblemSpec {
    pub fn new(
        vars: Vec<String>,
        field: VectorFieldExpr,
        constraints: Vec<ScalarExpr>,
        targets: Vec<f64>,
        lambda: f64,
        guards: Guards,
    ) -> Result<Self, SpecError> {
        let n = vars.len();
        if n == 0 || n > MAX_DIM {
            return Err(SpecError::Dimension(n));
        }
        if field.dim() != n {
            return Err(SpecError::FieldDimension {
                expected: n,
                got: field.dim(),
            });
        }
        let p = constraints.len();
        if p == 0 || p > n {
            return Err(SpecError::ConstraintCount { p, n });
        }
        if targets.len() != p {
            return Err(SpecError::TargetCount {
                constraints: p,
                targets: targets.len(),
            });
        }
        if let Some(&t) = targets.iter().find(|t| !t.is_finite()) {
            return Err(SpecError::Target(t));
        }
        // NaN fails every comparison, so test the accepting condition
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(SpecError::Lambda(lambda));
        }
        if !(guards.r_max > 0.0) {
            return Err(SpecError::RMax(guards.r_max));
        }
        if !(guards.rank_tol > 0.0 && guards.rank_tol < 1.0) {
            return Err(SpecError::RankTol(guards.rank_tol));
        }
        let exprs = field
            .components()
            .iter()
            .enumerate()
            .map(|(k, e)| (format!("field[{k}]"), e))
            .chain(
                constraints
                    .iter()
                    .enumerate()
                    .map(|(k, e)| (format!("constraints[{k}]"), e)),
            );
        for (location, e) in exprs {
            if let Some(index) = e.max_var().filter(|&i| i >= n) {
                return Err(SpecError::VariableOutOfRange { location, index });
            }
        }
        Ok(Self {
            vars,
            field,
            constraints,
            targets,
            lambda,
            guards,
        })
    }

    /// Builds a problem from expression source text.
    pub fn from_sources(
        vars: &[&str],
        field: &[&str],
        constraints: &[(&str, f64)],
        lambda: f64,
        guards: Guards,
    ) -> Result<Self, SpecError> {
        let parse_at = |location: String, src: &str| {
            symexpr::parse(src, vars).map_err(|source| SpecError::Parse { location, source })
        };
        let comps = field
            .iter()
            .enumerate()
            .map(|(k, s)| parse_at(format!("field[{k}]"), s))
            .collect::<Result<Vec<_>, _>>()?;
        let cons = constraints
            .iter()
            .enumerate()
            .map(|(k, (s, _))| parse_at(format!("constraints[{k}]"), s))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(
            vars.iter().map(|v| String::from(*v)).collect(),
            VectorFieldExpr::new(comps),
            cons,
            constraints.iter().map(|(_, t)| *t).collect(),
            lambda,
            guards,
        )
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn field(&self) -> &VectorFieldExpr {
        &self.field
    }

    pub fn constraints(&self) -> &[ScalarExpr] {
        &self.constraints
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn guards(&self) -> Guards {
        self.guards
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self, SpecError> {
        let mut s = self.clone();
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(SpecError::Lambda(lambda));
        }
        s.lambda = lambda;
        Ok(s)
    }

    pub fn with_guards(&self, guards: Guards) -> Result<Self, SpecError> {
        Self::new(
            self.vars.clone(),
            self.field.clone(),
            self.constraints.clone(),
            self.targets.clone(),
            self.lambda,
            guards,
        )
    }
}

/// `ℒ_X f = Σ_k X_k ∂f/∂x_k`, built symbolically.
pub fn lie_derivative(field: &VectorFieldExpr, f: &ScalarExpr) -> ScalarExpr {
    field
        .components()
        .iter()
        .enumerate()
        .fold(ScalarExpr::Constant(0.0), |acc, (k, xk)| {
            add(acc, mul(xk.clone(), symexpr::differentiate(f, k)))
        })
}

/// Selects how the control is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ControlPath {
    /// Hodge-star formula, evaluated as written.
    #[default]
    Hodge,
    /// Gram-system solve in the span of the gradients.
    Gram,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankCheck {
    pub in_mrk: bool,
    pub gram_det: f64,
    pub threshold: f64,
}

/// Every intermediate of the construction at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisAt {
    pub point: Vec<f64>,
    pub gradients: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub gram: SquareMatrix,
    pub gram_det: f64,
    /// `Θ_i`; empty outside the maximal-rank set.
    pub theta: Vec<Vec<f64>>,
    /// `X₀^λ`; `None` outside the maximal-rank set.
    pub control: Option<Vec<f64>>,
    pub in_mrk: bool,
}

/// A problem with its symbolic derivatives precomputed.
#[derive(Debug, Clone)]
pub struct Stabilizer {
    spec: ProblemSpec,
    grads: Vec<VectorFieldExpr>,
    h: Vec<ScalarExpr>,
}

struct Local {
    grads: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    h: Vec<f64>,
}

impl Stabilizer {
    pub fn new(spec: ProblemSpec) -> Self {
        let n = spec.dim();
        let grads = spec.constraints.iter().map(|d| gradient(d, n)).collect();
        let h = spec
            .constraints
            .iter()
            .map(|d| lie_derivative(&spec.field, d))
            .collect();
        Self { spec, grads, h }
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn lambda(&self) -> f64 {
        self.spec.lambda
    }

    /// Symbolic `h_i = ℒ_X D_i`.
    pub fn h_exprs(&self) -> &[ScalarExpr] {
        &self.h
    }

    pub fn gradient_exprs(&self) -> &[VectorFieldExpr] {
        &self.grads
    }

    fn check_point(&self, x: &[f64]) -> Result<(), SynthError> {
        if x.len() != self.dim() {
            return Err(SynthError::PointDimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn gradients_at(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, SynthError> {
        self.check_point(x)?;
        self.grads.iter().map(|g| g.eval(x).map_err(SynthError::from)).collect()
    }

    /// `D_i(x) − d_i`.
    pub fn residuals(&self, x: &[f64]) -> Result<Vec<f64>, SynthError> {
        self.check_point(x)?;
        self.spec
            .constraints
            .iter()
            .zip(&self.spec.targets)
            .map(|(d, t)| Ok(d.eval(x)? - t))
            .collect()
    }

    /// `F(x) = Σ (D_i(x) − d_i)²`.
    pub fn f_value(&self, x: &[f64]) -> Result<f64, SynthError> {
        Ok(self.residuals(x)?.iter().map(|r| r * r).sum())
    }

    pub fn h_at(&self, x: &[f64]) -> Result<Vec<f64>, SynthError> {
        self.check_point(x)?;
        self.h.iter().map(|h| h.eval(x).map_err(SynthError::from)).collect()
    }

    /// The unperturbed field `X(x)`.
    pub fn field_at(&self, x: &[f64]) -> Result<Vec<f64>, SynthError> {
        self.check_point(x)?;
        Ok(self.spec.field.eval(x)?)
    }

    fn rank_of(&self, grads: &[Vec<f64>]) -> RankCheck {
        let gram = SquareMatrix::gram(grads);
        let gram_det = gram.det();
        let diag: f64 = (0..gram.n()).map(|i| gram.get(i, i)).product();
        let threshold = self.spec.guards.rank_tol * diag;
        RankCheck {
            in_mrk: gram_det > threshold && gram_det > 0.0 && gram_det.is_finite(),
            gram_det,
            threshold,
        }
    }

    /// Maximal-rank test: `det G > rank_tol · Π G_ii` with finite gradients.
    pub fn max_rank_check(&self, x: &[f64]) -> Result<RankCheck, SynthError> {
        let grads = self.gradients_at(x)?;
        Ok(self.rank_of(&grads))
    }

    fn local(&self, x: &[f64]) -> Result<Local, SynthError> {
        let grads = self.gradients_at(x)?;
        let rank = self.rank_of(&grads);
        if !rank.in_mrk {
            return Err(SynthError::NotInMrk {
                point: x.to_vec(),
                gram_det: rank.gram_det,
                threshold: rank.threshold,
            });
        }
        Ok(Local {
            grads,
            residuals: self.residuals(x)?,
            h: self.h_at(x)?,
        })
    }

    fn thetas(&self, grads: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, f64), SynthError> {
        let n = self.dim();
        let blades = grads
            .iter()
            .map(|g| Multivector::vector_embed(g))
            .collect::<Result<Vec<_>, _>>()?;
        let all = Multivector::wedge_all(n, &blades)?;
        let star_all = all.hodge();
        let mut thetas = Vec::with_capacity(blades.len());
        for i in 0..blades.len() {
            let others = Multivector::wedge_all(n, blades.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, b)| b))?;
            thetas.push(others.wedge(&star_all)?.hodge().vector_extract()?);
        }
        Ok((thetas, all.norm_sq()))
    }

    /// `Θ_i` at `x`, with zero-based `i`.
    pub fn theta(&self, x: &[f64], i: usize) -> Result<Vec<f64>, SynthError> {
        let p = self.spec.num_constraints();
        if i >= p {
            return Err(SynthError::ConstraintIndex { index: i, p });
        }
        let local = self.local(x)?;
        let (mut thetas, _) = self.thetas(&local.grads)?;
        Ok(thetas.swap_remove(i))
    }

    /// `‖∇D₁ ∧ … ∧ ∇D_p‖²` from the exterior algebra.
    pub fn wedge_norm_sq(&self, x: &[f64]) -> Result<f64, SynthError> {
        let grads = self.gradients_at(x)?;
        let n = self.dim();
        let blades = grads
            .iter()
            .map(|g| Multivector::vector_embed(g))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Multivector::wedge_all(n, &blades)?.norm_sq())
    }

    pub fn control_hodge(&self, x: &[f64]) -> Result<Vec<f64>, SynthError> {
        self.control_hodge_with_gain(x, self.spec.lambda)
    }

    /// Hodge-path control with an explicit gain in place of λ.
    pub fn control_hodge_with_gain(&self, x: &[f64], gain: f64) -> Result<Vec<f64>, SynthError> {
        let local = self.local(x)?;
        let (thetas, norm_sq) = self.thetas(&local.grads)?;
        Ok(self.combine_hodge(&local, &thetas, norm_sq, gain))
    }

    fn combine_hodge(&self, local: &Local, thetas: &[Vec<f64>], norm_sq: f64, gain: f64) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for (k, theta) in thetas.iter().enumerate() {
            let i = k + 1;
            // (−1)^{n−i+1}
            let sign = if (n + 1 - i) % 2 == 0 { 1.0 } else { -1.0 };
            let bracket = local.h[k] + gain * local.residuals[k];
            for (o, t) in out.iter_mut().zip(theta) {
                *o += sign * bracket * t;
            }
        }
        for o in &mut out {
            *o /= norm_sq;
        }
        out
    }

    pub fn control_gram(&self, x: &[f64]) -> Result<Vec<f64>, SynthError> {
        self.control_gram_with_gain(x, self.spec.lambda)
    }

    /// Solves `G c = −[h + gain (D − d)]` and returns `Σ c_j ∇D_j`.
    pub fn control_gram_with_gain(&self, x: &[f64], gain: f64) -> Result<Vec<f64>, SynthError> {
        let local = self.local(x)?;
        let gram = SquareMatrix::gram(&local.grads);
        let rhs: Vec<f64> = local
            .h
            .iter()
            .zip(&local.residuals)
            .map(|(h, r)| -(h + gain * r))
            .collect();
        let coeffs = gram.lu().solve(&rhs).ok_or_else(|| SynthError::NotInMrk {
            point: x.to_vec(),
            gram_det: 0.0,
            threshold: 0.0,
        })?;
        let mut out = vec![0.0; self.dim()];
        for (c, g) in coeffs.iter().zip(&local.grads) {
            for (o, gk) in out.iter_mut().zip(g) {
                *o += c * gk;
            }
        }
        Ok(out)
    }

    pub fn control(&self, x: &[f64], path: ControlPath) -> Result<Vec<f64>, SynthError> {
        self.control_with_gain(x, path, self.spec.lambda)
    }

    pub fn control_with_gain(&self, x: &[f64], path: ControlPath, gain: f64) -> Result<Vec<f64>, SynthError> {
        match path {
            ControlPath::Hodge => self.control_hodge_with_gain(x, gain),
            ControlPath::Gram => self.control_gram_with_gain(x, gain),
        }
    }

    /// `X(x) + X₀^λ(x)`.
    pub fn perturbed_at(&self, x: &[f64], path: ControlPath) -> Result<Vec<f64>, SynthError> {
        let mut v = self.field_at(x)?;
        let c = self.control(x, path)?;
        for (vi, ci) in v.iter_mut().zip(&c) {
            *vi += ci;
        }
        Ok(v)
    }

    pub fn perturbed_field(&self, path: ControlPath) -> PerturbedField<'_> {
        PerturbedField {
            stab: self,
            path,
            gain: self.spec.lambda,
        }
    }

    pub fn unperturbed_field(&self) -> UnperturbedField<'_> {
        UnperturbedField { stab: self }
    }

    /// Full breakdown at `x`. Outside the maximal-rank set the rank data is
    /// filled in and `theta`/`control` are left empty.
    pub fn synthesize_at(&self, x: &[f64]) -> Result<SynthesisAt, SynthError> {
        let gradients = self.gradients_at(x)?;
        let h = self.h_at(x)?;
        let gram = SquareMatrix::gram(&gradients);
        let rank = self.rank_of(&gradients);
        let (theta, control) = if rank.in_mrk {
            let local = Local {
                grads: gradients.clone(),
                residuals: self.residuals(x)?,
                h: h.clone(),
            };
            let (thetas, norm_sq) = self.thetas(&gradients)?;
            let c = self.combine_hodge(&local, &thetas, norm_sq, self.spec.lambda);
            (thetas, Some(c))
        } else {
            (Vec::new(), None)
        };
        Ok(SynthesisAt {
            point: x.to_vec(),
            gradients,
            h,
            gram,
            gram_det: rank.gram_det,
            theta,
            control,
            in_mrk: rank.in_mrk,
        })
    }

    /// Orthonormal basis of `{v : ∇D_i(x) · v = 0 ∀i}` (n − p vectors).
    pub fn tangent_generators(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, SynthError> {
        let local = self.local(x)?;
        Ok(linalg::orthonormal_complement(&local.grads, self.dim()))
    }

    /// `ℒ_V D_i + gain·(D_i − d_i)` per constraint for the vector `v` at `x`.
    pub fn lie_identity_residuals(&self, x: &[f64], v: &[f64], gain: f64) -> Result<Vec<f64>, SynthError> {
        let grads = self.gradients_at(x)?;
        let res = self.residuals(x)?;
        Ok(grads
            .iter()
            .zip(&res)
            .map(|(g, r)| math::dot(g, v) + gain * r)
            .collect())
    }
}

/// `x ↦ X(x) + X₀^λ(x)` restricted to the maximal-rank set.
#[derive(Debug, Clone, Copy)]
pub struct PerturbedField<'a> {
    stab: &'a Stabilizer,
    path: ControlPath,
    gain: f64,
}

impl<'a> PerturbedField<'a> {
    /// Replaces λ inside the control only. Used for fault injection; the
    /// problem's own λ is untouched.
    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn path(&self) -> ControlPath {
        self.path
    }

    pub fn stabilizer(&self) -> &'a Stabilizer {
        self.stab
    }
}

impl Dynamics for PerturbedField<'_> {
    fn dim(&self) -> usize {
        self.stab.dim()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), SynthError> {
        let f = self.stab.field_at(x)?;
        let c = self.stab.control_with_gain(x, self.path, self.gain)?;
        for ((o, a), b) in out.iter_mut().zip(&f).zip(&c) {
            *o = a + b;
        }
        Ok(())
    }

    fn residuals(&self, x: &[f64]) -> Result<Vec<f64>, SynthError> {
        self.stab.residuals(x)
    }

    fn admissible(&self, x: &[f64]) -> Result<bool, SynthError> {
        Ok(self.stab.max_rank_check(x)?.in_mrk)
    }
}

/// The uncontrolled field `X`, with residuals and rank taken from the problem.
#[derive(Debug, Clone, Copy)]
pub struct UnperturbedField<'a> {
    stab: &'a Stabilizer,
}

impl Dynamics for UnperturbedField<'_> {
    fn dim(&self) -> usize {
        self.stab.dim()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), SynthError> {
        Ok(self.stab.spec.field.eval_into(x, out)?)
    }

    fn residuals(&self, x: &[f64]) -> Result<Vec<f64>, SynthError> {
        self.stab.residuals(x)
    }

    fn admissible(&self, x: &[f64]) -> Result<bool, SynthError> {
        Ok(self.stab.max_rank_check(x)?.in_mrk)
    }
}
