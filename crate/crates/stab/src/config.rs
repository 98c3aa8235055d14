//! Run configuration: JSON schema, loading and validation.
//!
//! Validation errors carry a JSON pointer (RFC 6901) to the offending value.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use stab_core::flow::{IntegratorOptions, Method};
use stab_core::symexpr::{self, UnaryOp};
use stab_core::synth::{Guards, ProblemSpec, DEFAULT_RANK_TOL, DEFAULT_R_MAX};
use stab_core::ControlPath;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub initial_states: Vec<Vec<f64>>,
    #[serde(default)]
    pub checks: Vec<CheckName>,
    #[serde(default)]
    pub check_options: CheckOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth_grid: Option<GridConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub control_path: ControlPath,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub variables: Vec<String>,
    pub field: Vec<String>,
    pub constraints: Vec<ConstraintConfig>,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guards: Option<GuardsConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub expr: String,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuardsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
}

/// Unset fields take the library defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CheckName {
    #[serde(rename = "decay_law")]
    DecayLaw,
    /// Both invariance checks.
    #[serde(rename = "invariance")]
    Invariance,
    #[serde(rename = "invariance_X")]
    InvarianceX,
    #[serde(rename = "invariance_perturbed")]
    InvariancePerturbed,
    #[serde(rename = "lie_identity")]
    LieIdentity,
    #[serde(rename = "convergence")]
    Convergence,
    #[serde(rename = "isolated_point_stability")]
    IsolatedPointStability,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckOptions {
    /// Decay law is fitted on `t ≤ decay_horizon` (whole run if unset).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_horizon: Option<f64>,
    /// Seeds projected onto the level set for the invariance checks. When
    /// empty, `surface_sample_count` seeds are drawn from `sample_box`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub surface_seeds: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface_sample_count: Option<usize>,
    /// Box for random sampling; `[-2, 2]ⁿ` if unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_box: Option<BoxConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lie_sample_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub isolated_points: Vec<IsolatedPointConfig>,
    /// Horizon for the ring orbits; `20/λ` if unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isolated_t_end: Option<f64>,
}

pub const DEFAULT_SURFACE_SAMPLES: usize = 16;
pub const DEFAULT_LIE_SAMPLES: usize = 1000;
pub const DEFAULT_BOX_HALF_WIDTH: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsolatedPointConfig {
    pub point: Vec<f64>,
    pub radius: f64,
}

/// Tensor grid with `steps[k]` points from `lo[k]` to `hi[k]` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub steps: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_dir() -> String {
    "out".into()
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// JSON pointer; empty for the document root.
    pub pointer: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pointer.is_empty() {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config {}: {}", self.pointer, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn escape(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", escape(key))),
            Segment::Enum { variant } => out.push_str(&format!("/{}", escape(variant))),
            Segment::Unknown => {}
        }
    }
    out
}

impl RunConfig {
    /// Parses JSON; structural errors point at the offending value.
    pub fn from_json(src: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(src);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let pointer = pointer_of(e.path());
            ConfigError::new(pointer, e.inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&src)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn dim(&self) -> usize {
        self.problem.variables.len()
    }

    pub fn guards(&self) -> Guards {
        let g = self.problem.guards.unwrap_or_default();
        Guards {
            r_max: g.r_max.unwrap_or(DEFAULT_R_MAX),
            rank_tol: g.rank_tol.unwrap_or(DEFAULT_RANK_TOL),
        }
    }

    pub fn integrator_options(&self) -> IntegratorOptions {
        let d = IntegratorOptions::default();
        let c = &self.integrator;
        IntegratorOptions {
            method: c.method.unwrap_or(d.method),
            dt: c.dt.unwrap_or(d.dt),
            rel_tol: c.rel_tol.unwrap_or(d.rel_tol),
            abs_tol: c.abs_tol.unwrap_or(d.abs_tol),
            t_end: c.t_end.unwrap_or(d.t_end),
            max_steps: c.max_steps.unwrap_or(d.max_steps),
            r_max: self.guards().r_max,
            f_floor: c.f_floor.unwrap_or(d.f_floor),
            max_dt: c.max_dt.or(d.max_dt),
        }
    }

    pub fn sample_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.check_options.sample_box {
            Some(b) => (b.lo.clone(), b.hi.clone()),
            None => {
                let n = self.dim();
                (vec![-DEFAULT_BOX_HALF_WIDTH; n], vec![DEFAULT_BOX_HALF_WIDTH; n])
            }
        }
    }

    pub fn wants(&self, check: CheckName) -> bool {
        self.checks.iter().any(|c| {
            *c == check
                || (*c == CheckName::Invariance
                    && matches!(check, CheckName::InvarianceX | CheckName::InvariancePerturbed))
        })
    }

    /// Checks everything the schema cannot express and builds the problem.
    pub fn validate(&self) -> Result<ProblemSpec, ConfigError> {
        let pr = &self.problem;
        let n = pr.variables.len();
        if n == 0 || n > stab_core::exterior::MAX_DIM {
            return Err(ConfigError::new(
                "/problem/variables",
                format!("need between 1 and {} variables, got {n}", stab_core::exterior::MAX_DIM),
            ));
        }
        for (k, v) in pr.variables.iter().enumerate() {
            let ok = v.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && v.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !ok {
                return Err(ConfigError::new(
                    format!("/problem/variables/{k}"),
                    format!("`{v}` is not an identifier"),
                ));
            }
            if UnaryOp::from_function_name(v).is_some() {
                return Err(ConfigError::new(
                    format!("/problem/variables/{k}"),
                    format!("`{v}` is a function name"),
                ));
            }
            if pr.variables[..k].contains(v) {
                return Err(ConfigError::new(
                    format!("/problem/variables/{k}"),
                    format!("duplicate variable `{v}`"),
                ));
            }
        }
        if pr.field.len() != n {
            return Err(ConfigError::new(
                "/problem/field",
                format!("field has {} components, expected {n}", pr.field.len()),
            ));
        }
        let p = pr.constraints.len();
        if p == 0 || p > n {
            return Err(ConfigError::new(
                "/problem/constraints",
                format!("need 1 <= p <= n constraints, got p = {p} with n = {n}"),
            ));
        }
        if !(pr.lambda > 0.0 && pr.lambda.is_finite()) {
            return Err(ConfigError::new("/problem/lambda", "lambda must be > 0"));
        }
        let g = self.guards();
        if !(g.r_max > 0.0) {
            return Err(ConfigError::new("/problem/guards/r_max", "r_max must be > 0"));
        }
        if !(g.rank_tol > 0.0 && g.rank_tol < 1.0) {
            return Err(ConfigError::new(
                "/problem/guards/rank_tol",
                "rank_tol must lie in (0, 1)",
            ));
        }
        let vars: Vec<&str> = pr.variables.iter().map(String::as_str).collect();
        let parse = |pointer: String, src: &str| {
            symexpr::parse(src, &vars).map_err(|e| ConfigError::new(pointer, e.to_string()))
        };
        let field = pr
            .field
            .iter()
            .enumerate()
            .map(|(k, s)| parse(format!("/problem/field/{k}"), s))
            .collect::<Result<Vec<_>, _>>()?;
        let mut constraints = Vec::with_capacity(p);
        for (k, c) in pr.constraints.iter().enumerate() {
            constraints.push(parse(format!("/problem/constraints/{k}/expr"), &c.expr)?);
            if !c.target.is_finite() {
                return Err(ConfigError::new(
                    format!("/problem/constraints/{k}/target"),
                    "target must be finite",
                ));
            }
        }

        let opts = self.integrator_options();
        opts.validate()
            .map_err(|e| ConfigError::new("/integrator", e.to_string()))?;

        check_points("/initial_states", &self.initial_states, n)?;
        let co = &self.check_options;
        check_points("/check_options/surface_seeds", &co.surface_seeds, n)?;
        if let Some(h) = co.decay_horizon {
            if !(h > 0.0) {
                return Err(ConfigError::new("/check_options/decay_horizon", "must be > 0"));
            }
        }
        if let Some(t) = co.isolated_t_end {
            if !(t > 0.0 && t.is_finite()) {
                return Err(ConfigError::new("/check_options/isolated_t_end", "must be > 0"));
            }
        }
        if let Some(b) = &co.sample_box {
            check_box("/check_options/sample_box", &b.lo, &b.hi, n)?;
        }
        for (k, ip) in co.isolated_points.iter().enumerate() {
            let base = format!("/check_options/isolated_points/{k}");
            check_point(&format!("{base}/point"), &ip.point, n)?;
            if !(ip.radius > 0.0 && ip.radius.is_finite()) {
                return Err(ConfigError::new(format!("{base}/radius"), "radius must be > 0"));
            }
        }
        if let Some(grid) = &self.synth_grid {
            check_box("/synth_grid", &grid.lo, &grid.hi, n)?;
            if grid.steps.len() != n {
                return Err(ConfigError::new(
                    "/synth_grid/steps",
                    format!("expected {n} entries, got {}", grid.steps.len()),
                ));
            }
            if let Some(k) = grid.steps.iter().position(|&s| s == 0) {
                return Err(ConfigError::new(format!("/synth_grid/steps/{k}"), "must be >= 1"));
            }
        }

        for (k, c) in self.checks.iter().enumerate() {
            let needs_states = matches!(c, CheckName::DecayLaw | CheckName::Convergence);
            if needs_states && self.initial_states.is_empty() {
                return Err(ConfigError::new(
                    format!("/checks/{k}"),
                    "check needs at least one initial state",
                ));
            }
            if *c == CheckName::IsolatedPointStability && co.isolated_points.is_empty() {
                return Err(ConfigError::new(
                    format!("/checks/{k}"),
                    "check needs check_options.isolated_points",
                ));
            }
        }
        if self.initial_states.is_empty() && self.checks.is_empty() && self.synth_grid.is_none() {
            return Err(ConfigError::new(
                "",
                "nothing to do: give initial_states, checks or synth_grid",
            ));
        }

        ProblemSpec::new(
            pr.variables.clone(),
            stab_core::VectorFieldExpr::new(field),
            constraints,
            pr.constraints.iter().map(|c| c.target).collect(),
            pr.lambda,
            g,
        )
        .map_err(|e| ConfigError::new("/problem", e.to_string()))
    }
}

fn check_point(pointer: &str, x: &[f64], n: usize) -> Result<(), ConfigError> {
    if x.len() != n {
        return Err(ConfigError::new(
            pointer,
            format!("expected {n} coordinates, got {}", x.len()),
        ));
    }
    if let Some(k) = x.iter().position(|v| !v.is_finite()) {
        return Err(ConfigError::new(format!("{pointer}/{k}"), "coordinate must be finite"));
    }
    Ok(())
}

fn check_points(pointer: &str, xs: &[Vec<f64>], n: usize) -> Result<(), ConfigError> {
    for (k, x) in xs.iter().enumerate() {
        check_point(&format!("{pointer}/{k}"), x, n)?;
    }
    Ok(())
}

fn check_box(pointer: &str, lo: &[f64], hi: &[f64], n: usize) -> Result<(), ConfigError> {
    check_point(&format!("{pointer}/lo"), lo, n)?;
    check_point(&format!("{pointer}/hi"), hi, n)?;
    if let Some(k) = lo.iter().zip(hi).position(|(a, b)| !(a < b)) {
        return Err(ConfigError::new(format!("{pointer}/hi/{k}"), "hi must exceed lo"));
    }
    Ok(())
}
