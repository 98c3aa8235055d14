//! Trajectories of the perturbed system on the maximal-rank set.
//!
//! Two integrators are provided: classic fixed-step RK4 and Dormand–Prince
//! 5(4) with local extrapolation. Before a step is accepted the candidate
//! state is rank-checked; a failed stage evaluation or rank check halves the
//! step, and after [`MAX_DOMAIN_HALVINGS`] consecutive halvings the run stops
//! with [`Termination::LeftMrk`].

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math;
use crate::synth::SynthError;

pub const MAX_DOMAIN_HALVINGS: u32 = 40;
/// Adaptive steps below this are a [`Termination::StepFailure`].
pub const MIN_STEP: f64 = 1e-14;

/// A vector field together with the constraint data needed for sampling.
pub trait Dynamics {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), SynthError>;

    /// `D_i(x) − d_i`; empty when the system carries no constraints.
    fn residuals(&self, x: &[f64]) -> Result<Vec<f64>, SynthError>;

    /// Whether `x` lies in the domain (maximal-rank set) of the field.
    fn admissible(&self, x: &[f64]) -> Result<bool, SynthError>;
}

/// Unconstrained dynamics from a closure, admissible everywhere.
pub struct FnDynamics<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnDynamics<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> Dynamics for FnDynamics<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), SynthError> {
        (self.f)(x, out);
        Ok(())
    }

    fn residuals(&self, _x: &[f64]) -> Result<Vec<f64>, SynthError> {
        Ok(Vec::new())
    }

    fn admissible(&self, _x: &[f64]) -> Result<bool, SynthError> {
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Method {
    Rk4Fixed,
    #[default]
    Rk45Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub method: Method,
    /// Step for [`Method::Rk4Fixed`].
    pub dt: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_end: f64,
    pub max_steps: usize,
    /// Escape radius.
    pub r_max: f64,
    /// Stop once `F` drops below this.
    pub f_floor: f64,
    /// Largest adaptive step; `None` means `t_end / 100`.
    pub max_dt: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            method: Method::Rk45Adaptive,
            dt: 1e-2,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            t_end: 10.0,
            max_steps: 1_000_000,
            r_max: crate::synth::DEFAULT_R_MAX,
            f_floor: 1e-24,
            max_dt: None,
        }
    }
}

impl IntegratorOptions {
    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |what| Err(FlowError::InvalidOptions(what));
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be > 0");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be >= 1");
        }
        if !(self.r_max > 0.0) {
            return bad("r_max must be > 0");
        }
        if !(self.f_floor >= 0.0) {
            return bad("f_floor must be >= 0");
        }
        match self.method {
            Method::Rk4Fixed if !(self.dt > 0.0) => bad("dt must be > 0"),
            Method::Rk45Adaptive if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) => bad("tolerances must be > 0"),
            _ if matches!(self.max_dt, Some(h) if !(h > 0.0)) => bad("max_dt must be > 0"),
            _ => Ok(()),
        }
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn rk4(dt: f64, t_end: f64) -> Self {
        Self {
            method: Method::Rk4Fixed,
            dt,
            t_end,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("initial state {0:?} is not a maximal-rank point")]
    NotInMrk(Vec<f64>),
    #[error("initial state has {got} coordinates, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid integrator options: {0}")]
    InvalidOptions(&'static str),
    #[error(transparent)]
    Field(#[from] SynthError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Termination {
    ReachedTEnd,
    ConvergedFFloor,
    LeftMrk,
    EscapedRMax,
    /// Adaptive step underflow or step budget exhausted.
    StepFailure,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::ReachedTEnd => "reached_t_end",
            Termination::ConvergedFFloor => "converged_f_floor",
            Termination::LeftMrk => "left_mrk",
            Termination::EscapedRMax => "escaped_r_max",
            Termination::StepFailure => "step_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Sample {
    pub t: f64,
    pub state: Vec<f64>,
    /// `F = Σ (D_i − d_i)²`.
    pub f: f64,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub termination: Termination,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory always holds the initial state")
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().map(|s| math::norm2(&s.state)).fold(0.0, f64::max)
    }
}

fn sample<D: Dynamics + ?Sized>(field: &D, t: f64, x: &[f64]) -> Result<Sample, SynthError> {
    let residuals = field.residuals(x)?;
    Ok(Sample {
        t,
        state: x.to_vec(),
        f: residuals.iter().map(|r| r * r).sum(),
        residuals,
    })
}

// Dormand–Prince 5(4) tableau; nodes are implied by the autonomous form.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// b − b̂ (fifth minus fourth order weights)
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

enum Attempt {
    Ok {
        x_new: Vec<f64>,
        err: f64,
        k_last: Vec<f64>,
    },
    Domain,
}

struct Stepper<'a, D: Dynamics + ?Sized> {
    field: &'a D,
    n: usize,
}

impl<D: Dynamics + ?Sized> Stepper<'_, D> {
    fn eval(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        match self.field.eval(x, &mut out) {
            Ok(()) if out.iter().all(|v| v.is_finite()) => Some(out),
            _ => None,
        }
    }

    fn admissible(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.is_finite()) && matches!(self.field.admissible(x), Ok(true))
    }

    fn rk4(&self, x: &[f64], k1: &[f64], h: f64) -> Option<Vec<f64>> {
        let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(ai, bi)| ai + s * bi).collect() };
        let k2 = self.eval(&axpy(x, h / 2.0, k1))?;
        let k3 = self.eval(&axpy(x, h / 2.0, &k2))?;
        let k4 = self.eval(&axpy(x, h, &k3))?;
        Some(
            (0..self.n)
                .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect(),
        )
    }

    fn dopri(&self, x: &[f64], k1: &[f64], h: f64, opts: &IntegratorOptions) -> Attempt {
        let mut ks: Vec<Vec<f64>> = Vec::with_capacity(7);
        ks.push(k1.to_vec());
        let mut stage = vec![0.0; self.n];
        for s in 1..7 {
            for i in 0..self.n {
                let mut acc = 0.0;
                for (j, k) in ks.iter().enumerate() {
                    acc += A[s][j] * k[i];
                }
                stage[i] = x[i] + h * acc;
            }
            match self.eval(&stage) {
                Some(k) => ks.push(k),
                None => return Attempt::Domain,
            }
        }
        // stage 7 sits at the fifth-order solution
        let x_new = stage;
        let mut sum = 0.0;
        for i in 0..self.n {
            let e: f64 = h * (0..7).map(|s| E[s] * ks[s][i]).sum::<f64>();
            let sc = opts.abs_tol + opts.rel_tol * math::abs(x[i]).max(math::abs(x_new[i]));
            sum += (e / sc) * (e / sc);
        }
        let err = math::sqrt(sum / self.n as f64);
        let k_last = ks.pop().unwrap();
        Attempt::Ok { x_new, err, k_last }
    }
}

/// Integrates `field` from `x0` until a termination condition fires.
pub fn integrate<D: Dynamics + ?Sized>(
    field: &D,
    x0: &[f64],
    opts: &IntegratorOptions,
) -> Result<Trajectory, FlowError> {
    opts.validate()?;
    let n = field.dim();
    if x0.len() != n {
        return Err(FlowError::Dimension {
            expected: n,
            got: x0.len(),
        });
    }
    if !field.admissible(x0)? {
        return Err(FlowError::NotInMrk(x0.to_vec()));
    }
    let stepper = Stepper { field, n };
    let first = sample(field, 0.0, x0)?;
    let constrained = !first.residuals.is_empty();
    let mut traj = Trajectory {
        samples: vec![first],
        termination: Termination::ReachedTEnd,
        rejected_steps: 0,
    };
    if math::norm2(x0) > opts.r_max {
        traj.termination = Termination::EscapedRMax;
        return Ok(traj);
    }
    if constrained && traj.samples[0].f < opts.f_floor {
        traj.termination = Termination::ConvergedFFloor;
        return Ok(traj);
    }
    let mut k1 = match stepper.eval(x0) {
        Some(k) => k,
        None => {
            let mut out = vec![0.0; n];
            field.eval(x0, &mut out)?;
            traj.termination = Termination::LeftMrk;
            return Ok(traj);
        }
    };

    let max_dt = opts.max_dt.unwrap_or(opts.t_end / 100.0);
    let mut h = match opts.method {
        Method::Rk4Fixed => opts.dt,
        Method::Rk45Adaptive => max_dt.min(1e-3 * opts.t_end.max(1.0)),
    };
    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut halvings = 0u32;
    let mut steps = 0usize;

    loop {
        if steps >= opts.max_steps {
            traj.termination = Termination::StepFailure;
            return Ok(traj);
        }
        let remaining = opts.t_end - t;
        let last = h >= remaining;
        let h_try = if last { remaining } else { h };

        let (x_new, k_new, err) = match opts.method {
            Method::Rk4Fixed => match stepper.rk4(&x, &k1, h_try) {
                Some(xn) => (Some(xn), None, 0.0),
                None => (None, None, 0.0),
            },
            Method::Rk45Adaptive => match stepper.dopri(&x, &k1, h_try, opts) {
                Attempt::Ok { x_new, err, k_last } => {
                    if err > 1.0 {
                        traj.rejected_steps += 1;
                        h = h_try * (0.9 * libm::pow(err, -0.2)).max(0.2);
                        if h < MIN_STEP {
                            traj.termination = Termination::StepFailure;
                            return Ok(traj);
                        }
                        continue;
                    }
                    (Some(x_new), Some(k_last), err)
                }
                Attempt::Domain => (None, None, 0.0),
            },
        };

        let x_new = match x_new.filter(|xn| stepper.admissible(xn)) {
            Some(xn) => xn,
            None => {
                halvings += 1;
                traj.rejected_steps += 1;
                if halvings > MAX_DOMAIN_HALVINGS || h_try / 2.0 < MIN_STEP * t.abs().max(1.0) {
                    traj.termination = Termination::LeftMrk;
                    return Ok(traj);
                }
                h = h_try / 2.0;
                continue;
            }
        };

        halvings = 0;
        steps += 1;
        t = if last { opts.t_end } else { t + h_try };
        x = x_new;
        let s = match sample(field, t, &x) {
            Ok(s) => s,
            Err(_) => {
                traj.termination = Termination::LeftMrk;
                return Ok(traj);
            }
        };
        let f = s.f;
        traj.samples.push(s);

        if math::norm2(&x) > opts.r_max {
            traj.termination = Termination::EscapedRMax;
            return Ok(traj);
        }
        if constrained && f < opts.f_floor {
            traj.termination = Termination::ConvergedFFloor;
            return Ok(traj);
        }
        if last {
            traj.termination = Termination::ReachedTEnd;
            return Ok(traj);
        }

        k1 = match k_new {
            Some(k) => k,
            None => match stepper.eval(&x) {
                Some(k) => k,
                None => {
                    traj.termination = Termination::LeftMrk;
                    return Ok(traj);
                }
            },
        };
        h = match opts.method {
            Method::Rk4Fixed => opts.dt,
            Method::Rk45Adaptive => {
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * libm::pow(err, -0.2)).clamp(0.2, 5.0)
                };
                (h_try * factor).min(max_dt)
            }
        };
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    /// `‖x(t)‖ ≤ r_max` held over the integrated horizon.
    pub bounded_up_to_t_end: bool,
    pub sup_norm: f64,
    pub trajectory: Trajectory,
}

/// Finite-horizon boundedness probe: integrates and reports whether the
/// orbit stayed inside the escape radius. Reaching the level set does not
/// end the run.
pub fn bounded_orbit_probe<D: Dynamics + ?Sized>(
    field: &D,
    x0: &[f64],
    opts: &IntegratorOptions,
) -> Result<ProbeResult, FlowError> {
    let mut opts = *opts;
    opts.f_floor = 0.0;
    let trajectory = integrate(field, x0, &opts)?;
    Ok(ProbeResult {
        bounded_up_to_t_end: trajectory.termination != Termination::EscapedRMax,
        sup_norm: trajectory.sup_norm(),
        trajectory,
    })
}
