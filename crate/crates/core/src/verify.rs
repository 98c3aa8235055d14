//! Measured checks of the stabilization claims.
//!
//! Every check produces a [`CheckRecord`] with the measured quantity, the
//! value it is compared against and the tolerance. `Pass` always means
//! `|measured − expected| ≤ tolerance`. Claims about infinite horizons
//! (boundedness, attraction) are checked on finite horizons and finite batches
//! only; when that limitation decides the outcome the status is
//! `Inconclusive` and the note says why.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::flow::{integrate, Dynamics, FlowError, IntegratorOptions, Termination, Trajectory};
use crate::linalg::SquareMatrix;
use crate::math;
use crate::synth::{ControlPath, Stabilizer, SynthError};

pub const DECAY_REL_TOL: f64 = 1e-6;
pub const DECAY_MIN_SAMPLES: usize = 10;
/// `F(x̄)` at or below this is treated as starting on the invariant set.
pub const DEGENERATE_F: f64 = 1e-20;
pub const INVARIANCE_TOL: f64 = 1e-9;
pub const INVARIANCE_HORIZON: f64 = 1.0;
pub const LIE_IDENTITY_TOL: f64 = 1e-9;
pub const CONVERGENCE_TOL: f64 = 1e-6;
pub const PROJECTION_TOL: f64 = 1e-12;
pub const EQUILIBRIUM_TOL: f64 = 1e-9;
pub const LYAPUNOV_REL_TOL: f64 = 1e-6;
pub const ISOLATION_PROBES: usize = 1000;
pub const LYAPUNOV_SAMPLES: usize = 1000;

pub const DECAY_LAW: &str = "decay_law";
pub const INVARIANCE_X: &str = "invariance_X";
pub const INVARIANCE_PERTURBED: &str = "invariance_perturbed";
pub const LIE_IDENTITY: &str = "lie_identity";
pub const CONVERGENCE: &str = "convergence";
pub const ISOLATED_POINT: &str = "isolated_point_stability";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("need at least {needed} samples with F above the floor, found {found}")]
    InsufficientSamples { needed: usize, found: usize },
    #[error("point {point:?} is not an equilibrium of the perturbed field (|v| = {norm:e})")]
    NonEquilibrium { point: Vec<f64>, norm: f64 },
    #[error("projection onto the level set failed from {seed:?}: {reason}")]
    Projection { seed: Vec<f64>, reason: String },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CheckStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Metric {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CheckRecord {
    pub name: String,
    /// Input index within a batch (trajectory, point), if any.
    pub index: Option<usize>,
    pub status: CheckStatus,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub metrics: Vec<Metric>,
    pub note: Option<String>,
}

impl CheckRecord {
    fn new(name: &str, measured: f64, expected: f64, tolerance: f64) -> Self {
        let within = (measured - expected).abs() <= tolerance;
        Self {
            name: name.to_string(),
            index: None,
            status: if within { CheckStatus::Pass } else { CheckStatus::Fail },
            measured,
            expected,
            tolerance,
            metrics: Vec::new(),
            note: None,
        }
    }

    fn metric(mut self, name: &str, value: f64) -> Self {
        self.metrics.push(Metric {
            name: name.to_string(),
            value,
        });
        self
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Demotes a pass (never a fail).
    fn demote(mut self, status: CheckStatus) -> Self {
        if self.status == CheckStatus::Pass {
            self.status = status;
        }
        self
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = Some(index);
        self
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    pub fn metric_value(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VerificationReport {
    pub checks: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn push(&mut self, record: CheckRecord) {
        self.checks.push(record);
    }

    /// Orders records by check name, then input index.
    pub fn sort(&mut self) {
        self.checks
            .sort_by(|a, b| a.name.cmp(&b.name).then(a.index.cmp(&b.index)));
    }

    pub fn all_passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(CheckRecord::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Sample window for [`decay_law_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayWindow {
    /// Only samples with `F` above this are fitted.
    pub f_floor: f64,
    /// Only samples with `t ≤ horizon` are used.
    pub horizon: Option<f64>,
}

impl Default for DecayWindow {
    fn default() -> Self {
        Self {
            f_floor: 1e-24,
            horizon: None,
        }
    }
}

/// Exponential decay `F(x(t)) = e^{−2λt} F(x̄)` along a trajectory.
///
/// Passes when the fitted slope of `ln F` is within `1e−6·2λ` of `−2λ` and
/// every sample agrees with the closed form to relative error `1e−6`.
pub fn decay_law_check(lambda: f64, traj: &Trajectory, window: DecayWindow) -> Result<CheckRecord, VerifyError> {
    let in_window = |t: f64| window.horizon.map_or(true, |h| t <= h);
    let f0 = traj.samples[0].f;
    let expected = -2.0 * lambda;
    if f0 <= DEGENERATE_F {
        let worst = traj
            .samples
            .iter()
            .filter(|s| in_window(s.t))
            .map(|s| s.f)
            .fold(0.0, f64::max);
        return Ok(CheckRecord::new(DECAY_LAW, worst, 0.0, DEGENERATE_F)
            .metric("f0", f0)
            .note("start on the invariant set; F must stay at zero"));
    }
    let usable: Vec<_> = traj
        .samples
        .iter()
        .filter(|s| in_window(s.t) && s.f > window.f_floor)
        .collect();
    if usable.len() < DECAY_MIN_SAMPLES {
        return Err(VerifyError::InsufficientSamples {
            needed: DECAY_MIN_SAMPLES,
            found: usable.len(),
        });
    }
    let ts: Vec<f64> = usable.iter().map(|s| s.t).collect();
    let logs: Vec<f64> = usable.iter().map(|s| math::ln(s.f)).collect();
    let slope = ls_slope(&ts, &logs);
    let mut pointwise = 0.0f64;
    let mut max_increase = 0.0f64;
    for s in &usable {
        let model = math::exp(expected * s.t) * f0;
        pointwise = pointwise.max(math::abs(s.f - model) / model);
    }
    for w in usable.windows(2) {
        max_increase = max_increase.max((w[1].f - w[0].f) / w[0].f);
    }
    let mut rec = CheckRecord::new(DECAY_LAW, slope, expected, DECAY_REL_TOL * 2.0 * lambda)
        .metric("pointwise_rel_err", pointwise)
        .metric("max_rel_increase", max_increase)
        .metric("samples", usable.len() as f64)
        .metric("t_last", ts[ts.len() - 1]);
    if pointwise > DECAY_REL_TOL {
        rec.status = CheckStatus::Fail;
        rec = rec.note(format!(
            "pointwise relative error {pointwise:e} exceeds {DECAY_REL_TOL:e}"
        ));
    }
    Ok(rec)
}

/// Gauss–Newton projection onto `D(x) = d` using minimum-norm steps
/// `x ← x − Jᵀ(JJᵀ)⁻¹(D(x) − d)`.
pub fn project_to_level_set(stab: &Stabilizer, seed: &[f64]) -> Result<Vec<f64>, VerifyError> {
    let fail = |reason: &str| VerifyError::Projection {
        seed: seed.to_vec(),
        reason: reason.to_string(),
    };
    let mut x = seed.to_vec();
    for _ in 0..100 {
        let res = stab.residuals(&x).map_err(|e| fail(&format!("{e}")))?;
        let worst = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        if worst <= PROJECTION_TOL {
            return match stab.max_rank_check(&x) {
                Ok(r) if r.in_mrk => Ok(x),
                _ => Err(fail("converged to a rank-deficient point")),
            };
        }
        let grads = stab.gradients_at(&x).map_err(|e| fail(&format!("{e}")))?;
        let y = SquareMatrix::gram(&grads)
            .lu()
            .solve(&res)
            .ok_or_else(|| fail("singular Jacobian"))?;
        for (c, g) in y.iter().zip(&grads) {
            for (xi, gi) in x.iter_mut().zip(g) {
                *xi -= c * gi;
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(fail("iterate diverged"));
        }
    }
    Err(fail("no convergence in 100 iterations"))
}

/// Projects each seed; failures are returned with their seed index.
pub fn sample_level_set(stab: &Stabilizer, seeds: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<(usize, VerifyError)>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (k, s) in seeds.iter().enumerate() {
        match project_to_level_set(stab, s) {
            Ok(p) => ok.push(p),
            Err(e) => failed.push((k, e)),
        }
    }
    (ok, failed)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, r| m.max(r.abs()))
}

fn invariance_for<D: Dynamics + ?Sized>(
    name: &str,
    field: &D,
    tangency: impl Fn(&[f64]) -> Result<Vec<f64>, SynthError>,
    samples: &[Vec<f64>],
    opts: &IntegratorOptions,
) -> Result<CheckRecord, VerifyError> {
    let mut opts = *opts;
    opts.t_end = INVARIANCE_HORIZON;
    // F starts near zero; the floor must not end the run
    opts.f_floor = 0.0;
    let mut worst = 0.0f64;
    let mut worst_tangency = 0.0f64;
    let mut early = 0usize;
    for s in samples {
        worst_tangency = worst_tangency.max(max_abs(&tangency(s)?));
        let traj = integrate(field, s, &opts)?;
        for smp in &traj.samples {
            worst = worst.max(max_abs(&smp.residuals));
        }
        if traj.termination != Termination::ReachedTEnd {
            early += 1;
        }
    }
    let mut rec = CheckRecord::new(name, worst, 0.0, INVARIANCE_TOL)
        .metric("tangency_residual", worst_tangency)
        .metric("samples", samples.len() as f64)
        .metric("early_terminations", early as f64);
    if worst_tangency > INVARIANCE_TOL {
        rec.status = CheckStatus::Fail;
        rec = rec.note("field is not tangent to the level set at a sample");
    } else if samples.is_empty() {
        rec = rec.demote(CheckStatus::Inconclusive).note("no level-set samples");
    } else if early > 0 {
        rec = rec
            .demote(CheckStatus::Inconclusive)
            .note("some runs stopped before the horizon");
    }
    Ok(rec)
}

/// Invariance of the level set under `X` and under `X + X₀^λ`: each sample
/// (already on the level set) is integrated for unit time and the constraint
/// residual must stay below `1e−9`; the fields must also be tangent there.
pub fn invariance_check(
    stab: &Stabilizer,
    path: ControlPath,
    samples: &[Vec<f64>],
    opts: &IntegratorOptions,
) -> Result<[CheckRecord; 2], VerifyError> {
    let unperturbed = invariance_for(INVARIANCE_X, &stab.unperturbed_field(), |x| stab.h_at(x), samples, opts)?;
    let perturbed = invariance_for(
        INVARIANCE_PERTURBED,
        &stab.perturbed_field(path),
        |x| {
            let v = stab.perturbed_at(x, path)?;
            stab.lie_identity_residuals(x, &v, 0.0)
        },
        samples,
        opts,
    )?;
    Ok([unperturbed, perturbed])
}

/// `max |ℒ_{X+X₀^λ} D_i + λ(D_i − d_i)| / (1 + |λ(D_i − d_i)|)` over `points`.
/// Points outside the maximal-rank set are skipped and counted.
pub fn lie_identity_check(
    stab: &Stabilizer,
    path: ControlPath,
    points: &[Vec<f64>],
) -> Result<CheckRecord, VerifyError> {
    let lambda = stab.lambda();
    let mut worst = 0.0f64;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for x in points {
        if !stab.max_rank_check(x)?.in_mrk {
            skipped += 1;
            continue;
        }
        let v = stab.perturbed_at(x, path)?;
        let res = stab.residuals(x)?;
        let lie = stab.lie_identity_residuals(x, &v, lambda)?;
        for (l, r) in lie.iter().zip(&res) {
            worst = worst.max(l.abs() / (1.0 + (lambda * r).abs()));
        }
        used += 1;
    }
    let mut rec = CheckRecord::new(LIE_IDENTITY, worst, 0.0, LIE_IDENTITY_TOL)
        .metric("points", used as f64)
        .metric("skipped_not_in_mrk", skipped as f64);
    if used == 0 {
        rec = rec.demote(CheckStatus::Inconclusive).note("no maximal-rank points");
    }
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OrbitVerdict {
    Converged,
    /// Escaped the radius: unbounded orbits are outside the claim.
    ExcludedUnbounded,
    /// Bounded so far but not yet within tolerance at the horizon.
    HorizonLimited,
    /// Stopped at the edge of the maximal-rank set.
    LeftMrk,
    StepFailure,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OrbitOutcome {
    pub index: usize,
    pub verdict: OrbitVerdict,
    pub final_residual: f64,
    pub final_t: f64,
    pub final_in_mrk: bool,
}

/// Classifies one finished trajectory for [`convergence_check`].
pub fn classify_orbit(stab: &Stabilizer, index: usize, traj: &Trajectory) -> OrbitOutcome {
    let last = traj.last();
    let final_residual = math::sqrt(last.f);
    let final_in_mrk = stab.max_rank_check(&last.state).map_or(false, |r| r.in_mrk);
    let verdict = match traj.termination {
        Termination::EscapedRMax => OrbitVerdict::ExcludedUnbounded,
        Termination::LeftMrk => OrbitVerdict::LeftMrk,
        Termination::StepFailure => OrbitVerdict::StepFailure,
        _ if final_residual <= CONVERGENCE_TOL => OrbitVerdict::Converged,
        _ => OrbitVerdict::HorizonLimited,
    };
    OrbitOutcome {
        index,
        verdict,
        final_residual,
        final_t: last.t,
        final_in_mrk,
    }
}

/// Summarizes per-orbit outcomes: every bounded orbit must end with
/// `√F ≤ 1e−6`; unbounded orbits are excluded.
pub fn convergence_record(outcomes: &[OrbitOutcome]) -> CheckRecord {
    let count = |v: OrbitVerdict| outcomes.iter().filter(|o| o.verdict == v).count();
    let considered: Vec<_> = outcomes
        .iter()
        .filter(|o| o.verdict != OrbitVerdict::ExcludedUnbounded)
        .collect();
    let worst = considered.iter().map(|o| o.final_residual).fold(0.0, f64::max);
    let mut rec = CheckRecord::new(CONVERGENCE, worst, 0.0, CONVERGENCE_TOL)
        .metric("orbits", outcomes.len() as f64)
        .metric("converged", count(OrbitVerdict::Converged) as f64)
        .metric("excluded_unbounded", count(OrbitVerdict::ExcludedUnbounded) as f64)
        .metric("horizon_limited", count(OrbitVerdict::HorizonLimited) as f64)
        .metric("left_mrk", count(OrbitVerdict::LeftMrk) as f64)
        .metric("step_failure", count(OrbitVerdict::StepFailure) as f64)
        .metric(
            "final_not_in_mrk",
            outcomes.iter().filter(|o| !o.final_in_mrk).count() as f64,
        );
    if count(OrbitVerdict::StepFailure) > 0 {
        rec.status = CheckStatus::Fail;
        rec = rec.note("integrator failure");
    } else if considered.is_empty() {
        rec = rec
            .demote(CheckStatus::Inconclusive)
            .note("every orbit escaped; nothing to check");
    } else if count(OrbitVerdict::HorizonLimited) + count(OrbitVerdict::LeftMrk) > 0 {
        rec.status = CheckStatus::Inconclusive;
        rec = rec.note("some bounded orbits had not converged within the horizon or left the maximal-rank set");
    }
    rec
}

/// Integrates each start and checks that bounded orbits reach the level set.
pub fn convergence_check(
    stab: &Stabilizer,
    path: ControlPath,
    starts: &[Vec<f64>],
    opts: &IntegratorOptions,
) -> Result<(CheckRecord, Vec<OrbitOutcome>), VerifyError> {
    let field = stab.perturbed_field(path);
    let mut outcomes = Vec::with_capacity(starts.len());
    for (k, x0) in starts.iter().enumerate() {
        let traj = integrate(&field, x0, opts)?;
        outcomes.push(classify_orbit(stab, k, &traj));
    }
    Ok((convergence_record(&outcomes), outcomes))
}

/// `count` uniform points in the box `[lo, hi]`, reproducible from `seed`.
pub fn sample_box(lo: &[f64], hi: &[f64], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| lo.iter().zip(hi).map(|(a, b)| rng.gen_range(*a..*b)).collect())
        .collect()
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = math::norm2(&v);
        if r > 1e-3 && r <= 1.0 {
            return v.iter().map(|c| c / r).collect();
        }
    }
}

fn offset(center: &[f64], dir: &[f64], r: f64) -> Vec<f64> {
    center.iter().zip(dir).map(|(c, d)| c + r * d).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Asymptotic stability of an isolated point of the level set.
///
/// Checks, in order: the point is an equilibrium of `X + X₀^λ` (else
/// [`VerifyError::NonEquilibrium`]); projections from random seeds in the
/// ball find no other level-set point (else `Inconclusive`); `F > 0` and
/// `ℒF = −2λF < 0` on a sampled punctured ball; and orbits from a ring at
/// `radius/2` enter the ball of radius `radius/100`.
pub fn isolated_point_check(
    stab: &Stabilizer,
    path: ControlPath,
    point: &[f64],
    radius: f64,
    opts: &IntegratorOptions,
    seed: u64,
) -> Result<CheckRecord, VerifyError> {
    let n = stab.dim();
    let lambda = stab.lambda();
    let v = stab.perturbed_at(point, path)?;
    let norm = math::norm2(&v);
    if norm > EQUILIBRIUM_TOL {
        return Err(VerifyError::NonEquilibrium {
            point: point.to_vec(),
            norm,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut other_found = None;
    for _ in 0..ISOLATION_PROBES {
        let dir = random_direction(&mut rng, n);
        let r = radius * libm::pow(rng.gen_range(0.0..1.0), 1.0 / n as f64);
        if let Ok(q) = project_to_level_set(stab, &offset(point, &dir, r)) {
            let d = dist(&q, point);
            if d <= radius && d > 1e-6 {
                other_found = Some(q);
                break;
            }
        }
    }

    let mut worst_dev = 0.0f64;
    let mut positive = true;
    let mut decreasing = true;
    let mut used = 0usize;
    for _ in 0..LYAPUNOV_SAMPLES {
        let dir = random_direction(&mut rng, n);
        let r = radius * rng.gen_range(1e-3..=1.0);
        let x = offset(point, &dir, r);
        if !stab.max_rank_check(&x)?.in_mrk {
            continue;
        }
        let res = stab.residuals(&x)?;
        let f: f64 = res.iter().map(|r| r * r).sum();
        let vel = stab.perturbed_at(&x, path)?;
        let grads = stab.gradients_at(&x)?;
        let lie_f: f64 = res.iter().zip(&grads).map(|(r, g)| 2.0 * r * math::dot(g, &vel)).sum();
        positive &= f > 0.0;
        decreasing &= lie_f < 0.0;
        if f > 0.0 {
            worst_dev = worst_dev.max(math::abs(lie_f + 2.0 * lambda * f) / (2.0 * lambda * f));
        }
        used += 1;
    }

    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for k in 0..n {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[k] = s;
            dirs.push(d);
        }
    }
    for _ in 0..4 {
        dirs.push(random_direction(&mut rng, n));
    }
    let field = stab.perturbed_field(path);
    let mut entered = 0usize;
    let mut worst_final = 0.0f64;
    for d in &dirs {
        let x0 = offset(point, d, radius / 2.0);
        let traj = integrate(&field, &x0, opts)?;
        let closest = traj
            .samples
            .iter()
            .map(|s| dist(&s.state, point))
            .fold(f64::INFINITY, f64::min);
        worst_final = worst_final.max(dist(&traj.last().state, point));
        if closest <= radius / 100.0 {
            entered += 1;
        }
    }

    let mut rec = CheckRecord::new(ISOLATED_POINT, worst_dev, 0.0, LYAPUNOV_REL_TOL)
        .metric("equilibrium_norm", norm)
        .metric("lyapunov_samples", used as f64)
        .metric("ring_starts", dirs.len() as f64)
        .metric("ring_entered", entered as f64)
        .metric("ring_worst_final_distance", worst_final);
    if !positive || !decreasing {
        rec.status = CheckStatus::Fail;
        rec = rec.note("F is not a strict Lyapunov function on the sampled ball");
    } else if entered < dirs.len() {
        rec.status = CheckStatus::Fail;
        rec = rec.note("an orbit from the ring did not enter radius/100");
    } else if let Some(q) = other_found {
        rec = rec.demote(CheckStatus::Inconclusive).note(format!(
            "isolation not corroborated: level-set point {q:?} within radius"
        ));
    }
    Ok(rec)
}
