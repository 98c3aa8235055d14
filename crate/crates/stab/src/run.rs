//! Scenario orchestration: simulate, verify, tabulate, write artifacts.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use stab_core::flow::{integrate, Trajectory};
use stab_core::verify::{
    self, classify_orbit, convergence_record, CheckRecord, CheckStatus, DecayWindow, Metric, OrbitOutcome,
    VerificationReport, VerifyError,
};
use stab_core::{ControlPath, Stabilizer};

use crate::config::{
    CheckName, ConfigError, Format, GridConfig, RunConfig, DEFAULT_LIE_SAMPLES, DEFAULT_SURFACE_SAMPLES,
};
use crate::emit::{self, SynthRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

const SURFACE_SEED_SALT: u64 = 0x5eed_0001;
const LIE_SEED_SALT: u64 = 0x5eed_0002;
const ISOLATED_SEED_SALT: u64 = 0x5eed_0100;

/// Test hooks applied while integrating the initial states.
#[derive(Debug, Clone, Copy, Default)]
pub struct Hooks {
    /// Replaces λ inside the control (the checks still expect the
    /// configured λ).
    pub gain: Option<f64>,
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub lambda: Option<f64>,
    pub control_path: Option<ControlPath>,
    pub seed: Option<u64>,
    pub t_end: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(l) = self.lambda {
            cfg.problem.lambda = l;
        }
        if let Some(p) = self.control_path {
            cfg.control_path = p;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.t_end {
            cfg.integrator.t_end = Some(t);
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.to_string_lossy().into_owned();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRun {
    pub index: usize,
    pub x0: Vec<f64>,
    pub result: Result<Trajectory, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub n: usize,
    pub p: usize,
    pub lambda: f64,
    pub control_path: ControlPath,
    pub seed: u64,
    pub report: VerificationReport,
    pub trajectories: Vec<TrajectoryRun>,
    pub orbits: Vec<OrbitOutcome>,
    pub synth_table: Option<Vec<SynthRow>>,
    /// Failures outside any check (integration errors).
    pub errors: Vec<String>,
}

impl RunOutcome {
    /// Every requested check passed and nothing errored.
    pub fn passed(&self) -> bool {
        self.errors.is_empty() && self.report.checks.iter().all(CheckRecord::passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            EXIT_OK
        } else {
            EXIT_CHECK_FAILED
        }
    }
}

fn failed_record(name: &str, note: String) -> CheckRecord {
    CheckRecord {
        name: name.to_string(),
        index: None,
        status: CheckStatus::Fail,
        measured: f64::NAN,
        expected: 0.0,
        tolerance: 0.0,
        metrics: Vec::new(),
        note: Some(note),
    }
}

fn error_record(name: &str, err: &VerifyError) -> CheckRecord {
    let mut rec = failed_record(name, err.to_string());
    if let VerifyError::NonEquilibrium { norm, .. } = err {
        rec.measured = *norm;
        rec.tolerance = verify::EQUILIBRIUM_TOL;
    }
    rec
}

/// Tensor grid, first coordinate slowest.
pub fn grid_points(grid: &GridConfig) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = grid
        .lo
        .iter()
        .zip(&grid.hi)
        .zip(&grid.steps)
        .map(|((lo, hi), &m)| {
            if m == 1 {
                vec![*lo]
            } else {
                (0..m).map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64).collect()
            }
        })
        .collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}

pub fn synth_table(stab: &Stabilizer, path: ControlPath, points: &[Vec<f64>]) -> Vec<SynthRow> {
    points
        .iter()
        .map(|x| match stab.max_rank_check(x) {
            Ok(r) => SynthRow {
                point: x.clone(),
                in_mrk: r.in_mrk,
                gram_det: r.gram_det,
                control: if r.in_mrk { stab.control(x, path).ok() } else { None },
            },
            Err(_) => SynthRow {
                point: x.clone(),
                in_mrk: false,
                gram_det: f64::NAN,
                control: None,
            },
        })
        .collect()
}

/// Runs everything the config requests. No files are touched.
pub fn execute(cfg: &RunConfig, hooks: &Hooks) -> Result<RunOutcome, ConfigError> {
    let spec = cfg.validate()?;
    let (n, p, lambda) = (spec.dim(), spec.num_constraints(), spec.lambda());
    let stab = Stabilizer::new(spec);
    let path = cfg.control_path;
    let opts = cfg.integrator_options();
    let field = stab.perturbed_field(path).with_gain(hooks.gain.unwrap_or(lambda));

    let trajectories: Vec<TrajectoryRun> = cfg
        .initial_states
        .par_iter()
        .enumerate()
        .map(|(index, x0)| TrajectoryRun {
            index,
            x0: x0.clone(),
            result: integrate(&field, x0, &opts).map_err(|e| e.to_string()),
        })
        .collect();
    let errors: Vec<String> = trajectories
        .iter()
        .filter_map(|t| {
            t.result
                .as_ref()
                .err()
                .map(|e| format!("initial_states[{}]: {e}", t.index))
        })
        .collect();

    let mut report = VerificationReport::default();

    if cfg.wants(CheckName::DecayLaw) {
        let window = DecayWindow {
            f_floor: opts.f_floor,
            horizon: cfg.check_options.decay_horizon,
        };
        for t in &trajectories {
            let rec = match &t.result {
                Ok(traj) => verify::decay_law_check(lambda, traj, window)
                    .unwrap_or_else(|e| error_record(verify::DECAY_LAW, &e)),
                Err(e) => failed_record(verify::DECAY_LAW, format!("integration failed: {e}")),
            };
            report.push(rec.with_index(t.index));
        }
    }

    let orbits: Vec<OrbitOutcome> = trajectories
        .iter()
        .filter_map(|t| t.result.as_ref().ok().map(|traj| classify_orbit(&stab, t.index, traj)))
        .collect();
    if cfg.wants(CheckName::Convergence) {
        let mut rec = convergence_record(&orbits);
        if !errors.is_empty() {
            rec.status = CheckStatus::Fail;
            rec.note = Some(format!("{} initial states could not be integrated", errors.len()));
        }
        report.push(rec);
    }

    let (lo, hi) = cfg.sample_box();
    let co = &cfg.check_options;
    if cfg.wants(CheckName::InvarianceX) || cfg.wants(CheckName::InvariancePerturbed) {
        let seeds = if co.surface_seeds.is_empty() {
            verify::sample_box(
                &lo,
                &hi,
                co.surface_sample_count.unwrap_or(DEFAULT_SURFACE_SAMPLES),
                cfg.seed ^ SURFACE_SEED_SALT,
            )
        } else {
            co.surface_seeds.clone()
        };
        let (samples, failed) = verify::sample_level_set(&stab, &seeds);
        match verify::invariance_check(&stab, path, &samples, &opts) {
            Ok(recs) => {
                for mut rec in recs {
                    let wanted = if rec.name == verify::INVARIANCE_X {
                        cfg.wants(CheckName::InvarianceX)
                    } else {
                        cfg.wants(CheckName::InvariancePerturbed)
                    };
                    if !wanted {
                        continue;
                    }
                    rec.metrics.push(Metric {
                        name: "projection_failures".into(),
                        value: failed.len() as f64,
                    });
                    report.push(rec);
                }
            }
            Err(e) => {
                report.push(error_record(verify::INVARIANCE_X, &e));
                report.push(error_record(verify::INVARIANCE_PERTURBED, &e));
            }
        }
    }

    if cfg.wants(CheckName::LieIdentity) {
        let pts = verify::sample_box(
            &lo,
            &hi,
            co.lie_sample_count.unwrap_or(DEFAULT_LIE_SAMPLES),
            cfg.seed ^ LIE_SEED_SALT,
        );
        report.push(
            verify::lie_identity_check(&stab, path, &pts).unwrap_or_else(|e| error_record(verify::LIE_IDENTITY, &e)),
        );
    }

    if cfg.wants(CheckName::IsolatedPointStability) {
        let iso_opts = opts.with_t_end(co.isolated_t_end.unwrap_or(20.0 / lambda));
        let recs: Vec<CheckRecord> = co
            .isolated_points
            .par_iter()
            .enumerate()
            .map(|(k, ip)| {
                let seed = cfg.seed.wrapping_add(ISOLATED_SEED_SALT + k as u64);
                verify::isolated_point_check(&stab, path, &ip.point, ip.radius, &iso_opts, seed)
                    .unwrap_or_else(|e| error_record(verify::ISOLATED_POINT, &e))
                    .with_index(k)
            })
            .collect();
        for r in recs {
            report.push(r);
        }
    }

    report.sort();
    let synth_table = cfg
        .synth_grid
        .as_ref()
        .map(|g| synth_table(&stab, path, &grid_points(g)));

    Ok(RunOutcome {
        n,
        p,
        lambda,
        control_path: path,
        seed: cfg.seed,
        report,
        trajectories,
        orbits,
        synth_table,
        errors,
    })
}

#[derive(Serialize)]
struct TrajectorySummary<'a> {
    index: usize,
    x0: &'a [f64],
    termination: Option<&'static str>,
    samples: usize,
    t_final: Option<f64>,
    f_initial: Option<f64>,
    f_final: Option<f64>,
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    status: &'static str,
    lambda: f64,
    control_path: ControlPath,
    seed: u64,
    checks: &'a [CheckRecord],
    trajectories: Vec<TrajectorySummary<'a>>,
    orbits: &'a [OrbitOutcome],
    errors: &'a [String],
}

#[derive(Serialize)]
struct FailureDoc<'a> {
    status: &'static str,
    failures: Vec<&'a CheckRecord>,
    errors: &'a [String],
}

impl RunOutcome {
    fn status_str(&self) -> &'static str {
        if self.passed() {
            "pass"
        } else {
            "fail"
        }
    }

    /// The full report as pretty JSON (stable field order).
    pub fn report_json(&self) -> String {
        let doc = ReportDoc {
            status: self.status_str(),
            lambda: self.lambda,
            control_path: self.control_path,
            seed: self.seed,
            checks: &self.report.checks,
            trajectories: self
                .trajectories
                .iter()
                .map(|t| {
                    let ok = t.result.as_ref().ok();
                    TrajectorySummary {
                        index: t.index,
                        x0: &t.x0,
                        termination: ok.map(|tr| tr.termination.as_str()),
                        samples: ok.map_or(0, |tr| tr.samples.len()),
                        t_final: ok.map(|tr| tr.last().t),
                        f_initial: ok.map(|tr| tr.samples[0].f),
                        f_final: ok.map(|tr| tr.last().f),
                        error: t.result.as_ref().err().map(String::as_str),
                    }
                })
                .collect(),
            orbits: &self.orbits,
            errors: &self.errors,
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
        s.push('\n');
        s
    }

    /// Machine-readable failure list (also emitted on success, empty).
    pub fn failures_json(&self) -> String {
        let doc = FailureDoc {
            status: self.status_str(),
            failures: self.report.failures().collect(),
            errors: &self.errors,
        };
        serde_json::to_string(&doc).expect("failures serialize")
    }

    /// Writes CSV trajectories, the synthesis table and the JSON report
    /// into `dir`; returns the written paths in order.
    pub fn write_artifacts(&self, dir: &Path, formats: &[Format]) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        if formats.contains(&Format::Csv) {
            for t in &self.trajectories {
                if let Ok(traj) = &t.result {
                    let path = dir.join(format!("trajectory_{:03}.csv", t.index));
                    emit::emit_trajectory_csv(&path, self.n, self.p, &traj.samples)?;
                    written.push(path);
                }
            }
            if let Some(rows) = &self.synth_table {
                let path = dir.join("synth.csv");
                emit::write_synth_csv(BufWriter::new(fs::File::create(&path)?), self.n, rows)?;
                written.push(path);
            }
        }
        if formats.contains(&Format::Json) {
            let path = dir.join("report.json");
            let mut f = BufWriter::new(fs::File::create(&path)?);
            f.write_all(self.report_json().as_bytes())?;
            f.flush()?;
            written.push(path);
        }
        Ok(written)
    }
}

/// One line per check for humans.
pub fn summary_lines(outcome: &RunOutcome) -> Vec<String> {
    let mut lines: Vec<String> = outcome
        .report
        .checks
        .iter()
        .map(|c| {
            let name = match c.index {
                Some(i) => format!("{}[{i}]", c.name),
                None => c.name.clone(),
            };
            let status = match c.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Inconclusive => "inconclusive",
            };
            let mut line = format!(
                "{status:<12} {name:<32} measured={:e} expected={:e} tol={:e}",
                c.measured, c.expected, c.tolerance
            );
            if let Some(note) = &c.note {
                line.push_str(&format!("  ({note})"));
            }
            line
        })
        .collect();
    for t in &outcome.trajectories {
        match &t.result {
            Ok(tr) => lines.push(format!(
                "trajectory[{}] {} t={} F={:e}",
                t.index,
                tr.termination.as_str(),
                tr.last().t,
                tr.last().f
            )),
            Err(e) => lines.push(format!("trajectory[{}] error: {e}", t.index)),
        }
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::builtin_example;

    #[test]
    fn grid_enumeration() {
        let g = GridConfig {
            lo: vec![0.0, -1.0],
            hi: vec![1.0, 1.0],
            steps: vec![2, 3],
        };
        let pts = grid_points(&g);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec![0.0, -1.0]);
        assert_eq!(pts[1], vec![0.0, 0.0]);
        assert_eq!(pts[5], vec![1.0, 1.0]);
        let single = GridConfig {
            lo: vec![0.5],
            hi: vec![1.0],
            steps: vec![1],
        };
        assert_eq!(grid_points(&single), vec![vec![0.5]]);
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = builtin_example("paper-ii").unwrap();
        Overrides {
            lambda: Some(2.0),
            control_path: Some(ControlPath::Gram),
            seed: Some(9),
            t_end: Some(3.0),
            out: Some("elsewhere".into()),
        }
        .apply(&mut cfg);
        assert_eq!(cfg.problem.lambda, 2.0);
        assert_eq!(cfg.control_path, ControlPath::Gram);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.integrator_options().t_end, 3.0);
        assert_eq!(cfg.output.dir, "elsewhere");
    }

    #[test]
    fn paper_ii_synth_table_marks_origin() {
        let mut cfg = builtin_example("paper-ii").unwrap();
        cfg.checks.clear();
        cfg.initial_states.clear();
        let out = execute(&cfg, &Hooks::default()).unwrap();
        let rows = out.synth_table.clone().unwrap();
        assert_eq!(rows.len(), 441);
        let origin = rows.iter().find(|r| r.point == vec![0.0, 0.0]).unwrap();
        assert!(!origin.in_mrk && origin.control.is_none());
        assert_eq!(rows.iter().filter(|r| !r.in_mrk).count(), 1);
        assert!(out.passed());
    }
}
