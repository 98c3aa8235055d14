//! Acceptance gate: one line per criterion, nonzero exit if any fails.
//!
//! Oracles live here, apart from the library: closed forms transcribed from
//! the worked examples, a pivoted elimination determinant, and Richardson
//! central differences.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stab::builtin_example;
use stab_core::exterior::{grade_of, Multivector};
use stab_core::flow::{integrate, IntegratorOptions, Termination};
use stab_core::problems::{paper_i, paper_ii, paper_iii};
use stab_core::symexpr::{differentiate, BinaryOp, ScalarExpr, UnaryOp};
use stab_core::synth::{ControlPath, Guards, ProblemSpec, Stabilizer};
use stab_core::verify::{self, CheckStatus, DecayWindow};

const LAMBDAS: [f64; 3] = [0.5, 1.0, 2.0];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn grid21() -> Vec<(f64, f64)> {
    let axis: Vec<f64> = (0..21).map(|k| -2.0 + 0.2 * k as f64).collect();
    axis.iter().flat_map(|&x| axis.iter().map(move |&y| (x, y))).collect()
}

fn inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `‖a − b‖∞ / ‖b‖∞`, or `‖a‖∞` when the reference vanishes.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nb = inf(b);
    if nb == 0.0 {
        inf(a)
    } else {
        inf(&d) / nb
    }
}

fn c1_line_control() -> Verdict {
    let mut worst = 0.0f64;
    for lambda in LAMBDAS {
        let s = Stabilizer::new(paper_i(lambda));
        for (x, y) in grid21() {
            let got = s.control_hodge(&[x, y]).unwrap();
            let want = [-x * (x * x + y * y - 1.0) - lambda * x, 0.0];
            worst = worst.max(rel_err(&got, &want));
        }
    }
    verdict(
        worst <= 1e-12,
        format!("max rel err {worst:.2e} (tol 1e-12), 3 x 441 points"),
    )
}

fn c2_circle_control() -> Verdict {
    let mut worst = 0.0f64;
    let mut count = 0;
    for lambda in LAMBDAS {
        let s = Stabilizer::new(paper_ii(lambda));
        for (x, y) in grid21() {
            let r2 = x * x + y * y;
            if r2.sqrt() < 0.1 {
                continue;
            }
            let k = (r2 - 1.0) * (2.0 * x * x + 2.0 * y + lambda) / (2.0 * r2);
            let want = [-x * k, -y * k];
            worst = worst.max(rel_err(&s.control_hodge(&[x, y]).unwrap(), &want));
            count += 1;
        }
    }
    verdict(
        worst <= 1e-10,
        format!("max rel err {worst:.2e} (tol 1e-10), {count} points"),
    )
}

fn c3_intersection_field() -> Verdict {
    let mut worst = 0.0f64;
    let mut count = 0;
    for lambda in LAMBDAS {
        let s = Stabilizer::new(paper_iii(lambda));
        for (x, y) in grid21() {
            if y.abs() < 0.1 {
                continue;
            }
            let want = [-lambda * x, lambda * (x * x - y * y + 1.0) / (2.0 * y)];
            worst = worst.max(rel_err(&s.perturbed_at(&[x, y], ControlPath::Hodge).unwrap(), &want));
            count += 1;
        }
    }
    verdict(
        worst <= 1e-10,
        format!("max rel err {worst:.2e} (tol 1e-10), {count} points"),
    )
}

fn c4_decay_law() -> Verdict {
    let mut worst_slope = 0.0f64;
    let mut worst_point = 0.0f64;
    let mut runs = 0;
    let mut failures = Vec::new();
    for name in ["paper-i", "paper-ii", "paper-iii"] {
        let cfg = builtin_example(name).unwrap();
        for lambda in LAMBDAS {
            let spec = cfg.validate().unwrap().with_lambda(lambda).unwrap();
            let s = Stabilizer::new(spec);
            let field = s.perturbed_field(ControlPath::Hodge);
            for (k, x0) in cfg.initial_states.iter().enumerate() {
                let traj = integrate(&field, x0, &IntegratorOptions::default().with_t_end(5.0)).unwrap();
                if traj.termination == Termination::EscapedRMax {
                    continue;
                }
                let rec = verify::decay_law_check(
                    lambda,
                    &traj,
                    DecayWindow {
                        horizon: Some(5.0),
                        ..DecayWindow::default()
                    },
                )
                .unwrap();
                worst_slope = worst_slope.max((rec.measured + 2.0 * lambda).abs() / (2.0 * lambda));
                worst_point = worst_point.max(rec.metric_value("pointwise_rel_err").unwrap());
                if !rec.passed() {
                    failures.push(format!("{name} lambda={lambda} x0[{k}]"));
                }
                runs += 1;
            }
        }
    }
    verdict(
        failures.is_empty() && worst_slope <= 1e-6 && worst_point <= 1e-6,
        format!(
            "{runs} runs, max slope rel err {worst_slope:.2e}, max pointwise rel err {worst_point:.2e} (tol 1e-6){}",
            if failures.is_empty() {
                String::new()
            } else {
                format!(", failing: {failures:?}")
            }
        ),
    )
}

fn quadratic(rng: &mut ChaCha8Rng, n: usize) -> String {
    let mut terms = Vec::new();
    for i in 0..n {
        for j in i..n {
            terms.push(format!("({})*x{}*x{}", rng.gen_range(-2.0..2.0), i + 1, j + 1));
        }
        terms.push(format!("({})*x{}", rng.gen_range(-2.0..2.0), i + 1));
    }
    terms.push(format!("({})", rng.gen_range(-2.0..2.0)));
    terms.join(" + ")
}

fn random_spec(rng: &mut ChaCha8Rng, n: usize, p: usize) -> ProblemSpec {
    let names: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
    let vars: Vec<&str> = names.iter().map(String::as_str).collect();
    let field: Vec<String> = (0..n).map(|_| quadratic(rng, n)).collect();
    let fr: Vec<&str> = field.iter().map(String::as_str).collect();
    let cons: Vec<(String, f64)> = (0..p).map(|_| (quadratic(rng, n), rng.gen_range(-1.0..1.0))).collect();
    let cr: Vec<(&str, f64)> = cons.iter().map(|(s, t)| (s.as_str(), *t)).collect();
    ProblemSpec::from_sources(&vars, &fr, &cr, rng.gen_range(0.1..3.0), Guards::default()).unwrap()
}

/// A random spec with `count` random maximal-rank points.
fn random_case(rng: &mut ChaCha8Rng, n: usize, p: usize, count: usize) -> (Stabilizer, Vec<Vec<f64>>) {
    let s = Stabilizer::new(random_spec(rng, n, p));
    let mut pts = Vec::with_capacity(count);
    while pts.len() < count {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        if s.max_rank_check(&x).unwrap().in_mrk {
            pts.push(x);
        }
    }
    (s, pts)
}

fn shapes() -> Vec<(usize, usize)> {
    (2..=6).flat_map(|n| (1..=n).map(move |p| (n, p))).collect()
}

fn c5_oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shapes = shapes();
    let mut worst = 0.0f64;
    let mut points = 0;
    let mut k = 0;
    while points < 1000 {
        let (n, p) = shapes[k % shapes.len()];
        k += 1;
        let (s, pts) = random_case(&mut rng, n, p, 5);
        for x in &pts {
            let a = s.control_hodge(x).unwrap();
            let b = s.control_gram(x).unwrap();
            worst = worst.max(rel_err(&a, &b));
            points += 1;
        }
    }
    verdict(
        worst <= 1e-9,
        format!("{points} points over {k} specs, n in 2..=6, p in 1..=n; max rel err {worst:.2e} (tol 1e-9)"),
    )
}

fn c6_lie_identity() -> Verdict {
    let mut worst = 0.0f64;
    let mut used = 0.0;
    for lambda in LAMBDAS {
        for spec in [paper_i(lambda), paper_ii(lambda), paper_iii(lambda)] {
            let s = Stabilizer::new(spec);
            let pts = verify::sample_box(&[-2.0, -2.0], &[2.0, 2.0], 1000, 6);
            let rec = verify::lie_identity_check(&s, ControlPath::Hodge, &pts).unwrap();
            worst = worst.max(rec.measured);
            used += rec.metric_value("points").unwrap();
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let shapes = shapes();
    for k in 0..200 {
        let (n, p) = shapes[k % shapes.len()];
        let (s, pts) = random_case(&mut rng, n, p, 5);
        let rec = verify::lie_identity_check(&s, ControlPath::Hodge, &pts).unwrap();
        worst = worst.max(rec.measured);
        used += rec.metric_value("points").unwrap();
    }
    verdict(
        worst <= 1e-9,
        format!("{used} points (examples x 3 gains, 200 random specs); max normalized residual {worst:.2e} (tol 1e-9)"),
    )
}

fn c7_invariance() -> Verdict {
    let mut worst = 0.0f64;
    let mut worst_proj = 0.0f64;
    let mut samples = 0;
    let mut bad = Vec::new();
    for name in ["paper-i", "paper-ii", "paper-iii"] {
        let cfg = builtin_example(name).unwrap();
        let s = Stabilizer::new(cfg.validate().unwrap());
        let seeds = if cfg.check_options.surface_seeds.is_empty() {
            verify::sample_box(&[-2.0, -2.0], &[2.0, 2.0], 32, 7)
        } else {
            cfg.check_options.surface_seeds.clone()
        };
        let (pts, _) = verify::sample_level_set(&s, &seeds);
        for p in &pts {
            worst_proj = worst_proj.max(inf(&s.residuals(p).unwrap()));
        }
        samples += pts.len();
        for rec in verify::invariance_check(&s, ControlPath::Hodge, &pts, &IntegratorOptions::default()).unwrap() {
            worst = worst.max(rec.measured);
            if rec.status != CheckStatus::Pass {
                bad.push(format!("{name}/{}", rec.name));
            }
        }
    }
    verdict(
        bad.is_empty() && worst <= 1e-9 && worst_proj <= 1e-12,
        format!(
            "{samples} projected samples (max projection residual {worst_proj:.2e}); max residual after t=1 under X and X+X0: {worst:.2e} (tol 1e-9){}",
            if bad.is_empty() { String::new() } else { format!(", not passing: {bad:?}") }
        ),
    )
}

fn c8_isolated_points() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    let s = Stabilizer::new(paper_iii(1.0));
    for (k, p) in [[0.0, 1.0], [0.0, -1.0]].iter().enumerate() {
        let rec = verify::isolated_point_check(
            &s,
            ControlPath::Hodge,
            p,
            0.5,
            &IntegratorOptions::default().with_t_end(20.0),
            80 + k as u64,
        )
        .unwrap();
        ok &= rec.passed();
        notes.push(format!("{p:?}: {:?}", rec.status));
    }
    let mut worst = 0.0f64;
    for lambda in LAMBDAS {
        let s = Stabilizer::new(paper_iii(lambda));
        let field = s.perturbed_field(ControlPath::Hodge);
        for x0 in [[0.5, 0.5], [-0.5, 0.5], [0.5, -0.5], [-0.5, -0.5]] {
            let traj = integrate(&field, &x0, &IntegratorOptions::default().with_t_end(20.0 / lambda)).unwrap();
            let end = &traj.last().state;
            let target = [0.0, x0[1].signum()];
            worst = worst.max(((end[0] - target[0]).powi(2) + (end[1] - target[1]).powi(2)).sqrt());
        }
    }
    ok &= worst <= 1e-6;
    verdict(
        ok,
        format!(
            "{}; max end distance at t=20/lambda {worst:.2e} (tol 1e-6)",
            notes.join(", ")
        ),
    )
}

fn random_homogeneous(rng: &mut ChaCha8Rng, n: usize, grade: usize) -> Multivector {
    let coeffs = (0..1u32 << n)
        .map(|b| {
            if grade_of(b) == grade {
                rng.gen_range(-2.0..2.0)
            } else {
                0.0
            }
        })
        .collect();
    Multivector::from_coeffs(n, coeffs).unwrap()
}

fn l1(m: &Multivector) -> f64 {
    m.coeffs().iter().map(|c| c.abs()).sum()
}

fn det(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut d = 1.0;
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[piv][c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            a.swap(piv, c);
            d = -d;
        }
        d *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    d
}

fn c9_exterior_suite() -> Verdict {
    const CASES: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut hodge_fail, mut anti_fail, mut gram_fail) = (0, 0, 0);
    for _ in 0..CASES {
        let n = rng.gen_range(1..=8);
        let k = rng.gen_range(0..=n);
        let a = random_homogeneous(&mut rng, n, k);
        let sign = if (k * (n - k)) % 2 == 0 { 1.0 } else { -1.0 };
        if a.hodge().hodge() != a.scale(sign) {
            hodge_fail += 1;
        }
    }
    for _ in 0..CASES {
        let n = rng.gen_range(1..=8);
        let (j, k) = (rng.gen_range(0..=n), rng.gen_range(0..=n));
        let a = random_homogeneous(&mut rng, n, j);
        let b = random_homogeneous(&mut rng, n, k);
        let sign = if (j * k) % 2 == 0 { 1.0 } else { -1.0 };
        let (ab, ba) = (a.wedge(&b).unwrap(), b.wedge(&a).unwrap());
        let tol = 1e-12 * l1(&a) * l1(&b);
        if ab
            .coeffs()
            .iter()
            .zip(ba.coeffs())
            .any(|(x, y)| (x - sign * y).abs() > tol)
        {
            anti_fail += 1;
        }
    }
    for _ in 0..CASES {
        let n = rng.gen_range(1..=8);
        let p = rng.gen_range(1..=n);
        let vs: Vec<Vec<f64>> = (0..p)
            .map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let em: Vec<Multivector> = vs.iter().map(|v| Multivector::vector_embed(v).unwrap()).collect();
        let w = Multivector::wedge_all(n, em.iter()).unwrap();
        let gram: Vec<Vec<f64>> = vs
            .iter()
            .map(|a| vs.iter().map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum()).collect())
            .collect();
        let hadamard: f64 = vs.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>()).product();
        if (w.norm_sq() - det(gram)).abs() > 1e-11 * hadamard {
            gram_fail += 1;
        }
    }
    verdict(
        hodge_fail + anti_fail + gram_fail == 0,
        format!(
            "{CASES} cases each, n <= 8: double-Hodge failures {hodge_fail}, anticommutativity failures {anti_fail}, Gram-norm failures {gram_fail}"
        ),
    )
}

fn random_expr(rng: &mut ChaCha8Rng, depth: usize) -> ScalarExpr {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.6) {
            ScalarExpr::Variable(rng.gen_range(0..3))
        } else {
            ScalarExpr::Constant(rng.gen_range(-30..=30) as f64 / 10.0)
        };
    }
    let sub = |rng: &mut ChaCha8Rng| random_expr(rng, depth - 1);
    match rng.gen_range(0..10) {
        0 => ScalarExpr::unary(UnaryOp::Neg, sub(rng)),
        1 => {
            let op = [
                UnaryOp::Sin,
                UnaryOp::Cos,
                UnaryOp::Exp,
                UnaryOp::Log,
                UnaryOp::Sqrt,
                UnaryOp::Tanh,
            ][rng.gen_range(0..6)];
            ScalarExpr::unary(op, sub(rng))
        }
        2 | 3 => ScalarExpr::binary(BinaryOp::Add, sub(rng), sub(rng)),
        4 => ScalarExpr::binary(BinaryOp::Sub, sub(rng), sub(rng)),
        5 | 6 => ScalarExpr::binary(BinaryOp::Mul, sub(rng), sub(rng)),
        7 => ScalarExpr::binary(BinaryOp::Div, sub(rng), sub(rng)),
        8 => ScalarExpr::binary(
            BinaryOp::Pow,
            sub(rng),
            ScalarExpr::Constant(rng.gen_range(1..=4) as f64),
        ),
        _ => {
            let base = ScalarExpr::binary(
                BinaryOp::Add,
                ScalarExpr::Constant(1.5),
                ScalarExpr::Variable(rng.gen_range(0..3)),
            );
            ScalarExpr::binary(BinaryOp::Pow, base, sub(rng))
        }
    }
}

/// Richardson-extrapolated central difference with its own error estimate.
fn central(e: &ScalarExpr, x: &[f64], k: usize) -> Option<(f64, f64)> {
    let d = |h: f64| -> Option<f64> {
        let (mut p, mut m) = (x.to_vec(), x.to_vec());
        p[k] += h;
        m[k] -= h;
        Some((e.eval(&p).ok()? - e.eval(&m).ok()?) / (2.0 * h))
    };
    let (d1, d2) = (d(1e-3)?, d(5e-4)?);
    let r = (4.0 * d2 - d1) / 3.0;
    Some((r, (r - d2).abs()))
}

fn c10_derivative_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    let mut tested = 0;
    let mut drawn = 0;
    let mut failures = Vec::new();
    while tested < 200 {
        drawn += 1;
        let e = random_expr(&mut rng, 4);
        if e.is_constant() {
            continue;
        }
        // a safe point: defined, moderate, derivative not near zero and the
        // difference quotient settled to far below the tolerance
        let mut found = None;
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.2..1.5)).collect();
            let k = rng.gen_range(0..3);
            let Ok(f) = e.eval(&x) else { continue };
            let Some((r, est)) = central(&e, &x, k) else { continue };
            if f.abs() < 1e6 && r.abs() >= 1e-3 && est <= 1e-9 * r.abs() {
                found = Some((x, k, r));
                break;
            }
        }
        let Some((x, k, r)) = found else { continue };
        let d = match differentiate(&e, k).eval(&x) {
            Ok(d) => d,
            Err(err) => {
                failures.push(format!("{e}: {err}"));
                tested += 1;
                continue;
            }
        };
        let rel = (d - r).abs() / r.abs();
        worst = worst.max(rel);
        if rel > 1e-6 {
            failures.push(format!("{e} at {x:?}: {d} vs {r}"));
        }
        tested += 1;
    }
    verdict(
        failures.is_empty(),
        format!(
            "{tested} expressions ({drawn} drawn), max rel err {worst:.2e} (tol 1e-6){}",
            if failures.is_empty() {
                String::new()
            } else {
                format!(", failures: {failures:?}")
            }
        ),
    )
}

fn main() -> ExitCode {
    type Criterion = (u32, &'static str, fn() -> Verdict, Option<Duration>);
    let criteria: [Criterion; 10] = [
        (
            1,
            "closed-form control, line",
            c1_line_control,
            Some(Duration::from_secs(1)),
        ),
        (2, "closed-form control, circle", c2_circle_control, None),
        (3, "perturbed field, intersection", c3_intersection_field, None),
        (4, "decay law", c4_decay_law, Some(Duration::from_secs(10))),
        (
            5,
            "Hodge vs Gram oracle",
            c5_oracle_equivalence,
            Some(Duration::from_secs(30)),
        ),
        (6, "Lie identity", c6_lie_identity, None),
        (7, "invariance of the level set", c7_invariance, None),
        (8, "isolated-point stability", c8_isolated_points, None),
        (9, "exterior-algebra laws", c9_exterior_suite, None),
        (
            10,
            "symbolic derivative vs finite differences",
            c10_derivative_oracle,
            None,
        ),
    ];
    let mut all = true;
    for (id, title, run, limit) in criteria {
        let start = Instant::now();
        let v = run();
        let took = start.elapsed();
        let in_time = limit.map_or(true, |l| took < l);
        let pass = v.pass && in_time;
        all &= pass;
        let budget = limit.map_or(String::new(), |l| format!(" / limit {:.0}s", l.as_secs_f64()));
        println!(
            "criterion {id:>2} {}  {title}: {} [{:.3}s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64()
        );
    }
    if all {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
