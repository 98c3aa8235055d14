use proptest::prelude::*;
use stab_core::linalg::SquareMatrix;
use stab_core::synth::{ControlPath, Guards, ProblemSpec, Stabilizer};

#[derive(Debug, Clone)]
struct Case {
    spec: ProblemSpec,
    point: Vec<f64>,
}

fn quadratic(n: usize, c: &[f64]) -> String {
    // c holds n(n+1)/2 quadratic, n linear and one constant coefficient
    let mut terms = Vec::new();
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            terms.push(format!("({})*x{}*x{}", c[k], i + 1, j + 1));
            k += 1;
        }
    }
    for i in 0..n {
        terms.push(format!("({})*x{}", c[k], i + 1));
        k += 1;
    }
    terms.push(format!("({})", c[k]));
    terms.join(" + ")
}

fn coeff_count(n: usize) -> usize {
    n * (n + 1) / 2 + n + 1
}

fn case() -> impl Strategy<Value = Case> {
    (2usize..=6)
        .prop_flat_map(|n| (Just(n), 1..=n))
        .prop_flat_map(|(n, p)| {
            let m = coeff_count(n);
            (
                Just(n),
                prop::collection::vec(prop::collection::vec(-2.0f64..2.0, m), n),
                prop::collection::vec(prop::collection::vec(-2.0f64..2.0, m), p),
                prop::collection::vec(-1.0f64..1.0, p),
                0.1f64..3.0,
                prop::collection::vec(-1.5f64..1.5, n),
            )
        })
        .prop_map(|(n, field, cons, targets, lambda, point)| {
            let names: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
            let vars: Vec<&str> = names.iter().map(String::as_str).collect();
            let field: Vec<String> = field.iter().map(|c| quadratic(n, c)).collect();
            let fr: Vec<&str> = field.iter().map(String::as_str).collect();
            let cons: Vec<String> = cons.iter().map(|c| quadratic(n, c)).collect();
            let cr: Vec<(&str, f64)> = cons.iter().map(String::as_str).zip(targets).collect();
            let spec = ProblemSpec::from_sources(&vars, &fr, &cr, lambda, Guards::default()).unwrap();
            Case { spec, point }
        })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn well_conditioned(s: &Stabilizer, x: &[f64]) -> bool {
    // keep away from the rank boundary, where both paths lose digits together
    let r = s.max_rank_check(x).unwrap();
    r.in_mrk && r.gram_det > 1e-6 * r.threshold / s.spec().guards().rank_tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn hodge_and_gram_agree(c in case()) {
        let s = Stabilizer::new(c.spec);
        prop_assume!(well_conditioned(&s, &c.point));
        let a = s.control_hodge(&c.point).unwrap();
        let b = s.control_gram(&c.point).unwrap();
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        prop_assert!(inf_norm(&diff) <= 1e-9 * inf_norm(&b).max(1e-300), "{:?} vs {:?}", a, b);
    }

    #[test]
    fn lie_identity_holds(c in case()) {
        let s = Stabilizer::new(c.spec);
        prop_assume!(well_conditioned(&s, &c.point));
        let lambda = s.lambda();
        let v = s.perturbed_at(&c.point, ControlPath::Hodge).unwrap();
        let res = s.residuals(&c.point).unwrap();
        let lie = s.lie_identity_residuals(&c.point, &v, lambda).unwrap();
        let scale = inf_norm(&s.field_at(&c.point).unwrap()).max(1.0)
            * inf_norm(&s.gradients_at(&c.point).unwrap().concat()).max(1.0);
        for (l, r) in lie.iter().zip(&res) {
            prop_assert!(l.abs() <= 1e-9 * (1.0 + (lambda * r).abs()) * scale, "{} at {:?}", l, c.point);
        }
    }

    #[test]
    fn control_lies_in_gradient_span(c in case()) {
        let s = Stabilizer::new(c.spec);
        prop_assume!(well_conditioned(&s, &c.point));
        let u = s.control_hodge(&c.point).unwrap();
        let g = s.gradients_at(&c.point).unwrap();
        let rhs: Vec<f64> = g.iter().map(|gi| gi.iter().zip(&u).map(|(a, b)| a * b).sum()).collect();
        let coef = SquareMatrix::gram(&g).lu().solve(&rhs).unwrap();
        let mut rest = u.clone();
        for (cj, gj) in coef.iter().zip(&g) {
            for (r, v) in rest.iter_mut().zip(gj) {
                *r -= cj * v;
            }
        }
        prop_assert!(inf_norm(&rest) <= 1e-9 * inf_norm(&u).max(1.0));
    }

    #[test]
    fn control_is_affine_in_gain(c in case(), g in 0.1f64..5.0) {
        let s = Stabilizer::new(c.spec);
        prop_assume!(well_conditioned(&s, &c.point));
        let u0 = s.control_hodge_with_gain(&c.point, 0.0).unwrap();
        let u1 = s.control_hodge_with_gain(&c.point, g).unwrap();
        let u2 = s.control_hodge_with_gain(&c.point, 2.0 * g).unwrap();
        let scale = inf_norm(&u2).max(inf_norm(&u0)).max(1.0);
        for ((a, b), z) in u1.iter().zip(&u2).zip(&u0) {
            prop_assert!(((b - z) - 2.0 * (a - z)).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn wedge_norm_equals_gram_determinant(c in case()) {
        let s = Stabilizer::new(c.spec);
        let g = s.gradients_at(&c.point).unwrap();
        let det = SquareMatrix::gram(&g).det();
        let hadamard: f64 = g.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>()).product();
        prop_assert!((s.wedge_norm_sq(&c.point).unwrap() - det).abs() <= 1e-11 * hadamard.max(1e-300));
    }

    #[test]
    fn theta_is_reciprocal_to_gradients(c in case()) {
        let s = Stabilizer::new(c.spec);
        prop_assume!(well_conditioned(&s, &c.point));
        let n = s.dim();
        let g = s.gradients_at(&c.point).unwrap();
        let w2 = s.wedge_norm_sq(&c.point).unwrap();
        let hadamard: f64 = g.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>()).product();
        for i in 0..g.len() {
            let th = s.theta(&c.point, i).unwrap();
            for (k, gk) in g.iter().enumerate() {
                let dot: f64 = gk.iter().zip(&th).map(|(a, b)| a * b).sum();
                let want = if k == i {
                    if (n - (i + 1)) % 2 == 0 { w2 } else { -w2 }
                } else {
                    0.0
                };
                prop_assert!((dot - want).abs() <= 1e-10 * hadamard.max(1.0), "i={} k={}: {} vs {}", i, k, dot, want);
            }
        }
    }
}
