//! Ready-made run configurations for the three planar worked examples.

use stab_core::problems::{self, BUILTIN_NAMES};

use crate::config::{
    CheckName, CheckOptions, ConstraintConfig, GridConfig, IntegratorConfig, IsolatedPointConfig, OutputConfig,
    ProblemConfig, RunConfig,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown example `{0}` (expected one of: paper-i, paper-ii, paper-iii)")]
pub struct UnknownExample(pub String);

fn pts(v: &[[f64; 2]]) -> Vec<Vec<f64>> {
    v.iter().map(|p| p.to_vec()).collect()
}

/// The exact specification of a built-in example with `λ = 1`, bounded
/// starting points and the checks that apply to it.
pub fn builtin_example(name: &str) -> Result<RunConfig, UnknownExample> {
    let constraints = problems::constraints_of(name).ok_or_else(|| UnknownExample(name.into()))?;
    let problem = ProblemConfig {
        variables: problems::VARS.iter().map(|s| s.to_string()).collect(),
        field: problems::FIELD.iter().map(|s| s.to_string()).collect(),
        constraints: constraints
            .iter()
            .map(|(expr, target)| ConstraintConfig {
                expr: expr.to_string(),
                target: *target,
            })
            .collect(),
        lambda: 1.0,
        guards: None,
    };
    let mut checks = vec![
        CheckName::DecayLaw,
        CheckName::InvarianceX,
        CheckName::InvariancePerturbed,
        CheckName::LieIdentity,
        CheckName::Convergence,
    ];
    let mut check_options = CheckOptions {
        decay_horizon: Some(5.0),
        ..CheckOptions::default()
    };
    let initial_states = match name {
        "paper-i" => {
            // seeds project to x = 0 with |y| < 1, where ẏ = y² − 1 stays bounded
            check_options.surface_seeds = pts(&[[0.3, -0.9], [0.1, -0.5], [-0.2, 0.0], [0.4, 0.5], [0.2, 0.9]]);
            pts(&[[1.0, 0.0], [0.5, 0.0], [-0.8, 0.3], [0.2, -0.5]])
        }
        "paper-ii" => pts(&[[0.5, 0.5], [1.5, 0.2], [-0.3, -1.2], [0.1, 0.1], [-1.8, 1.1]]),
        _ => {
            check_options.surface_seeds = pts(&[[0.1, 0.8], [-0.3, 1.2], [0.2, -0.7], [-0.1, -1.4]]);
            check_options.isolated_points = vec![
                IsolatedPointConfig {
                    point: vec![0.0, 1.0],
                    radius: 0.5,
                },
                IsolatedPointConfig {
                    point: vec![0.0, -1.0],
                    radius: 0.5,
                },
            ];
            checks.push(CheckName::IsolatedPointStability);
            pts(&[
                [0.5, 0.5],
                [-0.5, 0.5],
                [0.5, -0.5],
                [-0.5, -0.5],
                [0.9, 1.9],
                [0.1, 0.2],
            ])
        }
    };
    debug_assert!(BUILTIN_NAMES.contains(&name));
    Ok(RunConfig {
        problem,
        integrator: IntegratorConfig {
            t_end: Some(20.0),
            ..IntegratorConfig::default()
        },
        initial_states,
        checks,
        check_options,
        synth_grid: Some(GridConfig {
            lo: vec![-2.0, -2.0],
            hi: vec![2.0, 2.0],
            steps: vec![21, 21],
        }),
        seed: 0,
        control_path: Default::default(),
        output: OutputConfig {
            dir: format!("out/{name}"),
            ..OutputConfig::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtins_validate() {
        for name in BUILTIN_NAMES {
            let cfg = builtin_example(name).unwrap();
            let spec = cfg.validate().unwrap();
            assert_eq!(spec, problems::builtin(name, 1.0).unwrap());
        }
    }

    #[test]
    fn unknown_name() {
        assert_eq!(builtin_example("paper-iv"), Err(UnknownExample("paper-iv".into())));
    }
}
