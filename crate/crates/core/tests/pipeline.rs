use lcsvr_core::baselines::{nnls, pava_isotonic, sols};
use lcsvr_core::experiments::{
    kfold_indices, mae, rmse, run_scenario, NoiseKind, NoiseSpec, Scenario, ScenarioConfig, Tuning,
};
use lcsvr_core::presets::project_simplex;
use lcsvr_core::{fit, Execution, FittedModel, Hyperparameters, Matrix, PresetKind, TrainingSet};
use proptest::prelude::*;

fn matrix(n: usize, p: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0f64..1.0, n * p)
        .prop_map(move |d| Matrix::from_row_major(n, p, d).unwrap())
}

proptest! {
    #[test]
    fn simplex_projection_is_idempotent_and_feasible(v in prop::collection::vec(-3.0f64..3.0, 1..12)) {
        let w = project_simplex(&v);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let again = project_simplex(&w);
        for (a, b) in w.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn simplex_projection_is_nearest_vertex_mix(v in prop::collection::vec(-2.0f64..2.0, 2..6)) {
        let w = project_simplex(&v);
        let d = |u: &[f64]| u.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let best = d(&w);
        for k in 0..v.len() {
            let mut e = vec![0.0; v.len()];
            e[k] = 1.0;
            prop_assert!(best <= d(&e) + 1e-12);
        }
    }

    #[test]
    fn pava_is_monotone_and_mean_preserving(y in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let fit = pava_isotonic(&y);
        prop_assert!(fit.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        prop_assert!((mean(&fit) - mean(&y)).abs() < 1e-9);
        let again = pava_isotonic(&fit);
        for (a, b) in fit.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nnls_and_sols_stay_in_their_sets(x in matrix(12, 4), y in prop::collection::vec(-1.0f64..1.0, 12)) {
        let b = nnls(&x, &y).unwrap();
        prop_assert!(b.iter().all(|&v| v >= 0.0));
        let s = sols(&x, &y).unwrap();
        prop_assert!(s.iter().all(|&v| v >= 0.0));
        prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn model_text_round_trips(x in matrix(8, 3), y in prop::collection::vec(-1.0f64..1.0, 8), c in 0.1f64..10.0) {
        let ts = TrainingSet::new(x.clone(), y);
        let model = fit(ts, PresetKind::Nnsvr, Hyperparameters::new(c, 0.5)).unwrap();
        let back = FittedModel::from_text(&model.to_text()).unwrap();
        prop_assert_eq!(back.beta(), model.beta());
        prop_assert_eq!(back.solution.beta0, model.solution.beta0);
        prop_assert_eq!(back.solution.epsilon, model.solution.epsilon);
        prop_assert_eq!(back.predict(&x).unwrap(), model.predict(&x).unwrap());
    }

    #[test]
    fn kfold_partitions_the_samples(n in 2usize..60, folds in 2usize..6, seed in any::<u64>()) {
        let parts = kfold_indices(n, folds, seed);
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn metrics_are_non_negative(a in prop::collection::vec(-9.0f64..9.0, 1..20)) {
        let b: Vec<f64> = a.iter().rev().copied().collect();
        prop_assert!(rmse(&a, &b).unwrap() >= 0.0);
        prop_assert!(mae(&a, &b).unwrap() >= 0.0);
        prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
    }
}

fn small_config(scenario: Scenario, execution: Execution) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::defaults(scenario);
    cfg.n = 40;
    cfg.p = if scenario == Scenario::Isotonic {
        40
    } else {
        5
    };
    cfg.reps = 4;
    cfg.seed = 11;
    cfg.execution = execution;
    cfg.noise = Some(NoiseSpec {
        kind: NoiseKind::Laplacian,
        snr_db: 15.0,
    });
    if scenario != Scenario::Trajectory {
        let (c_grid, nu_grid) = scenario.cv_grid(3);
        cfg.tuning = Tuning::CrossValidated {
            c_grid,
            nu_grid,
            folds: 3,
        };
    }
    cfg
}

#[test]
fn execution_modes_produce_identical_artifacts() {
    for scenario in [
        Scenario::Nonneg,
        Scenario::Simplex,
        Scenario::Isotonic,
        Scenario::Trajectory,
    ] {
        let seq = run_scenario(&small_config(scenario, Execution::Sequential)).unwrap();
        let par = run_scenario(&small_config(scenario, Execution::Parallel)).unwrap();
        assert_eq!(seq.results_csv(), par.results_csv(), "{scenario:?}");
        assert_eq!(
            seq.trajectory_files(),
            par.trajectory_files(),
            "{scenario:?}"
        );
        let again = run_scenario(&small_config(scenario, Execution::Parallel)).unwrap();
        assert_eq!(par.results_csv(), again.results_csv());
    }
}

#[test]
fn scenarios_compare_the_expected_estimators() {
    let names = |s: Scenario| -> Vec<&str> { s.estimators().iter().map(|e| e.as_str()).collect() };
    assert_eq!(names(Scenario::Nonneg), ["SVR", "P-SVR", "NNSVR", "NNLS"]);
    assert_eq!(names(Scenario::Simplex), ["Cibersort", "SOLS", "SSVR"]);
    assert_eq!(names(Scenario::Isotonic), ["ISVR", "IR"]);
    assert_eq!(names(Scenario::Trajectory), ["SVR", "SSVR"]);

    let res = run_scenario(&small_config(Scenario::Simplex, Execution::Parallel)).unwrap();
    assert_eq!(res.rows.len(), 3 * 4);
    assert_eq!(res.summary().len(), 3);
}

#[test]
fn trajectory_scenario_records_one_curve_per_estimator_and_rep() {
    let res = run_scenario(&small_config(Scenario::Trajectory, Execution::Sequential)).unwrap();
    assert_eq!(res.trajectories.len(), 2 * 4);
    for t in &res.trajectories {
        let traj = t.report.trajectory.as_ref().unwrap();
        assert!(traj.windows(2).all(|w| w[0].iteration < w[1].iteration));
    }
    assert_eq!(res.trajectory_files().len(), 8);
}
