//! Sequential vs parallel execution of experiment repetitions and CV grids.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lcsvr_core::experiments::{
    gen_simplex, grid_search_cv, run_scenario, Estimator, Scenario, ScenarioConfig, Tuning,
};
use lcsvr_core::Execution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(execution: Execution) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::defaults(Scenario::Simplex);
    cfg.n = 60;
    cfg.reps = 8;
    cfg.execution = execution;
    let (c_grid, nu_grid) = Scenario::Simplex.cv_grid(3);
    cfg.tuning = Tuning::CrossValidated {
        c_grid,
        nu_grid,
        folds: 3,
    };
    cfg
}

fn scenario_reps(c: &mut Criterion) {
    let mut g = c.benchmark_group("simplex_scenario_8_reps");
    g.sample_size(10);
    for mode in [Execution::Sequential, Execution::Parallel] {
        let cfg = config(mode);
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("{mode:?}")),
            &cfg,
            |b, cfg| b.iter(|| run_scenario(cfg).unwrap()),
        );
    }
    g.finish();
}

fn cv_grid(c: &mut Criterion) {
    let data = gen_simplex(&mut ChaCha8Rng::seed_from_u64(0), 100, 5);
    let (cs, nus) = Scenario::Simplex.cv_grid(4);
    let mut g = c.benchmark_group("ssvr_cv_4x4_3fold");
    g.sample_size(10);
    for mode in [Execution::Sequential, Execution::Parallel] {
        g.bench_function(format!("{mode:?}"), |b| {
            b.iter(|| {
                grid_search_cv(&data.ts, Estimator::Ssvr, &cs, &nus, 3, 0, 1e-3, mode).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, scenario_reps, cv_grid);
criterion_main!(benches);
