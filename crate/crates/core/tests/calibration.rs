//! Quality thresholds that were frozen after calibration runs.
use tunekit::config::{build_manager, SolverSpec};
use tunekit::domain::{SearchSpace, VariableSpec};
use tunekit::objectives::{Builtin, BuiltinObjective};
use tunekit::Budget;

fn best_of(kind: &str, space: &SearchSpace, func: Builtin, budget: usize, seed: u64) -> f64 {
    let obj = BuiltinObjective::new(func, space.clone()).unwrap();
    let mut m = build_manager(space, &[SolverSpec::new(kind)], budget, seed).unwrap();
    let h = m.run(&obj, Budget::new(budget, 4).unwrap(), seed).unwrap();
    h.best_objective().unwrap()
}

#[test]
fn hybrid_solves_the_2d_sphere() {
    let space = SearchSpace::new(vec![
        VariableSpec::continuous("x", -5.0, 5.0),
        VariableSpec::continuous("y", -5.0, 5.0),
    ])
    .unwrap();
    let bests: Vec<f64> = (0..10).map(|seed| best_of("hybrid", &space, Builtin::Sphere, 500, seed)).collect();
    let hits = bests.iter().filter(|&&b| b <= 1e-3).count();
    assert!(hits >= 8, "{hits}/10 seeds reached 1e-3: {bests:?}");
}
