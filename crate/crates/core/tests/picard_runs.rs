mod common;

use cellflow_core::discretization::{Field, StageMap};
use cellflow_core::picard::{
    contraction_profiles, minimal_contractive_lambda, picard_solve, solve_system, LambdaSearch,
    Tolerances,
};
use cellflow_core::runner::CONTRACTION_LAMBDAS;
use cellflow_core::Result;
use proptest::prelude::*;

use common::{stock, stock_with};

#[test]
fn halving_map_contracts_by_one_half() {
    let cfg = stock_with(&[("model.horizon", "2"), ("grid.n_t", "17"), ("grid.n_m", "9")]);
    let grid = cfg.grid().unwrap();
    let halve = |f: &Field| -> Result<Field> { Ok(f.map(|v| 0.5 * v)) };
    let profiles = contraction_profiles(&halve, &grid, 10, 1.0, 1).unwrap();
    for lambda in CONTRACTION_LAMBDAS {
        assert!(profiles.ratios(lambda).iter().all(|r| (r - 0.5).abs() < 1e-12));
    }
    assert_eq!(
        minimal_contractive_lambda(&profiles, 200.0, 0.5).lambda(),
        Some(0.0)
    );
}

#[test]
fn identity_is_not_contractive() {
    let cfg = stock_with(&[("model.horizon", "2"), ("grid.n_t", "17"), ("grid.n_m", "9")]);
    let grid = cfg.grid().unwrap();
    let identity = |f: &Field| -> Result<Field> { Ok(f.clone()) };
    let profiles = contraction_profiles(&identity, &grid, 10, 1.0, 1).unwrap();
    assert!(profiles.ratios(0.0).iter().all(|r| (r - 1.0).abs() < 1e-12));
    assert!(matches!(
        minimal_contractive_lambda(&profiles, 200.0, 0.5),
        LambdaSearch::NotContractive { .. }
    ));
}

#[test]
fn contraction_ratio_does_not_grow_with_the_weight() {
    let cfg = stock_with(&[("grid.n_m", "41"), ("grid.n_t", "81")]);
    let ctx = cfg.context().unwrap();
    let profiles = contraction_profiles(&StageMap::n(&ctx), ctx.grid(), 20, 1.0, cfg.seed).unwrap();
    let sups: Vec<f64> = CONTRACTION_LAMBDAS.iter().map(|&l| profiles.sup_ratio(l)).collect();
    assert!(sups.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "{sups:?}");
}

/// Division strong enough that the unweighted ratio exceeds one.
fn strong_division() -> cellflow_core::config::RunConfig {
    stock_with(&[
        ("rates.beta.params", "40, 2"),
        ("grid.n_m", "41"),
        ("grid.n_t", "81"),
    ])
}

#[test]
fn strong_division_needs_a_positive_weight() {
    let cfg = strong_division();
    let ctx = cfg.context().unwrap();
    let mut found = Vec::new();
    for seed in 0..5 {
        let profiles = contraction_profiles(&StageMap::n(&ctx), ctx.grid(), 20, 1.0, seed).unwrap();
        let lambda = minimal_contractive_lambda(&profiles, 200.0, 0.5)
            .lambda()
            .expect("contractive below the search bound");
        found.push(lambda);
    }
    println!("minimal weights over seeds: {found:?}");
    assert!(found.iter().all(|l| *l > 0.0));
    let lo = found.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = found.iter().copied().fold(0.0, f64::max);
    assert!(hi - lo <= 2.0, "spread {lo}..{hi}");
}

#[test]
fn stem_trace_rates_are_error_ratios() {
    let cfg = stock();
    let ctx = cfg.context().unwrap();
    let tol = cfg.solver.tolerances().unwrap();
    let solution = solve_system(&ctx, &tol).unwrap();
    let trace = &solution.stages[0].trace;
    assert!(trace.converged);
    let e = &trace.errors;
    assert!(e.iter().all(|v| *v > 0.0));
    assert!(*e.last().unwrap() < cfg.solver.toll);
    for k in 1..e.len() {
        let r = trace.rates[k].unwrap();
        assert!((r - e[k] / e[k - 1]).abs() <= 1e-12 * r.max(1.0));
    }
    assert!(e.windows(2).skip(1).all(|w| w[1] <= w[0]));
}

proptest! {
    #[test]
    fn affine_iteration_converges_at_its_slope(rho in 0.05f64..0.9, b in 0.1f64..3.0) {
        let map = |f: &Field| -> Result<Field> { Ok(f.map(|v| rho * v + b)) };
        let tol = Tolerances::new(1e-6, 500, 1e-6).unwrap();
        let (field, trace) = picard_solve(&map, Field::zeros(2, 2), &tol).unwrap();
        let fixed = b / (1.0 - rho);
        prop_assert!(trace.converged);
        prop_assert!(field.values().iter().all(|v| (v - fixed).abs() < 1e-5 * (1.0 + fixed)));
        for w in trace.increments.windows(2).take(5) {
            prop_assert!((w[1] / w[0] - rho).abs() < 1e-9);
        }
    }
}
