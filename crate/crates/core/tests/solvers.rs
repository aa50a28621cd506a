mod common;

use cnot_core::equilibrium::{el_residual, equilibrium_defect, total_cost};
use cnot_core::measures::pushforward;
use cnot_core::solvers::{
    best_reply_iterate, best_reply_map, random_initial_measure, solve, solve_ode_map, variational_solve, w1_distance,
    StepSchedule,
};
use cnot_core::transport::w1;
use cnot_core::{DiscreteMeasure, Error, Scenario, SolveReport, SolverKind, StrategyMap};
use common::edited;
use serde_json::json;

fn cdf_at(mu: &DiscreteMeasure, theta: f64) -> f64 {
    // μ is piecewise uniform on cells, so its CDF is piecewise linear
    let grid = mu.grid();
    let mut total = 0.0;
    for i in 0..grid.len() {
        let (lo, hi) = grid.cell(i)[0];
        total += mu.weights()[i] * ((theta.min(hi) - lo) / (hi - lo)).clamp(0.0, 1.0);
    }
    total
}

fn assert_verified(report: &SolveReport, s: &Scenario) {
    let defect = equilibrium_defect(&report.final_gamma, &s.mu, &s.cost, None).unwrap();
    assert!(defect.relative_defect <= 1e-3, "{:?}: {defect:?}", report.solver);
}

#[test]
fn null_cost_ode_is_the_cdf_for_any_types() {
    let s = edited("trivial_uniform", |v| {
        v["mu"]["blocks"] = json!([
            {"lo": [0.0], "hi": [0.3], "mass": 0.7},
            {"lo": [0.3], "hi": [1.0], "mass": 0.3}
        ]);
    });
    let r = solve_ode_map(&s).unwrap();
    assert!(r.converged);
    assert!((r.ode_constant.unwrap() - 1.0).abs() <= 1e-6);
    let h = s.strategy_grid.min_spacing();
    let map = r.final_map.as_ref().unwrap();
    for i in 0..s.type_grid.len() {
        let theta = s.type_grid.point(i)[0];
        let t = s.strategy_grid.point(map.target(i))[0];
        assert!((t - cdf_at(&s.mu, theta)).abs() <= h / 2.0 + 1e-9, "node {i}");
    }
    let uniform = 1.0 / s.strategy_grid.len() as f64;
    assert!(r.final_nu.weights().iter().all(|w| (w - uniform).abs() <= 1e-3));
}

#[test]
fn null_cost_variational_matches_the_ode() {
    let s = Scenario::named("trivial_uniform").unwrap();
    let ode = solve_ode_map(&s).unwrap();
    let var = solve(&s, SolverKind::Variational).unwrap();
    assert!(var.converged);
    assert!((var.trace.last().unwrap().objective.unwrap() + 1.0).abs() < 1e-9);
    assert!(w1_distance(&ode.final_nu, &var.final_nu).unwrap() <= 1e-3);
    let residual = el_residual(&var.final_nu, &s.mu, &s.cost, None).unwrap();
    assert!(residual.relative <= 1e-6);
}

/// `c = |θ − x|²/2` and nothing else.
fn pure_distance() -> Scenario {
    edited("trivial_uniform", |v| {
        v["grid"]["n"] = json!([20]);
        v["type_grid"] = json!({"dim": 1, "bounds": [[0.0, 1.0]], "n": [37]});
        v["cost"] = json!({"c": {"exponent": 2.0, "scale": 1.0}, "f": {"kind": "none"}});
        v["solver"]["tol"] = json!(1e-9);
    })
}

#[test]
fn decoupled_best_reply_is_the_nearest_node_image() {
    let s = pure_distance();
    let r = best_reply_iterate(&s, 1.0, None).unwrap();
    assert!(r.converged && r.iterations <= 2, "{} iterations", r.iterations);
    let nearest: Vec<usize> = (0..s.type_grid.len()).map(|i| s.strategy_grid.nearest(s.type_grid.point(i))).collect();
    let expected = pushforward(&StrategyMap::new(s.strategy_grid.clone(), nearest).unwrap(), &s.mu).unwrap();
    assert_eq!(r.final_nu.weights(), expected.weights());
    assert_verified(&r, &s);
}

#[test]
fn fig3_best_reply_against_exhaustive_scan() {
    let s = Scenario::named("fig3").unwrap().with_grid(16).unwrap();
    let map = best_reply_map(&s.mu, &s.type_grid, &s.cost).unwrap();
    for i in 0..s.type_grid.len() {
        let theta = s.type_grid.point(i);
        let mut best = (0, f64::INFINITY);
        for x in 0..s.strategy_grid.len() {
            let v = total_cost(theta, x, &s.mu, &s.cost).unwrap();
            if v < best.1 {
                best = (x, v);
            }
        }
        assert_eq!(map.target(i), best.0, "type node {i}");
    }
}

#[test]
fn fig3_best_reply_is_verified_and_unique() {
    let s = Scenario::named("fig3").unwrap().with_grid(16).unwrap();
    let a = best_reply_iterate(&s, 1.0, Some(random_initial_measure(s.strategy_grid.clone(), 1))).unwrap();
    let b = best_reply_iterate(&s, 1.0, Some(random_initial_measure(s.strategy_grid.clone(), 2))).unwrap();
    assert!(a.converged && b.converged);
    assert_verified(&a, &s);
    assert!(w1_distance(&a.final_nu, &b.final_nu).unwrap() <= 1e-3);
}

#[test]
fn damped_iterates_contract_at_the_reported_rate() {
    let s = Scenario::named("fig3").unwrap().with_grid(12).unwrap();
    let r = best_reply_iterate(&s, 0.5, None).unwrap();
    let factor = r.contraction_factor.unwrap();
    assert!(factor < 1.0);
    let steps: Vec<f64> = r.trace.iter().filter_map(|t| t.successive_w1).collect();
    let tail = &steps[steps.len().saturating_sub(11)..];
    for w in tail.windows(2) {
        let ratio = w[1] / w[0];
        assert!((0.8 * factor..=1.2 * factor).contains(&ratio), "ratio {ratio} factor {factor}");
    }
}

#[test]
fn one_type_variational_concentrates_on_the_argmin() {
    let s = edited("trivial_uniform", |v| {
        v["grid"]["n"] = json!([32]);
        v["mu"]["blocks"] = json!([{"lo": [0.2], "hi": [0.2], "mass": 1.0}]);
        v["cost"] = json!({
            "c": {"exponent": 2.0, "scale": 1.0},
            "f": {"kind": "none"},
            "potential": [{"coefficient": 4.0, "a": [[1.0]], "offset": [-0.6], "exponent": 2.0}]
        });
        v["solver"]["eta0"] = json!(1000.0);
        v["solver"]["max_iter"] = json!(300);
    });
    let theta = s.type_grid.point(s.mu.support().next().unwrap());
    let target = (0..32)
        .min_by(|&a, &b| {
            let f = |x: usize| {
                let p = s.strategy_grid.point(x);
                s.cost.transport.eval(theta, p) + s.cost.potential_at(p)
            };
            f(a).total_cmp(&f(b))
        })
        .unwrap();
    let r = solve(&s, SolverKind::Variational).unwrap();
    assert!(r.final_nu.weights()[target] >= 0.999, "{:?}", r.final_nu.weights());
}

#[test]
fn variational_objective_never_increases() {
    for (name, n) in [("log_benchmark", 64), ("fig2", 100)] {
        let s = Scenario::named(name).unwrap().with_grid(n).unwrap();
        let r = variational_solve(&s, StepSchedule { eta0: 1.0 }, Some(DiscreteMeasure::uniform(s.strategy_grid.clone())))
            .unwrap();
        let values: Vec<f64> = r.trace.iter().map(|t| t.objective.unwrap()).collect();
        assert!(values.len() > 1);
        for w in values.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{name}: {} then {}", w[0], w[1]);
        }
    }
}

#[test]
fn refinement_shrinks_the_change_in_nu() {
    let finals: Vec<DiscreteMeasure> = [64, 128, 256]
        .iter()
        .map(|&n| solve(&Scenario::named("log_benchmark").unwrap().with_grid(n).unwrap(), SolverKind::Variational).unwrap().final_nu)
        .collect();
    let coarse = w1(&finals[0], &finals[1]).unwrap();
    let fine = w1(&finals[1], &finals[2]).unwrap();
    assert!(fine < coarse, "{coarse} then {fine}");
}

#[test]
fn log_benchmark_ode_and_variational_agree_and_verify() {
    let s = Scenario::named("log_benchmark").unwrap();
    let ode = solve(&s, SolverKind::Ode).unwrap();
    let var = solve(&s, SolverKind::Variational).unwrap();
    assert!(ode.converged && var.converged);
    assert!(w1_distance(&ode.final_nu, &var.final_nu).unwrap() <= 2e-2);
    assert_verified(&ode, &s);
    assert_verified(&var, &s);
}

#[test]
fn preconditions() {
    let fig3 = Scenario::named("fig3").unwrap();
    match solve(&fig3, SolverKind::Ode) {
        Err(e @ Error::UnsupportedDimension { .. }) => assert!(e.to_string().contains("ode requires 1D")),
        other => panic!("{other:?}"),
    }
    let fig1 = Scenario::named("fig1_alpha2").unwrap();
    assert!(matches!(solve(&fig1, SolverKind::Variational), Err(Error::AsymmetricKernel(_))));
    assert!(matches!(best_reply_iterate(&fig1, 0.0, None), Err(Error::Precondition(_))));
}

#[test]
fn fig1_damped_best_reply_reports_honestly() {
    let s = Scenario::named("fig1_alpha2").unwrap().with_grid(40).unwrap();
    let r = best_reply_iterate(&s, 0.5, None).unwrap();
    if r.converged {
        assert_verified(&r, &s);
    } else {
        assert!(r.stop_reason.contains("iteration cap"));
    }
}
