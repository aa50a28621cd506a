use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{objective_if_symmetric, w1_distance, SolveReport, SolverKind, TraceRow};
use crate::equilibrium::{equilibrium_defect, interaction_field};
use crate::error::{Error, Result};
use crate::measures::{pushforward, Coupling, DiscreteMeasure, StrategyMap};
use crate::model::{CostModel, Grid, Scenario};
use crate::numeric::argmin_first;
use crate::transport::wc;

const CONTRACTION_WINDOW: usize = 10;

/// `T(θ) = argmin_x F(θ, x, ν)` for every type node; ties go to the smallest index.
pub fn best_reply_map(nu: &DiscreteMeasure, type_grid: &Grid, cost: &CostModel) -> Result<StrategyMap> {
    let strategy_grid = nu.grid();
    let field = interaction_field(nu, cost)?;
    let points = strategy_grid.points();
    let targets = (0..type_grid.len())
        .into_par_iter()
        .map(|i| {
            let theta = type_grid.point(i);
            let values = points.iter().zip(&field).map(|(p, v)| cost.transport.eval(theta, *p) + v);
            argmin_first(values).map(|(x, _)| x).expect("strategy grid is nonempty")
        })
        .collect();
    StrategyMap::new(strategy_grid.clone(), targets)
}

/// Random weights on every node, reproducible from `seed`.
pub fn random_initial_measure(grid: Arc<Grid>, seed: u64) -> DiscreteMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = (0..grid.len()).map(|_| rng.gen::<f64>() + f64::EPSILON).collect();
    DiscreteMeasure::new(grid, w).expect("positive weights")
}

/// Damped fixed-point iteration `ν ← (1 − λ)ν + λ T(ν)#μ`.
///
/// The coupling follows the same recursion, started from an optimal plan
/// between `μ` and `ν₀` (or the graph of `T` outright when `λ = 1`).
/// `ν₀` defaults to the reference measure `m₀`, normalised.
pub fn best_reply_iterate(
    scenario: &Scenario,
    damping: f64,
    nu0: Option<DiscreteMeasure>,
) -> Result<SolveReport> {
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::Precondition(format!("damping must lie in (0, 1], got {damping}")));
    }
    let params = &scenario.solver;
    let mu = &scenario.mu;
    let cost = &scenario.cost;
    let strategy_grid = scenario.strategy_grid.clone();
    let mut nu = match nu0 {
        Some(nu) => {
            if **nu.grid() != *strategy_grid {
                return Err(Error::InvalidMeasure("initial measure is not on the strategy grid".into()));
            }
            nu
        }
        None => DiscreteMeasure::new(strategy_grid.clone(), cost.reference_weights(&strategy_grid))?,
    };
    let mut gamma = if damping < 1.0 { Some(wc(mu, &nu, &cost.transport)?.plan) } else { None };

    let mut trace = Vec::new();
    let mut converged = false;
    let mut last_map = None;
    let mut steps: Vec<f64> = Vec::new();
    for k in 0..params.max_iter {
        let map = best_reply_map(&nu, &scenario.type_grid, cost)?;
        let image = pushforward(&map, mu)?;
        let graph = Coupling::from_map(&map, mu)?;
        let next = if damping == 1.0 { image } else { nu.mix(&image, damping)? };
        let next_gamma = match &gamma {
            Some(g) if damping < 1.0 => g.mix(&graph, damping),
            _ => graph,
        };
        let step = w1_distance(&nu, &next)?;
        steps.push(step);
        let defect = equilibrium_defect(&next_gamma, mu, cost, None)?.relative_defect;
        trace.push(TraceRow {
            iteration: k + 1,
            successive_w1: Some(step),
            objective: objective_if_symmetric(&next, mu, scenario)?,
            defect,
        });
        nu = next;
        gamma = Some(next_gamma);
        last_map = Some(map);
        if step <= params.tol {
            converged = true;
            break;
        }
    }
    let iterations = trace.len();
    Ok(SolveReport {
        solver: SolverKind::BestReply,
        final_nu: nu,
        final_map: if damping == 1.0 { last_map } else { None },
        final_gamma: gamma.expect("at least one iteration"),
        trace,
        converged,
        iterations,
        ode_constant: None,
        contraction_factor: contraction_factor(&steps),
        restarts: 0,
        stop_reason: if converged {
            format!("successive W1 <= {:e}", params.tol)
        } else {
            format!("iteration cap {} reached", params.max_iter)
        },
    })
}

/// Largest ratio of consecutive successive distances over the last window.
fn contraction_factor(steps: &[f64]) -> Option<f64> {
    let start = steps.len().saturating_sub(CONTRACTION_WINDOW + 1);
    steps[start..]
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
}
