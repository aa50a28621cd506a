use super::{w1_distance, SolveReport, SolverKind, TraceRow};
use crate::equilibrium::{energy, first_variation, objective, residual_from};
use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::model::Scenario;

const MONOTONE_SLACK: f64 = 1e-12;
const STAGNATION_WINDOW: usize = 20;
const MAX_HALVINGS: usize = 40;
const MAX_REJECTIONS: usize = 50;
const MAX_RESTARTS: usize = 3;
/// Floor on the exponent of the multiplicative update, to keep weights representable.
const MIN_EXPONENT: f64 = -700.0;

/// `η_k = η₀ / √(k + 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSchedule {
    pub eta0: f64,
}

impl StepSchedule {
    pub fn step(&self, k: usize) -> f64 {
        self.eta0 / ((k + 1) as f64).sqrt()
    }
}

/// Entropic mirror descent on `W_c(μ, ν) + J(ν)` over the simplex of strategy
/// weights, with backtracking so that accepted steps never increase the
/// objective. Nodes without mass in `ν₀` stay empty. `ν₀` defaults to `m₀`.
pub fn variational_solve(
    scenario: &Scenario,
    schedule: StepSchedule,
    nu0: Option<DiscreteMeasure>,
) -> Result<SolveReport> {
    scenario.cost.require_symmetric()?;
    if !(schedule.eta0 > 0.0 && schedule.eta0.is_finite()) {
        return Err(Error::Precondition(format!("eta0 must be positive, got {}", schedule.eta0)));
    }
    let grid = scenario.strategy_grid.clone();
    let start = match nu0 {
        Some(nu) => {
            if **nu.grid() != *grid {
                return Err(Error::InvalidMeasure("initial measure is not on the strategy grid".into()));
            }
            nu
        }
        None => DiscreteMeasure::new(grid.clone(), scenario.cost.reference_weights(&grid))?,
    };
    let mut schedule = schedule;
    let mut restarts = 0;
    loop {
        match descend(scenario, schedule, start.clone(), restarts)? {
            Outcome::Done(report) => return Ok(report),
            Outcome::Restart if restarts < MAX_RESTARTS => {
                restarts += 1;
                schedule.eta0 *= 0.5;
            }
            Outcome::Restart => {
                return Err(Error::Precondition(format!(
                    "objective failed to decrease for {MAX_REJECTIONS} consecutive steps after {MAX_RESTARTS} restarts"
                )))
            }
        }
    }
}

enum Outcome {
    Done(SolveReport),
    Restart,
}

fn descend(scenario: &Scenario, schedule: StepSchedule, mut nu: DiscreteMeasure, restarts: usize) -> Result<Outcome> {
    let mu = &scenario.mu;
    let cost = &scenario.cost;
    let params = &scenario.solver;
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut history: Vec<f64> = Vec::new();
    let mut previous: Option<DiscreteMeasure> = None;
    let mut rejections = 0;
    let mut k = 0;
    loop {
        let (g, field, transport) = first_variation(&nu, mu, cost)?;
        let residual = residual_from(&g, &field, &nu, mu, cost, None)?;
        let value = transport.value + energy(&nu, cost)?;
        let successive_w1 = previous.as_ref().map(|p| w1_distance(p, &nu)).transpose()?;
        trace.push(TraceRow { iteration: k, successive_w1, objective: Some(value), defect: residual.relative });
        history.push(value);

        let stop = if residual.relative <= params.tol {
            Some((true, format!("relative Euler-Lagrange residual <= {:e}", params.tol)))
        } else if history.len() > STAGNATION_WINDOW
            && history[history.len() - 1 - STAGNATION_WINDOW] - value <= MONOTONE_SLACK
        {
            Some((false, format!("objective decrease <= {MONOTONE_SLACK:e} over {STAGNATION_WINDOW} steps")))
        } else if k >= params.max_iter {
            Some((false, format!("iteration cap {} reached", params.max_iter)))
        } else {
            None
        };
        if let Some((converged, reason)) = stop {
            return Ok(Outcome::Done(SolveReport {
                solver: SolverKind::Variational,
                final_nu: nu,
                final_map: None,
                final_gamma: transport.plan,
                trace,
                converged,
                iterations: k,
                ode_constant: None,
                contraction_factor: None,
                restarts,
                stop_reason: reason,
            }));
        }

        let mut eta = schedule.step(k);
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = multiplicative_step(&nu, &g, eta)?;
            if objective(&candidate, mu, cost)? <= value + MONOTONE_SLACK {
                accepted = Some(candidate);
                break;
            }
            eta *= 0.5;
        }
        match accepted {
            Some(next) => {
                rejections = 0;
                previous = Some(std::mem::replace(&mut nu, next));
            }
            None => {
                rejections += 1;
                if rejections >= MAX_REJECTIONS {
                    return Ok(Outcome::Restart);
                }
                previous = Some(nu.clone());
            }
        }
        k += 1;
    }
}

/// `ν'(x) ∝ ν(x) exp(−η (G(x) − min_{supp ν} G))`.
fn multiplicative_step(nu: &DiscreteMeasure, g: &[f64], eta: f64) -> Result<DiscreteMeasure> {
    let w = nu.weights();
    let floor = nu.support().map(|x| g[x]).fold(f64::INFINITY, f64::min);
    let next = w
        .iter()
        .zip(g)
        .map(|(&wx, &gx)| if wx > 0.0 { wx * (-eta * (gx - floor)).max(MIN_EXPONENT).exp() } else { 0.0 })
        .collect();
    DiscreteMeasure::new(nu.grid().clone(), next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_immediately_optimal_without_transport_cost() {
        let s = Scenario::named("trivial_uniform").unwrap().with_grid(32).unwrap();
        let r = variational_solve(&s, StepSchedule { eta0: 1.0 }, None).unwrap();
        assert!(r.converged);
        assert!((r.trace.last().unwrap().objective.unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_kernel_is_rejected() {
        let s = Scenario::named("fig1_alpha2").unwrap();
        assert!(matches!(
            variational_solve(&s, StepSchedule { eta0: 1.0 }, None),
            Err(Error::AsymmetricKernel(_))
        ));
    }
}
