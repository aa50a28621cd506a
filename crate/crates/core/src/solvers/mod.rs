//! Constructive equilibrium solvers: best-reply iteration, the 1D integro-ODE
//! for the transport map, and mirror descent on `W_c(μ, ν) + J(ν)`.

mod best_reply;
mod ode;
mod variational;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{Coupling, DiscreteMeasure, StrategyMap};
use crate::model::Scenario;
use crate::transport::{w1_exact_1d, w1_lp};

pub use best_reply::{best_reply_iterate, best_reply_map, random_initial_measure};
pub use ode::solve_ode_map;
pub use variational::{variational_solve, StepSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    BestReply,
    Ode,
    Variational,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::Ode, SolverKind::Variational, SolverKind::BestReply];

    pub fn as_str(&self) -> &'static str {
        match self {
            SolverKind::BestReply => "best-reply",
            SolverKind::Ode => "ode",
            SolverKind::Variational => "variational",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best-reply" | "best_reply" => Ok(SolverKind::BestReply),
            "ode" => Ok(SolverKind::Ode),
            "variational" => Ok(SolverKind::Variational),
            other => Err(Error::Precondition(format!(
                "unknown solver `{other}` (expected ode, variational or best-reply)"
            ))),
        }
    }
}

/// One iteration of a solver. `defect` is the solver's own progress measure:
/// relative equilibrium defect of the current coupling (best-reply), relative
/// Euler-Lagrange residual (variational), sup change of the map (ODE).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// `W₁(ν_k, ν_{k−1})`; absent on the first row.
    pub successive_w1: Option<f64>,
    /// `W_c(μ, ν_k) + J(ν_k)` when the kernel is symmetric.
    pub objective: Option<f64>,
    pub defect: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solver: SolverKind,
    pub final_nu: DiscreteMeasure,
    pub final_map: Option<StrategyMap>,
    pub final_gamma: Coupling,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub iterations: usize,
    pub ode_constant: Option<f64>,
    pub contraction_factor: Option<f64>,
    pub restarts: usize,
    pub stop_reason: String,
}

/// Runs `kind` with the scenario's own solver settings and default starting points.
pub fn solve(scenario: &Scenario, kind: SolverKind) -> Result<SolveReport> {
    match kind {
        SolverKind::BestReply => best_reply_iterate(scenario, scenario.solver.damping, None),
        SolverKind::Ode => solve_ode_map(scenario),
        SolverKind::Variational => {
            variational_solve(scenario, StepSchedule { eta0: scenario.solver.eta0 }, None)
        }
    }
}

/// W₁ between two measures: exact CDF formula in 1D, LP on the supports in 2D.
pub fn w1_distance(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    if a.grid().dim() == 1 && b.grid().dim() == 1 {
        w1_exact_1d(a, b)
    } else {
        w1_lp(a, b)
    }
}

pub(crate) fn objective_if_symmetric(
    nu: &DiscreteMeasure,
    mu: &DiscreteMeasure,
    scenario: &Scenario,
) -> Result<Option<f64>> {
    if !scenario.cost.kernel_is_symmetric() {
        return Ok(None);
    }
    crate::equilibrium::objective(nu, mu, &scenario.cost).map(Some)
}
