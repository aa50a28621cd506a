//! Cournot-Nash equilibria of nonatomic games with separable costs.
//!
//! A population of agents is described by a distribution of types `μ` on a
//! type grid. Each agent picks a strategy on a strategy grid and pays
//!
//! ```text
//! F(θ, x, ν) = c(θ, x) + f(x, dν/dm₀(x)) + V₀(x) + Σ_y w(x, y) ν(y)
//! ```
//!
//! where `ν` is the resulting distribution of strategies. An equilibrium is a
//! coupling `γ` with first marginal `μ` that only charges cost-minimising
//! strategies. Three constructive routes are provided in [`solvers`]:
//! best-reply fixed-point iteration, a one-dimensional integro-ODE for the
//! transport map, and minimisation of `W_c(μ, ν) + J(ν)`. Every solver output
//! is checked by [`equilibrium`], never self-certified.
//!
//! [`finite_games`] builds the `N`-player games induced by the same cost model
//! and measures how their pure Nash equilibria approach the continuum
//! equilibrium as `N` grows.

pub mod equilibrium;
pub mod error;
pub mod finite_games;
pub mod io;
pub mod measures;
pub mod model;
pub mod numeric;
pub mod solvers;
pub mod transport;

pub use equilibrium::{DefectReport, Residual};
pub use error::{Error, Result};
pub use finite_games::{FiniteGame, MixedProfile, ModulusOfContinuity, Sampling};
pub use measures::{Coupling, DiscreteMeasure, StrategyMap};
pub use model::{
    AffinePowerTerm, Congestion, CostModel, Grid, Point, Scenario, SolverParams, TransportCost,
};
pub use solvers::{SolveReport, SolverKind, TraceRow};
pub use transport::{Atoms, PointCloud, TransportResult};
