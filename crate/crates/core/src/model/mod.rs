//! Grids, parametric cost families and bundled scenarios.

mod cost;
mod grid;
mod scenario;

pub use cost::{AffinePowerTerm, Congestion, CostModel, TransportCost};
pub use grid::{Grid, Point};
pub(crate) use grid::distance;
pub use scenario::{
    CongestionSpec, TransportSpec,
    BlockSpec, CostSpec, GridSpec, MuSpec, Scenario, ScenarioFile, SolverParams, TermSpec,
    BUNDLED_SCENARIOS, SCHEMA_VERSION,
};
