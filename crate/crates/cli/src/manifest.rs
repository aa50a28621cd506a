use std::fs;
use std::path::Path;

use anyhow::Context;
use cnot_core::model::{SolverParams, SCHEMA_VERSION};
use cnot_core::Scenario;
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";
pub const SCENARIO: &str = "scenario.json";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub schema_version: u32,
    /// `solve`, `compare` or `converge-n`.
    pub kind: String,
    pub command: Vec<String>,
    pub scenario: String,
    pub scenario_hash: String,
    pub solver: Option<String>,
    pub tolerances: SolverParams,
    pub seeds: Vec<u64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub stop_reason: Option<String>,
    /// Relative equilibrium defect of the final coupling.
    pub final_defect: Option<f64>,
    /// Relative Euler-Lagrange residual of the final measure (symmetric kernels only).
    pub final_el_residual: Option<f64>,
    pub ode_constant: Option<f64>,
    pub contraction_factor: Option<f64>,
    pub restarts: Option<usize>,
    pub wall_time_seconds: f64,
    /// Every file written next to this manifest.
    pub files: Vec<String>,
    /// Mode-specific summary.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn new(kind: &str, command: &[String], scenario: &Scenario) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            kind: kind.into(),
            command: command.to_vec(),
            scenario: scenario.name().into(),
            scenario_hash: scenario.hash(),
            solver: None,
            tolerances: scenario.solver.clone(),
            seeds: vec![scenario.solver.seed],
            iterations: None,
            converged: None,
            stop_reason: None,
            final_defect: None,
            final_el_residual: None,
            ode_constant: None,
            contraction_factor: None,
            restarts: None,
            wall_time_seconds: 0.0,
            files: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(dir.join(MANIFEST), text).with_context(|| format!("writing {}", dir.join(MANIFEST).display()))
    }

    pub fn read(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// The scenario a run directory was produced from.
pub fn read_scenario(dir: &Path) -> anyhow::Result<Scenario> {
    let path = dir.join(SCENARIO);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Scenario::from_json_str(&text)?)
}
