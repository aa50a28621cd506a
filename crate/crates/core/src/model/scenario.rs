use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cost::{AffinePowerTerm, Congestion, CostModel, TransportCost};
use super::grid::Grid;
use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, UniformBlock, MASS_TOLERANCE};

pub const SCHEMA_VERSION: u32 = 1;

pub const BUNDLED_SCENARIOS: &[&str] =
    &["fig1_alpha2", "fig1_alpha5", "fig2", "fig3", "log_benchmark", "trivial_uniform"];

/// On-disk scenario (JSON). Field order is the serialisation order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    /// Strategy grid; also the type grid unless `type_grid` is given.
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_grid: Option<GridSpec>,
    pub mu: MuSpec,
    pub cost: CostSpec,
    pub solver: SolverParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub bounds: Vec<[f64; 2]>,
    pub n: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocks: Vec<BlockSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub c: TransportSpec,
    pub f: CongestionSpec,
    #[serde(default)]
    pub potential: Vec<TermSpec>,
    #[serde(default)]
    pub kernel: Vec<TermSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_measure: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportSpec {
    pub exponent: f64,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CongestionSpec {
    None,
    Log,
    Power { alpha: f64 },
}

/// `coefficient · |a·x + b·y + offset|^exponent`; `b` is omitted for potentials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub coefficient: f64,
    pub a: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub b: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
    pub exponent: f64,
    #[serde(default, skip_serializing_if = "is_false")]
    pub symmetric: bool,
}

fn is_false(v: &bool) -> bool {
    !*v
}

fn default_eta0() -> f64 {
    1.0
}

/// Tolerances, caps and seeds shared by the solvers. `tol` is read per
/// solver: successive W₁ for best-reply, sup-norm map change for the ODE,
/// relative Euler-Lagrange residual for the variational solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverParams {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub seed: u64,
    #[serde(default = "default_eta0")]
    pub eta0: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 500, damping: 1.0, seed: 0, eta0: 1.0 }
    }
}

/// A validated scenario: grids, type distribution, cost model and solver settings.
#[derive(Clone, Debug)]
pub struct Scenario {
    file: ScenarioFile,
    pub type_grid: Arc<Grid>,
    pub strategy_grid: Arc<Grid>,
    pub mu: DiscreteMeasure,
    pub cost: CostModel,
    pub solver: SolverParams,
}

fn schema(key: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Schema { key: key.into(), reason: reason.into() }
}

impl Scenario {
    /// Bundled scenario name, or a path to a JSON scenario file.
    pub fn load(name_or_file: &str) -> Result<Self> {
        if BUNDLED_SCENARIOS.contains(&name_or_file) {
            return Self::named(name_or_file);
        }
        let path = Path::new(name_or_file);
        if path.exists() {
            return Self::from_json_str(&std::fs::read_to_string(path)?);
        }
        Err(Error::UnknownScenario(name_or_file.to_string()))
    }

    pub fn named(name: &str) -> Result<Self> {
        Self::from_file(bundled_file(name)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| schema(json_error_key(&e), e.to_string()))?;
        Self::from_file(file)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(schema(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", file.schema_version),
            ));
        }
        let strategy_grid = Arc::new(build_grid(&file.grid, "grid")?);
        let type_grid = match &file.type_grid {
            Some(spec) => Arc::new(build_grid(spec, "type_grid")?),
            None => strategy_grid.clone(),
        };
        if type_grid.dim() != strategy_grid.dim() {
            return Err(schema("type_grid.dim", "type and strategy grids must share a dimension"));
        }
        let mu = build_mu(&file.mu, &type_grid)?;
        let cost = build_cost(&file.cost)?;
        cost.validate(&strategy_grid)?;
        let s = &file.solver;
        if !(s.tol > 0.0 && s.tol.is_finite()) {
            return Err(schema("solver.tol", "must be positive"));
        }
        if !(s.damping > 0.0 && s.damping <= 1.0) {
            return Err(schema("solver.damping", "must lie in (0, 1]"));
        }
        if s.max_iter == 0 {
            return Err(schema("solver.max_iter", "must be at least 1"));
        }
        if !(s.eta0 > 0.0 && s.eta0.is_finite()) {
            return Err(schema("solver.eta0", "must be positive"));
        }
        let solver = file.solver.clone();
        Ok(Self { file, type_grid, strategy_grid, mu, cost, solver })
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn notes(&self) -> Option<&str> {
        self.file.notes.as_deref()
    }

    pub fn file(&self) -> &ScenarioFile {
        &self.file
    }

    pub fn dim(&self) -> usize {
        self.strategy_grid.dim()
    }

    /// Canonical pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.file).expect("scenario serialises");
        s.push('\n');
        s
    }

    /// SHA-256 of the canonical serialisation, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Same scenario with `n` nodes per axis on both grids.
    pub fn with_grid(&self, n: usize) -> Result<Self> {
        let mut file = self.file.clone();
        file.grid.n = vec![n; file.grid.dim];
        if let Some(t) = file.type_grid.as_mut() {
            t.n = vec![n; t.dim];
        }
        if file.mu.weights.is_some() {
            return Err(schema("mu.weights", "explicit weights cannot be regridded"));
        }
        Self::from_file(file)
    }

    pub fn with_solver(&self, solver: SolverParams) -> Result<Self> {
        let mut file = self.file.clone();
        file.solver = solver;
        Self::from_file(file)
    }
}

fn json_error_key(e: &serde_json::Error) -> String {
    // serde reports the offending field inside backticks for unknown/missing keys
    let msg = e.to_string();
    match (msg.find('`'), msg[msg.find('`').map_or(0, |i| i + 1)..].find('`')) {
        (Some(a), Some(len)) => msg[a + 1..a + 1 + len].to_string(),
        _ => format!("line {} column {}", e.line(), e.column()),
    }
}

fn build_grid(spec: &GridSpec, key: &str) -> Result<Grid> {
    if spec.dim != 1 && spec.dim != 2 {
        return Err(schema(format!("{key}.dim"), "must be 1 or 2"));
    }
    if spec.bounds.len() != spec.dim {
        return Err(schema(format!("{key}.bounds"), format!("expected {} intervals", spec.dim)));
    }
    if spec.n.len() != spec.dim {
        return Err(schema(format!("{key}.n"), format!("expected {} node counts", spec.dim)));
    }
    if spec.n.iter().any(|&n| n < 2) {
        return Err(schema(format!("{key}.n"), "at least 2 nodes per axis"));
    }
    let bounds: Vec<(f64, f64)> = spec.bounds.iter().map(|b| (b[0], b[1])).collect();
    Grid::uniform(&bounds, &spec.n).map_err(|e| schema(key, e.to_string()))
}

fn build_mu(spec: &MuSpec, grid: &Arc<Grid>) -> Result<DiscreteMeasure> {
    match (&spec.weights, spec.blocks.is_empty()) {
        (Some(_), false) => Err(schema("mu", "give either blocks or weights, not both")),
        (None, true) => Err(schema("mu", "no blocks and no weights")),
        (Some(w), true) => {
            if w.len() != grid.len() {
                return Err(schema("mu.weights", format!("{} weights for {} type nodes", w.len(), grid.len())));
            }
            let total: f64 = crate::numeric::compensated_sum(w.iter().copied());
            if (total - 1.0).abs() > MASS_TOLERANCE {
                return Err(schema("mu.weights", format!("weights sum to {total}, not 1")));
            }
            DiscreteMeasure::new(grid.clone(), w.clone()).map_err(|e| schema("mu.weights", e.to_string()))
        }
        (None, false) => {
            let dim = grid.dim();
            let mut blocks = Vec::with_capacity(spec.blocks.len());
            for (k, b) in spec.blocks.iter().enumerate() {
                let key = format!("mu.blocks[{k}]");
                if b.lo.len() != dim || b.hi.len() != dim {
                    return Err(schema(&key, format!("lo/hi need {dim} coordinates")));
                }
                if b.lo.iter().zip(&b.hi).any(|(l, h)| l > h) {
                    return Err(schema(format!("{key}.hi"), "hi below lo"));
                }
                if !(b.mass > 0.0 && b.mass.is_finite()) {
                    return Err(schema(format!("{key}.mass"), "must be positive"));
                }
                for d in 0..dim {
                    let (lo, hi) = grid.bounds()[d];
                    if b.lo[d] < lo || b.hi[d] > hi {
                        return Err(schema(&key, "block lies outside the type bounds"));
                    }
                }
                let mut lo = [0.0; 2];
                let mut hi = [0.0; 2];
                lo[..dim].copy_from_slice(&b.lo);
                hi[..dim].copy_from_slice(&b.hi);
                blocks.push(UniformBlock { lo, hi, mass: b.mass });
            }
            let total = crate::numeric::compensated_sum(blocks.iter().map(|b| b.mass));
            if (total - 1.0).abs() > MASS_TOLERANCE {
                return Err(schema("mu.blocks", format!("block masses sum to {total}, not 1")));
            }
            DiscreteMeasure::from_blocks(&blocks, grid.clone()).map_err(|e| schema("mu.blocks", e.to_string()))
        }
    }
}

fn build_term(spec: &TermSpec, key: &str) -> Result<AffinePowerTerm> {
    AffinePowerTerm::new(spec.coefficient, &spec.a, &spec.b, &spec.offset, spec.exponent, spec.symmetric)
        .map_err(|e| schema(key, e.to_string()))
}

fn build_cost(spec: &CostSpec) -> Result<CostModel> {
    let transport = TransportCost::new(spec.c.exponent, spec.c.scale).map_err(|e| schema("cost.c", e.to_string()))?;
    let congestion = match spec.f {
        CongestionSpec::None => Congestion::None,
        CongestionSpec::Log => Congestion::Log,
        CongestionSpec::Power { alpha } => Congestion::Power { alpha },
    };
    let mut model = CostModel::new(transport, congestion);
    for (k, t) in spec.potential.iter().enumerate() {
        model.potential.push(build_term(t, &format!("cost.potential[{k}]"))?);
    }
    for (k, t) in spec.kernel.iter().enumerate() {
        model.kernel.push(build_term(t, &format!("cost.kernel[{k}]"))?);
    }
    model.reference = spec.reference_measure.clone();
    Ok(model)
}

fn line_grid(lo: f64, hi: f64, n: usize) -> GridSpec {
    GridSpec { dim: 1, bounds: vec![[lo, hi]], n: vec![n] }
}

fn term(coefficient: f64, a: &[&[f64]], b: &[&[f64]], offset: &[f64], exponent: f64, symmetric: bool) -> TermSpec {
    TermSpec {
        coefficient,
        a: a.iter().map(|r| r.to_vec()).collect(),
        b: b.iter().map(|r| r.to_vec()).collect(),
        offset: offset.to_vec(),
        exponent,
        symmetric,
    }
}

fn uniform_unit_mu() -> MuSpec {
    MuSpec { blocks: vec![BlockSpec { lo: vec![0.0], hi: vec![1.0], mass: 1.0 }], weights: None }
}

fn fig1(alpha: f64) -> ScenarioFile {
    ScenarioFile {
        schema_version: SCHEMA_VERSION,
        name: format!("fig1_alpha{alpha}"),
        notes: Some(
            "Power congestion with an asymmetric kernel; only best-reply iteration applies.".into(),
        ),
        grid: line_grid(0.0, 1.0, 100),
        type_grid: None,
        mu: uniform_unit_mu(),
        cost: CostSpec {
            c: TransportSpec { exponent: 4.0, scale: 1.0 },
            f: CongestionSpec::Power { alpha },
            potential: vec![],
            kernel: vec![term(10.0, &[&[2.0]], &[&[-1.0]], &[-0.4], 2.0, false)],
            reference_measure: None,
        },
        solver: SolverParams { tol: 1e-6, max_iter: 500, damping: 0.5, seed: 1, eta0: 1.0 },
    }
}

fn bundled_file(name: &str) -> Result<ScenarioFile> {
    let file = match name {
        "fig1_alpha2" => fig1(2.0),
        "fig1_alpha5" => fig1(5.0),
        "fig2" => ScenarioFile {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            notes: Some(
                "The two blocks of mu are assumed to carry equal mass. Quadratic transport cost and \
                 log congestion are repo choices."
                    .into(),
            ),
            grid: line_grid(0.0, 4.0, 400),
            type_grid: None,
            mu: MuSpec {
                blocks: vec![
                    BlockSpec { lo: vec![0.5], hi: vec![0.6], mass: 0.5 },
                    BlockSpec { lo: vec![3.7], hi: vec![3.8], mass: 0.5 },
                ],
                weights: None,
            },
            cost: CostSpec {
                c: TransportSpec { exponent: 2.0, scale: 1.0 },
                f: CongestionSpec::Log,
                potential: vec![term(0.25, &[&[1.0]], &[], &[-1.6], 4.0, false)],
                kernel: vec![term(1.0 / 200.0, &[&[1.0]], &[&[-1.0]], &[0.0], 2.0, true)],
                reference_measure: None,
            },
            solver: SolverParams { tol: 1e-4, max_iter: 5000, damping: 1.0, seed: 2, eta0: 1.0 },
        },
        "fig3" => ScenarioFile {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            notes: Some(
                "The two uniform blocks of mu are assumed to carry equal mass. Quadratic transport \
                 cost |theta - x|^2 / 2, no congestion."
                    .into(),
            ),
            grid: GridSpec { dim: 2, bounds: vec![[0.0, 1.0], [0.0, 1.0]], n: vec![48, 48] },
            type_grid: None,
            mu: MuSpec {
                blocks: vec![
                    BlockSpec { lo: vec![0.1, 0.3], hi: vec![0.2, 0.5], mass: 0.5 },
                    BlockSpec { lo: vec![0.5, 0.1], hi: vec![0.9, 0.2], mass: 0.5 },
                ],
                weights: None,
            },
            cost: CostSpec {
                c: TransportSpec { exponent: 2.0, scale: 1.0 },
                f: CongestionSpec::None,
                potential: vec![term(1.0, &[&[1.0, 0.0], &[0.0, 1.0]], &[], &[-1.0, -1.0], 2.0, false)],
                kernel: vec![term(
                    0.01,
                    &[&[1.0, 0.0], &[0.0, 1.0]],
                    &[&[-1.0, 0.0], &[0.0, -1.0]],
                    &[0.0, 0.0],
                    4.0,
                    true,
                )],
                reference_measure: None,
            },
            solver: SolverParams { tol: 1e-4, max_iter: 200, damping: 1.0, seed: 3, eta0: 1.0 },
        },
        "log_benchmark" => ScenarioFile {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            notes: Some("Cross-solver benchmark: every solver applies.".into()),
            grid: line_grid(0.0, 1.0, 128),
            type_grid: None,
            mu: uniform_unit_mu(),
            cost: CostSpec {
                c: TransportSpec { exponent: 4.0, scale: 1.0 },
                f: CongestionSpec::Log,
                potential: vec![],
                kernel: vec![term(1.0 / 200.0, &[&[1.0]], &[&[-1.0]], &[0.0], 2.0, true)],
                reference_measure: None,
            },
            solver: SolverParams { tol: 1e-6, max_iter: 2000, damping: 0.5, seed: 4, eta0: 1.0 },
        },
        "trivial_uniform" => ScenarioFile {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            notes: Some("Null transport cost, log congestion, no interaction: nu is uniform.".into()),
            grid: line_grid(0.0, 1.0, 256),
            type_grid: None,
            mu: uniform_unit_mu(),
            cost: CostSpec {
                c: TransportSpec { exponent: 2.0, scale: 0.0 },
                f: CongestionSpec::Log,
                potential: vec![],
                kernel: vec![],
                reference_measure: None,
            },
            solver: SolverParams { tol: 1e-8, max_iter: 500, damping: 1.0, seed: 5, eta0: 1.0 },
        },
        other => return Err(Error::UnknownScenario(other.to_string())),
    };
    Ok(file)
}
