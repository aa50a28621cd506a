//! Shooting / Picard solver for the transport map of a 1D log-congestion
//! equilibrium on `[0, 1]`:
//!
//! ```text
//! T'(θ) = C μ(θ) exp(−∫₀^θ ∂_θ c(s, T(s)) ds + c(θ, T(θ)) + Φ(T(θ))),
//! Φ(y) = V₀(y) + ∫ w(y, T(β)) μ(dβ),   T(0) = 0,   T(1) = 1.
//! ```

use super::{objective_if_symmetric, w1_distance, SolveReport, SolverKind, TraceRow};
use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, StrategyMap};
use crate::model::{Congestion, Scenario};
use crate::numeric::CompensatedSum;
use crate::transport::wc;

const MIN_SUBSTEPS: usize = 4;
const TARGET_MESH: usize = 2048;
const TABLE_LO: f64 = -1.0;
const TABLE_HI: f64 = 2.0;
const TABLE_POINTS: usize = 8192;
const BLOW_UP: f64 = 10.0;
const C_MIN: f64 = 1e-8;
const C_MAX: f64 = 1e8;
const SHOOT_TOLERANCE: f64 = 1e-13;
const MAX_BISECTIONS: usize = 200;

/// Type-side mesh aligned with the type cells, with the piecewise-constant density of `μ`.
struct Mesh {
    theta: Vec<f64>,
    /// Density of `μ` on each step `[θ_m, θ_{m+1}]`.
    rho: Vec<f64>,
    /// Mesh index of each type node (cell centre).
    node_index: Vec<usize>,
}

impl Mesh {
    fn new(scenario: &Scenario) -> Self {
        let grid = &scenario.type_grid;
        let n = grid.len();
        let mut s = (TARGET_MESH / n).max(MIN_SUBSTEPS);
        if s % 2 == 1 {
            s += 1;
        }
        let edges = grid.axis_edges(0);
        let nodes = grid.axis(0);
        let weights = scenario.mu.weights();
        let mut theta = Vec::with_capacity(n * s + 1);
        let mut rho = Vec::with_capacity(n * s);
        let mut node_index = Vec::with_capacity(n);
        theta.push(edges[0]);
        for k in 0..n {
            let (a, b) = (edges[k], edges[k + 1]);
            let density = weights[k] / (b - a);
            // the cell centre sits on the mesh only when it is the midpoint
            let centre_step = ((nodes[k] - a) / (b - a) * s as f64).round() as usize;
            node_index.push(k * s + centre_step);
            for q in 1..=s {
                theta.push(if q == s { b } else { a + (b - a) * q as f64 / s as f64 });
                rho.push(density);
            }
        }
        Self { theta, rho, node_index }
    }

    fn steps(&self) -> usize {
        self.rho.len()
    }
}

/// Frozen nonlocal terms of one Picard sweep.
struct Frozen<'a> {
    scenario: &'a Scenario,
    /// `A(θ_m) = ∫₀^{θ_m} ∂_θ c(s, T(s)) ds`.
    drift: Vec<f64>,
    /// `∫ w(y, T(β)) μ(dβ)` on a uniform table over `[TABLE_LO, TABLE_HI]`.
    table: Option<Vec<f64>>,
    previous: &'a [f64],
    mesh: &'a Mesh,
}

impl<'a> Frozen<'a> {
    fn new(scenario: &'a Scenario, mesh: &'a Mesh, previous: &'a [f64]) -> Self {
        let c = &scenario.cost.transport;
        let mut drift = Vec::with_capacity(mesh.theta.len());
        let mut acc = CompensatedSum::new();
        drift.push(0.0);
        for m in 0..mesh.steps() {
            let (a, b) = (mesh.theta[m], mesh.theta[m + 1]);
            let fa = c.d_theta_1d(a, previous[m]);
            let fb = c.d_theta_1d(b, previous[m + 1]);
            acc.add(0.5 * (b - a) * (fa + fb));
            drift.push(acc.value());
        }
        let table = scenario.cost.has_kernel().then(|| {
            use rayon::prelude::*;
            (0..TABLE_POINTS)
                .into_par_iter()
                .map(|k| {
                    let y = TABLE_LO + (TABLE_HI - TABLE_LO) * k as f64 / (TABLE_POINTS - 1) as f64;
                    Self::kernel_integral(scenario, mesh, previous, y)
                })
                .collect()
        });
        Self { scenario, drift, table, previous, mesh }
    }

    fn kernel_integral(scenario: &Scenario, mesh: &Mesh, previous: &[f64], y: f64) -> f64 {
        let cost = &scenario.cost;
        let mut acc = CompensatedSum::new();
        let mut wa = cost.kernel_at([y, 0.0], [previous[0], 0.0]);
        for m in 0..mesh.steps() {
            let wb = cost.kernel_at([y, 0.0], [previous[m + 1], 0.0]);
            acc.add(0.5 * (mesh.theta[m + 1] - mesh.theta[m]) * mesh.rho[m] * (wa + wb));
            wa = wb;
        }
        acc.value()
    }

    fn phi(&self, y: f64) -> f64 {
        let potential = self.scenario.cost.potential_at([y, 0.0]);
        let interaction = match &self.table {
            None => 0.0,
            Some(t) if (TABLE_LO..=TABLE_HI).contains(&y) => {
                let pos = (y - TABLE_LO) / (TABLE_HI - TABLE_LO) * (TABLE_POINTS - 1) as f64;
                let k = (pos.floor() as usize).min(TABLE_POINTS - 2);
                let frac = pos - k as f64;
                t[k] * (1.0 - frac) + t[k + 1] * frac
            }
            Some(_) => Self::kernel_integral(self.scenario, self.mesh, self.previous, y),
        };
        potential + interaction
    }

    fn rhs(&self, constant: f64, rho: f64, theta: f64, drift: f64, t: f64) -> f64 {
        let c = self.scenario.cost.transport.eval([theta, 0.0], [t, 0.0]);
        constant * rho * (-drift + c + self.phi(t)).exp()
    }

    /// RK4 march from `T(0) = 0`. Returns `None` on blow-up.
    fn march(&self, constant: f64) -> Option<Vec<f64>> {
        let mesh = self.mesh;
        let mut out = Vec::with_capacity(mesh.theta.len());
        let mut t = 0.0;
        out.push(t);
        for m in 0..mesh.steps() {
            let (a, b) = (mesh.theta[m], mesh.theta[m + 1]);
            let h = b - a;
            let mid = 0.5 * (a + b);
            let (da, db) = (self.drift[m], self.drift[m + 1]);
            let dm = 0.5 * (da + db);
            let rho = mesh.rho[m];
            let k1 = self.rhs(constant, rho, a, da, t);
            let k2 = self.rhs(constant, rho, mid, dm, t + 0.5 * h * k1);
            let k3 = self.rhs(constant, rho, mid, dm, t + 0.5 * h * k2);
            let k4 = self.rhs(constant, rho, b, db, t + h * k3);
            t += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if !t.is_finite() || t > BLOW_UP {
                return None;
            }
            out.push(t);
        }
        Some(out)
    }

    fn end_value(&self, constant: f64) -> (f64, Option<Vec<f64>>) {
        match self.march(constant) {
            Some(path) => (*path.last().expect("nonempty"), Some(path)),
            None => (f64::INFINITY, None),
        }
    }

    /// Finds `C` with `T(1) = 1`: geometric bracketing, bisection in `log C`,
    /// secant steps if `T(1)` turns out non-monotone in `C`.
    fn shoot(&self) -> Result<(f64, Vec<f64>)> {
        let mut lo = 1.0;
        let (mut g_lo, mut p_lo) = self.end_value(lo);
        let (mut hi, mut g_hi, mut p_hi) = (lo, g_lo, p_lo.clone());
        if (g_lo - 1.0).abs() <= SHOOT_TOLERANCE {
            return Ok((lo, p_lo.expect("finite end value")));
        }
        if g_lo < 1.0 {
            while g_hi < 1.0 {
                hi *= 10.0;
                if hi > C_MAX {
                    return Err(self.no_bracket());
                }
                (g_hi, p_hi) = self.end_value(hi);
            }
            lo = hi / 10.0;
            (g_lo, p_lo) = self.end_value(lo);
        } else {
            while g_lo > 1.0 {
                lo /= 10.0;
                if lo < C_MIN {
                    return Err(self.no_bracket());
                }
                (g_lo, p_lo) = self.end_value(lo);
            }
            hi = lo * 10.0;
            (g_hi, p_hi) = self.end_value(hi);
        }
        let mut best = if (g_lo - 1.0).abs() <= (g_hi - 1.0).abs() { (lo, g_lo, p_lo) } else { (hi, g_hi, p_hi) };
        for _ in 0..MAX_BISECTIONS {
            if (best.1 - 1.0).abs() <= SHOOT_TOLERANCE || hi / lo - 1.0 <= 4.0 * f64::EPSILON {
                break;
            }
            let mid = (lo * hi).sqrt();
            let (g_mid, p_mid) = self.end_value(mid);
            if g_mid < g_lo || g_mid > g_hi {
                return self.secant(lo, g_lo, hi, g_hi);
            }
            if (g_mid - 1.0).abs() < (best.1 - 1.0).abs() {
                best = (mid, g_mid, p_mid);
            }
            if g_mid < 1.0 {
                (lo, g_lo) = (mid, g_mid);
            } else {
                (hi, g_hi) = (mid, g_mid);
            }
        }
        match best.2 {
            Some(path) => Ok((best.0, path)),
            None => Err(self.no_bracket()),
        }
    }

    fn secant(&self, mut a: f64, mut ga: f64, mut b: f64, mut gb: f64) -> Result<(f64, Vec<f64>)> {
        for _ in 0..MAX_BISECTIONS {
            if !gb.is_finite() || gb == ga {
                break;
            }
            let next = b - (gb - 1.0) * (b - a) / (gb - ga);
            if !(next > 0.0) {
                break;
            }
            let (g_next, path) = self.end_value(next);
            if (g_next - 1.0).abs() <= SHOOT_TOLERANCE {
                if let Some(p) = path {
                    return Ok((next, p));
                }
            }
            (a, ga, b, gb) = (b, gb, next, g_next);
        }
        Err(self.no_bracket())
    }

    fn no_bracket(&self) -> Error {
        Error::NoBracket { at_low: self.end_value(C_MIN).0, at_high: self.end_value(C_MAX).0 }
    }
}

/// Transport map of a log-congestion equilibrium on `[0, 1]` by outer Picard
/// iteration on the nonlocal terms and shooting on `C`.
///
/// The final `ν` gives each strategy cell the `μ`-mass of its preimage under
/// the continuous `T`; `final_map` snaps `T` at the type nodes to the nearest
/// strategy node.
pub fn solve_ode_map(scenario: &Scenario) -> Result<SolveReport> {
    let dim = scenario.dim();
    if dim != 1 {
        return Err(Error::UnsupportedDimension { dim, context: "ode requires 1D".into() });
    }
    if scenario.cost.congestion != Congestion::Log {
        return Err(Error::Precondition("ode requires log congestion".into()));
    }
    for (name, g) in [("type", &scenario.type_grid), ("strategy", &scenario.strategy_grid)] {
        if g.bounds()[0] != (0.0, 1.0) {
            return Err(Error::Precondition(format!("ode requires the {name} domain [0, 1]")));
        }
    }
    if scenario.cost.reference.is_some() {
        return Err(Error::Precondition("ode requires the Lebesgue reference measure".into()));
    }
    let params = &scenario.solver;
    let mesh = Mesh::new(scenario);
    let mut current: Vec<f64> = mesh.theta.clone();
    let mut nu = cell_image(scenario, &mesh, &current)?;
    let mut trace = Vec::new();
    let mut constant = f64::NAN;
    let mut converged = false;
    for k in 0..params.max_iter {
        let frozen = Frozen::new(scenario, &mesh, &current);
        let (c, next) = frozen.shoot()?;
        let change = next.iter().zip(&current).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if !change.is_finite() {
            return Err(Error::PicardDiverged { iterations: k + 1, last_change: change });
        }
        let next_nu = cell_image(scenario, &mesh, &next)?;
        trace.push(TraceRow {
            iteration: k + 1,
            successive_w1: Some(w1_distance(&nu, &next_nu)?),
            objective: objective_if_symmetric(&next_nu, &scenario.mu, scenario)?,
            defect: change,
        });
        constant = c;
        current = next;
        nu = next_nu;
        if change <= params.tol {
            converged = true;
            break;
        }
    }
    let strategy_grid = scenario.strategy_grid.clone();
    let targets = mesh.node_index.iter().map(|&m| strategy_grid.nearest([current[m], 0.0])).collect();
    let map = StrategyMap::new(strategy_grid, targets)?;
    let gamma = wc(&scenario.mu, &nu, &scenario.cost.transport)?.plan;
    let iterations = trace.len();
    Ok(SolveReport {
        solver: SolverKind::Ode,
        final_nu: nu,
        final_map: Some(map),
        final_gamma: gamma,
        trace,
        converged,
        iterations,
        ode_constant: Some(constant),
        contraction_factor: None,
        restarts: 0,
        stop_reason: if converged {
            format!("sup |T_k+1 - T_k| <= {:e}", params.tol)
        } else {
            format!("iteration cap {} reached", params.max_iter)
        },
    })
}

/// Strategy cell masses `μ(T⁻¹(cell))` for a nondecreasing mesh function `T`.
fn cell_image(scenario: &Scenario, mesh: &Mesh, t: &[f64]) -> Result<DiscreteMeasure> {
    let grid = &scenario.strategy_grid;
    let edges = grid.axis_edges(0);
    // μ-CDF at every mesh node: piecewise linear within each step
    let mut cdf = Vec::with_capacity(mesh.theta.len());
    let mut acc = CompensatedSum::new();
    cdf.push(0.0);
    for m in 0..mesh.steps() {
        acc.add(mesh.rho[m] * (mesh.theta[m + 1] - mesh.theta[m]));
        cdf.push(acc.value());
    }
    // running maximum guards against rounding-level dips in T
    let mut monotone = t.to_vec();
    for m in 1..monotone.len() {
        monotone[m] = monotone[m].max(monotone[m - 1]);
    }
    let mass_below = |y: f64| -> f64 {
        let m = monotone.partition_point(|&v| v < y);
        if m == 0 {
            return 0.0;
        }
        if m >= monotone.len() {
            return cdf[cdf.len() - 1];
        }
        let (ta, tb) = (monotone[m - 1], monotone[m]);
        let frac = if tb > ta { (y - ta) / (tb - ta) } else { 1.0 };
        cdf[m - 1] + frac * (cdf[m] - cdf[m - 1])
    };
    let n = grid.len();
    let mut below: Vec<f64> = edges.iter().map(|&e| mass_below(e)).collect();
    below[0] = 0.0;
    below[n] = cdf[cdf.len() - 1];
    let weights = (0..n).map(|j| (below[j + 1] - below[j]).max(0.0)).collect();
    DiscreteMeasure::new(grid.clone(), weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_cost_gives_the_identity_for_uniform_types() {
        let s = Scenario::named("trivial_uniform").unwrap().with_grid(64).unwrap();
        let r = solve_ode_map(&s).unwrap();
        assert!(r.converged);
        assert!((r.ode_constant.unwrap() - 1.0).abs() < 1e-12);
        for (&w, &v) in r.final_nu.weights().iter().zip(s.strategy_grid.cell_volumes()) {
            assert!((w - v).abs() < 1e-12);
        }
        assert_eq!(r.final_map.unwrap().targets(), (0..64).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn two_dimensional_scenarios_are_rejected() {
        let s = Scenario::named("fig3").unwrap();
        match solve_ode_map(&s) {
            Err(Error::UnsupportedDimension { context, .. }) => assert_eq!(context, "ode requires 1D"),
            other => panic!("{other:?}"),
        }
    }
}
