//! Total cost, the energy `J`, and equilibrium certificates.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{Coupling, DiscreteMeasure};
use crate::model::{CostModel, Grid, Point};
use crate::numeric::CompensatedSum;
use crate::transport::{wc, GroundCost, TransportResult};

/// Default relative tolerance for [`DefectReport::is_equilibrium`].
pub const DEFAULT_RELATIVE_TOLERANCE: f64 = 1e-3;
const MARGINAL_TOLERANCE: f64 = 1e-10;

/// `V(ν, x) = f(x, d(x)) + V₀(x) + Σ_y w(x, y) ν(y)` on every strategy node.
/// Zero density under log congestion gives `-∞`.
pub fn interaction_field(nu: &DiscreteMeasure, cost: &CostModel) -> Result<Vec<f64>> {
    let grid = nu.grid();
    let m0 = cost.reference_weights(grid);
    let density = nu.density_wrt(&m0)?;
    let atoms: Vec<(Point, f64)> = nu.support().map(|j| (grid.point(j), nu.weights()[j])).collect();
    let has_kernel = cost.has_kernel();
    Ok((0..grid.len())
        .into_par_iter()
        .map(|x| {
            let px = grid.point(x);
            let mut v = cost.congestion.marginal(density[x]) + cost.potential_at(px);
            if has_kernel {
                let mut acc = CompensatedSum::new();
                for &(py, w) in &atoms {
                    acc.add(cost.kernel_at(px, py) * w);
                }
                v += acc.value();
            }
            v
        })
        .collect())
}

/// `F(θ, x, ν)` for a type point and a strategy node.
pub fn total_cost(theta: Point, x: usize, nu: &DiscreteMeasure, cost: &CostModel) -> Result<f64> {
    let grid = nu.grid();
    if x >= grid.len() {
        return Err(Error::Precondition(format!("strategy node {x} outside the grid")));
    }
    let m0 = cost.reference_weights(grid);
    let d = nu.density_wrt(&m0)?[x];
    let px = grid.point(x);
    let interaction = nu.support().map(|j| cost.kernel_at(px, grid.point(j)) * nu.weights()[j]);
    Ok(cost.transport.eval(theta, px)
        + cost.congestion.marginal(d)
        + cost.potential_at(px)
        + interaction.collect::<CompensatedSum>().value())
}

/// Normalisation for relative defects: the spread of `F(θ, x, ν)` over
/// `θ ∈ supp μ`, `x ∈ X`, floored at `1e-9·max(1, max|F|)`.
pub fn cost_scale(types: &[Point], strategy_grid: &Grid, field: &[f64], cost: &CostModel) -> f64 {
    let (lo, hi, big) = types
        .par_iter()
        .map(|&theta| {
            let mut acc = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
            for (x, v) in field.iter().enumerate() {
                let f = cost.transport.eval(theta, strategy_grid.point(x)) + v;
                if f.is_finite() {
                    acc = (acc.0.min(f), acc.1.max(f), acc.2.max(f.abs()));
                }
            }
            acc
        })
        .reduce(
            || (f64::INFINITY, f64::NEG_INFINITY, 0.0),
            |a, b| (a.0.min(b.0), a.1.max(b.1), a.2.max(b.2)),
        );
    let range = if hi >= lo { hi - lo } else { 0.0 };
    range.max(1e-9 * big.max(1.0))
}

/// Defect of a coupling against the equilibrium condition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefectReport {
    /// `max_{γ(θ,x) > δ} F(θ, x, ν) − min_y F(θ, y, ν)`, cost units.
    pub support_defect: f64,
    pub relative_defect: f64,
    pub cost_scale: f64,
    pub marginal_error: f64,
    pub support_threshold: f64,
    pub tolerance: f64,
    pub is_equilibrium: bool,
}

impl DefectReport {
    pub fn within(&self, relative_tolerance: f64) -> bool {
        self.relative_defect <= relative_tolerance && self.marginal_error <= MARGINAL_TOLERANCE
    }
}

/// Checks `γ` against `F(·, ·, ν)` with `ν` its second marginal. `threshold`
/// defaults to `1e-9 / (rows · cols)`.
pub fn equilibrium_defect(
    gamma: &Coupling,
    mu: &DiscreteMeasure,
    cost: &CostModel,
    threshold: Option<f64>,
) -> Result<DefectReport> {
    let rows = gamma.rows();
    let cols = gamma.cols();
    if **rows != **mu.grid() {
        return Err(Error::InvalidCoupling("coupling rows are not on the type grid of mu".into()));
    }
    let nu = DiscreteMeasure::new(cols.clone(), gamma.col_sums())?;
    equilibrium_defect_against(gamma, mu, &nu, cost, threshold)
}

/// As [`equilibrium_defect`] with the field evaluated at a given `ν` rather
/// than the coupling's second marginal. Useful when `γ` is a transport plan
/// for `ν` whose rounding empties nodes that `ν` charges.
pub fn equilibrium_defect_against(
    gamma: &Coupling,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostModel,
    threshold: Option<f64>,
) -> Result<DefectReport> {
    let rows = gamma.rows();
    let cols = gamma.cols();
    if **rows != **mu.grid() {
        return Err(Error::InvalidCoupling("coupling rows are not on the type grid of mu".into()));
    }
    if **cols != **nu.grid() {
        return Err(Error::InvalidCoupling("coupling columns are not on the grid of nu".into()));
    }
    let delta = threshold.unwrap_or(1e-9 / (rows.len() * cols.len()) as f64);
    let field = interaction_field(nu, cost)?;

    let row_sums = gamma.row_sums();
    let marginal_error =
        row_sums.iter().zip(mu.weights()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    // group supported entries by row
    let mut by_row: Vec<(usize, Vec<usize>)> = Vec::new();
    for &(i, j, w) in gamma.entries() {
        if w <= delta {
            continue;
        }
        match by_row.last_mut() {
            Some((r, js)) if *r == i => js.push(j),
            _ => by_row.push((i, vec![j])),
        }
    }
    if by_row.is_empty() {
        return Err(Error::EmptySupport(delta));
    }
    let support_defect = by_row
        .par_iter()
        .map(|(i, js)| {
            let theta = rows.point(*i);
            let row_min = (0..cols.len())
                .map(|y| cost.transport.eval(theta, cols.point(y)) + field[y])
                .fold(f64::INFINITY, f64::min);
            js.iter()
                .map(|&j| cost.transport.eval(theta, cols.point(j)) + field[j] - row_min)
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);

    let types: Vec<Point> = mu.support().map(|i| rows.point(i)).collect();
    let scale = cost_scale(&types, cols, &field, cost);
    let relative_defect = support_defect / scale;
    Ok(DefectReport {
        support_defect,
        relative_defect,
        cost_scale: scale,
        marginal_error,
        support_threshold: delta,
        tolerance: DEFAULT_RELATIVE_TOLERANCE,
        is_equilibrium: relative_defect <= DEFAULT_RELATIVE_TOLERANCE && marginal_error <= MARGINAL_TOLERANCE,
    })
}

/// `J(ν) = Σ F(d) m₀ + Σ V₀ ν + ½ ΣΣ w ν ν`; requires a symmetric kernel.
pub fn energy(nu: &DiscreteMeasure, cost: &CostModel) -> Result<f64> {
    cost.require_symmetric()?;
    let grid = nu.grid();
    let m0 = cost.reference_weights(grid);
    let density = nu.density_wrt(&m0)?;
    let mut acc = CompensatedSum::new();
    if !cost.congestion.is_none() {
        for (d, m) in density.iter().zip(&m0) {
            acc.add(cost.congestion.primitive(*d) * m);
        }
    }
    let support: Vec<usize> = nu.support().collect();
    let w = nu.weights();
    for &x in &support {
        acc.add(cost.potential_at(grid.point(x)) * w[x]);
    }
    if cost.has_kernel() {
        let pair: f64 = support
            .par_iter()
            .map(|&x| {
                let px = grid.point(x);
                support.iter().map(|&y| cost.kernel_at(px, grid.point(y)) * w[y]).collect::<CompensatedSum>().value()
                    * w[x]
            })
            .collect::<Vec<f64>>()
            .into_iter()
            .collect::<CompensatedSum>()
            .value();
        acc.add(0.5 * pair);
    }
    Ok(acc.value())
}

/// `W_c(μ, ν) + J(ν)`.
pub fn objective(nu: &DiscreteMeasure, mu: &DiscreteMeasure, cost: &CostModel) -> Result<f64> {
    Ok(wc(mu, nu, &cost.transport)?.value + energy(nu, cost)?)
}

/// Euler-Lagrange residual in absolute and relative form.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Residual {
    pub absolute: f64,
    pub relative: f64,
    pub scale: f64,
}

/// First variation `G = v + V(ν, ·)` of `W_c(μ, ·) + J` at `ν`, with the
/// transport solution whose dual `v` was used.
///
/// When the optimal plan is degenerate the dual is not unique; among the
/// optimal duals reachable by shifting the connected pieces of the plan's
/// support, the one with the flattest `G` on `supp ν` is returned.
pub fn first_variation(
    nu: &DiscreteMeasure,
    mu: &DiscreteMeasure,
    cost: &CostModel,
) -> Result<(Vec<f64>, Vec<f64>, TransportResult)> {
    cost.require_symmetric()?;
    let mut transport = wc(mu, nu, &cost.transport)?;
    let field = interaction_field(nu, cost)?;
    flatten_dual(&mut transport, mu, nu, &field, cost, 1e-9 / nu.len() as f64);
    let g = transport.dual_strategy_potential.iter().zip(&field).map(|(v, f)| v + f).collect();
    Ok((g, field, transport))
}

const MAX_FLATTEN_COMPONENTS: usize = 64;
/// Plan arcs at or below this mass do not tie components together.
const ARC_MASS_FLOOR: f64 = 1e-9;

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Shifts `(u, v)` by a constant on each connected component of the plan's
/// support (`u += s`, `v −= s`), keeping dual feasibility, so as to minimise
/// `max_{ν > δ} G − min G`. Off-support strategy nodes take the c-transform.
fn flatten_dual(
    transport: &mut TransportResult,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    field: &[f64],
    cost: &CostModel,
    delta: f64,
) {
    let rows = mu.grid();
    let cols = nu.grid();
    let (nr, nc) = (rows.len(), cols.len());
    let mut parent: Vec<usize> = (0..nr + nc).collect();
    for &(i, j, _) in transport.plan.entries().iter().filter(|e| e.2 > ARC_MASS_FLOOR) {
        let (a, b) = (find(&mut parent, i), find(&mut parent, nr + j));
        if a != b {
            parent[a] = b;
        }
    }
    // components that carry mass; everything else is an empty strategy node
    let mut index = vec![usize::MAX; nr + nc];
    let mut k = 0;
    let row_support: Vec<usize> = mu.support().collect();
    let col_support: Vec<usize> = nu.support().collect();
    for node in row_support.iter().copied().chain(col_support.iter().map(|&j| nr + j)) {
        let root = find(&mut parent, node);
        if index[root] == usize::MAX {
            index[root] = k;
            k += 1;
        }
    }
    if k > MAX_FLATTEN_COMPONENTS {
        return;
    }
    let comp_of = |parent: &mut [usize], node: usize| index[find(parent, node)];
    let row_comp: Vec<usize> = row_support.iter().map(|&i| comp_of(&mut parent, i)).collect();
    let col_comp: Vec<usize> = (0..nc)
        .map(|j| if nu.weights()[j] > 0.0 { comp_of(&mut parent, nr + j) } else { usize::MAX })
        .collect();
    let empty: Vec<usize> = (0..nc).filter(|&j| col_comp[j] == usize::MAX).collect();
    if k == 1 && empty.is_empty() {
        return;
    }

    let u = &transport.dual_type_potential;
    let v = &transport.dual_strategy_potential;
    let g: Vec<f64> = v.iter().zip(field).map(|(a, b)| a + b).collect();
    if g.iter().any(|x| !x.is_finite()) {
        return;
    }
    let mut hi = vec![f64::NEG_INFINITY; k];
    let mut lo = vec![f64::INFINITY; k];
    for j in 0..nc {
        let c = col_comp[j];
        if c == usize::MAX {
            continue;
        }
        lo[c] = lo[c].min(g[j]);
        if nu.weights()[j] > delta {
            hi[c] = hi[c].max(g[j]);
        }
    }
    // w[b][a]: tightest bound on s_a − s_b from rows in a and strategy nodes in b
    let mut w = vec![vec![f64::INFINITY; k]; k];
    // through_empty[a]: min over empty nodes j of G_j + slack to component a
    let mut through_empty = vec![f64::INFINITY; k];
    for (r, &i) in row_support.iter().enumerate() {
        let a = row_comp[r];
        let theta = rows.point(i);
        for j in 0..nc {
            let slack = (cost.transport.eval(theta, cols.point(j)) - u[i] - v[j]).max(0.0);
            match col_comp[j] {
                usize::MAX => through_empty[a] = through_empty[a].min(g[j] + slack),
                b if b != a => w[b][a] = w[b][a].min(slack),
                _ => {}
            }
        }
    }
    let min_g = g.iter().copied().fold(f64::INFINITY, f64::min);
    let max_hi = hi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max_hi.is_finite() {
        return;
    }
    let mut t_hi = max_hi - min_g;
    let mut t_lo = (0..k).filter(|&c| hi[c].is_finite()).map(|c| hi[c] - lo[c]).fold(0.0, f64::max);
    let feasible = |t: f64| -> Option<Vec<f64>> {
        let mut d = w.clone();
        for c in 0..k {
            if !hi[c].is_finite() {
                continue;
            }
            for a in 0..k {
                let via_empty = t - hi[c] + through_empty[a];
                let direct = if a == c { f64::INFINITY } else { t - hi[c] + lo[a] };
                d[c][a] = d[c][a].min(via_empty).min(direct);
            }
        }
        for c in 0..k {
            d[c][c] = d[c][c].min(0.0);
        }
        for m in 0..k {
            for a in 0..k {
                if !d[a][m].is_finite() {
                    continue;
                }
                for b in 0..k {
                    let via = d[a][m] + d[m][b];
                    if via < d[a][b] {
                        d[a][b] = via;
                    }
                }
            }
        }
        let eps = 1e-13 * (1.0 + t.abs() + max_hi.abs());
        if (0..k).any(|c| d[c][c] < -eps) {
            return None;
        }
        Some((0..k).map(|a| (0..k).map(|b| d[b][a]).fold(0.0, f64::min)).collect())
    };
    if t_lo >= t_hi {
        return;
    }
    let mut shifts = match feasible(t_hi) {
        Some(s) => s,
        None => return,
    };
    for _ in 0..100 {
        if t_hi - t_lo <= 1e-15 * (1.0 + t_hi.abs()) {
            break;
        }
        let mid = 0.5 * (t_lo + t_hi);
        match feasible(mid) {
            Some(s) => {
                t_hi = mid;
                shifts = s;
            }
            None => t_lo = mid,
        }
    }

    let mut u = transport.dual_type_potential.clone();
    let mut v = transport.dual_strategy_potential.clone();
    for (r, &i) in row_support.iter().enumerate() {
        u[i] += shifts[row_comp[r]];
    }
    for j in 0..nc {
        if col_comp[j] != usize::MAX {
            v[j] -= shifts[col_comp[j]];
        }
    }
    for &j in &empty {
        let pj = cols.point(j);
        v[j] = row_support.iter().map(|&i| cost.transport.eval(rows.point(i), pj) - u[i]).fold(f64::INFINITY, f64::min);
    }
    let in_support = {
        let mut m = vec![false; nr];
        row_support.iter().for_each(|&i| m[i] = true);
        m
    };
    for i in (0..nr).filter(|&i| !in_support[i]) {
        let theta = rows.point(i);
        u[i] = (0..nc).map(|j| cost.transport.eval(theta, cols.point(j)) - v[j]).fold(f64::INFINITY, f64::min);
    }
    let pin = v[col_support[0]];
    v.iter_mut().for_each(|x| *x -= pin);
    u.iter_mut().for_each(|x| *x += pin);
    transport.try_replace_duals(u, v, mu, nu, &GroundCost::Transport(cost.transport));
}

/// `max_{ν(x) > δ} G(x) − min_x G(x)`; `threshold` defaults to `1e-9 / n`.
pub fn el_residual(
    nu: &DiscreteMeasure,
    mu: &DiscreteMeasure,
    cost: &CostModel,
    threshold: Option<f64>,
) -> Result<Residual> {
    let (g, field, _) = first_variation(nu, mu, cost)?;
    residual_from(&g, &field, nu, mu, cost, threshold)
}

pub(crate) fn residual_from(
    g: &[f64],
    field: &[f64],
    nu: &DiscreteMeasure,
    mu: &DiscreteMeasure,
    cost: &CostModel,
    threshold: Option<f64>,
) -> Result<Residual> {
    let delta = threshold.unwrap_or(1e-9 / nu.len() as f64);
    let support = nu.support_above(delta);
    if support.is_empty() {
        return Err(Error::EmptySupport(delta));
    }
    let max_on_support = support.iter().map(|&x| g[x]).fold(f64::NEG_INFINITY, f64::max);
    let min_all = g.iter().copied().fold(f64::INFINITY, f64::min);
    let absolute = max_on_support - min_all;
    let types: Vec<Point> = mu.support().map(|i| mu.grid().point(i)).collect();
    let scale = cost_scale(&types, nu.grid(), field, cost);
    Ok(Residual { absolute, relative: absolute / scale, scale })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{AffinePowerTerm, Congestion, TransportCost};

    fn unit(n: usize) -> Arc<Grid> {
        Arc::new(Grid::uniform_1d(0.0, 1.0, n).unwrap())
    }

    fn quadratic() -> CostModel {
        CostModel::new(TransportCost::new(2.0, 2.0).unwrap(), Congestion::None)
    }

    fn sq_kernel() -> AffinePowerTerm {
        AffinePowerTerm::new(1.0, &[vec![1.0]], &[vec![-1.0]], &[0.0], 2.0, true).unwrap()
    }

    #[test]
    fn total_cost_examples() {
        let g = unit(10);
        let nu = DiscreteMeasure::dirac(g.clone(), 7).unwrap();
        let x = 3;
        let px = g.point(x);
        assert_eq!(total_cost(px, x, &nu, &quadratic()).unwrap(), 0.0);
        let cost = quadratic().with_kernel(sq_kernel());
        let theta = [0.12, 0.0];
        let expected = (theta[0] - px[0]).powi(2) + (px[0] - g.point(7)[0]).powi(2);
        assert!((total_cost(theta, x, &nu, &cost).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn diagonal_coupling_has_no_defect() {
        let g = unit(8);
        let mu = DiscreteMeasure::uniform(g);
        let r = equilibrium_defect(&Coupling::diagonal(&mu), &mu, &quadratic(), None).unwrap();
        assert_eq!(r.support_defect, 0.0);
        assert_eq!(r.marginal_error, 0.0);
        assert!(r.is_equilibrium);
    }

    #[test]
    fn product_coupling_is_not_an_equilibrium() {
        let g = unit(8);
        let mu = DiscreteMeasure::uniform(g);
        let r = equilibrium_defect(&Coupling::product(&mu, &mu), &mu, &quadratic(), None).unwrap();
        assert!(r.support_defect > 0.0);
        assert!(!r.is_equilibrium);
    }

    #[test]
    fn defect_ignores_constant_shift_of_c() {
        let g = unit(6);
        let mu = DiscreteMeasure::new(g.clone(), vec![0.1, 0.3, 0.1, 0.2, 0.1, 0.2]).unwrap();
        let nu = DiscreteMeasure::uniform(g.clone());
        let gamma = Coupling::product(&mu, &nu);
        let base = quadratic();
        let mut shifted = base.clone();
        shifted.potential.push(AffinePowerTerm::new(5.0, &[vec![0.0]], &[], &[1.0], 1.0, false).unwrap());
        let a = equilibrium_defect(&gamma, &mu, &base, None).unwrap();
        let b = equilibrium_defect(&gamma, &mu, &shifted, None).unwrap();
        assert!((a.support_defect - b.support_defect).abs() < 1e-12);
    }

    #[test]
    fn energy_examples() {
        let g = unit(16);
        let log = CostModel::new(TransportCost::zero(), Congestion::Log);
        let nu = DiscreteMeasure::proportional_to_volume(g.clone());
        assert!((energy(&nu, &log).unwrap() + 1.0).abs() < 1e-14);

        let three = CostModel::new(TransportCost::zero(), Congestion::None)
            .with_potential(AffinePowerTerm::new(3.0, &[vec![0.0]], &[], &[1.0], 1.0, false).unwrap());
        assert!((energy(&nu, &three).unwrap() - 3.0).abs() < 1e-14);

        let two = Arc::new(Grid::new(vec![vec![0.0, 1.0]], vec![(0.0, 1.0)]).unwrap());
        let half = DiscreteMeasure::uniform(two);
        let pair = CostModel::new(TransportCost::zero(), Congestion::None).with_kernel(sq_kernel());
        assert!((energy(&half, &pair).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn energy_rejects_asymmetric_kernels() {
        let nu = DiscreteMeasure::uniform(unit(4));
        let mut term = sq_kernel();
        term.symmetric = false;
        let cost = CostModel::new(TransportCost::zero(), Congestion::None).with_kernel(term);
        assert!(matches!(energy(&nu, &cost), Err(Error::AsymmetricKernel(_))));
    }

    #[test]
    fn uniform_is_stationary_without_transport_or_interaction() {
        let g = unit(32);
        let cost = CostModel::new(TransportCost::zero(), Congestion::Log);
        let nu = DiscreteMeasure::proportional_to_volume(g.clone());
        let r = el_residual(&nu, &nu, &cost, None).unwrap();
        assert!(r.absolute < 1e-12);
        let mut w = nu.weights().to_vec();
        let moved = 0.1 * w[0];
        w[0] -= moved;
        w[31] += moved;
        let perturbed = DiscreteMeasure::new(g, w).unwrap();
        assert!(el_residual(&perturbed, &nu, &cost, None).unwrap().absolute > r.absolute);
    }
}
