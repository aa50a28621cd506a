//! Optimal transport: exact plans and duals, W₁ and the permutation-quotient distance.

mod assignment;
mod network_simplex;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measures::{Coupling, DiscreteMeasure};
use crate::model::{Grid, Point, TransportCost};
use crate::numeric::CompensatedSum;

pub use assignment::min_cost_assignment;

const MARGINAL_TOLERANCE: f64 = 1e-10;
const DUAL_TOLERANCE: f64 = 1e-9;
const GAP_TOLERANCE: f64 = 1e-9;

/// Weighted points with positive mass.
pub trait Atoms {
    fn atoms(&self) -> Vec<(Point, f64)>;
}

impl Atoms for DiscreteMeasure {
    fn atoms(&self) -> Vec<(Point, f64)> {
        self.support().map(|i| (self.grid().point(i), self.weights()[i])).collect()
    }
}

/// Finitely many weighted points, not tied to a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    weights: Vec<f64>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::LengthMismatch { left: points.len(), right: weights.len() });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidMeasure("point cloud weights must be finite and nonnegative".into()));
        }
        Ok(Self { points, weights })
    }

    /// Uniform weights `1/n`.
    pub fn empirical(points: Vec<Point>) -> Self {
        let w = 1.0 / points.len().max(1) as f64;
        let weights = vec![w; points.len()];
        Self { points, weights }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Atoms for PointCloud {
    fn atoms(&self) -> Vec<(Point, f64)> {
        self.points.iter().zip(&self.weights).filter(|(_, w)| **w > 0.0).map(|(p, w)| (*p, *w)).collect()
    }
}

/// Ground cost between a row grid and a column grid.
#[derive(Clone, Debug, PartialEq)]
pub enum GroundCost {
    Transport(TransportCost),
    /// `|θ − x|`.
    Euclidean,
    /// Full `rows × cols` matrix indexed by grid node.
    Matrix(Vec<Vec<f64>>),
}

impl From<TransportCost> for GroundCost {
    fn from(c: TransportCost) -> Self {
        GroundCost::Transport(c)
    }
}

impl GroundCost {
    fn eval(&self, rows: &Grid, cols: &Grid, i: usize, j: usize) -> f64 {
        match self {
            GroundCost::Transport(c) => c.eval(rows.point(i), cols.point(j)),
            GroundCost::Euclidean => crate::model::distance(rows.point(i), cols.point(j)),
            GroundCost::Matrix(m) => m[i][j],
        }
    }
}

/// Exact optimal plan with dual potentials on every node of both grids.
#[derive(Clone, Debug)]
pub struct TransportResult {
    pub value: f64,
    pub plan: Coupling,
    pub dual_type_potential: Vec<f64>,
    pub dual_strategy_potential: Vec<f64>,
    pub duality_gap: f64,
    pub pivots: usize,
}

/// `W_c(μ, ν)` by the network simplex, with a certified plan and duals.
///
/// Duals come from the optimal basis on the supports and are extended to
/// zero-mass nodes by c-transforms, so `u(θ) + v(x) ≤ c(θ, x)` holds on the
/// full product grid. The strategy potential is pinned to zero at the first
/// support node of `ν`.
pub fn wc_lp(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &GroundCost) -> Result<TransportResult> {
    let rows = mu.grid().clone();
    let cols = nu.grid().clone();
    if let GroundCost::Matrix(m) = cost {
        if m.len() != rows.len() {
            return Err(Error::LengthMismatch { left: m.len(), right: rows.len() });
        }
        if let Some(r) = m.iter().find(|r| r.len() != cols.len()) {
            return Err(Error::LengthMismatch { left: r.len(), right: cols.len() });
        }
    }
    let row_support: Vec<usize> = mu.support().collect();
    let col_support: Vec<usize> = nu.support().collect();
    if row_support.is_empty() || col_support.is_empty() {
        return Err(Error::DegenerateInput("empty support".into()));
    }
    let supply: Vec<f64> = row_support.iter().map(|&i| mu.weights()[i]).collect();
    let demand: Vec<f64> = col_support.iter().map(|&j| nu.weights()[j]).collect();
    let n = col_support.len();
    let mut matrix = vec![0.0; row_support.len() * n];
    for (a, &i) in row_support.iter().enumerate() {
        for (b, &j) in col_support.iter().enumerate() {
            matrix[a * n + b] = cost.eval(&rows, &cols, i, j);
        }
    }
    let sol = network_simplex::solve(&supply, &demand, &matrix, pivot_cap(supply.len(), demand.len()))?;

    // c-transforms: first the strategy side against supported types, then every type
    let mut v = vec![f64::INFINITY; cols.len()];
    for (b, &j) in col_support.iter().enumerate() {
        v[j] = sol.v[b];
    }
    let mut u = vec![f64::INFINITY; rows.len()];
    for (a, &i) in row_support.iter().enumerate() {
        u[i] = sol.u[a];
    }
    let in_col_support = mask(cols.len(), &col_support);
    let in_row_support = mask(rows.len(), &row_support);
    for j in (0..cols.len()).filter(|&j| !in_col_support[j]) {
        v[j] = row_support.iter().map(|&i| cost.eval(&rows, &cols, i, j) - u[i]).fold(f64::INFINITY, f64::min);
    }
    for i in (0..rows.len()).filter(|&i| !in_row_support[i]) {
        u[i] = (0..cols.len()).map(|j| cost.eval(&rows, &cols, i, j) - v[j]).fold(f64::INFINITY, f64::min);
    }

    let entries: Vec<(usize, usize, f64)> = sol
        .arcs
        .iter()
        .filter(|a| a.2 > 0.0)
        .map(|&(a, b, f)| (row_support[a], col_support[b], f))
        .collect();
    let plan = Coupling::new(rows.clone(), cols.clone(), entries)?;
    let dual = network_simplex::dual_value(&sol.u, &sol.v, &supply, &demand);
    let result = TransportResult {
        value: sol.value,
        plan,
        dual_type_potential: u,
        dual_strategy_potential: v,
        duality_gap: (sol.value - dual).abs(),
        pivots: sol.pivots,
    };
    result.certify(mu, nu, cost)?;
    Ok(result)
}

fn mask(len: usize, on: &[usize]) -> Vec<bool> {
    let mut m = vec![false; len];
    for &k in on {
        m[k] = true;
    }
    m
}

fn pivot_cap(m: usize, n: usize) -> usize {
    100 * (m + n) * ((m + n) as f64).log2().ceil().max(1.0) as usize + 10_000
}

impl TransportResult {
    /// Swaps in another dual pair, keeping the old one unless the result certifies.
    pub(crate) fn try_replace_duals(
        &mut self,
        u: Vec<f64>,
        v: Vec<f64>,
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        cost: &GroundCost,
    ) -> bool {
        let dual = network_simplex::dual_value(&u, &v, mu.weights(), nu.weights());
        let candidate = TransportResult {
            dual_type_potential: u,
            dual_strategy_potential: v,
            duality_gap: (self.value - dual).abs(),
            plan: self.plan.clone(),
            ..*self
        };
        if candidate.certify(mu, nu, cost).is_err() {
            return false;
        }
        *self = candidate;
        true
    }

    /// Marginals, dual feasibility on the full product grid, and duality gap.
    fn certify(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &GroundCost) -> Result<()> {
        let rows = self.plan.row_sums();
        let cols = self.plan.col_sums();
        let row_err = rows.iter().zip(mu.weights()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let col_err = cols.iter().zip(nu.weights()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if row_err > MARGINAL_TOLERANCE || col_err > MARGINAL_TOLERANCE {
            return Err(Error::Certificate(format!("marginal error {:e}", row_err.max(col_err))));
        }
        if self.duality_gap > GAP_TOLERANCE {
            return Err(Error::Certificate(format!("duality gap {:e}", self.duality_gap)));
        }
        let (rg, cg) = (mu.grid(), nu.grid());
        let scale = 1.0 + self.value.abs();
        for (i, ui) in self.dual_type_potential.iter().enumerate() {
            for (j, vj) in self.dual_strategy_potential.iter().enumerate() {
                let slack = cost.eval(rg, cg, i, j) - ui - vj;
                if slack < -DUAL_TOLERANCE * scale {
                    return Err(Error::Certificate(format!("dual infeasible at ({i}, {j}) by {:e}", -slack)));
                }
            }
        }
        Ok(())
    }
}

/// Transport cost under a model, as the solvers use it.
pub fn wc(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &TransportCost) -> Result<TransportResult> {
    wc_lp(mu, nu, &GroundCost::Transport(*cost))
}

/// `∫ |F_μ − F_ν|` over merged CDF breakpoints. Grids may differ.
pub fn w1_exact_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    for m in [mu, nu] {
        if m.grid().dim() != 1 {
            return Err(Error::UnsupportedDimension {
                dim: m.grid().dim(),
                context: "w1_exact_1d needs 1D measures; use wc_lp".into(),
            });
        }
    }
    let a: Vec<(f64, f64)> = mu.atoms().into_iter().map(|(p, w)| (p[0], w)).collect();
    let b: Vec<(f64, f64)> = nu.atoms().into_iter().map(|(p, w)| (p[0], w)).collect();
    Ok(w1_sorted_atoms(&a, &b))
}

/// Both lists sorted by position with positive weights.
fn w1_sorted_atoms(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (ta, tb): (f64, f64) = (a.iter().map(|x| x.1).sum(), b.iter().map(|x| x.1).sum());
    let (mut ia, mut ib) = (0, 0);
    let (mut fa, mut fb) = (CompensatedSum::new(), CompensatedSum::new());
    let mut total = CompensatedSum::new();
    let mut last: Option<f64> = None;
    while ia < a.len() || ib < b.len() {
        let next = match (a.get(ia), b.get(ib)) {
            (Some(x), Some(y)) => x.0.min(y.0),
            (Some(x), None) => x.0,
            (None, Some(y)) => y.0,
            (None, None) => unreachable!(),
        };
        if let Some(t) = last {
            total.add((fa.value() / ta - fb.value() / tb).abs() * (next - t));
        }
        while ia < a.len() && a[ia].0 == next {
            fa.add(a[ia].1);
            ia += 1;
        }
        while ib < b.len() && b[ib].0 == next {
            fb.add(b[ib].1);
            ib += 1;
        }
        last = Some(next);
    }
    total.value()
}

/// W₁ between two weighted point sets: exact CDF formula when both live on
/// the line, network simplex on the supports otherwise.
pub fn w1<A: Atoms + ?Sized, B: Atoms + ?Sized>(a: &A, b: &B) -> Result<f64> {
    let mut xa = a.atoms();
    let mut xb = b.atoms();
    if xa.is_empty() || xb.is_empty() {
        return Err(Error::DegenerateInput("empty support".into()));
    }
    if xa.iter().chain(&xb).all(|(p, _)| p[1] == 0.0) {
        xa.sort_by(|p, q| p.0[0].total_cmp(&q.0[0]));
        xb.sort_by(|p, q| p.0[0].total_cmp(&q.0[0]));
        let flat = |v: &[(Point, f64)]| v.iter().map(|(p, w)| (p[0], *w)).collect::<Vec<_>>();
        return Ok(w1_sorted_atoms(&flat(&xa), &flat(&xb)));
    }
    lp_on_atoms(&xa, &xb, crate::model::distance)
}

/// Optimal transport value between two weighted point sets under `c`, by the
/// network simplex on the supports. Weights are normalised.
pub fn wc_atoms<A: Atoms + ?Sized, B: Atoms + ?Sized>(a: &A, b: &B, cost: &TransportCost) -> Result<f64> {
    let (xa, xb) = (a.atoms(), b.atoms());
    if xa.is_empty() || xb.is_empty() {
        return Err(Error::DegenerateInput("empty support".into()));
    }
    lp_on_atoms(&xa, &xb, |p, q| cost.eval(p, q))
}

fn lp_on_atoms(xa: &[(Point, f64)], xb: &[(Point, f64)], cost: impl Fn(Point, Point) -> f64) -> Result<f64> {
    let ta: f64 = xa.iter().map(|x| x.1).sum();
    let tb: f64 = xb.iter().map(|x| x.1).sum();
    let supply: Vec<f64> = xa.iter().map(|x| x.1 / ta).collect();
    let demand: Vec<f64> = xb.iter().map(|x| x.1 / tb).collect();
    let mut matrix = Vec::with_capacity(xa.len() * xb.len());
    for (p, _) in xa {
        for (q, _) in xb {
            matrix.push(cost(*p, *q));
        }
    }
    Ok(network_simplex::solve(&supply, &demand, &matrix, pivot_cap(xa.len(), xb.len()))?.value)
}

/// W₁ between two measures by exact LP on the supports, any dimension.
pub fn w1_lp(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    let xa = mu.atoms();
    let xb = nu.atoms();
    if xa.is_empty() || xb.is_empty() {
        return Err(Error::DegenerateInput("empty support".into()));
    }
    let supply: Vec<f64> = xa.iter().map(|x| x.1).collect();
    let demand: Vec<f64> = xb.iter().map(|x| x.1).collect();
    let mut matrix = Vec::with_capacity(xa.len() * xb.len());
    for (p, _) in &xa {
        for (q, _) in &xb {
            matrix.push(crate::model::distance(*p, *q));
        }
    }
    Ok(network_simplex::solve(&supply, &demand, &matrix, pivot_cap(xa.len(), xb.len()))?.value)
}

/// `min_σ (1/n) Σ_j |a_j − b_σ(j)|`, by the Hungarian algorithm.
pub fn quotient_perm_distance(a: &[Point], b: &[Point]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(Error::DegenerateInput("empty point lists".into()));
    }
    let cost: Vec<Vec<f64>> =
        a.iter().map(|p| b.iter().map(|q| crate::model::distance(*p, *q)).collect()).collect();
    Ok(min_cost_assignment(&cost).1 / a.len() as f64)
}

/// Empirical measure of a list of grid nodes.
pub fn empirical_on(grid: Arc<Grid>, nodes: &[usize]) -> Result<DiscreteMeasure> {
    let mut w = vec![0.0; grid.len()];
    for &k in nodes {
        if k >= grid.len() {
            return Err(Error::InvalidMeasure(format!("node {k} outside the grid")));
        }
        w[k] += 1.0;
    }
    DiscreteMeasure::new(grid, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(vec![(0..n).map(|k| k as f64 / (n - 1) as f64).collect()], vec![(0.0, 1.0)]).unwrap())
    }

    #[test]
    fn w1_examples() {
        let g = line(3);
        let d0 = DiscreteMeasure::dirac(g.clone(), 0).unwrap();
        let d1 = DiscreteMeasure::dirac(g.clone(), 2).unwrap();
        assert_eq!(w1_exact_1d(&d0, &d1).unwrap(), 1.0);
        assert_eq!(w1_exact_1d(&d0, &d0).unwrap(), 0.0);
        let two = DiscreteMeasure::new(g.clone(), vec![0.5, 0.0, 0.5]).unwrap();
        let mid = DiscreteMeasure::dirac(g, 1).unwrap();
        assert!((w1_exact_1d(&two, &mid).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn w1_rejects_2d() {
        let g = Arc::new(Grid::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[2, 2]).unwrap());
        let m = DiscreteMeasure::uniform(g);
        assert!(matches!(w1_exact_1d(&m, &m), Err(Error::UnsupportedDimension { dim: 2, .. })));
    }

    #[test]
    fn off_diagonal_matrix() {
        let g = line(2);
        let mu = DiscreteMeasure::dirac(g.clone(), 0).unwrap();
        let nu = DiscreteMeasure::dirac(g, 1).unwrap();
        let r = wc_lp(&mu, &nu, &GroundCost::Matrix(vec![vec![0.0, 1.0], vec![1.0, 0.0]])).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.plan.entries(), &[(0, 1, 1.0)]);
        assert_eq!(r.dual_strategy_potential[1], 0.0);
    }

    #[test]
    fn identical_measures_cost_nothing() {
        let g = line(6);
        let mu = DiscreteMeasure::new(g, vec![0.1, 0.2, 0.0, 0.3, 0.1, 0.3]).unwrap();
        let r = wc_lp(&mu, &mu, &GroundCost::Euclidean).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.plan.entries().iter().all(|&(i, j, _)| i == j));
    }

    #[test]
    fn quotient_examples() {
        let a = [[0.0, 0.0], [1.0, 0.0]];
        let b = [[1.0, 0.0], [0.0, 0.0]];
        assert_eq!(quotient_perm_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(quotient_perm_distance(&a, &b).unwrap(), 0.0);
        assert!(matches!(quotient_perm_distance(&a, &b[..1]), Err(Error::LengthMismatch { .. })));
    }
}
