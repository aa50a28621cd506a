//! Discrete probability measures, couplings, pushforwards and 1D quantiles.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{Grid, Point};
use crate::numeric::{compensated_sum, CompensatedSum};

/// Tolerance on total mass after compensated summation.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Weighted uniform block: an interval (1D) or rectangle (2D) carrying `mass`.
/// Degenerate axes (`lo == hi`) act as point masses along that axis.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformBlock {
    pub lo: Point,
    pub hi: Point,
    pub mass: f64,
}

/// Probability weights on the nodes of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    grid: Arc<Grid>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Validates nonnegativity and renormalises to unit mass.
    pub fn new(grid: Arc<Grid>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::LengthMismatch { left: weights.len(), right: grid.len() });
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidMeasure(format!("weight {w} at node {i}")));
        }
        let total = compensated_sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(Error::InvalidMeasure("total mass is zero".into()));
        }
        let weights = if total == 1.0 { weights } else { weights.into_iter().map(|w| w / total).collect() };
        Ok(Self { grid, weights })
    }

    /// Skips renormalisation; callers guarantee unit mass within [`MASS_TOLERANCE`].
    pub(crate) fn from_normalized(grid: Arc<Grid>, weights: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), weights.len());
        debug_assert!((compensated_sum(weights.iter().copied()) - 1.0).abs() <= 1e-9);
        Self { grid, weights }
    }

    pub fn uniform(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self { grid, weights: vec![1.0 / n as f64; n] }
    }

    /// Proportional to the cell volumes.
    pub fn proportional_to_volume(grid: Arc<Grid>) -> Self {
        let w = grid.cell_volumes().to_vec();
        Self::new(grid, w).expect("cell volumes are positive")
    }

    pub fn dirac(grid: Arc<Grid>, node: usize) -> Result<Self> {
        if node >= grid.len() {
            return Err(Error::InvalidMeasure(format!("node {node} outside grid of {}", grid.len())));
        }
        let mut w = vec![0.0; grid.len()];
        w[node] = 1.0;
        Ok(Self { grid, weights: w })
    }

    /// Node weight ∝ Σ_b mass_b · |cell ∩ block_b| / |block_b|, then normalised.
    pub fn from_blocks(blocks: &[UniformBlock], grid: Arc<Grid>) -> Result<Self> {
        let dim = grid.dim();
        for (b, block) in blocks.iter().enumerate() {
            let inside = (0..dim).all(|k| {
                let (lo, hi) = grid.bounds()[k];
                block.lo[k] <= block.hi[k] && block.lo[k] >= lo && block.hi[k] <= hi
            });
            if !inside {
                return Err(Error::InvalidMeasure(format!("block {b} is not inside the grid bounds")));
            }
            if !(block.mass >= 0.0 && block.mass.is_finite()) {
                return Err(Error::InvalidMeasure(format!("block {b} has mass {}", block.mass)));
            }
        }
        let mut weights = vec![0.0; grid.len()];
        for block in blocks {
            let factors: Vec<Vec<f64>> = (0..dim)
                .map(|k| axis_overlap_fractions(grid.axis_edges(k), block.lo[k], block.hi[k]))
                .collect();
            for (i, w) in weights.iter_mut().enumerate() {
                let mi = grid.multi_index(i);
                let f: f64 = (0..dim).map(|k| factors[k][mi[k]]).product();
                if f > 0.0 {
                    *w += block.mass * f;
                }
            }
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(Error::InvalidMeasure("blocks do not overlap any grid cell".into()));
        }
        Self::new(grid, weights)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    /// Nodes with strictly positive weight.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(i, _)| i)
    }

    /// Nodes with weight above `threshold`.
    pub fn support_above(&self, threshold: f64) -> Vec<usize> {
        self.weights.iter().enumerate().filter(|(_, &w)| w > threshold).map(|(i, _)| i).collect()
    }

    /// `(1 − λ)·self + λ·other`.
    pub fn mix(&self, other: &DiscreteMeasure, lambda: f64) -> Result<DiscreteMeasure> {
        if !Arc::ptr_eq(&self.grid, &other.grid) && *self.grid != *other.grid {
            return Err(Error::InvalidMeasure("mixing measures on different grids".into()));
        }
        let w = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
            .collect();
        Ok(Self::from_normalized(self.grid.clone(), w))
    }

    /// `d(x) = ν(x) / m₀(x)`.
    pub fn density_wrt(&self, reference: &[f64]) -> Result<Vec<f64>> {
        if reference.len() != self.weights.len() {
            return Err(Error::LengthMismatch { left: self.weights.len(), right: reference.len() });
        }
        self.weights
            .iter()
            .zip(reference)
            .enumerate()
            .map(|(i, (&w, &m))| {
                if w == 0.0 {
                    Ok(0.0)
                } else if m <= 0.0 {
                    Err(Error::SingularDensity { node: i, mass: w })
                } else {
                    Ok(w / m)
                }
            })
            .collect()
    }

    /// Normalised CDF at each node of a 1D grid; the last entry is exactly 1.
    pub fn cdf_1d(&self) -> Result<Vec<f64>> {
        self.require_1d("cdf_1d")?;
        let total = self.mass();
        let mut acc = CompensatedSum::new();
        let mut out: Vec<f64> = self
            .weights
            .iter()
            .map(|&w| {
                acc.add(w);
                acc.value() / total
            })
            .collect();
        if let Some(last) = out.last_mut() {
            *last = 1.0;
        }
        Ok(out)
    }

    /// Smallest node `x` with `CDF(x) ≥ u`; `u = 0` gives the smallest support point.
    pub fn quantile_1d(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::ProbabilityOutOfRange(u));
        }
        let cdf = self.cdf_1d()?;
        let axis = self.grid.axis(0);
        let first_support = self.support().next().expect("measure has mass");
        if u == 0.0 {
            return Ok(axis[first_support]);
        }
        let idx = cdf.partition_point(|&c| c < u).max(first_support);
        Ok(axis[idx.min(axis.len() - 1)])
    }

    fn require_1d(&self, what: &str) -> Result<()> {
        if self.grid.dim() != 1 {
            return Err(Error::UnsupportedDimension { dim: self.grid.dim(), context: what.into() });
        }
        Ok(())
    }
}

/// Fraction of `[lo, hi]` falling in each cell delimited by `edges`; a
/// zero-width interval puts everything in the cell containing it.
fn axis_overlap_fractions(edges: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let cells = edges.len() - 1;
    let mut out = vec![0.0; cells];
    let width = hi - lo;
    if width <= 0.0 {
        let pos = edges.partition_point(|&e| e <= lo);
        out[pos.saturating_sub(1).min(cells - 1)] = 1.0;
        return out;
    }
    for (k, f) in out.iter_mut().enumerate() {
        let (a, b) = (edges[k], edges[k + 1]);
        let overlap = b.min(hi) - a.max(lo);
        // slivers below rounding level come from float edges, not geometry
        if overlap > 1e-12 * (b - a) {
            *f = overlap / width;
        }
    }
    out
}

/// Joint probability on type grid × strategy grid, stored sparsely as
/// `(row, col, mass)` sorted by `(row, col)` without duplicates.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    rows: Arc<Grid>,
    cols: Arc<Grid>,
    entries: Vec<(usize, usize, f64)>,
}

impl Coupling {
    pub fn new(rows: Arc<Grid>, cols: Arc<Grid>, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(i, j, w) in &entries {
            if i >= rows.len() || j >= cols.len() {
                return Err(Error::InvalidCoupling(format!("entry ({i}, {j}) outside the grids")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidCoupling(format!("entry ({i}, {j}) has mass {w}")));
            }
        }
        entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (i, j, w) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += w,
                _ => merged.push((i, j, w)),
            }
        }
        merged.retain(|e| e.2 > 0.0);
        let total = compensated_sum(merged.iter().map(|e| e.2));
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidCoupling(format!("total mass {total} is not 1")));
        }
        Ok(Self { rows, cols, entries: merged })
    }

    /// `γ(θ, T(θ)) = μ(θ)`.
    pub fn from_map(map: &StrategyMap, mu: &DiscreteMeasure) -> Result<Self> {
        map.check_domain(mu)?;
        let entries = mu.support().map(|i| (i, map.targets[i], mu.weights[i])).collect();
        Ok(Self { rows: mu.grid.clone(), cols: map.grid.clone(), entries })
    }

    pub fn product(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Self {
        let mut entries = Vec::new();
        for i in mu.support() {
            for j in nu.support() {
                entries.push((i, j, mu.weights[i] * nu.weights[j]));
            }
        }
        Self { rows: mu.grid.clone(), cols: nu.grid.clone(), entries }
    }

    pub fn diagonal(mu: &DiscreteMeasure) -> Self {
        let entries = mu.support().map(|i| (i, i, mu.weights[i])).collect();
        Self { rows: mu.grid.clone(), cols: mu.grid.clone(), entries }
    }

    pub fn rows(&self) -> &Arc<Grid> {
        &self.rows
    }

    pub fn cols(&self) -> &Arc<Grid> {
        &self.cols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn mass(&self) -> f64 {
        compensated_sum(self.entries.iter().map(|e| e.2))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut acc = vec![CompensatedSum::new(); self.rows.len()];
        for &(i, _, w) in &self.entries {
            acc[i].add(w);
        }
        acc.into_iter().map(|a| a.value()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut acc = vec![CompensatedSum::new(); self.cols.len()];
        for &(_, j, w) in &self.entries {
            acc[j].add(w);
        }
        acc.into_iter().map(|a| a.value()).collect()
    }

    /// `(1 − λ)·self + λ·other` on identical grids.
    pub fn mix(&self, other: &Coupling, lambda: f64) -> Coupling {
        let mut out = Vec::with_capacity(self.entries.len() + other.entries.len());
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&(i, j, w)), Some(&&(k, l, v))) => {
                    if (i, j) == (k, l) {
                        out.push((i, j, (1.0 - lambda) * w + lambda * v));
                        a.next();
                        b.next();
                    } else if (i, j) < (k, l) {
                        out.push((i, j, (1.0 - lambda) * w));
                        a.next();
                    } else {
                        out.push((k, l, lambda * v));
                        b.next();
                    }
                }
                (Some(&&(i, j, w)), None) => {
                    out.push((i, j, (1.0 - lambda) * w));
                    a.next();
                }
                (None, Some(&&(k, l, v))) => {
                    out.push((k, l, lambda * v));
                    b.next();
                }
                (None, None) => break,
            }
        }
        out.retain(|e| e.2 > 0.0);
        Coupling { rows: self.rows.clone(), cols: self.cols.clone(), entries: out }
    }

    /// `∫ c dγ` for a cost evaluated on node indices.
    pub fn integrate<F: Fn(usize, usize) -> f64>(&self, cost: F) -> f64 {
        compensated_sum(self.entries.iter().map(|&(i, j, w)| w * cost(i, j)))
    }
}

/// Row and column marginals of `γ`.
pub fn marginals(gamma: &Coupling) -> (DiscreteMeasure, DiscreteMeasure) {
    let total = gamma.mass();
    let (mut rows, mut cols) = (gamma.row_sums(), gamma.col_sums());
    match_total(&mut rows, total);
    match_total(&mut cols, total);
    (
        DiscreteMeasure::from_normalized(gamma.rows.clone(), rows),
        DiscreteMeasure::from_normalized(gamma.cols.clone(), cols),
    )
}

/// A pure strategy profile of the continuum: one strategy node per type node.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyMap {
    grid: Arc<Grid>,
    targets: Vec<usize>,
}

impl StrategyMap {
    pub fn new(strategy_grid: Arc<Grid>, targets: Vec<usize>) -> Result<Self> {
        if let Some(&t) = targets.iter().find(|&&t| t >= strategy_grid.len()) {
            return Err(Error::InvalidMeasure(format!("map target {t} is not a strategy node")));
        }
        Ok(Self { grid: strategy_grid, targets })
    }

    pub fn identity(grid: Arc<Grid>) -> Self {
        let targets = (0..grid.len()).collect();
        Self { grid, targets }
    }

    pub fn constant(strategy_grid: Arc<Grid>, type_count: usize, node: usize) -> Result<Self> {
        Self::new(strategy_grid, vec![node; type_count])
    }

    pub fn strategy_grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn target(&self, type_node: usize) -> usize {
        self.targets[type_node]
    }

    fn check_domain(&self, mu: &DiscreteMeasure) -> Result<()> {
        if self.targets.len() != mu.len() {
            return Err(Error::LengthMismatch { left: self.targets.len(), right: mu.len() });
        }
        Ok(())
    }
}

/// `ν(x) = Σ_{θ : T(θ) = x} μ(θ)`.
pub fn pushforward(map: &StrategyMap, mu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    map.check_domain(mu)?;
    let mut acc = vec![CompensatedSum::new(); map.grid.len()];
    for (i, &w) in mu.weights.iter().enumerate() {
        if w > 0.0 {
            acc[map.targets[i]].add(w);
        }
    }
    let mut weights: Vec<f64> = acc.into_iter().map(|a| a.value()).collect();
    match_total(&mut weights, compensated_sum(mu.weights.iter().copied()));
    Ok(DiscreteMeasure::from_normalized(map.grid.clone(), weights))
}

/// Rounding each bin separately can leave the total an ulp or two away from
/// the source total; nudge the heaviest bin until they agree bitwise.
fn match_total(weights: &mut [f64], target: f64) {
    let Some(heaviest) = (0..weights.len()).max_by(|&a, &b| weights[a].total_cmp(&weights[b])) else {
        return;
    };
    for _ in 0..16 {
        let total = compensated_sum(weights.iter().copied());
        if total == target {
            return;
        }
        let w = &mut weights[heaviest];
        *w = if total < target { w.next_up() } else { w.next_down() };
    }
}
