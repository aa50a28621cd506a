use crate::error::{Error, Result};

/// A point of a type or strategy space. One-dimensional points keep the
/// second coordinate at zero, so Euclidean formulas apply unchanged.
pub type Point = [f64; 2];

#[inline]
pub(crate) fn squared_distance(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

#[inline]
pub(crate) fn distance(a: Point, b: Point) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Tensor-product grid in one or two dimensions.
///
/// Nodes are indexed row-major (`index = i0 * n1 + i1` in 2D). Every node owns
/// the cell bounded by the midpoints to its neighbours, clipped to the
/// bounding box; those cell volumes are the default reference measure `m₀`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    axes: Vec<Vec<f64>>,
    bounds: Vec<(f64, f64)>,
    edges: Vec<Vec<f64>>,
    cell_volumes: Vec<f64>,
}

impl Grid {
    pub fn new(axes: Vec<Vec<f64>>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        let dim = axes.len();
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if bounds.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "{} bounds given for a {dim}-dimensional grid",
                bounds.len()
            )));
        }
        let mut edges = Vec::with_capacity(dim);
        for (k, (nodes, &(lo, hi))) in axes.iter().zip(&bounds).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidGrid(format!("axis {k}: bad bounds [{lo}, {hi}]")));
            }
            if nodes.len() < 2 {
                return Err(Error::InvalidGrid(format!("axis {k}: at least 2 nodes required")));
            }
            if nodes.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidGrid(format!("axis {k}: nodes must be strictly increasing")));
            }
            if nodes[0] < lo || nodes[nodes.len() - 1] > hi {
                return Err(Error::InvalidGrid(format!("axis {k}: nodes outside [{lo}, {hi}]")));
            }
            let mut e = Vec::with_capacity(nodes.len() + 1);
            e.push(lo);
            e.extend(nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])));
            e.push(hi);
            edges.push(e);
        }
        let widths: Vec<Vec<f64>> = edges
            .iter()
            .map(|e| e.windows(2).map(|w| w[1] - w[0]).collect())
            .collect();
        let cell_volumes = if dim == 1 {
            widths[0].clone()
        } else {
            let mut v = Vec::with_capacity(widths[0].len() * widths[1].len());
            for &a in &widths[0] {
                for &b in &widths[1] {
                    v.push(a * b);
                }
            }
            v
        };
        Ok(Self { axes, bounds, edges, cell_volumes })
    }

    /// Uniform cell-centred grid: `n[k]` equal cells per axis, one node at the
    /// centre of each.
    pub fn uniform(bounds: &[(f64, f64)], n: &[usize]) -> Result<Self> {
        if bounds.len() != n.len() {
            return Err(Error::InvalidGrid(format!(
                "{} bounds but {} node counts",
                bounds.len(),
                n.len()
            )));
        }
        let axes = bounds
            .iter()
            .zip(n)
            .map(|(&(lo, hi), &count)| {
                let h = (hi - lo) / count as f64;
                (0..count).map(|k| lo + (k as f64 + 0.5) * h).collect()
            })
            .collect();
        Self::new(axes, bounds.to_vec())
    }

    pub fn uniform_1d(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::uniform(&[(lo, hi)], &[n])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn axis(&self, k: usize) -> &[f64] {
        &self.axes[k]
    }

    pub fn axis_edges(&self, k: usize) -> &[f64] {
        &self.edges[k]
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    #[inline]
    pub fn multi_index(&self, index: usize) -> [usize; 2] {
        if self.axes.len() == 1 {
            [index, 0]
        } else {
            let n1 = self.axes[1].len();
            [index / n1, index % n1]
        }
    }

    #[inline]
    pub fn point(&self, index: usize) -> Point {
        let [i, j] = self.multi_index(index);
        if self.axes.len() == 1 {
            [self.axes[0][i], 0.0]
        } else {
            [self.axes[0][i], self.axes[1][j]]
        }
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Per-axis `(lo, hi)` extent of the cell owned by `index`.
    pub fn cell(&self, index: usize) -> Vec<(f64, f64)> {
        let mi = self.multi_index(index);
        (0..self.dim()).map(|k| (self.edges[k][mi[k]], self.edges[k][mi[k] + 1])).collect()
    }

    pub fn cell_volume(&self, index: usize) -> f64 {
        self.cell_volumes[index]
    }

    pub fn cell_volumes(&self) -> &[f64] {
        &self.cell_volumes
    }

    /// Largest distance between two nodes.
    pub fn diameter(&self) -> f64 {
        self.axes
            .iter()
            .map(|a| {
                let d = a[a.len() - 1] - a[0];
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Smallest spacing between consecutive nodes on any axis.
    pub fn min_spacing(&self) -> f64 {
        self.axes
            .iter()
            .flat_map(|a| a.windows(2).map(|w| w[1] - w[0]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Nearest node; ties go to the lower index.
    pub fn nearest(&self, p: Point) -> usize {
        let i = nearest_on_axis(&self.axes[0], p[0]);
        if self.axes.len() == 1 {
            i
        } else {
            i * self.axes[1].len() + nearest_on_axis(&self.axes[1], p[1])
        }
    }

    /// Node whose (half-open) cell contains `p`, if `p` lies inside the bounds.
    pub fn locate(&self, p: Point) -> Option<usize> {
        let mut mi = [0usize; 2];
        for k in 0..self.dim() {
            let e = &self.edges[k];
            let x = p[k];
            if x < e[0] || x > e[e.len() - 1] {
                return None;
            }
            // partition_point gives the first edge strictly greater than x
            let pos = e.partition_point(|&v| v <= x);
            mi[k] = pos.saturating_sub(1).min(e.len() - 2);
        }
        Some(if self.dim() == 1 { mi[0] } else { mi[0] * self.axes[1].len() + mi[1] })
    }

    pub fn contains(&self, p: Point) -> bool {
        self.bounds
            .iter()
            .enumerate()
            .all(|(k, &(lo, hi))| p[k] >= lo && p[k] <= hi)
    }
}

fn nearest_on_axis(nodes: &[f64], x: f64) -> usize {
    let pos = nodes.partition_point(|&v| v < x);
    if pos == 0 {
        0
    } else if pos == nodes.len() {
        nodes.len() - 1
    } else if x - nodes[pos - 1] <= nodes[pos] - x {
        pos - 1
    } else {
        pos
    }
}
