//! Primal network simplex for the dense transportation problem.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Optimal basic solution on the supplied (positive) supports.
#[derive(Clone, Debug)]
pub(crate) struct LpSolution {
    /// Basic arcs `(row, col, flow)`, degenerate ones included.
    pub arcs: Vec<(usize, usize, f64)>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub value: f64,
    pub pivots: usize,
}

struct Tree {
    m: usize,
    n: usize,
    arcs: Vec<(usize, usize, f64)>,
    adjacency: Vec<Vec<usize>>,
    parent_arc: Vec<usize>,
    parent: Vec<usize>,
    depth: Vec<usize>,
    u: Vec<f64>,
    v: Vec<f64>,
}

const NONE: usize = usize::MAX;

impl Tree {
    fn col_node(&self, j: usize) -> usize {
        self.m + j
    }

    fn other_end(&self, arc: usize, node: usize) -> usize {
        let (i, j, _) = self.arcs[arc];
        if node == i { self.m + j } else { i }
    }

    /// Re-roots at the first column and recomputes potentials with `v[0] = 0`.
    fn refresh(&mut self, cost: &[f64]) {
        let total = self.m + self.n;
        self.parent.iter_mut().for_each(|p| *p = NONE);
        let root = self.col_node(0);
        self.parent[root] = root;
        self.parent_arc[root] = NONE;
        self.depth[root] = 0;
        self.v[0] = 0.0;
        let mut queue = VecDeque::with_capacity(total);
        queue.push_back(root);
        while let Some(node) = queue.pop_front() {
            for k in 0..self.adjacency[node].len() {
                let arc = self.adjacency[node][k];
                let next = self.other_end(arc, node);
                if self.parent[next] != NONE {
                    continue;
                }
                self.parent[next] = node;
                self.parent_arc[next] = arc;
                self.depth[next] = self.depth[node] + 1;
                let (i, j, _) = self.arcs[arc];
                let c = cost[i * self.n + j];
                if next < self.m {
                    self.u[i] = c - self.v[j];
                } else {
                    self.v[j] = c - self.u[i];
                }
                queue.push_back(next);
            }
        }
        debug_assert!(self.parent.iter().all(|&p| p != NONE), "basis is not a spanning tree");
    }
}

/// North-west corner staircase basis built from cumulative sums. It has
/// exactly `m + n − 1` arcs and is optimal outright for Monge costs on
/// sorted supports.
fn north_west_corner(supply: &[f64], demand: &[f64]) -> Vec<(usize, usize, f64)> {
    let (m, n) = (supply.len(), demand.len());
    let mut s_cum = vec![0.0; m + 1];
    let mut d_cum = vec![0.0; n + 1];
    let mut acc = CompensatedSum::new();
    for (k, &s) in supply.iter().enumerate() {
        acc.add(s);
        s_cum[k + 1] = acc.value();
    }
    let mut acc = CompensatedSum::new();
    for (k, &d) in demand.iter().enumerate() {
        acc.add(d);
        d_cum[k + 1] = acc.value();
    }
    // both totals are pinned to the same endpoint so the staircase closes
    let end = s_cum[m].max(d_cum[n]);
    s_cum[m] = end;
    d_cum[n] = end;

    let mut arcs = Vec::with_capacity(m + n - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let lo = s_cum[i].max(d_cum[j]);
        let hi = s_cum[i + 1].min(d_cum[j + 1]);
        arcs.push((i, j, (hi - lo).max(0.0)));
        if i == m - 1 && j == n - 1 {
            break;
        }
        if j == n - 1 || (i < m - 1 && s_cum[i + 1] <= d_cum[j + 1]) {
            i += 1;
        } else {
            j += 1;
        }
    }
    debug_assert_eq!(arcs.len(), m + n - 1);
    arcs
}

/// Solves `min Σ c_ij x_ij` over the transportation polytope. `cost` is
/// row-major `m × n`; all supplies and demands must be positive.
pub(crate) fn solve(supply: &[f64], demand: &[f64], cost: &[f64], pivot_cap: usize) -> Result<LpSolution> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(Error::DegenerateInput("empty support".into()));
    }
    debug_assert_eq!(cost.len(), m * n);
    if let Some(c) = cost.iter().find(|c| !c.is_finite()) {
        return Err(Error::DegenerateInput(format!("non-finite cost {c}")));
    }
    let max_abs = cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let eps = 1e-12 * (1.0 + max_abs);

    let total = m + n;
    let arcs = north_west_corner(supply, demand);
    let mut adjacency = vec![Vec::new(); total];
    for (k, &(i, j, _)) in arcs.iter().enumerate() {
        adjacency[i].push(k);
        adjacency[m + j].push(k);
    }
    let mut tree = Tree {
        m,
        n,
        arcs,
        adjacency,
        parent_arc: vec![NONE; total],
        parent: vec![NONE; total],
        depth: vec![0; total],
        u: vec![0.0; m],
        v: vec![0.0; n],
    };
    tree.refresh(cost);

    let block = ((m * n) as f64).sqrt().ceil().max(1.0) as usize;
    let mut cursor = 0usize;
    let mut pivots = 0usize;
    let mut up_side: Vec<(usize, bool)> = Vec::new();
    let mut down_side: Vec<(usize, bool)> = Vec::new();
    loop {
        // block pricing: most negative reduced cost within the first block that has one
        let mut best: Option<(usize, usize, f64)> = None;
        let mut scanned = 0;
        while scanned < m * n {
            let end = (scanned + block).min(m * n);
            for _ in scanned..end {
                let k = cursor;
                cursor += 1;
                if cursor == m * n {
                    cursor = 0;
                }
                let (i, j) = (k / n, k % n);
                let r = cost[k] - tree.u[i] - tree.v[j];
                if r < -eps && best.is_none_or(|b| r < b.2) {
                    best = Some((i, j, r));
                }
            }
            scanned = end;
            if best.is_some() {
                break;
            }
        }
        let Some((ei, ej, _)) = best else { break };
        if pivots == pivot_cap {
            let value = objective(&tree.arcs, cost, n);
            let dual = dual_value(&tree.u, &tree.v, supply, demand);
            return Err(Error::PivotCapExceeded { cap: pivot_cap, value, gap: (value - dual).abs() });
        }
        pivots += 1;

        // cycle: entering arc (row → col) carries +θ, then the tree path from
        // the column back to the row alternates −, +, …
        up_side.clear();
        down_side.clear();
        let mut a = tree.col_node(ej);
        let mut b = ei;
        while a != b {
            if tree.depth[a] >= tree.depth[b] {
                up_side.push((tree.parent_arc[a], a >= m));
                a = tree.parent[a];
            } else {
                down_side.push((tree.parent_arc[b], b < m));
                b = tree.parent[b];
            }
        }
        // orientation order: apex → row (down_side reversed), entering, column → apex
        let mut theta = f64::INFINITY;
        let mut leaving = NONE;
        for &(arc, minus) in down_side.iter().rev().chain(up_side.iter()) {
            if minus && tree.arcs[arc].2 <= theta {
                theta = tree.arcs[arc].2;
                leaving = arc;
            }
        }
        debug_assert!(leaving != NONE);
        let theta = theta.max(0.0);
        for &(arc, minus) in up_side.iter().chain(down_side.iter()) {
            let f = &mut tree.arcs[arc].2;
            *f = if minus { (*f - theta).max(0.0) } else { *f + theta };
        }
        let (li, lj, _) = tree.arcs[leaving];
        let col = m + lj;
        tree.adjacency[li].retain(|&k| k != leaving);
        tree.adjacency[col].retain(|&k| k != leaving);
        tree.arcs[leaving] = (ei, ej, theta);
        tree.adjacency[ei].push(leaving);
        tree.adjacency[m + ej].push(leaving);
        tree.refresh(cost);
    }

    let value = objective(&tree.arcs, cost, n);
    Ok(LpSolution { arcs: tree.arcs, u: tree.u, v: tree.v, value, pivots })
}

fn objective(arcs: &[(usize, usize, f64)], cost: &[f64], n: usize) -> f64 {
    arcs.iter().map(|&(i, j, f)| f * cost[i * n + j]).collect::<CompensatedSum>().value()
}

pub(crate) fn dual_value(u: &[f64], v: &[f64], supply: &[f64], demand: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for (a, b) in u.iter().zip(supply) {
        acc.add(a * b);
    }
    for (a, b) in v.iter().zip(demand) {
        acc.add(a * b);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staircase_has_full_rank_even_when_degenerate() {
        let arcs = north_west_corner(&[0.5, 0.5], &[0.5, 0.5]);
        assert_eq!(arcs.len(), 3);
        assert_eq!(arcs[0], (0, 0, 0.5));
        assert_eq!(arcs[1].2, 0.0);
        assert_eq!(arcs[2], (1, 1, 0.5));
    }

    #[test]
    fn anti_diagonal_instance() {
        let sol = solve(&[0.5, 0.5], &[0.5, 0.5], &[1.0, 0.0, 0.0, 1.0], 100).unwrap();
        assert_eq!(sol.value, 0.0);
        let dual = dual_value(&sol.u, &sol.v, &[0.5, 0.5], &[0.5, 0.5]);
        assert!(dual.abs() < 1e-15);
    }

    #[test]
    fn pivot_cap_reports_the_current_plan() {
        match solve(&[0.5, 0.5], &[0.5, 0.5], &[1.0, 0.0, 0.0, 1.0], 0) {
            Err(Error::PivotCapExceeded { cap: 0, value, .. }) => assert_eq!(value, 1.0),
            other => panic!("{other:?}"),
        }
    }
}
