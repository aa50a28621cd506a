use std::sync::Arc;

use cnot_core::measures::{marginals, pushforward, UniformBlock};
use cnot_core::numeric::compensated_sum;
use cnot_core::{Coupling, DiscreteMeasure, Grid, StrategyMap};
use proptest::prelude::*;

fn line(n: usize) -> Arc<Grid> {
    Arc::new(Grid::uniform_1d(0.0, 1.0, n).unwrap())
}

fn measure(grid: Arc<Grid>, raw: &[f64]) -> DiscreteMeasure {
    let total: f64 = raw.iter().sum();
    DiscreteMeasure::new(grid, raw.iter().map(|w| w / total).collect()).unwrap()
}

/// Raw weights with at least one positive entry, and a map into `m` nodes.
fn weights_and_map() -> impl Strategy<Value = (Vec<f64>, Vec<usize>, usize)> {
    (2usize..40, 2usize..40).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(prop_oneof![Just(0.0), 1e-9..1.0f64], n)
                .prop_filter("some mass", |w| w.iter().any(|&x| x > 0.0)),
            prop::collection::vec(0..m, n),
            Just(m),
        )
    })
}

proptest! {
    #[test]
    fn pushforward_preserves_mass((raw, targets, m) in weights_and_map()) {
        let mu = measure(line(raw.len()), &raw);
        let map = StrategyMap::new(line(m), targets).unwrap();
        let nu = pushforward(&map, &mu).unwrap();
        prop_assert_eq!(compensated_sum(nu.weights().iter().copied()), compensated_sum(mu.weights().iter().copied()));
    }

    #[test]
    fn graph_coupling_has_mu_and_pushforward_marginals((raw, targets, m) in weights_and_map()) {
        let mu = measure(line(raw.len()), &raw);
        let map = StrategyMap::new(line(m), targets).unwrap();
        let gamma = Coupling::from_map(&map, &mu).unwrap();
        let (rows, cols) = marginals(&gamma);
        prop_assert_eq!(rows.weights(), mu.weights());
        let nu = pushforward(&map, &mu).unwrap();
        prop_assert_eq!(cols.weights(), nu.weights());
    }

    #[test]
    fn quantile_inverts_the_cdf((raw, _, _) in weights_and_map()) {
        let nu = measure(line(raw.len()), &raw);
        let cdf = nu.cdf_1d().unwrap();
        for k in 0..=1000 {
            let u = k as f64 / 1000.0;
            let q = nu.quantile_1d(u).unwrap();
            let node = nu.grid().nearest([q, 0.0]);
            prop_assert_eq!(nu.grid().point(node)[0], q);
            prop_assert!(cdf[node] >= u - 1e-12, "u {} q {} cdf {}", u, q, cdf[node]);
            if node > 0 && u > 0.0 {
                prop_assert!(cdf[node - 1] < u + 1e-12);
            }
        }
    }
}

#[test]
fn fig2_blocks_on_a_fine_grid() {
    let grid = Arc::new(Grid::uniform_1d(0.0, 4.0, 400).unwrap());
    let blocks = [
        UniformBlock { lo: [0.5, 0.0], hi: [0.6, 0.0], mass: 0.5 },
        UniformBlock { lo: [3.7, 0.0], hi: [3.8, 0.0], mass: 0.5 },
    ];
    let mu = DiscreteMeasure::from_blocks(&blocks, grid.clone()).unwrap();
    let (mut left, mut right) = (0.0, 0.0);
    for i in mu.support() {
        let x = grid.point(i)[0];
        if (0.5..=0.6).contains(&x) {
            left += mu.weights()[i];
        } else if (3.7..=3.8).contains(&x) {
            right += mu.weights()[i];
        } else {
            panic!("mass outside the blocks at {x}");
        }
    }
    assert!((left - 0.5).abs() < 1e-12 && (right - 0.5).abs() < 1e-12);
    // cells of width 0.01: ten nodes per block, equal weights
    assert_eq!(mu.support().count(), 20);
}

#[test]
fn density_of_left_half() {
    let grid = line(10);
    let nu = measure(grid.clone(), &[1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let m0 = vec![0.1; 10];
    let d = nu.density_wrt(&m0).unwrap();
    for (i, v) in d.iter().enumerate() {
        let expected = if i < 5 { 2.0 } else { 0.0 };
        assert!((v - expected).abs() < 1e-12);
    }
}

#[test]
fn two_by_two_marginals() {
    let g = line(2);
    let gamma = Coupling::new(g.clone(), g, vec![(0, 0, 0.2), (0, 1, 0.3), (1, 0, 0.1), (1, 1, 0.4)]).unwrap();
    let (rows, cols) = marginals(&gamma);
    assert!((rows.weights()[0] - 0.5).abs() < 1e-15 && (rows.weights()[1] - 0.5).abs() < 1e-15);
    assert!((cols.weights()[0] - 0.3).abs() < 1e-15 && (cols.weights()[1] - 0.7).abs() < 1e-15);
}

#[test]
fn product_coupling_on_two_dimensional_grids() {
    let g = Arc::new(Grid::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[3, 4]).unwrap());
    let mu = measure(g.clone(), &(1..=12).map(|k| k as f64).collect::<Vec<_>>());
    let nu = measure(g.clone(), &(1..=12).rev().map(|k| (k * k) as f64).collect::<Vec<_>>());
    let (a, b) = marginals(&Coupling::product(&mu, &nu));
    for i in 0..12 {
        assert!((a.weights()[i] - mu.weights()[i]).abs() < 1e-15);
        assert!((b.weights()[i] - nu.weights()[i]).abs() < 1e-15);
    }
}
