use std::path::PathBuf;

use cnot_core::{Congestion, Error, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BUNDLED: [&str; 6] = ["fig1_alpha2", "fig1_alpha5", "fig2", "fig3", "log_benchmark", "trivial_uniform"];

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Total cost of strategy `x` against a single atom at `y`, i.e. `c + φ(x, y)`.
fn field_at(s: &Scenario, x: [f64; 2], y: [f64; 2]) -> f64 {
    s.cost.potential_at(x) + s.cost.kernel_at(x, y)
}

#[test]
fn shipped_json_files_match_the_built_ins() {
    for name in BUNDLED {
        let path = scenario_dir().join(format!("{name}.json"));
        let text = std::fs::read_to_string(&path).unwrap();
        let from_file = Scenario::load(path.to_str().unwrap()).unwrap();
        let built_in = Scenario::named(name).unwrap();
        assert_eq!(from_file.to_json(), built_in.to_json(), "{name}");
        assert_eq!(text, built_in.to_json(), "{name}");
        assert_eq!(from_file.hash(), built_in.hash());
    }
}

#[test]
fn serialisation_round_trip_is_byte_identical() {
    for name in BUNDLED {
        let first = Scenario::named(name).unwrap().to_json();
        let second = Scenario::from_json_str(&first).unwrap().to_json();
        assert_eq!(first, second, "{name}");
    }
}

#[test]
fn fig2_formulas_by_transcription() {
    let s = Scenario::named("fig2").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let x: f64 = rng.gen_range(0.0..4.0);
        let y: f64 = rng.gen_range(0.0..4.0);
        let expected = (x - 1.6).powi(4) / 4.0 + (x - y).powi(2) / 200.0;
        assert!((field_at(&s, [x, 0.0], [y, 0.0]) - expected).abs() < 1e-12);
    }
    assert!(s.cost.kernel_is_symmetric());
    let w = s.mu.weights();
    let left: f64 = (0..400).filter(|&i| s.strategy_grid.point(i)[0] < 2.0).map(|i| w[i]).sum();
    assert!((left - 0.5).abs() < 1e-12);
    for i in s.mu.support() {
        let x = s.type_grid.point(i)[0];
        assert!((0.5..=0.6).contains(&x) || (3.7..=3.8).contains(&x), "mass at {x}");
    }
}

#[test]
fn fig1_formulas_by_transcription() {
    for (name, alpha) in [("fig1_alpha2", 2.0), ("fig1_alpha5", 5.0)] {
        let s = Scenario::named(name).unwrap();
        assert_eq!(s.cost.congestion, Congestion::Power { alpha });
        assert!(!s.cost.kernel_is_symmetric());
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let (t, x, y): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
            let c = (t - x).abs().powi(4) / 4.0;
            assert!((s.cost.transport.eval([t, 0.0], [x, 0.0]) - c).abs() < 1e-12);
            let phi = 10.0 * (2.0 * x - y - 0.4).powi(2);
            assert!((field_at(&s, [x, 0.0], [y, 0.0]) - phi).abs() < 1e-12);
            let m: f64 = rng.gen_range(0.0..3.0);
            assert!((s.cost.congestion.marginal(m) - m.powf(alpha)).abs() < 1e-12 * (1.0 + m.powf(alpha)));
        }
        let w = s.mu.weights();
        assert!(w.iter().all(|&v| (v - w[0]).abs() < 1e-15));
    }
}

#[test]
fn fig3_formulas_by_transcription() {
    let s = Scenario::named("fig3").unwrap();
    assert_eq!(s.dim(), 2);
    assert!(s.cost.kernel_is_symmetric());
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let x = [rng.gen::<f64>(), rng.gen::<f64>()];
        let y = [rng.gen::<f64>(), rng.gen::<f64>()];
        let t = [rng.gen::<f64>(), rng.gen::<f64>()];
        let to_corner = (x[0] - 1.0).powi(2) + (x[1] - 1.0).powi(2);
        let between = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).powi(2);
        assert!((field_at(&s, x, y) - (to_corner + between / 100.0)).abs() < 1e-12);
        let c = ((t[0] - x[0]).powi(2) + (t[1] - x[1]).powi(2)) / 2.0;
        assert!((s.cost.transport.eval(t, x) - c).abs() < 1e-12);
    }
}

#[test]
fn symmetric_terms_are_symmetric_on_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for name in ["fig2", "fig3", "log_benchmark"] {
        let s = Scenario::named(name).unwrap();
        let (lo, hi) = s.strategy_grid.bounds()[0];
        for _ in 0..100 {
            let mut draw = || [rng.gen_range(lo..hi), if s.dim() == 2 { rng.gen() } else { 0.0 }];
            let (x, y) = (draw(), draw());
            assert!((s.cost.kernel_at(x, y) - s.cost.kernel_at(y, x)).abs() <= 1e-10, "{name}");
        }
    }
}

#[test]
fn trivial_uniform_has_no_interaction() {
    let s = Scenario::named("trivial_uniform").unwrap();
    assert!(s.cost.transport.is_zero());
    assert_eq!(s.cost.congestion, Congestion::Log);
    assert!(!s.cost.has_kernel());
    assert!(s.cost.potential.is_empty());
}

#[test]
fn schema_errors_name_the_offending_key() {
    let base: serde_json::Value = serde_json::from_str(&Scenario::named("fig2").unwrap().to_json()).unwrap();
    let cases: Vec<(&str, Box<dyn Fn(&mut serde_json::Value)>)> = vec![
        ("mu.blocks", Box::new(|v| v["mu"]["blocks"][0]["mass"] = 0.3.into())),
        ("solver.tol", Box::new(|v| v["solver"]["tol"] = (-1.0).into())),
        ("grid.n", Box::new(|v| v["grid"]["n"] = serde_json::json!([1]))),
        ("schema_version", Box::new(|v| v["schema_version"] = 99.into())),
        ("mu.blocks[1]", Box::new(|v| v["mu"]["blocks"][1]["hi"] = serde_json::json!([4.5]))),
    ];
    for (key, edit) in cases {
        let mut v = base.clone();
        edit(&mut v);
        match Scenario::from_json_str(&v.to_string()) {
            Err(Error::Schema { key: k, .. }) => assert!(k.starts_with(key), "expected {key}, got {k}"),
            other => panic!("expected a schema error at {key}, got {other:?}"),
        }
    }
    let mut v = base.clone();
    v["cost"]["colour"] = "blue".into();
    assert!(matches!(Scenario::from_json_str(&v.to_string()), Err(Error::Schema { .. })));
    assert!(matches!(Scenario::load("no_such_scenario"), Err(Error::UnknownScenario(_))));
}
