#![allow(dead_code)]

use cnot_core::Scenario;
use rand::Rng;
use serde_json::Value;

/// A bundled scenario with its JSON edited in place.
pub fn edited(name: &str, edit: impl FnOnce(&mut Value)) -> Scenario {
    let mut v: Value = serde_json::from_str(&Scenario::named(name).unwrap().to_json()).unwrap();
    edit(&mut v);
    Scenario::from_json_str(&v.to_string()).unwrap()
}

/// Strictly positive weights summing to one.
pub fn random_weights(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}
