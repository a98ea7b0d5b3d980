#![allow(dead_code)]

use rand::Rng;
use spml_core::Distribution;

/// Random distribution over `n` outcomes with every entry at least `floor`.
pub fn random_interior<R: Rng>(rng: &mut R, n: usize, floor: f64) -> Distribution {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    let room = 1.0 - n as f64 * floor;
    Distribution::new(raw.iter().map(|x| floor + room * x / total).collect()).unwrap()
}

pub fn d(v: &[f64]) -> Distribution {
    Distribution::new(v.to_vec()).unwrap()
}
