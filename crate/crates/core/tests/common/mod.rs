#![allow(dead_code)]

use driftmap::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `n` rows with independent `N(means[j], 1)` features.
pub fn gaussian_rows(n: usize, means: &[f64], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng(seed);
    (0..n)
        .map(|_| means.iter().map(|m| m + normal(&mut rng)).collect())
        .collect()
}

pub fn random_map(rows: usize, cols: usize, dim: usize, kind: MapKind, seed: u64) -> FeatureMap {
    let mut rng = rng(seed);
    let weights = (0..rows * cols * dim).map(|_| rng.random_range(-3.0..3.0)).collect();
    FeatureMap::from_weights(GridSpec::new(rows, cols, GridMetric::Manhattan).unwrap(), kind, dim, weights).unwrap()
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Index of the nearest neuron by plain linear scan, first one on ties.
pub fn brute_winner(map: &FeatureMap, x: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, w) in map.neurons().enumerate() {
        let d = euclid(w, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn train_map(rows: &[Vec<f64>], kind: MapKind, side: usize, seed: u64) -> FeatureMap {
    let grid = GridSpec::new(side, side, GridMetric::Manhattan).unwrap();
    let mut map = FeatureMap::init(grid, kind, rows, seed).unwrap();
    map.train(rows, &TrainSchedule::default(), seed).unwrap();
    map
}
