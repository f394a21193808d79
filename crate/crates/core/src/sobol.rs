//! Low-discrepancy candidate generation: Owen-scrambled Sobol points in the
//! unit hypercube, deterministic per (count, dimension, seed).

use serde::{Deserialize, Serialize};

/// A point in the encoded unit hypercube [0,1]^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedPoint {
    pub coords: Vec<f64>,
}

impl EncodedPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        EncodedPoint { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// First `n` points of a scrambled Sobol sequence in [0,1]^d.
pub fn sobol_points(n: usize, d: usize, seed: u32) -> Vec<EncodedPoint> {
    (0..n)
        .map(|i| {
            EncodedPoint::new(
                (0..d)
                    .map(|j| sobol_burley::sample(i as u32, j as u32, seed) as f64)
                    .collect(),
            )
        })
        .collect()
}
