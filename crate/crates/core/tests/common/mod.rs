#![allow(dead_code)]

pub mod shadow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vipera_core::head::{HeadConfig, HeadParams};
use vipera_core::Matrix;

/// Random head of small random shape with weights in `[-1, 1]`, centroids
/// in `[-2, 2]` and `ρ` in `[-1, 2]`.
pub fn random_head(rng: &mut ChaCha8Rng, prototypes: usize, squared: bool) -> HeadParams {
    let cfg = HeadConfig {
        visual_tokens: rng.random_range(1..=5),
        embed_width: rng.random_range(1..=7),
        tokens: rng.random_range(1..=4),
        width: rng.random_range(1..=5),
        prototypes,
        squared_distance: squared,
    };
    let mut p = HeadParams::zeros(cfg).unwrap();
    let [w1, w2, w3, c, rho] = p.tensors_mut();
    for v in w1.iter_mut().chain(w2.iter_mut()).chain(w3.iter_mut()) {
        *v = rng.random_range(-1.0..=1.0);
    }
    for v in c.iter_mut() {
        *v = rng.random_range(-2.0..=2.0);
    }
    for v in rho.iter_mut() {
        *v = rng.random_range(-1.0..=2.0);
    }
    p
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
