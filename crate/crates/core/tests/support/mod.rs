//! Shared helpers for the integration tests and the acceptance harness.
#![allow(dead_code)]

pub mod configs;
pub mod fd;
pub mod gradcheck;
pub mod oracles;

use scratchdet::tensor::{SeededRng, Tensor};

pub fn random_tensor(shape: &[usize], rng: &mut SeededRng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
    )
    .unwrap()
}
