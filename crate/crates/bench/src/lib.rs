// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! Shared fixtures for the criterion benchmarks.

use culvert_core::quant::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform random matrix in [-1, 1), reproducible from `seed`.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(vec![rows, cols], values).expect("shape matches data")
}
