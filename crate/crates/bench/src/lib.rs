//! Shared inputs for the benchmarks.

use retention_core::distributions::{DesignSpec, DistributionSpec};
use retention_core::rng::{seeded_rng, STREAM_DATA};
use retention_core::DataItem;

fn gaussian(d: usize) -> DistributionSpec {
    DistributionSpec::GaussianMean {
        theta: vec![0.0; d],
        sigma: (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect(),
    }
}

/// `n` standard normal vectors in dimension `d`.
pub fn vectors(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    gaussian(d)
        .sampler()
        .expect("valid spec")
        .draw_batch(n, &mut seeded_rng(seed, STREAM_DATA), 1)
        .into_iter()
        .map(|it| it.values)
        .collect()
}

pub fn scalars(n: usize, seed: u64) -> Vec<f64> {
    vectors(n, 1, seed).into_iter().map(|v| v[0]).collect()
}

pub fn regression_spec() -> DistributionSpec {
    DistributionSpec::Regression {
        theta: vec![0.5, -0.25],
        design: DesignSpec::UniformBox { b: 1.0 },
        sigma: 0.5,
    }
}

pub fn regression_items(n: usize, seed: u64) -> Vec<DataItem> {
    regression_spec()
        .sampler()
        .expect("valid spec")
        .draw_batch(n, &mut seeded_rng(seed, STREAM_DATA), 1)
}
