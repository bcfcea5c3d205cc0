//! Genie-aided lower-bound probe: with θ known, keep the subset of the final
//! batch whose mean is closest to θ and count how often even that misses.

use rand_distr::StandardNormal;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::subset_sum::{best_subset_exact, Norm, EXACT_LIMIT};

/// d ln(1/ε) / (ln d + ln ln(1/ε)), natural logarithms.
pub fn lower_bound_threshold(d: usize, epsilon: f64) -> f64 {
    let l = (1.0 / epsilon).ln();
    d as f64 * l / ((d as f64).ln() + l.ln())
}

/// Fraction of trials in which no nonempty subset of m draws from N(0, I_d)
/// has squared distance at most ε from the origin.
pub fn lower_bound_probe(d: usize, m: usize, epsilon: f64, trials: usize, rng: &mut SimRng) -> Result<f64> {
    if m == 0 || m > EXACT_LIMIT || d == 0 || d > 8 {
        return Err(Error::Config(format!(
            "lower-bound probe needs 1 <= m <= {EXACT_LIMIT} and 1 <= d <= 8 (m={m}, d={d})"
        )));
    }
    if trials == 0 {
        return Ok(0.0);
    }
    let batches: Vec<Vec<Vec<f64>>> = (0..trials)
        .map(|_| {
            (0..m)
                .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
                .collect()
        })
        .collect();
    let origin = vec![0.0; d];
    let failures = batches
        .par_iter()
        .map(|batch| {
            best_subset_exact(batch, &origin, Norm::L2).map(|c| (c.distance * c.distance > epsilon) as usize)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(failures as f64 / trials as f64)
}
