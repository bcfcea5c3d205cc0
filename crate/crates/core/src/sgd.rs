//! SGD with an adversarial additive perturbation, on quadratic objectives.
//!
//! The objective is H(w) = ½ Σ_j h_j (w_j − θ_j)² with every h_j ≥ λ, and the
//! update is w_t = w_{t−1} − η_t ĝ_t + ζ_t with η_t = 1/(λ t).

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded_rng, SimRng, STREAM_GRADIENT, STREAM_NOISE};

/// Gradient oracle: the exact gradient plus isotropic Gaussian noise with
/// standard deviation `noise_sd` per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientOracle {
    MeanGradient { noise_sd: f64 },
}

/// Source of the perturbation ζ_t. `scale` is the root second moment of ζ_t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseOracle {
    ZeroNoise,
    GaussianNoise { scale: f64 },
    /// ζ_t of norm `scale` pointing from θ to the post-step iterate.
    AdversarialWorstCase { scale: f64 },
}

impl NoiseOracle {
    fn scale(&self) -> f64 {
        match *self {
            NoiseOracle::ZeroNoise => 0.0,
            NoiseOracle::GaussianNoise { scale } | NoiseOracle::AdversarialWorstCase { scale } => scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisySgdSpec {
    pub theta: Vec<f64>,
    /// Strong-convexity modulus used in the step size.
    pub lambda: f64,
    /// Per-coordinate curvature h_j; `None` means h_j = λ.
    #[serde(default)]
    pub curvature: Option<Vec<f64>>,
    pub gradient_oracle: GradientOracle,
    /// Bound on the root second moment of the stochastic gradients.
    pub gamma: f64,
    pub noise_oracle: NoiseOracle,
    pub w0: Vec<f64>,
    #[serde(rename = "T")]
    pub t: u64,
    /// Permit ζ above the Γ²/(λ²T³) budget (for negative tests).
    #[serde(default)]
    pub budget_violating: bool,
}

impl NoisySgdSpec {
    /// Quadratic H(w) = ½‖w − θ‖² with Gaussian gradient noise.
    pub fn unit_quadratic(theta: Vec<f64>, noise_sd: f64, gamma: f64, noise: NoiseOracle, t: u64) -> Self {
        NoisySgdSpec {
            w0: theta.clone(),
            theta,
            lambda: 1.0,
            curvature: None,
            gradient_oracle: GradientOracle::MeanGradient { noise_sd },
            gamma,
            noise_oracle: noise,
            t,
            budget_violating: false,
        }
    }

    /// Largest per-round noise magnitude allowed: Γ / (λ T^{3/2}).
    pub fn noise_budget(&self) -> f64 {
        noise_budget(self.gamma, self.lambda, self.t)
    }

    /// 7Γ²/(λ² t).
    pub fn bound(&self, t: u64) -> f64 {
        7.0 * self.gamma * self.gamma / (self.lambda * self.lambda * t as f64)
    }

    fn curvature(&self) -> Vec<f64> {
        self.curvature
            .clone()
            .unwrap_or_else(|| vec![self.lambda; self.theta.len()])
    }

    fn validate(&self) -> Result<()> {
        let d = self.theta.len();
        if d == 0 || self.w0.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: self.w0.len(),
            });
        }
        if self.t < 2 {
            return Err(Error::Config("T must be at least 2".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Config("λ must be positive".into()));
        }
        let h = self.curvature();
        if h.len() != d || h.iter().any(|&v| v < self.lambda) {
            return Err(Error::Config(format!(
                "curvature must have {d} entries, each >= λ"
            )));
        }
        let magnitude = self.noise_oracle.scale();
        let budget = self.noise_budget();
        if magnitude > budget && !self.budget_violating {
            return Err(Error::NoiseBudget { magnitude, budget });
        }
        Ok(())
    }
}

pub fn noise_budget(gamma: f64, lambda: f64, t: u64) -> f64 {
    gamma / (lambda * (t as f64).powf(1.5))
}

/// Runs one trajectory and returns L_t = ‖w_t − θ‖² for t = 1..=T.
pub fn run_noisy_sgd(
    spec: &NoisySgdSpec,
    grad_rng: &mut SimRng,
    noise_rng: &mut SimRng,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let d = spec.theta.len();
    let h = spec.curvature();
    let GradientOracle::MeanGradient { noise_sd } = spec.gradient_oracle;
    let mut w = spec.w0.clone();
    let mut losses = Vec::with_capacity(spec.t as usize);
    for t in 1..=spec.t {
        let eta = 1.0 / (spec.lambda * t as f64);
        for j in 0..d {
            let xi = if noise_sd > 0.0 {
                noise_sd * grad_rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            let g = h[j] * (w[j] - spec.theta[j]) + xi;
            w[j] -= eta * g;
        }
        match spec.noise_oracle {
            NoiseOracle::ZeroNoise => {}
            NoiseOracle::GaussianNoise { scale } => {
                let s = scale / (d as f64).sqrt();
                for wj in w.iter_mut() {
                    *wj += s * noise_rng.sample::<f64, _>(StandardNormal);
                }
            }
            NoiseOracle::AdversarialWorstCase { scale } => {
                let dist = w
                    .iter()
                    .zip(&spec.theta)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if dist > 0.0 {
                    for (wj, tj) in w.iter_mut().zip(&spec.theta) {
                        *wj += scale * (*wj - tj) / dist;
                    }
                } else {
                    w[0] += scale;
                }
            }
        }
        losses.push(
            w.iter()
                .zip(&spec.theta)
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
        );
    }
    Ok(losses)
}

/// Mean of L_t across seeds `base_seed .. base_seed + seeds`, computed in
/// parallel; the result does not depend on the thread count.
pub fn mean_trajectory(spec: &NoisySgdSpec, base_seed: u64, seeds: usize) -> Result<Vec<f64>> {
    let runs: Vec<Vec<f64>> = (0..seeds as u64)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed.wrapping_add(i);
            run_noisy_sgd(
                spec,
                &mut seeded_rng(seed, STREAM_GRADIENT),
                &mut seeded_rng(seed, STREAM_NOISE),
            )
        })
        .collect::<Result<_>>()?;
    let mut mean = vec![0.0; spec.t as usize];
    for run in &runs {
        for (m, l) in mean.iter_mut().zip(run) {
            *m += l;
        }
    }
    let n = seeds.max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// First t in [2, T] at which the mean loss exceeds 7Γ²/(λ²t), if any.
pub fn first_bound_violation(spec: &NoisySgdSpec, mean: &[f64]) -> Option<u64> {
    mean.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &l)| (i as u64 + 1, l))
        .find(|&(t, l)| l > spec.bound(t))
        .map(|(t, _)| t)
}
