//! Generative models for the data streams.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::types::DataItem;

/// Two-sided standard-normal quantile at total tail mass 1e-3.
const CLIP_Z: f64 = 3.2905;

/// Stream distribution, tagged by `variant` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", deny_unknown_fields)]
pub enum DistributionSpec {
    /// x ~ N(θ, Σ).
    GaussianMean { theta: Vec<f64>, sigma: Vec<Vec<f64>> },
    /// Each coordinate independently: with probability `p` uniform on
    /// [θ_j − γ, θ_j + γ], otherwise θ_j + N(0, σ²).
    ContaminatedUniformMean {
        theta: Vec<f64>,
        gamma: f64,
        p: f64,
        sigma: f64,
    },
    /// x ~ design, y = ⟨θ, x⟩ + N(0, σ²).
    Regression {
        theta: Vec<f64>,
        design: DesignSpec,
        sigma: f64,
    },
    /// Every draw equals θ.
    PointMass { theta: Vec<f64> },
}

/// Distribution of regression inputs over [0, B]^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum DesignSpec {
    UniformBox {
        #[serde(rename = "B")]
        b: f64,
    },
    /// N(B/2·1, Σ_x) clamped to the box.
    GaussianClipped {
        #[serde(rename = "B")]
        b: f64,
        sigma_x: Vec<Vec<f64>>,
    },
}

impl DistributionSpec {
    pub fn theta(&self) -> &[f64] {
        match self {
            DistributionSpec::GaussianMean { theta, .. }
            | DistributionSpec::ContaminatedUniformMean { theta, .. }
            | DistributionSpec::Regression { theta, .. }
            | DistributionSpec::PointMass { theta } => theta,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta().len()
    }

    pub fn is_regression(&self) -> bool {
        matches!(self, DistributionSpec::Regression { .. })
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler().map(|_| ())
    }

    /// Pre-factors the distribution for repeated draws.
    pub fn sampler(&self) -> Result<Sampler> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::Distribution("θ must be non-empty".into()));
        }
        if self.theta().iter().any(|v| !v.is_finite()) {
            return Err(Error::Distribution("θ must be finite".into()));
        }
        let kind = match self {
            DistributionSpec::GaussianMean { sigma, .. } => {
                SamplerKind::Gaussian(covariance_factor(sigma, d)?)
            }
            &DistributionSpec::ContaminatedUniformMean { gamma, p, sigma, .. } => {
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return Err(Error::Distribution(format!("γ must be positive, got {gamma}")));
                }
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::Distribution(format!("p must lie in (0, 1], got {p}")));
                }
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::Distribution(format!("tail σ must be positive, got {sigma}")));
                }
                SamplerKind::Contaminated { gamma, p, sigma }
            }
            DistributionSpec::Regression { design, sigma, .. } => {
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::Distribution(format!("noise σ must be >= 0, got {sigma}")));
                }
                let design = match design {
                    &DesignSpec::UniformBox { b } => {
                        check_box(b)?;
                        DesignSampler::Uniform { b }
                    }
                    DesignSpec::GaussianClipped { b, sigma_x } => {
                        check_box(*b)?;
                        let l = covariance_factor(sigma_x, d)?;
                        for j in 0..d {
                            let sd = sigma_x[j][j].sqrt();
                            if CLIP_Z * sd > b / 2.0 {
                                return Err(Error::Distribution(format!(
                                    "design coordinate {j} has sd {sd}; clamping to [0, {b}] would exceed 1e-3 probability"
                                )));
                            }
                        }
                        DesignSampler::Clipped { b: *b, l }
                    }
                };
                SamplerKind::Regression {
                    design,
                    sigma: *sigma,
                }
            }
            DistributionSpec::PointMass { .. } => SamplerKind::Point,
        };
        Ok(Sampler {
            theta: self.theta().to_vec(),
            kind,
        })
    }
}

fn check_box(b: f64) -> Result<()> {
    if b > 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(Error::Distribution(format!("box bound B must be positive, got {b}")))
    }
}

/// Validates a covariance matrix and returns its Cholesky factor.
fn covariance_factor(sigma: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>> {
    if sigma.len() != d || sigma.iter().any(|row| row.len() != d) {
        return Err(Error::Distribution(format!("covariance must be {d}x{d}")));
    }
    let m = DMatrix::from_fn(d, d, |i, j| sigma[i][j]);
    if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::Distribution("covariance must be symmetric".into()));
    }
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::Distribution(format!(
            "covariance has non-positive eigenvalue {min}"
        )));
    }
    m.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Distribution("covariance is not positive definite".into()))
}

#[derive(Debug, Clone)]
enum DesignSampler {
    Uniform { b: f64 },
    Clipped { b: f64, l: DMatrix<f64> },
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Gaussian(DMatrix<f64>),
    Contaminated { gamma: f64, p: f64, sigma: f64 },
    Regression { design: DesignSampler, sigma: f64 },
    Point,
}

/// A validated, pre-factored [`DistributionSpec`].
#[derive(Debug, Clone)]
pub struct Sampler {
    theta: Vec<f64>,
    kind: SamplerKind,
}

fn correlated_normal(l: &DMatrix<f64>, rng: &mut SimRng) -> DVector<f64> {
    let z = DVector::from_fn(l.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
    l * z
}

impl Sampler {
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Draws a regression input x (or a mean-estimation point, ignoring labels).
    fn draw_input(&self, design: &DesignSampler, rng: &mut SimRng) -> Vec<f64> {
        match design {
            DesignSampler::Uniform { b } => (0..self.dim()).map(|_| rng.random::<f64>() * b).collect(),
            DesignSampler::Clipped { b, l } => correlated_normal(l, rng)
                .iter()
                .map(|z| (b / 2.0 + z).clamp(0.0, *b))
                .collect(),
        }
    }

    pub fn draw(&self, rng: &mut SimRng, round: u64) -> DataItem {
        match &self.kind {
            SamplerKind::Gaussian(l) => {
                let z = correlated_normal(l, rng);
                let values = self.theta.iter().zip(z.iter()).map(|(t, z)| t + z).collect();
                DataItem::point(values, round)
            }
            &SamplerKind::Contaminated { gamma, p, sigma } => {
                let values = self
                    .theta
                    .iter()
                    .map(|&t| {
                        if rng.random::<f64>() < p {
                            t + gamma * (2.0 * rng.random::<f64>() - 1.0)
                        } else {
                            t + sigma * rng.sample::<f64, _>(StandardNormal)
                        }
                    })
                    .collect();
                DataItem::point(values, round)
            }
            SamplerKind::Regression { design, sigma } => {
                let x = self.draw_input(design, rng);
                let noise: f64 = rng.sample(StandardNormal);
                let y = dot(&self.theta, &x) + sigma * noise;
                DataItem::labeled(x, y, round)
            }
            SamplerKind::Point => DataItem::point(self.theta.clone(), round),
        }
    }

    /// m i.i.d. items, all tagged with `round`.
    pub fn draw_batch(&self, m: usize, rng: &mut SimRng, round: u64) -> Vec<DataItem> {
        (0..m).map(|_| self.draw(rng, round)).collect()
    }

    /// Monte-Carlo estimate of E[x xᵀ] from `n` fresh regression inputs.
    pub fn second_moment(&self, n: usize, rng: &mut SimRng) -> Result<DMatrix<f64>> {
        let SamplerKind::Regression { design, .. } = &self.kind else {
            return Err(Error::Distribution(
                "second moment is defined for regression designs only".into(),
            ));
        };
        let d = self.dim();
        let mut acc = DMatrix::<f64>::zeros(d, d);
        for _ in 0..n {
            let x = DVector::from_vec(self.draw_input(design, rng));
            acc += &x * x.transpose();
        }
        Ok(acc / n as f64)
    }
}

pub fn draw_batch(
    spec: &DistributionSpec,
    m: usize,
    rng: &mut SimRng,
    round: u64,
) -> Result<Vec<DataItem>> {
    if m == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    Ok(spec.sampler()?.draw_batch(m, rng, round))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
