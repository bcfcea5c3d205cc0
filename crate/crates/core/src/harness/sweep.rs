//! One-axis parameter sweeps over many seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{csv_err, finish_csv, fmt_f64, mean_se};
use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::mean_estimation::{baseline_run, run_alg1, run_improved};
use crate::regression::{ols_baseline, run_alg2};
use crate::types::{RunConfig, RunResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "m")]
    M,
    #[serde(rename = "T")]
    T,
    #[serde(rename = "d")]
    D,
    #[serde(rename = "sigma")]
    Sigma,
}

impl SweepAxis {
    fn name(self) -> &'static str {
        match self {
            SweepAxis::M => "m",
            SweepAxis::T => "T",
            SweepAxis::D => "d",
            SweepAxis::Sigma => "sigma",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAlgorithm {
    Alg1,
    Improved,
    Alg2,
    BaselineMean,
    BaselineOls,
}

impl SweepAlgorithm {
    pub fn name(self) -> &'static str {
        match self {
            SweepAlgorithm::Alg1 => "alg1",
            SweepAlgorithm::Improved => "improved",
            SweepAlgorithm::Alg2 => "alg2",
            SweepAlgorithm::BaselineMean => "baseline_mean",
            SweepAlgorithm::BaselineOls => "baseline_ols",
        }
    }

    pub fn run(self, cfg: &RunConfig) -> Result<RunResult> {
        match self {
            SweepAlgorithm::Alg1 => run_alg1(cfg),
            SweepAlgorithm::Improved => run_improved(cfg),
            SweepAlgorithm::Alg2 => run_alg2(cfg),
            SweepAlgorithm::BaselineMean => baseline_run(cfg),
            SweepAlgorithm::BaselineOls => ols_baseline(cfg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: RunConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub seeds: usize,
    pub algorithm: SweepAlgorithm,
}

fn as_count(axis: SweepAxis, v: f64) -> Result<u64> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as u64)
    } else {
        Err(Error::Config(format!("{} values must be positive integers, got {v}", axis.name())))
    }
}

/// Same family with dimension `d`: θ and covariances are taken from the
/// first coordinate.
fn resize(spec: &DistributionSpec, d: usize) -> DistributionSpec {
    let mut out = spec.clone();
    match &mut out {
        DistributionSpec::GaussianMean { theta, sigma } => {
            let (t0, s0) = (theta[0], sigma[0][0]);
            *theta = vec![t0; d];
            *sigma = (0..d)
                .map(|i| (0..d).map(|j| if i == j { s0 } else { 0.0 }).collect())
                .collect();
        }
        DistributionSpec::ContaminatedUniformMean { theta, .. }
        | DistributionSpec::Regression { theta, .. }
        | DistributionSpec::PointMass { theta } => {
            *theta = vec![theta[0]; d];
        }
    }
    if let DistributionSpec::Regression {
        design: crate::distributions::DesignSpec::GaussianClipped { sigma_x, .. },
        ..
    } = &mut out
    {
        let s0 = sigma_x[0][0];
        *sigma_x = (0..d)
            .map(|i| (0..d).map(|j| if i == j { s0 } else { 0.0 }).collect())
            .collect();
    }
    out
}

fn with_noise(spec: &DistributionSpec, s: f64) -> Result<DistributionSpec> {
    let mut out = spec.clone();
    match &mut out {
        DistributionSpec::GaussianMean { theta, sigma } => {
            let d = theta.len();
            *sigma = (0..d)
                .map(|i| (0..d).map(|j| if i == j { s * s } else { 0.0 }).collect())
                .collect();
        }
        DistributionSpec::ContaminatedUniformMean { sigma, .. } | DistributionSpec::Regression { sigma, .. } => {
            *sigma = s;
        }
        DistributionSpec::PointMass { .. } => {
            return Err(Error::Config("a point mass has no noise level to sweep".into()));
        }
    }
    Ok(out)
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("sweep values must be strictly increasing".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Config("sweep needs at least one seed".into()));
        }
        for &v in &self.values {
            self.config_for(v)?;
        }
        Ok(())
    }

    /// The base configuration with the axis set to `v`.
    pub fn config_for(&self, v: f64) -> Result<RunConfig> {
        let mut cfg = self.base.clone();
        match self.axis {
            SweepAxis::M => cfg.m = as_count(self.axis, v)? as usize,
            SweepAxis::T => cfg.t = as_count(self.axis, v)?,
            SweepAxis::D => {
                cfg.d = as_count(self.axis, v)? as usize;
                cfg.distribution = resize(&cfg.distribution, cfg.d);
            }
            SweepAxis::Sigma => {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("sigma values must be >= 0, got {v}")));
                }
                cfg.distribution = with_noise(&cfg.distribution, v)?;
            }
        }
        Ok(cfg)
    }

    fn value_label(&self, v: f64) -> String {
        match self.axis {
            SweepAxis::Sigma => fmt_f64(v),
            _ => (v as u64).to_string(),
        }
    }
}

/// A per-seed run row or a per-value aggregate row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub aggregate: bool,
    pub value: f64,
    /// Run seed; for aggregates, the number of successful runs.
    pub seed: u64,
    /// Squared error of the run, or the mean over successful runs.
    pub sq_error: f64,
    /// Standard error of the mean (aggregates only).
    pub sq_error_se: f64,
    pub max_encoding_error: f64,
    pub compliance_ok: bool,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn aggregates(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.aggregate)
    }

    /// Columns: kind, algorithm, axis, value, seed, sq_error, sq_error_se,
    /// max_encoding_error, compliance_ok, status. Aggregate rows carry the
    /// number of successful runs in the seed column.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "kind",
            "algorithm",
            "axis",
            "value",
            "seed",
            "sq_error",
            "sq_error_se",
            "max_encoding_error",
            "compliance_ok",
            "status",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                if r.aggregate { "aggregate" } else { "run" }.to_string(),
                self.spec.algorithm.name().to_string(),
                self.spec.axis.name().to_string(),
                self.spec.value_label(r.value),
                r.seed.to_string(),
                fmt_f64(r.sq_error),
                fmt_f64(r.sq_error_se),
                fmt_f64(r.max_encoding_error),
                r.compliance_ok.to_string(),
                r.status.clone(),
            ])
            .map_err(csv_err)?;
        }
        finish_csv(w)
    }
}

/// Runs every (value, seed) cell in parallel. Rows come back grouped by
/// value in the given order, seeds ascending, each group followed by its
/// aggregate. Failed runs are recorded in the status column.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable> {
    spec.validate()?;
    let cells: Vec<(f64, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| (0..spec.seeds as u64).map(move |i| (v, spec.base.seed.wrapping_add(i))))
        .collect();
    let outcomes: Vec<Result<RunResult>> = cells
        .par_iter()
        .map(|&(v, seed)| spec.algorithm.run(&spec.config_for(v)?.with_seed(seed)))
        .collect();

    let mut rows = Vec::with_capacity(cells.len() + spec.values.len());
    for (vi, &v) in spec.values.iter().enumerate() {
        let mut errors = Vec::new();
        let mut encoding = 0.0f64;
        let mut compliant = true;
        for ((_, seed), outcome) in cells.iter().zip(&outcomes).skip(vi * spec.seeds).take(spec.seeds) {
            let row = match outcome {
                Ok(r) => {
                    errors.push(r.squared_error);
                    encoding = encoding.max(r.max_encoding_error());
                    compliant &= r.compliance_ok;
                    SweepRow {
                        aggregate: false,
                        value: v,
                        seed: *seed,
                        sq_error: r.squared_error,
                        sq_error_se: f64::NAN,
                        max_encoding_error: r.max_encoding_error(),
                        compliance_ok: r.compliance_ok,
                        status: "ok".into(),
                    }
                }
                Err(e) => SweepRow {
                    aggregate: false,
                    value: v,
                    seed: *seed,
                    sq_error: f64::NAN,
                    sq_error_se: f64::NAN,
                    max_encoding_error: f64::NAN,
                    compliance_ok: false,
                    status: e.to_string(),
                },
            };
            rows.push(row);
        }
        let (mean, se) = mean_se(&errors);
        rows.push(SweepRow {
            aggregate: true,
            value: v,
            seed: errors.len() as u64,
            sq_error: mean,
            sq_error_se: se,
            max_encoding_error: encoding,
            compliance_ok: compliant,
            status: if errors.len() == spec.seeds {
                "ok".into()
            } else {
                format!("{} failed", spec.seeds - errors.len())
            },
        });
    }
    Ok(SweepTable {
        spec: spec.clone(),
        rows,
    })
}
