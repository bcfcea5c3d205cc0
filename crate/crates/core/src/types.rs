//! Shared domain types: stream items, retained state, run configuration and results.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::recency::ComplianceReport;

/// One stream element, tagged with the round in which it arrived.
///
/// For mean estimation `label` is `None`; regression items carry the outcome `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataItem {
    pub values: Vec<f64>,
    #[serde(default)]
    pub label: Option<f64>,
    pub arrival_round: u64,
    /// Round by which the item must have left the state, if a removal request
    /// tightened the default retention window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_round: Option<u64>,
}

impl DataItem {
    pub fn point(values: Vec<f64>, arrival_round: u64) -> Self {
        DataItem {
            values,
            label: None,
            arrival_round,
            deadline_round: None,
        }
    }

    pub fn labeled(values: Vec<f64>, label: f64, arrival_round: u64) -> Self {
        DataItem {
            values,
            label: Some(label),
            arrival_round,
            deadline_round: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn with_round(&self, arrival_round: u64) -> Self {
        DataItem {
            arrival_round,
            ..self.clone()
        }
    }
}

/// Half-open index range `[start, end)` into [`SampleState::items`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// The entire inter-round state of a subsampling algorithm.
///
/// Items are ordered; duplicates in value are allowed since items are told
/// apart by position. When `segments` is present the state is split into
/// per-coordinate pieces.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleState {
    pub items: Vec<DataItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<Segment>>,
}

impl SampleState {
    pub fn new(items: Vec<DataItem>) -> Self {
        SampleState {
            items,
            segments: None,
        }
    }

    /// Builds a segmented state by concatenating `parts` in order.
    pub fn from_segments(parts: Vec<Vec<DataItem>>) -> Self {
        let mut items = Vec::with_capacity(parts.iter().map(Vec::len).sum());
        let mut segments = Vec::with_capacity(parts.len());
        for part in parts {
            let start = items.len();
            items.extend(part);
            segments.push(Segment {
                start,
                end: items.len(),
            });
        }
        SampleState {
            items,
            segments: Some(segments),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Items of segment `i`, or all items when the state is unsegmented.
    pub fn segment(&self, i: usize) -> &[DataItem] {
        match &self.segments {
            Some(segs) => &self.items[segs[i].range()],
            None => &self.items,
        }
    }

    /// Checks that segments are in range and pairwise disjoint.
    pub fn validate_segments(&self) -> Result<()> {
        let Some(segs) = &self.segments else {
            return Ok(());
        };
        let mut sorted: Vec<Segment> = segs.clone();
        sorted.sort_by_key(|s| s.start);
        let mut prev_end = 0;
        for s in &sorted {
            if s.start > s.end || s.end > self.items.len() || s.start < prev_end {
                return Err(Error::Config(format!(
                    "segment {}..{} overlaps or is out of range",
                    s.start, s.end
                )));
            }
            prev_end = s.end;
        }
        Ok(())
    }

    pub fn average(&self) -> Option<Vec<f64>> {
        average(self.items.iter().map(|it| it.values.as_slice()))
    }
}

/// Coordinate-wise mean of a sequence of equal-length vectors, summed in order.
pub fn average<'a, I>(vectors: I) -> Option<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut iter = vectors.into_iter();
    let first = iter.next()?;
    let mut sum = first.to_vec();
    let mut count = 1usize;
    for v in iter {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        count += 1;
    }
    let c = count as f64;
    sum.iter_mut().for_each(|s| *s /= c);
    Some(sum)
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Learning-rate schedule η_t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EtaSchedule {
    /// η_t = 1/t
    #[default]
    InverseT,
    /// η_t = 1/(λ t)
    InverseLambdaT(f64),
    /// η_t = c
    Constant(f64),
}

impl EtaSchedule {
    pub fn eta(&self, t: u64) -> f64 {
        let t = t as f64;
        match *self {
            EtaSchedule::InverseT => 1.0 / t,
            EtaSchedule::InverseLambdaT(lambda) => 1.0 / (lambda * t),
            EtaSchedule::Constant(c) => c,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            EtaSchedule::InverseLambdaT(l) if !(l > 0.0 && l.is_finite()) => {
                Err(Error::Config(format!("inverse_lambda_t needs λ > 0, got {l}")))
            }
            EtaSchedule::Constant(c) if !(c >= 0.0 && c.is_finite()) => {
                Err(Error::Config(format!("constant learning rate must be >= 0, got {c}")))
            }
            _ => Ok(()),
        }
    }
}

/// Which closest-average subset search to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Exact,
    Mitm,
    Greedy,
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Engine::Exact),
            "mitm" => Ok(Engine::Mitm),
            "greedy" => Ok(Engine::Greedy),
            other => Err(Error::Config(format!("unknown engine '{other}'"))),
        }
    }
}

/// Parses `inverse_t`, `inverse_lambda_t:<λ>` or `constant:<c>`.
impl std::str::FromStr for EtaSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let value = || -> Result<f64> {
            arg.ok_or_else(|| Error::Config(format!("'{name}' needs a value, e.g. {name}:0.5")))?
                .parse()
                .map_err(|_| Error::Config(format!("bad number in learning rate '{s}'")))
        };
        let eta = match name {
            "inverse_t" if arg.is_none() => EtaSchedule::InverseT,
            "inverse_lambda_t" => EtaSchedule::InverseLambdaT(value()?),
            "constant" => EtaSchedule::Constant(value()?),
            _ => return Err(Error::Config(format!("unknown learning rate '{s}'"))),
        };
        eta.validate()?;
        Ok(eta)
    }
}

fn default_fallback() -> bool {
    true
}

/// Parameters of a single experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Memory (batch size).
    pub m: usize,
    /// Number of rounds.
    #[serde(rename = "T")]
    pub t: u64,
    pub d: usize,
    /// Gradient-half size |R_t|; `None` means m/2.
    #[serde(default)]
    pub b: Option<usize>,
    /// Regression group size; `None` means ⌈2 d ln max(d, 2)⌉.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub eta_schedule: EtaSchedule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub engine: Engine,
    pub distribution: DistributionSpec,
    /// Allow greedy / chunked search when the engine budget is exceeded.
    #[serde(default = "default_fallback")]
    pub fallback: bool,
}

impl RunConfig {
    pub fn new(m: usize, t: u64, distribution: DistributionSpec) -> Self {
        RunConfig {
            m,
            t,
            d: distribution.dim(),
            b: None,
            k: None,
            eta_schedule: EtaSchedule::InverseT,
            seed: 0,
            engine: Engine::Exact,
            distribution,
            fallback: true,
        }
    }

    pub fn with_b(mut self, b: usize) -> Self {
        self.b = Some(b);
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn with_eta(mut self, eta: EtaSchedule) -> Self {
        self.eta_schedule = eta;
        self
    }

    pub fn b(&self) -> usize {
        self.b.unwrap_or(self.m / 2)
    }

    pub fn k(&self) -> usize {
        self.k.unwrap_or_else(|| default_group_size(self.d))
    }

    /// Checks the constraints shared by every algorithm.
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.t == 0 || self.d == 0 {
            return Err(Error::Config("m, T and d must be positive".into()));
        }
        let b = self.b();
        if b == 0 || b >= self.m {
            return Err(Error::Config(format!(
                "gradient half size b={b} must satisfy 1 <= b < m={}",
                self.m
            )));
        }
        if self.distribution.dim() != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                got: self.distribution.dim(),
            });
        }
        self.eta_schedule.validate()?;
        self.distribution.validate()
    }
}

/// k = ⌈2 d ln max(d, 2)⌉, never below d.
pub fn default_group_size(d: usize) -> usize {
    let d_f = d as f64;
    let k = (2.0 * d_f * d_f.max(2.0).ln()).ceil() as usize;
    k.max(d)
}

/// Outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub estimate: Vec<f64>,
    pub squared_error: f64,
    /// ‖s_t − z_t‖² for every round t ≥ 2.
    pub per_round_encoding_error: Vec<f64>,
    pub compliance_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compliance: Option<ComplianceReport>,
    /// Rounds in which the configured engine's budget was exceeded and a
    /// greedy or chunked search was used instead.
    #[serde(default)]
    pub fallback_rounds: u64,
    #[serde(default)]
    pub singular_groups: u64,
}

impl RunResult {
    pub fn max_encoding_error(&self) -> f64 {
        self.per_round_encoding_error
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }
}
