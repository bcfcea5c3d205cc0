//! m-recency: transcript checking and the two model adapters.
//!
//! A streaming algorithm sees one item per round and must keep only items
//! from the last m rounds. A batched algorithm sees m items per round and
//! must keep a subset of the current batch. [`BatchToStream`] runs a batched
//! algorithm on a stream with 2m-recency; [`StreamToBatch`] runs an m-recent
//! streaming algorithm on batches. Both preserve outputs exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DataItem, SampleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecencyMode {
    /// Window of `m` rounds, one item per round.
    Streaming,
    /// State after round t must come from batch t.
    Batched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub round: u64,
    pub arrival_round: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub violations: Vec<Violation>,
    /// Streaming: max of (round − arrival). Batched: max of
    /// (round − arrival + 1), i.e. batches spanned including the current one.
    pub max_staleness: u64,
    pub ok: bool,
}

/// State retained at the end of each round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub round: u64,
    pub state: SampleState,
}

impl Transcript {
    pub fn push(&mut self, round: u64, state: SampleState) {
        self.entries.push(TranscriptEntry { round, state });
    }

    pub fn last(&self) -> Option<&TranscriptEntry> {
        self.entries.last()
    }
}

/// First round at which `item` may no longer be retained.
fn deadline(item: &DataItem, m: usize, mode: RecencyMode) -> u64 {
    let window = match mode {
        RecencyMode::Streaming => m as u64,
        RecencyMode::Batched => 1,
    };
    let default = item.arrival_round + window;
    item.deadline_round.map_or(default, |d| d.min(default))
}

fn staleness(item: &DataItem, round: u64, mode: RecencyMode) -> u64 {
    let age = round.saturating_sub(item.arrival_round);
    match mode {
        RecencyMode::Streaming => age,
        RecencyMode::Batched => age + 1,
    }
}

/// Checks every logged state against the recency window (and any per-item
/// removal deadline). Items from the future are reported as violations too.
pub fn check_compliance(transcript: &Transcript, m: usize, mode: RecencyMode) -> ComplianceReport {
    let mut violations = Vec::new();
    let mut max_staleness = 0;
    for entry in &transcript.entries {
        for item in &entry.state.items {
            max_staleness = max_staleness.max(staleness(item, entry.round, mode));
            if entry.round >= deadline(item, m, mode) || item.arrival_round > entry.round {
                violations.push(Violation {
                    round: entry.round,
                    arrival_round: item.arrival_round,
                });
            }
        }
    }
    ComplianceReport {
        ok: violations.is_empty(),
        violations,
        max_staleness,
    }
}

/// Algorithm in the batched model. All inter-round information must travel
/// through the returned [`SampleState`].
pub trait BatchedAlgorithm {
    /// Consumes batch `round` (1-based). `prev` is `None` in round 1.
    fn step(&self, prev: Option<&SampleState>, batch: &[DataItem], round: u64) -> Result<SampleState>;

    /// Output function applied to the state after `round`.
    fn estimate(&self, state: &SampleState, round: u64) -> Result<Vec<f64>>;
}

/// Algorithm in the streaming model; the initial state is empty.
pub trait StreamingAlgorithm {
    fn step(&self, prev: &SampleState, item: &DataItem, round: u64) -> Result<SampleState>;

    fn estimate(&self, state: &SampleState, round: u64) -> Result<Vec<f64>>;
}

impl<A: BatchedAlgorithm + ?Sized> BatchedAlgorithm for &A {
    fn step(&self, prev: Option<&SampleState>, batch: &[DataItem], round: u64) -> Result<SampleState> {
        (**self).step(prev, batch, round)
    }

    fn estimate(&self, state: &SampleState, round: u64) -> Result<Vec<f64>> {
        (**self).estimate(state, round)
    }
}

impl<S: StreamingAlgorithm + ?Sized> StreamingAlgorithm for &S {
    fn step(&self, prev: &SampleState, item: &DataItem, round: u64) -> Result<SampleState> {
        (**self).step(prev, item, round)
    }

    fn estimate(&self, state: &SampleState, round: u64) -> Result<Vec<f64>> {
        (**self).estimate(state, round)
    }
}

/// Runs a batched algorithm over `batches`, logging the state after every round.
pub fn run_batched<A, I>(alg: &A, batches: I) -> Result<Transcript>
where
    A: BatchedAlgorithm + ?Sized,
    I: IntoIterator<Item = Vec<DataItem>>,
{
    let mut transcript = Transcript::default();
    for (i, batch) in batches.into_iter().enumerate() {
        let round = i as u64 + 1;
        let prev = transcript.last().map(|e| &e.state);
        let next = alg.step(prev, &batch, round)?;
        transcript.push(round, next);
    }
    Ok(transcript)
}

/// Runs a streaming algorithm over `items` (round t is the t-th item).
pub fn run_streaming<S, I>(alg: &S, items: I) -> Result<Transcript>
where
    S: StreamingAlgorithm + ?Sized,
    I: IntoIterator<Item = DataItem>,
{
    let mut transcript = Transcript::default();
    let mut state = SampleState::default();
    for (i, item) in items.into_iter().enumerate() {
        let round = i as u64 + 1;
        state = alg.step(&state, &item, round)?;
        transcript.push(round, state.clone());
    }
    Ok(transcript)
}

/// Flattens batches into a stream, tagging each item with its stream position.
pub fn flatten_batches(batches: &[Vec<DataItem>]) -> Vec<DataItem> {
    batches
        .iter()
        .flatten()
        .enumerate()
        .map(|(i, it)| it.with_round(i as u64 + 1))
        .collect()
}

/// Streaming wrapper of a batched algorithm with 2m-recency.
///
/// At rounds t = km the state equals the batched state after batch k; in
/// between, arriving items are appended behind it.
#[derive(Debug, Clone)]
pub struct BatchToStream<A> {
    inner: A,
    m: usize,
}

pub fn batch_to_stream<A: BatchedAlgorithm>(inner: A, m: usize) -> BatchToStream<A> {
    BatchToStream { inner, m }
}

impl<A> BatchToStream<A> {
    pub fn inner(&self) -> &A {
        &self.inner
    }

    /// Splits a streaming state into the simulated batched state (items that
    /// arrived by round `boundary`) and the items appended after it.
    fn split(state: &SampleState, boundary: u64) -> Result<(SampleState, Vec<DataItem>)> {
        let prefix = state
            .items
            .iter()
            .take_while(|it| it.arrival_round <= boundary)
            .count();
        if state.items[prefix..].iter().any(|it| it.arrival_round <= boundary) {
            return Err(Error::Config(
                "streaming state is not a batched state followed by appended items".into(),
            ));
        }
        let simulated = SampleState {
            items: state.items[..prefix].to_vec(),
            segments: state.segments.clone(),
        };
        Ok((simulated, state.items[prefix..].to_vec()))
    }
}

impl<A: BatchedAlgorithm> StreamingAlgorithm for BatchToStream<A> {
    fn step(&self, prev: &SampleState, item: &DataItem, round: u64) -> Result<SampleState> {
        let m = self.m as u64;
        if round % m != 0 {
            let mut next = prev.clone();
            next.items.push(item.clone());
            return Ok(next);
        }
        let k = round / m;
        let (simulated, mut batch) = Self::split(prev, (k - 1) * m)?;
        batch.push(item.clone());
        if batch.len() != self.m {
            return Err(Error::Config(format!(
                "expected {} buffered items at round {round}, found {}",
                self.m,
                batch.len()
            )));
        }
        let prev_state = (k > 1).then_some(&simulated);
        let next = self.inner.step(prev_state, &batch, k)?;
        let lo = (k - 1) * m;
        if next.items.iter().any(|it| it.arrival_round <= lo || it.arrival_round > round) {
            return Err(Error::OutsideBatch { round: k });
        }
        Ok(next)
    }

    /// Output of the wrapped algorithm on the last completed batch state,
    /// ignoring items appended since.
    fn estimate(&self, state: &SampleState, round: u64) -> Result<Vec<f64>> {
        let k = round / self.m as u64;
        if k == 0 {
            return Err(Error::Config("no batch has completed yet".into()));
        }
        let (simulated, _) = Self::split(state, k * self.m as u64)?;
        self.inner.estimate(&simulated, k)
    }
}

/// Batched wrapper of a streaming algorithm: each batch is fed through the
/// streaming update item by item, with the recency window enforced.
#[derive(Debug, Clone)]
pub struct StreamToBatch<S> {
    inner: S,
    m: usize,
    window: usize,
}

pub fn stream_to_batch<S: StreamingAlgorithm>(inner: S, m: usize) -> StreamToBatch<S> {
    StreamToBatch { inner, m, window: m }
}

impl<S> StreamToBatch<S> {
    /// Enforce a `window`-recency contract instead of m-recency (e.g. 2m when
    /// wrapping a [`BatchToStream`]).
    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    /// Batch tags → earliest stream position of that batch.
    fn to_stream(&self, state: &SampleState) -> SampleState {
        let m = self.m as u64;
        SampleState {
            items: state
                .items
                .iter()
                .map(|it| it.with_round((it.arrival_round - 1) * m + 1))
                .collect(),
            segments: state.segments.clone(),
        }
    }
}

impl<S: StreamingAlgorithm> BatchedAlgorithm for StreamToBatch<S> {
    fn step(&self, prev: Option<&SampleState>, batch: &[DataItem], round: u64) -> Result<SampleState> {
        if batch.len() != self.m {
            return Err(Error::Config(format!(
                "batch of {} items, expected {}",
                batch.len(),
                self.m
            )));
        }
        let m = self.m as u64;
        let start = (round - 1) * m;
        let mut state = prev.map(|p| self.to_stream(p)).unwrap_or_default();
        let mut log = Transcript::default();
        for (j, item) in batch.iter().enumerate() {
            let pos = start + j as u64 + 1;
            state = self.inner.step(&state, &item.with_round(pos), pos)?;
            log.push(pos, state.clone());
        }
        let mut report = check_compliance(&log, self.window, RecencyMode::Streaming);
        // the end-of-batch state must also be a subset of this batch
        for it in &state.items {
            if it.arrival_round <= start {
                report.violations.push(Violation {
                    round: start + m,
                    arrival_round: it.arrival_round,
                });
            }
        }
        if !report.violations.is_empty() {
            report.ok = false;
            return Err(Error::Compliance(Box::new(report)));
        }
        Ok(SampleState {
            items: state.items.iter().map(|it| it.with_round(round)).collect(),
            segments: state.segments,
        })
    }

    fn estimate(&self, state: &SampleState, round: u64) -> Result<Vec<f64>> {
        self.inner.estimate(&self.to_stream(state), round * self.m as u64)
    }
}
