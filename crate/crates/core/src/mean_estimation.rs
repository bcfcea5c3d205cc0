//! Subsampling mean estimation: the batched SGD-guided algorithm, its
//! per-coordinate variant, and the keep-all baseline.
//!
//! Each round the batch is split into a gradient half R_t (the first b items)
//! and a candidate half N_t. The target z_t = s_{t−1} + η_t (avg(R_t) − s_{t−1})
//! is encoded by keeping the subset of N_t whose average is closest to it.

use serde::{Deserialize, Serialize};

use crate::distributions::Sampler;
use crate::error::{Error, Result};
use crate::recency::{check_compliance, BatchedAlgorithm, RecencyMode, Transcript};
use crate::rng::{seeded_rng, STREAM_DATA};
use crate::subset_sum::{best_subset, best_subset_exact, Norm, SubsetChoice, EXACT_LIMIT};
use crate::types::{average, squared_distance, DataItem, Engine, EtaSchedule, RunConfig, RunResult, SampleState};

/// Chunk size for the multidimensional search once N_t exceeds the exact budget.
pub const CHUNK: usize = 20;

/// Quantities realised in one round of a (scalar or vector) instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEstRound {
    pub round: u64,
    pub s_prev: Vec<f64>,
    pub y_t: Vec<f64>,
    pub eta: f64,
    pub z_t: Vec<f64>,
    pub chosen: SubsetChoice,
    /// ‖z_t − avg(S_t)‖ in the instance's norm.
    pub encoding_error: f64,
    pub fell_back: bool,
}

fn values(items: &[DataItem]) -> impl Iterator<Item = &[f64]> {
    items.iter().map(|it| it.values.as_slice())
}

fn coordinate_mean(items: &[DataItem], i: usize) -> f64 {
    items.iter().map(|it| it.values[i]).sum::<f64>() / items.len() as f64
}

/// Closest-average search over vectors with the chunked fallback: when the
/// candidates exceed the exhaustive budget, each run of [`CHUNK`] consecutive
/// candidates is searched exactly and the best chunk answer is kept.
fn search_vectors(
    candidates: &[&[f64]],
    target: &[f64],
    engine: Engine,
    fallback: bool,
) -> Result<(SubsetChoice, bool)> {
    if target.len() == 1 || engine == Engine::Greedy || candidates.len() <= EXACT_LIMIT {
        let s = best_subset(candidates, target, Norm::L2, engine, fallback)?;
        return Ok((s.choice, s.fell_back));
    }
    if !fallback {
        return Err(Error::BudgetExceeded {
            engine: "exact",
            n: candidates.len(),
            limit: EXACT_LIMIT,
        });
    }
    let mut best: Option<SubsetChoice> = None;
    for (c, chunk) in candidates.chunks(CHUNK).enumerate() {
        let mut choice = best_subset_exact(chunk, target, Norm::L2)?;
        choice.indices.iter_mut().for_each(|i| *i += c * CHUNK);
        if best.as_ref().is_none_or(|b| choice.distance < b.distance) {
            best = Some(choice);
        }
    }
    Ok((best.expect("at least one chunk"), true))
}

/// Parameters of the vector algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alg1 {
    pub b: usize,
    pub eta: EtaSchedule,
    pub engine: Engine,
    pub fallback: bool,
}

impl Alg1 {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Alg1 {
            b: cfg.b(),
            eta: cfg.eta_schedule,
            engine: cfg.engine,
            fallback: cfg.fallback,
        }
    }
}

/// One round t ≥ 2 of the vector algorithm.
pub fn alg1_step(
    state: &SampleState,
    batch: &[DataItem],
    t: u64,
    alg: &Alg1,
) -> Result<(SampleState, MeanEstRound)> {
    if alg.b == 0 || alg.b >= batch.len() {
        return Err(Error::Config(format!(
            "b={} must satisfy 1 <= b < batch size {}",
            alg.b,
            batch.len()
        )));
    }
    let s_prev = state
        .average()
        .ok_or_else(|| Error::Config("previous state is empty".into()))?;
    let (r, n) = batch.split_at(alg.b);
    let y_t = average(values(r)).expect("b >= 1");
    let eta = alg.eta.eta(t);
    let z_t: Vec<f64> = s_prev
        .iter()
        .zip(&y_t)
        .map(|(s, y)| s + eta * (y - s))
        .collect();
    let candidates: Vec<&[f64]> = values(n).collect();
    let (chosen, fell_back) = search_vectors(&candidates, &z_t, alg.engine, alg.fallback)?;
    let next = SampleState::new(chosen.indices.iter().map(|&i| n[i].clone()).collect());
    let round = MeanEstRound {
        round: t,
        encoding_error: chosen.distance,
        s_prev,
        y_t,
        eta,
        z_t,
        chosen,
        fell_back,
    };
    Ok((next, round))
}

impl BatchedAlgorithm for Alg1 {
    fn step(&self, prev: Option<&SampleState>, batch: &[DataItem], round: u64) -> Result<SampleState> {
        match prev {
            None => Ok(SampleState::new(batch.to_vec())),
            Some(state) => alg1_step(state, batch, round, self).map(|(s, _)| s),
        }
    }

    fn estimate(&self, state: &SampleState, _round: u64) -> Result<Vec<f64>> {
        state
            .average()
            .ok_or_else(|| Error::Config("empty state".into()))
    }
}

/// d independent scalar instances, instance i owning the i-th m/d slice of
/// every batch and reading coordinate i only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImprovedAlg1 {
    pub d: usize,
    pub m: usize,
    /// Total gradient-half size; each instance uses b/d items.
    pub b: usize,
    pub eta: EtaSchedule,
    pub engine: Engine,
    pub fallback: bool,
}

impl ImprovedAlg1 {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let (m, d, b) = (cfg.m, cfg.d, cfg.b());
        if m % d != 0 || m / d < 4 {
            return Err(Error::Config(format!(
                "per-coordinate variant needs m divisible by d and m/d >= 4 (m={m}, d={d})"
            )));
        }
        if b % d != 0 || b / d == 0 || b / d >= m / d {
            return Err(Error::Config(format!(
                "per-coordinate variant needs b divisible by d with 1 <= b/d < m/d (b={b}, d={d})"
            )));
        }
        Ok(ImprovedAlg1 {
            d,
            m,
            b,
            eta: cfg.eta_schedule,
            engine: cfg.engine,
            fallback: cfg.fallback,
        })
    }

    fn segment_len(&self) -> usize {
        self.m / self.d
    }

    fn initial(&self, batch: &[DataItem]) -> SampleState {
        SampleState::from_segments(batch.chunks(self.segment_len()).map(<[_]>::to_vec).collect())
    }
}

/// One round of the per-coordinate variant; returns one record per coordinate.
pub fn improved_step(
    state: &SampleState,
    batch: &[DataItem],
    t: u64,
    alg: &ImprovedAlg1,
) -> Result<(SampleState, Vec<MeanEstRound>)> {
    if batch.len() != alg.m {
        return Err(Error::Config(format!("batch of {} items, expected {}", batch.len(), alg.m)));
    }
    let seg = alg.segment_len();
    let bi = alg.b / alg.d;
    let eta = alg.eta.eta(t);
    let mut parts = Vec::with_capacity(alg.d);
    let mut rounds = Vec::with_capacity(alg.d);
    for i in 0..alg.d {
        let prev = state.segment(i);
        if prev.is_empty() {
            return Err(Error::Config(format!("segment {i} of the previous state is empty")));
        }
        let s = coordinate_mean(prev, i);
        let slice = &batch[i * seg..(i + 1) * seg];
        let (r, n) = slice.split_at(bi);
        let y = coordinate_mean(r, i);
        let z = s + eta * (y - s);
        let mut target = vec![0.0; alg.d];
        target[i] = z;
        let candidates: Vec<&[f64]> = values(n).collect();
        let search = best_subset(&candidates, &target, Norm::PerCoordinate(i), alg.engine, alg.fallback)?;
        parts.push(search.choice.indices.iter().map(|&j| n[j].clone()).collect());
        rounds.push(MeanEstRound {
            round: t,
            s_prev: vec![s],
            y_t: vec![y],
            eta,
            z_t: vec![z],
            encoding_error: search.choice.distance,
            chosen: search.choice,
            fell_back: search.fell_back,
        });
    }
    Ok((SampleState::from_segments(parts), rounds))
}

fn improved_estimate(state: &SampleState, d: usize) -> Result<Vec<f64>> {
    (0..d)
        .map(|i| {
            let seg = state.segment(i);
            if seg.is_empty() {
                Err(Error::Config(format!("segment {i} is empty")))
            } else {
                Ok(coordinate_mean(seg, i))
            }
        })
        .collect()
}

impl BatchedAlgorithm for ImprovedAlg1 {
    fn step(&self, prev: Option<&SampleState>, batch: &[DataItem], round: u64) -> Result<SampleState> {
        match prev {
            None => Ok(self.initial(batch)),
            Some(state) => improved_step(state, batch, round, self).map(|(s, _)| s),
        }
    }

    fn estimate(&self, state: &SampleState, _round: u64) -> Result<Vec<f64>> {
        improved_estimate(state, self.d)
    }
}

/// Retains each batch in full: S_t = M_t.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KeepAllBaseline;

impl BatchedAlgorithm for KeepAllBaseline {
    fn step(&self, _prev: Option<&SampleState>, batch: &[DataItem], _round: u64) -> Result<SampleState> {
        Ok(SampleState::new(batch.to_vec()))
    }

    fn estimate(&self, state: &SampleState, _round: u64) -> Result<Vec<f64>> {
        state
            .average()
            .ok_or_else(|| Error::Config("empty state".into()))
    }
}

/// A finished mean-estimation run with everything it logged.
#[derive(Debug, Clone)]
pub struct MeanRun {
    pub result: RunResult,
    pub transcript: Transcript,
    /// Per round, one record per instance (one for the vector algorithm,
    /// d for the per-coordinate variant, none for the baseline).
    pub rounds: Vec<Vec<MeanEstRound>>,
}

fn mean_sampler(cfg: &RunConfig) -> Result<Sampler> {
    cfg.validate()?;
    if cfg.distribution.is_regression() {
        return Err(Error::Config(
            "mean estimation needs a mean-estimation distribution".into(),
        ));
    }
    cfg.distribution.sampler()
}

fn finish_run(
    cfg: &RunConfig,
    estimate: Vec<f64>,
    transcript: Transcript,
    rounds: Vec<Vec<MeanEstRound>>,
) -> MeanRun {
    let per_round_encoding_error = rounds
        .iter()
        .map(|r| r.iter().map(|x| x.encoding_error * x.encoding_error).sum())
        .collect();
    let fallback_rounds = rounds.iter().filter(|r| r.iter().any(|x| x.fell_back)).count() as u64;
    let report = check_compliance(&transcript, cfg.m, RecencyMode::Batched);
    let result = RunResult {
        seed: cfg.seed,
        squared_error: squared_distance(&estimate, cfg.distribution.theta()),
        estimate,
        per_round_encoding_error,
        compliance_ok: report.ok,
        compliance: Some(report),
        fallback_rounds,
        singular_groups: 0,
    };
    MeanRun {
        result,
        transcript,
        rounds,
    }
}

fn drive<F>(cfg: &RunConfig, mut step: F) -> Result<Transcript>
where
    F: FnMut(Option<&SampleState>, &[DataItem], u64) -> Result<SampleState>,
{
    let sampler = mean_sampler(cfg)?;
    let mut rng = seeded_rng(cfg.seed, STREAM_DATA);
    let mut transcript = Transcript::default();
    for t in 1..=cfg.t {
        let batch = sampler.draw_batch(cfg.m, &mut rng, t);
        let next = step(transcript.last().map(|e| &e.state), &batch, t)?;
        transcript.push(t, next);
    }
    Ok(transcript)
}

pub fn run_alg1_detailed(cfg: &RunConfig) -> Result<MeanRun> {
    let alg = Alg1::from_config(cfg);
    let mut rounds = Vec::new();
    let transcript = drive(cfg, |prev, batch, t| match prev {
        None => Ok(SampleState::new(batch.to_vec())),
        Some(state) => {
            let (next, record) = alg1_step(state, batch, t, &alg)?;
            rounds.push(vec![record]);
            Ok(next)
        }
    })?;
    let estimate = alg.estimate(&transcript.last().expect("T >= 1").state, cfg.t)?;
    Ok(finish_run(cfg, estimate, transcript, rounds))
}

/// Runs the vector algorithm for T rounds; the estimate is avg(S_T).
pub fn run_alg1(cfg: &RunConfig) -> Result<RunResult> {
    run_alg1_detailed(cfg).map(|r| r.result)
}

pub fn run_improved_detailed(cfg: &RunConfig) -> Result<MeanRun> {
    let alg = ImprovedAlg1::from_config(cfg)?;
    let mut rounds = Vec::new();
    let transcript = drive(cfg, |prev, batch, t| match prev {
        None => Ok(alg.initial(batch)),
        Some(state) => {
            let (next, records) = improved_step(state, batch, t, &alg)?;
            rounds.push(records);
            Ok(next)
        }
    })?;
    let estimate = alg.estimate(&transcript.last().expect("T >= 1").state, cfg.t)?;
    Ok(finish_run(cfg, estimate, transcript, rounds))
}

/// Runs d scalar instances side by side on per-coordinate memory segments.
pub fn run_improved(cfg: &RunConfig) -> Result<RunResult> {
    run_improved_detailed(cfg).map(|r| r.result)
}

pub fn baseline_run_detailed(cfg: &RunConfig) -> Result<MeanRun> {
    let transcript = drive(cfg, |prev, batch, t| KeepAllBaseline.step(prev, batch, t))?;
    let estimate = KeepAllBaseline.estimate(&transcript.last().expect("T >= 1").state, cfg.t)?;
    Ok(finish_run(cfg, estimate, transcript, Vec::new()))
}

/// Keep-all baseline: the sample mean of the final batch.
pub fn baseline_run(cfg: &RunConfig) -> Result<RunResult> {
    baseline_run_detailed(cfg).map(|r| r.result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;

    fn scalar_items(vals: &[f64], round: u64) -> Vec<DataItem> {
        vals.iter().map(|&v| DataItem::point(vec![v], round)).collect()
    }

    fn contaminated(d: usize) -> DistributionSpec {
        DistributionSpec::ContaminatedUniformMean {
            theta: vec![0.3; d],
            gamma: 1.0,
            p: 0.5,
            sigma: 1.0,
        }
    }

    #[test]
    fn zero_rate_targets_previous_average() {
        let state = SampleState::new(scalar_items(&[1.0, 2.0], 1));
        let batch = scalar_items(&[9.0, 9.0, 1.4, 1.6, 5.0], 2);
        let alg = Alg1 {
            b: 2,
            eta: EtaSchedule::Constant(0.0),
            engine: Engine::Exact,
            fallback: false,
        };
        let (next, round) = alg1_step(&state, &batch, 2, &alg).unwrap();
        assert_eq!(round.z_t, vec![1.5]);
        assert_eq!(round.encoding_error, 0.0);
        assert_eq!(round.chosen.indices, vec![0, 1]);
        assert_eq!(next.items.len(), 2);
        assert!(next.items.iter().all(|it| it.arrival_round == 2));
    }

    #[test]
    fn target_recurrence_is_exact() {
        let cfg = RunConfig::new(10, 30, contaminated(2)).with_seed(4);
        let run = run_alg1_detailed(&cfg).unwrap();
        for r in run.rounds.iter().flatten() {
            for j in 0..2 {
                let z = r.s_prev[j] + r.eta * (r.y_t[j] - r.s_prev[j]);
                assert_eq!(z.to_bits(), r.z_t[j].to_bits());
            }
        }
    }

    #[test]
    fn single_round_is_sample_mean() {
        let cfg = RunConfig::new(8, 1, contaminated(1)).with_seed(2);
        let a = run_alg1(&cfg).unwrap();
        let b = baseline_run(&cfg).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert!(a.per_round_encoding_error.is_empty());
    }

    #[test]
    fn point_mass_recovers_theta() {
        let spec = DistributionSpec::PointMass { theta: vec![1.25, -0.5] };
        let cfg = RunConfig::new(8, 20, spec.clone());
        for run in [run_alg1(&cfg), baseline_run(&cfg), run_improved(&cfg)] {
            let r = run.unwrap();
            assert_eq!(r.estimate, vec![1.25, -0.5]);
            assert_eq!(r.squared_error, 0.0);
        }
    }

    #[test]
    fn baseline_is_mean_of_final_batch() {
        let cfg = RunConfig::new(6, 5, contaminated(2)).with_seed(9);
        let run = baseline_run_detailed(&cfg).unwrap();
        let last = &run.transcript.last().unwrap().state;
        assert_eq!(last.items.len(), 6);
        assert_eq!(run.result.estimate, last.average().unwrap());
        assert!(run.result.compliance_ok);
    }

    #[test]
    fn improved_reduces_to_alg1_in_one_dimension() {
        for engine in [Engine::Exact, Engine::Mitm] {
            let cfg = RunConfig::new(12, 40, contaminated(1)).with_seed(11).with_engine(engine);
            let a = run_alg1(&cfg).unwrap();
            let b = run_improved(&cfg).unwrap();
            assert_eq!(a.estimate, b.estimate);
            assert_eq!(a.per_round_encoding_error, b.per_round_encoding_error);
        }
    }

    #[test]
    fn improved_engines_agree() {
        let cfg = RunConfig::new(32, 30, contaminated(4)).with_seed(3);
        let a = run_improved(&cfg.clone().with_engine(Engine::Exact)).unwrap();
        let b = run_improved(&cfg.with_engine(Engine::Mitm)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn improved_config_checks() {
        let cfg = RunConfig::new(10, 5, contaminated(4));
        assert!(matches!(run_improved(&cfg), Err(Error::Config(_))));
        let cfg = RunConfig::new(12, 5, contaminated(4));
        assert!(run_improved(&cfg).is_err()); // m/d = 3
    }

    #[test]
    fn chunked_fallback_is_flagged() {
        let cfg = RunConfig::new(60, 3, contaminated(2)).with_seed(1);
        let r = run_alg1(&cfg).unwrap();
        assert_eq!(r.fallback_rounds, 2);
        let mut strict = cfg.clone();
        strict.fallback = false;
        assert!(matches!(run_alg1(&strict), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn runs_are_compliant_and_reproducible() {
        let cfg = RunConfig::new(10, 25, contaminated(2)).with_seed(77);
        let a = run_alg1(&cfg).unwrap();
        let b = run_alg1(&cfg).unwrap();
        assert!(a.compliance_ok);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn regression_distribution_rejected() {
        let spec = DistributionSpec::Regression {
            theta: vec![1.0],
            design: crate::distributions::DesignSpec::UniformBox { b: 1.0 },
            sigma: 0.1,
        };
        assert!(run_alg1(&RunConfig::new(8, 3, spec)).is_err());
    }
}
