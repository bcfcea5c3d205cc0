//! Subsampling linear regression with grouped-MLE encode/decode, the
//! keep-last-batch OLS baseline, and a diagnostic for the spread of
//! single-group estimates.
//!
//! The retained sample is split into d per-coordinate segments. Each segment
//! is a sequence of groups of k items; decoding a segment averages the OLS
//! fits of its groups and keeps the coordinate it is responsible for.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::distributions::{dot, DistributionSpec, Sampler};
use crate::error::{Error, Result};
use crate::recency::{check_compliance, BatchedAlgorithm, RecencyMode, Transcript};
use crate::rng::{seeded_rng, SimRng, STREAM_CALIBRATION, STREAM_DATA};
use crate::subset_sum::{best_subset, Norm, SubsetChoice};
use crate::types::{squared_distance, DataItem, Engine, EtaSchedule, RunConfig, RunResult, SampleState};

/// Groups whose XᵀX has a larger condition number count as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Per-coordinate retained items; every list is a whole number of k-groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedState {
    pub k: usize,
    pub per_coordinate: Vec<Vec<DataItem>>,
}

impl GroupedState {
    pub fn d(&self) -> usize {
        self.per_coordinate.len()
    }

    pub fn len(&self) -> usize {
        self.per_coordinate.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_sample_state(&self) -> SampleState {
        SampleState::from_segments(self.per_coordinate.clone())
    }

    pub fn from_sample_state(state: &SampleState, d: usize, k: usize) -> Self {
        GroupedState {
            k,
            per_coordinate: (0..d).map(|i| state.segment(i).to_vec()).collect(),
        }
    }

    /// Checks the group structure and the per-coordinate cap of m/d items.
    pub fn validate(&self, m: usize) -> Result<()> {
        let cap = m / self.d().max(1);
        for (i, seg) in self.per_coordinate.iter().enumerate() {
            if seg.len() % self.k != 0 || seg.len() > cap {
                return Err(Error::Config(format!(
                    "segment {i} holds {} items (k={}, cap={cap})",
                    seg.len(),
                    self.k
                )));
            }
        }
        Ok(())
    }

    /// s with [s]_i = [decode(segment i)]_i.
    pub fn estimate(&self) -> Result<Vec<f64>> {
        let d = self.d();
        (0..d)
            .map(|i| decode(&self.per_coordinate[i], self.k).map(|w| w[i]))
            .collect()
    }
}

fn design(items: &[DataItem]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let d = items.first().map(DataItem::dim).unwrap_or(0);
    let mut x = DMatrix::zeros(items.len(), d);
    let mut y = DVector::zeros(items.len());
    for (r, it) in items.iter().enumerate() {
        if it.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                got: it.dim(),
            });
        }
        y[r] = it
            .label
            .ok_or_else(|| Error::Config("regression item without a label".into()))?;
        for (c, &v) in it.values.iter().enumerate() {
            x[(r, c)] = v;
        }
    }
    Ok((x, y))
}

/// Least-squares fit through an SVD of X. Fails with `SingularGroup` when
/// cond(XᵀX) exceeds [`MAX_CONDITION`].
pub fn ols(items: &[DataItem]) -> Result<Vec<f64>> {
    let (x, y) = design(items)?;
    let d = x.ncols();
    if d == 0 || items.len() < d {
        return Err(Error::SingularGroup {
            condition: f64::INFINITY,
        });
    }
    let svd = x.svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    let condition = if min > 0.0 { (max / min).powi(2) } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularGroup { condition });
    }
    let w = svd.solve(&y, 0.0).map_err(|e| Error::Config(e.to_string()))?;
    Ok(w.iter().copied().collect())
}

/// Averages the OLS fits of consecutive groups of `k` items.
pub fn decode(items: &[DataItem], k: usize) -> Result<Vec<f64>> {
    if k == 0 || items.is_empty() || items.len() % k != 0 {
        return Err(Error::Config(format!(
            "decode needs a positive multiple of k={k} items, got {}",
            items.len()
        )));
    }
    let d = items[0].dim();
    if k < d {
        return Err(Error::Config(format!("group size k={k} is below d={d}")));
    }
    let mut sum = vec![0.0; d];
    for group in items.chunks(k) {
        let w = ols(group)?;
        sum.iter_mut().zip(&w).for_each(|(s, v)| *s += v);
    }
    let r = (items.len() / k) as f64;
    Ok(sum.into_iter().map(|s| s / r).collect())
}

/// ⟨estimate, x⟩ for a query with ‖x‖ ≤ 1.
pub fn predict(estimate: &[f64], x: &[f64]) -> Result<f64> {
    if estimate.len() != x.len() {
        return Err(Error::Dimension {
            expected: estimate.len(),
            got: x.len(),
        });
    }
    let norm = dot(x, x).sqrt();
    if norm > 1.0 + 1e-12 {
        return Err(Error::QueryNorm(norm));
    }
    Ok(dot(estimate, x))
}

/// Smallest eigenvalue of the empirical second moment of `n` fresh inputs.
pub fn calibrate_lambda(sampler: &Sampler, n: usize, rng: &mut SimRng) -> Result<f64> {
    let moment = sampler.second_moment(n, rng)?;
    let lambda = SymmetricEigen::new(moment).eigenvalues.min();
    if !(lambda > 0.0) {
        return Err(Error::Distribution(format!(
            "estimated E[x xᵀ] is not positive definite (smallest eigenvalue {lambda})"
        )));
    }
    Ok(lambda)
}

/// Per-round record of the regression algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRound {
    pub round: u64,
    pub s_prev: Vec<f64>,
    /// XᵀY − XᵀX s_{t−1} over the gradient half.
    pub gradient: Vec<f64>,
    pub eta: f64,
    pub z_t: Vec<f64>,
    /// Coordinate i of each non-singular group fit, per coordinate.
    pub group_mles: Vec<Vec<f64>>,
    /// Chosen groups per coordinate, indexed into `group_mles[i]`.
    pub chosen: Vec<SubsetChoice>,
    /// [s_t]_i = avg of the chosen group fits' coordinate i.
    pub s_t: Vec<f64>,
    /// ‖s_t − z_t‖²
    pub encoding_error: f64,
    pub singular_groups: u64,
    pub fell_back: bool,
}

/// Parameters of the regression algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alg2 {
    pub m: usize,
    pub d: usize,
    pub k: usize,
    pub b: usize,
    pub eta: EtaSchedule,
    /// Smallest eigenvalue of the estimated E[x xᵀ].
    pub lambda_hat: f64,
    pub engine: Engine,
    pub fallback: bool,
}

impl Alg2 {
    /// Builds the parameters and calibrates λ̂ from m fresh inputs on the
    /// calibration stream.
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let sampler = regression_sampler(cfg)?;
        let lambda_hat = calibrate_lambda(&sampler, cfg.m, &mut seeded_rng(cfg.seed, STREAM_CALIBRATION))?;
        Self::with_lambda(cfg, lambda_hat)
    }

    pub fn with_lambda(cfg: &RunConfig, lambda_hat: f64) -> Result<Self> {
        let (m, d, k, b) = (cfg.m, cfg.d, cfg.k(), cfg.b());
        if k < d {
            return Err(Error::Config(format!("group size k={k} must be at least d={d}")));
        }
        if (m - b) / d < k {
            return Err(Error::Config(format!(
                "each coordinate needs at least one group: (m−b)/d = {} < k = {k}",
                (m - b) / d
            )));
        }
        Ok(Alg2 {
            m,
            d,
            k,
            b,
            eta: cfg.eta_schedule,
            lambda_hat,
            engine: cfg.engine,
            fallback: cfg.fallback,
        })
    }

    /// Rate applied to the summed gradient: the schedule's rate for the
    /// averaged gradient, divided by |R_t|. The default schedule uses
    /// 1/(λ̂ t), giving 2/(λ̂ t m) when |R_t| = m/2.
    pub fn eta(&self, t: u64) -> f64 {
        let per_item = match self.eta {
            EtaSchedule::InverseT => 1.0 / (self.lambda_hat * t as f64),
            other => other.eta(t),
        };
        per_item / self.b as f64
    }

    /// Round-1 state: segment i is the i-th m/d slice of the batch, cut into
    /// k-groups with singular groups dropped.
    pub fn initial(&self, batch: &[DataItem]) -> Result<(GroupedState, u64)> {
        let part = batch.len() / self.d;
        let mut singular = 0;
        let mut per_coordinate = Vec::with_capacity(self.d);
        for i in 0..self.d {
            let slice = &batch[i * part..(i + 1) * part];
            let mut kept = Vec::new();
            for group in slice.chunks_exact(self.k) {
                match ols(group) {
                    Ok(_) => kept.extend_from_slice(group),
                    Err(Error::SingularGroup { .. }) => singular += 1,
                    Err(e) => return Err(e),
                }
            }
            if kept.is_empty() {
                return Err(Error::AllGroupsSingular {
                    round: 1,
                    coordinate: i,
                });
            }
            per_coordinate.push(kept);
        }
        Ok((
            GroupedState {
                k: self.k,
                per_coordinate,
            },
            singular,
        ))
    }
}

/// One round t ≥ 2 of the regression algorithm.
pub fn alg2_step(
    state: &GroupedState,
    batch: &[DataItem],
    t: u64,
    alg: &Alg2,
) -> Result<(GroupedState, RegressionRound)> {
    if batch.len() != alg.m {
        return Err(Error::Config(format!("batch of {} items, expected {}", batch.len(), alg.m)));
    }
    let d = alg.d;
    let s_prev = state.estimate()?;
    let (r, n) = batch.split_at(alg.b);

    let (x, y) = design(r)?;
    let s = DVector::from_column_slice(&s_prev);
    let gradient = x.transpose() * (y - &x * s);
    let eta = alg.eta(t);
    let z_t: Vec<f64> = s_prev
        .iter()
        .zip(gradient.iter())
        .map(|(s, g)| s + eta * g)
        .collect();

    let part = n.len() / d;
    let mut per_coordinate = Vec::with_capacity(d);
    let mut group_mles = Vec::with_capacity(d);
    let mut chosen = Vec::with_capacity(d);
    let mut s_t = Vec::with_capacity(d);
    let mut singular = 0;
    let mut fell_back = false;
    for i in 0..d {
        let slice = &n[i * part..(i + 1) * part];
        let mut groups = Vec::new();
        let mut mles = Vec::new();
        for group in slice.chunks_exact(alg.k) {
            match ols(group) {
                Ok(w) => {
                    groups.push(group);
                    mles.push(w[i]);
                }
                Err(Error::SingularGroup { .. }) => singular += 1,
                Err(e) => return Err(e),
            }
        }
        if mles.is_empty() {
            return Err(Error::AllGroupsSingular { round: t, coordinate: i });
        }
        let candidates: Vec<[f64; 1]> = mles.iter().map(|&v| [v]).collect();
        let search = best_subset(&candidates, &[z_t[i]], Norm::L2, alg.engine, alg.fallback)?;
        fell_back |= search.fell_back;
        per_coordinate.push(
            search
                .choice
                .indices
                .iter()
                .flat_map(|&j| groups[j].iter().cloned())
                .collect(),
        );
        s_t.push(search.choice.achieved[0]);
        chosen.push(search.choice);
        group_mles.push(mles);
    }
    let encoding_error = squared_distance(&s_t, &z_t);
    let next = GroupedState {
        k: alg.k,
        per_coordinate,
    };
    Ok((
        next,
        RegressionRound {
            round: t,
            s_prev,
            gradient: gradient.iter().copied().collect(),
            eta,
            z_t,
            group_mles,
            chosen,
            s_t,
            encoding_error,
            singular_groups: singular,
            fell_back,
        },
    ))
}

impl BatchedAlgorithm for Alg2 {
    fn step(&self, prev: Option<&SampleState>, batch: &[DataItem], round: u64) -> Result<SampleState> {
        let next = match prev {
            None => self.initial(batch)?.0,
            Some(state) => {
                let grouped = GroupedState::from_sample_state(state, self.d, self.k);
                alg2_step(&grouped, batch, round, self)?.0
            }
        };
        Ok(next.to_sample_state())
    }

    fn estimate(&self, state: &SampleState, _round: u64) -> Result<Vec<f64>> {
        GroupedState::from_sample_state(state, self.d, self.k).estimate()
    }
}

/// A finished regression run with its transcript and per-round records.
#[derive(Debug, Clone)]
pub struct RegressionRun {
    pub result: RunResult,
    pub transcript: Transcript,
    pub rounds: Vec<RegressionRound>,
    pub lambda_hat: f64,
}

fn regression_sampler(cfg: &RunConfig) -> Result<Sampler> {
    cfg.validate()?;
    if !cfg.distribution.is_regression() {
        return Err(Error::Config("regression needs a regression distribution".into()));
    }
    cfg.distribution.sampler()
}

pub fn run_alg2_detailed(cfg: &RunConfig) -> Result<RegressionRun> {
    let sampler = regression_sampler(cfg)?;
    let alg = Alg2::from_config(cfg)?;
    let mut rng = seeded_rng(cfg.seed, STREAM_DATA);
    let mut transcript = Transcript::default();
    let mut rounds = Vec::new();
    let mut singular_groups = 0;
    let mut fallback_rounds = 0;

    let batch = sampler.draw_batch(cfg.m, &mut rng, 1);
    let (mut state, singular) = alg.initial(&batch)?;
    singular_groups += singular;
    transcript.push(1, state.to_sample_state());
    for t in 2..=cfg.t {
        let batch = sampler.draw_batch(cfg.m, &mut rng, t);
        let (next, record) = alg2_step(&state, &batch, t, &alg)?;
        singular_groups += record.singular_groups;
        fallback_rounds += record.fell_back as u64;
        transcript.push(t, next.to_sample_state());
        rounds.push(record);
        state = next;
    }
    let estimate = state.estimate()?;
    let report = check_compliance(&transcript, cfg.m, RecencyMode::Batched);
    let result = RunResult {
        seed: cfg.seed,
        squared_error: squared_distance(&estimate, cfg.distribution.theta()),
        estimate,
        per_round_encoding_error: rounds.iter().map(|r| r.encoding_error).collect(),
        compliance_ok: report.ok,
        compliance: Some(report),
        fallback_rounds,
        singular_groups,
    };
    Ok(RegressionRun {
        result,
        transcript,
        rounds,
        lambda_hat: alg.lambda_hat,
    })
}

/// Runs the regression algorithm for T rounds; the estimate is the decoded s_T.
pub fn run_alg2(cfg: &RunConfig) -> Result<RunResult> {
    run_alg2_detailed(cfg).map(|r| r.result)
}

/// OLS on the final batch, drawn from the same data stream as [`run_alg2`].
pub fn ols_baseline(cfg: &RunConfig) -> Result<RunResult> {
    let sampler = regression_sampler(cfg)?;
    let mut rng = seeded_rng(cfg.seed, STREAM_DATA);
    let mut transcript = Transcript::default();
    let mut last = Vec::new();
    for t in 1..=cfg.t {
        last = sampler.draw_batch(cfg.m, &mut rng, t);
        transcript.push(t, SampleState::new(last.clone()));
        if t > 1 {
            transcript.entries.remove(0);
        }
    }
    let estimate = ols(&last)?;
    let report = check_compliance(&transcript, cfg.m, RecencyMode::Batched);
    Ok(RunResult {
        seed: cfg.seed,
        squared_error: squared_distance(&estimate, cfg.distribution.theta()),
        estimate,
        per_round_encoding_error: Vec::new(),
        compliance_ok: report.ok,
        compliance: Some(report),
        fallback_rounds: 0,
        singular_groups: 0,
    })
}

/// Empirical distribution of coordinate i of single-group OLS fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProbe {
    pub coordinate: usize,
    pub k: usize,
    pub trials: usize,
    pub window: (f64, f64),
    /// Density per bin: count / (trials · bin width).
    pub densities: Vec<f64>,
    pub min_density: f64,
    pub singular_fraction: f64,
    pub iqr: f64,
}

/// [`group_mle_density_probe_with`] over θ_i ± 0.25 with 20 bins.
pub fn group_mle_density_probe(
    spec: &DistributionSpec,
    k: usize,
    coordinate: usize,
    trials: usize,
    rng: &mut SimRng,
) -> Result<DensityProbe> {
    group_mle_density_probe_with(spec, k, coordinate, trials, 0.25, 20, rng)
}

pub fn group_mle_density_probe_with(
    spec: &DistributionSpec,
    k: usize,
    coordinate: usize,
    trials: usize,
    half_width: f64,
    bins: usize,
    rng: &mut SimRng,
) -> Result<DensityProbe> {
    if !spec.is_regression() {
        return Err(Error::Config("density probe needs a regression distribution".into()));
    }
    let d = spec.dim();
    if k < d || coordinate >= d || trials == 0 || bins == 0 || !(half_width > 0.0) {
        return Err(Error::Config(format!(
            "invalid probe: k={k}, d={d}, coordinate={coordinate}, trials={trials}, bins={bins}"
        )));
    }
    let sampler = spec.sampler()?;
    let center = spec.theta()[coordinate];
    let (lo, hi) = (center - half_width, center + half_width);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut values = Vec::with_capacity(trials);
    let mut singular = 0usize;
    for _ in 0..trials {
        let group = sampler.draw_batch(k, rng, 1);
        match ols(&group) {
            Ok(w) => {
                let v = w[coordinate];
                if v >= lo && v < hi {
                    counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
                }
                values.push(v);
            }
            Err(Error::SingularGroup { .. }) => singular += 1,
            Err(e) => return Err(e),
        }
    }
    let densities: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / (trials as f64 * width))
        .collect();
    let min_density = densities.iter().copied().fold(f64::INFINITY, f64::min);
    values.sort_by(f64::total_cmp);
    let iqr = if values.is_empty() {
        f64::NAN
    } else {
        let q = |p: f64| values[((values.len() - 1) as f64 * p).round() as usize];
        q(0.75) - q(0.25)
    };
    Ok(DensityProbe {
        coordinate,
        k,
        trials,
        window: (lo, hi),
        densities,
        min_density,
        singular_fraction: singular as f64 / trials as f64,
        iqr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DesignSpec;

    fn spec(sigma: f64) -> DistributionSpec {
        DistributionSpec::Regression {
            theta: vec![0.5, -0.25],
            design: DesignSpec::UniformBox { b: 1.0 },
            sigma,
        }
    }

    fn items(spec: &DistributionSpec, n: usize, seed: u64) -> Vec<DataItem> {
        spec.sampler()
            .unwrap()
            .draw_batch(n, &mut seeded_rng(seed, STREAM_DATA), 1)
    }

    #[test]
    fn noiseless_decode_is_exact() {
        let data = items(&spec(0.0), 32, 1);
        let w = decode(&data, 8).unwrap();
        assert!(squared_distance(&w, &[0.5, -0.25]).sqrt() < 1e-9);
    }

    #[test]
    fn single_group_decode_is_ols() {
        let data = items(&spec(0.5), 24, 2);
        assert_eq!(decode(&data, 24).unwrap(), ols(&data).unwrap());
    }

    #[test]
    fn decode_rejects_ragged_input() {
        let data = items(&spec(0.5), 20, 3);
        assert!(matches!(decode(&data, 8), Err(Error::Config(_))));
    }

    #[test]
    fn collinear_design_is_singular() {
        let data = vec![
            DataItem::labeled(vec![0.2, 0.4], 1.0, 1),
            DataItem::labeled(vec![0.3, 0.6], 1.0, 1),
        ];
        assert!(matches!(ols(&data), Err(Error::SingularGroup { .. })));
    }

    #[test]
    fn predict_checks_norm() {
        assert_eq!(predict(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(predict(&[1.0, 2.0], &[1.0, 0.5]), Err(Error::QueryNorm(_))));
        let err = predict(&[0.3, -0.4], &[0.6, -0.8]).unwrap() - predict(&[0.0, 0.0], &[0.6, -0.8]).unwrap();
        assert!((err * err - 0.25).abs() < 1e-12);
    }

    #[test]
    fn noiseless_run_is_exact() {
        let cfg = RunConfig::new(128, 6, spec(0.0)).with_k(8).with_seed(4);
        let run = run_alg2_detailed(&cfg).unwrap();
        assert!(run.result.squared_error < 1e-18);
        assert!(run.result.compliance_ok);
        for r in &run.rounds {
            assert!(r.encoding_error < 1e-18);
        }
    }

    #[test]
    fn single_round_decodes_initial_segments() {
        let cfg = RunConfig::new(64, 1, spec(0.5)).with_k(8).with_seed(7);
        let r = run_alg2(&cfg).unwrap();
        let batch = items(&spec(0.5), 64, 7);
        let expect = vec![decode(&batch[..32], 8).unwrap()[0], decode(&batch[32..], 8).unwrap()[1]];
        assert_eq!(r.estimate, expect);
    }

    #[test]
    fn zero_rate_re_encodes_previous_estimate() {
        let cfg = RunConfig::new(128, 2, spec(0.5))
            .with_k(8)
            .with_seed(3)
            .with_eta(EtaSchedule::Constant(0.0));
        let run = run_alg2_detailed(&cfg).unwrap();
        let r = &run.rounds[0];
        assert_eq!(r.z_t, r.s_prev);
    }

    #[test]
    fn stored_estimate_matches_re_decode() {
        let cfg = RunConfig::new(128, 20, spec(0.5)).with_k(8).with_seed(12);
        let run = run_alg2_detailed(&cfg).unwrap();
        for (r, entry) in run.rounds.iter().zip(run.transcript.entries.iter().skip(1)) {
            let g = GroupedState::from_sample_state(&entry.state, 2, 8);
            g.validate(128).unwrap();
            let s = g.estimate().unwrap();
            for i in 0..2 {
                assert!((s[i] - r.s_t[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn baseline_noiseless_and_paired() {
        let cfg = RunConfig::new(32, 3, spec(0.0)).with_seed(1);
        assert!(ols_baseline(&cfg).unwrap().squared_error < 1e-18);
    }

    #[test]
    fn group_size_checks() {
        let cfg = RunConfig::new(16, 3, spec(0.5)).with_k(8);
        assert!(matches!(run_alg2(&cfg), Err(Error::Config(_))));
        let cfg = RunConfig::new(64, 3, spec(0.5)).with_k(1);
        assert!(matches!(run_alg2(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn probe_spike_without_noise() {
        let mut rng = seeded_rng(1, 4);
        let p = group_mle_density_probe(&spec(0.0), 4, 0, 200, &mut rng).unwrap();
        assert!(p.iqr < 1e-12);
        assert_eq!(p.singular_fraction, 0.0);
        let total: f64 = p.densities.iter().sum::<f64>() * 0.5 / 20.0;
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smaller_groups_spread_wider() {
        let mut rng = seeded_rng(2, 4);
        let wide = group_mle_density_probe(&spec(0.5), 2, 0, 20_000, &mut rng).unwrap();
        let narrow = group_mle_density_probe(&spec(0.5), 8, 0, 20_000, &mut rng).unwrap();
        assert!(wide.iqr > narrow.iqr);
    }
}
