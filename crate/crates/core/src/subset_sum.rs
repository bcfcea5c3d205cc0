//! Closest-average subset search.
//!
//! Given candidate vectors and a target, find the nonempty subset whose
//! average is nearest the target. Three engines share one result contract:
//!
//! * [`best_subset_exact`] enumerates all 2^n − 1 subsets (n ≤ 24);
//! * [`best_subset_mitm`] splits scalar candidates in two halves and merges
//!   per (left size, right size) pair (n ≤ 40);
//! * [`best_subset_greedy`] grows a subset greedily, then runs one swap pass.
//!
//! Ties are broken by smaller cardinality, then by the lexicographically
//! smallest index list. Engines evaluate distances with whatever summation
//! order is fastest, keep every subset within a small tolerance of the
//! incumbent, and settle the winner by recomputing distances in index order,
//! so exact and mitm agree bit-for-bit on the returned choice.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::types::Engine;

pub const EXACT_LIMIT: usize = 24;
pub const MITM_LIMIT: usize = 40;
pub const RSS_LIMIT: usize = 40;

/// Relative slack under which two internally computed distances are
/// re-ranked using the canonical (index-order) evaluation.
const TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L2,
    /// Distance measured on coordinate `i` only.
    PerCoordinate(usize),
    LInf,
}

/// The selected subset. `indices` are 0-based positions into the candidate list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetChoice {
    pub indices: Vec<usize>,
    pub achieved: Vec<f64>,
    pub distance: f64,
}

fn mask_indices(mask: u64) -> Vec<usize> {
    (0..64).filter(|&i| mask >> i & 1 == 1).collect()
}

/// Search problem after projecting away coordinates the norm ignores.
enum Problem<'a> {
    Scalar { x: Vec<f64>, t: f64 },
    Vector { x: Vec<f64>, d: usize, t: &'a [f64], linf: bool },
}

impl<'a> Problem<'a> {
    fn new<C: AsRef<[f64]>>(candidates: &[C], target: &'a [f64], norm: Norm) -> Result<Self> {
        let d = target.len();
        for c in candidates {
            if c.as_ref().len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: c.as_ref().len(),
                });
            }
        }
        let coord = match norm {
            Norm::PerCoordinate(i) => {
                if i >= d {
                    return Err(Error::Dimension { expected: d, got: i + 1 });
                }
                Some(i)
            }
            _ if d == 1 => Some(0),
            _ => None,
        };
        Ok(match coord {
            Some(i) => Problem::Scalar {
                x: candidates.iter().map(|c| c.as_ref()[i]).collect(),
                t: target[i],
            },
            None => Problem::Vector {
                x: candidates.iter().flat_map(|c| c.as_ref().iter().copied()).collect(),
                d,
                t: target,
                linf: norm == Norm::LInf,
            },
        })
    }

    fn n(&self) -> usize {
        match self {
            Problem::Scalar { x, .. } => x.len(),
            Problem::Vector { x, d, .. } => x.len() / d,
        }
    }

    fn scale(&self) -> f64 {
        let (x, t): (&[f64], Vec<f64>) = match self {
            Problem::Scalar { x, t } => (x, vec![*t]),
            Problem::Vector { x, t, .. } => (x, t.to_vec()),
        };
        x.iter().chain(&t).fold(1.0f64, |m, v| m.max(v.abs()))
    }

    /// Distance with sums accumulated in increasing index order.
    fn canonical(&self, mask: u64) -> f64 {
        match self {
            Problem::Scalar { x, t } => {
                let mut sum = 0.0;
                let mut c = 0usize;
                for i in mask_indices(mask) {
                    sum += x[i];
                    c += 1;
                }
                (sum / c as f64 - t).abs()
            }
            Problem::Vector { x, d, t, linf } => {
                let mut sum = vec![0.0; *d];
                let mut c = 0usize;
                for i in mask_indices(mask) {
                    for (s, v) in sum.iter_mut().zip(&x[i * d..(i + 1) * d]) {
                        *s += v;
                    }
                    c += 1;
                }
                vector_distance(&sum, c as f64, t, *linf)
            }
        }
    }
}

fn vector_distance(sum: &[f64], c: f64, t: &[f64], linf: bool) -> f64 {
    if linf {
        sum.iter()
            .zip(t)
            .fold(0.0f64, |m, (s, t)| m.max((s / c - t).abs()))
    } else {
        sum.iter()
            .zip(t)
            .map(|(s, t)| {
                let e = s / c - t;
                e * e
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Running argmin with the deterministic tie-break.
struct Incumbent<'p, 'a> {
    problem: &'p Problem<'a>,
    tol: f64,
    best: Option<Best>,
}

#[derive(Clone, Copy)]
struct Best {
    mask: u64,
    internal: f64,
    canonical: f64,
}

impl<'p, 'a> Incumbent<'p, 'a> {
    fn new(problem: &'p Problem<'a>) -> Self {
        Incumbent {
            problem,
            tol: TIE_TOLERANCE * problem.scale(),
            best: None,
        }
    }

    /// Distances above this can never win.
    fn threshold(&self) -> f64 {
        self.best.map_or(f64::INFINITY, |b| b.internal + self.tol)
    }

    fn offer(&mut self, mask: u64, internal: f64) {
        let Some(best) = self.best else {
            self.best = Some(Best {
                mask,
                internal,
                canonical: self.problem.canonical(mask),
            });
            return;
        };
        if internal < best.internal - self.tol {
            self.best = Some(Best {
                mask,
                internal,
                canonical: self.problem.canonical(mask),
            });
        } else if internal <= best.internal + self.tol && mask != best.mask {
            let canonical = self.problem.canonical(mask);
            if precedes(mask, canonical, best.mask, best.canonical) {
                self.best = Some(Best {
                    mask,
                    internal,
                    canonical,
                });
            }
        }
    }
}

/// Ordering by (distance, cardinality, index list).
fn precedes(a: u64, da: f64, b: u64, db: f64) -> bool {
    if da != db {
        return da < db;
    }
    let (ca, cb) = (a.count_ones(), b.count_ones());
    if ca != cb {
        return ca < cb;
    }
    // lexicographic on ascending index lists: the first differing bit decides,
    // and the list holding it (the lower index) comes first
    let diff = a ^ b;
    a & (diff & diff.wrapping_neg()) != 0
}

fn finish<C: AsRef<[f64]>>(candidates: &[C], problem: &Problem, mask: u64) -> SubsetChoice {
    let indices = mask_indices(mask);
    let d = candidates[0].as_ref().len();
    let mut sum = vec![0.0; d];
    for &i in &indices {
        for (s, v) in sum.iter_mut().zip(candidates[i].as_ref()) {
            *s += v;
        }
    }
    let c = indices.len() as f64;
    let achieved = sum.iter().map(|s| s / c).collect();
    SubsetChoice {
        indices,
        achieved,
        distance: problem.canonical(mask),
    }
}

fn check_size(n: usize, limit: usize, engine: &'static str) -> Result<()> {
    if n == 0 {
        Err(Error::EmptyCandidates)
    } else if n > limit {
        Err(Error::BudgetExceeded { engine, n, limit })
    } else {
        Ok(())
    }
}

/// Subset sums of `x` (flattened, `d` per entry) for every mask, built so
/// that `sums[mask] = sums[mask without lowest bit] + x[lowest bit]`.
fn all_sums(x: &[f64], d: usize) -> Vec<f64> {
    let n = x.len() / d;
    let mut sums = vec![0.0; (1usize << n) * d];
    for mask in 1usize..(1 << n) {
        let low = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        for j in 0..d {
            sums[mask * d + j] = sums[rest * d + j] + x[low * d + j];
        }
    }
    sums
}

fn exact_search(problem: &Problem) -> u64 {
    let n = problem.n();
    let (x, d, t): (&[f64], usize, &[f64]) = match problem {
        Problem::Scalar { x, t } => (x, 1, std::slice::from_ref(t)),
        Problem::Vector { x, d, t, .. } => (x, *d, t),
    };
    let linf = matches!(problem, Problem::Vector { linf: true, .. });
    let lo_bits = n / 2;
    let lo = all_sums(&x[..lo_bits * d], d);
    let hi = all_sums(&x[lo_bits * d..], d);
    let mut inc = Incumbent::new(problem);
    let mut sum = vec![0.0; d];
    for hm in 0u64..(1 << (n - lo_bits)) {
        let hs = &hi[hm as usize * d..(hm as usize + 1) * d];
        for lm in 0u64..(1 << lo_bits) {
            if hm == 0 && lm == 0 {
                continue;
            }
            let ls = &lo[lm as usize * d..(lm as usize + 1) * d];
            let c = (hm.count_ones() + lm.count_ones()) as f64;
            let dist = if d == 1 {
                ((ls[0] + hs[0]) / c - t[0]).abs()
            } else {
                for j in 0..d {
                    sum[j] = ls[j] + hs[j];
                }
                vector_distance(&sum, c, t, linf)
            };
            if dist <= inc.threshold() {
                inc.offer(lm | hm << lo_bits, dist);
            }
        }
    }
    inc.best.expect("nonempty candidate list").mask
}

/// Global minimizer of the distance between the subset average and `target`
/// over all nonempty subsets.
pub fn best_subset_exact<C: AsRef<[f64]>>(
    candidates: &[C],
    target: &[f64],
    norm: Norm,
) -> Result<SubsetChoice> {
    check_size(candidates.len(), EXACT_LIMIT, "exact")?;
    let problem = Problem::new(candidates, target, norm)?;
    let mask = exact_search(&problem);
    Ok(finish(candidates, &problem, mask))
}

fn mitm_search(problem: &Problem) -> u64 {
    let Problem::Scalar { x, t } = problem else {
        unreachable!("mitm runs on scalar problems only");
    };
    let t = *t;
    let n = x.len();
    let left_bits = n / 2;
    let right_bits = n - left_bits;
    let left = all_sums(&x[..left_bits], 1);
    let right_all = all_sums(&x[left_bits..], 1);
    // right subsets bucketed by size, each bucket sorted by sum
    let mut right: Vec<Vec<(f64, u64)>> = vec![Vec::new(); right_bits + 1];
    for (mask, &s) in right_all.iter().enumerate() {
        right[(mask as u64).count_ones() as usize].push((s, mask as u64));
    }
    for bucket in &mut right {
        bucket.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    let mut inc = Incumbent::new(problem);
    for (lm, &sl) in left.iter().enumerate() {
        let lm = lm as u64;
        let a = lm.count_ones() as usize;
        for (b, bucket) in right.iter().enumerate() {
            let c = a + b;
            if c == 0 {
                continue;
            }
            let cf = c as f64;
            let goal = cf * t - sl;
            let p = bucket.partition_point(|e| e.0 < goal);
            for &(sr, rm) in bucket[..p].iter().rev() {
                let dist = (sl + sr - cf * t).abs() / cf;
                if dist > inc.threshold() {
                    break;
                }
                inc.offer(lm | rm << left_bits, dist);
            }
            for &(sr, rm) in &bucket[p..] {
                let dist = (sl + sr - cf * t).abs() / cf;
                if dist > inc.threshold() {
                    break;
                }
                inc.offer(lm | rm << left_bits, dist);
            }
        }
    }
    inc.best.expect("nonempty candidate list").mask
}

/// Meet-in-the-middle closest-average search on scalars; same contract as
/// [`best_subset_exact`] with n ≤ 40.
pub fn best_subset_mitm(candidates: &[f64], target: f64) -> Result<SubsetChoice> {
    check_size(candidates.len(), MITM_LIMIT, "mitm")?;
    let cands: Vec<[f64; 1]> = candidates.iter().map(|&v| [v]).collect();
    let t = [target];
    let problem = Problem::new(&cands, &t, Norm::L2)?;
    let mask = mitm_search(&problem);
    Ok(finish(&cands, &problem, mask))
}

fn greedy_search(problem: &Problem) -> u64 {
    let n = problem.n();
    let (x, d, t): (&[f64], usize, &[f64]) = match problem {
        Problem::Scalar { x, t } => (x, 1, std::slice::from_ref(t)),
        Problem::Vector { x, d, t, .. } => (x, *d, t),
    };
    let linf = matches!(problem, Problem::Vector { linf: true, .. });
    let item = |i: usize| &x[i * d..(i + 1) * d];
    let dist_with = |sum: &[f64], c: usize, add: Option<usize>, remove: Option<usize>| {
        let s: Vec<f64> = (0..d)
            .map(|j| sum[j] + add.map_or(0.0, |a| item(a)[j]) - remove.map_or(0.0, |r| item(r)[j]))
            .collect();
        vector_distance(&s, c as f64, t, linf)
    };

    let mut chosen = vec![false; n];
    let mut sum = vec![0.0; d];
    let mut count = 0usize;
    let mut current = f64::INFINITY;
    loop {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..n).filter(|&j| !chosen[j]) {
            let dj = dist_with(&sum, count + 1, Some(j), None);
            if best.is_none_or(|(_, bd)| dj < bd) {
                best = Some((j, dj));
            }
        }
        match best {
            Some((j, dj)) if dj < current => {
                chosen[j] = true;
                count += 1;
                for (s, v) in sum.iter_mut().zip(item(j)) {
                    *s += v;
                }
                current = dj;
            }
            _ => break,
        }
    }
    // single pass of one-for-one swaps
    for i in 0..n {
        if !chosen[i] {
            continue;
        }
        for j in 0..n {
            if chosen[j] {
                continue;
            }
            let dj = dist_with(&sum, count, Some(j), Some(i));
            if dj < current {
                chosen[i] = false;
                chosen[j] = true;
                for k in 0..d {
                    sum[k] += item(j)[k] - item(i)[k];
                }
                current = dj;
                break;
            }
        }
    }
    chosen
        .iter()
        .enumerate()
        .filter(|(_, &c)| c)
        .fold(0u64, |m, (i, _)| m | 1 << i)
}

/// Greedy forward selection followed by one swap pass. No optimality
/// guarantee; n ≤ 64.
pub fn best_subset_greedy<C: AsRef<[f64]>>(
    candidates: &[C],
    target: &[f64],
    norm: Norm,
) -> Result<SubsetChoice> {
    check_size(candidates.len(), 64, "greedy")?;
    let problem = Problem::new(candidates, target, norm)?;
    let mask = greedy_search(&problem);
    Ok(finish(candidates, &problem, mask))
}

/// Result of [`best_subset`]: the choice plus whether the configured engine
/// had to hand over to the greedy search.
#[derive(Debug, Clone, PartialEq)]
pub struct Search {
    pub choice: SubsetChoice,
    pub fell_back: bool,
}

/// Dispatches to the configured engine. Multidimensional L2/L∞ searches
/// always use exhaustive enumeration (mitm applies to scalar objectives only).
/// When the budget is exceeded, greedy is used if `fallback` is set.
pub fn best_subset<C: AsRef<[f64]>>(
    candidates: &[C],
    target: &[f64],
    norm: Norm,
    engine: Engine,
    fallback: bool,
) -> Result<Search> {
    let problem = Problem::new(candidates, target, norm)?;
    let n = problem.n();
    if n == 0 {
        return Err(Error::EmptyCandidates);
    }
    let scalar = matches!(problem, Problem::Scalar { .. });
    let (engine, limit, name) = match engine {
        Engine::Greedy => (Engine::Greedy, 64, "greedy"),
        Engine::Mitm if scalar => (Engine::Mitm, MITM_LIMIT, "mitm"),
        _ => (Engine::Exact, EXACT_LIMIT, "exact"),
    };
    let (mask, fell_back) = if n <= limit {
        let mask = match engine {
            Engine::Greedy => greedy_search(&problem),
            Engine::Mitm => mitm_search(&problem),
            Engine::Exact => exact_search(&problem),
        };
        (mask, false)
    } else if fallback && n <= 64 {
        (greedy_search(&problem), true)
    } else {
        return Err(Error::BudgetExceeded {
            engine: name,
            n,
            limit,
        });
    };
    Ok(Search {
        choice: finish(candidates, &problem, mask),
        fell_back,
    })
}

/// Smallest |Σ_{x∈S} x − z| over all subsets S, the empty subset included.
pub fn closest_subset_sum(xs: &[f64], z: f64) -> f64 {
    let half = xs.len() / 2;
    let left = all_sums(&xs[..half], 1);
    let mut right = all_sums(&xs[half..], 1);
    right.sort_by(f64::total_cmp);
    let mut best = f64::INFINITY;
    for sl in left {
        let goal = z - sl;
        let p = right.partition_point(|&s| s < goal);
        if p < right.len() {
            best = best.min((sl + right[p] - z).abs());
        }
        if p > 0 {
            best = best.min((sl + right[p - 1] - z).abs());
        }
    }
    best
}

/// Fraction of trials in which n fresh U[−1,1] draws contain a subset whose
/// sum lies strictly within ε of a target z ~ U[−½, ½].
pub fn rss_success_probability(
    n: usize,
    epsilon: f64,
    trials: usize,
    rng: &mut SimRng,
) -> Result<f64> {
    if n > RSS_LIMIT {
        return Err(Error::BudgetExceeded {
            engine: "rss",
            n,
            limit: RSS_LIMIT,
        });
    }
    if trials == 0 {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for _ in 0..trials {
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let z = rng.random_range(-0.5..=0.5);
        if closest_subset_sum(&xs, z) < epsilon {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// Multidimensional analogue: n draws from N(0, I_d), target z ~ U[−1,1]^d,
/// success iff some nonempty subset has ‖z − avg(S)‖∞ ≤ 2ε.
pub fn rss_success_probability_vec(
    n: usize,
    d: usize,
    epsilon: f64,
    trials: usize,
    rng: &mut SimRng,
) -> Result<f64> {
    use rand_distr::StandardNormal;
    if n > 20 || d > 3 {
        return Err(Error::Config(format!(
            "vector subset probe supports n <= 20, d <= 3 (got n={n}, d={d})"
        )));
    }
    if trials == 0 {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for _ in 0..trials {
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let z: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
        if best_subset_exact(&xs, &z, Norm::LInf)?.distance <= 2.0 * epsilon {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    /// Straightforward enumeration: every mask, sums in index order, explicit
    /// (distance, cardinality, index list) comparison.
    fn brute_force(xs: &[Vec<f64>], t: &[f64], norm: Norm) -> (Vec<usize>, f64) {
        let n = xs.len();
        let mut best: Option<(f64, Vec<usize>)> = None;
        for mask in 1u64..(1 << n) {
            let idx: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
            let d = t.len();
            let mut s = vec![0.0; d];
            for &i in &idx {
                for j in 0..d {
                    s[j] += xs[i][j];
                }
            }
            let c = idx.len() as f64;
            let dist = match norm {
                Norm::PerCoordinate(i) => (s[i] / c - t[i]).abs(),
                Norm::LInf => (0..d).fold(0.0f64, |m, j| m.max((s[j] / c - t[j]).abs())),
                Norm::L2 if d == 1 => (s[0] / c - t[0]).abs(),
                Norm::L2 => (0..d).map(|j| (s[j] / c - t[j]).powi(2)).sum::<f64>().sqrt(),
            };
            let better = match &best {
                None => true,
                Some((bd, bi)) => {
                    dist < *bd || (dist == *bd && (idx.len(), &idx) < (bi.len(), bi))
                }
            };
            if better {
                best = Some((dist, idx));
            }
        }
        let (d, i) = best.unwrap();
        (i, d)
    }

    fn uniform(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded_rng(seed, 0);
        (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }

    #[test]
    fn singleton_identity() {
        let v = vec![vec![0.3, -1.7]];
        let c = best_subset_exact(&v, &[0.3, -1.7], Norm::L2).unwrap();
        assert_eq!(c.indices, vec![0]);
        assert_eq!(c.distance, 0.0);
        let c = best_subset_mitm(&[2.5], 2.5).unwrap();
        assert_eq!(c.distance, 0.0);
    }

    #[test]
    fn exact_average_pair() {
        let v = vec![vec![1.0], vec![3.0]];
        let c = best_subset_exact(&v, &[2.0], Norm::L2).unwrap();
        assert_eq!(c.indices, vec![0, 1]);
        assert_eq!(c.achieved, vec![2.0]);
        assert_eq!(c.distance, 0.0);
    }

    #[test]
    fn twelve_uniform_scalars_match_brute_force() {
        let xs: Vec<Vec<f64>> = uniform(12, 7).into_iter().map(|v| vec![v]).collect();
        let (idx, dist) = brute_force(&xs, &[0.25], Norm::L2);
        let c = best_subset_exact(&xs, &[0.25], Norm::L2).unwrap();
        assert_eq!(c.indices, idx);
        assert_eq!(c.distance, dist);
    }

    #[test]
    fn vectors_match_brute_force_all_norms() {
        let mut rng = seeded_rng(21, 0);
        for _ in 0..20 {
            let n = rng.random_range(1..=11);
            let d = rng.random_range(1..=3);
            let xs: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let t: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            for norm in [Norm::L2, Norm::LInf, Norm::PerCoordinate(d - 1)] {
                let (idx, dist) = brute_force(&xs, &t, norm);
                let c = best_subset_exact(&xs, &t, norm).unwrap();
                assert_eq!(c.indices, idx, "{norm:?}");
                assert_eq!(c.distance, dist);
            }
        }
    }

    #[test]
    fn ties_prefer_small_then_lexicographic() {
        let v = vec![vec![10.0], vec![10.0]];
        let c = best_subset_exact(&v, &[0.0], Norm::L2).unwrap();
        assert_eq!(c.indices, vec![0]);
        let c = best_subset_mitm(&[10.0, 10.0], 0.0).unwrap();
        assert_eq!(c.indices, vec![0]);
        // {1,3} and {0,2,...}: same average 2 from [1,3] vs [2] - singleton wins
        let c = best_subset_mitm(&[1.0, 2.0, 3.0], 2.0).unwrap();
        assert_eq!(c.indices, vec![1]);
        let c = best_subset_exact(&[vec![5.0], vec![1.0], vec![3.0], vec![3.0]], &[2.0], Norm::L2)
            .unwrap();
        assert_eq!(c.indices, vec![1, 2]);
    }

    #[test]
    fn mitm_matches_exact_on_many_seeds() {
        for seed in 0..100 {
            let mut rng = seeded_rng(seed, 1);
            let n = rng.random_range(1..=16);
            let xs = uniform(n, seed);
            let t = rng.random_range(-1.0..1.0);
            let cands: Vec<[f64; 1]> = xs.iter().map(|&v| [v]).collect();
            let a = best_subset_exact(&cands, &[t], Norm::L2).unwrap();
            let b = best_subset_mitm(&xs, t).unwrap();
            assert_eq!(a, b, "seed {seed}");
        }
    }

    #[test]
    fn mitm_beats_random_subsets() {
        let xs = uniform(30, 3);
        let c = best_subset_mitm(&xs, 0.0).unwrap();
        let mut rng = seeded_rng(3, 9);
        for _ in 0..100_000 {
            let mask: u64 = rng.random::<u64>() & ((1 << 30) - 1);
            if mask == 0 {
                continue;
            }
            let idx = mask_indices(mask);
            let avg = idx.iter().map(|&i| xs[i]).sum::<f64>() / idx.len() as f64;
            assert!(c.distance <= avg.abs());
        }
    }

    #[test]
    fn greedy_is_feasible_and_not_worse_than_best_singleton() {
        let xs: Vec<Vec<f64>> = uniform(30, 5).into_iter().map(|v| vec![v]).collect();
        let c = best_subset_greedy(&xs, &[0.1], Norm::L2).unwrap();
        let singleton = xs.iter().map(|v| (v[0] - 0.1).abs()).fold(f64::INFINITY, f64::min);
        assert!(c.distance <= singleton);
        assert!(!c.indices.is_empty());
    }

    #[test]
    fn errors() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(matches!(
            best_subset_exact(&empty, &[0.0], Norm::L2),
            Err(Error::EmptyCandidates)
        ));
        let big: Vec<Vec<f64>> = (0..25).map(|i| vec![i as f64]).collect();
        assert!(matches!(
            best_subset_exact(&big, &[0.0], Norm::L2),
            Err(Error::BudgetExceeded { .. })
        ));
        assert!(matches!(best_subset_mitm(&[0.0; 41], 0.0), Err(Error::BudgetExceeded { .. })));
        assert!(best_subset_exact(&[vec![1.0, 2.0]], &[0.0], Norm::L2).is_err());
    }

    #[test]
    fn dispatch_falls_back_only_when_allowed() {
        let xs: Vec<Vec<f64>> = uniform(30, 8).into_iter().map(|v| vec![v, -v]).collect();
        let r = best_subset(&xs, &[0.0, 0.0], Norm::L2, Engine::Exact, true).unwrap();
        assert!(r.fell_back);
        assert!(best_subset(&xs, &[0.0, 0.0], Norm::L2, Engine::Exact, false).is_err());
        // per-coordinate objective is scalar, so mitm handles 30 exactly
        let r = best_subset(&xs, &[0.0, 0.0], Norm::PerCoordinate(1), Engine::Mitm, false).unwrap();
        assert!(!r.fell_back);
        assert_eq!(r.choice.achieved.len(), 2);
    }

    #[test]
    fn subset_sum_brute_force() {
        let xs = uniform(10, 11);
        let z: f64 = 0.123;
        let mut best = z.abs();
        for mask in 1u64..(1 << 10) {
            let s: f64 = mask_indices(mask).iter().map(|&i| xs[i]).sum();
            best = best.min((s - z).abs());
        }
        assert!((closest_subset_sum(&xs, z) - best).abs() < 1e-12);
    }

    #[test]
    fn rss_trivial_cases() {
        let mut rng = seeded_rng(1, 0);
        assert_eq!(rss_success_probability(1, 2.0, 200, &mut rng).unwrap(), 1.0);
        assert!(rss_success_probability(2, 1e-6, 1000, &mut rng).unwrap() <= 0.01);
        assert!(rss_success_probability(41, 1.0, 1, &mut rng).is_err());
    }

    #[test]
    fn rss_vector_probe_runs() {
        let mut rng = seeded_rng(2, 0);
        let loose = rss_success_probability_vec(8, 2, 10.0, 20, &mut rng).unwrap();
        assert_eq!(loose, 1.0);
        let tight = rss_success_probability_vec(4, 3, 1e-9, 20, &mut rng).unwrap();
        assert_eq!(tight, 0.0);
    }
}
