//! Two neighbouring round-2 batches whose possible retained sets never
//! overlap, so no output distribution of the sampler is shared between them.

use serde::{Deserialize, Serialize};

use crate::mean_estimation::{alg1_step, Alg1};
use crate::types::{DataItem, Engine, EtaSchedule, SampleState};

/// One ordering of a round-2 batch: which item went to the gradient half.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpCase {
    pub batch: Vec<f64>,
    pub gradient_item: f64,
    pub target: f64,
    pub kept: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpDemoReport {
    pub initial: Vec<f64>,
    pub eta: f64,
    pub cases: Vec<DpCase>,
    /// Distinct retained multisets for (0, 10, 10).
    pub image: Vec<Vec<f64>>,
    /// Distinct retained multisets for (0, 0, 10).
    pub image_neighbour: Vec<Vec<f64>>,
    pub disjoint: bool,
}

fn image(initial: &SampleState, batch: &[f64], alg: &Alg1, cases: &mut Vec<DpCase>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for j in 0..batch.len() {
        let mut order = vec![batch[j]];
        order.extend(batch.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, &v)| v));
        let items: Vec<DataItem> = order.iter().map(|&v| DataItem::point(vec![v], 2)).collect();
        let (next, round) = alg1_step(initial, &items, 2, alg).expect("fixed example is well formed");
        let mut kept: Vec<f64> = next.items.iter().map(|it| it.values[0]).collect();
        kept.sort_by(f64::total_cmp);
        cases.push(DpCase {
            batch: batch.to_vec(),
            gradient_item: batch[j],
            target: round.z_t[0],
            kept: kept.clone(),
        });
        if !out.contains(&kept) {
            out.push(kept);
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.partial_cmp(b).unwrap()));
    out
}

/// Round 2 of the mean algorithm with S₁ = {0}, b = 1, η₂ = ½ on the batches
/// (0, 10, 10) and (0, 0, 10), trying every item as the gradient half.
pub fn dp_demo() -> DpDemoReport {
    let initial = SampleState::new(vec![DataItem::point(vec![0.0], 1)]);
    let alg = Alg1 {
        b: 1,
        eta: EtaSchedule::Constant(0.5),
        engine: Engine::Exact,
        fallback: false,
    };
    let mut cases = Vec::new();
    let a = image(&initial, &[0.0, 10.0, 10.0], &alg, &mut cases);
    let b = image(&initial, &[0.0, 0.0, 10.0], &alg, &mut cases);
    let disjoint = a.iter().all(|s| !b.contains(s));
    DpDemoReport {
        initial: vec![0.0],
        eta: 0.5,
        cases,
        image: a,
        image_neighbour: b,
        disjoint,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_images() {
        let r = dp_demo();
        assert_eq!(r.image, vec![vec![10.0], vec![0.0, 10.0]]);
        assert_eq!(r.image_neighbour, vec![vec![0.0]]);
        assert!(r.disjoint);
    }

    #[test]
    fn case_targets() {
        let r = dp_demo();
        let first = &r.cases[0];
        assert_eq!((first.gradient_item, first.target, first.kept.clone()), (0.0, 0.0, vec![10.0]));
        let second = &r.cases[1];
        assert_eq!((second.gradient_item, second.target, second.kept.clone()), (10.0, 5.0, vec![0.0, 10.0]));
    }
}
