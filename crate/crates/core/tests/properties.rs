use proptest::prelude::*;
use retention_core::distributions::{DesignSpec, DistributionSpec};
use retention_core::mean_estimation::{run_alg1_detailed, run_improved};
use retention_core::recency::{check_compliance, RecencyMode, Transcript};
use retention_core::regression::{run_alg2_detailed, GroupedState};
use retention_core::subset_sum::{best_subset, best_subset_exact, best_subset_greedy, best_subset_mitm, Norm};
use retention_core::{DataItem, Engine, EtaSchedule, RunConfig, SampleState};

fn scalars(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mitm_equals_exact(xs in scalars(20), z in -10.0f64..10.0) {
        let cands: Vec<[f64; 1]> = xs.iter().map(|&x| [x]).collect();
        let exact = best_subset_exact(&cands, &[z], Norm::L2).unwrap();
        prop_assert_eq!(best_subset_mitm(&xs, z).unwrap(), exact);
    }

    #[test]
    fn exact_never_worse_than_greedy(xs in scalars(14), z in -10.0f64..10.0) {
        let cands: Vec<[f64; 1]> = xs.iter().map(|&x| [x]).collect();
        let exact = best_subset_exact(&cands, &[z], Norm::L2).unwrap();
        let greedy = best_subset_greedy(&cands, &[z], Norm::L2).unwrap();
        prop_assert!(exact.distance <= greedy.distance);
    }

    #[test]
    fn more_candidates_never_hurt(xs in scalars(15), extra in -10.0f64..10.0, z in -10.0f64..10.0) {
        let mut more = xs.clone();
        more.push(extra);
        let a = best_subset_mitm(&xs, z).unwrap();
        let b = best_subset_mitm(&more, z).unwrap();
        prop_assert!(b.distance <= a.distance);
    }

    #[test]
    fn per_coordinate_matches_projection(
        pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..12),
        z in -5.0f64..5.0,
    ) {
        let vecs: Vec<[f64; 2]> = pts.iter().map(|&(a, b)| [a, b]).collect();
        let second: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let by_coord = best_subset(&vecs, &[99.0, z], Norm::PerCoordinate(1), Engine::Exact, false).unwrap();
        let direct = best_subset_mitm(&second, z).unwrap();
        prop_assert_eq!(by_coord.choice.indices, direct.indices);
    }

    #[test]
    fn run_config_json_round_trip(
        m in 2usize..200,
        t in 1u64..1000,
        seed in any::<u64>(),
        c in 0.0f64..3.0,
        engine in prop::sample::select(vec![Engine::Exact, Engine::Mitm, Engine::Greedy]),
    ) {
        let cfg = RunConfig::new(m, t, DistributionSpec::ContaminatedUniformMean {
            theta: vec![0.1, 0.2], gamma: 1.0, p: 0.5, sigma: 1.0,
        })
        .with_seed(seed)
        .with_engine(engine)
        .with_eta(EtaSchedule::Constant(c));
        let json = serde_json::to_string(&cfg).unwrap();
        prop_assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn sample_state_json_round_trip(vals in prop::collection::vec((-1e6f64..1e6, 1u64..100), 0..20)) {
        let state = SampleState::new(vals.iter().map(|&(v, r)| DataItem::point(vec![v], r)).collect());
        let json = serde_json::to_string(&state).unwrap();
        prop_assert_eq!(serde_json::from_str::<SampleState>(&json).unwrap(), state);
    }

    /// Items aged at most `window` pass; a single older item is always caught.
    #[test]
    fn compliance_detects_stale_items(
        m in 1usize..6,
        rounds in 2u64..30,
        ages in prop::collection::vec(0u64..6, 1..5),
        stale_at in any::<prop::sample::Index>(),
    ) {
        let mut t = Transcript::default();
        for r in 1..=rounds {
            let items = ages
                .iter()
                .map(|&a| DataItem::point(vec![0.0], r.saturating_sub(a % m as u64).max(1)))
                .collect();
            t.push(r, SampleState::new(items));
        }
        prop_assert!(check_compliance(&t, m, RecencyMode::Streaming).ok);
        let k = stale_at.index(rounds as usize - 1) + 1;
        let r = t.entries[k].round;
        if r > m as u64 {
            t.entries[k].state.items.push(DataItem::point(vec![0.0], r - m as u64));
            let report = check_compliance(&t, m, RecencyMode::Streaming);
            prop_assert!(!report.ok);
            prop_assert_eq!(report.violations[0].round, r);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn alg1_target_recurrence_and_recency(seed in any::<u64>(), m in 4usize..16, d in 1usize..3) {
        let cfg = RunConfig::new(m, 12, DistributionSpec::ContaminatedUniformMean {
            theta: vec![0.0; d], gamma: 1.0, p: 0.5, sigma: 1.0,
        })
        .with_seed(seed);
        let run = run_alg1_detailed(&cfg).unwrap();
        prop_assert!(run.result.compliance_ok);
        for r in run.rounds.iter().flatten() {
            for j in 0..d {
                let z = r.s_prev[j] + r.eta * (r.y_t[j] - r.s_prev[j]);
                prop_assert_eq!(z.to_bits(), r.z_t[j].to_bits());
            }
        }
        for e in &run.transcript.entries {
            prop_assert!(e.state.items.iter().all(|it| it.arrival_round == e.round));
        }
    }

    #[test]
    fn improved_engines_agree(seed in any::<u64>()) {
        let cfg = RunConfig::new(24, 15, DistributionSpec::ContaminatedUniformMean {
            theta: vec![0.0; 3], gamma: 1.0, p: 0.5, sigma: 1.0,
        })
        .with_seed(seed);
        let a = run_improved(&cfg.clone().with_engine(Engine::Exact)).unwrap();
        let b = run_improved(&cfg.with_engine(Engine::Mitm)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn alg2_state_invariants(seed in any::<u64>()) {
        let cfg = RunConfig::new(64, 8, DistributionSpec::Regression {
            theta: vec![0.5, -0.25],
            design: DesignSpec::UniformBox { b: 1.0 },
            sigma: 0.5,
        })
        .with_k(8)
        .with_seed(seed);
        let run = run_alg2_detailed(&cfg).unwrap();
        prop_assert!(run.result.compliance_ok);
        for (r, e) in run.rounds.iter().zip(run.transcript.entries.iter().skip(1)) {
            let g = GroupedState::from_sample_state(&e.state, 2, 8);
            prop_assert!(g.validate(64).is_ok());
            // retained items come from the candidate half of the current batch
            prop_assert!(e.state.items.iter().all(|it| it.arrival_round == e.round));
            let s = g.estimate().unwrap();
            for i in 0..2 {
                prop_assert!((s[i] - r.s_t[i]).abs() <= 1e-12);
            }
        }
    }
}
