//! Randomised invariants over the data pipeline and metrics.

use proptest::prelude::*;
use qtflight_core::chains::{
    bin_label, extract_chains, group_sort, ChainConfig, ChainDataset, FlightChain, FlightLeg,
    Provenance, SplitMode,
};
use qtflight_core::data::Vocabulary;
use qtflight_core::metrics::MetricsReport;
use qtflight_core::queue::{residual_delay, QueueConfig};
use qtflight_core::Tensor;

proptest! {
    #[test]
    fn bin_label_is_total_and_monotone(a in -10_000.0..10_000.0f64, b in -10_000.0..10_000.0f64) {
        let (la, lb) = (bin_label(a), bin_label(b));
        prop_assert!(la <= 4 && lb <= 4);
        if a <= b {
            prop_assert!(la <= lb);
        }
    }

    #[test]
    fn queue_outputs_stay_in_unit_interval(
        d in proptest::collection::vec(0.0..20_000.0f64, 3),
        a in proptest::collection::vec(0.0..2_000.0f64, 3),
    ) {
        let mut flat = Vec::new();
        for t in 0..3 {
            flat.push(d[t]);
            flat.push(a[t]);
        }
        let x = Tensor::<f64>::from_vec(&[1, 3, 2], flat).unwrap();
        let p = residual_delay(&x, 0, 1, &QueueConfig::default()).unwrap();
        for v in p.w_n.data().into_iter().chain(p.l_n.data()) {
            prop_assert!((0.0..=1.0).contains(&v), "{v}");
        }
    }

    #[test]
    fn vocabulary_roundtrip(tokens in proptest::collection::vec("[A-Z]{2,4}", 1..20)) {
        let vocab = Vocabulary::fit(&[("airline".to_string(), tokens.clone())]);
        for t in &tokens {
            let id = vocab.encode("airline", t).unwrap();
            prop_assert!(id >= 1);
            prop_assert_eq!(vocab.decode("airline", id).unwrap(), t.as_str());
        }
        prop_assert_eq!(vocab.encode("airline", "zz-unseen").unwrap(), 0);
    }

    #[test]
    fn every_emitted_chain_is_feasible(
        gaps in proptest::collection::vec(-50i64..1000, 2..7),
        durations in proptest::collection::vec(40i64..200, 8),
        delays in proptest::collection::vec(-20.0..300.0f64, 8),
    ) {
        let cfg = ChainConfig::default();
        let n = gaps.len() + 1;
        let mut legs = Vec::new();
        let mut t = 6 * 60;
        for i in 0..n {
            legs.push(FlightLeg {
                tail: "T".into(),
                date: "2022-03-01".into(),
                sched_dep: t,
                actual_dep: t,
                sched_arr: t + durations[i],
                arr_delay: delays[i],
                features: vec![i as f32],
                input_order: i,
            });
            if i < gaps.len() {
                // Next actual departure sits `gaps[i]` after this arrival.
                t = t + durations[i] + delays[i].round() as i64 + gaps[i];
            }
        }
        let key = ("T".to_string(), "2022-03-01".to_string());
        let blocks = group_sort(legs);
        for (key_b, block) in &blocks {
            let chains = extract_chains(key_b, block, &cfg, None);
            prop_assert!(chains.len() <= block.len().saturating_sub(cfg.window - 1));
            for c in &chains {
                let j = c.provenance.start;
                for k in 0..cfg.window - 1 {
                    let prev = &block[j + k];
                    let next = &block[j + k + 1];
                    let gap = next.dep_time() - prev.arr_time();
                    prop_assert!(gap >= cfg.tau_min && gap <= cfg.tau_max);
                }
            }
        }
        let _ = key;
    }

    #[test]
    fn splits_partition_the_chain_set(n in 10usize..120, seed in 0u64..1000) {
        let chains: Vec<FlightChain> = (0..n)
            .map(|i| FlightChain {
                x: vec![i as f32; 6],
                y: (i % 5) as u8,
                provenance: Provenance {
                    tail: format!("T{}", i / 4),
                    date: "2022-03-01".into(),
                    start: i % 4,
                },
            })
            .collect();
        for mode in [SplitMode::Stratified, SplitMode::TailDayDisjoint] {
            let cfg = ChainConfig { split: mode, seed, ..ChainConfig::default() };
            let (tr, va, te, _warnings) =
                qtflight_core::chains::split(chains.clone(), &cfg).unwrap();
            prop_assert_eq!(tr.len() + va.len() + te.len(), n);
            let mut seen = std::collections::BTreeSet::new();
            for c in tr.iter().chain(&va).chain(&te) {
                prop_assert!(seen.insert(c.provenance.clone()), "duplicate chain");
            }
            if matches!(cfg.split, SplitMode::TailDayDisjoint) {
                let part_of = |set: &[FlightChain]| {
                    set.iter()
                        .map(|c| (c.provenance.tail.clone(), c.provenance.date.clone()))
                        .collect::<std::collections::BTreeSet<_>>()
                };
                let (a, b, c) = (part_of(&tr), part_of(&va), part_of(&te));
                prop_assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
            }
        }
    }

    #[test]
    fn metrics_identities(
        labels in proptest::collection::vec(0u8..5, 1..200),
        preds_seed in 0u64..500,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(preds_seed);
        let preds: Vec<u8> = labels.iter().map(|_| rng.gen_range(0..5u8)).collect();
        let r = MetricsReport::from_predictions(&labels, &preds, 0.0).unwrap();
        let total: usize = r.confusion.iter().flatten().sum();
        prop_assert_eq!(total, labels.len());
        let trace: usize = (0..5).map(|k| r.confusion[k][k]).sum();
        prop_assert!((r.accuracy - trace as f64 / labels.len() as f64).abs() < 1e-12);
        let min_f1 = r.per_class.iter().map(|c| c.f1).fold(f64::INFINITY, f64::min);
        let max_f1 = r.per_class.iter().map(|c| c.f1).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(r.macro_f1 >= min_f1 - 1e-12 && r.macro_f1 <= max_f1 + 1e-12);
        let weighted: f64 = r
            .per_class
            .iter()
            .map(|c| c.f1 * c.support as f64 / labels.len() as f64)
            .sum();
        prop_assert!((r.weighted_f1 - weighted).abs() < 1e-12);
    }

    #[test]
    fn chain_dataset_roundtrip(n in 1usize..30, seed in 0u64..100) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p = 4;
        let ds = ChainDataset {
            seq_len: 3,
            n_features: p,
            feature_names: (0..p).map(|i| format!("f{i}")).collect(),
            x: (0..n * 3 * p).map(|_| rng.gen_range(-1e6..1e6)).collect(),
            y: (0..n).map(|_| rng.gen_range(0..5u8)).collect(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.qtc");
        ds.write(&path).unwrap();
        let back = ChainDataset::read(&path).unwrap();
        prop_assert_eq!(back.feature_names, ds.feature_names);
        prop_assert_eq!(back.y, ds.y);
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back.x), bits(&ds.x));
    }
}
